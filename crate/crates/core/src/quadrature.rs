//! Gauss rules on the reference edge `[0, 1]` and the reference triangle
//! `{(x, y) : x, y >= 0, x + y <= 1}`.
//!
//! Triangle rules are collapsed (Duffy) tensor products of Gauss-Legendre
//! rules. All nodes are strictly interior and all weights positive, so
//! integrands singular at a vertex are never sampled there.

use crate::error::{Error, Result};

pub const MAX_TRIANGLE_EXACTNESS: usize = 40;
pub const MAX_EDGE_EXACTNESS: usize = 1001;

#[derive(Clone, Debug)]
pub struct QuadRule<P> {
    pub points: Vec<P>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

pub type EdgeRule = QuadRule<f64>;
pub type TriangleRule = QuadRule<[f64; 2]>;

impl<P> QuadRule<P> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `n`-point Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // P_n(z) and P_{n-1}(z) by the three-term recurrence
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss rule on `[0, 1]` exact for polynomials of degree `exactness`.
pub fn edge_quadrature(exactness: usize) -> Result<EdgeRule> {
    if exactness > MAX_EDGE_EXACTNESS {
        return Err(Error::Capability(format!(
            "edge quadrature exactness {exactness} exceeds {MAX_EDGE_EXACTNESS}"
        )));
    }
    let n = (exactness + 2) / 2;
    let (x, w) = gauss_legendre(n);
    Ok(QuadRule {
        points: x.iter().map(|&s| 0.5 * (s + 1.0)).collect(),
        weights: w.iter().map(|&v| 0.5 * v).collect(),
        exactness,
    })
}

/// Collapsed Gauss rule on the reference triangle exact for total degree `exactness`.
pub fn triangle_quadrature(exactness: usize) -> Result<TriangleRule> {
    if exactness > MAX_TRIANGLE_EXACTNESS {
        return Err(Error::Capability(format!(
            "triangle quadrature exactness {exactness} exceeds {MAX_TRIANGLE_EXACTNESS}"
        )));
    }
    // x = s, y = (1 - s) t; the Jacobian (1 - s) raises the degree in s by one.
    let n = (exactness + 3) / 2;
    let (g, gw) = gauss_legendre(n);
    let nodes: Vec<f64> = g.iter().map(|&s| 0.5 * (s + 1.0)).collect();
    let weights: Vec<f64> = gw.iter().map(|&v| 0.5 * v).collect();
    let mut points = Vec::with_capacity(n * n);
    let mut w = Vec::with_capacity(n * n);
    for (i, &s) in nodes.iter().enumerate() {
        for (j, &t) in nodes.iter().enumerate() {
            points.push([s, (1.0 - s) * t]);
            w.push(weights[i] * weights[j] * (1.0 - s));
        }
    }
    Ok(QuadRule {
        points,
        weights: w,
        exactness,
    })
}
