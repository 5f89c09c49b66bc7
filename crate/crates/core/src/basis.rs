//! Nodal Lagrange bases on the reference triangle and reference edge.
//!
//! Triangle nodes are the equispaced lattice `(i/d, j/d)`, `i + j <= d`,
//! ordered row by row in `j`; degree 0 uses the centroid. Edge nodes are
//! `t_j = j/d`, so node `0` sits at the edge start and node `d` at its end.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 4;

pub fn simplex_dim(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

fn monomial_exponents(degree: usize) -> Vec<(i32, i32)> {
    let mut out = Vec::with_capacity(simplex_dim(degree));
    for total in 0..=degree as i32 {
        for b in 0..=total {
            out.push((total - b, b));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct SimplexBasis {
    degree: usize,
    nodes: Vec<[f64; 2]>,
    exponents: Vec<(i32, i32)>,
    /// Column `i` holds the monomial coefficients of basis function `i`.
    coeffs: DMatrix<f64>,
}

impl SimplexBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::Capability(format!(
                "simplex basis degree {degree} exceeds {MAX_DEGREE}"
            )));
        }
        let nodes: Vec<[f64; 2]> = if degree == 0 {
            vec![[1.0 / 3.0, 1.0 / 3.0]]
        } else {
            let d = degree as f64;
            (0..=degree)
                .flat_map(|j| (0..=degree - j).map(move |i| [i as f64 / d, j as f64 / d]))
                .collect()
        };
        let exponents = monomial_exponents(degree);
        let n = exponents.len();
        let vandermonde = DMatrix::from_fn(n, n, |r, c| {
            let (a, b) = exponents[c];
            nodes[r][0].powi(a) * nodes[r][1].powi(b)
        });
        let coeffs = vandermonde.try_inverse().ok_or_else(|| {
            Error::Numerical(format!("singular Vandermonde matrix for degree {degree}"))
        })?;
        Ok(Self {
            degree,
            nodes,
            exponents,
            coeffs,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    /// Values of every basis function at `x`.
    pub fn eval_at(&self, x: [f64; 2], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (k, &(a, b)) in self.exponents.iter().enumerate() {
            let m = x[0].powi(a) * x[1].powi(b);
            for (i, v) in out.iter_mut().enumerate() {
                *v += self.coeffs[(k, i)] * m;
            }
        }
    }

    /// Reference gradients of every basis function at `x`.
    pub fn eval_grad_at(&self, x: [f64; 2], out: &mut [[f64; 2]]) {
        out.iter_mut().for_each(|g| *g = [0.0, 0.0]);
        for (k, &(a, b)) in self.exponents.iter().enumerate() {
            let dx = if a > 0 {
                f64::from(a) * x[0].powi(a - 1) * x[1].powi(b)
            } else {
                0.0
            };
            let dy = if b > 0 {
                f64::from(b) * x[0].powi(a) * x[1].powi(b - 1)
            } else {
                0.0
            };
            for (i, g) in out.iter_mut().enumerate() {
                g[0] += self.coeffs[(k, i)] * dx;
                g[1] += self.coeffs[(k, i)] * dy;
            }
        }
    }

    /// Value table, `dim x pts.len()`.
    pub fn eval(&self, pts: &[[f64; 2]]) -> DMatrix<f64> {
        let mut table = DMatrix::zeros(self.dim(), pts.len());
        let mut buf = vec![0.0; self.dim()];
        for (q, &p) in pts.iter().enumerate() {
            self.eval_at(p, &mut buf);
            table.column_mut(q).copy_from_slice(&buf);
        }
        table
    }

    /// Reference-coordinate gradient tables `(d/dx, d/dy)`, each `dim x pts.len()`.
    pub fn eval_grad(&self, pts: &[[f64; 2]]) -> [DMatrix<f64>; 2] {
        let mut gx = DMatrix::zeros(self.dim(), pts.len());
        let mut gy = DMatrix::zeros(self.dim(), pts.len());
        let mut buf = vec![[0.0; 2]; self.dim()];
        for (q, &p) in pts.iter().enumerate() {
            self.eval_grad_at(p, &mut buf);
            for (i, g) in buf.iter().enumerate() {
                gx[(i, q)] = g[0];
                gy[(i, q)] = g[1];
            }
        }
        [gx, gy]
    }

    /// Nodal interpolation coefficients of `f`.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&p| f(p)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct EdgeBasis {
    degree: usize,
    nodes: Vec<f64>,
}

impl EdgeBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if degree > MAX_DEGREE + 1 {
            return Err(Error::Capability(format!(
                "edge basis degree {degree} exceeds {}",
                MAX_DEGREE + 1
            )));
        }
        let nodes = if degree == 0 {
            vec![0.5]
        } else {
            (0..=degree).map(|j| j as f64 / degree as f64).collect()
        };
        Ok(Self { degree, nodes })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn eval_at(&self, t: f64, out: &mut [f64]) {
        for (j, v) in out.iter_mut().enumerate() {
            *v = self
                .nodes
                .iter()
                .enumerate()
                .filter(|&(m, _)| m != j)
                .map(|(_, &tm)| (t - tm) / (self.nodes[j] - tm))
                .product();
        }
    }

    /// Value table, `dim x pts.len()`.
    pub fn eval(&self, pts: &[f64]) -> DMatrix<f64> {
        let mut table = DMatrix::zeros(self.dim(), pts.len());
        let mut buf = vec![0.0; self.dim()];
        for (q, &t) in pts.iter().enumerate() {
            self.eval_at(t, &mut buf);
            table.column_mut(q).copy_from_slice(&buf);
        }
        table
    }
}
