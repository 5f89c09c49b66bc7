//! Problem data: coefficients, source and target data, and the stabilization rule.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::quadrature::triangle_quadrature;

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(Point) -> Point + Send + Sync>;

pub const CATALOG: [&str; 5] = [
    "example1-high",
    "example1-low",
    "example2",
    "zero",
    "mms-trig",
];

/// How the flux stabilization `tau1` is chosen on each face. `tau2` always
/// follows as `tau1 - beta . n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tau1Rule {
    /// The same value on every face.
    Constant(f64),
    /// Per-face constant `offset + max_face |beta|`.
    MaxBetaPlus(f64),
}

impl Default for Tau1Rule {
    fn default() -> Self {
        Tau1Rule::MaxBetaPlus(1.0)
    }
}

#[derive(Clone)]
pub enum Mode {
    /// Full optimality system with the boundary control as unknown.
    Control,
    /// Single state equation with prescribed Dirichlet datum `g`.
    StateOnly { g: ScalarFn },
}

/// Known exact state for manufactured-solution runs.
#[derive(Clone)]
pub struct ExactState {
    pub y: ScalarFn,
    pub grad_y: VectorFn,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub epsilon: f64,
    pub gamma: f64,
    pub beta: VectorFn,
    pub div_beta: ScalarFn,
    pub f: ScalarFn,
    pub y_d: ScalarFn,
    pub tau1_rule: Tau1Rule,
    pub mode: Mode,
    pub exact: Option<ExactState>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("epsilon", &self.epsilon)
            .field("gamma", &self.gamma)
            .field("tau1_rule", &self.tau1_rule)
            .field("state_only", &matches!(self.mode, Mode::StateOnly { .. }))
            .finish_non_exhaustive()
    }
}

fn constant(c: f64) -> ScalarFn {
    Arc::new(move |_| c)
}

/// `[-x^2 sin y, cos x e^y]`, the velocity used in all catalog problems.
pub fn experiment_beta() -> (VectorFn, ScalarFn) {
    let beta: VectorFn = Arc::new(|x: Point| [-x[0] * x[0] * x[1].sin(), x[0].cos() * x[1].exp()]);
    let div: ScalarFn = Arc::new(|x: Point| -2.0 * x[0] * x[1].sin() + x[0].cos() * x[1].exp());
    (beta, div)
}

impl ProblemSpec {
    /// Control problem with the given data; `gamma = 1`, default `tau1` rule.
    pub fn control(
        name: &str,
        epsilon: f64,
        beta: VectorFn,
        div_beta: ScalarFn,
        f: ScalarFn,
        y_d: ScalarFn,
    ) -> Self {
        Self {
            name: name.to_string(),
            epsilon,
            gamma: 1.0,
            beta,
            div_beta,
            f,
            y_d,
            tau1_rule: Tau1Rule::default(),
            mode: Mode::Control,
            exact: None,
        }
    }

    pub fn catalog(name: &str) -> Result<Self> {
        let (beta, div) = experiment_beta();
        let spec = match name {
            "example1-high" => Self::control(name, 1.0, beta, div, constant(0.0), constant(1.0)),
            "example1-low" => Self::control(
                name,
                1.0,
                beta,
                div,
                constant(0.0),
                Arc::new(|x: Point| (x[0] * x[0] + x[1] * x[1]).powf(-1.0 / 3.0)),
            ),
            "example2" => Self::control(
                name,
                1e-6,
                beta,
                div,
                Arc::new(|x: Point| x[0] * x[1]),
                constant(1.0),
            ),
            "zero" => Self::control(name, 1.0, beta, div, constant(0.0), constant(0.0)),
            "mms-trig" => {
                let eps = 1.0;
                let b = beta.clone();
                let y: ScalarFn = Arc::new(|x: Point| (PI * x[0]).sin() * (PI * x[1]).sin());
                let grad_y: VectorFn = Arc::new(|x: Point| {
                    [
                        PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
                        PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
                    ]
                });
                let g2 = grad_y.clone();
                let f: ScalarFn = Arc::new(move |x: Point| {
                    let lap = -2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin();
                    let bv = b(x);
                    let gy = g2(x);
                    -eps * lap + bv[0] * gy[0] + bv[1] * gy[1]
                });
                let mut s = Self::control(name, eps, beta, div, f, constant(0.0));
                s.mode = Mode::StateOnly { g: constant(0.0) };
                s.exact = Some(ExactState { y, grad_y });
                s
            }
            other => return Err(Error::Lookup(other.to_string())),
        };
        Ok(spec)
    }

    pub fn is_state_only(&self) -> bool {
        matches!(self.mode, Mode::StateOnly { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        match self.tau1_rule {
            Tau1Rule::Constant(c) | Tau1Rule::MaxBetaPlus(c) if !c.is_finite() => {
                Err(Error::Config("tau1 parameter must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    /// Face value of `tau1` on the segment `a -> b`.
    ///
    /// `MaxBetaPlus` takes the maximum of `|beta|` over the endpoints and an
    /// 8-point Gauss sample of the segment.
    pub fn tau1_for_edge(&self, a: Point, b: Point) -> f64 {
        match self.tau1_rule {
            Tau1Rule::Constant(c) => c,
            Tau1Rule::MaxBetaPlus(offset) => {
                let samples = EDGE_SAMPLES.iter().chain([0.0, 1.0].iter());
                let max = samples
                    .map(|&t| {
                        let v = (self.beta)([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                        v[0].hypot(v[1])
                    })
                    .fold(0.0, f64::max);
                offset + max
            }
        }
    }

    /// `(tau1, tau2)` at face point `x` with outward normal `n`, where
    /// `tau1` is the face value. Both must be strictly positive.
    pub fn tau_pair(&self, tau1: f64, x: Point, n: Point) -> Result<(f64, f64)> {
        let b = (self.beta)(x);
        let tau2 = tau1 - (b[0] * n[0] + b[1] * n[1]);
        if !(tau1 > 0.0 && tau2 > 0.0) {
            return Err(Error::Config(format!(
                "stabilization not positive at ({}, {}): tau1 = {tau1}, tau2 = {tau2}",
                x[0], x[1]
            )));
        }
        Ok((tau1, tau2))
    }

    /// `(tau1, tau2)` at point `x` of face `edge` with outward normal `n`.
    pub fn tau_eval(&self, edge: [Point; 2], x: Point, n: Point) -> Result<(f64, f64)> {
        self.tau_pair(self.tau1_for_edge(edge[0], edge[1]), x, n)
    }

    /// Largest sampled `div beta` over the mesh. The analysis assumes
    /// `div beta <= 0`; the catalog velocity violates it near the origin.
    pub fn max_div_beta(&self, mesh: &Mesh) -> f64 {
        let rule = triangle_quadrature(4).expect("supported exactness");
        let mut max = f64::NEG_INFINITY;
        for t in 0..mesh.num_triangles() {
            let [a, b, c] = mesh.triangle_points(t);
            for p in &rule.points {
                let x = [
                    a[0] + p[0] * (b[0] - a[0]) + p[1] * (c[0] - a[0]),
                    a[1] + p[0] * (b[1] - a[1]) + p[1] * (c[1] - a[1]),
                ];
                max = max.max((self.div_beta)(x));
            }
        }
        max
    }
}

/// 8-point Gauss-Legendre nodes mapped to [0, 1].
const EDGE_SAMPLES: [f64; 8] = [
    0.019855071751231856,
    0.10166676129318664,
    0.2372337950418355,
    0.4082826787521751,
    0.591717321247825,
    0.7627662049581645,
    0.8983332387068134,
    0.9801449282487681,
];
