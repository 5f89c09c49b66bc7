#![allow(dead_code)]

use std::sync::Arc;

use edg_core::basis::{EdgeBasis, SimplexBasis};
use edg_core::mesh::{barycentric, EdgeKind, Mesh, Point};
use edg_core::problems::{ProblemSpec, Tau1Rule};
use edg_core::quadrature::{edge_quadrature, triangle_quadrature};
use edg_core::spaces::Spaces;
use edg_core::sparse::CsrMatrix;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Linear velocity, so convective integration by parts is exact under quadrature.
pub fn linear_beta_spec() -> ProblemSpec {
    let beta = Arc::new(|x: Point| {
        [
            0.3 + 0.5 * x[0] - 0.2 * x[1],
            -0.4 + 0.1 * x[0] + 0.6 * x[1],
        ]
    });
    let div = Arc::new(|_: Point| 1.1);
    let f = Arc::new(|x: Point| 1.0 + x[0] * x[1]);
    let yd = Arc::new(|x: Point| x[0] - 2.0 * x[1] * x[1]);
    let mut spec = ProblemSpec::control("linear-beta", 0.7, beta, div, f, yd);
    spec.gamma = 0.3;
    spec
}

pub fn zero_beta_spec(tau: f64) -> ProblemSpec {
    let mut spec = ProblemSpec::control(
        "zero-beta",
        1.0,
        Arc::new(|_| [0.0, 0.0]),
        Arc::new(|_| 0.0),
        Arc::new(|x: Point| x[0] + 1.0),
        Arc::new(|x: Point| x[1]),
    );
    spec.tau1_rule = Tau1Rule::Constant(tau);
    spec
}

/// Uniform square mesh with interior vertices moved randomly by up to
/// `amp * h`, keeping every triangle positively oriented.
pub fn jittered_square(level: u32, amp: f64, seed: u64) -> Mesh {
    let base = Mesh::build_uniform_square(level);
    let n = 1usize << level;
    let h = 1.0 / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let verts: Vec<Point> = base
        .vertices()
        .iter()
        .map(|&p| {
            let interior = p[0] > 1e-12 && p[0] < 1.0 - 1e-12 && p[1] > 1e-12 && p[1] < 1.0 - 1e-12;
            if interior {
                [
                    p[0] + amp * h * rng.random_range(-1.0..1.0),
                    p[1] + amp * h * rng.random_range(-1.0..1.0),
                ]
            } else {
                p
            }
        })
        .collect();
    Mesh::new(verts, base.triangles().to_vec()).expect("jittered mesh stays valid")
}

/// Two triangles forming a random convex quadrilateral, so one interior edge
/// and four boundary edges.
pub fn random_quad(seed: u64) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut j = |x: f64, y: f64| {
        [
            x + rng.random_range(-0.15..0.15),
            y + rng.random_range(-0.15..0.15),
        ]
    };
    let v = vec![j(0.0, 0.0), j(1.0, 0.0), j(1.0, 1.0), j(0.0, 1.0)];
    Mesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).expect("convex quad")
}

pub fn ref_coords(pts: &[Point; 3], x: Point) -> [f64; 2] {
    let l = barycentric(pts[0], pts[1], pts[2], x);
    [l[1], l[2]]
}

pub fn affine(pts: &[Point; 3], xi: [f64; 2]) -> Point {
    let [a, b, c] = *pts;
    [
        a[0] + xi[0] * (b[0] - a[0]) + xi[1] * (c[0] - a[0]),
        a[1] + xi[0] * (b[1] - a[1]) + xi[1] * (c[1] - a[1]),
    ]
}

/// Physical gradients of the degree-`d` basis on triangle `pts` at `x`, by the
/// chain rule through barycentric coordinates.
pub fn phys_grads(basis: &SimplexBasis, pts: &[Point; 3], x: Point) -> Vec<[f64; 2]> {
    let [a, b, c] = *pts;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    // gradients of the reference coordinates l1, l2 with respect to x
    let g1 = [(c[1] - a[1]) / det, -(c[0] - a[0]) / det];
    let g2 = [-(b[1] - a[1]) / det, (b[0] - a[0]) / det];
    let mut rg = vec![[0.0; 2]; basis.dim()];
    basis.eval_grad_at(ref_coords(pts, x), &mut rg);
    rg.iter()
        .map(|g| [g[0] * g1[0] + g[1] * g2[0], g[0] * g1[1] + g[1] * g2[1]])
        .collect()
}

pub fn values(basis: &SimplexBasis, pts: &[Point; 3], x: Point) -> Vec<f64> {
    let mut v = vec![0.0; basis.dim()];
    basis.eval_at(ref_coords(pts, x), &mut v);
    v
}

/// Edge basis values at physical point `x` of edge `e`, parametrized in the
/// canonical direction.
pub fn edge_values(basis: &EdgeBasis, mesh: &Mesh, e: usize, x: Point) -> Vec<f64> {
    let [p, r] = mesh.edge_points(e);
    let (dx, dy) = (r[0] - p[0], r[1] - p[1]);
    let t = ((x[0] - p[0]) * dx + (x[1] - p[1]) * dy) / (dx * dx + dy * dy);
    let mut v = vec![0.0; basis.dim()];
    basis.eval_at(t, &mut v);
    v
}

/// Coefficient-level data of the local forms, so the same oracle can produce
/// both full blocks and isolated stabilization deltas.
pub struct OracleData<'a> {
    pub inv_eps: f64,
    pub beta: &'a dyn Fn(Point) -> Point,
    pub div_beta: &'a dyn Fn(Point) -> f64,
    /// `(s1, s2)` at a face point with outward normal.
    pub sigma: &'a dyn Fn(usize, Point, Point) -> (f64, f64),
    pub gamma: f64,
    pub f: &'a dyn Fn(Point) -> f64,
    pub y_d: &'a dyn Fn(Point) -> f64,
    /// Include the data-independent coupling terms (divergence, normal flux
    /// traces and the state-to-adjoint source).
    pub structural: bool,
}

pub struct OracleBlocks {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub f: DVector<f64>,
}

impl<'a> OracleData<'a> {
    pub fn from_spec(
        spec: &'a ProblemSpec,
        mesh: &'a Mesh,
        sigma: &'a dyn Fn(usize, Point, Point) -> (f64, f64),
    ) -> Self {
        let _ = mesh;
        Self {
            inv_eps: 1.0 / spec.epsilon,
            beta: &*spec.beta,
            div_beta: &*spec.div_beta,
            sigma,
            gamma: spec.gamma,
            f: &*spec.f,
            y_d: &*spec.y_d,
            structural: true,
        }
    }
}

/// `(s1, s2) = (1/|e| + tau1, 1/|e| + tau1 - beta.n)` with the problem's face `tau1`.
pub fn spec_sigma<'a>(
    spec: &'a ProblemSpec,
    mesh: &'a Mesh,
) -> impl Fn(usize, Point, Point) -> (f64, f64) + 'a {
    move |e, x, n| {
        let [a, b] = mesh.edge_points(e);
        let (t1, t2) = spec.tau_eval([a, b], x, n).unwrap();
        let h = 1.0 / mesh.edges()[e].length;
        (h + t1, h + t2)
    }
}

/// Element blocks computed term by term at quadrature exactness `exactness`,
/// in the element/skeleton ordering documented for `LocalBlocks`.
pub fn oracle_local(
    mesh: &Mesh,
    spaces: &Spaces,
    data: &OracleData,
    t: usize,
    exactness: usize,
) -> OracleBlocks {
    let k = spaces.k;
    let vb = SimplexBasis::new(k).unwrap();
    let wb = SimplexBasis::new(k + 1).unwrap();
    let eb = EdgeBasis::new(k + 1).unwrap();
    let (nv, nw, nn) = (vb.dim(), wb.dim(), eb.dim());
    let ne = 4 * nv + 2 * nw;
    let qi = |c: usize, i: usize| c * nv + i;
    let yi = |i: usize| 2 * nv + i;
    let pi = |c: usize, i: usize| 2 * nv + nw + c * nv + i;
    let zi = |i: usize| 4 * nv + nw + i;

    let edges = mesh.triangle_edges(t);
    let mut offsets = Vec::new();
    let mut ns = 0;
    for &e in &edges {
        offsets.push(ns);
        ns += if mesh.edges()[e].kind == EdgeKind::Interior {
            2 * nn
        } else {
            nn
        };
    }
    let mut a = DMatrix::zeros(ne, ne);
    let mut b = DMatrix::zeros(ne, ns);
    let mut c = DMatrix::zeros(ns, ne);
    let mut d = DMatrix::zeros(ns, ns);
    let mut f = DVector::zeros(ne);

    let pts = mesh.triangle_points(t);
    let area = mesh.triangle_area(t);
    let rule = triangle_quadrature(exactness).unwrap();
    for (q, xi) in rule.points.iter().enumerate() {
        let x = affine(&pts, *xi);
        let w = 2.0 * area * rule.weights[q];
        let phi = values(&vb, &pts, x);
        let gphi = phys_grads(&vb, &pts, x);
        let psi = values(&wb, &pts, x);
        let gpsi = phys_grads(&wb, &pts, x);
        let beta = (data.beta)(x);
        let divb = (data.div_beta)(x);
        let st = if data.structural { 1.0 } else { 0.0 };
        for comp in 0..2 {
            for i in 0..nv {
                for j in 0..nv {
                    // eps^-1 (q, r) and eps^-1 (p, r)
                    a[(qi(comp, i), qi(comp, j))] += w * data.inv_eps * phi[i] * phi[j];
                    a[(pi(comp, i), pi(comp, j))] += w * data.inv_eps * phi[i] * phi[j];
                }
                for j in 0..nw {
                    // -(y, div r) and (div q, w)
                    let v = st * w * psi[j] * gphi[i][comp];
                    a[(qi(comp, i), yi(j))] -= v;
                    a[(pi(comp, i), zi(j))] -= v;
                    a[(yi(j), qi(comp, i))] += v;
                    a[(zi(j), pi(comp, i))] += v;
                }
            }
        }
        for i in 0..nw {
            let bgi = beta[0] * gpsi[i][0] + beta[1] * gpsi[i][1];
            for j in 0..nw {
                a[(yi(i), yi(j))] += w * (-psi[j] * bgi - divb * psi[j] * psi[i]);
                a[(zi(i), zi(j))] += w * psi[j] * bgi;
                a[(zi(i), yi(j))] -= st * w * psi[j] * psi[i];
            }
            f[yi(i)] += w * (data.f)(x) * psi[i];
            f[zi(i)] -= w * (data.y_d)(x) * psi[i];
        }
    }

    let erule = edge_quadrature(exactness).unwrap();
    for (l, &e) in edges.iter().enumerate() {
        let rec = &mesh.edges()[e];
        let side = rec.sides.iter().find(|s| s.triangle == t).unwrap();
        let n = side.normal;
        // traverse the edge along the element's own vertex order, unlike the
        // canonical direction used by the assembler
        let tri = mesh.triangles()[t];
        let (va, vz) = (mesh.vertices()[tri[l]], mesh.vertices()[tri[(l + 1) % 3]]);
        let s0 = offsets[l];
        let interior = rec.kind == EdgeKind::Interior;
        for (qe, &s) in erule.points.iter().enumerate() {
            let x = [va[0] + s * (vz[0] - va[0]), va[1] + s * (vz[1] - va[1])];
            let w = erule.weights[qe] * rec.length;
            let phi = values(&vb, &pts, x);
            let psi = values(&wb, &pts, x);
            let eta = edge_values(&eb, mesh, e, x);
            let beta = (data.beta)(x);
            let bn = beta[0] * n[0] + beta[1] * n[1];
            let (s1, s2) = (data.sigma)(e, x, n);
            let st = if data.structural { 1.0 } else { 0.0 };
            for i in 0..nw {
                for j in 0..nw {
                    a[(yi(i), yi(j))] += w * s1 * psi[i] * psi[j];
                    a[(zi(i), zi(j))] += w * s2 * psi[i] * psi[j];
                }
            }
            for m in 0..nn {
                let (cy, cz) = (s0 + m, s0 + nn + m);
                for comp in 0..2 {
                    for i in 0..nv {
                        let v = st * w * eta[m] * phi[i] * n[comp];
                        b[(qi(comp, i), cy)] += v;
                        if interior {
                            b[(pi(comp, i), cz)] += v;
                            c[(cy, qi(comp, i))] -= v;
                            c[(cz, pi(comp, i))] -= v;
                        } else {
                            c[(cy, pi(comp, i))] += v;
                        }
                    }
                }
                for i in 0..nw {
                    let v = w * eta[m] * psi[i];
                    b[(yi(i), cy)] -= (s1 - bn) * v;
                    if interior {
                        b[(zi(i), cz)] -= (s2 + bn) * v;
                        c[(cy, yi(i))] -= s1 * v;
                        c[(cz, zi(i))] -= s2 * v;
                    } else {
                        c[(cy, zi(i))] += s2 * v;
                    }
                }
                for m2 in 0..nn {
                    let v = w * eta[m] * eta[m2];
                    if interior {
                        d[(cy, s0 + m2)] += s1 * v;
                        d[(cz, s0 + nn + m2)] += s2 * v;
                    } else {
                        d[(cy, s0 + m2)] += data.gamma * v;
                    }
                }
            }
        }
    }
    OracleBlocks { a, b, c, d, f }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, &b| a.max(b.abs()))
}

pub fn rel_diff(x: &[f64], y: &[f64]) -> f64 {
    let num: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let den: f64 = y.iter().map(|b| b * b).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Right-hand side of the energy identity evaluated directly by quadrature;
/// `sign = -1` gives the state form, `+1` the adjoint form.
pub fn energy_oracle(
    mesh: &Mesh,
    spaces: &Spaces,
    spec: &ProblemSpec,
    v: &[f64],
    sign: f64,
) -> f64 {
    let k = spaces.k;
    let (nfl, nsc) = (spaces.flux.dim(), spaces.scalar.dim());
    let (vq, vw, vm) = (&v[..nfl], &v[nfl..nfl + nsc], &v[nfl + nsc..]);
    let vb = SimplexBasis::new(k).unwrap();
    let wb = SimplexBasis::new(k + 1).unwrap();
    let eb = EdgeBasis::new(k + 1).unwrap();
    let nv = vb.dim();
    let rule = triangle_quadrature(2 * k + 10).unwrap();
    let erule = edge_quadrature(2 * k + 10).unwrap();
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let pts = mesh.triangle_points(t);
        let area = mesh.triangle_area(t);
        let fd = spaces.flux.dofs(t);
        let sd = spaces.scalar.dofs(t);
        let eval_w = |x| {
            values(&wb, &pts, x)
                .iter()
                .zip(sd)
                .map(|(p, &g)| p * vw[g])
                .sum::<f64>()
        };
        for (q, xi) in rule.points.iter().enumerate() {
            let x = affine(&pts, *xi);
            let w = 2.0 * area * rule.weights[q];
            let phi = values(&vb, &pts, x);
            let qx: f64 = (0..nv).map(|i| phi[i] * vq[fd[i]]).sum();
            let qy: f64 = (0..nv).map(|i| phi[i] * vq[fd[nv + i]]).sum();
            let wv = eval_w(x);
            total += w * ((qx * qx + qy * qy) / spec.epsilon - 0.5 * (spec.div_beta)(x) * wv * wv);
        }
        for (l, &e) in mesh.triangle_edges(t).iter().enumerate() {
            let rec = &mesh.edges()[e];
            let n = rec.sides.iter().find(|s| s.triangle == t).unwrap().normal;
            let tri = mesh.triangles()[t];
            let (a, b) = (mesh.vertices()[tri[l]], mesh.vertices()[tri[(l + 1) % 3]]);
            let [ca, cb] = mesh.edge_points(e);
            let tau1 = spec.tau1_for_edge(ca, cb);
            for (qe, &s) in erule.points.iter().enumerate() {
                let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                let w = erule.weights[qe] * rec.length;
                let beta = (spec.beta)(x);
                let bn = beta[0] * n[0] + beta[1] * n[1];
                let tau = if sign < 0.0 { tau1 } else { tau1 - bn };
                let weight = 1.0 / rec.length + tau + sign * 0.5 * bn;
                let jump = match rec.kind {
                    EdgeKind::Interior => {
                        let eta = edge_values(&eb, mesh, e, x);
                        let mu: f64 = spaces
                            .interior_trace
                            .dofs(e)
                            .iter()
                            .zip(&eta)
                            .map(|(&g, p)| vm[g] * p)
                            .sum();
                        eval_w(x) - mu
                    }
                    EdgeKind::Boundary => eval_w(x),
                };
                total += w * weight * jump * jump;
            }
        }
    }
    total
}

pub fn quadratic_form(m: &CsrMatrix, v: &[f64]) -> f64 {
    m.matvec(v).iter().zip(v).map(|(a, b)| a * b).sum()
}
