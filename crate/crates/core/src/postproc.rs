//! L2 projections, error norms against exact or reference solutions,
//! convergence orders and point sampling of discrete fields.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::default_exactness;
use crate::basis::{EdgeBasis, SimplexBasis};
use crate::error::{Error, Result};
use crate::mesh::{barycentric, EdgeKind, Mesh, Point};
use crate::problems::{ExactState, ScalarFn};
use crate::quadrature::{edge_quadrature, triangle_quadrature};
use crate::solver::SolutionBundle;
use crate::spaces::Spaces;

const NESTED_TOL: f64 = 1e-10;

fn affine(pts: &[Point; 3], xi: [f64; 2]) -> Point {
    let [a, b, c] = *pts;
    [
        a[0] + xi[0] * (b[0] - a[0]) + xi[1] * (c[0] - a[0]),
        a[1] + xi[0] * (b[1] - a[1]) + xi[1] * (c[1] - a[1]),
    ]
}

fn ref_coords(pts: &[Point; 3], x: Point) -> [f64; 2] {
    let l = barycentric(pts[0], pts[1], pts[2], x);
    [l[1], l[2]]
}

/// A solution bundle together with the mesh and spaces it lives on.
#[derive(Clone, Copy)]
pub struct Discrete<'a> {
    pub mesh: &'a Mesh,
    pub spaces: &'a Spaces,
    pub bundle: &'a SolutionBundle,
}

/// Scalar fields that can be evaluated pointwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Field {
    #[serde(rename = "y")]
    Y,
    #[serde(rename = "z")]
    Z,
    #[serde(rename = "q_x")]
    Qx,
    #[serde(rename = "q_y")]
    Qy,
    #[serde(rename = "p_x")]
    Px,
    #[serde(rename = "p_y")]
    Py,
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "y" => Ok(Field::Y),
            "z" => Ok(Field::Z),
            "q_x" => Ok(Field::Qx),
            "q_y" => Ok(Field::Qy),
            "p_x" => Ok(Field::Px),
            "p_y" => Ok(Field::Py),
            other => Err(Error::Config(format!(
                "unknown field `{other}` (expected y, z, q_x, q_y, p_x or p_y)"
            ))),
        }
    }
}

/// Pointwise evaluator of the piecewise polynomial fields of one bundle.
pub struct FieldEvaluator<'a> {
    d: Discrete<'a>,
    vb: SimplexBasis,
    wb: SimplexBasis,
    eb: EdgeBasis,
}

impl<'a> FieldEvaluator<'a> {
    pub fn new(d: Discrete<'a>) -> Result<Self> {
        let s = d.spaces;
        let b = d.bundle;
        if b.k != s.k {
            return Err(Error::Usage(format!(
                "bundle has k = {}, spaces have k = {}",
                b.k, s.k
            )));
        }
        let checks = [
            ("q", b.q.len(), s.flux.dim(), false),
            ("y", b.y.len(), s.scalar.dim(), false),
            ("p", b.p.len(), s.flux.dim(), true),
            ("z", b.z.len(), s.scalar.dim(), true),
            ("u", b.u.len(), s.control.dim(), true),
        ];
        for (name, got, want, may_be_empty) in checks {
            if got != want && !(may_be_empty && got == 0) {
                return Err(Error::Usage(format!(
                    "block {name} has {got} coefficients, space has {want}"
                )));
            }
        }
        Ok(Self {
            d,
            vb: SimplexBasis::new(s.k)?,
            wb: SimplexBasis::new(s.k + 1)?,
            eb: EdgeBasis::new(s.k + 1)?,
        })
    }

    pub fn has(&self, field: Field) -> bool {
        match field {
            Field::Y | Field::Qx | Field::Qy => true,
            Field::Z | Field::Px | Field::Py => !self.d.bundle.z.is_empty(),
        }
    }

    pub fn has_control(&self) -> bool {
        !self.d.bundle.u.is_empty()
    }

    /// Value of `field` on element `t` at reference point `xi`.
    pub fn eval_ref(&self, field: Field, t: usize, xi: [f64; 2], buf: &mut Vec<f64>) -> f64 {
        let b = self.d.bundle;
        let s = self.d.spaces;
        let (coeffs, dofs, basis): (&[f64], &[usize], &SimplexBasis) = match field {
            Field::Y => (&b.y, s.scalar.dofs(t), &self.wb),
            Field::Z => (&b.z, s.scalar.dofs(t), &self.wb),
            Field::Qx => (&b.q, &s.flux.dofs(t)[..s.n_flux()], &self.vb),
            Field::Qy => (&b.q, &s.flux.dofs(t)[s.n_flux()..], &self.vb),
            Field::Px => (&b.p, &s.flux.dofs(t)[..s.n_flux()], &self.vb),
            Field::Py => (&b.p, &s.flux.dofs(t)[s.n_flux()..], &self.vb),
        };
        buf.resize(basis.dim(), 0.0);
        basis.eval_at(xi, buf);
        dofs.iter()
            .zip(buf.iter())
            .map(|(&i, v)| coeffs[i] * v)
            .sum()
    }

    /// Value of `field` at physical point `x` of element `t`.
    pub fn eval_in(&self, field: Field, t: usize, x: Point, buf: &mut Vec<f64>) -> f64 {
        self.eval_ref(
            field,
            t,
            ref_coords(&self.d.mesh.triangle_points(t), x),
            buf,
        )
    }

    /// Value of `field` at `x`, resolving shared boundaries to the lowest triangle id.
    pub fn eval(&self, field: Field, x: Point) -> Result<f64> {
        let (t, _) = self.d.mesh.locate_point(x)?;
        Ok(self.eval_in(field, t, x, &mut Vec::new()))
    }

    /// Control on boundary edge `e` at canonical parameter `t`.
    pub fn eval_control(&self, e: usize, t: f64, buf: &mut Vec<f64>) -> f64 {
        buf.resize(self.eb.dim(), 0.0);
        self.eb.eval_at(t, buf);
        self.d
            .spaces
            .control
            .dofs(e)
            .iter()
            .zip(buf.iter())
            .map(|(&i, v)| self.d.bundle.u[i] * v)
            .sum()
    }
}

/// Elementwise L2 projection of `f` onto the scalar space `P^{k+1}`.
pub fn l2_project_scalar(
    mesh: &Mesh,
    spaces: &Spaces,
    f: impl Fn(Point) -> f64,
) -> Result<Vec<f64>> {
    let basis = SimplexBasis::new(spaces.k + 1)?;
    let rule = triangle_quadrature(default_exactness(spaces.k) + 4)?;
    let table = basis.eval(&rule.points);
    let n = basis.dim();
    let mut mass = DMatrix::<f64>::zeros(n, n);
    for (q, w) in rule.weights.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                mass[(i, j)] += w * table[(i, q)] * table[(j, q)];
            }
        }
    }
    // the affine map scales the reference mass matrix and load alike
    let chol = mass
        .cholesky()
        .ok_or_else(|| Error::Numerical("reference mass matrix not SPD".into()))?;
    let mut out = vec![0.0; spaces.scalar.dim()];
    for t in 0..mesh.num_triangles() {
        let pts = mesh.triangle_points(t);
        let mut load = DVector::<f64>::zeros(n);
        for (q, xi) in rule.points.iter().enumerate() {
            let v = f(affine(&pts, *xi)) * rule.weights[q];
            for i in 0..n {
                load[i] += v * table[(i, q)];
            }
        }
        let c = chol.solve(&load);
        for (&g, v) in spaces.scalar.dofs(t).iter().zip(c.iter()) {
            out[g] = *v;
        }
    }
    Ok(out)
}

/// Edgewise L2 projection of `f` onto `P^{degree}` of every boundary edge,
/// indexed by edge id (empty for interior edges). Coefficients follow the
/// canonical edge orientation.
pub fn l2_project_boundary(
    mesh: &Mesh,
    degree: usize,
    f: impl Fn(Point) -> f64,
) -> Result<Vec<Vec<f64>>> {
    let basis = EdgeBasis::new(degree)?;
    let rule = edge_quadrature(2 * degree + 6)?;
    let table = basis.eval(&rule.points);
    let n = basis.dim();
    let mut mass = DMatrix::<f64>::zeros(n, n);
    for (q, w) in rule.weights.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                mass[(i, j)] += w * table[(i, q)] * table[(j, q)];
            }
        }
    }
    let chol = mass
        .cholesky()
        .ok_or_else(|| Error::Numerical("reference edge mass matrix not SPD".into()))?;
    let mut out = vec![Vec::new(); mesh.num_edges()];
    for (e, rec) in mesh.edges().iter().enumerate() {
        if rec.kind != EdgeKind::Boundary {
            continue;
        }
        let [a, b] = mesh.edge_points(e);
        let mut load = DVector::<f64>::zeros(n);
        for (q, &t) in rule.points.iter().enumerate() {
            let v = f([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]) * rule.weights[q];
            for i in 0..n {
                load[i] += v * table[(i, q)];
            }
        }
        out[e] = chol.solve(&load).iter().copied().collect();
    }
    Ok(out)
}

/// `|| f - sum_i c_i psi_i ||_{L2}` for scalar coefficients `c` on `spaces`.
pub fn scalar_l2_error(
    mesh: &Mesh,
    spaces: &Spaces,
    coeffs: &[f64],
    f: impl Fn(Point) -> f64,
    exactness: usize,
) -> Result<f64> {
    let basis = SimplexBasis::new(spaces.k + 1)?;
    let rule = triangle_quadrature(exactness)?;
    let table = basis.eval(&rule.points);
    let mut sum = 0.0;
    for t in 0..mesh.num_triangles() {
        let pts = mesh.triangle_points(t);
        let area = mesh.triangle_area(t);
        let dofs = spaces.scalar.dofs(t);
        for (q, xi) in rule.points.iter().enumerate() {
            let uh: f64 = dofs
                .iter()
                .enumerate()
                .map(|(i, &g)| coeffs[g] * table[(i, q)])
                .sum();
            let d = f(affine(&pts, *xi)) - uh;
            sum += 2.0 * area * rule.weights[q] * d * d;
        }
    }
    Ok(sum.sqrt())
}

/// L2 errors per tracked quantity. `None` marks a quantity absent from a bundle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QuantityErrors {
    pub q: Option<f64>,
    pub p: Option<f64>,
    pub y: Option<f64>,
    pub z: Option<f64>,
    pub u: Option<f64>,
}

impl QuantityErrors {
    pub fn as_array(&self) -> [Option<f64>; 5] {
        [self.q, self.p, self.y, self.z, self.u]
    }
}

/// Errors between two solutions on nested uniform meshes, integrated on the
/// finer mesh with its elements' quadrature.
pub fn error_against_reference(a: Discrete, b: Discrete) -> Result<QuantityErrors> {
    let (coarse, fine) = if a.mesh.num_triangles() <= b.mesh.num_triangles() {
        (a, b)
    } else {
        (b, a)
    };
    let ce = FieldEvaluator::new(coarse)?;
    let fe = FieldEvaluator::new(fine)?;
    let exactness = default_exactness(coarse.spaces.k.max(fine.spaces.k));
    let rule = triangle_quadrature(exactness)?;
    let fields = [
        Field::Qx,
        Field::Qy,
        Field::Px,
        Field::Py,
        Field::Y,
        Field::Z,
    ];
    let active: Vec<bool> = fields.iter().map(|&f| ce.has(f) && fe.has(f)).collect();
    let mut sums = [0.0f64; 6];
    let mut buf = Vec::new();
    for t in 0..fine.mesh.num_triangles() {
        let fp = fine.mesh.triangle_points(t);
        let centroid = [
            (fp[0][0] + fp[1][0] + fp[2][0]) / 3.0,
            (fp[0][1] + fp[1][1] + fp[2][1]) / 3.0,
        ];
        let (ct, _) = coarse
            .mesh
            .locate_point(centroid)
            .map_err(|_| non_nested(t))?;
        let cp = coarse.mesh.triangle_points(ct);
        for v in fp {
            if barycentric(cp[0], cp[1], cp[2], v)
                .iter()
                .any(|&l| l < -NESTED_TOL)
            {
                return Err(non_nested(t));
            }
        }
        let area = fine.mesh.triangle_area(t);
        for (q, xi) in rule.points.iter().enumerate() {
            let x = affine(&fp, *xi);
            let w = 2.0 * area * rule.weights[q];
            let cxi = ref_coords(&cp, x);
            for (i, &field) in fields.iter().enumerate() {
                if active[i] {
                    let d = fe.eval_ref(field, t, *xi, &mut buf)
                        - ce.eval_ref(field, ct, cxi, &mut buf);
                    sums[i] += w * d * d;
                }
            }
        }
    }
    let u = if ce.has_control() && fe.has_control() {
        Some(boundary_error(coarse, fine, &ce, &fe)?)
    } else {
        None
    };
    Ok(QuantityErrors {
        q: active[0].then(|| (sums[0] + sums[1]).sqrt()),
        p: active[2].then(|| (sums[2] + sums[3]).sqrt()),
        y: active[4].then(|| sums[4].sqrt()),
        z: active[5].then(|| sums[5].sqrt()),
        u,
    })
}

fn non_nested(t: usize) -> Error {
    Error::Usage(format!(
        "meshes are not nested: fine element {t} is not contained in a coarse element"
    ))
}

fn boundary_error(
    coarse: Discrete,
    fine: Discrete,
    ce: &FieldEvaluator,
    fe: &FieldEvaluator,
) -> Result<f64> {
    let k = coarse.spaces.k.max(fine.spaces.k);
    let rule = edge_quadrature(2 * (k + 1) + 4)?;
    let (_, cb) = coarse.mesh.classify_edges()?;
    let (_, fb) = fine.mesh.classify_edges()?;
    let mut buf = Vec::new();
    let mut sum = 0.0;
    for &e in &fb {
        let [a, b] = fine.mesh.edge_points(e);
        let len = fine.mesh.edges()[e].length;
        let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let host = cb
            .iter()
            .copied()
            .find(|&c| {
                let [p, r] = coarse.mesh.edge_points(c);
                on_segment(p, r, a) && on_segment(p, r, b) && on_segment(p, r, mid)
            })
            .ok_or_else(|| {
                Error::Usage(format!(
                    "meshes are not nested: fine boundary edge {e} lies on no coarse boundary edge"
                ))
            })?;
        let [p, r] = coarse.mesh.edge_points(host);
        let (dx, dy) = (r[0] - p[0], r[1] - p[1]);
        let l2 = dx * dx + dy * dy;
        for (q, &t) in rule.points.iter().enumerate() {
            let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let s = ((x[0] - p[0]) * dx + (x[1] - p[1]) * dy) / l2;
            let d = fe.eval_control(e, t, &mut buf) - ce.eval_control(host, s, &mut buf);
            sum += rule.weights[q] * len * d * d;
        }
    }
    Ok(sum.sqrt())
}

fn on_segment(p: Point, r: Point, x: Point) -> bool {
    let (dx, dy) = (r[0] - p[0], r[1] - p[1]);
    let len = dx.hypot(dy);
    let cross = (dx * (x[1] - p[1]) - dy * (x[0] - p[0])) / len;
    let s = ((x[0] - p[0]) * dx + (x[1] - p[1]) * dy) / (len * len);
    cross.abs() < NESTED_TOL && s > -NESTED_TOL && s < 1.0 + NESTED_TOL
}

/// Errors of `y` and `q = -eps grad y` against a known exact state.
pub fn error_against_exact(
    d: Discrete,
    exact: &ExactState,
    epsilon: f64,
) -> Result<QuantityErrors> {
    let ev = FieldEvaluator::new(d)?;
    let rule = triangle_quadrature(default_exactness(d.spaces.k) + 4)?;
    let (mut ey, mut eq) = (0.0, 0.0);
    let mut buf = Vec::new();
    for t in 0..d.mesh.num_triangles() {
        let pts = d.mesh.triangle_points(t);
        let area = d.mesh.triangle_area(t);
        for (q, xi) in rule.points.iter().enumerate() {
            let x = affine(&pts, *xi);
            let w = 2.0 * area * rule.weights[q];
            let dy = (exact.y)(x) - ev.eval_ref(Field::Y, t, *xi, &mut buf);
            let g = (exact.grad_y)(x);
            let dqx = -epsilon * g[0] - ev.eval_ref(Field::Qx, t, *xi, &mut buf);
            let dqy = -epsilon * g[1] - ev.eval_ref(Field::Qy, t, *xi, &mut buf);
            ey += w * dy * dy;
            eq += w * (dqx * dqx + dqy * dqy);
        }
    }
    Ok(QuantityErrors {
        q: Some(eq.sqrt()),
        y: Some(ey.sqrt()),
        ..Default::default()
    })
}

/// `orders[i] = log2(errors[i-1] / errors[i])`; the first entry is `None`.
pub fn convergence_orders(errors: &[f64]) -> Result<Vec<Option<f64>>> {
    if let Some(e) = errors.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::Domain(format!(
            "convergence orders need positive errors, got {e}"
        )));
    }
    Ok((0..errors.len())
        .map(|i| (i > 0).then(|| (errors[i - 1] / errors[i]).log2()))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub level: u32,
    pub h: f64,
    pub errors: QuantityErrors,
    /// Orders of `[q, p, y, z, u]`.
    pub orders: [Option<f64>; 5],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

pub const CONVERGENCE_HEADER: &str =
    "level,h,err_q,ord_q,err_p,ord_p,err_y,ord_y,err_z,ord_z,err_u,ord_u";

impl ConvergenceTable {
    /// Builds rows from per-level errors; levels must increase by one.
    pub fn new(levels: &[u32], hs: &[f64], errors: &[QuantityErrors]) -> Result<Self> {
        if levels.len() != hs.len() || levels.len() != errors.len() {
            return Err(Error::Usage(
                "levels, sizes and errors differ in length".into(),
            ));
        }
        if levels.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::Usage(
                "convergence levels must increase by one".into(),
            ));
        }
        let mut orders = vec![[None; 5]; levels.len()];
        #[allow(clippy::needless_range_loop)]
        for qi in 0..5 {
            let series: Option<Vec<f64>> = errors.iter().map(|e| e.as_array()[qi]).collect();
            let Some(series) = series else { continue };
            if series.iter().all(|&e| e > 0.0) {
                for (i, o) in convergence_orders(&series)?.into_iter().enumerate() {
                    orders[i][qi] = o;
                }
            } else if series.iter().any(|&e| e < 0.0 || !e.is_finite()) {
                return Err(Error::Domain(
                    "negative or non-finite error in convergence table".into(),
                ));
            }
        }
        let rows = levels
            .iter()
            .zip(hs)
            .zip(errors)
            .zip(orders)
            .map(|(((&level, &h), &errors), orders)| ConvergenceRow {
                level,
                h,
                errors,
                orders,
            })
            .collect();
        Ok(Self { rows })
    }

    pub fn column_errors(&self, qi: usize) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.errors.as_array()[qi]).collect()
    }

    pub fn column_orders(&self, qi: usize) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.orders[qi]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(CONVERGENCE_HEADER);
        s.push('\n');
        let opt = |v: Option<f64>, prec: usize, sci: bool| match v {
            Some(v) if sci => format!("{v:.prec$e}"),
            Some(v) => format!("{v:.prec$}"),
            None => String::new(),
        };
        for r in &self.rows {
            write!(s, "{},{:.6e}", r.level, r.h).expect("write to string");
            for (e, o) in r.errors.as_array().into_iter().zip(r.orders) {
                write!(s, ",{},{}", opt(e, 6, true), opt(o, 4, false)).expect("write to string");
            }
            s.push('\n');
        }
        s
    }
}

/// Values of one field on an `m x m` grid of points `(i/(m-1), j/(m-1))`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleGrid {
    pub m: usize,
    pub points: Vec<Point>,
    pub values: Vec<f64>,
}

impl SampleGrid {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,value\n");
        for (p, v) in self.points.iter().zip(&self.values) {
            writeln!(s, "{:.8},{:.8},{:.12e}", p[0], p[1], v).expect("write to string");
        }
        s
    }
}

pub fn sample_field(d: Discrete, field: Field, m: usize) -> Result<SampleGrid> {
    if m == 0 {
        return Err(Error::Config("sample grid size must be positive".into()));
    }
    let ev = FieldEvaluator::new(d)?;
    if !ev.has(field) {
        return Err(Error::Usage(format!(
            "field {field:?} is not part of this solution"
        )));
    }
    let coord = |i: usize| {
        if m == 1 {
            0.5
        } else {
            i as f64 / (m - 1) as f64
        }
    };
    let mut points = Vec::with_capacity(m * m);
    let mut values = Vec::with_capacity(m * m);
    let mut buf = Vec::new();
    for j in 0..m {
        for i in 0..m {
            let x = [coord(i), coord(j)];
            let (t, _) = d.mesh.locate_point(x)?;
            points.push(x);
            values.push(ev.eval_in(field, t, x, &mut buf));
        }
    }
    Ok(SampleGrid { m, points, values })
}

/// Constant function helper for callers building projections.
pub fn constant_fn(c: f64) -> ScalarFn {
    std::sync::Arc::new(move |_| c)
}
