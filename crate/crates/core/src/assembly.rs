//! Element-local weak forms of the discrete optimality system, global scatter,
//! and static condensation onto the trace and control skeleton.
//!
//! Per element `K` the local unknowns are ordered `[q | y | p | z]` with each
//! flux stored as `[x components | y components]`. The skeleton unknowns seen
//! by `K` are, edge by edge, `[yhat | zhat]` on interior edges and `[u]` on
//! boundary edges. With `s1 = 1/|e| + tau1` and `s2 = 1/|e| + tau2`:
//!
//! ```text
//! r1: eps^-1 (q, r) - (y, div r) + <yhat, r.n>_int + <u, r.n>_bnd                          = 0
//! w1: (div q, w) - (beta y, grad w) - (div beta y, w) + <s1 y, w>
//!     - <(s1 - beta.n) yhat, w>_int - <(s1 - beta.n) u, w>_bnd                             = (f, w)
//! r2: eps^-1 (p, r) - (z, div r) + <zhat, r.n>_int                                         = 0
//! w2: (div p, w) + (beta z, grad w) + <s2 z, w> - <(s2 + beta.n) zhat, w>_int - (y, w)     = -(y_d, w)
//! mu1: -<q.n + s1 (y - yhat), mu>_int                                                        = 0
//! mu2: -<p.n + s2 (z - zhat), mu>_int                                                        = 0
//! mu3: gamma <u, mu>_bnd + <p.n + s2 z, mu>_bnd                                              = 0
//! ```
//!
//! The `mu1`/`mu2` rows carry the sign of the bilinear forms `B1`/`B2`, so the
//! `{q, y, yhat}` and `{p, z, zhat}` diagonal blocks of the global matrix are
//! exactly those operators.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::{EdgeBasis, SimplexBasis};
use crate::error::{Error, Result};
use crate::mesh::{EdgeKind, Mesh};
use crate::problems::{ProblemSpec, ScalarFn};
use crate::quadrature::{edge_quadrature, triangle_quadrature};
use crate::spaces::Spaces;
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Unknown groups of the optimality system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    Q,
    Y,
    P,
    Z,
    YHat,
    ZHat,
    U,
}

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::Q => "q",
            Block::Y => "y",
            Block::P => "p",
            Block::Z => "z",
            Block::YHat => "yhat_o",
            Block::ZHat => "zhat_o",
            Block::U => "u",
        }
    }
}

/// Ordered unknown blocks with offsets into a global vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    blocks: Vec<(Block, usize, usize)>,
    dim: usize,
}

impl Layout {
    pub fn new(blocks: &[(Block, usize)]) -> Self {
        let mut offset = 0;
        let blocks = blocks
            .iter()
            .map(|&(b, len)| {
                let entry = (b, offset, len);
                offset += len;
                entry
            })
            .collect();
        Self {
            blocks,
            dim: offset,
        }
    }

    /// `[q | y | p | z | yhat_o | zhat_o | u]`.
    pub fn monolithic(s: &Spaces) -> Self {
        let (v, w, mo, mb) = (
            s.flux.dim(),
            s.scalar.dim(),
            s.interior_trace.dim(),
            s.control.dim(),
        );
        Self::new(&[
            (Block::Q, v),
            (Block::Y, w),
            (Block::P, v),
            (Block::Z, w),
            (Block::YHat, mo),
            (Block::ZHat, mo),
            (Block::U, mb),
        ])
    }

    /// `[q | y | yhat_o]`, the state equation alone.
    pub fn state(s: &Spaces) -> Self {
        Self::new(&[
            (Block::Q, s.flux.dim()),
            (Block::Y, s.scalar.dim()),
            (Block::YHat, s.interior_trace.dim()),
        ])
    }

    /// `[p | z | zhat_o]`, the adjoint equation alone.
    pub fn adjoint(s: &Spaces) -> Self {
        Self::new(&[
            (Block::P, s.flux.dim()),
            (Block::Z, s.scalar.dim()),
            (Block::ZHat, s.interior_trace.dim()),
        ])
    }

    /// `[yhat_o | zhat_o | u]`.
    pub fn skeleton(s: &Spaces) -> Self {
        let (mo, mb) = (s.interior_trace.dim(), s.control.dim());
        Self::new(&[(Block::YHat, mo), (Block::ZHat, mo), (Block::U, mb)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> impl Iterator<Item = (Block, Range<usize>)> + '_ {
        self.blocks.iter().map(|&(b, o, l)| (b, o..o + l))
    }

    pub fn range(&self, block: Block) -> Option<Range<usize>> {
        self.blocks
            .iter()
            .find(|e| e.0 == block)
            .map(|&(_, o, l)| o..o + l)
    }

    pub fn index(&self, block: Block, i: usize) -> Option<usize> {
        self.blocks.iter().find(|e| e.0 == block).map(|&(_, o, l)| {
            debug_assert!(i < l);
            o + i
        })
    }
}

/// A skeleton unknown as seen from one element.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SkeletonEntry {
    pub block: Block,
    /// Index within the block's space.
    pub index: usize,
    pub edge: usize,
    /// Edge-basis node, in canonical edge orientation.
    pub node: usize,
}

/// Dense element matrices. Rows and columns of `a` follow `elem`; those of
/// `d` follow `skel`; `b` couples element rows to skeleton columns and `c`
/// skeleton rows to element columns.
#[derive(Clone, Debug)]
pub struct LocalBlocks {
    pub element: usize,
    pub elem: Vec<(Block, usize)>,
    pub skel: Vec<SkeletonEntry>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub f: DVector<f64>,
    pub g: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub layout: Layout,
}

/// Element-local recovery `x_K = xf - xb * lambda_K`.
#[derive(Clone, Debug)]
pub struct Recovery {
    pub element: usize,
    /// Positions of the recovered unknowns in the full layout.
    pub elem_global: Vec<usize>,
    /// Positions of the element's skeleton unknowns in the skeleton layout.
    pub skel_global: Vec<usize>,
    pub xb: DMatrix<f64>,
    pub xf: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct CondensedSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub skeleton_layout: Layout,
    pub full_layout: Layout,
    pub recovery: Vec<Recovery>,
}

impl CondensedSystem {
    pub fn dim(&self) -> usize {
        self.skeleton_layout.dim()
    }

    /// Full-layout solution vector from a skeleton solution.
    pub fn recover(&self, lambda: &[f64]) -> Vec<f64> {
        assert_eq!(lambda.len(), self.skeleton_layout.dim());
        let mut x = vec![0.0; self.full_layout.dim()];
        for (block, range) in self.skeleton_layout.blocks() {
            let full = self
                .full_layout
                .range(block)
                .expect("skeleton block in full layout");
            x[full].copy_from_slice(&lambda[range]);
        }
        for r in &self.recovery {
            let lam = DVector::from_iterator(
                r.skel_global.len(),
                r.skel_global.iter().map(|&i| lambda[i]),
            );
            let xk = &r.xf - &r.xb * lam;
            for (&gi, v) in r.elem_global.iter().zip(xk.iter()) {
                x[gi] = *v;
            }
        }
        x
    }
}

/// The bilinear forms `B1` on `[q | y | yhat_o]` and `B2` on `[p | z | zhat_o]`,
/// stored as `M[test, trial]`.
#[derive(Clone, Debug)]
pub struct Operators {
    pub b1: CsrMatrix,
    pub b2: CsrMatrix,
    pub state_layout: Layout,
    pub adjoint_layout: Layout,
}

/// Basis values on the reference element at every quadrature point.
#[derive(Clone, Debug)]
struct ReferenceTables {
    nv: usize,
    nw: usize,
    nn: usize,
    vol_pts: Vec<[f64; 2]>,
    vol_w: Vec<f64>,
    phi: DMatrix<f64>,
    dphi: [DMatrix<f64>; 2],
    psi: DMatrix<f64>,
    dpsi: [DMatrix<f64>; 2],
    edge_t: Vec<f64>,
    edge_w: Vec<f64>,
    eta: DMatrix<f64>,
    /// `[local edge][0: canonical, 1: reversed]` -> (flux basis, scalar basis).
    edge: Vec<[(DMatrix<f64>, DMatrix<f64>); 2]>,
}

const REF_VERTS: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

impl ReferenceTables {
    fn new(k: usize, exactness: usize) -> Result<Self> {
        let vb = SimplexBasis::new(k)?;
        let wb = SimplexBasis::new(k + 1)?;
        let eb = EdgeBasis::new(k + 1)?;
        let tq = triangle_quadrature(exactness)?;
        let eq = edge_quadrature(exactness)?;
        let mut edge = Vec::with_capacity(3);
        for l in 0..3 {
            let (va, vb_) = (REF_VERTS[l], REF_VERTS[(l + 1) % 3]);
            let tables = [(va, vb_), (vb_, va)].map(|(s, e)| {
                let pts: Vec<[f64; 2]> = eq
                    .points
                    .iter()
                    .map(|&t| [s[0] + t * (e[0] - s[0]), s[1] + t * (e[1] - s[1])])
                    .collect();
                (vb.eval(&pts), wb.eval(&pts))
            });
            edge.push(tables);
        }
        Ok(Self {
            nv: vb.dim(),
            nw: wb.dim(),
            nn: eb.dim(),
            phi: vb.eval(&tq.points),
            dphi: vb.eval_grad(&tq.points),
            psi: wb.eval(&tq.points),
            dpsi: wb.eval_grad(&tq.points),
            vol_pts: tq.points,
            vol_w: tq.weights,
            eta: eb.eval(&eq.points),
            edge_t: eq.points,
            edge_w: eq.weights,
            edge,
        })
    }
}

/// Default quadrature exactness `2(k + 2) + 2`.
pub fn default_exactness(k: usize) -> usize {
    2 * (k + 2) + 2
}

const CHUNK: usize = 4096;

/// Assembles the discrete system for one mesh, space set and problem.
pub struct Assembler<'a> {
    mesh: &'a Mesh,
    spaces: &'a Spaces,
    spec: &'a ProblemSpec,
    tables: ReferenceTables,
    tau1: Vec<f64>,
    exactness: usize,
    threads: usize,
}

impl<'a> Assembler<'a> {
    pub fn new(mesh: &'a Mesh, spaces: &'a Spaces, spec: &'a ProblemSpec) -> Result<Self> {
        Self::with_exactness(mesh, spaces, spec, default_exactness(spaces.k))
    }

    pub fn with_exactness(
        mesh: &'a Mesh,
        spaces: &'a Spaces,
        spec: &'a ProblemSpec,
        exactness: usize,
    ) -> Result<Self> {
        spec.validate()?;
        if spaces.flux.num_entities() != mesh.num_triangles()
            || spaces.interior_trace.num_entities() != mesh.num_edges()
        {
            return Err(Error::Usage("spaces were built on a different mesh".into()));
        }
        let tables = ReferenceTables::new(spaces.k, exactness)?;
        let tau1 = (0..mesh.num_edges())
            .map(|e| {
                let [a, b] = mesh.edge_points(e);
                spec.tau1_for_edge(a, b)
            })
            .collect();
        Ok(Self {
            mesh,
            spaces,
            spec,
            tables,
            tau1,
            exactness,
            threads: 0,
        })
    }

    /// Worker threads for element loops; `0` runs serially.
    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    pub fn exactness(&self) -> usize {
        self.exactness
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    pub fn spaces(&self) -> &Spaces {
        self.spaces
    }

    pub fn spec(&self) -> &ProblemSpec {
        self.spec
    }

    /// Face value of `tau1` on edge `e`.
    pub fn tau1(&self, e: usize) -> f64 {
        self.tau1[e]
    }

    /// Dense element blocks for triangle `t`.
    pub fn local(&self, t: usize) -> Result<LocalBlocks> {
        let tb = &self.tables;
        let (nv, nw, nn) = (tb.nv, tb.nw, tb.nn);
        let sp = self.spaces;
        let spec = self.spec;
        let mesh = self.mesh;
        if t >= mesh.num_triangles() {
            return Err(Error::Structural(format!("element {t} out of range")));
        }

        let qi = |c: usize, i: usize| c * nv + i;
        let yi = |i: usize| 2 * nv + i;
        let pi = |c: usize, i: usize| 2 * nv + nw + c * nv + i;
        let zi = |i: usize| 4 * nv + nw + i;
        let ne = 4 * nv + 2 * nw;

        let fd = sp.flux.dofs(t);
        let sd = sp.scalar.dofs(t);
        let mut elem = Vec::with_capacity(ne);
        elem.extend(fd.iter().map(|&i| (Block::Q, i)));
        elem.extend(sd.iter().map(|&i| (Block::Y, i)));
        elem.extend(fd.iter().map(|&i| (Block::P, i)));
        elem.extend(sd.iter().map(|&i| (Block::Z, i)));

        let tri_edges = mesh.triangle_edges(t);
        let mut skel = Vec::new();
        let mut edge_start = [0usize; 3];
        for (l, &e) in tri_edges.iter().enumerate() {
            edge_start[l] = skel.len();
            let rec = &mesh.edges()[e];
            let blocks: &[Block] = match rec.kind {
                EdgeKind::Interior => &[Block::YHat, Block::ZHat],
                EdgeKind::Boundary => &[Block::U],
            };
            let map = match rec.kind {
                EdgeKind::Interior => &sp.interior_trace,
                EdgeKind::Boundary => &sp.control,
            };
            for &block in blocks {
                for (node, &index) in map.dofs(e).iter().enumerate() {
                    skel.push(SkeletonEntry {
                        block,
                        index,
                        edge: e,
                        node,
                    });
                }
            }
        }
        let ns = skel.len();

        let mut a = DMatrix::<f64>::zeros(ne, ne);
        let mut b = DMatrix::<f64>::zeros(ne, ns);
        let mut c = DMatrix::<f64>::zeros(ns, ne);
        let mut d = DMatrix::<f64>::zeros(ns, ns);
        let mut f = DVector::<f64>::zeros(ne);

        let [x0, x1, x2] = mesh.triangle_points(t);
        let (ja, jb, jc, jd) = (x1[0] - x0[0], x2[0] - x0[0], x1[1] - x0[1], x2[1] - x0[1]);
        let det = ja * jd - jb * jc;
        let to_phys = |g: [f64; 2]| {
            [
                (jd * g[0] - jc * g[1]) / det,
                (-jb * g[0] + ja * g[1]) / det,
            ]
        };
        let inv_eps = 1.0 / spec.epsilon;

        let mut gphi = vec![[0.0; 2]; nv];
        let mut gpsi = vec![[0.0; 2]; nw];
        for (q, xi) in tb.vol_pts.iter().enumerate() {
            let x = [
                x0[0] + ja * xi[0] + jb * xi[1],
                x0[1] + jc * xi[0] + jd * xi[1],
            ];
            let w = tb.vol_w[q] * det.abs();
            let beta = (spec.beta)(x);
            let divb = (spec.div_beta)(x);
            let fq = (spec.f)(x);
            let ydq = (spec.y_d)(x);
            for (i, g) in gphi.iter_mut().enumerate() {
                *g = to_phys([tb.dphi[0][(i, q)], tb.dphi[1][(i, q)]]);
            }
            for (i, g) in gpsi.iter_mut().enumerate() {
                *g = to_phys([tb.dpsi[0][(i, q)], tb.dpsi[1][(i, q)]]);
            }
            for i in 0..nv {
                let phi_i = tb.phi[(i, q)];
                for j in 0..nv {
                    let m = w * inv_eps * phi_i * tb.phi[(j, q)];
                    for comp in 0..2 {
                        a[(qi(comp, i), qi(comp, j))] += m;
                        a[(pi(comp, i), pi(comp, j))] += m;
                    }
                }
                for j in 0..nw {
                    let psi_j = tb.psi[(j, q)];
                    for comp in 0..2 {
                        let v = w * psi_j * gphi[i][comp];
                        a[(qi(comp, i), yi(j))] -= v;
                        a[(pi(comp, i), zi(j))] -= v;
                        // divergence of the trial flux against the scalar test function
                        a[(yi(j), qi(comp, i))] += v;
                        a[(zi(j), pi(comp, i))] += v;
                    }
                }
            }
            for i in 0..nw {
                let psi_i = tb.psi[(i, q)];
                let bg = beta[0] * gpsi[i][0] + beta[1] * gpsi[i][1];
                for j in 0..nw {
                    let psi_j = tb.psi[(j, q)];
                    a[(yi(i), yi(j))] += w * (-psi_j * bg - divb * psi_j * psi_i);
                    a[(zi(i), zi(j))] += w * psi_j * bg;
                    a[(zi(i), yi(j))] -= w * psi_j * psi_i;
                }
                f[yi(i)] += w * fq * psi_i;
                f[zi(i)] -= w * ydq * psi_i;
            }
        }

        for (l, &e) in tri_edges.iter().enumerate() {
            let rec = &mesh.edges()[e];
            let side = rec
                .sides
                .iter()
                .find(|s| s.triangle == t && s.local_edge == l)
                .ok_or_else(|| Error::Structural(format!("edge {e} does not list element {t}")))?;
            let n = side.normal;
            let (ephi, epsi) = &tb.edge[l][usize::from(side.sign < 0)];
            let [p0, p1] = mesh.edge_points(e);
            let len = rec.length;
            let hinv = 1.0 / len;
            let s0 = edge_start[l];
            let interior = rec.kind == EdgeKind::Interior;
            for (qe, &tq) in tb.edge_t.iter().enumerate() {
                let w = tb.edge_w[qe] * len;
                let x = [p0[0] + tq * (p1[0] - p0[0]), p0[1] + tq * (p1[1] - p0[1])];
                let (tau1, tau2) = spec.tau_pair(self.tau1[e], x, n)?;
                let beta = (spec.beta)(x);
                let bn = beta[0] * n[0] + beta[1] * n[1];
                let (s1, s2) = (hinv + tau1, hinv + tau2);
                for i in 0..nw {
                    let psi_i = epsi[(i, qe)];
                    for j in 0..nw {
                        let m = w * psi_i * epsi[(j, qe)];
                        a[(yi(i), yi(j))] += s1 * m;
                        a[(zi(i), zi(j))] += s2 * m;
                    }
                }
                for m in 0..nn {
                    let eta_m = tb.eta[(m, qe)];
                    let (col_y, col_z) = (s0 + m, s0 + nn + m);
                    for i in 0..nv {
                        for comp in 0..2 {
                            let v = w * n[comp] * ephi[(i, qe)] * eta_m;
                            b[(qi(comp, i), col_y)] += v;
                            if interior {
                                b[(pi(comp, i), col_z)] += v;
                                c[(col_y, qi(comp, i))] -= v;
                                c[(col_z, pi(comp, i))] -= v;
                            } else {
                                c[(col_y, pi(comp, i))] += v;
                            }
                        }
                    }
                    for i in 0..nw {
                        let v = w * epsi[(i, qe)] * eta_m;
                        b[(yi(i), col_y)] -= (s1 - bn) * v;
                        if interior {
                            b[(zi(i), col_z)] -= (s2 + bn) * v;
                            c[(col_y, yi(i))] -= s1 * v;
                            c[(col_z, zi(i))] -= s2 * v;
                        } else {
                            c[(col_y, zi(i))] += s2 * v;
                        }
                    }
                    for m2 in 0..nn {
                        let v = w * eta_m * tb.eta[(m2, qe)];
                        if interior {
                            d[(col_y, s0 + m2)] += s1 * v;
                            d[(col_z, s0 + nn + m2)] += s2 * v;
                        } else {
                            d[(col_y, s0 + m2)] += spec.gamma * v;
                        }
                    }
                }
            }
        }

        Ok(LocalBlocks {
            element: t,
            elem,
            skel,
            a,
            b,
            c,
            d,
            f,
            g: DVector::zeros(ns),
        })
    }

    /// Runs `map` on every element's blocks (in parallel when configured) and
    /// feeds the results to `sink` in element order.
    fn for_each_local<T, M, S>(&self, map: M, mut sink: S) -> Result<()>
    where
        T: Send,
        M: Fn(LocalBlocks) -> Result<T> + Sync,
        S: FnMut(T) -> Result<()>,
    {
        let n = self.mesh.num_triangles();
        let pool = if self.threads > 0 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(self.threads)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        for start in (0..n).step_by(CHUNK) {
            let range = start..(start + CHUNK).min(n);
            let items: Vec<Result<T>> = match &pool {
                Some(p) => p.install(|| {
                    range
                        .into_par_iter()
                        .map(|t| self.local(t).and_then(&map))
                        .collect()
                }),
                None => range.map(|t| self.local(t).and_then(&map)).collect(),
            };
            for item in items {
                sink(item?)?;
            }
        }
        Ok(())
    }

    /// Edgewise L2 projection of `g` onto `P^{k+1}` of each boundary edge;
    /// interior edges get an empty vector.
    pub fn boundary_projection(&self, g: &ScalarFn) -> Result<Vec<Vec<f64>>> {
        let tb = &self.tables;
        let nn = tb.nn;
        let mut out = vec![Vec::new(); self.mesh.num_edges()];
        for (e, rec) in self.mesh.edges().iter().enumerate() {
            if rec.kind != EdgeKind::Boundary {
                continue;
            }
            let [p0, p1] = self.mesh.edge_points(e);
            let mut mass = DMatrix::<f64>::zeros(nn, nn);
            let mut load = DVector::<f64>::zeros(nn);
            for (qe, &t) in tb.edge_t.iter().enumerate() {
                let w = tb.edge_w[qe];
                let gv = g([p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])]);
                for m in 0..nn {
                    load[m] += w * gv * tb.eta[(m, qe)];
                    for m2 in 0..nn {
                        mass[(m, m2)] += w * tb.eta[(m, qe)] * tb.eta[(m2, qe)];
                    }
                }
            }
            let coeffs = mass.lu().solve(&load).ok_or_else(|| {
                Error::Numerical(format!("singular edge mass matrix on edge {e}"))
            })?;
            out[e] = coeffs.iter().copied().collect();
        }
        Ok(out)
    }

    fn scatter(
        &self,
        layout: &Layout,
        fixed: &(dyn Fn(&SkeletonEntry) -> Option<f64> + Sync),
    ) -> Result<LinearSystem> {
        let n = layout.dim();
        let mut builder = TripletBuilder::new(n, n);
        let mut rhs = vec![0.0; n];
        self.for_each_local(Ok, |lb| {
            let ei: Vec<Option<usize>> =
                lb.elem.iter().map(|&(bk, i)| layout.index(bk, i)).collect();
            let si: Vec<Option<usize>> = lb
                .skel
                .iter()
                .map(|s| layout.index(s.block, s.index))
                .collect();
            let fv: Vec<Option<f64>> = lb
                .skel
                .iter()
                .zip(&si)
                .map(|(s, g)| if g.is_none() { fixed(s) } else { None })
                .collect();
            for (i, r) in ei.iter().enumerate() {
                let Some(r) = *r else { continue };
                for (j, c) in ei.iter().enumerate() {
                    if let Some(c) = *c {
                        builder.push(r, c, lb.a[(i, j)])?;
                    }
                }
                let mut load = lb.f[i];
                for (m, c) in si.iter().enumerate() {
                    if let Some(c) = *c {
                        builder.push(r, c, lb.b[(i, m)])?;
                    } else if let Some(v) = fv[m] {
                        load -= lb.b[(i, m)] * v;
                    }
                }
                rhs[r] += load;
            }
            for (m, r) in si.iter().enumerate() {
                let Some(r) = *r else { continue };
                for (j, c) in ei.iter().enumerate() {
                    if let Some(c) = *c {
                        builder.push(r, c, lb.c[(m, j)])?;
                    }
                }
                let mut load = lb.g[m];
                for (m2, c) in si.iter().enumerate() {
                    if let Some(c) = *c {
                        builder.push(r, c, lb.d[(m, m2)])?;
                    } else if let Some(v) = fv[m2] {
                        load -= lb.d[(m, m2)] * v;
                    }
                }
                rhs[r] += load;
            }
            Ok(())
        })?;
        Ok(LinearSystem {
            matrix: builder.build(),
            rhs,
            layout: layout.clone(),
        })
    }

    /// Monolithic optimality system over `[q | y | p | z | yhat_o | zhat_o | u]`.
    pub fn global(&self) -> Result<LinearSystem> {
        self.scatter(&Layout::monolithic(self.spaces), &|_| None)
    }

    /// State equation over `[q | y | yhat_o]` with the boundary value fixed to
    /// the edgewise projection of `g`.
    pub fn state_only(&self, g: &ScalarFn) -> Result<LinearSystem> {
        let proj = self.boundary_projection(g)?;
        self.scatter(&Layout::state(self.spaces), &move |s| {
            (s.block == Block::U).then(|| proj[s.edge][s.node])
        })
    }

    /// `B1` and `B2` as explicit matrices; boundary-control terms are excluded.
    pub fn operators(&self) -> Result<Operators> {
        let state_layout = Layout::state(self.spaces);
        let adjoint_layout = Layout::adjoint(self.spaces);
        let b1 = self.scatter(&state_layout, &|_| None)?.matrix;
        let b2 = self.scatter(&adjoint_layout, &|_| None)?.matrix;
        Ok(Operators {
            b1,
            b2,
            state_layout,
            adjoint_layout,
        })
    }

    fn condense_with(
        &self,
        full: &Layout,
        skeleton: &Layout,
        fixed: &(dyn Fn(&SkeletonEntry) -> Option<f64> + Sync),
    ) -> Result<CondensedSystem> {
        struct Piece {
            rec: Recovery,
            s: DMatrix<f64>,
            r: DVector<f64>,
        }
        let n = skeleton.dim();
        let mut builder = TripletBuilder::new(n, n);
        let mut rhs = vec![0.0; n];
        let mut recovery = Vec::with_capacity(self.mesh.num_triangles());
        let map = |lb: LocalBlocks| -> Result<Piece> {
            let ke: Vec<usize> = (0..lb.elem.len())
                .filter(|&i| full.index(lb.elem[i].0, 0).is_some())
                .collect();
            let ks: Vec<usize> = (0..lb.skel.len())
                .filter(|&m| skeleton.index(lb.skel[m].block, lb.skel[m].index).is_some())
                .collect();
            let fixed_vals: Vec<(usize, f64)> = (0..lb.skel.len())
                .filter(|&m| skeleton.index(lb.skel[m].block, lb.skel[m].index).is_none())
                .filter_map(|m| fixed(&lb.skel[m]).map(|v| (m, v)))
                .collect();
            let a = lb.a.select_rows(&ke).select_columns(&ke);
            let b = lb.b.select_rows(&ke).select_columns(&ks);
            let c = lb.c.select_rows(&ks).select_columns(&ke);
            let d = lb.d.select_rows(&ks).select_columns(&ks);
            let mut f = DVector::from_iterator(ke.len(), ke.iter().map(|&i| lb.f[i]));
            let mut g = DVector::from_iterator(ks.len(), ks.iter().map(|&m| lb.g[m]));
            for &(m, v) in &fixed_vals {
                for (r, &i) in ke.iter().enumerate() {
                    f[r] -= lb.b[(i, m)] * v;
                }
                for (r, &mm) in ks.iter().enumerate() {
                    g[r] -= lb.d[(mm, m)] * v;
                }
            }
            let lu = a.lu();
            let singular =
                || Error::Numerical(format!("singular local block on element {}", lb.element));
            if !lu.is_invertible() {
                return Err(singular());
            }
            let xb = lu.solve(&b).ok_or_else(singular)?;
            let xf = lu.solve(&f).ok_or_else(singular)?;
            if xb.iter().chain(xf.iter()).any(|v| !v.is_finite()) {
                return Err(singular());
            }
            let s = d - &c * &xb;
            let r = g - &c * &xf;
            let elem_global = ke
                .iter()
                .map(|&i| full.index(lb.elem[i].0, lb.elem[i].1).expect("kept"))
                .collect();
            let skel_global = ks
                .iter()
                .map(|&m| {
                    skeleton
                        .index(lb.skel[m].block, lb.skel[m].index)
                        .expect("kept")
                })
                .collect();
            Ok(Piece {
                rec: Recovery {
                    element: lb.element,
                    elem_global,
                    skel_global,
                    xb,
                    xf,
                },
                s,
                r,
            })
        };
        self.for_each_local(map, |piece| {
            let ids = &piece.rec.skel_global;
            for (m, &r) in ids.iter().enumerate() {
                for (m2, &c) in ids.iter().enumerate() {
                    builder.push(r, c, piece.s[(m, m2)])?;
                }
                rhs[r] += piece.r[m];
            }
            recovery.push(piece.rec);
            Ok(())
        })?;
        Ok(CondensedSystem {
            matrix: builder.build(),
            rhs,
            skeleton_layout: skeleton.clone(),
            full_layout: full.clone(),
            recovery,
        })
    }

    /// Optimality system condensed onto `[yhat_o | zhat_o | u]`.
    pub fn condensed(&self) -> Result<CondensedSystem> {
        self.condense_with(
            &Layout::monolithic(self.spaces),
            &Layout::skeleton(self.spaces),
            &|_| None,
        )
    }

    /// State equation condensed onto `[yhat_o]`.
    pub fn condensed_state_only(&self, g: &ScalarFn) -> Result<CondensedSystem> {
        let proj = self.boundary_projection(g)?;
        let skeleton = Layout::new(&[(Block::YHat, self.spaces.interior_trace.dim())]);
        self.condense_with(&Layout::state(self.spaces), &skeleton, &move |s| {
            (s.block == Block::U).then(|| proj[s.edge][s.node])
        })
    }
}

pub fn assemble_local(
    t: usize,
    mesh: &Mesh,
    spaces: &Spaces,
    spec: &ProblemSpec,
) -> Result<LocalBlocks> {
    Assembler::new(mesh, spaces, spec)?.local(t)
}

pub fn assemble_global(mesh: &Mesh, spaces: &Spaces, spec: &ProblemSpec) -> Result<LinearSystem> {
    Assembler::new(mesh, spaces, spec)?.global()
}

pub fn assemble_state_only(
    mesh: &Mesh,
    spaces: &Spaces,
    spec: &ProblemSpec,
    g: &ScalarFn,
) -> Result<LinearSystem> {
    if !spec.is_state_only() {
        return Err(Error::Usage(format!(
            "problem `{}` is not a state-only problem",
            spec.name
        )));
    }
    Assembler::new(mesh, spaces, spec)?.state_only(g)
}

pub fn condense(mesh: &Mesh, spaces: &Spaces, spec: &ProblemSpec) -> Result<CondensedSystem> {
    Assembler::new(mesh, spaces, spec)?.condensed()
}

pub fn operator_matrices(mesh: &Mesh, spaces: &Spaces, spec: &ProblemSpec) -> Result<Operators> {
    Assembler::new(mesh, spaces, spec)?.operators()
}
