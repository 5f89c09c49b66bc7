//! Direct sparse solves of the monolithic and condensed systems.

use faer::linalg::solvers::SolveCore;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat};
use serde::{Deserialize, Serialize};

use crate::assembly::{Assembler, Block, CondensedSystem, Layout, LinearSystem};
use crate::error::{Error, Result};
use crate::problems::Mode;
use crate::spaces::TraceVariant;
use crate::sparse::{norm2, CsrMatrix};

/// Residual thresholds a solve must meet.
pub const RELATIVE_RESIDUAL_TOL: f64 = 1e-9;
pub const ABSOLUTE_RESIDUAL_TOL: f64 = 1e-12;

/// Coefficient vectors of every unknown group. Groups absent from the solved
/// system (the adjoint and control in state-only runs) are empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionBundle {
    pub variant: TraceVariant,
    pub k: usize,
    pub level: Option<u32>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub yhat_o: Vec<f64>,
    pub zhat_o: Vec<f64>,
    pub u: Vec<f64>,
}

impl SolutionBundle {
    pub fn block(&self, b: Block) -> &[f64] {
        match b {
            Block::Q => &self.q,
            Block::Y => &self.y,
            Block::P => &self.p,
            Block::Z => &self.z,
            Block::YHat => &self.yhat_o,
            Block::ZHat => &self.zhat_o,
            Block::U => &self.u,
        }
    }

    fn block_mut(&mut self, b: Block) -> &mut Vec<f64> {
        match b {
            Block::Q => &mut self.q,
            Block::Y => &mut self.y,
            Block::P => &mut self.p,
            Block::Z => &mut self.z,
            Block::YHat => &mut self.yhat_o,
            Block::ZHat => &mut self.zhat_o,
            Block::U => &mut self.u,
        }
    }

    pub fn from_vector(
        layout: &Layout,
        x: &[f64],
        variant: TraceVariant,
        k: usize,
        level: Option<u32>,
    ) -> Self {
        let mut out = Self {
            variant,
            k,
            level,
            q: Vec::new(),
            p: Vec::new(),
            y: Vec::new(),
            z: Vec::new(),
            yhat_o: Vec::new(),
            zhat_o: Vec::new(),
            u: Vec::new(),
        };
        for (b, range) in layout.blocks() {
            *out.block_mut(b) = x[range].to_vec();
        }
        out
    }

    /// Concatenation of the layout's blocks.
    pub fn to_vector(&self, layout: &Layout) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(layout.dim());
        for (b, range) in layout.blocks() {
            let v = self.block(b);
            if v.len() != range.len() {
                return Err(Error::Usage(format!(
                    "block {} has {} entries, layout expects {}",
                    b.name(),
                    v.len(),
                    range.len()
                )));
            }
            x.extend_from_slice(v);
        }
        Ok(x)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    /// Dimension of the factored matrix.
    pub dim: usize,
    pub nnz: usize,
    /// `||A x - b||`, relative to `||b||` unless `b = 0`.
    pub residual: f64,
}

/// `||A x - b|| / ||b||`, or the absolute residual when `b = 0`.
pub fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: Vec<f64> = ax.iter().zip(b).map(|(u, v)| u - v).collect();
    let nb = norm2(b);
    if nb == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / nb
    }
}

fn residual_ok(res: f64, b: &[f64]) -> bool {
    let tol = if norm2(b) == 0.0 {
        ABSOLUTE_RESIDUAL_TOL
    } else {
        RELATIVE_RESIDUAL_TOL
    };
    res < tol
}

/// Solves `A x = b` by sparse LU with partial pivoting.
pub fn lu_solve(a: &CsrMatrix, b: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Structural(format!(
            "{}x{} system with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if let Some(&r) = a.empty_rows().first() {
        return Err(Error::Numerical(format!(
            "structurally singular matrix: row {r} is empty"
        )));
    }
    if let Some(&c) = a.empty_cols().first() {
        return Err(Error::Numerical(format!(
            "structurally singular matrix: column {c} is empty"
        )));
    }
    if a.iter().any(|(_, _, v)| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "non-finite entries in the linear system".into(),
        ));
    }
    let triplets: Vec<Triplet<usize, usize, f64>> = a
        .iter()
        .map(|(row, col, val)| Triplet { row, col, val })
        .collect();
    let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::Structural(format!("sparse matrix creation failed: {e:?}")))?;
    let lu = m.sp_lu().map_err(|e| match e {
        faer::sparse::linalg::LuError::SymbolicSingular { index } => Error::Numerical(format!(
            "LU factorization found no pivot at step {index} of {n}"
        )),
        other => Error::Numerical(format!("LU factorization failed: {other:?}")),
    })?;
    let mut rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
    lu.solve_in_place_with_conj(Conj::No, rhs.as_mut());
    let x: Vec<f64> = (0..n).map(|i| rhs[(i, 0)]).collect();
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "LU solve produced a non-finite value at unknown {i}; numerically singular pivot"
        )));
    }
    let res = residual(a, &x, b);
    let stats = SolveStats {
        dim: n,
        nnz: a.nnz(),
        residual: res,
    };
    if !residual_ok(res, b) {
        return Err(Error::Numerical(format!(
            "LU solve residual {res:e} exceeds tolerance; matrix is numerically singular"
        )));
    }
    Ok((x, stats))
}

fn bundle_meta(asm: &Assembler) -> (TraceVariant, usize, Option<u32>) {
    (asm.spaces().variant, asm.spaces().k, asm.mesh().level())
}

pub fn solve_system(
    system: &LinearSystem,
    variant: TraceVariant,
    k: usize,
    level: Option<u32>,
) -> Result<(SolutionBundle, SolveStats)> {
    let (x, stats) = lu_solve(&system.matrix, &system.rhs)?;
    Ok((
        SolutionBundle::from_vector(&system.layout, &x, variant, k, level),
        stats,
    ))
}

pub fn solve_condensed_system(
    cond: &CondensedSystem,
    variant: TraceVariant,
    k: usize,
    level: Option<u32>,
) -> Result<(SolutionBundle, SolveStats)> {
    let (lambda, stats) = lu_solve(&cond.matrix, &cond.rhs)?;
    let x = cond.recover(&lambda);
    Ok((
        SolutionBundle::from_vector(&cond.full_layout, &x, variant, k, level),
        stats,
    ))
}

/// Assembles and solves the monolithic system for the problem's mode.
pub fn solve_monolithic(asm: &Assembler) -> Result<(SolutionBundle, SolveStats)> {
    let (v, k, l) = bundle_meta(asm);
    let system = match &asm.spec().mode {
        Mode::Control => asm.global()?,
        Mode::StateOnly { g } => asm.state_only(g)?,
    };
    solve_system(&system, v, k, l)
}

/// Condenses, solves the skeleton system and recovers the element unknowns.
pub fn solve_condensed(asm: &Assembler) -> Result<(SolutionBundle, SolveStats)> {
    let (v, k, l) = bundle_meta(asm);
    let cond = match &asm.spec().mode {
        Mode::Control => asm.condensed()?,
        Mode::StateOnly { g } => asm.condensed_state_only(g)?,
    };
    solve_condensed_system(&cond, v, k, l)
}
