//! Refinement studies built from the mesh, assembly, solver and error modules.

use std::ops::RangeInclusive;

use crate::assembly::Assembler;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::postproc::{error_against_exact, error_against_reference, ConvergenceTable, Discrete};
use crate::problems::ProblemSpec;
use crate::solver::{solve_condensed, SolutionBundle, SolveStats};
use crate::spaces::{build_spaces, Spaces, TraceVariant};

/// A solved discretization on one uniform level.
pub struct Discretization {
    pub mesh: Mesh,
    pub spaces: Spaces,
    pub bundle: SolutionBundle,
    pub stats: SolveStats,
}

impl Discretization {
    pub fn view(&self) -> Discrete<'_> {
        Discrete {
            mesh: &self.mesh,
            spaces: &self.spaces,
            bundle: &self.bundle,
        }
    }
}

/// Builds, condenses and solves `spec` on the uniform square at `level`.
pub fn solve_level(
    spec: &ProblemSpec,
    variant: TraceVariant,
    k: usize,
    level: u32,
    threads: usize,
) -> Result<Discretization> {
    let mesh = Mesh::build_uniform_square(level);
    let spaces = build_spaces(&mesh, variant, k)?;
    let (bundle, stats) =
        solve_condensed(&Assembler::new(&mesh, &spaces, spec)?.with_threads(threads))?;
    Ok(Discretization {
        mesh,
        spaces,
        bundle,
        stats,
    })
}

fn check_levels(levels: &RangeInclusive<u32>) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Config(format!(
            "empty level range {}..{}",
            levels.start(),
            levels.end()
        )));
    }
    Ok(())
}

fn sizes(levels: &RangeInclusive<u32>) -> (Vec<u32>, Vec<f64>) {
    let l: Vec<u32> = levels.clone().collect();
    let h = l
        .iter()
        .map(|&l| std::f64::consts::SQRT_2 / (1u64 << l) as f64)
        .collect();
    (l, h)
}

/// Errors of each level in `levels` against a solution on `reference_level`.
pub fn convergence_study(
    spec: &ProblemSpec,
    variant: TraceVariant,
    k: usize,
    levels: RangeInclusive<u32>,
    reference_level: u32,
    threads: usize,
) -> Result<ConvergenceTable> {
    check_levels(&levels)?;
    if reference_level <= *levels.end() {
        return Err(Error::Config(format!(
            "reference level {reference_level} must exceed the finest study level {}",
            levels.end()
        )));
    }
    let reference = solve_level(spec, variant, k, reference_level, threads)?;
    let mut errors = Vec::new();
    for level in levels.clone() {
        let coarse = solve_level(spec, variant, k, level, threads)?;
        errors.push(error_against_reference(coarse.view(), reference.view())?);
    }
    let (l, h) = sizes(&levels);
    ConvergenceTable::new(&l, &h, &errors)
}

/// Errors of `y` and `q` against the problem's exact state.
pub fn mms_study(
    spec: &ProblemSpec,
    variant: TraceVariant,
    k: usize,
    levels: RangeInclusive<u32>,
    threads: usize,
) -> Result<ConvergenceTable> {
    check_levels(&levels)?;
    let exact = spec
        .exact
        .as_ref()
        .ok_or_else(|| Error::Config(format!("problem `{}` has no exact solution", spec.name)))?;
    let mut errors = Vec::new();
    for level in levels.clone() {
        let d = solve_level(spec, variant, k, level, threads)?;
        errors.push(error_against_exact(d.view(), exact, spec.epsilon)?);
    }
    let (l, h) = sizes(&levels);
    ConvergenceTable::new(&l, &h, &errors)
}
