//! Degree-of-freedom maps for the flux, scalar, interior-trace and control spaces.
//!
//! Fluxes and scalars are fully discontinuous. Trace spaces use the Lagrange
//! edge basis of degree `k + 1`; a continuous trace space shares the endpoint
//! dofs of all its edges meeting at a vertex, a discontinuous one gives every
//! edge its own copy. The variants differ only in which trace spaces are
//! continuous:
//!
//! | variant | interior traces | control |
//! |---------|-----------------|---------|
//! | EDG     | continuous      | continuous |
//! | IEDG    | continuous      | edgewise   |
//! | HDG     | edgewise        | edgewise   |
//!
//! Interior-trace and control dofs never coincide, even at boundary vertices.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::basis::simplex_dim;
use crate::error::{Error, Result};
use crate::mesh::{EdgeKind, Mesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TraceVariant {
    #[serde(rename = "edg")]
    Edg,
    #[serde(rename = "iedg")]
    Iedg,
    #[serde(rename = "hdg")]
    Hdg,
}

impl TraceVariant {
    pub const ALL: [TraceVariant; 3] = [TraceVariant::Edg, TraceVariant::Iedg, TraceVariant::Hdg];

    pub fn as_str(self) -> &'static str {
        match self {
            TraceVariant::Edg => "edg",
            TraceVariant::Iedg => "iedg",
            TraceVariant::Hdg => "hdg",
        }
    }

    fn interior_continuous(self) -> bool {
        !matches!(self, TraceVariant::Hdg)
    }

    fn boundary_continuous(self) -> bool {
        matches!(self, TraceVariant::Edg)
    }
}

impl fmt::Display for TraceVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TraceVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "edg" => Ok(TraceVariant::Edg),
            "iedg" => Ok(TraceVariant::Iedg),
            "hdg" => Ok(TraceVariant::Hdg),
            other => Err(Error::Config(format!(
                "unknown method `{other}` (expected edg, iedg or hdg)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceKind {
    /// Vector flux, `[P^k]^2` per element.
    Flux,
    /// Scalar, `P^{k+1}` per element.
    Scalar,
    /// Trace on interior edges.
    InteriorTrace,
    /// Control on boundary edges.
    Control,
}

/// Entity-to-global map. Entities are triangles for element spaces and edges
/// for trace spaces; edges outside a trace space have no dofs.
#[derive(Clone, Debug)]
pub struct DofMap {
    kind: SpaceKind,
    entity_dofs: Vec<Vec<usize>>,
    dim: usize,
}

impl DofMap {
    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dofs(&self, entity: usize) -> &[usize] {
        &self.entity_dofs[entity]
    }

    pub fn num_entities(&self) -> usize {
        self.entity_dofs.len()
    }

    fn element(kind: SpaceKind, num_triangles: usize, per: usize) -> Self {
        let entity_dofs = (0..num_triangles)
            .map(|t| (t * per..(t + 1) * per).collect())
            .collect();
        Self {
            kind,
            entity_dofs,
            dim: num_triangles * per,
        }
    }

    fn trace(
        kind: SpaceKind,
        mesh: &Mesh,
        edge_kind: EdgeKind,
        degree: usize,
        continuous: bool,
    ) -> Self {
        let mut next = 0usize;
        let mut vertex_dof = vec![usize::MAX; mesh.num_vertices()];
        let mut entity_dofs = vec![Vec::new(); mesh.num_edges()];
        for (id, e) in mesh.edges().iter().enumerate() {
            if e.kind != edge_kind {
                continue;
            }
            let mut fresh = || {
                next += 1;
                next - 1
            };
            let mut dofs = Vec::with_capacity(degree + 1);
            for node in 0..=degree {
                let at_vertex = match node {
                    0 => Some(e.vertices[0]),
                    n if n == degree => Some(e.vertices[1]),
                    _ => None,
                };
                let dof = match at_vertex {
                    Some(v) if continuous => {
                        if vertex_dof[v] == usize::MAX {
                            vertex_dof[v] = fresh();
                        }
                        vertex_dof[v]
                    }
                    _ => fresh(),
                };
                dofs.push(dof);
            }
            entity_dofs[id] = dofs;
        }
        Self {
            kind,
            entity_dofs,
            dim: next,
        }
    }
}

/// The four discrete spaces of one discretization.
#[derive(Clone, Debug)]
pub struct Spaces {
    pub variant: TraceVariant,
    pub k: usize,
    pub flux: DofMap,
    pub scalar: DofMap,
    pub interior_trace: DofMap,
    pub control: DofMap,
    level: Option<u32>,
}

pub const MAX_K: usize = 2;

pub fn build_spaces(mesh: &Mesh, variant: TraceVariant, k: usize) -> Result<Spaces> {
    if k > MAX_K {
        return Err(Error::Capability(format!(
            "polynomial degree k = {k} not supported (k <= {MAX_K})"
        )));
    }
    let t = mesh.num_triangles();
    Ok(Spaces {
        variant,
        k,
        flux: DofMap::element(SpaceKind::Flux, t, 2 * simplex_dim(k)),
        scalar: DofMap::element(SpaceKind::Scalar, t, simplex_dim(k + 1)),
        interior_trace: DofMap::trace(
            SpaceKind::InteriorTrace,
            mesh,
            EdgeKind::Interior,
            k + 1,
            variant.interior_continuous(),
        ),
        control: DofMap::trace(
            SpaceKind::Control,
            mesh,
            EdgeKind::Boundary,
            k + 1,
            variant.boundary_continuous(),
        ),
        level: mesh.level(),
    })
}

impl Spaces {
    /// Flux components per element (`dim P^k`).
    pub fn n_flux(&self) -> usize {
        simplex_dim(self.k)
    }

    /// Scalar dofs per element (`dim P^{k+1}`).
    pub fn n_scalar(&self) -> usize {
        simplex_dim(self.k + 1)
    }

    /// Trace dofs per edge (`k + 2`).
    pub fn n_edge(&self) -> usize {
        self.k + 2
    }

    pub fn report(&self) -> DofReport {
        dof_report(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DofReport {
    pub variant: TraceVariant,
    pub k: usize,
    pub level: Option<u32>,
    #[serde(rename = "dim_V")]
    pub dim_v: usize,
    #[serde(rename = "dim_W")]
    pub dim_w: usize,
    #[serde(rename = "dim_Mo")]
    pub dim_mo: usize,
    #[serde(rename = "dim_Mbnd")]
    pub dim_mbnd: usize,
    pub monolithic: usize,
    pub condensed: usize,
}

pub fn dof_report(spaces: &Spaces) -> DofReport {
    let (v, w, mo, mb) = (
        spaces.flux.dim(),
        spaces.scalar.dim(),
        spaces.interior_trace.dim(),
        spaces.control.dim(),
    );
    DofReport {
        variant: spaces.variant,
        k: spaces.k,
        level: spaces.level,
        dim_v: v,
        dim_w: w,
        dim_mo: mo,
        dim_mbnd: mb,
        monolithic: 2 * v + 2 * w + 2 * mo + mb,
        condensed: 2 * mo + mb,
    }
}
