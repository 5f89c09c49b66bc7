use thiserror::Error;

/// Errors raised anywhere in the discretization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Mesh or dof-map connectivity that violates a structural invariant.
    #[error("structural error: {0}")]
    Structural(String),

    /// A query outside the domain of definition (point outside mesh, nonpositive error, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A requested degree or quadrature exactness that is not implemented.
    #[error("unsupported: {0}")]
    Capability(String),

    /// Bad problem data, e.g. a nonpositive stabilization value.
    #[error("configuration error: {0}")]
    Config(String),

    /// Unknown catalog name.
    #[error("unknown problem `{0}`")]
    Lookup(String),

    /// Inputs that do not belong together (e.g. non-nested meshes).
    #[error("usage error: {0}")]
    Usage(String),

    /// Singular element block or failed factorization.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
