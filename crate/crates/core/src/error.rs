use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("grid needs at least {min} nodes, got {n}")]
    GridTooSmall { n: usize, min: usize },
    #[error("density is not positive at node {index} (sigma = {sigma}, value = {value})")]
    NonPositiveDensity {
        index: usize,
        sigma: f64,
        value: f64,
    },
    #[error("non-finite sample in {0}")]
    NonFinite(&'static str),
    #[error("Ricci potential normalization residual {residual:e} above tolerance")]
    NormalizationResidual { residual: f64 },
    #[error("sample length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("profile samples invalid: {0}")]
    InvalidProfile(String),
}
