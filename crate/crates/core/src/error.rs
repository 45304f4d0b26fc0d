use thiserror::Error;

/// Errors raised by the operator, channel, zonoid and protocol routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },
    #[error("Kraus set is not trace preserving (completeness defect {defect:.3e})")]
    NotTracePreserving { defect: f64 },
    #[error("operator is not in the span of the basis (residual {residual:.3e})")]
    NotInSpan { residual: f64 },
    #[error("operator mixes Kraus operators of different CP maps (cross-block weight {defect:.3e})")]
    BlockMixing { defect: f64 },
    #[error("parameter out of range: {0}")]
    Range(String),
}

pub type Result<T> = std::result::Result<T, Error>;
