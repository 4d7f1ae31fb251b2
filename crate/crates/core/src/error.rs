use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot impute feature {index} ({name}): {reason}")]
    Imputation {
        index: usize,
        name: &'static str,
        reason: String,
    },
    #[error("value outside domain: {0}")]
    Domain(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("split failed: {0}")]
    Split(String),
    #[error("bad data: {0}")]
    Data(String),
    #[error("structural mismatch: {0}")]
    Structural(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("non-finite gradient in parameter block {block}")]
    Optimizer { block: usize },
    #[error("training diverged: {0}")]
    NonFinite(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("export error: {0}")]
    Export(String),
}
