use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    #[error("singular matrix (det = {det:e})")]
    SingularMatrix { det: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("reverse drift is not confining at t = {t}")]
    UnstableAtTime { t: f64 },

    #[error("degenerate rate: sigma_w2 / sigma2 equals beta ({0})")]
    DegenerateRate(f64),

    #[error("degenerate drift: D(t) = 0 at t = {t}")]
    DegenerateDrift { t: f64 },

    #[error("cgf argument outside domain: 1 + beta * chi = {0}")]
    CgfDomain(f64),

    #[error("no finite collapse time (alpha = {0})")]
    NoCollapse(f64),

    #[error("no speciation: {0}")]
    NoSpeciation(String),

    #[error("root not bracketed on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("transition kernel degenerate at t = {t}")]
    KernelDegenerate { t: f64 },

    #[error("label undefined: {0}")]
    UndefinedLabel(String),

    #[error("score evaluation failed at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}
