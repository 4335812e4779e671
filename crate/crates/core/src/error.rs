use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    /// K-means produced fewer than K non-empty clusters at some step.
    #[error("k-means step {step} left cluster {cluster} empty")]
    Degenerate { step: usize, cluster: usize },

    /// Every cluster touched by the pair set is a singleton, so there are no
    /// within-cluster degrees of freedom.
    #[error("no within-cluster degrees of freedom for the touched clusters")]
    DegenerateWithin,

    /// The projection of the data onto the tested span (or the within-cluster
    /// residual) is exactly zero.
    #[error("zero norm projection: {0}")]
    ZeroProjection(&'static str),

    #[error("selection rule selected no cluster pair")]
    EmptySelection,

    #[error("truncation set has no probability mass")]
    ZeroMassSet,
}

impl Error {
    /// Errors that correspond to a not-available p-value rather than misuse.
    pub fn is_not_available(&self) -> bool {
        matches!(
            self,
            Error::Degenerate { .. }
                | Error::DegenerateWithin
                | Error::ZeroProjection(_)
                | Error::EmptySelection
                | Error::ZeroMassSet
        )
    }
}
