use alloc::boxed::Box;
use alloc::string::String;

/// Errors raised by the segmentation and scoring pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A precondition on the arguments was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A basis function produced a non-finite value.
    #[error("observable `{function}` evaluated to a non-finite value{}", fmt_sample(*.sample))]
    NonFinite {
        function: String,
        sample: Option<usize>,
    },

    /// Clustering labelled every operator as noise.
    #[error("no behaviors found: every operator was labelled noise")]
    NoBehaviors,

    /// A statistic is undefined for the given data (zero variance).
    #[error("degenerate result: {0}")]
    Degenerate(String),

    /// The simulator produced a non-finite state.
    #[error("simulation fault at step {step}{}", fmt_trial(*.trial))]
    SimulationFault { trial: Option<u32>, step: usize },

    /// An error raised inside a named pipeline stage.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

fn fmt_sample(sample: Option<usize>) -> String {
    match sample {
        Some(i) => alloc::format!(" at sample {i}"),
        None => String::new(),
    }
}

fn fmt_trial(trial: Option<u32>) -> String {
    match trial {
        Some(t) => alloc::format!(" in trial {t}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Wraps `self` with the name of the stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
