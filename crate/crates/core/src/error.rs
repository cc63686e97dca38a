use crate::aggregation::AggregationError;
use crate::annotation::AnnotationError;
use crate::codec::CodecError;
use crate::corpus::CorpusError;
use crate::evaluation::EvalError;
use crate::experiment::ExperimentError;
use crate::pii::PiiError;

/// Any error produced by the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Pii(#[from] PiiError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

impl Error {
    /// True for errors caused by settings rather than by input data.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Corpus(e) => matches!(
                e,
                CorpusError::InvalidRatios(_) | CorpusError::UnknownLexicon(_) | CorpusError::MissingLexiconFile(_)
            ),
            Error::Pii(_) => false,
            Error::Codec(e) => matches!(
                e,
                CodecError::NonPositiveEpsilon(_)
                    | CodecError::InvalidDelta(_)
                    | CodecError::InvalidClipBound(_)
                    | CodecError::InvalidSensitivity(_)
                    | CodecError::InvalidDimension(_)
                    | CodecError::InvalidConfig(_)
            ),
            Error::Annotation(e) => {
                matches!(e, AnnotationError::TooFewWorkers { .. } | AnnotationError::InvalidWorker(_))
            }
            Error::Aggregation(e) => {
                matches!(e, AggregationError::InvalidConfig(_) | AggregationError::UnknownMethod(_))
            }
            Error::Eval(e) => matches!(e, EvalError::InvalidConfig(_)),
            Error::Experiment(e) => match e {
                ExperimentError::Config(_) | ExperimentError::ConfigIo { .. } | ExperimentError::OutputNotEmpty(_) => true,
                ExperimentError::Stage { source, .. } => source.is_config_error(),
                ExperimentError::Io { .. } => false,
            },
        }
    }

    /// Process exit status: 2 for configuration errors, 3 for data errors.
    pub fn exit_code(&self) -> i32 {
        if self.is_config_error() {
            2
        } else {
            3
        }
    }
}
