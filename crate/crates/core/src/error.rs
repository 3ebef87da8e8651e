use thiserror::Error;

/// Errors surfaced by the library. The CLI maps these onto exit codes:
/// data/format problems are distinguished from numeric failures.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },

    #[error("duplicate instance id `{id}` at manifest line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("image decode: {0}")]
    ImageDecode(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("layer `{0}` absent from network spec")]
    LayerAbsent(String),

    #[error("corpus contains a single class; pattern ranking needs both labels")]
    SingleClassCorpus,

    #[error("pattern list is empty")]
    EmptyPatterns,

    #[error("weight vector sums to zero")]
    ZeroWeightMass,

    #[error("target training weight mass is zero")]
    ZeroTargetMass,

    #[error("finetune_based initialization requires auxiliary probabilities")]
    MissingAuxProbs,

    #[error("ensemble has no members")]
    EmptyEnsemble,

    #[error(
        "boosting halted in round 1: the base learner's weighted error on the \
         target training set reached 0.5 (no weak-learner edge); train the base \
         learner longer or use the clamp policy"
    )]
    NoWeakLearnerEdge,

    #[error("k-means: {0}")]
    KMeans(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    TrainDiverged { epoch: usize, batch: usize },

    #[error("degenerate covariance matrix (not positive definite)")]
    DegenerateCovariance,

    #[error("boost iteration {iteration}: {source}")]
    BoostIteration {
        iteration: usize,
        #[source]
        source: Box<CoreError>,
    },

    #[error("{0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CoreError {
    /// True for failures of numeric origin (as opposed to malformed data).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            CoreError::TrainDiverged { .. }
                | CoreError::DegenerateCovariance
                | CoreError::ZeroWeightMass
                | CoreError::ZeroTargetMass
                | CoreError::NoWeakLearnerEdge
        ) || matches!(self, CoreError::BoostIteration { source, .. } if source.is_numeric())
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
