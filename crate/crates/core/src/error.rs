use thiserror::Error;

use crate::gateway::TemplateId;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("label is empty")]
    EmptyLabel,
    #[error("label {0:?} has a platform prefix but no intent")]
    EmptyIntent(String),
    #[error("unknown method {0:?} (expected cot, e2e, decomposed or decomposed-latency-opt)")]
    UnknownMethod(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("bounding box {0:?} does not intersect the image")]
    DisjointBox(crate::model::Rect),
    #[error("image is {width}x{height}, smaller than the downsizing factor {factor}")]
    TooSmall { width: u32, height: u32, factor: u32 },
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("episode {episode}: {message}")]
    Episode { episode: String, message: String },
    #[error("cleaning label for {trajectory}: {source}")]
    Cleaning {
        trajectory: String,
        #[source]
        source: Box<GatewayError>,
    },
    #[error("cleaning label for {0}: backend returned an empty label")]
    EmptyCleanedLabel(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("template {template}: unbound placeholder {{{name}}}")]
    UnboundPlaceholder { template: TemplateId, name: String },
    #[error("template {template} does not accept images")]
    ImagesNotAllowed { template: TemplateId },
    #[error("template {template}: {markers} image markers but {images} images")]
    ImageCountMismatch {
        template: TemplateId,
        markers: usize,
        images: usize,
    },
    #[error("template {template}: {message}")]
    Template { template: TemplateId, message: String },
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("{template} call for {context} failed after {attempts} attempt(s): {message}")]
    Backend {
        template: TemplateId,
        context: String,
        attempts: u32,
        message: String,
    },
}

impl GatewayError {
    /// True for errors detected before any network call.
    pub fn is_configuration(&self) -> bool {
        !matches!(self, GatewayError::Backend { .. })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("step {index} out of range for trajectory of {len} steps")]
    StepOutOfRange { index: usize, len: usize },
    #[error("{0}")]
    InvalidInput(String),
    #[error("backend returned an empty intent")]
    EmptyIntent,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no facts across the whole dataset")]
    NoFacts,
    #[error("no alignments to average")]
    Empty,
    #[error("method {0} is not supported for the error funnel; run the decomposed method")]
    UnsupportedMethod(crate::model::Method),
    #[error("trace {0} has no summaries")]
    NoSummaries(String),
    #[error("trace {0} has no predicted intent")]
    NoPrediction(String),
    #[error("entailment probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("entailment backend: {0}")]
    Nli(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("judge cache {path}: {message}")]
    Cache { path: String, message: String },
}

#[derive(Debug, Error)]
pub enum CostError {
    #[error("trace has no calls")]
    EmptyTrace,
    #[error("calls missing token counts: {0:?}")]
    MissingTokens(Vec<String>),
    #[error("malformed shape spec: {0}")]
    Shape(String),
    #[error("invalid model parameters: {0}")]
    Model(String),
}
