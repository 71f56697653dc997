use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Tensor(#[from] phaedra_tensor::TensorError),

    #[error("field data length {got} does not match shape product {expected}")]
    FieldShape { expected: usize, got: usize },

    #[error("field contains non-finite values")]
    NonFiniteField,

    #[error("invalid normalization statistics (sigma_g = {sigma_g})")]
    InvalidStats { sigma_g: f64 },

    #[error("quantizer levels must all be >= 2, got {0:?}")]
    InvalidLevels(Vec<u32>),

    #[error("quantizer scale must be positive and finite, got {0}")]
    InvalidScale(f64),

    #[error("latent has {got} channels, quantizer expects {expected}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("code position {position} out of range for level {level} (channel {channel})")]
    CodeOutOfRange { channel: usize, position: u32, level: u32 },

    #[error("token index {index} out of range for codebook of size {codebook}")]
    IndexOutOfRange { index: u64, codebook: u64 },

    #[error("codebook is empty")]
    EmptyCodebook,

    #[error("codebook entry width {entry} does not match latent width {latent}")]
    CodebookWidth { entry: usize, latent: usize },

    #[error("non-finite quantizer input")]
    NonFiniteLatent,

    #[error("{0}")]
    Config(String),

    #[error("input resolution {resolution} not divisible by downsampling factor {factor}")]
    Resolution { resolution: usize, factor: usize },

    #[error("field is not normalized; encode requires normalized inputs")]
    NotNormalized,

    #[error("token streams do not match the model variant: {0}")]
    StreamMismatch(String),

    #[error("metric input shapes differ: {0}")]
    MetricShape(String),

    #[error("sigma_g must be positive, got {0}")]
    NonPositiveSigma(f64),

    #[error("field {h}x{w} is smaller than the {window}x{window} sliding window")]
    WindowTooLarge { h: usize, w: usize, window: usize },

    #[error("spectral batch is empty")]
    EmptyBatch,

    #[error("degenerate all-zero spectrum")]
    DegenerateSpectrum,

    #[error("token histogram is empty")]
    EmptyHistogram,

    #[error("vocabulary of size {0} is too small for redundancy")]
    VocabTooSmall(u64),

    #[error("generator parameters invalid: {0}")]
    Generator(String),

    #[error("dataset split is empty")]
    EmptySplit,

    #[error("training split has zero variance; sigma_g undefined")]
    ZeroVariance,

    #[error("NaN loss at step {step}; aborting")]
    NanLoss { step: usize },

    #[error("NaN gradient for parameter {name}; aborting step {step}")]
    NanGrad { name: String, step: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {detail}")]
    Malformed { path: String, detail: String },

    #[error("bad token file magic (expected \"PHTK\")")]
    BadMagic,

    #[error("unsupported token format version {0}")]
    BadVersion(u32),

    #[error("checkpoint does not match: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CoreError::Io { path: path.into(), source }
    }
}
