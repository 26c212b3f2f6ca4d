use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rate function: {0}")]
    InvalidRate(String),

    #[error("invalid offspring law: {0}")]
    InvalidOffspring(String),

    #[error("negative age {0} is outside the domain")]
    NegativeAge(f64),

    #[error(
        "Malthus root not bracketed: residual {residual_lo:.3e} at lambda={lo}, {residual_hi:.3e} at lambda={hi}"
    )]
    MalthusBracket {
        lo: f64,
        hi: f64,
        residual_lo: f64,
        residual_hi: f64,
    },

    #[error("population cap exceeded: {nodes} nodes at horizon T={horizon} (lambda_B={lambda})")]
    PopulationCap {
        horizon: f64,
        nodes: usize,
        lambda: String,
    },

    #[error("empty sample: {0}")]
    EmptySample(&'static str),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("degenerate offspring estimate m_hat={0}")]
    DegenerateOffspring(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
