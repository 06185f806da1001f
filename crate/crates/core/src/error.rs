use crate::model::AdId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("auction log is empty")]
    EmptyLog,
    #[error("invalid auction record {auction_id}: {reason}")]
    InvalidRecord { auction_id: u64, reason: String },
    #[error("invalid campaign {campaign_id}: {reason}")]
    InvalidCampaign { campaign_id: String, reason: String },
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown AD {0}")]
    UnknownAd(AdId),
    #[error("stationarity needs at least two days of log")]
    SingleDayLog,
    #[error("day selection matches no day in the log")]
    NoDaysSelected,
    #[error("degenerate AD {ad}: {reason}")]
    DegenerateAd { ad: AdId, reason: &'static str },
    #[error("non-monotone {metric} for AD {ad} at alpha {alpha}")]
    NonMonotone { ad: AdId, alpha: f64, metric: &'static str },
    #[error("valuation grid is empty")]
    EmptyGrid,
    #[error("cost window [{window_lo}, {window_hi}] unreachable; achievable [{achievable_lo}, {achievable_hi}]")]
    InfeasibleWindow {
        window_lo: f64,
        window_hi: f64,
        achievable_lo: f64,
        achievable_hi: f64,
    },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Module that raised the error, as reported on the command line.
    pub fn module(&self) -> &'static str {
        match self {
            Error::EmptyLog | Error::InvalidRecord { .. } | Error::InvalidCampaign { .. } => {
                "core_model"
            }
            Error::Parse { .. } | Error::Json(_) | Error::Csv(_) | Error::Io(_) => "io",
            Error::InvalidConfig { .. } | Error::SingleDayLog => "log_synth",
            Error::InvalidArgument(_) => "cli",
            Error::UnknownAd(_) | Error::NoDaysSelected | Error::NonMonotone { .. } => {
                "replay_engine"
            }
            Error::DegenerateAd { .. } => "inference",
            Error::EmptyGrid | Error::InfeasibleWindow { .. } => "optimizers",
        }
    }

    /// Short machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyLog => "EmptyLog",
            Error::InvalidRecord { .. } => "InvalidRecord",
            Error::InvalidCampaign { .. } => "InvalidCampaign",
            Error::InvalidConfig { .. } => "InvalidConfig",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::UnknownAd(_) => "UnknownAd",
            Error::SingleDayLog => "SingleDayLog",
            Error::NoDaysSelected => "NoDaysSelected",
            Error::DegenerateAd { .. } => "DegenerateAd",
            Error::NonMonotone { .. } => "NonMonotone",
            Error::EmptyGrid => "EmptyGrid",
            Error::InfeasibleWindow { .. } => "InfeasibleWindow",
            Error::Parse { .. } => "ParseError",
            Error::Json(_) => "JsonError",
            Error::Csv(_) => "CsvError",
            Error::Io(_) => "IoError",
        }
    }
}
