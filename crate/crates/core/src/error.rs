use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("catalog: {0}")]
    Catalog(String),
    #[error("frame: {0}")]
    Frame(String),
    #[error("design: {0}")]
    Design(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("stratum {0} has no returns")]
    MissingStratum(u32),
    #[error("district {0} has no votes for any candidacy")]
    DegenerateDistrict(u32),
    #[error("no valid votes: shares are undefined")]
    NoValidVotes,
    #[error("no party reaches the threshold: {0} proportional seats cannot be assigned")]
    NoQualifyingParties(u32),
    #[error("no stratum has sample data")]
    NoData,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
