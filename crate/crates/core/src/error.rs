use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("invalid record: {0}")]
    Invalid(String),

    #[error("video id mismatch: {0} vs {1}")]
    VideoMismatch(String, String),

    #[error("external scorer failed for video {video_id}, prediction {pred_obs}, gt track {gt_track}: {reason}")]
    ExternalScore {
        video_id: String,
        pred_obs: usize,
        gt_track: u32,
        reason: String,
    },

    #[error("caption scorer: {0}")]
    Scorer(String),

    #[error(transparent)]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
