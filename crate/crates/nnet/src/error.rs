use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("empty data set: {0}")]
    Empty(&'static str),
    #[error("non-finite loss at epoch {epoch}: {loss}")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("unsupported model file version {0}")]
    Version(u32),
}
