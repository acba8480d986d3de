use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid q = {0}: expected 0 < q < 1")]
    InvalidQ(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("parameter collision: {0}")]
    Collision(String),
    #[error("negative weight {weight} in {context}")]
    NegativeWeight { weight: f64, context: String },
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidQ(q))
    }
}
