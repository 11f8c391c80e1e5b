use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Which side of the bipartite graph an embedding row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Entity {
    User(usize),
    Item(usize),
}

impl std::fmt::Display for Entity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Entity::User(u) => write!(f, "user {u}"),
            Entity::Item(i) => write!(f, "item {i}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sampling failed for user {user}: {message}")]
    Sampling { user: usize, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate embedding ({}): norm {norm:e} is below 1e-12 or not finite", describe(.entity))]
    DegenerateVector { entity: Option<Entity>, norm: f64 },

    #[error("non-finite value for {entity}: {context}")]
    NonFinite { entity: Entity, context: String },

    #[error("training aborted at epoch {epoch}, step {step}: {source}")]
    TrainingAborted {
        epoch: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("nothing to evaluate: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn describe(entity: &Option<Entity>) -> String {
    entity.map_or_else(|| "unnamed vector".to_string(), |e| e.to_string())
}
