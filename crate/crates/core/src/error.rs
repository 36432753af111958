use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "point ({:e}, {:e}, {:e}) is {distance:e} m from charge {charge}, inside the exclusion radius {radius:e} m",
        point[0], point[1], point[2]
    )]
    Exclusion {
        point: [f64; 3],
        charge: usize,
        distance: f64,
        radius: f64,
    },

    #[error("{kind} backend has no closed-form derivatives")]
    Unsupported { kind: &'static str },

    #[error("ill-conditioned design for K={points}, L={order}: Gram condition number {condition:e}")]
    IllConditioned {
        points: usize,
        order: usize,
        condition: f64,
    },

    #[error("no continuous local frame at step {step}: up hint is parallel to the path tangent")]
    FrameDegenerate { step: usize },

    #[error("evaluation failed at well {well}, step {step}, electrode {electrode}: {source}")]
    Expansion {
        well: usize,
        step: usize,
        electrode: String,
        #[source]
        source: Box<Error>,
    },

    #[error("assembly failed at electrode {electrode}, step {step}: {reason}")]
    Assembly {
        electrode: usize,
        step: usize,
        reason: String,
    },

    #[error(
        "conjugate gradient stopped after {iterations} iterations at relative residual {residual:e} (condition estimate {condition:e})"
    )]
    NotConverged {
        iterations: usize,
        residual: f64,
        condition: f64,
    },

    #[error("{0}")]
    Singular(String),

    #[error("ion is {distance:e} m from the path, beyond the allowed {limit:e} m")]
    OutOfDomain { distance: f64, limit: f64 },

    #[error("time step {dt:e} s exceeds the stability limit {limit:e} s")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("cannot read {}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by configuration or input files rather than a
    /// failing numerical stage.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::File { .. } | Error::Json(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
