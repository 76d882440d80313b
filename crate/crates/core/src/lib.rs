//! Batch LDA topic modeling by belief propagation.
//!
//! The crate provides synchronous BP, residual BP (RBP) and active BP (ABP)
//! trainers over a sparse document-word count matrix, a collapsed Gibbs
//! sampler baseline, perplexity evaluation with a fold-in protocol, and the
//! residual diagnostics used to schedule active message passing.
//!
//! ```no_run
//! use abp_lda::corpus::generate_synthetic;
//! use abp_lda::trainer::{train, Algorithm, TrainerConfig};
//!
//! let synth = generate_synthetic(200, 100, 10, 50, 0.1, 0.05, 7).unwrap();
//! let cfg = TrainerConfig::new(10).algorithm(Algorithm::Abp).lambdas(0.2, 0.2);
//! let outcome = train(&synth.corpus, &cfg, |_| {}).unwrap();
//! println!("{}", outcome.trace.last().unwrap().train_perplexity.unwrap());
//! ```

// NaN must fail validation, so `!(x > 0.0)` is used on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod corpus;
pub mod dense;
pub mod eval;
pub mod model;
pub mod rng;
pub mod scheduler;
pub mod trainer;

pub use corpus::{Corpus, Vocabulary};
pub use dense::Dense;
pub use model::{MessageBoard, SufficientStats, TopicModel};
pub use trainer::{Algorithm, TrainerConfig};

use thiserror::Error;

/// Top-level error type; each module keeps its own error and converts here.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] corpus::ParseError),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Config(#[from] trainer::ConfigError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Scheduler(#[from] scheduler::ModeError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
