//! Training loops: synchronous BP, residual BP, active BP and collapsed Gibbs.
//!
//! [`train`] drives any of the four algorithms for at most `max_iters`
//! iterations, probing training perplexity between sweeps and stopping once
//! two successive probes differ by less than the convergence threshold.

pub mod gibbs;
mod message;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::eval::{probe_perplexity, PerplexityProbe};
use crate::model::{MessageBoard, SufficientStats, TopicModel};
use crate::scheduler::{Ranking, ResidualLedger, SchedulingMode};

pub use gibbs::{GibbsState, GibbsTrainer};
pub use message::MessageTrainer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Bp,
    Rbp,
    Abp,
    Gs,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bp => "bp",
            Algorithm::Rbp => "rbp",
            Algorithm::Abp => "abp",
            Algorithm::Gs => "gs",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bp" => Ok(Algorithm::Bp),
            "rbp" => Ok(Algorithm::Rbp),
            "abp" => Ok(Algorithm::Abp),
            "gs" => Ok(Algorithm::Gs),
            other => Err(format!("unknown algorithm {other:?} (expected bp, rbp, abp or gs)")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("number of topics must be at least 1")]
    NoTopics,
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must lie in (0, 1], got {value}")]
    LambdaRange { name: &'static str, value: f64 },
    #[error("maximum iterations must be at least 1")]
    NoIterations,
    #[error("convergence threshold must be finite and non-negative, got {0}")]
    Threshold(f64),
    #[error("{0}")]
    Inapplicable(String),
    #[error("algorithm mismatch: expected {expected}, configuration selects {found}")]
    WrongAlgorithm { expected: &'static str, found: &'static str },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub num_topics: usize,
    /// `None` resolves to `2 / K`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub max_iters: usize,
    /// Fraction of documents (words in word mode) scanned per ABP iteration.
    pub lambda_d: f64,
    /// Fraction of topics searched per scanned unit.
    pub lambda_k: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Absolute perplexity change below which training stops; 0 disables.
    pub convergence_threshold: f64,
    pub scheduling_mode: SchedulingMode,
    pub ranking: Ranking,
    /// Probe interval in iterations; `None` probes every iteration up to
    /// 10^4 documents and every 10th iteration above.
    pub probe_every: Option<usize>,
    /// Full statistics resynchronization period for the asynchronous trainers.
    pub resync_every: usize,
}

impl TrainerConfig {
    pub fn new(num_topics: usize) -> Self {
        Self {
            num_topics,
            alpha: None,
            beta: 0.01,
            max_iters: 500,
            lambda_d: 0.2,
            lambda_k: 0.2,
            seed: 0,
            algorithm: Algorithm::Bp,
            convergence_threshold: 1.0,
            scheduling_mode: SchedulingMode::Document,
            ranking: Ranking::PartialSelect,
            probe_every: None,
            resync_every: 100,
        }
    }

    pub fn algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self
    }

    pub fn alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn lambdas(mut self, lambda_d: f64, lambda_k: f64) -> Self {
        self.lambda_d = lambda_d;
        self.lambda_k = lambda_k;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn threshold(mut self, threshold: f64) -> Self {
        self.convergence_threshold = threshold;
        self
    }

    pub fn scheduling(mut self, mode: SchedulingMode) -> Self {
        self.scheduling_mode = mode;
        self
    }

    pub fn ranking(mut self, ranking: Ranking) -> Self {
        self.ranking = ranking;
        self
    }

    pub fn probe_every(mut self, every: usize) -> Self {
        self.probe_every = Some(every);
        self
    }

    pub fn alpha_value(&self) -> f64 {
        self.alpha.unwrap_or(2.0 / self.num_topics.max(1) as f64)
    }

    pub fn probe_interval(&self, num_docs: usize) -> usize {
        self.probe_every
            .unwrap_or(if num_docs <= 10_000 { 1 } else { 10 })
            .max(1)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_topics == 0 {
            return Err(ConfigError::NoTopics);
        }
        for (name, value) in [("alpha", self.alpha_value()), ("beta", self.beta)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::NotPositive { name, value });
            }
        }
        for (name, value) in [("lambda_d", self.lambda_d), ("lambda_k", self.lambda_k)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(ConfigError::LambdaRange { name, value });
            }
        }
        if self.max_iters == 0 {
            return Err(ConfigError::NoIterations);
        }
        if !(self.convergence_threshold >= 0.0 && self.convergence_threshold.is_finite()) {
            return Err(ConfigError::Threshold(self.convergence_threshold));
        }
        if self.scheduling_mode == SchedulingMode::Word && self.algorithm != Algorithm::Abp {
            return Err(ConfigError::Inapplicable("word scheduling applies to abp only".into()));
        }
        if self.resync_every == 0 {
            return Err(ConfigError::Inapplicable("resync period must be at least 1".into()));
        }
        Ok(())
    }
}

/// `|prev - cur| < threshold`.
pub fn check_convergence(prev_perplexity: f64, cur_perplexity: f64, threshold: f64) -> bool {
    (prev_perplexity - cur_perplexity).abs() < threshold
}

/// One row of the training trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Sweep wall time, excluding the perplexity probe.
    pub wall_seconds: f64,
    pub train_perplexity: Option<f64>,
    /// Sum of document residuals (word residuals in word mode; reassigned
    /// tokens for Gibbs).
    pub total_residual: f64,
    /// Scheduling units (documents, or words in word mode) scanned.
    pub docs_scanned: usize,
    pub avg_topics_scanned: f64,
    pub entries_touched: usize,
    pub topic_updates: usize,
}

pub const TRACE_HEADER: &str = "iter,seconds,perplexity,total_residual,docs_scanned,avg_topics_scanned";

impl TraceRecord {
    pub fn csv_row(&self) -> String {
        let perplexity = self.train_perplexity.map(|p| p.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.iteration, self.wall_seconds, perplexity, self.total_residual, self.docs_scanned, self.avg_topics_scanned
        )
    }
}

pub fn write_trace_csv<W: Write>(records: &[TraceRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()
}

/// A trainer bound to one corpus, advanced one iteration at a time.
#[allow(clippy::large_enum_variant)]
pub enum Trainer<'c> {
    Message(MessageTrainer<'c>),
    Gibbs(GibbsTrainer<'c>),
}

impl<'c> Trainer<'c> {
    pub fn new(corpus: &'c Corpus, cfg: &TrainerConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(match cfg.algorithm {
            Algorithm::Gs => Trainer::Gibbs(GibbsTrainer::new(corpus, cfg.clone())),
            _ => Trainer::Message(MessageTrainer::new(corpus, cfg.clone())),
        })
    }

    /// Runs one sweep; the returned record carries no perplexity.
    pub fn step(&mut self) -> crate::Result<TraceRecord> {
        match self {
            Trainer::Message(t) => t.step(),
            Trainer::Gibbs(t) => Ok(t.step()),
        }
    }

    pub fn iteration(&self) -> usize {
        match self {
            Trainer::Message(t) => t.iteration(),
            Trainer::Gibbs(t) => t.iteration(),
        }
    }

    pub fn model(&self) -> TopicModel {
        match self {
            Trainer::Message(t) => t.model(),
            Trainer::Gibbs(t) => t.model(),
        }
    }

    pub fn probe(&self) -> PerplexityProbe {
        let model = self.model();
        probe_perplexity(self.corpus(), &model.theta, &model.phi)
    }

    pub fn corpus(&self) -> &'c Corpus {
        match self {
            Trainer::Message(t) => t.corpus(),
            Trainer::Gibbs(t) => t.corpus(),
        }
    }

    /// Document residuals of the latest sweeps, when the algorithm keeps them.
    pub fn doc_residuals(&self) -> Option<&[f64]> {
        match self {
            Trainer::Message(t) => Some(t.ledger().doc_res()),
            Trainer::Gibbs(_) => None,
        }
    }

    pub fn board(&self) -> Option<&MessageBoard> {
        match self {
            Trainer::Message(t) => Some(t.board()),
            Trainer::Gibbs(_) => None,
        }
    }

    pub fn stats(&self) -> Option<&SufficientStats> {
        match self {
            Trainer::Message(t) => Some(t.stats()),
            Trainer::Gibbs(_) => None,
        }
    }

    pub fn ledger(&self) -> Option<&ResidualLedger> {
        match self {
            Trainer::Message(t) => Some(t.ledger()),
            Trainer::Gibbs(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: TopicModel,
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
    /// Document residuals after the final sweep (BP family only).
    pub doc_residuals: Option<Vec<f64>>,
    /// Probe evaluations whose log argument hit the floor.
    pub floor_hits: usize,
}

impl TrainOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn final_perplexity(&self) -> Option<f64> {
        self.trace.iter().rev().find_map(|r| r.train_perplexity)
    }
}

/// Trains to `max_iters` or convergence, handing every record to `on_record`.
pub fn train<F: FnMut(&TraceRecord)>(corpus: &Corpus, cfg: &TrainerConfig, on_record: F) -> crate::Result<TrainOutcome> {
    let trainer = Trainer::new(corpus, cfg)?;
    drive(trainer, cfg, on_record)
}

/// Runs an already constructed trainer to completion.
pub fn drive<F: FnMut(&TraceRecord)>(mut trainer: Trainer<'_>, cfg: &TrainerConfig, mut on_record: F) -> crate::Result<TrainOutcome> {
    let every = cfg.probe_interval(trainer.corpus().num_docs());
    let mut trace = Vec::with_capacity(cfg.max_iters);
    let mut prev: Option<f64> = None;
    let mut converged = false;
    let mut floor_hits = 0;

    for t in 1..=cfg.max_iters {
        let mut record = trainer.step()?;
        if t % every == 0 || t == cfg.max_iters {
            let probe = trainer.probe();
            floor_hits += probe.floor_hits;
            record.train_perplexity = Some(probe.perplexity);
            if let Some(p) = prev {
                converged = check_convergence(p, probe.perplexity, cfg.convergence_threshold);
            }
            prev = Some(probe.perplexity);
        }
        on_record(&record);
        trace.push(record);
        if converged {
            break;
        }
    }

    Ok(TrainOutcome {
        model: trainer.model(),
        doc_residuals: trainer.doc_residuals().map(<[f64]>::to_vec),
        trace,
        converged,
        floor_hits,
    })
}

fn expect_algorithm(cfg: &TrainerConfig, expected: Algorithm) -> Result<(), ConfigError> {
    if cfg.algorithm == expected {
        Ok(())
    } else {
        Err(ConfigError::WrongAlgorithm {
            expected: expected.name(),
            found: cfg.algorithm.name(),
        })
    }
}

pub fn train_bp(corpus: &Corpus, cfg: &TrainerConfig) -> crate::Result<(TopicModel, Vec<TraceRecord>)> {
    expect_algorithm(cfg, Algorithm::Bp)?;
    train(corpus, cfg, |_| {}).map(|o| (o.model, o.trace))
}

pub fn train_rbp(corpus: &Corpus, cfg: &TrainerConfig) -> crate::Result<(TopicModel, Vec<TraceRecord>)> {
    expect_algorithm(cfg, Algorithm::Rbp)?;
    train(corpus, cfg, |_| {}).map(|o| (o.model, o.trace))
}

pub fn train_abp(corpus: &Corpus, cfg: &TrainerConfig) -> crate::Result<(TopicModel, Vec<TraceRecord>)> {
    expect_algorithm(cfg, Algorithm::Abp)?;
    train(corpus, cfg, |_| {}).map(|o| (o.model, o.trace))
}

pub fn train_gs(corpus: &Corpus, cfg: &TrainerConfig) -> crate::Result<(TopicModel, Vec<TraceRecord>)> {
    expect_algorithm(cfg, Algorithm::Gs)?;
    train(corpus, cfg, |_| {}).map(|o| (o.model, o.trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_is_absolute() {
        assert!(check_convergence(1000.0, 999.5, 1.0));
        assert!(!check_convergence(1000.0, 998.0, 1.0));
        assert!(check_convergence(1000.0, 1000.5, 1.0));
        assert!(!check_convergence(1000.0, 1000.0, 0.0));
    }

    #[test]
    fn defaults() {
        let cfg = TrainerConfig::new(100);
        assert!((cfg.alpha_value() - 0.02).abs() < 1e-15);
        assert_eq!(cfg.beta, 0.01);
        assert_eq!(cfg.max_iters, 500);
        assert_eq!(cfg.convergence_threshold, 1.0);
        assert_eq!(cfg.probe_interval(10_000), 1);
        assert_eq!(cfg.probe_interval(10_001), 10);
    }

    #[test]
    fn validation() {
        assert_eq!(TrainerConfig::new(0).validate(), Err(ConfigError::NoTopics));
        assert!(matches!(
            TrainerConfig::new(2).lambdas(0.0, 0.5).validate(),
            Err(ConfigError::LambdaRange { name: "lambda_d", .. })
        ));
        assert!(TrainerConfig::new(2).lambdas(1.0, 1.1).validate().is_err());
        assert!(TrainerConfig::new(2).beta(0.0).validate().is_err());
        assert!(TrainerConfig::new(2).alpha(-1.0).validate().is_err());
        assert!(TrainerConfig::new(2).iters(0).validate().is_err());
        assert!(TrainerConfig::new(2).scheduling(SchedulingMode::Word).validate().is_err());
        assert!(TrainerConfig::new(2)
            .algorithm(Algorithm::Abp)
            .scheduling(SchedulingMode::Word)
            .validate()
            .is_ok());
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in [Algorithm::Bp, Algorithm::Rbp, Algorithm::Abp, Algorithm::Gs] {
            assert_eq!(a.name().parse::<Algorithm>(), Ok(a));
        }
        assert!("vb".parse::<Algorithm>().is_err());
    }

    #[test]
    fn trace_row_leaves_perplexity_blank() {
        let r = TraceRecord {
            iteration: 3,
            wall_seconds: 0.5,
            train_perplexity: None,
            total_residual: 2.0,
            docs_scanned: 4,
            avg_topics_scanned: 1.5,
            entries_touched: 0,
            topic_updates: 0,
        };
        assert_eq!(r.csv_row(), "3,0.5,,2,4,1.5");
    }

    #[test]
    fn wrong_algorithm_is_rejected() {
        let c = Corpus::from_documents(2, vec![vec![(0, 1)]]).unwrap();
        let cfg = TrainerConfig::new(2).algorithm(Algorithm::Rbp);
        assert!(train_bp(&c, &cfg).is_err());
    }
}
