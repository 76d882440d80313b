//! Training and predictive perplexity, and the Zipf residual diagnostic.

use std::io::{self, Write};

use rand::Rng;
use thiserror::Error;

use crate::corpus::{split_within_documents, Corpus};
use crate::dense::Dense;
use crate::model::{estimate_theta_from, normalize_full, TopicModel};
use crate::rng::{stream_rng, Stream};
use crate::trainer::{self, Algorithm, TrainerConfig};

/// Inner products below this are clamped before taking the logarithm in probes.
pub const LOG_FLOOR: f64 = 1e-300;

/// Default number of fold-in iterations.
pub const FOLD_IN_ITERS: usize = 500;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("non-positive likelihood sum_k theta*phi for document {doc}, word {word}")]
    NonPositiveLikelihood { doc: usize, word: usize },
    #[error("held-out part is empty")]
    EmptyHeldOut,
    #[error("zipf fit needs at least 2 positive residuals, found {positive}")]
    InsufficientData { positive: usize },
    #[error("dimension mismatch: model has {model} {what}, corpus has {corpus}")]
    DimensionMismatch { what: &'static str, model: usize, corpus: usize },
}

#[inline]
fn inner(theta: &[f64], phi: &[f64]) -> f64 {
    theta.iter().zip(phi).map(|(t, p)| t * p).sum()
}

fn check_dims(corpus: &Corpus, theta: &Dense, phi: &Dense) -> Result<(), EvalError> {
    if theta.rows() != corpus.num_docs() {
        return Err(EvalError::DimensionMismatch {
            what: "documents",
            model: theta.rows(),
            corpus: corpus.num_docs(),
        });
    }
    if phi.rows() != corpus.num_words() {
        return Err(EvalError::DimensionMismatch {
            what: "words",
            model: phi.rows(),
            corpus: corpus.num_words(),
        });
    }
    Ok(())
}

/// `exp(-sum x log(sum_k theta_d(k) phi_w(k)) / sum x)`. `theta` is D x K
/// and `phi` is W x K.
pub fn training_perplexity(corpus: &Corpus, theta: &Dense, phi: &Dense) -> Result<f64, EvalError> {
    check_dims(corpus, theta, phi)?;
    let mut loglik = 0.0;
    for e in corpus.entries() {
        let p = inner(theta.row(e.doc), phi.row(e.word));
        if !(p > 0.0) {
            return Err(EvalError::NonPositiveLikelihood { doc: e.doc, word: e.word });
        }
        loglik += f64::from(e.count) * p.ln();
    }
    Ok((-loglik / corpus.token_total() as f64).exp())
}

/// Perplexity with the logarithm guarded by [`LOG_FLOOR`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerplexityProbe {
    pub perplexity: f64,
    /// Entries whose inner product fell below the floor.
    pub floor_hits: usize,
}

pub fn probe_perplexity(corpus: &Corpus, theta: &Dense, phi: &Dense) -> PerplexityProbe {
    let mut loglik = 0.0;
    let mut floor_hits = 0;
    for e in corpus.entries() {
        let mut p = inner(theta.row(e.doc), phi.row(e.word));
        if !(p >= LOG_FLOOR) {
            p = LOG_FLOOR;
            floor_hits += 1;
        }
        loglik += f64::from(e.count) * p.ln();
    }
    PerplexityProbe {
        perplexity: (-loglik / corpus.token_total().max(1) as f64).exp(),
        floor_hits,
    }
}

/// How document proportions are inferred for unseen documents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FoldInMethod {
    /// Synchronous message passing with phi frozen.
    Bp,
    /// Collapsed Gibbs sampling with phi frozen.
    Gibbs,
}

impl FoldInMethod {
    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::Gs => FoldInMethod::Gibbs,
            Algorithm::Bp | Algorithm::Rbp | Algorithm::Abp => FoldInMethod::Bp,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FoldIn {
    /// D x K proportions of the folded-in documents.
    pub theta: Dense,
    /// `r_d` of the final fold-in iteration (token reassignments for Gibbs).
    pub doc_residuals: Vec<f64>,
}

/// Estimates theta for `corpus` with `phi` (W x K) held fixed.
pub fn fold_in(corpus: &Corpus, phi: &Dense, alpha: f64, method: FoldInMethod, iters: usize, seed: u64) -> FoldIn {
    match method {
        FoldInMethod::Bp => fold_in_bp(corpus, phi, alpha, iters, seed),
        FoldInMethod::Gibbs => fold_in_gibbs(corpus, phi, alpha, iters, seed),
    }
}

/// Message update with the word-side terms replaced by phi:
/// `mu(k) ~ (mu_{-w,d}(k) + alpha) * phi_w(k)`. Documents are independent.
fn fold_in_bp(corpus: &Corpus, phi: &Dense, alpha: f64, iters: usize, seed: u64) -> FoldIn {
    let k = phi.cols();
    let mut rng = stream_rng(seed, Stream::FoldInInit);
    let mut doc_topic = Dense::zeros(corpus.num_docs(), k);
    let mut doc_residuals = vec![0.0; corpus.num_docs()];
    let mut messages: Vec<f64> = Vec::new();
    let mut next_mass = vec![0.0; k];
    let mut raw = vec![0.0; k];

    #[allow(clippy::needless_range_loop)]
    for d in 0..corpus.num_docs() {
        let entries: Vec<(usize, u32)> = corpus.doc(d).collect();
        messages.clear();
        messages.resize(entries.len() * k, 0.0);
        let mass = doc_topic.row_mut(d);
        for (msg, &(_, x)) in messages.chunks_exact_mut(k).zip(&entries) {
            msg.iter_mut().for_each(|v| *v = 1.0 - rng.random::<f64>());
            normalize_full(msg).expect("positive init");
            for (m, v) in mass.iter_mut().zip(msg.iter()) {
                *m += f64::from(x) * v;
            }
        }
        for _ in 0..iters {
            next_mass.iter_mut().for_each(|v| *v = 0.0);
            let mut residual = 0.0;
            for (msg, &(w, x)) in messages.chunks_exact_mut(k).zip(&entries) {
                let x = f64::from(x);
                let phi_w = phi.row(w);
                for t in 0..k {
                    raw[t] = ((mass[t] - x * msg[t]).max(0.0) + alpha) * phi_w[t];
                }
                normalize_full(&mut raw).expect("alpha > 0 and phi > 0");
                for t in 0..k {
                    residual += x * (raw[t] - msg[t]).abs();
                    next_mass[t] += x * raw[t];
                }
                msg.copy_from_slice(&raw);
            }
            mass.copy_from_slice(&next_mass);
            doc_residuals[d] = residual;
        }
    }
    FoldIn {
        theta: estimate_theta_from(&doc_topic, alpha),
        doc_residuals,
    }
}

fn fold_in_gibbs(corpus: &Corpus, phi: &Dense, alpha: f64, iters: usize, seed: u64) -> FoldIn {
    let k = phi.cols();
    let mut rng = stream_rng(seed, Stream::FoldInInit);
    let mut counts = Dense::zeros(corpus.num_docs(), k);
    let mut doc_residuals = vec![0.0; corpus.num_docs()];
    let mut weights = vec![0.0; k];
    let mut z: Vec<usize> = Vec::new();

    #[allow(clippy::needless_range_loop)]
    for d in 0..corpus.num_docs() {
        let tokens: Vec<usize> = corpus
            .doc(d)
            .flat_map(|(w, c)| std::iter::repeat_n(w, c as usize))
            .collect();
        let n_dk = counts.row_mut(d);
        z.clear();
        for _ in &tokens {
            let t = rng.random_range(0..k);
            z.push(t);
            n_dk[t] += 1.0;
        }
        for _ in 0..iters {
            let mut moved = 0.0;
            for (i, &w) in tokens.iter().enumerate() {
                n_dk[z[i]] -= 1.0;
                for t in 0..k {
                    weights[t] = (n_dk[t] + alpha) * phi[(w, t)];
                }
                let t = crate::trainer::gibbs::draw(&weights, &mut rng);
                if t != z[i] {
                    moved += 1.0;
                }
                z[i] = t;
                n_dk[t] += 1.0;
            }
            doc_residuals[d] = moved;
        }
    }
    FoldIn {
        theta: estimate_theta_from(&counts, alpha),
        doc_residuals,
    }
}

/// Outcome of the held-out evaluation protocol.
#[derive(Clone, Debug)]
pub struct Predictive {
    pub perplexity: f64,
    /// Perplexity of the fold-in estimate on the held-in part itself.
    pub held_in_perplexity: f64,
    pub fold_in: FoldIn,
}

/// Splits every test document into held-in / held-out parts, folds in theta on
/// the held-in part with `phi` fixed and evaluates on the held-out counts.
pub fn predictive_perplexity_with_phi(
    phi: &Dense,
    alpha: f64,
    test: &Corpus,
    fold_in_fraction: f64,
    method: FoldInMethod,
    iters: usize,
    seed: u64,
) -> crate::Result<Predictive> {
    if phi.rows() != test.num_words() {
        return Err(EvalError::DimensionMismatch {
            what: "words",
            model: phi.rows(),
            corpus: test.num_words(),
        }
        .into());
    }
    let split = split_within_documents(test, fold_in_fraction, seed)?;
    if split.held_out.token_total() == 0 {
        return Err(EvalError::EmptyHeldOut.into());
    }
    let folded = fold_in(&split.held_in, phi, alpha, method, iters, seed);
    let perplexity = training_perplexity(&split.held_out, &folded.theta, phi)?;
    let held_in_perplexity = training_perplexity(&split.held_in, &folded.theta, phi)?;
    Ok(Predictive {
        perplexity,
        held_in_perplexity,
        fold_in: folded,
    })
}

/// Trains on `train` with `cfg`, then runs the fold-in protocol on `test`
/// with the same algorithm family and [`FOLD_IN_ITERS`] iterations.
pub fn predictive_perplexity(train: &Corpus, test: &Corpus, cfg: &TrainerConfig, fold_in_fraction: f64) -> crate::Result<f64> {
    if train.num_words() != test.num_words() {
        return Err(EvalError::DimensionMismatch {
            what: "words",
            model: train.num_words(),
            corpus: test.num_words(),
        }
        .into());
    }
    let outcome = trainer::train(train, cfg, |_| {})?;
    let predictive = predictive_perplexity_with_phi(
        &outcome.model.phi,
        cfg.alpha_value(),
        test,
        fold_in_fraction,
        FoldInMethod::for_algorithm(cfg.algorithm),
        FOLD_IN_ITERS,
        cfg.seed,
    )?;
    Ok(predictive.perplexity)
}

/// Log-log least squares of document residuals against their rank.
#[derive(Clone, Debug, PartialEq)]
pub struct ZipfReport {
    /// All residuals, descending.
    pub sorted_residuals: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Share of the total held by the top `ceil(0.2 * n)` residuals.
    pub top20_mass_share: f64,
    /// Zero residuals left out of the fit.
    pub excluded_zeros: usize,
}

pub fn zipf_report(doc_residuals: &[f64]) -> Result<ZipfReport, EvalError> {
    let mut sorted: Vec<f64> = doc_residuals.iter().map(|r| r.max(0.0)).collect();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let positive = sorted.iter().take_while(|&&r| r > 0.0).count();
    if positive < 2 {
        return Err(EvalError::InsufficientData { positive });
    }

    let n = positive as f64;
    let xs: Vec<f64> = (1..=positive).map(|rank| (rank as f64).ln()).collect();
    let ys: Vec<f64> = sorted[..positive].iter().map(|r| r.ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - x_mean) * (y - y_mean);
        sxx += (x - x_mean) * (x - x_mean);
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;

    let top = (0.2 * sorted.len() as f64).ceil() as usize;
    let total: f64 = sorted.iter().sum();
    let top20_mass_share = sorted[..top].iter().sum::<f64>() / total;

    Ok(ZipfReport {
        excluded_zeros: sorted.len() - positive,
        sorted_residuals: sorted,
        slope,
        intercept,
        top20_mass_share,
    })
}

/// The `metric,value` evaluation report.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub train_perplexity: f64,
    pub predictive_perplexity: f64,
    pub zipf: Option<ZipfReport>,
}

impl EvalReport {
    pub fn rows(&self) -> [(&'static str, f64); 5] {
        let (slope, intercept, share) = match &self.zipf {
            Some(z) => (z.slope, z.intercept, z.top20_mass_share),
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        [
            ("train_perplexity", self.train_perplexity),
            ("predictive_perplexity", self.predictive_perplexity),
            ("zipf_slope", slope),
            ("zipf_intercept", intercept),
            ("top20_mass_share", share),
        ]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "metric,value")?;
        for (metric, value) in self.rows() {
            writeln!(out, "{metric},{value}")?;
        }
        out.flush()
    }
}

/// Checks that a model's vocabulary matches a corpus.
pub fn check_vocabulary(model: &TopicModel, corpus: &Corpus) -> Result<(), EvalError> {
    if model.num_words() != corpus.num_words() {
        return Err(EvalError::DimensionMismatch {
            what: "words",
            model: model.num_words(),
            corpus: corpus.num_words(),
        });
    }
    Ok(())
}
