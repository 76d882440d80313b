//! Messages, sufficient statistics and parameter estimates.
//!
//! Every nonzero entry `(w, d)` of the corpus owns a normalized K-vector
//! message `mu_{w,d}`. The trainers never recompute the three aggregates of
//! the message update from the board; they keep [`SufficientStats`] current
//! with [`SufficientStats::apply_message`] and resynchronize periodically with
//! [`recompute_stats`].

mod file;

use rand::Rng;
use thiserror::Error;

use crate::corpus::{Corpus, Entry};
use crate::dense::Dense;
use crate::rng::{stream_rng, Stream};

pub use file::{read_model, read_model_file, write_model, write_model_file, MODEL_MAGIC};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("degenerate message: all raw components are zero")]
    DegenerateMessage,
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Dirichlet hyperparameters together with the vocabulary size they are
/// paired with in the `W * beta` denominator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Priors {
    pub alpha: f64,
    pub beta: f64,
    pub w_beta: f64,
}

impl Priors {
    pub fn new(alpha: f64, beta: f64, num_words: usize) -> Self {
        Self {
            alpha,
            beta,
            w_beta: num_words as f64 * beta,
        }
    }
}

/// Dense NNZ x K block of messages, in corpus entry order.
#[derive(Clone, Debug, PartialEq)]
pub struct MessageBoard {
    k: usize,
    values: Vec<f64>,
}

impl MessageBoard {
    /// All messages equal to `1/K`.
    pub fn uniform(nnz: usize, k: usize) -> Self {
        Self {
            k,
            values: vec![1.0 / k as f64; nnz * k],
        }
    }

    /// Panics unless `values.len()` is a multiple of `k`.
    pub fn from_values(k: usize, values: Vec<f64>) -> Self {
        assert!(k > 0 && values.len().is_multiple_of(k), "board shape mismatch");
        Self { k, values }
    }

    pub fn num_topics(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn message(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    #[inline]
    pub fn message_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Largest absolute component difference against another board.
    pub fn max_abs_diff(&self, other: &MessageBoard) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Topic mass aggregated per document, per word and overall.
#[derive(Clone, Debug, PartialEq)]
pub struct SufficientStats {
    /// D x K: `sum_w x_{w,d} mu_{w,d}(k)`.
    pub doc_topic: Dense,
    /// W x K: `sum_d x_{w,d} mu_{w,d}(k)`.
    pub word_topic: Dense,
    /// K: `sum_{w,d} x_{w,d} mu_{w,d}(k)`.
    pub topic: Vec<f64>,
}

impl SufficientStats {
    pub fn zeros(num_docs: usize, num_words: usize, k: usize) -> Self {
        Self {
            doc_topic: Dense::zeros(num_docs, k),
            word_topic: Dense::zeros(num_words, k),
            topic: vec![0.0; k],
        }
    }

    pub fn num_topics(&self) -> usize {
        self.topic.len()
    }

    fn clear(&mut self) {
        self.doc_topic.fill(0.0);
        self.word_topic.fill(0.0);
        self.topic.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `x * message` to the three aggregates of `entry`.
    #[inline]
    pub fn add_entry(&mut self, entry: Entry, message: &[f64]) {
        let x = f64::from(entry.count);
        let dt = self.doc_topic.row_mut(entry.doc);
        for (s, m) in dt.iter_mut().zip(message) {
            *s += x * m;
        }
        let wt = self.word_topic.row_mut(entry.word);
        for (s, m) in wt.iter_mut().zip(message) {
            *s += x * m;
        }
        for (s, m) in self.topic.iter_mut().zip(message) {
            *s += x * m;
        }
    }

    /// Replaces the entry's contribution `x * old` by `x * new`.
    #[inline]
    pub fn apply_message(&mut self, entry: Entry, old: &[f64], new: &[f64]) {
        let x = f64::from(entry.count);
        let dt = self.doc_topic.row_mut(entry.doc);
        let wt = self.word_topic.row_mut(entry.word);
        for k in 0..new.len() {
            let delta = x * (new[k] - old[k]);
            dt[k] += delta;
            wt[k] += delta;
            self.topic[k] += delta;
        }
    }

    /// Same as [`apply_message`](Self::apply_message) restricted to `topics`;
    /// components off the subset must be equal in `old` and `new`.
    #[inline]
    pub fn apply_message_subset(&mut self, entry: Entry, old: &[f64], new: &[f64], topics: &[usize]) {
        let x = f64::from(entry.count);
        let dt = self.doc_topic.row_mut(entry.doc);
        let wt = self.word_topic.row_mut(entry.word);
        for &k in topics {
            let delta = x * (new[k] - old[k]);
            dt[k] += delta;
            wt[k] += delta;
            self.topic[k] += delta;
        }
    }

    /// Adds `delta` to topic `k` of the entry's three aggregates.
    #[inline]
    pub(crate) fn add_topic_delta(&mut self, entry: Entry, k: usize, delta: f64) {
        self.doc_topic.row_mut(entry.doc)[k] += delta;
        self.word_topic.row_mut(entry.word)[k] += delta;
        self.topic[k] += delta;
    }

    /// Unnormalized message update
    /// `(n_dk + alpha) (n_wk + beta) / (n_k + W beta)` for the topics in
    /// `topics`, written to `out` (parallel to `topics`). `current` is the
    /// entry's stored message, whose own contribution `x * current` is
    /// removed from every aggregate first.
    #[inline]
    pub fn compute_message(&self, entry: Entry, current: &[f64], priors: &Priors, topics: &[usize], out: &mut [f64]) {
        debug_assert_eq!(topics.len(), out.len());
        let x = f64::from(entry.count);
        let dt = self.doc_topic.row(entry.doc);
        let wt = self.word_topic.row(entry.word);
        for (o, &k) in out.iter_mut().zip(topics) {
            let own = x * current[k];
            *o = ((dt[k] - own).max(0.0) + priors.alpha) * ((wt[k] - own).max(0.0) + priors.beta)
                / ((self.topic[k] - own).max(0.0) + priors.w_beta);
        }
    }

    /// [`compute_message`](Self::compute_message) over all K topics.
    #[inline]
    pub fn compute_message_full(&self, entry: Entry, current: &[f64], priors: &Priors, out: &mut [f64]) {
        let x = f64::from(entry.count);
        let dt = self.doc_topic.row(entry.doc);
        let wt = self.word_topic.row(entry.word);
        let k = out.len();
        let (dt, wt, tp, cur) = (&dt[..k], &wt[..k], &self.topic[..k], &current[..k]);
        for i in 0..k {
            let own = x * cur[i];
            out[i] = ((dt[i] - own).max(0.0) + priors.alpha) * ((wt[i] - own).max(0.0) + priors.beta)
                / ((tp[i] - own).max(0.0) + priors.w_beta);
        }
    }
}

/// Draws every message i.i.d. uniform(0, 1) per component, normalized, and
/// builds the matching statistics.
pub fn init_messages(corpus: &Corpus, k: usize, seed: u64) -> (MessageBoard, SufficientStats) {
    assert!(k >= 1, "at least one topic");
    let mut rng = stream_rng(seed, Stream::MessageInit);
    let mut values = vec![0.0; corpus.nnz() * k];
    for msg in values.chunks_exact_mut(k) {
        for v in msg.iter_mut() {
            // (0, 1]: keeps every component strictly positive
            *v = 1.0 - rng.random::<f64>();
        }
        normalize_full(msg).expect("positive components");
    }
    let board = MessageBoard { k, values };
    let stats = recompute_stats(corpus, &board);
    (board, stats)
}

/// Exact from-scratch aggregates of `board` over `corpus`.
pub fn recompute_stats(corpus: &Corpus, board: &MessageBoard) -> SufficientStats {
    let mut stats = SufficientStats::zeros(corpus.num_docs(), corpus.num_words(), board.num_topics());
    recompute_into(corpus, board, &mut stats);
    stats
}

pub(crate) fn recompute_into(corpus: &Corpus, board: &MessageBoard, stats: &mut SufficientStats) {
    assert_eq!(board.len(), corpus.nnz(), "board not aligned with corpus");
    stats.clear();
    for (i, entry) in corpus.entries().enumerate() {
        stats.add_entry(entry, board.message(i));
    }
}

/// Divides `raw` by its sum in place.
#[inline]
pub fn normalize_full(raw: &mut [f64]) -> Result<(), ModelError> {
    let sum: f64 = raw.iter().sum();
    if !(sum > 0.0) {
        return Err(ModelError::DegenerateMessage);
    }
    raw.iter_mut().for_each(|v| *v /= sum);
    Ok(())
}

/// Subset normalization: writes `previous` to `out`, then rescales the raw
/// values over `topics` so that they carry exactly the mass `previous` had
/// on those topics. With every topic selected this is [`normalize_full`].
pub fn normalize_subset(raw_subset: &[f64], previous: &[f64], topics: &[usize], out: &mut [f64]) -> Result<(), ModelError> {
    debug_assert_eq!(raw_subset.len(), topics.len());
    out.copy_from_slice(previous);
    if topics.len() == previous.len() {
        if !(raw_subset.iter().sum::<f64>() > 0.0) {
            return Err(ModelError::DegenerateMessage);
        }
        for (&k, &r) in topics.iter().zip(raw_subset) {
            out[k] = r;
        }
        return normalize_full(out);
    }
    let mut scaled = raw_subset.to_vec();
    rescale_to_mass(&mut scaled, previous, topics)?;
    for (&k, &v) in topics.iter().zip(&scaled) {
        out[k] = v;
    }
    Ok(())
}

/// The proper-subset branch of [`normalize_subset`], in place on the raw
/// values: `raw[j] <- raw[j] / sum(raw) * sum_{k in topics} previous[k]`.
#[inline]
pub(crate) fn rescale_to_mass(raw: &mut [f64], previous: &[f64], topics: &[usize]) -> Result<(), ModelError> {
    let raw_sum: f64 = raw.iter().sum();
    if !(raw_sum > 0.0) {
        return Err(ModelError::DegenerateMessage);
    }
    let mass: f64 = topics.iter().map(|&k| previous[k]).sum();
    raw.iter_mut().for_each(|r| *r = *r / raw_sum * mass);
    Ok(())
}

/// Point estimates of document proportions and topic-word distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct TopicModel {
    /// D x K, rows on the simplex.
    pub theta: Dense,
    /// W x K, `phi[(w, k)]`; every column sums to 1.
    pub phi: Dense,
    pub alpha: f64,
    pub beta: f64,
}

impl TopicModel {
    pub fn num_topics(&self) -> usize {
        self.phi.cols()
    }

    pub fn num_words(&self) -> usize {
        self.phi.rows()
    }

    pub fn num_docs(&self) -> usize {
        self.theta.rows()
    }

    pub fn from_stats(stats: &SufficientStats, alpha: f64, beta: f64) -> Self {
        Self {
            theta: estimate_theta(stats, alpha),
            phi: estimate_phi(stats, beta),
            alpha,
            beta,
        }
    }
}

/// `theta_d(k) = (mu_{.,d}(k) + alpha) / sum_k (mu_{.,d}(k) + alpha)`.
pub fn estimate_theta(stats: &SufficientStats, alpha: f64) -> Dense {
    estimate_theta_from(&stats.doc_topic, alpha)
}

pub(crate) fn estimate_theta_from(doc_topic: &Dense, alpha: f64) -> Dense {
    let mut theta = Dense::zeros(doc_topic.rows(), doc_topic.cols());
    for d in 0..doc_topic.rows() {
        let row = theta.row_mut(d);
        for (t, &m) in row.iter_mut().zip(doc_topic.row(d)) {
            *t = m.max(0.0) + alpha;
        }
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|t| *t /= sum);
    }
    theta
}

/// `phi_w(k) = (mu_{w,.}(k) + beta) / sum_w (mu_{w,.}(k) + beta)`.
pub fn estimate_phi(stats: &SufficientStats, beta: f64) -> Dense {
    estimate_phi_from(&stats.word_topic, beta)
}

pub(crate) fn estimate_phi_from(word_topic: &Dense, beta: f64) -> Dense {
    let (w, k) = (word_topic.rows(), word_topic.cols());
    let mut phi = Dense::zeros(w, k);
    let mut col_sums = vec![0.0; k];
    for r in 0..w {
        for ((p, &m), s) in phi.row_mut(r).iter_mut().zip(word_topic.row(r)).zip(col_sums.iter_mut()) {
            *p = m.max(0.0) + beta;
            *s += *p;
        }
    }
    for r in 0..w {
        for (p, s) in phi.row_mut(r).iter_mut().zip(&col_sums) {
            *p /= s;
        }
    }
    phi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;

    fn symmetric_corpus() -> Corpus {
        Corpus::from_documents(2, vec![vec![(0, 1), (1, 1)], vec![(0, 1), (1, 1)]]).unwrap()
    }

    #[test]
    fn init_single_topic_is_one() {
        let c = symmetric_corpus();
        let (board, stats) = init_messages(&c, 1, 4);
        assert!(board.as_slice().iter().all(|&v| v == 1.0));
        assert_eq!(stats.topic, vec![4.0]);
    }

    #[test]
    fn init_is_deterministic_and_consistent() {
        let c = symmetric_corpus();
        let (a, sa) = init_messages(&c, 3, 9);
        let (b, _) = init_messages(&c, 3, 9);
        assert_eq!(a, b);
        assert_eq!(sa, recompute_stats(&c, &a));
        for i in 0..a.len() {
            assert!((a.message(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_message_is_uniform() {
        let c = symmetric_corpus();
        let board = MessageBoard::uniform(c.nnz(), 2);
        let stats = recompute_stats(&c, &board);
        let priors = Priors::new(1.0, 0.01, 2);
        let mut out = [0.0; 2];
        stats.compute_message_full(c.entry(0), board.message(0), &priors, &mut out);
        assert_eq!(out[0], out[1]);
        normalize_full(&mut out).unwrap();
        assert_eq!(out, [0.5, 0.5]);
    }

    #[test]
    fn full_normalization() {
        let mut v = [2.0, 6.0];
        normalize_full(&mut v).unwrap();
        assert_eq!(v, [0.25, 0.75]);
        let mut one = [3.0];
        normalize_full(&mut one).unwrap();
        assert_eq!(one, [1.0]);
        assert!(matches!(normalize_full(&mut [0.0, 0.0]), Err(ModelError::DegenerateMessage)));
    }

    #[test]
    fn subset_normalization() {
        let mut out = [0.0; 3];
        normalize_subset(&[2.0, 6.0], &[0.5, 0.3, 0.2], &[0, 1], &mut out).unwrap();
        for (a, b) in out.iter().zip([0.2, 0.6, 0.2]) {
            assert!((a - b).abs() < 1e-15);
        }

        let mut full = [1.0, 2.0, 5.0];
        normalize_subset(&[1.0, 2.0, 5.0], &[0.5, 0.3, 0.2], &[0, 1, 2], &mut out).unwrap();
        normalize_full(&mut full).unwrap();
        assert_eq!(out, full);

        normalize_subset(&[7.0], &[0.5, 0.3, 0.2], &[1], &mut out).unwrap();
        assert_eq!(out, [0.5, 0.3, 0.2]);

        assert!(normalize_subset(&[0.0, 0.0], &[0.5, 0.3, 0.2], &[0, 2], &mut out).is_err());
    }

    #[test]
    fn apply_message_arithmetic() {
        let c = Corpus::from_documents(1, vec![vec![(0, 3)]]).unwrap();
        let board = MessageBoard::uniform(1, 2);
        let mut stats = recompute_stats(&c, &board);
        let before = stats.clone();
        stats.apply_message(c.entry(0), &[0.5, 0.5], &[0.5, 0.5]);
        assert_eq!(stats, before);
        stats.apply_message(c.entry(0), &[0.5, 0.5], &[0.6, 0.4]);
        assert!((stats.doc_topic[(0, 0)] - 1.8).abs() < 1e-12);
        assert!((stats.doc_topic[(0, 1)] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn recompute_edge_cases() {
        let empty = Corpus::from_documents(3, Vec::<Vec<(usize, u32)>>::new()).unwrap();
        let stats = recompute_stats(&empty, &MessageBoard::uniform(0, 2));
        assert_eq!(stats.topic, vec![0.0, 0.0]);

        let c = Corpus::from_documents(3, vec![vec![(0, 2), (2, 2)], vec![(1, 4)]]).unwrap();
        let stats = recompute_stats(&c, &MessageBoard::uniform(c.nnz(), 4));
        for d in 0..2 {
            for k in 0..4 {
                assert!((stats.doc_topic[(d, k)] - c.doc_tokens(d) as f64 / 4.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn theta_estimates() {
        let mut stats = SufficientStats::zeros(2, 1, 2);
        stats.doc_topic.row_mut(0).copy_from_slice(&[2.0, 0.0]);
        let theta = estimate_theta(&stats, 0.5);
        assert!((theta[(0, 0)] - 2.5 / 3.0).abs() < 1e-15);
        assert!((theta[(0, 1)] - 0.5 / 3.0).abs() < 1e-15);
        assert_eq!(theta.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn phi_estimates() {
        let mut stats = SufficientStats::zeros(1, 2, 2);
        stats.word_topic[(0, 0)] = 1.0;
        stats.word_topic[(1, 0)] = 3.0;
        let phi = estimate_phi(&stats, 0.5);
        assert!((phi[(0, 0)] - 1.5 / 5.0).abs() < 1e-15);
        assert!((phi[(1, 0)] - 3.5 / 5.0).abs() < 1e-15);
        assert_eq!((phi[(0, 1)], phi[(1, 1)]), (0.5, 0.5));
    }
}
