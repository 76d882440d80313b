//! Collapsed Gibbs sampling baseline.
//!
//! Tokens are expanded from the corpus entries in document-major, then
//! word-major order, each entry repeated `count` times. Each sweep visits
//! every token once: its assignment is removed from the count tables, a new
//! topic is drawn from
//! `(n_dk + alpha) (n_wk + beta) / (n_k + W beta)` and the counts restored.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{TraceRecord, TrainerConfig};
use crate::corpus::Corpus;
use crate::dense::Dense;
use crate::model::{estimate_phi_from, estimate_theta_from, Priors, TopicModel};
use crate::rng::{stream_rng, Stream};

/// Draws an index with probability proportional to `weights`.
#[inline]
pub fn draw<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        u -= w;
        if u < 0.0 {
            return k;
        }
    }
    // rounding left a sliver of mass past the last weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Token assignments with exactly matching integer count tables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GibbsState {
    k: usize,
    /// Topic of every token, in expansion order.
    pub z: Vec<u32>,
    /// D x K.
    pub n_dk: Vec<u32>,
    /// W x K.
    pub n_wk: Vec<u32>,
    pub n_k: Vec<u32>,
}

impl GibbsState {
    /// Uniformly random initial assignments.
    pub fn init<R: Rng>(corpus: &Corpus, k: usize, rng: &mut R) -> Self {
        let z: Vec<u32> = (0..corpus.token_total()).map(|_| rng.random_range(0..k as u32)).collect();
        let (n_dk, n_wk, n_k) = Self::count(corpus, k, &z);
        Self { k, z, n_dk, n_wk, n_k }
    }

    pub fn num_topics(&self) -> usize {
        self.k
    }

    fn count(corpus: &Corpus, k: usize, z: &[u32]) -> (Vec<u32>, Vec<u32>, Vec<u32>) {
        let mut n_dk = vec![0u32; corpus.num_docs() * k];
        let mut n_wk = vec![0u32; corpus.num_words() * k];
        let mut n_k = vec![0u32; k];
        let mut t = 0;
        for e in corpus.entries() {
            for _ in 0..e.count {
                let topic = z[t] as usize;
                n_dk[e.doc * k + topic] += 1;
                n_wk[e.word * k + topic] += 1;
                n_k[topic] += 1;
                t += 1;
            }
        }
        (n_dk, n_wk, n_k)
    }

    /// Count tables rebuilt from the assignments alone.
    pub fn recount(&self, corpus: &Corpus) -> (Vec<u32>, Vec<u32>, Vec<u32>) {
        Self::count(corpus, self.k, &self.z)
    }

    pub fn is_consistent(&self, corpus: &Corpus) -> bool {
        let (n_dk, n_wk, n_k) = self.recount(corpus);
        n_dk == self.n_dk && n_wk == self.n_wk && n_k == self.n_k
    }

    /// Unnormalized conditional of a token at `(doc, word)` whose own
    /// assignment is already removed from the tables.
    #[inline]
    pub fn conditional(&self, doc: usize, word: usize, priors: &Priors, out: &mut [f64]) {
        let k = self.k;
        let dk = &self.n_dk[doc * k..(doc + 1) * k];
        let wk = &self.n_wk[word * k..(word + 1) * k];
        for t in 0..k {
            out[t] = (f64::from(dk[t]) + priors.alpha) * (f64::from(wk[t]) + priors.beta)
                / (f64::from(self.n_k[t]) + priors.w_beta);
        }
    }

    #[inline]
    pub fn remove(&mut self, doc: usize, word: usize, topic: usize) {
        self.n_dk[doc * self.k + topic] -= 1;
        self.n_wk[word * self.k + topic] -= 1;
        self.n_k[topic] -= 1;
    }

    #[inline]
    pub fn add(&mut self, doc: usize, word: usize, topic: usize) {
        self.n_dk[doc * self.k + topic] += 1;
        self.n_wk[word * self.k + topic] += 1;
        self.n_k[topic] += 1;
    }

    /// One full sweep; returns the number of tokens whose topic changed.
    pub fn sweep<R: Rng>(&mut self, corpus: &Corpus, priors: &Priors, rng: &mut R, weights: &mut [f64]) -> usize {
        let mut moved = 0;
        let mut t = 0;
        for e in corpus.entries() {
            for _ in 0..e.count {
                let old = self.z[t] as usize;
                self.remove(e.doc, e.word, old);
                self.conditional(e.doc, e.word, priors, weights);
                let new = draw(weights, rng);
                self.add(e.doc, e.word, new);
                self.z[t] = new as u32;
                moved += usize::from(new != old);
                t += 1;
            }
        }
        moved
    }

    fn table(values: &[u32], rows: usize, k: usize) -> Dense {
        Dense::from_vec(rows, k, values.iter().map(|&v| f64::from(v)).collect())
    }

    /// Parameter estimates with counts in place of message masses.
    pub fn model(&self, corpus: &Corpus, alpha: f64, beta: f64) -> TopicModel {
        TopicModel {
            theta: estimate_theta_from(&Self::table(&self.n_dk, corpus.num_docs(), self.k), alpha),
            phi: estimate_phi_from(&Self::table(&self.n_wk, corpus.num_words(), self.k), beta),
            alpha,
            beta,
        }
    }
}

pub struct GibbsTrainer<'c> {
    corpus: &'c Corpus,
    cfg: TrainerConfig,
    priors: Priors,
    state: GibbsState,
    rng: ChaCha8Rng,
    weights: Vec<f64>,
    iteration: usize,
}

impl<'c> GibbsTrainer<'c> {
    pub fn new(corpus: &'c Corpus, cfg: TrainerConfig) -> Self {
        let state = GibbsState::init(corpus, cfg.num_topics, &mut stream_rng(cfg.seed, Stream::GibbsInit));
        Self {
            priors: Priors::new(cfg.alpha_value(), cfg.beta, corpus.num_words()),
            rng: stream_rng(cfg.seed, Stream::GibbsSweep),
            weights: vec![0.0; cfg.num_topics],
            state,
            corpus,
            cfg,
            iteration: 0,
        }
    }

    pub fn corpus(&self) -> &'c Corpus {
        self.corpus
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn state(&self) -> &GibbsState {
        &self.state
    }

    pub fn model(&self) -> TopicModel {
        self.state.model(self.corpus, self.priors.alpha, self.priors.beta)
    }

    pub fn step(&mut self) -> TraceRecord {
        self.iteration += 1;
        let start = Instant::now();
        let moved = self.state.sweep(self.corpus, &self.priors, &mut self.rng, &mut self.weights);
        TraceRecord {
            iteration: self.iteration,
            wall_seconds: start.elapsed().as_secs_f64(),
            train_perplexity: None,
            total_residual: moved as f64,
            docs_scanned: self.corpus.num_docs(),
            avg_topics_scanned: self.cfg.num_topics as f64,
            entries_touched: self.corpus.nnz(),
            topic_updates: self.corpus.token_total() as usize * self.cfg.num_topics,
        }
    }
}
