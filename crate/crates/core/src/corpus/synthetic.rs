//! Corpora drawn from the LDA generative process, for oracle tests and benchmarks.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use super::{Corpus, CorpusError};
use crate::dense::Dense;
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// D x K document-topic proportions.
    pub theta: Dense,
    /// K x W topic-word distributions, one row per topic.
    pub phi: Dense,
}

/// Symmetric Dirichlet draw computed in log space.
///
/// Uses `Gamma(a) = Gamma(a + 1) * U^(1/a)`, so concentrations far below 1
/// (e.g. 0.01) do not underflow every component to zero.
fn dirichlet<R: Rng>(rng: &mut R, concentration: f64, out: &mut [f64]) {
    let gamma = Gamma::new(concentration + 1.0, 1.0).expect("positive shape");
    for v in out.iter_mut() {
        let u = 1.0 - rng.random::<f64>();
        *v = gamma.sample(rng).ln() + u.ln() / concentration;
    }
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in out.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    out.iter_mut().for_each(|v| *v /= sum);
}

/// Draws `phi_k ~ Dir(beta)`, `theta_d ~ Dir(alpha)`, document lengths
/// `~ Poisson(avg_doc_len)` clamped to at least 1, then every token by
/// topic-then-word sampling.
pub fn generate_synthetic(
    num_docs: usize,
    num_words: usize,
    num_topics: usize,
    avg_doc_len: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
) -> Result<SyntheticCorpus, CorpusError> {
    if num_docs == 0 || num_words == 0 || num_topics == 0 || avg_doc_len == 0 {
        return Err(CorpusError::InvalidParameter("all counts must be at least 1".into()));
    }
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(CorpusError::InvalidParameter("alpha and beta must be positive".into()));
    }
    let mut rng = stream_rng(seed, Stream::Synthetic);

    let mut phi = Dense::zeros(num_topics, num_words);
    for k in 0..num_topics {
        dirichlet(&mut rng, beta, phi.row_mut(k));
    }
    let word_dists: Vec<WeightedIndex<f64>> = phi
        .iter_rows()
        .map(|row| WeightedIndex::new(row).expect("phi row is a distribution"))
        .collect();
    let lengths = Poisson::new(avg_doc_len as f64).expect("positive rate");

    let mut theta = Dense::zeros(num_docs, num_topics);
    let mut docs = Vec::with_capacity(num_docs);
    let mut counts = vec![0u32; num_words];
    let mut touched = Vec::new();
    for d in 0..num_docs {
        dirichlet(&mut rng, alpha, theta.row_mut(d));
        let topic_dist = WeightedIndex::new(theta.row(d)).expect("theta row is a distribution");
        let len = (lengths.sample(&mut rng) as usize).max(1);
        for _ in 0..len {
            let k = topic_dist.sample(&mut rng);
            let w = word_dists[k].sample(&mut rng);
            if counts[w] == 0 {
                touched.push(w);
            }
            counts[w] += 1;
        }
        touched.sort_unstable();
        docs.push(touched.iter().map(|&w| (w, counts[w])).collect::<Vec<_>>());
        for &w in &touched {
            counts[w] = 0;
        }
        touched.clear();
    }

    Ok(SyntheticCorpus {
        corpus: Corpus::from_documents(num_words, docs)?,
        theta,
        phi,
    })
}
