//! Independent reference implementations shared by the integration tests and
//! the acceptance suite. Everything here is written from the model equations
//! directly, without the library's incremental machinery.

#![allow(dead_code)]

use abp_lda::{Corpus, Dense, MessageBoard};
use rand::Rng;

/// Dense D x W count matrix.
pub fn dense_counts(corpus: &Corpus) -> Vec<Vec<u32>> {
    let mut counts = vec![vec![0u32; corpus.num_words()]; corpus.num_docs()];
    for e in corpus.entries() {
        counts[e.doc][e.word] += e.count;
    }
    counts
}

/// Perplexity by a plain double loop over the dense count matrix.
pub fn naive_perplexity(corpus: &Corpus, theta: &Dense, phi: &Dense) -> f64 {
    let counts = dense_counts(corpus);
    let k = theta.cols();
    let mut log_lik = 0.0;
    let mut tokens = 0.0;
    for (d, row) in counts.iter().enumerate() {
        for (w, &x) in row.iter().enumerate() {
            if x == 0 {
                continue;
            }
            let mut p = 0.0;
            for t in 0..k {
                p += theta[(d, t)] * phi[(w, t)];
            }
            log_lik += f64::from(x) * p.ln();
            tokens += f64::from(x);
        }
    }
    (-log_lik / tokens).exp()
}

/// `(doc_topic, word_topic, topic)` summed from scratch over every entry.
pub fn aggregate_stats(corpus: &Corpus, board: &MessageBoard) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
    let k = board.num_topics();
    let mut doc = vec![vec![0.0; k]; corpus.num_docs()];
    let mut word = vec![vec![0.0; k]; corpus.num_words()];
    let mut total = vec![0.0; k];
    for (i, e) in corpus.entries().enumerate() {
        let x = f64::from(e.count);
        for t in 0..k {
            let m = x * board.message(i)[t];
            doc[e.doc][t] += m;
            word[e.word][t] += m;
            total[t] += m;
        }
    }
    (doc, word, total)
}

/// Unnormalized message update for entry `i` at topic `t`, with every
/// leave-one-out sum formed by iterating over the other entries.
pub fn message_oracle(corpus: &Corpus, board: &MessageBoard, i: usize, t: usize, alpha: f64, beta: f64) -> f64 {
    let target = corpus.entry(i);
    let w_beta = corpus.num_words() as f64 * beta;
    let (mut doc, mut word, mut total) = (0.0, 0.0, 0.0);
    for (j, e) in corpus.entries().enumerate() {
        if j == i {
            continue;
        }
        let m = f64::from(e.count) * board.message(j)[t];
        if e.doc == target.doc {
            doc += m;
        }
        if e.word == target.word {
            word += m;
        }
        total += m;
    }
    (doc + alpha) * (word + beta) / (total + w_beta)
}

/// Indices of the `m` largest values, ties broken by lower index, via a
/// full stable sort.
pub fn top_m_by_full_sort(values: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

/// Random corpus where every document has at least one entry.
pub fn random_corpus<R: Rng>(rng: &mut R, num_docs: usize, num_words: usize, max_entries: usize, max_count: u32) -> Corpus {
    let docs: Vec<Vec<(usize, u32)>> = (0..num_docs)
        .map(|_| {
            let n = rng.random_range(1..=max_entries);
            (0..n)
                .map(|_| (rng.random_range(0..num_words), rng.random_range(1..=max_count)))
                .collect()
        })
        .collect();
    Corpus::from_documents(num_words, docs).unwrap()
}

/// Rows drawn uniformly then normalized to sum to one.
pub fn random_stochastic_rows<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Dense {
    let mut m = Dense::zeros(rows, cols);
    for r in 0..rows {
        let row = m.row_mut(r);
        row.iter_mut().for_each(|v| *v = 1e-3 + rng.random::<f64>());
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    m
}

/// W x K matrix whose columns each sum to one.
pub fn random_topic_columns<R: Rng>(rng: &mut R, num_words: usize, k: usize) -> Dense {
    let mut m = Dense::zeros(num_words, k);
    for v in m.as_mut_slice() {
        *v = 1e-3 + rng.random::<f64>();
    }
    for t in 0..k {
        let s = m.col_sum(t);
        for w in 0..num_words {
            m.row_mut(w)[t] /= s;
        }
    }
    m
}

pub fn random_board<R: Rng>(rng: &mut R, nnz: usize, k: usize) -> MessageBoard {
    let rows = random_stochastic_rows(rng, nnz, k);
    MessageBoard::from_values(k, rows.as_slice().to_vec())
}

/// Largest `|a - b| / |b|` over paired cells, treating exact matches as 0.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| if x == y { 0.0 } else { (x - y).abs() / y.abs() })
        .fold(0.0, f64::max)
}
