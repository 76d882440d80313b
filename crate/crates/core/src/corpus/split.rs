//! Train/test partitions: by whole documents, and by tokens within each document.

use rand::seq::{index, SliceRandom};

use super::{Corpus, CorpusError};
use crate::rng::{stream_rng, Stream};

fn check_fraction(fraction: f64) -> Result<(), CorpusError> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(CorpusError::InvalidFraction(fraction))
    }
}

/// Shuffles documents and returns `(first, rest)` where `first` holds
/// `round(fraction * D)` of them. Each part keeps the source's relative
/// document order and vocabulary size.
pub fn split_corpus(corpus: &Corpus, fraction: f64, seed: u64) -> Result<(Corpus, Corpus), CorpusError> {
    check_fraction(fraction)?;
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut ids: Vec<usize> = (0..corpus.num_docs()).collect();
    ids.shuffle(&mut stream_rng(seed, Stream::CorpusSplit));
    let n_first = (fraction * corpus.num_docs() as f64).round() as usize;
    let (first, rest) = ids.split_at_mut(n_first);
    first.sort_unstable();
    rest.sort_unstable();
    Ok((corpus.select_documents(first), corpus.select_documents(rest)))
}

/// Token-level partition of every document into held-in and held-out parts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DocumentSplit {
    pub held_in: Corpus,
    pub held_out: Corpus,
}

/// Number of tokens a document of `n` tokens keeps in the held-in part.
pub(crate) fn held_in_size(n: usize, fraction: f64) -> usize {
    match n {
        0 => 0,
        1 => 1,
        _ => ((fraction * n as f64).round() as usize).clamp(1, n),
    }
}

/// Samples, without replacement, `round(fraction * N_d)` tokens of every
/// document into `held_in`; the remaining tokens form `held_out`.
pub fn split_within_documents(corpus: &Corpus, held_in_fraction: f64, seed: u64) -> Result<DocumentSplit, CorpusError> {
    check_fraction(held_in_fraction)?;
    let mut rng = stream_rng(seed, Stream::DocumentSplit);
    let mut held_in = Vec::with_capacity(corpus.num_docs());
    let mut held_out = Vec::with_capacity(corpus.num_docs());
    let mut prefix: Vec<usize> = Vec::new();
    let mut kept: Vec<u32> = Vec::new();

    for d in 0..corpus.num_docs() {
        let entries: Vec<(usize, u32)> = corpus.doc(d).collect();
        prefix.clear();
        let mut total = 0usize;
        for &(_, c) in &entries {
            total += c as usize;
            prefix.push(total);
        }
        kept.clear();
        kept.resize(entries.len(), 0);
        for token in index::sample(&mut rng, total, held_in_size(total, held_in_fraction)) {
            // first entry whose cumulative count exceeds the token position
            let e = prefix.partition_point(|&p| p <= token);
            kept[e] += 1;
        }
        held_in.push(
            entries
                .iter()
                .zip(&kept)
                .filter(|(_, &k)| k > 0)
                .map(|(&(w, _), &k)| (w, k))
                .collect::<Vec<_>>(),
        );
        held_out.push(
            entries
                .iter()
                .zip(&kept)
                .filter(|(&(_, c), &k)| c > k)
                .map(|(&(w, c), &k)| (w, c - k))
                .collect::<Vec<_>>(),
        );
    }

    Ok(DocumentSplit {
        held_in: Corpus::from_documents(corpus.num_words(), held_in)?,
        held_out: Corpus::from_documents(corpus.num_words(), held_out)?,
    })
}
