//! Sparse document-word count matrices.
//!
//! A [`Corpus`] stores the nonzero entries `x_{w,d}` in document-major order:
//! entries of document `d` live in `offsets[d]..offsets[d + 1]` and carry
//! strictly increasing word ids. All ids are 0-indexed; the 1-indexed ids of
//! the UCI text format are converted at the parse boundary.

mod parse;
mod split;
mod synthetic;

use std::io::{self, Write};
use std::ops::Range;

use thiserror::Error;

pub use parse::{parse_docword, parse_vocab, read_docword_file, read_vocab_file, ParseError};
pub use split::{split_corpus, split_within_documents, DocumentSplit};
pub use synthetic::{generate_synthetic, SyntheticCorpus};

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("fraction {0} is outside the open interval (0, 1)")]
    InvalidFraction(f64),
    #[error("word id {word} out of range for vocabulary of {num_words} words")]
    WordOutOfRange { word: usize, num_words: usize },
    #[error("document {doc} has an entry with count 0")]
    ZeroCount { doc: usize },
    #[error("count overflow in document {doc}")]
    CountOverflow { doc: usize },
    #[error("corpus has no documents")]
    Empty,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// One nonzero cell of the document-word matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Entry {
    pub doc: usize,
    pub word: usize,
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    num_words: usize,
    offsets: Vec<usize>,
    entry_docs: Vec<u32>,
    words: Vec<u32>,
    counts: Vec<u32>,
    token_total: u64,
}

impl Corpus {
    /// Builds a canonical corpus from per-document `(word, count)` lists.
    ///
    /// Lists may be unsorted and may repeat a word; repeats are summed.
    pub fn from_documents<I, D>(num_words: usize, docs: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = D>,
        D: IntoIterator<Item = (usize, u32)>,
    {
        let mut offsets = vec![0];
        let mut entry_docs = Vec::new();
        let mut words = Vec::new();
        let mut counts = Vec::new();
        let mut token_total = 0u64;
        let mut scratch: Vec<(usize, u32)> = Vec::new();

        for (d, doc) in docs.into_iter().enumerate() {
            scratch.clear();
            scratch.extend(doc);
            scratch.sort_unstable_by_key(|&(w, _)| w);
            let mut last: Option<usize> = None;
            for &(w, c) in &scratch {
                if w >= num_words {
                    return Err(CorpusError::WordOutOfRange { word: w, num_words });
                }
                if c == 0 {
                    return Err(CorpusError::ZeroCount { doc: d });
                }
                if last == Some(w) {
                    let slot = counts.last_mut().expect("previous entry exists");
                    *slot = u32::checked_add(*slot, c).ok_or(CorpusError::CountOverflow { doc: d })?;
                } else {
                    entry_docs.push(d as u32);
                    words.push(w as u32);
                    counts.push(c);
                    last = Some(w);
                }
                token_total += u64::from(c);
            }
            offsets.push(words.len());
        }

        Ok(Self {
            num_words,
            offsets,
            entry_docs,
            words,
            counts,
            token_total,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_words(&self) -> usize {
        self.num_words
    }

    pub fn nnz(&self) -> usize {
        self.words.len()
    }

    pub fn token_total(&self) -> u64 {
        self.token_total
    }

    pub fn is_empty(&self) -> bool {
        self.num_docs() == 0
    }

    /// Entry indices belonging to document `d`.
    #[inline]
    pub fn doc_range(&self, d: usize) -> Range<usize> {
        self.offsets[d]..self.offsets[d + 1]
    }

    #[inline]
    pub fn entry(&self, i: usize) -> Entry {
        Entry {
            doc: self.entry_docs[i] as usize,
            word: self.words[i] as usize,
            count: self.counts[i],
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = Entry> + '_ {
        (0..self.nnz()).map(move |i| self.entry(i))
    }

    /// `(word, count)` pairs of document `d`.
    pub fn doc(&self, d: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        let r = self.doc_range(d);
        self.words[r.clone()]
            .iter()
            .zip(&self.counts[r])
            .map(|(&w, &c)| (w as usize, c))
    }

    pub fn doc_tokens(&self, d: usize) -> u64 {
        self.counts[self.doc_range(d)].iter().map(|&c| u64::from(c)).sum()
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Word-major view of the entries, used by word-residual scheduling.
    pub fn word_index(&self) -> WordIndex {
        let mut offsets = vec![0usize; self.num_words + 1];
        for &w in &self.words {
            offsets[w as usize + 1] += 1;
        }
        for w in 0..self.num_words {
            offsets[w + 1] += offsets[w];
        }
        let mut cursor = offsets.clone();
        let mut entries = vec![0usize; self.nnz()];
        for (i, &w) in self.words.iter().enumerate() {
            entries[cursor[w as usize]] = i;
            cursor[w as usize] += 1;
        }
        WordIndex { offsets, entries }
    }

    /// Keeps the listed documents, in the given order.
    pub fn select_documents(&self, docs: &[usize]) -> Corpus {
        Corpus::from_documents(self.num_words, docs.iter().map(|&d| self.doc(d).collect::<Vec<_>>()))
            .expect("sub-corpus of a canonical corpus is canonical")
    }

    /// Writes the UCI docword format with 1-indexed ids.
    pub fn write_docword<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.num_docs())?;
        writeln!(out, "{}", self.num_words)?;
        writeln!(out, "{}", self.nnz())?;
        for e in self.entries() {
            writeln!(out, "{} {} {}", e.doc + 1, e.word + 1, e.count)?;
        }
        out.flush()
    }
}

/// Column index over a corpus: the entry ids of word `w` in ascending order.
#[derive(Clone, Debug)]
pub struct WordIndex {
    offsets: Vec<usize>,
    entries: Vec<usize>,
}

impl WordIndex {
    pub fn entries_of(&self, w: usize) -> &[usize] {
        &self.entries[self.offsets[w]..self.offsets[w + 1]]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
}

impl Vocabulary {
    pub fn new(words: Vec<String>) -> Self {
        Self { words }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// 0-indexed lookup.
    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}
