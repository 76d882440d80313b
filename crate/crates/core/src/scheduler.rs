//! Residual bookkeeping and active-set selection.
//!
//! Residuals are L1 message changes weighted by the entry count. They are
//! aggregated per document (or per word in word-scheduling mode) and per
//! topic within each document. Components that were not refreshed in an
//! iteration keep their previous value.
//!
//! Selection always ranks by the key `(-residual, id)`; both ranking
//! strategies return exactly the same subsets.

use std::cmp::Ordering;
use std::io::{self, Write};

use thiserror::Error;

use crate::dense::Dense;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModeError {
    #[error("word-residual scheduling is not enabled on this ledger")]
    WordModeDisabled,
}

/// Which residual aggregate drives active selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulingMode {
    #[default]
    Document,
    Word,
}

/// How the ranked views are maintained between iterations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ranking {
    /// Fresh top-m partial selection on every query.
    #[default]
    PartialSelect,
    /// Fully sorted views, built once and repaired by insertion sort.
    InsertionSort,
}

/// `max(1, ceil(lambda * n))`, or 0 when `n == 0`.
pub fn subset_size(lambda: f64, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let raw = lambda * n as f64;
    // absorb representation error such as 0.1 * 30 = 3.0000000000000004
    let m = (raw - raw * 1e-12).ceil() as usize;
    m.clamp(1, n)
}

#[inline]
fn rank_cmp(values: &[f64], a: usize, b: usize) -> Ordering {
    values[b].total_cmp(&values[a]).then(a.cmp(&b))
}

/// The `m` ids with the largest values, descending, ties by ascending id.
pub fn top_m(values: &[f64], m: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(m);
    top_m_into(values, m, &mut out);
    out
}

/// [`top_m`] into a reusable buffer.
pub fn top_m_into(values: &[f64], m: usize, out: &mut Vec<usize>) {
    let m = m.min(values.len());
    out.clear();
    out.extend(0..values.len());
    if m == 0 {
        return;
    }
    if m < values.len() {
        out.select_nth_unstable_by(m - 1, |&a, &b| rank_cmp(values, a, b));
        out.truncate(m);
    }
    out.sort_unstable_by(|&a, &b| rank_cmp(values, a, b));
}

/// Sorted permutation of ids kept in descending-residual order.
#[derive(Clone, Debug, Default)]
pub struct RankedView {
    order: Vec<usize>,
    swaps: u64,
}

impl RankedView {
    /// Full sort (pattern-defeating quicksort).
    pub fn sort_initial(values: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_unstable_by(|&a, &b| rank_cmp(values, a, b));
        Self { order, swaps: 0 }
    }

    /// Restores the order after `values` changed, by insertion sort.
    /// Returns the number of swaps performed.
    pub fn resort_incremental(&mut self, values: &[f64]) -> u64 {
        let mut swaps = 0;
        for i in 1..self.order.len() {
            let mut j = i;
            while j > 0 && rank_cmp(values, self.order[j], self.order[j - 1]) == Ordering::Less {
                self.order.swap(j, j - 1);
                j -= 1;
                swaps += 1;
            }
        }
        self.swaps += swaps;
        swaps
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn total_swaps(&self) -> u64 {
        self.swaps
    }
}

/// Per-unit (document or word) residual table with per-topic components.
#[derive(Clone, Debug)]
struct ResidualTable {
    topic_res: Dense,
    total: Vec<f64>,
    unit_view: Option<RankedView>,
    topic_views: Option<Vec<RankedView>>,
    dirty: Vec<usize>,
}

impl ResidualTable {
    fn new(units: usize, k: usize) -> Self {
        Self {
            topic_res: Dense::zeros(units, k),
            total: vec![0.0; units],
            unit_view: None,
            topic_views: None,
            dirty: Vec::new(),
        }
    }

    fn refresh(&mut self, unit: usize, fresh: &[f64], topics: &[usize]) {
        let row = self.topic_res.row_mut(unit);
        for &k in topics {
            debug_assert!(fresh[k] >= 0.0);
            row[k] = fresh[k];
        }
        self.total[unit] = row.iter().sum();
        self.dirty.push(unit);
    }

    fn sort_initial(&mut self) {
        self.unit_view = Some(RankedView::sort_initial(&self.total));
        self.topic_views = Some(self.topic_res.iter_rows().map(RankedView::sort_initial).collect());
        self.dirty.clear();
    }

    fn resort_incremental(&mut self) -> u64 {
        let mut swaps = 0;
        if let Some(view) = self.unit_view.as_mut() {
            swaps += view.resort_incremental(&self.total);
        }
        if let Some(views) = self.topic_views.as_mut() {
            self.dirty.sort_unstable();
            self.dirty.dedup();
            for &u in &self.dirty {
                swaps += views[u].resort_incremental(self.topic_res.row(u));
            }
        }
        self.dirty.clear();
        swaps
    }

    fn select_units(&self, lambda: f64) -> Vec<usize> {
        let m = subset_size(lambda, self.total.len());
        match &self.unit_view {
            Some(view) => view.order()[..m].to_vec(),
            None => top_m(&self.total, m),
        }
    }

    fn select_topics_into(&self, unit: usize, lambda: f64, out: &mut Vec<usize>) {
        let m = subset_size(lambda, self.topic_res.cols());
        match &self.topic_views {
            Some(views) => {
                out.clear();
                out.extend_from_slice(&views[unit].order()[..m]);
            }
            None => top_m_into(self.topic_res.row(unit), m, out),
        }
    }
}

/// Residuals of the last update of every entry, document and topic.
#[derive(Clone, Debug)]
pub struct ResidualLedger {
    ranking: Ranking,
    docs: ResidualTable,
    words: Option<ResidualTable>,
    entry_res: Vec<f64>,
}

impl ResidualLedger {
    pub fn new(num_docs: usize, num_words: usize, nnz: usize, k: usize, mode: SchedulingMode, ranking: Ranking) -> Self {
        Self {
            ranking,
            docs: ResidualTable::new(num_docs, k),
            words: (mode == SchedulingMode::Word).then(|| ResidualTable::new(num_words, k)),
            entry_res: vec![0.0; nnz],
        }
    }

    pub fn mode(&self) -> SchedulingMode {
        if self.words.is_some() {
            SchedulingMode::Word
        } else {
            SchedulingMode::Document
        }
    }

    pub fn ranking(&self) -> Ranking {
        self.ranking
    }

    /// `r_d(k)`, D x K.
    pub fn doc_topic_res(&self) -> &Dense {
        &self.docs.topic_res
    }

    /// `r_d`.
    pub fn doc_res(&self) -> &[f64] {
        &self.docs.total
    }

    /// `r_{w,d}` of every entry's most recent update.
    pub fn entry_res(&self) -> &[f64] {
        &self.entry_res
    }

    pub fn word_topic_res(&self) -> Option<&Dense> {
        self.words.as_ref().map(|t| &t.topic_res)
    }

    pub fn word_res(&self) -> Option<&[f64]> {
        self.words.as_ref().map(|t| t.total.as_slice())
    }

    pub fn total_residual(&self) -> f64 {
        self.docs.total.iter().sum()
    }

    #[inline]
    pub fn set_entry_residual(&mut self, entry: usize, residual: f64) {
        self.entry_res[entry] = residual;
    }

    /// Overwrites `r_d(k)` with `fresh[k]` for `k` in `topics` (`fresh` is
    /// indexed by topic id) and recomputes `r_d` as the row sum.
    pub fn refresh_document(&mut self, d: usize, fresh: &[f64], topics: &[usize]) {
        self.docs.refresh(d, fresh, topics);
    }

    /// Word-mode counterpart of [`refresh_document`](Self::refresh_document).
    pub fn word_residual_accumulate(&mut self, w: usize, fresh: &[f64], topics: &[usize]) -> Result<(), ModeError> {
        self.words
            .as_mut()
            .ok_or(ModeError::WordModeDisabled)?
            .refresh(w, fresh, topics);
        Ok(())
    }

    /// Builds the sorted views when ranking by insertion sort; a no-op for
    /// partial selection.
    pub fn sort_initial(&mut self) {
        if self.ranking == Ranking::InsertionSort {
            self.docs.sort_initial();
            if let Some(words) = self.words.as_mut() {
                words.sort_initial();
            }
        }
    }

    /// Repairs the sorted views after refreshes. Returns the swap count.
    pub fn resort_incremental(&mut self) -> u64 {
        let mut swaps = self.docs.resort_incremental();
        if let Some(words) = self.words.as_mut() {
            swaps += words.resort_incremental();
        }
        swaps
    }

    /// The `max(1, ceil(lambda_d * D))` documents with largest `r_d`.
    pub fn select_documents(&self, lambda_d: f64) -> Vec<usize> {
        self.docs.select_units(lambda_d)
    }

    /// The `max(1, ceil(lambda_k * K))` topics with largest `r_d(k)`.
    pub fn select_topics(&self, d: usize, lambda_k: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.docs.select_topics_into(d, lambda_k, &mut out);
        out
    }

    pub fn select_topics_into(&self, d: usize, lambda_k: f64, out: &mut Vec<usize>) {
        self.docs.select_topics_into(d, lambda_k, out);
    }

    pub fn select_words(&self, lambda_w: f64) -> Result<Vec<usize>, ModeError> {
        Ok(self.words.as_ref().ok_or(ModeError::WordModeDisabled)?.select_units(lambda_w))
    }

    pub fn select_word_topics_into(&self, w: usize, lambda_k: f64, out: &mut Vec<usize>) -> Result<(), ModeError> {
        self.words
            .as_ref()
            .ok_or(ModeError::WordModeDisabled)?
            .select_topics_into(w, lambda_k, out);
        Ok(())
    }
}

/// Per-topic residuals `x * |new(k) - old(k)|` over `topics`, written to
/// `out` by topic id. Returns their sum.
#[inline]
pub fn entry_residual(x: u32, old: &[f64], new: &[f64], topics: &[usize], out: &mut [f64]) -> f64 {
    let x = f64::from(x);
    let mut sum = 0.0;
    for &k in topics {
        let r = x * (new[k] - old[k]).abs();
        out[k] = r;
        sum += r;
    }
    sum
}

/// Writes `doc_id,residual` rows in descending residual order.
pub fn write_residual_snapshot<W: Write>(doc_res: &[f64], mut out: W) -> io::Result<()> {
    writeln!(out, "doc_id,residual")?;
    for d in top_m(doc_res, doc_res.len()) {
        writeln!(out, "{},{:e}", d, doc_res[d])?;
    }
    out.flush()
}
