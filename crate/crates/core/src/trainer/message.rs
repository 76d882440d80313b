//! Message-passing trainers.
//!
//! * BP computes every new message from the statistics of the previous
//!   iteration and commits them together.
//! * RBP updates entries one at a time in descending order of their last
//!   residual, committing each update to the statistics immediately.
//! * ABP runs a full RBP sweep at iteration 1 to populate the residual
//!   ledger. Afterwards it updates only the entries of the top-residual
//!   documents (or words), and within each entry only the top-residual topics
//!   of its document, using subset normalization. Entries of the active set
//!   are visited in the same residual order RBP uses, so with
//!   `lambda_d = lambda_k = 1` ABP reproduces RBP exactly.

use std::mem;
use std::time::Instant;

use super::{Algorithm, TraceRecord, TrainerConfig};
use crate::corpus::{Corpus, WordIndex};
use crate::dense::Dense;
use crate::model::{
    init_messages, normalize_full, recompute_into, rescale_to_mass, recompute_stats, MessageBoard, Priors, SufficientStats, TopicModel,
};
use crate::scheduler::{entry_residual, ResidualLedger, SchedulingMode};

pub struct MessageTrainer<'c> {
    corpus: &'c Corpus,
    cfg: TrainerConfig,
    priors: Priors,
    board: MessageBoard,
    stats: SufficientStats,
    ledger: ResidualLedger,
    iteration: usize,
    all_topics: Vec<usize>,
    word_index: Option<WordIndex>,
    /// Per-document (D x K) residual accumulators of the running sweep.
    fresh_docs: Dense,
    /// Per-word (W x K) accumulators, word mode only.
    fresh_words: Option<Dense>,
    /// Spare statistics buffer for synchronous BP.
    next_stats: Option<SufficientStats>,
    order: Vec<usize>,
    topic_sets: Vec<Vec<usize>>,
    unit_slot: Vec<usize>,
    old: Vec<f64>,
    raw: Vec<f64>,
    new: Vec<f64>,
    res: Vec<f64>,
}

impl<'c> MessageTrainer<'c> {
    /// `cfg` must be validated and select bp, rbp or abp.
    pub fn new(corpus: &'c Corpus, cfg: TrainerConfig) -> Self {
        let (board, stats) = init_messages(corpus, cfg.num_topics, cfg.seed);
        Self::from_parts(corpus, cfg, board, stats)
    }

    /// Starts from the given messages instead of a random initialization.
    pub fn with_board(corpus: &'c Corpus, cfg: TrainerConfig, board: MessageBoard) -> Self {
        let stats = recompute_stats(corpus, &board);
        Self::from_parts(corpus, cfg, board, stats)
    }

    fn from_parts(corpus: &'c Corpus, cfg: TrainerConfig, board: MessageBoard, stats: SufficientStats) -> Self {
        assert_ne!(cfg.algorithm, Algorithm::Gs, "gibbs sampling has its own trainer");
        assert_eq!(board.len(), corpus.nnz());
        assert_eq!(board.num_topics(), cfg.num_topics);
        let k = cfg.num_topics;
        let word_mode = cfg.scheduling_mode == SchedulingMode::Word;
        let units = if word_mode { corpus.num_words() } else { corpus.num_docs() };
        Self {
            priors: Priors::new(cfg.alpha_value(), cfg.beta, corpus.num_words()),
            ledger: ResidualLedger::new(
                corpus.num_docs(),
                corpus.num_words(),
                corpus.nnz(),
                k,
                cfg.scheduling_mode,
                cfg.ranking,
            ),
            board,
            stats,
            iteration: 0,
            all_topics: (0..k).collect(),
            word_index: word_mode.then(|| corpus.word_index()),
            fresh_docs: Dense::zeros(corpus.num_docs(), k),
            fresh_words: word_mode.then(|| Dense::zeros(corpus.num_words(), k)),
            next_stats: (cfg.algorithm == Algorithm::Bp)
                .then(|| SufficientStats::zeros(corpus.num_docs(), corpus.num_words(), k)),
            order: Vec::with_capacity(corpus.nnz()),
            topic_sets: Vec::new(),
            unit_slot: vec![usize::MAX; units],
            old: vec![0.0; k],
            raw: vec![0.0; k],
            new: vec![0.0; k],
            res: vec![0.0; k],
            corpus,
            cfg,
        }
    }

    pub fn corpus(&self) -> &'c Corpus {
        self.corpus
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn board(&self) -> &MessageBoard {
        &self.board
    }

    pub fn stats(&self) -> &SufficientStats {
        &self.stats
    }

    pub fn ledger(&self) -> &ResidualLedger {
        &self.ledger
    }

    pub fn model(&self) -> TopicModel {
        TopicModel::from_stats(&self.stats, self.priors.alpha, self.priors.beta)
    }

    pub fn step(&mut self) -> crate::Result<TraceRecord> {
        let asynchronous = self.cfg.algorithm != Algorithm::Bp;
        if asynchronous && self.iteration > 0 && self.iteration.is_multiple_of(self.cfg.resync_every) {
            recompute_into(self.corpus, &self.board, &mut self.stats);
        }
        self.iteration += 1;

        let start = Instant::now();
        let mut record = match self.cfg.algorithm {
            Algorithm::Bp => self.sweep_synchronous()?,
            Algorithm::Rbp => self.sweep_residual()?,
            Algorithm::Abp if self.iteration == 1 => {
                let record = self.sweep_residual()?;
                self.ledger.sort_initial();
                record
            }
            Algorithm::Abp => self.sweep_active()?,
            Algorithm::Gs => unreachable!("rejected in with_board"),
        };
        record.wall_seconds = start.elapsed().as_secs_f64();
        record.total_residual = match self.ledger.word_res() {
            Some(word_res) => word_res.iter().sum(),
            None => self.ledger.total_residual(),
        };
        Ok(record)
    }

    fn full_record(&self) -> TraceRecord {
        let k = self.cfg.num_topics;
        TraceRecord {
            iteration: self.iteration,
            wall_seconds: 0.0,
            train_perplexity: None,
            total_residual: 0.0,
            docs_scanned: self.unit_slot.len(),
            avg_topics_scanned: k as f64,
            entries_touched: self.corpus.nnz(),
            topic_updates: self.corpus.nnz() * k,
        }
    }

    /// Refreshes every document (and word) over all topics from the sweep's
    /// accumulators.
    fn refresh_all(&mut self) {
        for d in 0..self.corpus.num_docs() {
            self.ledger.refresh_document(d, self.fresh_docs.row(d), &self.all_topics);
        }
        if let Some(fresh) = &self.fresh_words {
            for w in 0..self.corpus.num_words() {
                self.ledger
                    .word_residual_accumulate(w, fresh.row(w), &self.all_topics)
                    .expect("word mode ledger");
            }
        }
    }

    fn sweep_synchronous(&mut self) -> crate::Result<TraceRecord> {
        let mut next = self.next_stats.take().expect("bp keeps a spare statistics buffer");
        next.doc_topic.fill(0.0);
        next.word_topic.fill(0.0);
        next.topic.iter_mut().for_each(|v| *v = 0.0);
        self.fresh_docs.fill(0.0);

        for i in 0..self.corpus.nnz() {
            let e = self.corpus.entry(i);
            let msg = self.board.message_mut(i);
            self.stats.compute_message_full(e, msg, &self.priors, &mut self.raw);
            normalize_full(&mut self.raw)?;
            let r = entry_residual(e.count, msg, &self.raw, &self.all_topics, &mut self.res);
            msg.copy_from_slice(&self.raw);
            next.add_entry(e, &self.raw);
            self.ledger.set_entry_residual(i, r);
            for (f, v) in self.fresh_docs.row_mut(e.doc).iter_mut().zip(&self.res) {
                *f += v;
            }
        }

        self.next_stats = Some(mem::replace(&mut self.stats, next));
        self.refresh_all();
        Ok(self.full_record())
    }

    /// Entries sorted by descending last residual, ties by ascending index.
    fn sort_by_residual(order: &mut [usize], entry_res: &[f64]) {
        order.sort_unstable_by(|&a, &b| entry_res[b].total_cmp(&entry_res[a]).then(a.cmp(&b)));
    }

    fn sweep_residual(&mut self) -> crate::Result<TraceRecord> {
        let mut order = mem::take(&mut self.order);
        order.clear();
        order.extend(0..self.corpus.nnz());
        Self::sort_by_residual(&mut order, self.ledger.entry_res());
        self.fresh_docs.fill(0.0);
        if let Some(f) = self.fresh_words.as_mut() {
            f.fill(0.0);
        }

        let all = mem::take(&mut self.all_topics);
        for &i in &order {
            let e = self.corpus.entry(i);
            self.update_entry(i, &all)?;
            for (f, v) in self.fresh_docs.row_mut(e.doc).iter_mut().zip(&self.res) {
                *f += v;
            }
            if let Some(fw) = self.fresh_words.as_mut() {
                for (f, v) in fw.row_mut(e.word).iter_mut().zip(&self.res) {
                    *f += v;
                }
            }
        }
        self.all_topics = all;
        self.order = order;

        self.refresh_all();
        Ok(self.full_record())
    }

    /// Updates entry `i` on `topics` (ascending; all topics means full
    /// normalization). Leaves per-topic residuals in `self.res`.
    #[inline]
    fn update_entry(&mut self, i: usize, topics: &[usize]) -> crate::Result<()> {
        let e = self.corpus.entry(i);
        let k = self.cfg.num_topics;
        let r = if topics.len() == k {
            self.old.copy_from_slice(self.board.message(i));
            self.stats.compute_message_full(e, &self.old, &self.priors, &mut self.new);
            normalize_full(&mut self.new)?;
            let r = entry_residual(e.count, &self.old, &self.new, topics, &mut self.res);
            self.stats.apply_message(e, &self.old, &self.new);
            self.board.message_mut(i).copy_from_slice(&self.new);
            r
        } else {
            // only the selected components change, so work on them in place
            let msg = self.board.message_mut(i);
            let raw = &mut self.raw[..topics.len()];
            self.stats.compute_message(e, msg, &self.priors, topics, raw);
            rescale_to_mass(raw, msg, topics)?;
            let x = f64::from(e.count);
            let mut r = 0.0;
            for (&k, &new) in topics.iter().zip(raw.iter()) {
                let delta = new - msg[k];
                self.res[k] = x * delta.abs();
                r += self.res[k];
                self.stats.add_topic_delta(e, k, x * delta);
                msg[k] = new;
            }
            r
        };
        self.ledger.set_entry_residual(i, r);
        Ok(())
    }

    fn sweep_active(&mut self) -> crate::Result<TraceRecord> {
        let word_mode = self.word_index.is_some();
        let (lambda_units, lambda_k) = (self.cfg.lambda_d, self.cfg.lambda_k);
        let active = if word_mode {
            self.ledger.select_words(lambda_units)?
        } else {
            self.ledger.select_documents(lambda_units)
        };

        // topic subsets per active unit, ascending so that full subsets match RBP arithmetic
        let mut topic_sets = mem::take(&mut self.topic_sets);
        topic_sets.resize_with(active.len(), Vec::new);
        let mut order = mem::take(&mut self.order);
        order.clear();
        for (slot, &u) in active.iter().enumerate() {
            let set = &mut topic_sets[slot];
            if word_mode {
                self.ledger.select_word_topics_into(u, lambda_k, set)?;
            } else {
                self.ledger.select_topics_into(u, lambda_k, set);
            }
            set.sort_unstable();
            self.unit_slot[u] = slot;
            let fresh = match self.fresh_words.as_mut() {
                Some(f) => f.row_mut(u),
                None => self.fresh_docs.row_mut(u),
            };
            for &k in set.iter() {
                fresh[k] = 0.0;
            }
            match &self.word_index {
                Some(index) => order.extend_from_slice(index.entries_of(u)),
                None => order.extend(self.corpus.doc_range(u)),
            }
        }
        Self::sort_by_residual(&mut order, self.ledger.entry_res());

        let mut topic_updates = 0;
        for &i in &order {
            let e = self.corpus.entry(i);
            let unit = if word_mode { e.word } else { e.doc };
            let set = &topic_sets[self.unit_slot[unit]];
            self.update_entry(i, set)?;
            topic_updates += set.len();
            let fresh = match self.fresh_words.as_mut() {
                Some(f) => f.row_mut(unit),
                None => self.fresh_docs.row_mut(unit),
            };
            for &k in set {
                fresh[k] += self.res[k];
            }
        }

        for (slot, &u) in active.iter().enumerate() {
            let set = &topic_sets[slot];
            if word_mode {
                let fresh = self.fresh_words.as_ref().expect("word mode").row(u);
                self.ledger.word_residual_accumulate(u, fresh, set)?;
            } else {
                self.ledger.refresh_document(u, self.fresh_docs.row(u), set);
            }
            self.unit_slot[u] = usize::MAX;
        }
        self.ledger.resort_incremental();

        let entries_touched = order.len();
        self.order = order;
        self.topic_sets = topic_sets;
        Ok(TraceRecord {
            iteration: self.iteration,
            wall_seconds: 0.0,
            train_perplexity: None,
            total_residual: 0.0,
            docs_scanned: active.len(),
            avg_topics_scanned: if entries_touched == 0 {
                0.0
            } else {
                topic_updates as f64 / entries_touched as f64
            },
            entries_touched,
            topic_updates,
        })
    }
}
