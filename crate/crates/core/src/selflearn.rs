//! Stratified self-learning.
//!
//! The learner is first trained on the labeled sets `L0` and scored on the validation sets
//! (`V0`). Each iteration then scores the unlabeled pools, moves `N` confident members of each
//! pool into its labeled set with pseudo-labels stratified by `L0`'s class distribution,
//! retrains, and re-scores. The loop continues while some pool is non-empty and the latest score
//! is at least `V0` (the initial score, not the previous one). The best-scoring model is
//! returned, so the result is never worse on validation than the purely supervised one.
//!
//! Several tasks can be run at once (for multi-task learners); each keeps its own pools and
//! quotas, and the score is whatever the trainer reports for all tasks together.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::argmax;
use crate::seed::derive_seed;

/// An item with its class index.
pub type Labeled<I> = (I, usize);

/// A learner that self-learning can drive.
pub trait SelfTrainer {
    type Item: Clone;
    type Model: Clone;

    /// Trains on per-task labeled sets. `warm_start` carries the previous model when retraining
    /// in warm-start mode and is `None` otherwise.
    fn train(
        &mut self,
        warm_start: Option<&Self::Model>,
        labeled: &[Vec<Labeled<Self::Item>>],
        validation: &[Vec<Labeled<Self::Item>>],
        seed: u64,
    ) -> Result<Self::Model>;

    /// Class-probability rows for `items` of task `task`.
    fn class_probs(&self, model: &Self::Model, task: usize, items: &[Self::Item]) -> Result<Vec<Vec<f64>>>;

    /// Validation score; defaults to the mean over tasks of argmax accuracy.
    fn score(&self, model: &Self::Model, validation: &[Vec<Labeled<Self::Item>>]) -> Result<f64> {
        let mut total = 0.0;
        for (t, set) in validation.iter().enumerate() {
            let items: Vec<Self::Item> = set.iter().map(|(i, _)| i.clone()).collect();
            let probs = self.class_probs(model, t, &items)?;
            let correct = probs
                .iter()
                .zip(set)
                .filter(|(p, (_, g))| argmax(p) == *g)
                .count();
            total += correct as f64 / set.len().max(1) as f64;
        }
        Ok(total / validation.len().max(1) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrainMode {
    WarmStart,
    FromScratch,
}

impl std::str::FromStr for RetrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "warm_start" => Ok(RetrainMode::WarmStart),
            "from_scratch" => Ok(RetrainMode::FromScratch),
            _ => Err(Error::invalid(format!("unknown retrain mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfLearnConfig {
    /// Pairs pseudo-labeled per task and iteration; `None` means
    /// `max(32, ceil(0.05 * |U0|))` per task.
    pub n_per_iteration: Option<usize>,
    pub max_iterations: usize,
    pub retrain_mode: RetrainMode,
    pub seed: u64,
}

impl Default for SelfLearnConfig {
    fn default() -> Self {
        SelfLearnConfig {
            n_per_iteration: None,
            max_iterations: 1000,
            retrain_mode: RetrainMode::WarmStart,
            seed: 0,
        }
    }
}

/// Default per-iteration quota for a pool of `pool_size`.
pub fn default_n(pool_size: usize) -> usize {
    32.max(pool_size.div_ceil(20))
}

/// Splits `n` into per-class quotas proportional to `distribution` by largest remainder.
/// Remainder ties go to the lower class index.
pub fn largest_remainder(n: usize, distribution: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = distribution.iter().map(|p| p * n as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..distribution.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().take(n.saturating_sub(assigned)) {
        quotas[c] += 1;
    }
    quotas
}

/// Picks up to `n` pool members with stratified pseudo-labels.
///
/// Quotas come from [`largest_remainder`] over `min(n, pool)`. Classes are served in
/// descending quota order (ties by class index); class `c` takes the untaken members with the
/// highest probability for `c` (ties by lower member index) and labels them `c`. Whatever a
/// class cannot fill is redistributed over the remaining classes by the same rule.
pub fn stratified_select(class_probs: &[Vec<f64>], base_distribution: &[f64], n: usize) -> Result<Vec<(usize, usize)>> {
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    let k = base_distribution.len();
    if k == 0 {
        return Err(Error::invalid("empty class distribution"));
    }
    let total: f64 = base_distribution.iter().sum();
    if base_distribution.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("class distribution must be non-negative and sum to 1"));
    }
    if let Some(row) = class_probs.iter().find(|r| r.len() != k) {
        return Err(Error::invalid(format!(
            "probability row has {} classes, distribution has {k}",
            row.len()
        )));
    }

    let target = n.min(class_probs.len());
    let mut taken = vec![false; class_probs.len()];
    let mut selected = Vec::with_capacity(target);
    let mut open: Vec<usize> = (0..k).collect();
    let mut remaining = target;
    while remaining > 0 && !open.is_empty() {
        let mass: f64 = open.iter().map(|&c| base_distribution[c]).sum();
        let dist: Vec<f64> = if mass > 0.0 {
            open.iter().map(|&c| base_distribution[c] / mass).collect()
        } else {
            vec![1.0 / open.len() as f64; open.len()]
        };
        let quotas = largest_remainder(remaining, &dist);
        let mut order: Vec<usize> = (0..open.len()).collect();
        order.sort_by(|&a, &b| quotas[b].cmp(&quotas[a]).then(open[a].cmp(&open[b])));
        let mut exhausted = Vec::new();
        let mut filled = 0;
        for &o in &order {
            let class = open[o];
            let mut candidates: Vec<usize> = (0..class_probs.len()).filter(|&i| !taken[i]).collect();
            candidates.sort_by(|&a, &b| class_probs[b][class].total_cmp(&class_probs[a][class]).then(a.cmp(&b)));
            let got = quotas[o].min(candidates.len());
            for &i in &candidates[..got] {
                taken[i] = true;
                selected.push((i, class));
            }
            filled += got;
            if got < quotas[o] {
                exhausted.push(class);
            }
        }
        remaining -= filled;
        if filled == 0 && exhausted.is_empty() {
            break;
        }
        open.retain(|c| !exhausted.contains(c));
    }
    Ok(selected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Exhausted,
    Degraded,
    MaxIterations,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Exhausted => "exhausted",
            StopReason::Degraded => "degraded",
            StopReason::MaxIterations => "max_iterations",
        })
    }
}

/// One line of the self-learning log.
///
/// Serialised as one JSON object per line:
/// `{"t":1,"labeled":[..],"unlabeled":[..],"score":0.81,"stopped_reason":null}`, where
/// `labeled`/`unlabeled` hold per-task set sizes and `stopped_reason` is set on the last record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub score: f64,
    pub stopped_reason: Option<StopReason>,
}

impl IterationRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialises")
    }
}

/// Per-task labeled, unlabeled and validation data.
#[derive(Debug, Clone)]
pub struct TaskSets<I> {
    pub labeled: Vec<Labeled<I>>,
    pub unlabeled: Vec<I>,
    pub validation: Vec<Labeled<I>>,
}

/// State of one task's sets after the loop.
#[derive(Debug, Clone)]
pub struct TaskState<I> {
    /// `L0` followed by pseudo-labeled items in the order they were added.
    pub labeled: Vec<Labeled<I>>,
    pub initial_labeled: usize,
    /// Remaining pool as `(index into U0, item)`.
    pub unlabeled: Vec<(usize, I)>,
    /// `(iteration, index into U0, pseudo-label)` for every moved item.
    pub added: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct SelfLearnOutcome<M, I> {
    pub model: M,
    pub best_iteration: usize,
    /// `scores[t]` is `V_t`; `scores[0]` is the supervised baseline.
    pub scores: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub tasks: Vec<TaskState<I>>,
    pub stop_reason: StopReason,
}

impl<M, I> SelfLearnOutcome<M, I> {
    pub fn iterations(&self) -> usize {
        self.scores.len() - 1
    }
}

fn class_distribution(labels: &[Labeled<impl Sized>], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for (_, c) in labels {
        counts[*c] += 1;
    }
    counts.iter().map(|&c| c as f64 / labels.len() as f64).collect()
}

pub fn self_learn<T: SelfTrainer>(
    trainer: &mut T,
    tasks: Vec<TaskSets<T::Item>>,
    config: &SelfLearnConfig,
) -> Result<SelfLearnOutcome<T::Model, T::Item>> {
    if tasks.is_empty() {
        return Err(Error::invalid("self-learning needs at least one task"));
    }
    if config.n_per_iteration == Some(0) {
        return Err(Error::invalid("N must be at least 1"));
    }
    let mut validation = Vec::with_capacity(tasks.len());
    let mut states = Vec::with_capacity(tasks.len());
    let mut quotas = Vec::with_capacity(tasks.len());
    for (i, t) in tasks.into_iter().enumerate() {
        if t.labeled.is_empty() {
            return Err(Error::invalid(format!("task {i} has an empty labeled set")));
        }
        if t.validation.is_empty() {
            return Err(Error::invalid(format!("task {i} has an empty validation set")));
        }
        quotas.push(config.n_per_iteration.unwrap_or_else(|| default_n(t.unlabeled.len())));
        validation.push(t.validation);
        states.push(TaskState {
            initial_labeled: t.labeled.len(),
            labeled: t.labeled,
            unlabeled: t.unlabeled.into_iter().enumerate().collect(),
            added: Vec::new(),
        });
    }

    let labeled_sets = |states: &[TaskState<T::Item>]| -> Vec<Vec<Labeled<T::Item>>> {
        states.iter().map(|s| s.labeled.clone()).collect()
    };
    let record = |t: usize, states: &[TaskState<T::Item>], score: f64| IterationRecord {
        t,
        labeled: states.iter().map(|s| s.labeled.len()).collect(),
        unlabeled: states.iter().map(|s| s.unlabeled.len()).collect(),
        score,
        stopped_reason: None,
    };

    let mut model = trainer.train(None, &labeled_sets(&states), &validation, derive_seed(config.seed, "train/0"))?;
    let v0 = trainer.score(&model, &validation)?;
    let mut scores = vec![v0];
    let mut records = vec![record(0, &states, v0)];
    let mut best = (model.clone(), 0usize, v0);
    let mut distributions: Vec<Option<Vec<f64>>> = vec![None; states.len()];

    let mut t = 0;
    let stop_reason = loop {
        if states.iter().all(|s| s.unlabeled.is_empty()) {
            break StopReason::Exhausted;
        }
        if scores[t] < v0 {
            break StopReason::Degraded;
        }
        if t >= config.max_iterations {
            break StopReason::MaxIterations;
        }
        let mut moves = Vec::with_capacity(states.len());
        for (task, state) in states.iter().enumerate() {
            if state.unlabeled.is_empty() {
                moves.push(Vec::new());
                continue;
            }
            let items: Vec<T::Item> = state.unlabeled.iter().map(|(_, it)| it.clone()).collect();
            let probs = trainer.class_probs(&model, task, &items)?;
            if probs.len() != items.len() {
                return Err(Error::invalid(format!(
                    "trainer returned {} probability rows for {} items",
                    probs.len(),
                    items.len()
                )));
            }
            let classes = probs.first().map_or(0, Vec::len);
            let dist = distributions[task].get_or_insert_with(|| class_distribution(&state.labeled[..state.initial_labeled], classes));
            moves.push(stratified_select(&probs, dist, quotas[task])?);
        }
        t += 1;
        for (state, chosen) in states.iter_mut().zip(moves) {
            let mut take = vec![None; state.unlabeled.len()];
            for (pos, label) in chosen {
                take[pos] = Some(label);
            }
            let pool = std::mem::take(&mut state.unlabeled);
            for ((orig, item), pick) in pool.into_iter().zip(take) {
                match pick {
                    Some(label) => {
                        state.added.push((t, orig, label));
                        state.labeled.push((item, label));
                    }
                    None => state.unlabeled.push((orig, item)),
                }
            }
        }
        let warm = match config.retrain_mode {
            RetrainMode::WarmStart => Some(&model),
            RetrainMode::FromScratch => None,
        };
        let seed = derive_seed(config.seed, &format!("train/{t}"));
        model = trainer.train(warm, &labeled_sets(&states), &validation, seed)?;
        let vt = trainer.score(&model, &validation)?;
        log::debug!("self-learning iteration {t}: score {vt:.4} (baseline {v0:.4})");
        scores.push(vt);
        records.push(record(t, &states, vt));
        if vt > best.2 {
            best = (model.clone(), t, vt);
        }
    };
    if let Some(last) = records.last_mut() {
        last.stopped_reason = Some(stop_reason);
    }
    Ok(SelfLearnOutcome {
        model: best.0,
        best_iteration: best.1,
        scores,
        records,
        tasks: states,
        stop_reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Items are plain numbers; probabilities are fixed per item; scores are scripted.
    struct Scripted {
        scores: Vec<f64>,
        trained: usize,
    }

    impl SelfTrainer for Scripted {
        type Item = f64;
        type Model = usize;

        fn train(&mut self, _: Option<&usize>, _: &[Vec<Labeled<f64>>], _: &[Vec<Labeled<f64>>], _: u64) -> Result<usize> {
            self.trained += 1;
            Ok(self.trained - 1)
        }

        fn class_probs(&self, _: &usize, _: usize, items: &[f64]) -> Result<Vec<Vec<f64>>> {
            Ok(items.iter().map(|&x| vec![1.0 - x, x]).collect())
        }

        fn score(&self, model: &usize, _: &[Vec<Labeled<f64>>]) -> Result<f64> {
            Ok(self.scores[(*model).min(self.scores.len() - 1)])
        }
    }

    fn sets(labeled: usize, unlabeled: usize) -> TaskSets<f64> {
        TaskSets {
            labeled: (0..labeled).map(|i| (0.5, i % 2)).collect(),
            unlabeled: (0..unlabeled).map(|i| (i as f64 + 0.5) / unlabeled as f64).collect(),
            validation: vec![(0.5, 0)],
        }
    }

    #[test]
    fn even_split_takes_top_two_per_class() {
        let probs: Vec<Vec<f64>> = [0.9, 0.1, 0.8, 0.2, 0.6, 0.4, 0.95, 0.05]
            .iter()
            .map(|&p| vec![p, 1.0 - p])
            .collect();
        let mut sel = stratified_select(&probs, &[0.5, 0.5], 4).unwrap();
        sel.sort();
        assert_eq!(sel, vec![(0, 0), (1, 1), (6, 0), (7, 1)]);
    }

    #[test]
    fn largest_remainder_quotas() {
        assert_eq!(largest_remainder(4, &[2.0 / 3.0, 1.0 / 3.0]), vec![3, 1]);
        assert_eq!(largest_remainder(5, &[0.5, 0.5]), vec![3, 2]);
        assert_eq!(largest_remainder(7, &[0.2, 0.3, 0.5]).iter().sum::<usize>(), 7);
    }

    #[test]
    fn small_pool_is_taken_whole() {
        let probs = vec![vec![0.3, 0.7], vec![0.6, 0.4]];
        let sel = stratified_select(&probs, &[0.5, 0.5], 5).unwrap();
        assert_eq!(sel.len(), 2);
        assert!(stratified_select(&probs, &[0.5, 0.5], 0).is_err());
    }

    #[test]
    fn empty_pool_returns_baseline() {
        let mut tr = Scripted { scores: vec![0.7], trained: 0 };
        let out = self_learn(&mut tr, vec![sets(4, 0)], &SelfLearnConfig::default()).unwrap();
        assert_eq!(out.iterations(), 0);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.model, 0);
        assert_eq!(out.stop_reason, StopReason::Exhausted);
    }

    #[test]
    fn degradation_stops_and_reverts() {
        let mut tr = Scripted {
            scores: vec![0.7, 0.6, 0.9],
            trained: 0,
        };
        let config = SelfLearnConfig {
            n_per_iteration: Some(2),
            ..Default::default()
        };
        let out = self_learn(&mut tr, vec![sets(4, 10)], &config).unwrap();
        assert_eq!(out.iterations(), 1);
        assert_eq!(out.model, 0);
        assert_eq!(out.stop_reason, StopReason::Degraded);
        assert_eq!(out.records.last().unwrap().stopped_reason, Some(StopReason::Degraded));
    }

    #[test]
    fn compares_against_initial_score_not_previous() {
        // 0.7 -> 0.9 -> 0.8: 0.8 < 0.9 but >= 0.7, so the loop continues.
        let mut tr = Scripted {
            scores: vec![0.7, 0.9, 0.8, 0.75],
            trained: 0,
        };
        let config = SelfLearnConfig {
            n_per_iteration: Some(2),
            ..Default::default()
        };
        let out = self_learn(&mut tr, vec![sets(4, 6)], &config).unwrap();
        assert_eq!(out.iterations(), 3);
        assert_eq!(out.best_iteration, 1);
        assert_eq!(out.model, 1);
    }

    #[test]
    fn n_equal_to_pool_takes_one_iteration() {
        let mut tr = Scripted { scores: vec![0.5], trained: 0 };
        let config = SelfLearnConfig {
            n_per_iteration: Some(10),
            ..Default::default()
        };
        let out = self_learn(&mut tr, vec![sets(4, 10)], &config).unwrap();
        assert_eq!(out.iterations(), 1);
        assert_eq!(out.tasks[0].labeled.len(), 14);
        assert!(out.tasks[0].unlabeled.is_empty());
        assert_eq!(out.stop_reason, StopReason::Exhausted);
    }

    #[test]
    fn log_lines_are_json() {
        let rec = IterationRecord {
            t: 2,
            labeled: vec![10],
            unlabeled: vec![3],
            score: 0.5,
            stopped_reason: Some(StopReason::Exhausted),
        };
        let line = rec.to_json_line();
        assert_eq!(
            line,
            r#"{"t":2,"labeled":[10],"unlabeled":[3],"score":0.5,"stopped_reason":"exhausted"}"#
        );
        assert_eq!(serde_json::from_str::<IterationRecord>(&line).unwrap(), rec);
    }

    #[test]
    fn empty_labeled_set_is_rejected() {
        let mut tr = Scripted { scores: vec![0.5], trained: 0 };
        assert!(self_learn(&mut tr, vec![sets(0, 3)], &SelfLearnConfig::default()).is_err());
    }
}
