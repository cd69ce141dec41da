use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;

use super::pairs::{Relation, TaskSpec, WordPair};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};

/// Sorted set of words appearing in `pairs`.
pub fn vocabulary<'a, I>(pairs: I) -> BTreeSet<&'a str>
where
    I: IntoIterator<Item = &'a WordPair>,
{
    pairs.into_iter().flat_map(|p| p.words()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexicalSplit {
    pub train: Vec<WordPair>,
    pub test: Vec<WordPair>,
    /// Pairs dropped because their words fell into different lots, plus repeated pairs.
    pub discarded: usize,
}

/// Splits pairs so that train and test vocabularies are disjoint.
///
/// The sorted vocabulary is shuffled and its first `round(fraction * |V|)` words (at least one,
/// at most `|V| - 1`) form the test lot. A pair goes to test when both words are in the test
/// lot, to train when neither is, and is discarded otherwise. Repeated `(x, y)` pairs after
/// the first are discarded too.
pub fn lexical_split(pairs: &[WordPair], test_vocab_fraction: f64, seed: u64) -> Result<LexicalSplit> {
    if !(test_vocab_fraction > 0.0 && test_vocab_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test vocabulary fraction must lie in (0, 1), got {test_vocab_fraction}"
        )));
    }
    let mut vocab: Vec<&str> = vocabulary(pairs).into_iter().collect();
    let mut rng = rng_from_seed(derive_seed(seed, "lexical-split"));
    vocab.shuffle(&mut rng);
    let n_test = ((test_vocab_fraction * vocab.len() as f64).round() as usize)
        .clamp(1, vocab.len().saturating_sub(1).max(1));
    let test_lot: HashSet<&str> = vocab[..n_test.min(vocab.len())].iter().copied().collect();
    lexical_split_with_lots(pairs, &test_lot)
}

/// Lexical split with an explicit test-lot vocabulary.
pub fn lexical_split_with_lots(pairs: &[WordPair], test_lot: &HashSet<&str>) -> Result<LexicalSplit> {
    let mut seen = HashSet::new();
    let mut split = LexicalSplit {
        train: Vec::new(),
        test: Vec::new(),
        discarded: 0,
    };
    for p in pairs {
        if !seen.insert((p.x.as_str(), p.y.as_str())) {
            split.discarded += 1;
            continue;
        }
        match (test_lot.contains(p.x.as_str()), test_lot.contains(p.y.as_str())) {
            (true, true) => split.test.push(p.clone()),
            (false, false) => split.train.push(p.clone()),
            _ => split.discarded += 1,
        }
    }
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::EmptySplit(format!(
            "lexical split left {} train and {} test pairs ({} discarded)",
            split.train.len(),
            split.test.len(),
            split.discarded
        )));
    }
    Ok(split)
}

/// Pairs whose labels are withheld from learners.
///
/// The gold labels are kept for simulation bookkeeping only (task filtering, pseudo-label
/// noise audits) and are reachable solely through [`UnlabeledPool::audit_labels`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnlabeledPool {
    pairs: Vec<(String, String)>,
    sealed: Vec<Relation>,
}

impl UnlabeledPool {
    pub fn from_labeled(pairs: Vec<WordPair>) -> Self {
        let mut pool = UnlabeledPool::default();
        for p in pairs {
            pool.pairs.push((p.x, p.y));
            pool.sealed.push(p.label);
        }
        pool
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    /// Gold labels, for auditing a simulated semi-supervised run.
    pub fn audit_labels(&self) -> &[Relation] {
        &self.sealed
    }

    /// The pool with its audit labels re-attached, e.g. for writing to disk.
    pub fn to_audit_pairs(&self) -> Vec<WordPair> {
        self.pairs
            .iter()
            .zip(&self.sealed)
            .map(|((x, y), &label)| WordPair {
                x: x.clone(),
                y: y.clone(),
                label,
            })
            .collect()
    }

    /// Members belonging to `task`, as placeholder pairs carrying the audit label.
    pub fn task_members(&self, task: TaskSpec) -> Vec<WordPair> {
        self.to_audit_pairs()
            .into_iter()
            .filter(|p| task.class_of(p.label).is_some())
            .collect()
    }
}

/// Labeled set L, validation set V, unlabeled pool U and the lexically held-out test set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitBundle {
    pub labeled: Vec<WordPair>,
    pub validation: Vec<WordPair>,
    pub unlabeled: UnlabeledPool,
    pub test: Vec<WordPair>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionConfig {
    pub unlabeled_fraction: f64,
    pub validation_fraction: f64,
    pub stratified: bool,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            unlabeled_fraction: 0.6,
            validation_fraction: 0.3,
            stratified: true,
        }
    }
}

/// Splits train-side pairs into L, V and U.
///
/// Within each relation (or over all pairs when not stratified) the pairs are shuffled;
/// `round(u * n)` go to U and, of the remaining `r`, `round(v * r)` go to V and the rest to L.
/// Each part keeps the input order. The test set of the returned bundle is empty.
pub fn partition_train(pairs: &[WordPair], config: PartitionConfig, seed: u64) -> Result<SplitBundle> {
    for (name, f) in [
        ("unlabeled", config.unlabeled_fraction),
        ("validation", config.validation_fraction),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::invalid(format!("{name} fraction must lie in (0, 1), got {f}")));
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptySplit("no train-side pairs to partition".into()));
    }
    let mut groups: BTreeMap<Option<Relation>, Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        let key = config.stratified.then_some(p.label);
        groups.entry(key).or_default().push(i);
    }
    if config.stratified {
        let small: Vec<String> = groups
            .iter()
            .filter(|(_, idx)| idx.len() < 3)
            .map(|(rel, idx)| format!("{} ({} pairs)", rel.expect("stratified key"), idx.len()))
            .collect();
        if !small.is_empty() {
            return Err(Error::Stratification(small));
        }
    }

    #[derive(Clone, Copy)]
    enum Part {
        Labeled,
        Validation,
        Unlabeled,
    }
    let mut part = vec![Part::Labeled; pairs.len()];
    let mut rng = rng_from_seed(derive_seed(seed, "partition"));
    for idx in groups.values_mut() {
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_u = (config.unlabeled_fraction * n as f64).round() as usize;
        let rest = n - n_u;
        let n_v = (config.validation_fraction * rest as f64).round() as usize;
        for (k, &i) in idx.iter().enumerate() {
            part[i] = if k < n_u {
                Part::Unlabeled
            } else if k < n_u + n_v {
                Part::Validation
            } else {
                Part::Labeled
            };
        }
    }

    let mut bundle = SplitBundle::default();
    let mut unlabeled = Vec::new();
    for (p, kind) in pairs.iter().zip(part) {
        match kind {
            Part::Labeled => bundle.labeled.push(p.clone()),
            Part::Validation => bundle.validation.push(p.clone()),
            Part::Unlabeled => unlabeled.push(p.clone()),
        }
    }
    bundle.unlabeled = UnlabeledPool::from_labeled(unlabeled);
    Ok(bundle)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub test_vocab_fraction: f64,
    pub partition: PartitionConfig,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_vocab_fraction: 0.4,
            partition: PartitionConfig::default(),
        }
    }
}

/// Lexical split followed by the L/V/U partition of the train side.
/// Returns the bundle and the number of pairs discarded by the lexical split.
pub fn make_split(pairs: &[WordPair], config: SplitConfig, seed: u64) -> Result<(SplitBundle, usize)> {
    let lex = lexical_split(pairs, config.test_vocab_fraction, seed)?;
    let mut bundle = partition_train(&lex.train, config.partition, seed)?;
    bundle.test = lex.test;
    Ok((bundle, lex.discarded))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: &str, y: &str, l: Relation) -> WordPair {
        WordPair::new(x, y, l).unwrap()
    }

    #[test]
    fn block_diagonal_split_found_by_seed_search() {
        let pairs = vec![p("a", "b", Relation::Hypernym), p("c", "d", Relation::Random)];
        let found = (0..200u64).find_map(|seed| {
            let s = lexical_split(&pairs, 0.5, seed).ok()?;
            (s.test == vec![pairs[1].clone()]).then_some(s)
        });
        let s = found.expect("some seed puts {c, d} in the test lot");
        assert_eq!(s.train, vec![pairs[0].clone()]);
        assert_eq!(s.discarded, 0);
    }

    #[test]
    fn mixed_pair_is_discarded() {
        let pairs = vec![p("a", "c", Relation::Hypernym)];
        let lot: HashSet<&str> = ["c"].into_iter().collect();
        match lexical_split_with_lots(&pairs, &lot) {
            Err(Error::EmptySplit(msg)) => assert!(msg.contains("1 discarded"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(lexical_split(&pairs, 0.5, 1).is_err());
        assert!(lexical_split(&pairs, 1.0, 1).is_err());
    }

    fn one_class(n: usize) -> Vec<WordPair> {
        (0..n).map(|i| p(&format!("x{i}"), &format!("y{i}"), Relation::Hypernym)).collect()
    }

    #[test]
    fn hundred_pairs_partition_60_12_28() {
        let b = partition_train(&one_class(100), PartitionConfig::default(), 3).unwrap();
        assert_eq!((b.unlabeled.len(), b.validation.len(), b.labeled.len()), (60, 12, 28));
    }

    #[test]
    fn two_balanced_classes_stay_balanced() {
        let mut pairs = one_class(10);
        pairs.extend((0..10).map(|i| p(&format!("r{i}"), &format!("s{i}"), Relation::Random)));
        let b = partition_train(&pairs, PartitionConfig::default(), 9).unwrap();
        let count = |ps: &[WordPair], r| ps.iter().filter(|q| q.label == r).count() as i64;
        for part in [b.labeled.clone(), b.validation.clone(), b.unlabeled.to_audit_pairs()] {
            assert!((count(&part, Relation::Hypernym) - count(&part, Relation::Random)).abs() <= 1);
        }
        let mut all: Vec<WordPair> = b.labeled.clone();
        all.extend(b.validation.clone());
        all.extend(b.unlabeled.to_audit_pairs());
        all.sort();
        let mut input = pairs.clone();
        input.sort();
        assert_eq!(all, input);
    }

    #[test]
    fn tiny_class_is_a_stratification_error() {
        let mut pairs = one_class(10);
        pairs.push(p("q", "r", Relation::Synonym));
        match partition_train(&pairs, PartitionConfig::default(), 0) {
            Err(Error::Stratification(classes)) => assert!(classes[0].starts_with("synonym")),
            other => panic!("unexpected {other:?}"),
        }
        let unstratified = PartitionConfig {
            stratified: false,
            ..Default::default()
        };
        assert!(partition_train(&pairs, unstratified, 0).is_ok());
    }

    #[test]
    fn partition_is_deterministic() {
        let pairs = one_class(37);
        let a = partition_train(&pairs, PartitionConfig::default(), 5).unwrap();
        let b = partition_train(&pairs, PartitionConfig::default(), 5).unwrap();
        assert_eq!(a, b);
    }
}
