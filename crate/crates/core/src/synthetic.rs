//! Synthetic data with known structure, for tests, benchmarks and smoke runs.

use std::collections::HashSet;

use rand::Rng;

use crate::data::{EmbeddingTable, Relation, WordPair};
use crate::error::{Error, Result};
use crate::multitask::LabeledSet;
use crate::nn::Matrix;
use crate::seed::{derive_seed, rng_from_seed};

fn unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// `n` points in `[-3, 3]^dim` labeled by the side of a random hyperplane through the origin.
/// Points closer than `margin / 2` to the plane are rejected, so the classes are separated by
/// at least `margin`.
pub fn separable_points(n: usize, dim: usize, margin: f64, seed: u64) -> LabeledSet {
    let mut rng = rng_from_seed(seed);
    let w = unit_vector(&mut rng, dim);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while rows.len() < n {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        if s.abs() < margin / 2.0 {
            continue;
        }
        labels.push(usize::from(s > 0.0));
        rows.push(x);
    }
    let features = Matrix::from_rows(&rows).expect("rows share one width");
    LabeledSet { features, labels }
}

/// Parameters of a synthetic relation dataset.
///
/// Every word gets a latent vector `z` in `[-1, 1]^latent`; its embedding is a fixed random
/// projection of `z` plus uniform noise. A pair `(x, y)` scores `u · (z_x ⊕ z_y)` for one random
/// unit vector `u`: pairs scoring at least `margin` become relation pairs (assigned round-robin
/// to `relations`, so all relations share one decision boundary) and pairs scoring at most
/// `-margin` become random pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSpec {
    pub words: usize,
    pub dimension: usize,
    pub latent: usize,
    pub pairs_per_class: usize,
    pub relations: Vec<Relation>,
    pub margin: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        SuiteSpec {
            words: 600,
            dimension: 300,
            latent: 4,
            pairs_per_class: 400,
            relations: vec![Relation::Hypernym, Relation::Cohyponym],
            margin: 0.25,
            noise: 0.02,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSuite {
    pub embeddings: EmbeddingTable,
    pub pairs: Vec<WordPair>,
}

pub fn relation_suite(spec: &SuiteSpec) -> Result<SyntheticSuite> {
    if spec.words < 2 || spec.dimension == 0 || spec.latent == 0 {
        return Err(Error::invalid("synthetic suite needs >= 2 words and positive dimensions"));
    }
    if spec.relations.is_empty() || spec.relations.contains(&Relation::Random) {
        return Err(Error::invalid("synthetic suite needs non-random relations"));
    }
    let mut rng = rng_from_seed(derive_seed(spec.seed, "synthetic-embeddings"));
    let scale = 1.0 / (spec.latent as f64).sqrt();
    let projection: Vec<Vec<f64>> = (0..spec.dimension)
        .map(|_| (0..spec.latent).map(|_| rng.gen_range(-scale..scale)).collect())
        .collect();
    let latents: Vec<Vec<f64>> = (0..spec.words)
        .map(|_| (0..spec.latent).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let names: Vec<String> = (0..spec.words).map(|i| format!("w{i:05}")).collect();
    let mut embeddings = EmbeddingTable::new(spec.dimension);
    for (name, z) in names.iter().zip(&latents) {
        let v: Vec<f32> = projection
            .iter()
            .map(|row| {
                let clean: f64 = row.iter().zip(z).map(|(a, b)| a * b).sum();
                (clean + spec.noise * rng.gen_range(-1.0..1.0)) as f32
            })
            .collect();
        embeddings.insert(name.clone(), v)?;
    }

    let mut rng = rng_from_seed(derive_seed(spec.seed, "synthetic-pairs"));
    let u = unit_vector(&mut rng, 2 * spec.latent);
    let mut counts = vec![0usize; spec.relations.len()];
    let mut random = 0usize;
    let mut next_rel = 0usize;
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    let target = spec.pairs_per_class;
    let max_attempts = 200 * target * (spec.relations.len() + 1) + 10_000;
    for _ in 0..max_attempts {
        if random >= target && counts.iter().all(|&c| c >= target) {
            break;
        }
        let (a, b) = (rng.gen_range(0..spec.words), rng.gen_range(0..spec.words));
        if a == b || !seen.insert((a.min(b), a.max(b))) {
            continue;
        }
        let s: f64 = latents[a]
            .iter()
            .chain(&latents[b])
            .zip(&u)
            .map(|(z, w)| z * w)
            .sum();
        let label = if s >= spec.margin {
            let Some(k) = (0..counts.len())
                .map(|o| (next_rel + o) % counts.len())
                .find(|&k| counts[k] < target)
            else {
                continue;
            };
            counts[k] += 1;
            next_rel = (k + 1) % counts.len();
            spec.relations[k]
        } else if s <= -spec.margin && random < target {
            random += 1;
            Relation::Random
        } else {
            continue;
        };
        pairs.push(WordPair::new(names[a].clone(), names[b].clone(), label)?);
    }
    Ok(SyntheticSuite { embeddings, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_points_respect_margin() {
        let data = separable_points(200, 2, 1.0, 3);
        assert_eq!(data.len(), 200);
        assert!(data.labels.contains(&0) && data.labels.contains(&1));
    }

    #[test]
    fn suite_is_balanced_and_deterministic() {
        let spec = SuiteSpec {
            words: 200,
            dimension: 8,
            pairs_per_class: 50,
            ..Default::default()
        };
        let a = relation_suite(&spec).unwrap();
        let b = relation_suite(&spec).unwrap();
        assert_eq!(a.pairs, b.pairs);
        for rel in [Relation::Hypernym, Relation::Cohyponym, Relation::Random] {
            assert_eq!(a.pairs.iter().filter(|p| p.label == rel).count(), 50);
        }
        assert_eq!(a.embeddings.len(), 200);
    }
}
