use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::pairs::{write_pairs, WordPair};
use super::split::{SplitBundle, SplitConfig};
use crate::error::{Error, Result};

const HEADER: &str = "# semrel split manifest v1";

/// SHA-256 (hex) of the pair-file serialisation of `pairs`.
pub fn content_hash(pairs: &[WordPair]) -> Result<String> {
    let mut buf = Vec::new();
    write_pairs(&mut buf, pairs)?;
    Ok(hex::encode(Sha256::digest(&buf)))
}

/// Everything needed to reproduce and verify a split: the seed, the fractions, and the size
/// and content hash of each part.
///
/// Serialised as `key=value` lines under a version header. Parts are named `labeled`,
/// `validation`, `unlabeled` (hashed with its audit labels) and `test`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub seed: u64,
    pub config: SplitConfig,
    pub discarded: usize,
    pub parts: BTreeMap<String, (usize, String)>,
}

pub const PART_NAMES: [&str; 4] = ["labeled", "validation", "unlabeled", "test"];

fn bundle_parts(bundle: &SplitBundle) -> [(&'static str, Vec<WordPair>); 4] {
    [
        ("labeled", bundle.labeled.clone()),
        ("validation", bundle.validation.clone()),
        ("unlabeled", bundle.unlabeled.to_audit_pairs()),
        ("test", bundle.test.clone()),
    ]
}

impl SplitManifest {
    pub fn describe(bundle: &SplitBundle, config: SplitConfig, seed: u64, discarded: usize) -> Result<Self> {
        let mut parts = BTreeMap::new();
        for (name, pairs) in bundle_parts(bundle) {
            parts.insert(name.to_string(), (pairs.len(), content_hash(&pairs)?));
        }
        Ok(SplitManifest {
            seed,
            config,
            discarded,
            parts,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER}");
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "test_vocab_fraction={}", self.config.test_vocab_fraction);
        let _ = writeln!(out, "unlabeled_fraction={}", self.config.partition.unlabeled_fraction);
        let _ = writeln!(out, "validation_fraction={}", self.config.partition.validation_fraction);
        let _ = writeln!(out, "stratified={}", self.config.partition.stratified);
        let _ = writeln!(out, "discarded={}", self.discarded);
        for name in PART_NAMES {
            if let Some((count, hash)) = self.parts.get(name) {
                let _ = writeln!(out, "count.{name}={count}");
                let _ = writeln!(out, "sha256.{name}={hash}");
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == HEADER => {}
            _ => return Err(Error::format(1, "missing split manifest header")),
        }
        let mut kv = BTreeMap::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(i + 1, "expected key=value"))?;
            kv.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        fn take<T: std::str::FromStr>(kv: &BTreeMap<String, (usize, String)>, key: &str) -> Result<T> {
            let (line, v) = kv
                .get(key)
                .ok_or_else(|| Error::format(0, format!("missing key {key}")))?;
            v.parse()
                .map_err(|_| Error::format(*line, format!("bad value {v:?} for {key}")))
        }
        let mut config = SplitConfig {
            test_vocab_fraction: take(&kv, "test_vocab_fraction")?,
            ..Default::default()
        };
        config.partition.unlabeled_fraction = take(&kv, "unlabeled_fraction")?;
        config.partition.validation_fraction = take(&kv, "validation_fraction")?;
        config.partition.stratified = take(&kv, "stratified")?;
        let mut parts = BTreeMap::new();
        for name in PART_NAMES {
            let count = take(&kv, &format!("count.{name}"))?;
            let hash: String = take(&kv, &format!("sha256.{name}"))?;
            parts.insert(name.to_string(), (count, hash));
        }
        Ok(SplitManifest {
            seed: take(&kv, "seed")?,
            config,
            discarded: take(&kv, "discarded")?,
            parts,
        })
    }

    /// Checks sizes and hashes of `bundle` against the manifest.
    pub fn verify(&self, bundle: &SplitBundle) -> Result<()> {
        for (name, pairs) in bundle_parts(bundle) {
            let (count, hash) = self
                .parts
                .get(name)
                .ok_or_else(|| Error::invalid(format!("manifest lacks part {name}")))?;
            if *count != pairs.len() || *hash != content_hash(&pairs)? {
                return Err(Error::invalid(format!("part {name} does not match the manifest")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_split, Relation};

    #[test]
    fn manifest_round_trips_and_verifies() {
        let mut pairs = Vec::new();
        for i in 0..60 {
            let label = if i % 2 == 0 { Relation::Hypernym } else { Relation::Random };
            pairs.push(WordPair::new(format!("w{}", i % 17), format!("v{}", i % 13), label).unwrap());
        }
        let (bundle, discarded) = make_split(&pairs, SplitConfig::default(), 4).unwrap();
        let m = SplitManifest::describe(&bundle, SplitConfig::default(), 4, discarded).unwrap();
        let parsed = SplitManifest::parse(&m.to_text()).unwrap();
        assert_eq!(parsed, m);
        parsed.verify(&bundle).unwrap();
        let mut tampered = bundle.clone();
        tampered.labeled.pop();
        assert!(parsed.verify(&tampered).is_err());
    }
}
