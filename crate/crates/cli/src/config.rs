//! Experiment configuration.
//!
//! Config files are flat `key = value` lists. `#` starts a comment line, and a line
//! `include <path>` splices another file in at that point. Later assignments override earlier
//! ones, so a shared hyperparameter block can be included first and then refined. Relative paths
//! are resolved against the directory of the file that names them.
//!
//! Path keys can also be overridden from the environment (`SEMREL_PAIRS`, `SEMREL_EMBEDDINGS`,
//! `SEMREL_SPLIT_DIR`, `SEMREL_OUT_DIR`); other keys cannot. Command-line `--set key=value`
//! assignments are applied last.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use semrel::data::{SplitConfig, TaskSpec};
use semrel::eval::LogRegConfig;
use semrel::multitask::TrainConfig;
use semrel::selflearn::{RetrainMode, SelfLearnConfig};

use crate::error::{CliError, CliResult};

/// Every key a config may set, in canonical order.
pub const KEYS: &[&str] = &[
    "pairs",
    "embeddings",
    "split_dir",
    "out_dir",
    "tasks",
    "regimes",
    "hidden",
    "batch_size",
    "epochs",
    "patience",
    "learning_rate",
    "rho",
    "test_vocab_fraction",
    "unlabeled_fraction",
    "validation_fraction",
    "stratified",
    "n_per_iteration",
    "max_iterations",
    "retrain_mode",
    "logreg_lambda",
    "logreg_epochs",
    "logreg_learning_rate",
];

const PATH_KEYS: &[&str] = &["pairs", "embeddings", "split_dir", "out_dir"];

/// Keys that do not affect results and are left out of the config hash.
const UNHASHED_KEYS: &[&str] = &["out_dir"];

pub const ENV_OVERRIDES: &[(&str, &str)] = &[
    ("SEMREL_PAIRS", "pairs"),
    ("SEMREL_EMBEDDINGS", "embeddings"),
    ("SEMREL_SPLIT_DIR", "split_dir"),
    ("SEMREL_OUT_DIR", "out_dir"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    BaselineMajority,
    BaselineLogreg,
    NnSingle,
    SelfLearning,
    Multitask,
    MultitaskSelfLearning,
}

impl Regime {
    pub const ALL: [Regime; 6] = [
        Regime::BaselineMajority,
        Regime::BaselineLogreg,
        Regime::NnSingle,
        Regime::SelfLearning,
        Regime::Multitask,
        Regime::MultitaskSelfLearning,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::BaselineMajority => "baseline_majority",
            Regime::BaselineLogreg => "baseline_logreg",
            Regime::NnSingle => "nn_single",
            Regime::SelfLearning => "self_learning",
            Regime::Multitask => "multitask",
            Regime::MultitaskSelfLearning => "multitask_self_learning",
        }
    }

    pub fn is_multitask(self) -> bool {
        matches!(self, Regime::Multitask | Regime::MultitaskSelfLearning)
    }

    pub fn uses_self_learning(self) -> bool {
        matches!(self, Regime::SelfLearning | Regime::MultitaskSelfLearning)
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| CliError::config(format!("unknown regime {s:?}")))
    }
}

/// Key-value pairs as read, before interpretation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Sets `key`; path values are resolved against `base` when relative.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> CliResult<()> {
        if !KEYS.contains(&key) {
            return Err(CliError::config(format!("unknown config key {key:?}")));
        }
        let value = value.trim();
        let value = match base {
            Some(base) if PATH_KEYS.contains(&key) => resolve_paths(key, value, base),
            _ => value.to_string(),
        };
        self.entries.insert(key.to_string(), value);
        Ok(())
    }

    /// Applies one `key=value` assignment from the command line.
    pub fn assign(&mut self, assignment: &str) -> CliResult<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("expected key=value, got {assignment:?}")))?;
        self.set(k.trim(), v, None)
    }

    pub fn apply_env(&mut self) -> CliResult<()> {
        self.apply_env_from(|name| std::env::var(name).ok())
    }

    pub fn apply_env_from(&mut self, lookup: impl Fn(&str) -> Option<String>) -> CliResult<()> {
        for (var, key) in ENV_OVERRIDES {
            if let Some(value) = lookup(var) {
                self.set(key, &value, None)?;
            }
        }
        Ok(())
    }

    pub fn parse_file(path: &Path) -> CliResult<RawConfig> {
        let mut raw = RawConfig::default();
        raw.include(path, &mut Vec::new())?;
        Ok(raw)
    }

    fn include(&mut self, path: &Path, stack: &mut Vec<PathBuf>) -> CliResult<()> {
        let canonical = fs::canonicalize(path)
            .map_err(|e| CliError::config(format!("cannot open config {}: {e}", path.display())))?;
        if stack.contains(&canonical) {
            return Err(CliError::config(format!("include cycle through {}", path.display())));
        }
        let text = fs::read_to_string(&canonical)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let base = canonical.parent().map(Path::to_path_buf).unwrap_or_default();
        stack.push(canonical);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            let here = || format!("{}:{}", path.display(), i + 1);
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("include") {
                if rest.starts_with(char::is_whitespace) {
                    let target = base.join(rest.trim());
                    self.include(&target, stack).map_err(|e| e.context(here()))?;
                    continue;
                }
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("{}: expected key = value", here())))?;
            self.set(k.trim(), v, Some(&base)).map_err(|e| e.context(here()))?;
        }
        stack.pop();
        Ok(())
    }
}

fn resolve_paths(key: &str, value: &str, base: &Path) -> String {
    let resolve = |p: &str| {
        let p = Path::new(p.trim());
        if p.is_absolute() {
            p.display().to_string()
        } else {
            base.join(p).display().to_string()
        }
    };
    if key == "pairs" {
        value.split(',').map(resolve).collect::<Vec<_>>().join(",")
    } else {
        resolve(value)
    }
}

/// A fully interpreted experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub pairs: Vec<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub split_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub tasks: Vec<TaskSpec>,
    pub regimes: Vec<Regime>,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub split: SplitConfig,
    pub self_learning: SelfLearnConfig,
    pub logreg: LogRegConfig,
}

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::config(format!("bad value {value:?} for {key}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> CliResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> CliResult<ExperimentConfig> {
        let defaults = ExperimentConfig::defaults();
        let get = |k: &str| raw.get(k);
        let mut c = defaults;
        if let Some(v) = get("pairs") {
            c.pairs = v.split(',').map(|p| PathBuf::from(p.trim())).filter(|p| !p.as_os_str().is_empty()).collect();
        }
        c.embeddings = get("embeddings").filter(|v| !v.is_empty()).map(PathBuf::from);
        c.split_dir = get("split_dir").filter(|v| !v.is_empty()).map(PathBuf::from);
        if let Some(v) = get("out_dir") {
            c.out_dir = PathBuf::from(v);
        }
        if let Some(v) = get("tasks") {
            c.tasks = parse_list("tasks", v)?;
        }
        c.regimes = match get("regimes") {
            Some(v) => parse_list("regimes", v)?,
            None => Regime::ALL
                .into_iter()
                .filter(|r| c.tasks.len() > 1 || !r.is_multitask())
                .collect(),
        };
        if let Some(v) = get("hidden") {
            c.hidden = parse_list("hidden", v)?;
        }
        macro_rules! scalar {
            ($key:literal, $field:expr) => {
                if let Some(v) = get($key) {
                    $field = parse($key, v)?;
                }
            };
        }
        scalar!("batch_size", c.train.batch_size);
        scalar!("epochs", c.train.epochs);
        scalar!("patience", c.train.patience);
        scalar!("learning_rate", c.train.learning_rate);
        scalar!("rho", c.train.rho);
        scalar!("test_vocab_fraction", c.split.test_vocab_fraction);
        scalar!("unlabeled_fraction", c.split.partition.unlabeled_fraction);
        scalar!("validation_fraction", c.split.partition.validation_fraction);
        scalar!("stratified", c.split.partition.stratified);
        scalar!("max_iterations", c.self_learning.max_iterations);
        scalar!("logreg_lambda", c.logreg.l2_lambda);
        scalar!("logreg_epochs", c.logreg.epochs);
        scalar!("logreg_learning_rate", c.logreg.learning_rate);
        if let Some(v) = get("n_per_iteration") {
            c.self_learning.n_per_iteration = match v {
                "auto" => None,
                _ => Some(parse("n_per_iteration", v)?),
            };
        }
        if let Some(v) = get("retrain_mode") {
            c.self_learning.retrain_mode = parse::<RetrainMode>("retrain_mode", v)?;
        }
        Ok(c)
    }

    pub fn defaults() -> ExperimentConfig {
        ExperimentConfig {
            pairs: Vec::new(),
            embeddings: None,
            split_dir: None,
            out_dir: PathBuf::from("results"),
            tasks: Vec::new(),
            regimes: Regime::ALL.to_vec(),
            hidden: vec![50, 50],
            train: TrainConfig::default(),
            split: SplitConfig::default(),
            self_learning: SelfLearnConfig::default(),
            logreg: LogRegConfig::default(),
        }
    }

    /// Checks hyperparameters and regime/task compatibility.
    pub fn validate(&self) -> CliResult<()> {
        if self.tasks.is_empty() || self.tasks.len() > 3 {
            return Err(CliError::config(format!("expected 1 to 3 tasks, got {}", self.tasks.len())));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if self.tasks[..i].contains(t) {
                return Err(CliError::config(format!("task {t} listed twice")));
            }
        }
        if self.regimes.is_empty() {
            return Err(CliError::config("no regimes selected"));
        }
        if let Some(r) = self.regimes.iter().find(|r| r.is_multitask()) {
            if self.tasks.len() < 2 {
                return Err(CliError::config(format!("regime {r} needs at least 2 tasks")));
            }
        }
        if self.hidden.contains(&0) {
            return Err(CliError::config("hidden layer widths must be positive"));
        }
        self.train.validate().map_err(|e| CliError::config(e.to_string()))?;
        let f = &self.split;
        for (name, v) in [
            ("test_vocab_fraction", f.test_vocab_fraction),
            ("unlabeled_fraction", f.partition.unlabeled_fraction),
            ("validation_fraction", f.partition.validation_fraction),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(CliError::config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.self_learning.n_per_iteration == Some(0) {
            return Err(CliError::config("n_per_iteration must be at least 1"));
        }
        if !(self.logreg.l2_lambda >= 0.0 && self.logreg.learning_rate > 0.0 && self.logreg.epochs > 0) {
            return Err(CliError::config("logreg_lambda must be >= 0, logreg_learning_rate and logreg_epochs > 0"));
        }
        Ok(())
    }

    /// Checks that every referenced input exists.
    pub fn check_inputs(&self) -> CliResult<()> {
        match (&self.split_dir, self.pairs.is_empty()) {
            (None, true) => return Err(CliError::config("either pairs or split_dir must be set")),
            (Some(_), false) => return Err(CliError::config("set pairs or split_dir, not both")),
            _ => {}
        }
        let embeddings = self
            .embeddings
            .as_ref()
            .ok_or_else(|| CliError::config("embeddings must be set"))?;
        let mut required: Vec<&PathBuf> = self.pairs.iter().collect();
        required.push(embeddings);
        for p in required {
            if !p.is_file() {
                return Err(CliError::config(format!("input file {} does not exist", p.display())));
            }
        }
        if let Some(dir) = &self.split_dir {
            if !dir.is_dir() {
                return Err(CliError::config(format!("split directory {} does not exist", dir.display())));
            }
        }
        Ok(())
    }

    /// The configuration as `key = value` lines in canonical key order.
    pub fn to_canonical(&self) -> String {
        let join = |items: Vec<String>| items.join(",");
        let paths = |ps: &[PathBuf]| join(ps.iter().map(|p| p.display().to_string()).collect());
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let values: BTreeMap<&str, String> = [
            ("pairs", paths(&self.pairs)),
            ("embeddings", opt(&self.embeddings)),
            ("split_dir", opt(&self.split_dir)),
            ("out_dir", self.out_dir.display().to_string()),
            ("tasks", join(self.tasks.iter().map(|t| t.relation.as_str().to_string()).collect())),
            ("regimes", join(self.regimes.iter().map(|r| r.as_str().to_string()).collect())),
            ("hidden", join(self.hidden.iter().map(usize::to_string).collect())),
            ("batch_size", self.train.batch_size.to_string()),
            ("epochs", self.train.epochs.to_string()),
            ("patience", self.train.patience.to_string()),
            ("learning_rate", self.train.learning_rate.to_string()),
            ("rho", self.train.rho.to_string()),
            ("test_vocab_fraction", self.split.test_vocab_fraction.to_string()),
            ("unlabeled_fraction", self.split.partition.unlabeled_fraction.to_string()),
            ("validation_fraction", self.split.partition.validation_fraction.to_string()),
            ("stratified", self.split.partition.stratified.to_string()),
            (
                "n_per_iteration",
                self.self_learning.n_per_iteration.map_or("auto".to_string(), |n| n.to_string()),
            ),
            ("max_iterations", self.self_learning.max_iterations.to_string()),
            (
                "retrain_mode",
                match self.self_learning.retrain_mode {
                    RetrainMode::WarmStart => "warm_start",
                    RetrainMode::FromScratch => "from_scratch",
                }
                .to_string(),
            ),
            ("logreg_lambda", self.logreg.l2_lambda.to_string()),
            ("logreg_epochs", self.logreg.epochs.to_string()),
            ("logreg_learning_rate", self.logreg.learning_rate.to_string()),
        ]
        .into_iter()
        .collect();
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", values[key]);
        }
        out
    }

    /// Hash of the hyperparameters plus the content of every input file.
    ///
    /// Output locations and input file names are ignored, so moving data or results around does
    /// not change the hash.
    pub fn config_hash(&self) -> CliResult<String> {
        let mut h = Sha256::new();
        for line in self.to_canonical().lines() {
            let key = line.split(" = ").next().unwrap_or_default();
            if UNHASHED_KEYS.contains(&key) || PATH_KEYS.contains(&key) {
                continue;
            }
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        let mut inputs: Vec<PathBuf> = self.pairs.clone();
        inputs.extend(self.embeddings.clone());
        if let Some(dir) = &self.split_dir {
            for part in semrel::data::PART_NAMES {
                inputs.push(dir.join(format!("{part}.tsv")));
            }
        }
        for path in inputs {
            h.update(file_digest(&path)?.as_bytes());
            h.update(b"\n");
        }
        Ok(hex::encode(h.finalize()))
    }
}

/// SHA-256 of a file's bytes, as hex.
pub fn file_digest(path: &Path) -> CliResult<String> {
    let mut file = fs::File::open(path).map_err(|e| CliError::from(e).context(path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = std::io::Read::read(&mut file, &mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Parses a comma-separated seed list such as `1,2,3`.
pub fn parse_seeds(text: &str) -> CliResult<Vec<u64>> {
    let seeds: Vec<u64> = parse_list("seed", text)?;
    if seeds.is_empty() {
        return Err(CliError::config("at least one seed is required"));
    }
    Ok(seeds)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::defaults()
    }
}
