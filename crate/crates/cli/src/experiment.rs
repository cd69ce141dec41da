//! Experiment orchestration: data preparation, the six regimes, and result collection.
//!
//! Seeds are split from the run seed by label so that cells never share a random stream:
//! the lexical split and partition use the run seed directly, a neural cell over the task set
//! `a+b` uses `derive_seed(seed, "nn/a+b")`, and logistic regression on task `a` uses
//! `derive_seed(seed, "logreg/a")`. The self-learning regimes reuse the seed of their supervised
//! counterpart, so their iteration-0 model is exactly the `nn_single` or `multitask` model.

use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use semrel::data::{
    encode_pairs, filter_known, load_embeddings, load_pairs, make_split, EmbeddingTable, SplitBundle,
    SplitManifest, TaskSpec, UnlabeledPool, WordPair, PART_NAMES,
};
use semrel::eval::{accuracy, macro_f1, majority_baseline, train_logreg, LogRegConfig};
use semrel::exec::{map_collect, Execution};
use semrel::multitask::{build_model, train_multitask, LabeledSet, MultiTaskModel, TaskData, TrainConfig};
use semrel::nn::Matrix;
use semrel::seed::derive_seed;
use semrel::selflearn::{self_learn, IterationRecord, SelfLearnConfig, SelfTrainer, TaskSets};

use crate::audit::AuditTrail;
use crate::config::{ExperimentConfig, Regime};
use crate::error::{CliError, CliResult, PathContext};
use crate::report::ResultRecord;

type Predictor = Box<dyn Fn(usize, &Matrix) -> CliResult<Vec<usize>>>;

/// Test pairs of one task, released only through [`SealedTest::open`].
#[derive(Debug, Clone)]
pub struct SealedTest {
    pairs: Vec<(WordPair, usize)>,
}

impl SealedTest {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Encodes the test pairs and logs the access.
    pub fn open(&self, table: &EmbeddingTable, audit: &mut AuditTrail, task: &TaskSpec) -> CliResult<(Matrix, Vec<usize>)> {
        audit.record(format!("test-open task={task}"));
        let pairs: Vec<&WordPair> = self.pairs.iter().map(|(p, _)| p).collect();
        let x = encode_pairs(table, &pairs)?;
        Ok((x, self.pairs.iter().map(|(_, c)| *c).collect()))
    }
}

/// Features of one task for one run seed.
#[derive(Debug, Clone)]
pub struct TaskFeatures {
    pub task: TaskSpec,
    pub labeled: LabeledSet,
    pub validation: LabeledSet,
    pub unlabeled: Matrix,
    /// Gold classes of the unlabeled rows, for pseudo-label audits only.
    unlabeled_audit: Vec<usize>,
    pub test: SealedTest,
}

impl TaskFeatures {
    /// Rows of L, then V, then U.
    fn bank(&self) -> Matrix {
        let mut data = self.labeled.features.as_slice().to_vec();
        data.extend_from_slice(self.validation.features.as_slice());
        data.extend_from_slice(self.unlabeled.as_slice());
        let rows = self.labeled.len() + self.validation.len() + self.unlabeled.rows();
        Matrix::from_vec(rows, self.labeled.features.cols(), data).expect("parts share one width")
    }
}

/// Everything one run seed needs.
#[derive(Debug, Clone)]
pub struct SeedData {
    pub seed: u64,
    pub tasks: Vec<TaskFeatures>,
    pub discarded: usize,
    pub audit: AuditTrail,
}

/// Output of one (seed, regime) cell.
#[derive(Debug, Clone)]
pub struct CellOutput {
    pub seed: u64,
    pub regime: Regime,
    pub records: Vec<ResultRecord>,
    /// Self-learning logs, one per trained self-learning model.
    pub logs: Vec<(String, Vec<IterationRecord>)>,
    /// Neural models, named by their task set.
    pub models: Vec<(String, MultiTaskModel)>,
    pub audit: AuditTrail,
    pub seconds: f64,
}

pub struct Experiment {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub embeddings: EmbeddingTable,
    /// Pairs from `pairs`, after dropping pairs with unknown words; `None` with a split directory.
    pairs: Option<Vec<WordPair>>,
    pub dropped_oov: usize,
}

fn task_set_name(tasks: &[TaskSpec]) -> String {
    tasks.iter().map(|t| t.relation.as_str()).collect::<Vec<_>>().join("+")
}

fn labeled_set(table: &EmbeddingTable, task: TaskSpec, pairs: &[WordPair]) -> CliResult<LabeledSet> {
    let selected = task.select(pairs);
    let rows: Vec<&WordPair> = selected.iter().map(|(p, _)| *p).collect();
    let labels = selected.iter().map(|(_, c)| *c).collect();
    Ok(LabeledSet::new(encode_pairs(table, &rows)?, labels)?)
}

impl Experiment {
    /// Validates the config, loads embeddings and pairs, and hashes the inputs.
    pub fn load(config: ExperimentConfig) -> CliResult<Experiment> {
        config.validate()?;
        config.check_inputs()?;
        let config_hash = config.config_hash()?;
        let emb_path = config.embeddings.clone().expect("checked by check_inputs");
        let embeddings = load_embeddings(&emb_path).at(&emb_path)?;
        if embeddings.duplicates() > 0 {
            log::warn!("{}: {} duplicate words ignored", emb_path.display(), embeddings.duplicates());
        }
        let (pairs, dropped_oov) = if config.split_dir.is_some() {
            (None, 0)
        } else {
            let mut all = Vec::new();
            for p in &config.pairs {
                all.extend(load_pairs(p).at(p)?);
            }
            let (kept, dropped) = filter_known(&embeddings, all);
            if dropped > 0 {
                log::info!("dropped {dropped} pairs with words missing from the embeddings");
            }
            (Some(kept), dropped)
        };
        Ok(Experiment {
            config,
            config_hash,
            embeddings,
            pairs,
            dropped_oov,
        })
    }

    fn bundle(&self, seed: u64) -> CliResult<(SplitBundle, usize)> {
        match (&self.pairs, &self.config.split_dir) {
            (Some(pairs), _) => Ok(make_split(pairs, self.config.split, seed)?),
            (None, Some(dir)) => {
                let bundle = load_split_dir(dir)?;
                let keep = |pairs: Vec<WordPair>| filter_known(&self.embeddings, pairs).0;
                let filtered = SplitBundle {
                    labeled: keep(bundle.labeled.clone()),
                    validation: keep(bundle.validation.clone()),
                    unlabeled: UnlabeledPool::from_labeled(keep(bundle.unlabeled.to_audit_pairs())),
                    test: keep(bundle.test.clone()),
                };
                Ok((filtered, 0))
            }
            (None, None) => unreachable!("check_inputs requires pairs or split_dir"),
        }
    }

    /// Splits the data for one run seed and encodes every task's training-side features.
    pub fn prepare(&self, seed: u64) -> CliResult<SeedData> {
        let mut audit = AuditTrail::default();
        let (bundle, discarded) = self.bundle(seed)?;
        audit.record(format!(
            "split labeled={} validation={} unlabeled={} test={} discarded={discarded}",
            bundle.labeled.len(),
            bundle.validation.len(),
            bundle.unlabeled.len(),
            bundle.test.len()
        ));
        let mut tasks = Vec::with_capacity(self.config.tasks.len());
        for &task in &self.config.tasks {
            let labeled = labeled_set(&self.embeddings, task, &bundle.labeled)?;
            let validation = labeled_set(&self.embeddings, task, &bundle.validation)?;
            let members = bundle.unlabeled.task_members(task);
            let unlabeled = encode_pairs(&self.embeddings, &members)?;
            let unlabeled_audit = members.iter().map(|p| task.class_of(p.label).expect("member of task")).collect();
            let test = SealedTest {
                pairs: task.select(&bundle.test).into_iter().map(|(p, c)| (p.clone(), c)).collect(),
            };
            for (part, n) in [("labeled", labeled.len()), ("validation", validation.len()), ("test", test.len())] {
                if n == 0 {
                    return Err(CliError::runtime(format!("task {task} has no {part} pairs for seed {seed}")));
                }
            }
            audit.record(format!(
                "encode task={task} labeled={} validation={} unlabeled={}",
                labeled.len(),
                validation.len(),
                unlabeled.rows()
            ));
            tasks.push(TaskFeatures {
                task,
                labeled,
                validation,
                unlabeled,
                unlabeled_audit,
                test,
            });
        }
        Ok(SeedData {
            seed,
            tasks,
            discarded,
            audit,
        })
    }

    fn record(&self, seed: u64, regime: Regime, task: &TaskSpec, pred: &[usize], gold: &[usize]) -> CliResult<ResultRecord> {
        Ok(ResultRecord {
            task: task.name(),
            regime,
            seed,
            tasks: self.config.tasks.iter().map(TaskSpec::name).collect(),
            accuracy: accuracy(pred, gold)?,
            macro_f1: macro_f1(pred, gold, &[0, 1])?,
            test_size: gold.len(),
            labeled_size: 0,
            pseudo_label_accuracy: None,
            config_hash: self.config_hash.clone(),
        })
    }

    fn learner(&self, tasks: &[&TaskFeatures]) -> NnLearner {
        NnLearner {
            banks: tasks.iter().map(|t| t.bank()).collect(),
            hidden: self.config.hidden.clone(),
            train: self.config.train,
        }
    }

    /// Runs one regime on one seed's data.
    pub fn run_cell(&self, data: &SeedData, regime: Regime) -> CliResult<CellOutput> {
        let start = Instant::now();
        let seed = data.seed;
        let mut audit = AuditTrail::default();
        let mut out = CellOutput {
            seed,
            regime,
            records: Vec::new(),
            logs: Vec::new(),
            models: Vec::new(),
            audit: AuditTrail::default(),
            seconds: 0.0,
        };
        let groups: Vec<Vec<&TaskFeatures>> = if regime.is_multitask() {
            vec![data.tasks.iter().collect()]
        } else {
            data.tasks.iter().map(|t| vec![t]).collect()
        };
        for group in groups {
            let specs: Vec<TaskSpec> = group.iter().map(|t| t.task).collect();
            let name = task_set_name(&specs);
            audit.record(format!("train-start tasks={name}"));
            let mut labeled_sizes: Vec<usize> = group.iter().map(|t| t.labeled.len()).collect();
            let mut pseudo_acc: Vec<Option<f64>> = vec![None; group.len()];
            let predictor: Predictor = match regime {
                Regime::BaselineMajority => {
                    let classes: Vec<usize> = group
                        .iter()
                        .map(|t| majority_baseline(&t.labeled.labels).map(|m| m.class))
                        .collect::<semrel::Result<_>>()?;
                    Box::new(move |i, x| Ok(vec![classes[i]; x.rows()]))
                }
                Regime::BaselineLogreg => {
                    let t = group[0];
                    let config = LogRegConfig {
                        seed: derive_seed(seed, &format!("logreg/{name}")),
                        ..self.config.logreg
                    };
                    let fit = train_logreg(&t.labeled.features, &t.labeled.labels, TaskSpec::CLASS_COUNT, &config)?;
                    log::debug!("logreg {name} seed {seed}: loss {:.4}, |grad| {:.2e}", fit.loss, fit.gradient_norm);
                    Box::new(move |_, x| Ok(fit.model.predict(x)?))
                }
                Regime::NnSingle | Regime::Multitask | Regime::SelfLearning | Regime::MultitaskSelfLearning => {
                    let cell_seed = derive_seed(seed, &format!("nn/{name}"));
                    let mut learner = self.learner(&group);
                    let labeled: Vec<Vec<(usize, usize)>> = group.iter().map(|t| t.labeled.labels.iter().copied().enumerate().collect()).collect();
                    let validation: Vec<Vec<(usize, usize)>> = group
                        .iter()
                        .map(|t| t.validation.labels.iter().enumerate().map(|(i, &c)| (t.labeled.len() + i, c)).collect())
                        .collect();
                    let model = if regime.uses_self_learning() {
                        let sets = group
                            .iter()
                            .zip(labeled)
                            .zip(validation)
                            .map(|((t, labeled), validation)| {
                                let offset = t.labeled.len() + t.validation.len();
                                TaskSets {
                                    labeled,
                                    unlabeled: (offset..offset + t.unlabeled.rows()).collect(),
                                    validation,
                                }
                            })
                            .collect();
                        let config = SelfLearnConfig {
                            seed: cell_seed,
                            ..self.config.self_learning
                        };
                        let outcome = self_learn(&mut learner, sets, &config)?;
                        for (i, (state, t)) in outcome.tasks.iter().zip(&group).enumerate() {
                            labeled_sizes[i] = state.labeled.len();
                            if !state.added.is_empty() {
                                let right = state.added.iter().filter(|(_, u, c)| t.unlabeled_audit[*u] == *c).count();
                                pseudo_acc[i] = Some(right as f64 / state.added.len() as f64);
                            }
                        }
                        log::info!(
                            "{regime} {name} seed {seed}: {} iterations, stopped: {}, best at {}",
                            outcome.iterations(),
                            outcome.stop_reason,
                            outcome.best_iteration
                        );
                        out.logs.push((name.clone(), outcome.records));
                        outcome.model
                    } else {
                        learner.train(None, &labeled, &validation, derive_seed(cell_seed, "train/0"))?
                    };
                    out.models.push((name.clone(), model.clone()));
                    Box::new(move |i, x| Ok(model.predict_labels(i, x)?))
                }
            };
            audit.record(format!("train-end tasks={name}"));
            for (i, t) in group.iter().enumerate() {
                let (x, gold) = t.test.open(&self.embeddings, &mut audit, &t.task)?;
                let pred = predictor(i, &x)?;
                let mut rec = self.record(seed, regime, &t.task, &pred, &gold)?;
                rec.labeled_size = labeled_sizes[i];
                rec.pseudo_label_accuracy = pseudo_acc[i];
                out.records.push(rec);
            }
        }
        out.audit = audit;
        out.seconds = start.elapsed().as_secs_f64();
        Ok(out)
    }

    /// Runs every configured regime for every seed. Cells run in parallel when the `parallel`
    /// feature is on; the output order is always seed-major, then regime order.
    pub fn run(&self, seeds: &[u64], exec: Execution) -> CliResult<Vec<CellOutput>> {
        let mut unique = HashSet::new();
        if let Some(dup) = seeds.iter().find(|s| !unique.insert(**s)) {
            return Err(CliError::config(format!("seed {dup} listed twice")));
        }
        let prepared: Vec<CliResult<SeedData>> = map_collect(exec, seeds, |&s| self.prepare(s));
        let prepared: Vec<SeedData> = prepared.into_iter().collect::<CliResult<_>>()?;
        let cells: Vec<(usize, Regime)> = (0..prepared.len())
            .flat_map(|i| self.config.regimes.iter().map(move |&r| (i, r)))
            .collect();
        let outputs = map_collect(exec, &cells, |&(i, regime)| {
            self.run_cell(&prepared[i], regime).map(|mut cell| {
                let mut audit = prepared[i].audit.clone();
                audit.extend(cell.audit);
                cell.audit = audit;
                cell
            })
        });
        outputs.into_iter().collect()
    }
}

/// Reads the four part files of a split directory and checks them against its manifest.
pub fn load_split_dir(dir: &Path) -> CliResult<SplitBundle> {
    let manifest_path = dir.join("manifest.txt");
    let text = std::fs::read_to_string(&manifest_path).at(&manifest_path)?;
    let manifest = SplitManifest::parse(&text).at(&manifest_path)?;
    let mut parts = Vec::new();
    for name in PART_NAMES {
        let path = dir.join(format!("{name}.tsv"));
        parts.push(load_pairs(&path).at(&path)?);
    }
    let [labeled, validation, unlabeled, test]: [Vec<WordPair>; 4] = parts.try_into().expect("four parts");
    let bundle = SplitBundle {
        labeled,
        validation,
        unlabeled: UnlabeledPool::from_labeled(unlabeled),
        test,
    };
    manifest.verify(&bundle).at(&manifest_path)?;
    Ok(bundle)
}

/// Neural learner over per-task feature banks; items are row indices into a task's bank.
pub struct NnLearner {
    banks: Vec<Matrix>,
    hidden: Vec<usize>,
    train: TrainConfig,
}

impl NnLearner {
    pub fn new(banks: Vec<Matrix>, hidden: Vec<usize>, train: TrainConfig) -> Self {
        NnLearner { banks, hidden, train }
    }

    fn set(&self, task: usize, items: &[(usize, usize)]) -> semrel::Result<LabeledSet> {
        let rows: Vec<usize> = items.iter().map(|(i, _)| *i).collect();
        LabeledSet::new(self.banks[task].select_rows(&rows), items.iter().map(|(_, c)| *c).collect())
    }
}

impl SelfTrainer for NnLearner {
    type Item = usize;
    type Model = MultiTaskModel;

    fn train(
        &mut self,
        warm_start: Option<&MultiTaskModel>,
        labeled: &[Vec<(usize, usize)>],
        validation: &[Vec<(usize, usize)>],
        seed: u64,
    ) -> semrel::Result<MultiTaskModel> {
        let tasks = (0..self.banks.len())
            .map(|t| {
                Ok(TaskData {
                    train: self.set(t, &labeled[t])?,
                    validation: self.set(t, &validation[t])?,
                })
            })
            .collect::<semrel::Result<Vec<_>>>()?;
        let model = match warm_start {
            Some(m) => m.clone(),
            None => build_model(
                self.banks[0].cols(),
                &self.hidden,
                &vec![TaskSpec::CLASS_COUNT; self.banks.len()],
                derive_seed(seed, "init"),
            )?,
        };
        let config = TrainConfig {
            seed: derive_seed(seed, "batches"),
            ..self.train
        };
        Ok(train_multitask(model, &tasks, &config)?.0)
    }

    fn class_probs(&self, model: &MultiTaskModel, task: usize, items: &[usize]) -> semrel::Result<Vec<Vec<f64>>> {
        let probs = model.predict(task, &self.banks[task].select_rows(items))?;
        Ok(probs.iter_rows().map(<[f64]>::to_vec).collect())
    }
}
