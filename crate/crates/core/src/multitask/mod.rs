//! Hard-parameter-sharing multi-task network.
//!
//! A [`MultiTaskModel`] is a shared sigmoid trunk followed by one softmax head per task. Training
//! visits the tasks round-robin: each round draws one random batch per task (in task order),
//! backpropagates through the trunk and that task's head, and applies one RMSprop step to the
//! trunk and to that head only. With a single head this is exactly a one-task network.

mod checkpoint;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};

use rand::Rng;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::nn::{
    self, argmax, Activation, DenseLayer, LayerOptimizer, Matrix, RmsPropConfig,
};
use crate::seed::rng_from_seed;

pub const DEFAULT_HIDDEN: [usize; 2] = [50, 50];

#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskModel {
    input_dim: usize,
    pub(crate) trunk: Vec<DenseLayer>,
    pub(crate) heads: Vec<DenseLayer>,
    pub(crate) trunk_opt: Vec<LayerOptimizer>,
    pub(crate) head_opt: Vec<LayerOptimizer>,
}

/// Builds a model with Glorot-initialised layers drawn from one generator seeded with `seed`:
/// trunk layers first, then heads in task order.
pub fn build_model(
    input_dim: usize,
    hidden_widths: &[usize],
    task_class_counts: &[usize],
    seed: u64,
) -> Result<MultiTaskModel> {
    MultiTaskModel::new(input_dim, hidden_widths, task_class_counts, seed, RmsPropConfig::default())
}

impl MultiTaskModel {
    pub fn new(
        input_dim: usize,
        hidden_widths: &[usize],
        task_class_counts: &[usize],
        seed: u64,
        optimizer: RmsPropConfig,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        if task_class_counts.is_empty() {
            return Err(Error::invalid("a model needs at least one task"));
        }
        if let Some(c) = task_class_counts.iter().find(|&&c| c < 2) {
            return Err(Error::invalid(format!("a task head needs at least 2 classes, got {c}")));
        }
        optimizer.validate()?;
        let mut rng = rng_from_seed(seed);
        let mut trunk = Vec::with_capacity(hidden_widths.len());
        let mut width = input_dim;
        for &h in hidden_widths {
            trunk.push(DenseLayer::glorot(width, h, Activation::Sigmoid, &mut rng)?);
            width = h;
        }
        let heads = task_class_counts
            .iter()
            .map(|&c| DenseLayer::glorot(width, c, Activation::Softmax, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_layers(input_dim, trunk, heads, optimizer))
    }

    pub(crate) fn from_layers(
        input_dim: usize,
        trunk: Vec<DenseLayer>,
        heads: Vec<DenseLayer>,
        optimizer: RmsPropConfig,
    ) -> Self {
        let trunk_opt = trunk.iter().map(|l| LayerOptimizer::for_layer(l, optimizer)).collect();
        let head_opt = heads.iter().map(|l| LayerOptimizer::for_layer(l, optimizer)).collect();
        MultiTaskModel {
            input_dim,
            trunk,
            heads,
            trunk_opt,
            head_opt,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_tasks(&self) -> usize {
        self.heads.len()
    }

    pub fn trunk(&self) -> &[DenseLayer] {
        &self.trunk
    }

    pub fn heads(&self) -> &[DenseLayer] {
        &self.heads
    }

    pub fn head(&self, task: usize) -> Result<&DenseLayer> {
        self.heads.get(task).ok_or_else(|| self.bad_task(task))
    }

    pub fn class_count(&self, task: usize) -> Result<usize> {
        Ok(self.head(task)?.out_dim())
    }

    pub fn parameter_count(&self) -> usize {
        self.trunk
            .iter()
            .chain(&self.heads)
            .map(DenseLayer::parameter_count)
            .sum()
    }

    pub fn optimizer_config(&self) -> RmsPropConfig {
        self.trunk_opt
            .first()
            .or(self.head_opt.first())
            .map(|o| o.weights.config)
            .unwrap_or_default()
    }

    /// Changes the optimizer hyperparameters while keeping accumulated caches.
    pub fn set_optimizer_config(&mut self, config: RmsPropConfig) -> Result<()> {
        config.validate()?;
        for o in self.trunk_opt.iter_mut().chain(self.head_opt.iter_mut()) {
            o.set_config(config);
        }
        Ok(())
    }

    /// Sets every weight and bias to zero.
    pub fn zero_parameters(&mut self) {
        for layer in self.trunk.iter_mut().chain(self.heads.iter_mut()) {
            layer.weights.as_mut_slice().fill(0.0);
            layer.biases.fill(0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.trunk.iter().chain(&self.heads).all(DenseLayer::is_finite)
    }

    /// Trunk layers followed by the head of `task`.
    pub fn task_layers(&self, task: usize) -> Result<Vec<&DenseLayer>> {
        let head = self.head(task)?;
        Ok(self.trunk.iter().chain(std::iter::once(head)).collect())
    }

    fn bad_task(&self, task: usize) -> Error {
        Error::invalid(format!(
            "task index {task} out of range for a model with {} heads",
            self.heads.len()
        ))
    }

    fn check_features(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::invalid(format!(
                "features have {} columns, model expects {}",
                x.cols(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Softmax output of head `task` for each row of `x`.
    pub fn predict(&self, task: usize, x: &Matrix) -> Result<Matrix> {
        self.predict_with(task, x, Execution::default())
    }

    pub fn predict_with(&self, task: usize, x: &Matrix, exec: Execution) -> Result<Matrix> {
        let layers = self.task_layers(task)?;
        self.check_features(x)?;
        let mut a = x.clone();
        for layer in layers {
            a = layer.apply(&a, exec);
        }
        Ok(a)
    }

    /// Argmax class per row (ties go to the lowest class index).
    pub fn predict_labels(&self, task: usize, x: &Matrix) -> Result<Vec<usize>> {
        let probs = self.predict(task, x)?;
        Ok(probs.iter_rows().map(argmax).collect())
    }

    /// One optimizer step on a batch of task `task`: updates the trunk and that head only.
    /// Returns the mean batch loss before the update.
    pub fn train_step(&mut self, task: usize, x: &Matrix, gold: &[usize]) -> Result<f64> {
        self.check_features(x)?;
        let (loss, grads) = {
            let layers = self.task_layers(task)?;
            let trace = nn::forward(&layers, x)?;
            let loss = nn::mean_cross_entropy(trace.output(), gold)?;
            (loss, nn::backward(&layers, &trace, gold)?)
        };
        let (trunk_grads, head_grad) = grads.split_at(self.trunk.len());
        for ((layer, opt), g) in self.trunk.iter_mut().zip(&mut self.trunk_opt).zip(trunk_grads) {
            opt.step(layer, g)?;
        }
        self.head_opt[task].step(&mut self.heads[task], &head_grad[0])?;
        Ok(loss)
    }

    /// Accuracy and mean loss of head `task` on a labeled set.
    pub fn evaluate(&self, task: usize, data: &LabeledSet) -> Result<(f64, f64)> {
        let probs = self.predict(task, &data.features)?;
        let correct = probs
            .iter_rows()
            .zip(&data.labels)
            .filter(|(row, &g)| argmax(row) == g)
            .count();
        let loss = nn::mean_cross_entropy(&probs, &data.labels)?;
        Ok((correct as f64 / data.len() as f64, loss))
    }
}

/// Feature rows with their gold class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        Ok(LabeledSet { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledSet {
        LabeledSet {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Training and validation data of one task.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: LabeledSet,
    pub validation: LabeledSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub rho: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 100,
            patience: 10,
            seed: 0,
            learning_rate: 0.001,
            rho: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        self.optimizer().validate()
    }

    pub fn optimizer(&self) -> RmsPropConfig {
        RmsPropConfig {
            learning_rate: self.learning_rate,
            rho: self.rho,
            ..RmsPropConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub validation_accuracy: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// Mean validation accuracy across tasks; the model-selection metric.
    pub selection_score: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }

    pub fn best_score(&self) -> f64 {
        self.best().selection_score
    }
}

/// Number of rounds per epoch: `ceil(max_i |L_i| / batch_size)`.
pub fn rounds_per_epoch(train_sizes: &[usize], batch_size: usize) -> usize {
    let largest = train_sizes.iter().copied().max().unwrap_or(0);
    largest.div_ceil(batch_size).max(1)
}

/// Samples `batch_size` row indices uniformly with replacement.
pub(crate) fn sample_batch<R: Rng + ?Sized>(rng: &mut R, n: usize, batch_size: usize) -> Vec<usize> {
    (0..batch_size).map(|_| rng.gen_range(0..n)).collect()
}

/// Round-robin multi-task training with early stopping on mean validation accuracy.
///
/// Returns a snapshot of the model at the best epoch (earliest on ties) together with the
/// per-epoch history. Training stops after `patience` consecutive epochs without improvement.
pub fn train_multitask(
    mut model: MultiTaskModel,
    tasks: &[TaskData],
    config: &TrainConfig,
) -> Result<(MultiTaskModel, TrainHistory)> {
    config.validate()?;
    if tasks.len() != model.num_tasks() {
        return Err(Error::invalid(format!(
            "{} task datasets for a model with {} heads",
            tasks.len(),
            model.num_tasks()
        )));
    }
    for (i, t) in tasks.iter().enumerate() {
        if t.train.is_empty() || t.validation.is_empty() {
            return Err(Error::invalid(format!(
                "task {i} needs at least one training and one validation example"
            )));
        }
        model.check_features(&t.train.features)?;
        model.check_features(&t.validation.features)?;
        let classes = model.class_count(i)?;
        if let Some(&bad) = t.train.labels.iter().chain(&t.validation.labels).find(|&&l| l >= classes) {
            return Err(Error::invalid(format!(
                "task {i} has label {bad} but its head has {classes} classes"
            )));
        }
    }
    model.set_optimizer_config(config.optimizer())?;

    let mut rng = rng_from_seed(config.seed);
    let sizes: Vec<usize> = tasks.iter().map(|t| t.train.len()).collect();
    let rounds = rounds_per_epoch(&sizes, config.batch_size);

    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
    };
    let mut best_model = model.clone();
    let mut since_improvement = 0usize;

    for epoch in 0..config.epochs {
        let mut steps = 0;
        for _ in 0..rounds {
            for (i, task) in tasks.iter().enumerate() {
                let idx = sample_batch(&mut rng, task.train.len(), config.batch_size);
                let batch = task.train.subset(&idx);
                model.train_step(i, &batch.features, &batch.labels)?;
                steps += 1;
            }
        }
        if !model.is_finite() {
            return Err(Error::invalid(format!("non-finite parameters after epoch {epoch}")));
        }

        let mut accs = Vec::with_capacity(tasks.len());
        let mut losses = Vec::with_capacity(tasks.len());
        for (i, task) in tasks.iter().enumerate() {
            let (acc, loss) = model.evaluate(i, &task.validation)?;
            accs.push(acc);
            losses.push(loss);
        }
        let score = accs.iter().sum::<f64>() / accs.len() as f64;
        let improved = history.epochs.is_empty() || score > history.best_score();
        history.epochs.push(EpochRecord {
            epoch,
            validation_accuracy: accs,
            validation_loss: losses,
            selection_score: score,
            steps,
        });
        log::debug!("epoch {epoch}: mean validation accuracy {score:.4}");

        if improved {
            history.best_epoch = history.epochs.len() - 1;
            best_model = model.clone();
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= config.patience {
                break;
            }
        }
    }
    Ok((best_model, history))
}

#[cfg(test)]
mod tests;
