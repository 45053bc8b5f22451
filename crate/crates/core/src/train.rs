//! Supervised two-stage training: schedules, early stopping, strategies and evaluation.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::corpus::{augment, eval_view, subset_indices, AugmentationPolicy, Dataset, Domain, ImageBatch, LabeledImage};
use crate::error::{Error, Result};
use crate::nets::layers::BN_MOMENTUM;
use crate::nets::params::update_running_stats;
use crate::nets::{build_classifier, ArchSpec, Binding, CheckpointArchive, Mode, Network};
use crate::optim::Sgd;
use crate::scalar::Scalar;

pub const LR_RANGE: (f64, f64) = (0.001, 0.01);
pub const BATCH_RANGE: (usize, usize) = (4, 32);
/// Share of the training split held out for early stopping.
pub const VALIDATION_FRACTION: f64 = 0.1;
pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_MAX_EPOCHS: usize = 200;
pub const DEFAULT_PATIENCE: usize = 10;

/// Learning rate and batch size for a data fraction (linear scaling anchored at 32 / 0.01).
pub fn derive_schedule(fraction: f64) -> (f64, usize) {
    let batch = ((BATCH_RANGE.1 as f64 * fraction).round() as usize).clamp(BATCH_RANGE.0, BATCH_RANGE.1);
    let lr = (LR_RANGE.1 * batch as f64 / BATCH_RANGE.1 as f64).clamp(LR_RANGE.0, LR_RANGE.1);
    (lr, batch)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub domain: Domain,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub augmentation: AugmentationPolicy,
}

fn default_momentum() -> f64 {
    DEFAULT_MOMENTUM
}

impl StageSpec {
    /// Stage with the derived schedule for `fraction` and the standard augmentation.
    pub fn for_fraction(domain: Domain, fraction: f64, seed: u64, resolution: usize) -> Self {
        let (learning_rate, batch_size) = derive_schedule(fraction);
        StageSpec {
            domain,
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            learning_rate,
            batch_size,
            seed,
            momentum: DEFAULT_MOMENTUM,
            weight_decay: 0.0,
            augmentation: AugmentationPolicy::standard(resolution),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::InvalidParams("max_epochs must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidParams("patience must be at least 1".into()));
        }
        if !(LR_RANGE.0..=LR_RANGE.1).contains(&self.learning_rate) {
            return Err(Error::InvalidParams(format!("learning rate {} outside {LR_RANGE:?}", self.learning_rate)));
        }
        if !(BATCH_RANGE.0..=BATCH_RANGE.1).contains(&self.batch_size) {
            return Err(Error::InvalidParams(format!("batch size {} outside {BATCH_RANGE:?}", self.batch_size)));
        }
        self.augmentation.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    ColorOnly,
    LineOnly,
    LineToColor,
    ColorToLine,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::ColorOnly, Strategy::LineOnly, Strategy::LineToColor, Strategy::ColorToLine];

    pub fn domains(self) -> Vec<Domain> {
        match self {
            Strategy::ColorOnly => vec![Domain::Color],
            Strategy::LineOnly => vec![Domain::Line],
            Strategy::LineToColor => vec![Domain::Line, Domain::Color],
            Strategy::ColorToLine => vec![Domain::Color, Domain::Line],
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::ColorOnly => "ColorOnly",
            Strategy::LineOnly => "LineOnly",
            Strategy::LineToColor => "LineToColor",
            Strategy::ColorToLine => "ColorToLine",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParams(format!("unknown strategy `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrategyPlan {
    pub name: Strategy,
    pub stages: Vec<StageSpec>,
}

impl StrategyPlan {
    /// One stage per domain of `name`, each a copy of `template` with the domain replaced.
    pub fn new(name: Strategy, template: &StageSpec) -> Self {
        let stages = name.domains().into_iter().map(|domain| StageSpec { domain, ..template.clone() }).collect();
        StrategyPlan { name, stages }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug)]
pub struct TrainResult<T> {
    pub best_checkpoint: CheckpointArchive<T>,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub wall_time: Duration,
}

impl<T> TrainResult<T> {
    pub fn best_val_acc(&self) -> f64 {
        self.history.iter().map(|h| h.val_acc).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Patience-based stopping on a metric that should increase.
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    epoch: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper { patience, best: f64::NEG_INFINITY, best_epoch: 0, epoch: 0 }
    }

    /// Records the next epoch; returns `(improved, stop)`.
    pub fn observe(&mut self, metric: f64) -> (bool, bool) {
        self.epoch += 1;
        let improved = metric > self.best;
        if improved {
            self.best = metric;
            self.best_epoch = self.epoch;
        }
        (improved, self.epoch - self.best_epoch >= self.patience)
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Splits a training set into (train, validation) with a stratified seeded hold-out.
pub fn validation_split<T: Scalar>(images: &[LabeledImage<T>], seed: u64) -> (Vec<LabeledImage<T>>, Vec<LabeledImage<T>>) {
    let labels: Vec<usize> = images.iter().map(|i| i.label).collect();
    let held = subset_indices(&labels, VALIDATION_FRACTION, seed ^ 0x5eed_0f0a_11da_7e00).expect("constant fraction");
    let mut is_val = vec![false; images.len()];
    held.iter().for_each(|&i| is_val[i] = true);
    // Classes with a single item keep it for training.
    let mut count = vec![0usize; labels.iter().max().map_or(0, |m| m + 1)];
    labels.iter().for_each(|&l| count[l] += 1);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, img) in images.iter().enumerate() {
        if is_val[i] && count[img.label] > 1 {
            val.push(img.clone());
        } else {
            train.push(img.clone());
        }
    }
    (train, val)
}

/// Top-1 accuracy in percent over the evaluation views of `images`.
pub fn evaluate<T: Scalar>(model: &Network<T>, images: &[LabeledImage<T>], policy: &AugmentationPolicy) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    let preds = predict(model, images, policy)?;
    let correct = preds.iter().zip(images).filter(|(p, i)| **p == i.label).count();
    Ok(100.0 * correct as f64 / images.len() as f64)
}

/// Arg-max predictions over evaluation views.
pub fn predict<T: Scalar>(model: &Network<T>, images: &[LabeledImage<T>], policy: &AugmentationPolicy) -> Result<Vec<usize>> {
    let views = images.iter().map(|i| eval_view(i, policy)).collect::<Result<Vec<_>>>()?;
    let logits = model.predict_logits(&ImageBatch::from_images(&views))?;
    let k = logits.shape()[1];
    Ok(logits
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// One optimisation step on a labelled batch; returns the batch loss.
pub(crate) fn sgd_step<T: Scalar>(
    model: &mut Network<T>,
    opt: &mut Sgd<T>,
    batch: &ImageBatch<T>,
    lr: T,
    loss_fn: &mut dyn FnMut(&mut Tape<T>, crate::autograd::Var, &ImageBatch<T>) -> crate::autograd::Var,
) -> (f64, bool) {
    let mut tape = Tape::new();
    let mut bind = Binding::new(model.params(), Mode::Train, true);
    let x = tape.constant(batch.to_tensor());
    let out = model.classify(&mut tape, &mut bind, x).expect("classifier forward");
    let loss = loss_fn(&mut tape, out.logits, batch);
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return (value.as_f64(), false);
    }
    let grads = tape.backward(loss);
    let named = bind.gradients(&grads);
    let stats = bind.into_stats();
    drop(tape);
    opt.step(model.params_mut(), &named, lr);
    update_running_stats(model.params_mut(), &stats, T::lit(BN_MOMENTUM));
    (value.as_f64(), true)
}

/// Runs one epoch loop with early stopping. `loss_fn` builds the minibatch loss from logits.
pub(crate) fn fit<T: Scalar>(
    init: &CheckpointArchive<T>,
    train_images: &[LabeledImage<T>],
    val_images: &[LabeledImage<T>],
    stage: &StageSpec,
    loss_fn: &mut dyn FnMut(&mut Tape<T>, crate::autograd::Var, &ImageBatch<T>) -> crate::autograd::Var,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainResult<T>> {
    stage.validate()?;
    if train_images.is_empty() || val_images.is_empty() {
        return Err(Error::EmptyDataset(format!("{} stage has no training or validation images", stage.domain)));
    }
    let started = Instant::now();
    let mut model = init.to_network()?;
    let mut opt = Sgd::new(T::lit(stage.momentum), T::lit(stage.weight_decay));
    let mut rng = ChaCha8Rng::seed_from_u64(stage.seed);
    let mut stopper = EarlyStopper::new(stage.patience);
    let mut history = Vec::new();
    let mut best = None;
    let lr = T::lit(stage.learning_rate);
    let mut order: Vec<usize> = (0..train_images.len()).collect();
    for epoch in 1..=stage.max_epochs {
        order.shuffle(&mut rng);
        let (mut total, mut seen) = (0.0, 0usize);
        for (step, idx) in order.chunks(stage.batch_size).enumerate() {
            let views: Vec<LabeledImage<T>> =
                idx.iter().map(|&i| augment(&train_images[i], &stage.augmentation, &mut rng)).collect();
            let batch = ImageBatch::from_images(&views);
            let (loss, ok) = sgd_step(&mut model, &mut opt, &batch, lr, loss_fn);
            if !ok || !model.params().is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    detail: format!("loss {loss} on a batch of {} ({} stage)", batch.len(), stage.domain),
                });
            }
            total += loss * batch.len() as f64;
            seen += batch.len();
        }
        let val_acc = evaluate(&model, val_images, &stage.augmentation)?;
        let stats = EpochStats { epoch, train_loss: total / seen as f64, val_acc };
        on_epoch(&stats);
        history.push(stats);
        let (improved, stop) = stopper.observe(val_acc);
        if improved {
            best = Some(model.params().clone());
        }
        if stop {
            break;
        }
    }
    let best_epoch = stopper.best_epoch();
    let mut stage_history = init.manifest.stage_history.clone();
    stage_history.push(stage.domain.clone());
    let mut best_checkpoint = CheckpointArchive {
        params: best.expect("at least one epoch"),
        manifest: init.manifest.clone(),
    };
    best_checkpoint.manifest.stage_history = stage_history;
    best_checkpoint.manifest.epoch = best_epoch;
    best_checkpoint.manifest.seed = stage.seed;
    best_checkpoint.manifest.metrics.insert("val_acc".into(), history[best_epoch - 1].val_acc);
    best_checkpoint.manifest.metrics.insert("train_loss".into(), history[best_epoch - 1].train_loss);
    Ok(TrainResult { best_checkpoint, stopped_epoch: history.len(), history, best_epoch, wall_time: started.elapsed() })
}

/// Trains `init` on the training split of `dataset` with cross-entropy.
pub fn train_stage<T: Scalar>(init: &CheckpointArchive<T>, dataset: &Dataset<T>, stage: &StageSpec) -> Result<TrainResult<T>> {
    train_stage_with(init, dataset, stage, &mut |_| {})
}

pub fn train_stage_with<T: Scalar>(
    init: &CheckpointArchive<T>,
    dataset: &Dataset<T>,
    stage: &StageSpec,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainResult<T>> {
    if dataset.domain != stage.domain {
        return Err(Error::InvalidParams(format!("dataset is {}, stage expects {}", dataset.domain, stage.domain)));
    }
    if dataset.train.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has no training images", dataset.name)));
    }
    let (train, val) = validation_split(&dataset.train, stage.seed);
    fit(init, &train, &val, stage, &mut |tape, logits, batch| tape.cross_entropy(logits, &batch.labels), on_epoch)
}

/// Runs every stage of `plan`, each starting from the previous best checkpoint.
///
/// `datasets` must return the corpus of a domain at the requested fraction.
/// Without `init` a fresh classifier of `arch` is built from `seed`.
pub fn run_strategy<T: Scalar>(
    plan: &StrategyPlan,
    arch: &ArchSpec,
    init: Option<&CheckpointArchive<T>>,
    seed: u64,
    datasets: &mut dyn FnMut(&Domain) -> Result<Dataset<T>>,
    on_epoch: &mut dyn FnMut(usize, &EpochStats),
) -> Result<Vec<TrainResult<T>>> {
    let mut current = match init {
        Some(c) => c.clone(),
        None => CheckpointArchive::from_network(&build_classifier::<T>(arch.clone(), seed)?, Vec::new(), seed, 0),
    };
    let mut results = Vec::with_capacity(plan.stages.len());
    for (k, stage) in plan.stages.iter().enumerate() {
        let data = datasets(&stage.domain)?;
        let result = train_stage_with(&current, &data, stage, &mut |s| on_epoch(k, s))?;
        current = result.best_checkpoint.clone();
        results.push(result);
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        assert_eq!(derive_schedule(1.0), (0.01, 32));
        let (lr, b) = derive_schedule(0.05);
        assert_eq!(b, 4);
        assert!((lr - 0.00125).abs() < 1e-15);
        let (lr, b) = derive_schedule(0.5);
        assert_eq!(b, 16);
        assert!((lr - 0.005).abs() < 1e-15);
    }

    #[test]
    fn early_stop_after_stagnation() {
        let mut s = EarlyStopper::new(10);
        let accs = [50.0, 52.0, 52.0, 51.0, 52.0, 50.0, 49.0, 52.0, 52.0, 51.0, 52.0, 52.0, 60.0];
        let mut stopped = None;
        for (i, &a) in accs.iter().enumerate() {
            if s.observe(a).1 {
                stopped = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped, Some(12));
        assert_eq!(s.best_epoch(), 2);
    }

    #[test]
    fn strategy_stage_order() {
        let t = StageSpec::for_fraction(Domain::Color, 1.0, 0, 32);
        let p = StrategyPlan::new(Strategy::LineToColor, &t);
        assert_eq!(p.stages.iter().map(|s| s.domain.clone()).collect::<Vec<_>>(), vec![Domain::Line, Domain::Color]);
        assert_eq!("colortoline".parse::<Strategy>().unwrap(), Strategy::ColorToLine);
    }

    #[test]
    fn zero_epoch_budget_is_rejected() {
        let mut t = StageSpec::for_fraction(Domain::Color, 1.0, 0, 32);
        t.max_epochs = 0;
        assert!(matches!(t.validate(), Err(Error::InvalidParams(_))));
    }
}
