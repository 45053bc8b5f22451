//! Soft-target knowledge distillation with matched teachers.

use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::corpus::{Dataset, Domain};
use crate::error::{Error, Result};
use crate::nets::{build_classifier, ArchSpec, CheckpointArchive};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::{evaluate, fit, validation_split, EpochStats, StageSpec, TrainResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub temperature: f64,
    pub alpha: f64,
    /// Student schedule; its domain must be COLOR.
    pub stage: StageSpec,
}

impl DistillConfig {
    pub fn new(stage: StageSpec) -> Self {
        DistillConfig { temperature: 4.0, alpha: 0.9, stage }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidParams(format!("temperature {} must be positive", self.temperature)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParams(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        self.stage.validate()
    }
}

/// `alpha * T^2 * KL(softmax(t/T) || softmax(s/T)) + (1 - alpha) * CE(s, labels)`, batch-averaged.
pub fn kd_loss<T: Scalar>(student: &Tensor<T>, teacher: &Tensor<T>, labels: &[usize], temperature: f64, alpha: f64) -> Result<T> {
    if student.shape() != teacher.shape() || student.shape().len() != 2 {
        return Err(Error::ShapeMismatch(format!("student {:?} vs teacher {:?}", student.shape(), teacher.shape())));
    }
    if labels.len() != student.shape()[0] || labels.iter().any(|&l| l >= student.shape()[1]) {
        return Err(Error::ShapeMismatch(format!("{} labels for logits {:?}", labels.len(), student.shape())));
    }
    let mut tape = Tape::new();
    let s = tape.constant(student.clone());
    let loss = tape.distillation_loss(s, teacher, labels, T::lit(temperature), T::lit(alpha));
    Ok(tape.value(loss).item())
}

#[derive(Clone, Debug)]
pub struct StudentResult<T> {
    pub train: TrainResult<T>,
    pub teacher_acc: f64,
    pub student_acc: f64,
}

/// Trains a fresh `student` against a frozen teacher on the colour split of `dataset`.
pub fn train_student<T: Scalar>(
    student: &ArchSpec,
    teacher: &CheckpointArchive<T>,
    dataset: &Dataset<T>,
    config: &DistillConfig,
    seed: u64,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<StudentResult<T>> {
    config.validate()?;
    if config.stage.domain != Domain::Color || dataset.domain != Domain::Color {
        return Err(Error::InvalidParams("students train on the COLOR domain".into()));
    }
    let teacher_net = teacher.to_network()?;
    if !teacher_net.is_classifier() {
        return Err(Error::ArchIncompatible(format!("teacher {} is not a classifier", teacher.manifest.arch.id)));
    }
    if teacher.manifest.arch.num_classes != student.num_classes {
        return Err(Error::ShapeMismatch(format!(
            "teacher has {} classes, student {}",
            teacher.manifest.arch.num_classes, student.num_classes
        )));
    }
    let init = CheckpointArchive::from_network(&build_classifier::<T>(student.clone(), seed)?, Vec::new(), seed, 0);
    let (train, val) = validation_split(&dataset.train, config.stage.seed);
    let (temp, alpha) = (T::lit(config.temperature), T::lit(config.alpha));
    let mut loss_fn = |tape: &mut Tape<T>, logits, batch: &crate::corpus::ImageBatch<T>| {
        let t = teacher_net.predict_logits(batch).expect("teacher forward");
        tape.distillation_loss(logits, &t, &batch.labels, temp, alpha)
    };
    let result = fit(&init, &train, &val, &config.stage, &mut loss_fn, on_epoch)?;
    let policy = &config.stage.augmentation;
    let teacher_acc = evaluate(&teacher_net, &dataset.test, policy)?;
    let student_acc = evaluate(&result.best_checkpoint.to_network()?, &dataset.test, policy)?;
    Ok(StudentResult { train: result, teacher_acc, student_acc })
}

/// A trained teacher candidate from a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherCandidate {
    pub reference: String,
    pub fraction: f64,
    pub accuracy: f64,
}

/// The candidate whose accuracy is closest to `target`; ties go to the smaller fraction.
pub fn select_matched_teacher(candidates: &[TeacherCandidate], target: f64) -> Result<&TeacherCandidate> {
    let mut best: Option<&TeacherCandidate> = None;
    for c in candidates {
        best = match best {
            None => Some(c),
            Some(b) => {
                let (dc, db) = ((c.accuracy - target).abs(), (b.accuracy - target).abs());
                if dc < db - 1e-12 || ((dc - db).abs() <= 1e-12 && c.fraction < b.fraction) {
                    Some(c)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.ok_or(Error::EmptySweep)
}
