//! Run identity, single-run execution, probes and data-efficiency sweeps.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sketchlab_core::corpus::{
    discover_classes, load_cue_conflict, load_dataset, AugmentationPolicy, Dataset, Domain,
};
use sketchlab_core::nets::{penultimate_features, ArchSpec, CheckpointArchive};
use sketchlab_core::probe::{
    pca_report, pcs_to_variance, region_histogram, shape_bias, tuning_curve, write_activation_dump, Connectivity,
};
use sketchlab_core::train::{evaluate, run_strategy, StageSpec, Strategy, StrategyPlan};
use sketchlab_core::{CheckpointArchive32, Dataset32, ImageBatch32, Network32};

use crate::config::{ProbeToggles, RunConfig};
use crate::error::{Error, Result};
use crate::records::{now_timestamp, write_records, ExperimentRecord, RECORDS_FILE};

pub const RUN_META_FILE: &str = "run.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const ERROR_FILE: &str = "error.txt";

/// Hash of every dataset's name, classes and item paths.
pub fn dataset_fingerprint(datasets: &BTreeMap<Domain, PathBuf>) -> Result<String> {
    let mut h = Sha256::new();
    for (domain, root) in datasets {
        let m = load_dataset(root, discover_classes(root)?)?;
        h.update(format!("{domain}\n{}\n{}\n", m.name, m.class_names.join(",")));
        for (split, items) in &m.splits {
            for it in items {
                h.update(format!("{split}:{}\n", it.path));
            }
        }
    }
    Ok(format!("{:x}", h.finalize()))
}

/// Code version plus every setting that changes training results.
pub fn code_tag(config: &RunConfig) -> String {
    format!(
        "v{}/{}/{}/{}/{}",
        env!("CARGO_PKG_VERSION"),
        config.arch,
        config.resolution,
        config.max_epochs,
        config.patience
    )
}

pub fn run_id(label: &str, fraction: f64, seed: u64, fingerprint: &str, tag: &str) -> String {
    let digest = Sha256::digest(format!("{label}|{fraction}|{seed}|{fingerprint}|{tag}"));
    format!("{digest:x}")[..16].to_string()
}

/// Collects records for one run.
#[derive(Clone, Debug)]
pub struct RecordSink {
    pub run_id: String,
    pub strategy: String,
    pub fraction: f64,
    pub seed: u64,
    pub timestamp: String,
    pub records: Vec<ExperimentRecord>,
}

impl RecordSink {
    pub fn new(run_id: &str, strategy: &str, fraction: f64, seed: u64) -> Self {
        RecordSink {
            run_id: run_id.to_string(),
            strategy: strategy.to_string(),
            fraction,
            seed,
            timestamp: now_timestamp(),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, stage: usize, split: &str, domain: &Domain, metric: impl Into<String>, value: f64) {
        self.records.push(ExperimentRecord {
            run_id: self.run_id.clone(),
            strategy: self.strategy.clone(),
            fraction: self.fraction,
            seed: self.seed,
            stage,
            split: split.to_string(),
            domain: domain.to_string(),
            metric: metric.into(),
            value,
            timestamp: self.timestamp.clone(),
        });
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub strategy: String,
    pub fraction: f64,
    pub seed: u64,
    pub complete: bool,
}

impl RunMeta {
    pub fn read(run_dir: &Path) -> Option<RunMeta> {
        let text = fs::read_to_string(run_dir.join(RUN_META_FILE)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn write(&self, run_dir: &Path) -> Result<()> {
        let path = run_dir.join(RUN_META_FILE);
        fs::write(&path, serde_json::to_string_pretty(self).expect("meta serializes")).map_err(|e| Error::io(&path, e))
    }
}

/// Loads every configured dataset in full.
pub fn load_datasets(datasets: &BTreeMap<Domain, PathBuf>) -> Result<BTreeMap<Domain, Dataset32>> {
    let mut out = BTreeMap::new();
    for (domain, root) in datasets {
        let mut ds = Dataset::load(root, discover_classes(root)?)?;
        ds.domain = domain.clone();
        for img in ds.train.iter_mut().chain(ds.test.iter_mut()) {
            img.domain = domain.clone();
        }
        out.insert(domain.clone(), ds);
    }
    let mut names = out.values().map(|d| &d.class_names);
    if let Some(first) = names.next() {
        if names.any(|n| n != first) {
            return Err(Error::Config("datasets disagree on class names".into()));
        }
    }
    Ok(out)
}

/// One training run: a strategy at one fraction and seed, optionally from an initial checkpoint.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub label: String,
    pub strategy: Strategy,
    pub fraction: f64,
    pub seed: u64,
    pub init: Option<CheckpointArchive32>,
}

pub fn stage_template(config: &RunConfig, fraction: f64, seed: u64) -> StageSpec {
    let mut s = StageSpec::for_fraction(Domain::Color, fraction, seed, config.resolution);
    s.max_epochs = config.max_epochs;
    s.patience = config.patience;
    s
}

pub fn eval_policy(config: &RunConfig) -> AugmentationPolicy {
    AugmentationPolicy::standard(config.resolution)
}

/// Trains `spec`, saves the final checkpoint under `run_dir` and returns its records.
pub fn execute_run(
    config: &RunConfig,
    data: &BTreeMap<Domain, Dataset32>,
    spec: &RunSpec,
    run_id: &str,
    run_dir: &Path,
    log: &mut dyn FnMut(&str),
) -> Result<(Vec<ExperimentRecord>, CheckpointArchive32)> {
    let classes = data.values().next().ok_or_else(|| Error::Config("no datasets configured".into()))?.num_classes();
    let arch = ArchSpec::classifier(config.arch, classes, config.resolution);
    let plan = StrategyPlan::new(spec.strategy, &stage_template(config, spec.fraction, spec.seed));
    let mut sink = RecordSink::new(run_id, &spec.label, spec.fraction, spec.seed);
    let mut epochs = Vec::new();
    let results = run_strategy(
        &plan,
        &arch,
        spec.init.as_ref(),
        spec.seed,
        &mut |domain| {
            let full = data.get(domain).ok_or_else(|| {
                sketchlab_core::Error::MissingData(format!("no {domain} dataset configured"))
            })?;
            full.subset(spec.fraction, spec.seed)
        },
        &mut |k, s| {
            log(&format!(
                "{} f={} seed={} stage {} epoch {}: loss {:.4} val {:.2}",
                spec.label, spec.fraction, spec.seed, k, s.epoch, s.train_loss, s.val_acc
            ));
            epochs.push((k, s.clone()));
        },
    )?;
    for (k, s) in &epochs {
        let domain = &plan.stages[*k].domain;
        sink.push(*k, "train", domain, format!("train_loss@{}", s.epoch), s.train_loss);
        sink.push(*k, "val", domain, format!("val_acc@{}", s.epoch), s.val_acc);
    }
    for (k, r) in results.iter().enumerate() {
        let domain = &plan.stages[k].domain;
        sink.push(k, "val", domain, "best_val_acc", r.best_val_acc());
        sink.push(k, "train", domain, "best_epoch", r.best_epoch as f64);
    }
    let last = results.len() - 1;
    let mut ckpt = results[last].best_checkpoint.clone();
    ckpt.manifest.metrics.insert("fraction".into(), spec.fraction);
    let model = ckpt.to_network()?;
    let policy = eval_policy(config);
    for (domain, ds) in data {
        sink.push(last, "test", domain, "accuracy", evaluate(&model, &ds.test, &policy)?);
    }
    ckpt.save(&run_dir.join(CHECKPOINT_DIR))?;
    if config.probes.any() {
        if let Some(color) = data.get(&Domain::Color) {
            probe_records(&model, color, &config.probes, &policy, last, run_dir, &mut sink)?;
        }
    }
    Ok((sink.records, ckpt))
}

/// Runs the enabled probes on the test split of `data` and appends their records.
pub fn probe_records(
    model: &Network32,
    data: &Dataset32,
    probes: &ProbeToggles,
    policy: &AugmentationPolicy,
    stage: usize,
    out_dir: &Path,
    sink: &mut RecordSink,
) -> Result<()> {
    let domain = &data.domain;
    if probes.regions {
        let h = region_histogram(model, &data.test, policy, probes.region_percentile, Connectivity::Eight)?;
        sink.push(stage, "test", domain, "regions_one", h.one as f64);
        sink.push(stage, "test", domain, "regions_two", h.two as f64);
        sink.push(stage, "test", domain, "regions_three_plus", h.three_plus as f64);
        sink.push(stage, "test", domain, "regions_zero", h.zero as f64);
        sink.push(stage, "test", domain, "single_region_share", h.single_share());
    }
    if probes.tuning {
        let n = probes.tuning_images.min(data.test.len());
        let curve = tuning_curve(model, &data.test, policy, n)?;
        for (i, v) in curve.values.iter().enumerate() {
            sink.push(stage, "test", domain, format!("tuning@{}", i + 1), *v);
        }
    }
    if probes.pca {
        let views = data
            .test
            .iter()
            .map(|i| sketchlab_core::corpus::eval_view(i, policy))
            .collect::<sketchlab_core::Result<Vec<_>>>()?;
        let feats = penultimate_features(model, &ImageBatch32::from_images(&views))?;
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        write_activation_dump(&out_dir.join("penultimate_test.bin"), &feats)?;
        let report = pca_report(&feats)?;
        sink.push(stage, "test", domain, "pcs_to_variance", pcs_to_variance(&report, probes.pca_theta)? as f64);
        for (i, v) in report.cumulative_variance.iter().enumerate() {
            sink.push(stage, "test", domain, format!("cumvar@{}", i + 1), *v);
        }
    }
    if let Some(dir) = &probes.cue_conflict {
        let (classes, items) = load_cue_conflict::<f32>(dir)?;
        let map: Vec<usize> =
            classes.iter().map(|c| data.class_names.iter().position(|m| m == c).unwrap_or(usize::MAX)).collect();
        let kept: Vec<_> =
            items.into_iter().filter(|i| map[i.shape_class] != usize::MAX && map[i.texture_class] != usize::MAX).collect();
        let report = shape_bias(model, &kept, &map, policy)?;
        let c = report.overall;
        sink.push(stage, "test", domain, "shape_decisions", c.shape as f64);
        sink.push(stage, "test", domain, "texture_decisions", c.texture as f64);
        sink.push(stage, "test", domain, "other_decisions", c.other as f64);
        if let Some(f) = c.fraction() {
            sink.push(stage, "test", domain, "shape_bias", f);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepSummary {
    pub completed: Vec<String>,
    pub skipped: Vec<String>,
    pub failed: Vec<(String, String)>,
}

/// Runs every configured run not already complete under `runs_dir`.
pub fn run_many(
    config: &RunConfig,
    specs: &[RunSpec],
    extra_tag: &str,
    log: &mut dyn FnMut(&str),
) -> Result<SweepSummary> {
    config.validate()?;
    let fingerprint = dataset_fingerprint(&config.datasets)?;
    let tag = format!("{}{extra_tag}", code_tag(config));
    let mut data = None;
    let mut summary = SweepSummary::default();
    for spec in specs {
        let id = run_id(&spec.label, spec.fraction, spec.seed, &fingerprint, &tag);
        let dir = config.runs_dir().join(&id);
        if RunMeta::read(&dir).is_some_and(|m| m.complete) && dir.join(RECORDS_FILE).is_file() {
            log(&format!("skip {id} ({} f={} seed={}): complete", spec.label, spec.fraction, spec.seed));
            summary.skipped.push(id);
            continue;
        }
        if data.is_none() {
            data = Some(load_datasets(&config.datasets)?);
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let meta = RunMeta {
            run_id: id.clone(),
            strategy: spec.label.clone(),
            fraction: spec.fraction,
            seed: spec.seed,
            complete: false,
        };
        meta.write(&dir)?;
        match execute_run(config, data.as_ref().expect("loaded"), spec, &id, &dir, log)
            .and_then(|(records, _)| write_records(&dir.join(RECORDS_FILE), &records))
        {
            Ok(()) => {
                RunMeta { complete: true, ..meta }.write(&dir)?;
                let _ = fs::remove_file(dir.join(ERROR_FILE));
                summary.completed.push(id);
            }
            Err(e) => {
                let path = dir.join(ERROR_FILE);
                fs::write(&path, e.to_string()).map_err(|err| Error::io(&path, err))?;
                log(&format!("run {id} failed: {e}"));
                summary.failed.push((id, e.to_string()));
            }
        }
    }
    Ok(summary)
}

/// Strategy × fraction × seed grid of the config.
pub fn grid(config: &RunConfig) -> Vec<RunSpec> {
    let mut out = Vec::new();
    for &strategy in &config.strategies {
        for &fraction in &config.fractions {
            for &seed in &config.seeds {
                out.push(RunSpec { label: strategy.to_string(), strategy, fraction, seed, init: None });
            }
        }
    }
    out
}

/// Runs the whole grid; finished runs are skipped and failures are recorded, not fatal.
pub fn sweep(config: &RunConfig, log: &mut dyn FnMut(&str)) -> Result<SweepSummary> {
    run_many(config, &grid(config), "", log)
}

/// Directory that `run_many(config, [spec], extra_tag)` uses for `spec`.
pub fn run_dir(config: &RunConfig, spec: &RunSpec, extra_tag: &str) -> Result<PathBuf> {
    let tag = format!("{}{extra_tag}", code_tag(config));
    let id = run_id(&spec.label, spec.fraction, spec.seed, &dataset_fingerprint(&config.datasets)?, &tag);
    Ok(config.runs_dir().join(id))
}

/// Loads the final checkpoint of a run directory.
pub fn load_run_checkpoint(run_dir: &Path) -> Result<CheckpointArchive32> {
    Ok(CheckpointArchive::load(&run_dir.join(CHECKPOINT_DIR))?)
}
