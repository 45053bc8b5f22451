//! The `sketchlab` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};
use sketchlab_core::corpus::synth::{cue_conflict_set, shapes_dataset, sketch_corpus, SynthConfig, SHAPE_NAMES};
use sketchlab_core::corpus::{
    discover_classes, load_image_folder, write_cue_conflict, write_image, Dataset, Domain, XdogParams,
};
use sketchlab_core::distill::{select_matched_teacher, train_student, DistillConfig, TeacherCandidate};
use sketchlab_core::draw::{load_precomputed, train_draw, DrawConfig, GeometryProvider, ProviderSet, SemanticProvider};
use sketchlab_core::nets::{init_classifier_from_encoder, ArchId, ArchSpec, CheckpointArchive};
use sketchlab_core::probe::{pca_report, pcs_to_variance, read_activation_dump};
use sketchlab_core::train::{evaluate, Strategy};
use sketchlab_core::{CheckpointArchive32, Dataset32};

use crate::config::{default_output_dir, ProbeToggles, RunConfig};
use crate::error::{Error, Result};
use crate::records::{collect_records, write_records, RECORDS_FILE};
use crate::report::emit_report;
use crate::sweep::{
    code_tag, dataset_fingerprint, eval_policy, load_datasets, probe_records, run_id, run_many, stage_template, sweep,
    RecordSink, RunMeta, RunSpec, SweepSummary,
};

#[derive(Parser, Debug)]
#[command(name = "sketchlab", version, about = "Line-drawing pretraining lab", arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate, convert or index datasets.
    Prepare(PrepareArgs),
    /// Train one strategy at one fraction and seed.
    Train(TrainArgs),
    /// Learning-to-draw pretraining; writes an encoder checkpoint.
    Draw(DrawArgs),
    /// Probe a trained classifier (regions, tuning, PCA, shape bias).
    Probe(ProbeArgs),
    /// Distill students from teacher checkpoints.
    Distill(DistillArgs),
    /// Run the strategy x fraction x seed grid.
    Sweep(SweepArgs),
    /// Merge records and write tables and plots.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output root (default: $SKETCHLAB_OUT or ./sketchlab-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// COLOR dataset root.
    #[arg(long)]
    pub color: Option<PathBuf>,
    /// LINE dataset root.
    #[arg(long)]
    pub line: Option<PathBuf>,
    #[arg(long)]
    pub arch: Option<ArchId>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Suppress progress output.
    #[arg(long, short)]
    pub quiet: bool,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(o) = &self.out {
            c.output_dir = o.clone();
        }
        if let Some(p) = &self.color {
            c.datasets.insert(Domain::Color, p.clone());
        }
        if let Some(p) = &self.line {
            c.datasets.insert(Domain::Line, p.clone());
        }
        if let Some(a) = self.arch {
            c.arch = a;
        }
        if let Some(r) = self.resolution {
            c.resolution = r;
        }
        if let Some(e) = self.max_epochs {
            c.max_epochs = e;
        }
        if let Some(p) = self.patience {
            c.patience = p;
        }
        Ok(c)
    }

    fn logger(&self) -> impl FnMut(&str) {
        let quiet = self.quiet;
        move |m: &str| {
            if !quiet {
                eprintln!("{m}");
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConvertKind {
    Line,
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// Dataset root to create or convert.
    #[arg(long)]
    pub root: PathBuf,
    /// Generate the synthetic shapes corpus at `--root`.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 100)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = 32)]
    pub resolution: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Convert the dataset at `--root` into another domain.
    #[arg(long, value_enum)]
    pub convert: Option<ConvertKind>,
    /// Destination of a conversion (default: `<root>-line`).
    #[arg(long)]
    pub dest: Option<PathBuf>,
    /// Write a synthetic cue-conflict folder here.
    #[arg(long)]
    pub cue_conflict: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub per_pair: usize,
    /// Write a synthetic sketch folder here.
    #[arg(long)]
    pub sketches: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub sketch_count: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "ColorOnly")]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 1.0)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Start from a classifier checkpoint.
    #[arg(long, conflicts_with = "init_encoder")]
    pub init: Option<PathBuf>,
    /// Start from a learning-to-draw encoder checkpoint.
    #[arg(long)]
    pub init_encoder: Option<PathBuf>,
    /// Strategy label in the records (default: derived).
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Args, Debug)]
pub struct DrawArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Folder of photos (searched recursively).
    #[arg(long)]
    pub photos: PathBuf,
    /// Folder of line images (searched recursively).
    #[arg(long)]
    pub sketches: PathBuf,
    /// Frozen classifier used as the semantic provider.
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    /// Precomputed geometry maps (`<source_id>.bin`).
    #[arg(long)]
    pub geometry_dir: Option<PathBuf>,
    /// Precomputed photo embeddings (`<source_id>.bin`).
    #[arg(long)]
    pub embeddings_dir: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub decay_start: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub width_divisor: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Classifier checkpoint directory.
    #[arg(long, required_unless_present = "features")]
    pub checkpoint: Option<PathBuf>,
    /// Activation dump `[N, D]` for PCA without a model.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Dataset root whose test split is probed (default: the COLOR dataset).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub regions: bool,
    #[arg(long, default_value_t = 85.0)]
    pub percentile: f64,
    #[arg(long)]
    pub tuning: bool,
    #[arg(long, default_value_t = 500)]
    pub tuning_images: usize,
    #[arg(long)]
    pub pca: bool,
    #[arg(long, default_value_t = 0.9)]
    pub theta: f64,
    /// Cue-conflict folder for shape bias.
    #[arg(long)]
    pub cue_conflict: Option<PathBuf>,
    #[arg(long, default_value = "probe")]
    pub label: String,
}

#[derive(Args, Debug)]
pub struct DistillArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Teacher candidates (classifier checkpoints).
    #[arg(long, required = true)]
    pub teacher: Vec<PathBuf>,
    /// Reference teacher: candidates are matched to its accuracy and it is distilled too.
    #[arg(long, conflicts_with = "target")]
    pub match_to: Option<PathBuf>,
    /// Target accuracy for matching candidates.
    #[arg(long)]
    pub target: Option<f64>,
    /// Student architectures (default from config).
    #[arg(long, value_delimiter = ',')]
    pub student: Vec<ArchId>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 1.0)]
    pub fraction: f64,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_delimiter = ',')]
    pub strategies: Vec<Strategy>,
    #[arg(long, value_delimiter = ',')]
    pub fractions: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory searched recursively for records (default: the output root).
    #[arg(long)]
    pub runs: Option<PathBuf>,
    /// Report directory (default: `<runs>/report`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Prepare(a) => prepare(&a),
        Command::Train(a) => train(&a),
        Command::Draw(a) => draw(&a),
        Command::Probe(a) => probe(&a),
        Command::Distill(a) => distill(&a),
        Command::Sweep(a) => {
            let mut c = a.common.resolve()?;
            if !a.strategies.is_empty() {
                c.strategies = a.strategies.clone();
            }
            if !a.fractions.is_empty() {
                c.fractions = a.fractions.clone();
            }
            if !a.seeds.is_empty() {
                c.seeds = a.seeds.clone();
            }
            let summary = sweep(&c, &mut a.common.logger())?;
            print_summary(&summary);
            Ok(())
        }
        Command::Report(a) => {
            let runs = a.runs.clone().unwrap_or_else(default_output_dir);
            let records = collect_records(&runs)?;
            let out = a.out.clone().unwrap_or_else(|| runs.join("report"));
            for p in emit_report(&records, &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn print_summary(s: &SweepSummary) {
    println!("completed {} skipped {} failed {}", s.completed.len(), s.skipped.len(), s.failed.len());
    for (id, e) in &s.failed {
        println!("failed {id}: {e}");
    }
}

fn prepare(a: &PrepareArgs) -> Result<()> {
    let synth = SynthConfig {
        resolution: a.resolution,
        train_per_class: a.per_class,
        test_per_class: a.test_per_class,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let mut did = false;
    if a.synthetic {
        shapes_dataset::<f32>(&synth)?.save(&a.root)?;
        println!("wrote {}", a.root.display());
        did = true;
    }
    if let Some(ConvertKind::Line) = a.convert {
        let ds: Dataset32 = Dataset::load(&a.root, discover_classes(&a.root)?)?;
        let dest = a.dest.clone().unwrap_or_else(|| {
            let mut s = a.root.as_os_str().to_owned();
            s.push("-line");
            PathBuf::from(s)
        });
        ds.to_line(&XdogParams::default())?.save(&dest)?;
        println!("wrote {}", dest.display());
        did = true;
    }
    if let Some(dir) = &a.cue_conflict {
        let items = cue_conflict_set::<f32>(&synth, a.per_pair);
        let classes: Vec<String> = SHAPE_NAMES.iter().map(|s| s.to_string()).collect();
        write_cue_conflict(dir, &classes, &items)?;
        println!("wrote {}", dir.display());
        did = true;
    }
    if let Some(dir) = &a.sketches {
        for img in sketch_corpus::<f32>(&synth, a.sketch_count, &XdogParams::default())? {
            write_image(&dir.join(format!("{}.png", img.source_id)), &img)?;
        }
        println!("wrote {}", dir.display());
        did = true;
    }
    if !did {
        sketchlab_core::corpus::load_dataset(&a.root, discover_classes(&a.root)?)?;
        println!("{} is a valid dataset", a.root.display());
    }
    Ok(())
}

/// SHA-256 over every file of a checkpoint directory.
fn checkpoint_digest(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    for f in files {
        h.update(fs::read(&f).map_err(|e| Error::io(&f, e))?);
    }
    Ok(format!("{:x}", h.finalize()))
}

fn train(a: &TrainArgs) -> Result<()> {
    let mut c = a.common.resolve()?;
    c.strategies = vec![a.strategy];
    c.fractions = vec![a.fraction];
    c.seeds = vec![a.seed];
    let (init, tag, default_label) = match (&a.init, &a.init_encoder) {
        (Some(p), _) => (Some(CheckpointArchive::load(p)?), checkpoint_digest(p)?, format!("init>{}", a.strategy)),
        (None, Some(p)) => {
            let enc: CheckpointArchive32 = CheckpointArchive::load(p)?;
            let classes = c.datasets.values().next().map(|r| discover_classes(r)).transpose()?.unwrap_or(0);
            let net = init_classifier_from_encoder(&enc, classes, a.seed)?;
            let ckpt = CheckpointArchive::from_network(&net, enc.manifest.stage_history.clone(), a.seed, 0);
            (Some(ckpt), checkpoint_digest(p)?, format!("Draw>{}", a.strategy))
        }
        (None, None) => (None, String::new(), a.strategy.to_string()),
    };
    let spec = RunSpec {
        label: a.label.clone().unwrap_or(default_label),
        strategy: a.strategy,
        fraction: a.fraction,
        seed: a.seed,
        init,
    };
    let summary = run_many(&c, &[spec], &tag, &mut a.common.logger())?;
    print_summary(&summary);
    if summary.failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!("{} run(s) failed", summary.failed.len())))
    }
}

fn draw(a: &DrawArgs) -> Result<()> {
    let c = a.common.resolve()?;
    let mut cfg: DrawConfig = c.draw.clone();
    if let Some(e) = a.epochs {
        cfg.epochs = e;
        if a.decay_start.is_none() && cfg.decay_start_epoch >= e {
            cfg.decay_start_epoch = e / 2;
        }
    }
    if let Some(d) = a.decay_start {
        cfg.decay_start_epoch = d;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(l) = a.lr {
        cfg.adam_lr = l;
    }
    if let Some(w) = a.width_divisor {
        cfg.width_divisor = w;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let photos = load_image_folder::<f32>(&a.photos, Domain::Color)?;
    let sketches = load_image_folder::<f32>(&a.sketches, Domain::Line)?;
    let mut providers = ProviderSet::sobel_only();
    if let Some(dir) = &a.geometry_dir {
        providers.geometry = GeometryProvider::Precomputed(load_precomputed(dir)?);
    }
    match &a.teacher {
        Some(t) => {
            let model = CheckpointArchive::<f32>::load(t)?.to_network()?;
            let precomputed = a.embeddings_dir.as_deref().map(load_precomputed).transpose()?;
            providers.semantic = Some(SemanticProvider { model, precomputed });
        }
        None => cfg.weights.sem = 0.0,
    }
    let mut log = a.common.logger();
    let result = train_draw(&photos, &sketches, c.resolution, &cfg, &providers, &mut |s| {
        log(&format!(
            "draw epoch {}: lr {:.2e} total {:.4} adv {:.4} geom {:.4} sem {:.4} cyc {:.4} disc {:.4}",
            s.epoch, s.lr, s.generator.total, s.generator.adv, s.generator.geom, s.generator.sem, s.generator.cyc, s.discriminator
        ))
    })?;
    let id = {
        let digest = Sha256::digest(format!(
            "{}|{}|{}|{}",
            serde_json::to_string(&cfg).expect("config serializes"),
            a.photos.display(),
            a.sketches.display(),
            a.teacher.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
        ));
        format!("{digest:x}")[..16].to_string()
    };
    let dir = c.output_dir.join("draw").join(&id);
    result.encoder.save(&dir.join("encoder"))?;
    let mut sink = RecordSink::new(&id, "Draw", 1.0, cfg.seed);
    for s in &result.history {
        let g = &s.generator;
        for (name, v) in [("adv", g.adv), ("geom", g.geom), ("sem", g.sem), ("cyc", g.cyc), ("total", g.total), ("disc", s.discriminator)] {
            sink.push(0, "train", &Domain::Draw, format!("draw_{name}@{}", s.epoch), v);
        }
    }
    write_records(&dir.join(RECORDS_FILE), &sink.records)?;
    println!("{}", dir.join("encoder").display());
    Ok(())
}

fn probe(a: &ProbeArgs) -> Result<()> {
    let c = a.common.resolve()?;
    let toggles = ProbeToggles {
        regions: a.regions,
        region_percentile: a.percentile,
        tuning: a.tuning,
        tuning_images: a.tuning_images,
        pca: a.pca,
        pca_theta: a.theta,
        cue_conflict: a.cue_conflict.clone(),
    };
    let source = a.checkpoint.as_ref().or(a.features.as_ref()).expect("clap requires one");
    let id = {
        let digest = Sha256::digest(format!("{}|{}|{:?}", a.label, source.display(), toggles));
        format!("{digest:x}")[..16].to_string()
    };
    let dir = c.output_dir.join("probe").join(&id);
    let mut sink = RecordSink::new(&id, &a.label, 1.0, 0);
    if let Some(dump) = &a.features {
        let feats = read_activation_dump::<f64>(dump)?;
        let report = pca_report(&feats)?;
        sink.push(0, "test", &Domain::Color, "pcs_to_variance", pcs_to_variance(&report, a.theta)? as f64);
        for (i, v) in report.cumulative_variance.iter().enumerate() {
            sink.push(0, "test", &Domain::Color, format!("cumvar@{}", i + 1), *v);
        }
    }
    if let Some(ckpt) = &a.checkpoint {
        let archive: CheckpointArchive32 = CheckpointArchive::load(ckpt)?;
        let root = a
            .data
            .clone()
            .or_else(|| c.datasets.get(&Domain::Color).cloned())
            .ok_or_else(|| Error::Config("probe needs --data or a COLOR dataset".into()))?;
        let mut ds: Dataset32 = Dataset::load(&root, discover_classes(&root)?)?;
        ds.domain = ds.test.first().map_or(Domain::Color, |i| i.domain.clone());
        let model = archive.to_network()?;
        let stage = archive.manifest.stage_history.len().saturating_sub(1);
        let policy = sketchlab_core::corpus::AugmentationPolicy::standard(archive.manifest.arch.input_resolution);
        probe_records(&model, &ds, &toggles, &policy, stage, &dir, &mut sink)?;
    }
    if sink.records.is_empty() {
        return Err(Error::Config("no probe selected".into()));
    }
    write_records(&dir.join(RECORDS_FILE), &sink.records)?;
    for r in &sink.records {
        if !r.metric.contains('@') {
            println!("{} {}", r.metric, r.value);
        }
    }
    Ok(())
}

fn teacher_label(ckpt: &CheckpointArchive32) -> String {
    let hist: Vec<String> = ckpt.manifest.stage_history.iter().map(|d| d.to_string()).collect();
    let fraction = ckpt.manifest.metrics.get("fraction").copied().unwrap_or(1.0);
    format!("{}@{fraction}", hist.join(">"))
}

fn distill(a: &DistillArgs) -> Result<()> {
    let c = a.common.resolve()?;
    let color_root = c
        .datasets
        .get(&Domain::Color)
        .ok_or_else(|| Error::Config("distillation needs a COLOR dataset (--color)".into()))?;
    let data = load_datasets(&[(Domain::Color, color_root.clone())].into_iter().collect())?;
    let color = &data[&Domain::Color];
    let policy = eval_policy(&c);
    let mut log = a.common.logger();

    let mut teachers: Vec<(PathBuf, CheckpointArchive32, f64)> = Vec::new();
    for p in &a.teacher {
        let ckpt = CheckpointArchive::load(p)?;
        let acc = evaluate(&ckpt.to_network()?, &color.test, &policy)?;
        log(&format!("teacher {} ({}) accuracy {acc:.2}", p.display(), teacher_label(&ckpt)));
        teachers.push((p.clone(), ckpt, acc));
    }
    let mut chosen: Vec<(PathBuf, CheckpointArchive32, f64)> = Vec::new();
    let reference = match &a.match_to {
        Some(p) => {
            let ckpt: CheckpointArchive32 = CheckpointArchive::load(p)?;
            let acc = evaluate(&ckpt.to_network()?, &color.test, &policy)?;
            chosen.push((p.clone(), ckpt, acc));
            Some(acc)
        }
        None => a.target,
    };
    match reference {
        Some(target) => {
            let candidates: Vec<TeacherCandidate> = teachers
                .iter()
                .map(|(p, ck, acc)| TeacherCandidate {
                    reference: p.display().to_string(),
                    fraction: ck.manifest.metrics.get("fraction").copied().unwrap_or(1.0),
                    accuracy: *acc,
                })
                .collect();
            let pick = select_matched_teacher(&candidates, target)?.reference.clone();
            log(&format!("matched teacher {pick} to target {target:.2}"));
            let t = teachers.into_iter().find(|t| t.0.display().to_string() == pick).expect("picked from list");
            chosen.insert(0, t);
        }
        None => chosen = teachers,
    }

    let students = if a.student.is_empty() { c.distill.students.clone() } else { a.student.clone() };
    let fingerprint = dataset_fingerprint(&c.datasets)?;
    let tag = code_tag(&c);
    for (path, teacher, teacher_acc) in &chosen {
        let digest = checkpoint_digest(path)?;
        for &student in &students {
            for &seed in &a.seeds {
                let label = format!("distill:{student}<-{}", teacher_label(teacher));
                let id = run_id(&label, a.fraction, seed, &fingerprint, &format!("{tag}/{digest}"));
                let dir = c.output_dir.join("distill").join(&id);
                if RunMeta::read(&dir).is_some_and(|m| m.complete) {
                    log(&format!("skip {id} ({label} seed={seed}): complete"));
                    continue;
                }
                let mut cfg = DistillConfig::new(stage_template(&c, a.fraction, seed));
                cfg.temperature = a.temperature.unwrap_or(c.distill.temperature);
                cfg.alpha = a.alpha.unwrap_or(c.distill.alpha);
                let spec = ArchSpec::classifier(student, color.num_classes(), c.resolution);
                let subset = color.subset(a.fraction, seed)?;
                let result = train_student(&spec, teacher, &subset, &cfg, seed, &mut |s| {
                    log(&format!("{label} seed={seed} epoch {}: loss {:.4} val {:.2}", s.epoch, s.train_loss, s.val_acc))
                })?;
                let mut sink = RecordSink::new(&id, &label, a.fraction, seed);
                sink.push(0, "test", &Domain::Color, "accuracy", result.student_acc);
                sink.push(0, "test", &Domain::Color, "teacher_accuracy", *teacher_acc);
                sink.push(0, "val", &Domain::Color, "best_val_acc", result.train.best_val_acc());
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                result.train.best_checkpoint.save(&dir.join("checkpoint"))?;
                write_records(&dir.join(RECORDS_FILE), &sink.records)?;
                RunMeta { run_id: id.clone(), strategy: label.clone(), fraction: a.fraction, seed, complete: true }.write(&dir)?;
                println!("{label} seed {seed}: student {:.2} teacher {teacher_acc:.2}", result.student_acc);
            }
        }
    }
    Ok(())
}
