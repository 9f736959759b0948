//! Subcommand implementations. Each stage reads and writes the documented
//! file artifacts and records a `run.json` in its output directory.

use std::fs;
use std::path::{Path, PathBuf};

use aerorecog_core::augment::{generate_views, view_file_name, ViewSet, ViewSetMeta};
use aerorecog_core::detect::Detection;
use aerorecog_core::imgcore::{load_image, save_png, AffineWarp, Quad};
use aerorecog_core::recognize::{
    data_reduction_sweep, leave_one_burst_out, sweep_csv, BurstSamples, Gallery,
};
use aerorecog_core::synthgen::{make_fixture, render, FrameTruth};
use aerorecog_core::track::Termination;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{CliError, StageContext};
use crate::manifest::{DatasetEntry, DatasetManifest, FlightMetadata, SequenceManifest};
use crate::pipeline::{burst_samples, fixture_burst, process_frames};

#[derive(Debug, Parser)]
#[command(
    name = "aerorecog",
    version,
    about = "Detect, track and recognize ground targets in aerial image sequences"
)]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the synthetic recognition fixture as PNG sequences with ground truth.
    Synth(SynthArgs),
    /// Register, difference and detect the moving target in every frame.
    Detect { sequence: PathBuf },
    /// Detect, then track the target and cut normalized templates.
    Track { sequence: PathBuf },
    /// Generate rotated views of every template of a tracked burst.
    Augment { burst: PathBuf },
    /// Add a labeled target, built from view sets, to a gallery.
    Enroll {
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long)]
        label: String,
        #[arg(required = true)]
        views: Vec<PathBuf>,
    },
    /// Identify a query burst, given as view sets, against a gallery.
    Match {
        #[arg(long)]
        gallery: PathBuf,
        #[arg(required = true)]
        views: Vec<PathBuf>,
    },
    /// Leave-one-burst-out evaluation over a dataset or the synthetic fixture.
    Evaluate(DatasetArgs),
    /// Recognition rate as training templates are removed.
    Sweep {
        #[command(flatten)]
        data: DatasetArgs,
        /// Comma-separated removal fractions; the configuration's list by default.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
    },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub targets: Option<usize>,
    #[arg(long)]
    pub bursts: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Dataset manifest; the synthetic fixture is generated in memory when absent.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct InputHash {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunRecord<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_sha256: String,
    config: &'a PipelineConfig,
    inputs: Vec<InputHash>,
}

pub struct Context {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Context {
    fn create_out(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).stage("output")
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let p = self.out.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).stage("output")?;
        }
        fs::write(&p, contents).stage("output")?;
        Ok(p)
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).stage("output")?;
        text.push('\n');
        self.write(name, text)
    }

    /// Records the effective configuration and the hashes of every input file.
    fn record_run(&self, command: &str, inputs: &[PathBuf]) -> Result<(), CliError> {
        let mut hashes = Vec::with_capacity(inputs.len());
        for p in inputs {
            let bytes = fs::read(p).stage("run record")?;
            hashes.push(InputHash {
                path: p.display().to_string(),
                sha256: sha256_hex(&bytes),
            });
        }
        let rec = RunRecord {
            tool: "aerorecog",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: self.cfg.seed,
            config_sha256: sha256_hex(self.cfg.to_toml().as_bytes()),
            config: &self.cfg,
            inputs: hashes,
        };
        self.write_json("run.json", &rec).map(|_| ())
    }
}

/// Loads the configuration, applies the global flags and runs the subcommand.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::ConfigInvalid("--jobs must be at least 1".into()));
        }
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global();
    }
    let ctx = Context { cfg, out: cli.out };
    ctx.create_out()?;
    match cli.command {
        Command::Synth(a) => synth(&ctx, &a),
        Command::Detect { sequence } => detect(&ctx, &sequence),
        Command::Track { sequence } => track(&ctx, &sequence),
        Command::Augment { burst } => augment(&ctx, &burst),
        Command::Enroll {
            gallery,
            label,
            views,
        } => enroll(&ctx, &gallery, &label, &views),
        Command::Match { gallery, views } => match_views(&ctx, &gallery, &views),
        Command::Evaluate(d) => evaluate(&ctx, d.dataset.as_deref()),
        Command::Sweep { data, fractions } => sweep(&ctx, data.dataset.as_deref(), fractions),
    }
}

fn frame_file(i: usize) -> String {
    format!("frame_{i:03}.png")
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TruthFile {
    pub label: String,
    pub burst_id: String,
    pub frames: Vec<FrameTruth>,
}

pub fn synth(ctx: &Context, a: &SynthArgs) -> Result<(), CliError> {
    let mut fc = ctx.cfg.fixture_config();
    fc.n_targets = a.targets.unwrap_or(fc.n_targets);
    fc.bursts_per_target = a.bursts.unwrap_or(fc.bursts_per_target);
    fc.frames = a.frames.unwrap_or(fc.frames);
    fc.width = a.width.unwrap_or(fc.width);
    fc.height = a.height.unwrap_or(fc.height);
    fc.noise_sigma = a.noise.unwrap_or(fc.noise_sigma);
    let fixture =
        make_fixture(&fc).map_err(|e| CliError::ConfigInvalid(format!("fixture: {e}")))?;
    let mut entries = Vec::with_capacity(fixture.bursts.len());
    for b in &fixture.bursts {
        let (frames, truth) = render(&b.script).stage("synth")?;
        let dir = ctx.out.join(&b.burst_id);
        fs::create_dir_all(&dir).stage("synth")?;
        let mut files = Vec::with_capacity(frames.len());
        for (i, f) in frames.iter().enumerate() {
            save_png(f, dir.join(frame_file(i))).stage("synth")?;
            files.push(PathBuf::from(frame_file(i)));
        }
        let manifest = SequenceManifest {
            id: b.burst_id.clone(),
            frames: files,
            metadata: Some(FlightMetadata {
                date: None,
                resolution: Some((fc.width, fc.height)),
            }),
        };
        ctx.write_json(&format!("{}/sequence.json", b.burst_id), &manifest)?;
        ctx.write_json(
            &format!("{}/truth.json", b.burst_id),
            &TruthFile {
                label: b.label.clone(),
                burst_id: b.burst_id.clone(),
                frames: truth,
            },
        )?;
        entries.push(DatasetEntry {
            label: b.label.clone(),
            sequence: PathBuf::from(format!("{}/sequence.json", b.burst_id)),
        });
        log::info!("rendered {}", b.burst_id);
    }
    ctx.write_json("fixture.json", &fixture)?;
    ctx.write_json("dataset.json", &DatasetManifest { bursts: entries })?;
    ctx.record_run("synth", &[])
}

fn sequence_inputs(manifest_path: &Path, m: &SequenceManifest) -> Vec<PathBuf> {
    std::iter::once(manifest_path.to_path_buf())
        .chain(m.frames.iter().cloned())
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame: usize,
    #[serde(rename = "box")]
    pub bbox: Option<[f64; 4]>,
    pub area: Option<usize>,
    pub score: Option<f64>,
    /// Background registration from the previous frame onto this one.
    pub registration: Option<AffineWarp>,
}

pub fn detect(ctx: &Context, sequence: &Path) -> Result<(), CliError> {
    let m = SequenceManifest::load(sequence)?;
    let frames = m.load_frames()?;
    let out = process_frames(&frames, &ctx.cfg).stage("detect")?;
    let mut lines = String::new();
    for (i, d) in out.detections.detections.iter().enumerate() {
        let rec = DetectionRecord {
            frame: i,
            bbox: d.as_ref().map(|d| {
                let b = d.bbox();
                [b.x, b.y, b.w, b.h]
            }),
            area: d.as_ref().map(|d| d.area),
            score: d.as_ref().map(|d| d.score),
            registration: i.checked_sub(1).map(|j| out.detections.warps[j]),
        };
        lines.push_str(&serde_json::to_string(&rec).stage("detect")?);
        lines.push('\n');
    }
    ctx.write("detections.jsonl", lines)?;
    ctx.write_json("seed.json", &out.seed)?;
    ctx.record_run("detect", &sequence_inputs(sequence, &m))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TemplateRecord {
    /// Frame index within the sequence.
    pub frame: usize,
    pub pose: AffineWarp,
    pub patch: String,
    /// Patch brought back to the pose of the first tracked frame.
    pub template: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BurstFile {
    pub burst_id: String,
    pub seed: Detection,
    pub termination: Termination,
    pub patch_region: Quad,
    pub region: Quad,
    pub residuals: Vec<f64>,
    pub templates: Vec<TemplateRecord>,
}

pub fn track(ctx: &Context, sequence: &Path) -> Result<(), CliError> {
    let m = SequenceManifest::load(sequence)?;
    let frames = m.load_frames()?;
    let out = process_frames(&frames, &ctx.cfg).stage("track")?;
    let (seed, t) = match (out.seed, out.track) {
        (Some(s), Some(t)) => (s, t),
        _ => {
            return Err(CliError::Stage {
                stage: "track",
                source: aerorecog_core::Error::EmptyBurst {
                    reason: format!("no persistent detection in {}", m.id),
                },
            })
        }
    };
    let mut records = Vec::with_capacity(t.templates.len());
    for (k, (tt, tpl)) in t.templates.iter().zip(&out.templates).enumerate() {
        let patch = format!("patches/patch_{k:03}.png");
        let template = format!("templates/template_{k:03}.png");
        fs::create_dir_all(ctx.out.join("patches")).stage("track")?;
        fs::create_dir_all(ctx.out.join("templates")).stage("track")?;
        save_png(&tt.patch, ctx.out.join(&patch)).stage("track")?;
        save_png(tpl, ctx.out.join(&template)).stage("track")?;
        records.push(TemplateRecord {
            frame: seed.frame_index + tt.source_frame,
            pose: tt.pose,
            patch,
            template,
        });
    }
    let file = BurstFile {
        burst_id: m.id.clone(),
        termination: t.termination,
        patch_region: t.patch_region,
        region: t.states[0].region,
        residuals: t.states.iter().map(|s| s.last_residual).collect(),
        seed,
        templates: records,
    };
    ctx.write_json("burst.json", &file)?;
    ctx.record_run("track", &sequence_inputs(sequence, &m))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ViewsFile {
    pub burst_id: String,
    pub step_degrees: f64,
    pub sets: Vec<ViewSetMeta>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::ManifestInvalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::ManifestInvalid(format!("{}: {e}", path.display())))
}

fn sibling(base: &Path, rel: &str) -> PathBuf {
    base.parent().unwrap_or(Path::new("")).join(rel)
}

pub fn augment(ctx: &Context, burst: &Path) -> Result<(), CliError> {
    let b: BurstFile = read_json(burst)?;
    let step = ctx.cfg.rotation_step;
    let mut inputs = vec![burst.to_path_buf()];
    let mut sets = Vec::with_capacity(b.templates.len());
    for (k, t) in b.templates.iter().enumerate() {
        let path = sibling(burst, &t.template);
        let img = load_image(&path)
            .map_err(|e| CliError::ManifestInvalid(format!("{}: {e}", path.display())))?;
        inputs.push(path);
        let vs = generate_views(&img, step, &b.burst_id).stage("augment")?;
        let dir = format!("views/template_{k:03}");
        fs::create_dir_all(ctx.out.join(&dir)).stage("augment")?;
        let mut files = Vec::with_capacity(vs.len());
        for (v, a) in vs.views.iter().zip(&vs.angles) {
            let f = format!("{dir}/{}", view_file_name(*a));
            save_png(v, ctx.out.join(&f)).stage("augment")?;
            files.push(f);
        }
        sets.push(ViewSetMeta {
            source_burst: b.burst_id.clone(),
            source_frame: t.frame,
            angles: vs.angles,
            files,
        });
    }
    ctx.write_json(
        "views.json",
        &ViewsFile {
            burst_id: b.burst_id,
            step_degrees: step,
            sets,
        },
    )?;
    ctx.record_run("augment", &inputs)
}

/// Loads every view set listed in the given `views.json` files.
fn load_view_sets(
    paths: &[PathBuf],
    inputs: &mut Vec<PathBuf>,
) -> Result<(String, Vec<ViewSet>), CliError> {
    let mut sets = Vec::new();
    let mut id = String::new();
    for p in paths {
        let f: ViewsFile = read_json(p)?;
        inputs.push(p.clone());
        if id.is_empty() {
            id = f.burst_id.clone();
        }
        for meta in f.sets {
            let mut views = Vec::with_capacity(meta.files.len());
            for rel in &meta.files {
                let vp = sibling(p, rel);
                views
                    .push(load_image(&vp).map_err(|e| {
                        CliError::ManifestInvalid(format!("{}: {e}", vp.display()))
                    })?);
            }
            sets.push(ViewSet {
                views,
                source_burst: meta.source_burst,
                angles: meta.angles,
            });
        }
    }
    Ok((id, sets))
}

pub fn enroll(
    ctx: &Context,
    gallery: &Path,
    label: &str,
    views: &[PathBuf],
) -> Result<(), CliError> {
    let rcfg = ctx.cfg.recognition_config();
    let mut g = if gallery.join("gallery.json").is_file() {
        Gallery::load(gallery, Some(&rcfg)).stage("enroll")?
    } else {
        Gallery::new(rcfg)
    };
    let mut inputs = Vec::new();
    let (_, sets) = load_view_sets(views, &mut inputs)?;
    g.enroll(label, &sets).stage("enroll")?;
    g.save(gallery).stage("enroll")?;
    log::info!("gallery {} now holds {} labels", gallery.display(), g.len());
    ctx.record_run("enroll", &inputs)
}

pub fn match_views(ctx: &Context, gallery: &Path, views: &[PathBuf]) -> Result<(), CliError> {
    let g = Gallery::load(gallery, Some(&ctx.cfg.recognition_config())).stage("match")?;
    let mut inputs = vec![gallery.join("gallery.json")];
    let (id, sets) = load_view_sets(views, &mut inputs)?;
    let report = g.identify(&id, &sets).stage("match")?;
    println!("{}", report.decision);
    ctx.write_json("match.json", &report)?;
    ctx.record_run("match", &inputs)
}

/// Burst samples from a dataset manifest, or from the in-memory fixture.
fn dataset_samples(
    ctx: &Context,
    dataset: Option<&Path>,
    inputs: &mut Vec<PathBuf>,
) -> Result<Vec<BurstSamples>, CliError> {
    match dataset {
        Some(p) => {
            let d = DatasetManifest::load(p)?;
            inputs.push(p.to_path_buf());
            let mut out = Vec::with_capacity(d.bursts.len());
            for b in &d.bursts {
                let m = SequenceManifest::load(&b.sequence)?;
                let frames = m.load_frames()?;
                inputs.extend(sequence_inputs(&b.sequence, &m));
                out.push(burst_samples(&b.label, &m.id, &frames, &ctx.cfg).stage("track")?);
            }
            Ok(out)
        }
        None => {
            let fixture = make_fixture(&ctx.cfg.fixture_config())
                .map_err(|e| CliError::ConfigInvalid(format!("fixture: {e}")))?;
            fixture
                .bursts
                .iter()
                .map(|b| fixture_burst(b, &ctx.cfg).stage("track"))
                .collect()
        }
    }
}

#[derive(Debug, Serialize)]
struct ErrorCell<'a> {
    truth: &'a str,
    decided: &'a str,
    count: usize,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    recognition_rate: f64,
    correct: usize,
    total: usize,
    labels: &'a [String],
    errors: Vec<ErrorCell<'a>>,
    reports: Vec<QueryReport<'a>>,
}

#[derive(Debug, Serialize)]
struct QueryReport<'a> {
    truth: &'a str,
    query: &'a str,
    decision: &'a str,
    tie: bool,
    ranking: &'a [(String, f64)],
}

pub fn evaluate(ctx: &Context, dataset: Option<&Path>) -> Result<(), CliError> {
    let mut inputs = Vec::new();
    let samples = dataset_samples(ctx, dataset, &mut inputs)?;
    let e = leave_one_burst_out(&samples, &ctx.cfg.recognition_config()).stage("evaluate")?;
    let c = &e.confusion;
    ctx.write("confusion.csv", c.to_csv())?;
    ctx.write("confusion_counts.csv", c.counts_csv())?;
    let summary = Summary {
        recognition_rate: c.recognition_rate(),
        correct: c.correct(),
        total: c.total(),
        labels: &c.labels,
        errors: c
            .errors()
            .into_iter()
            .map(|(truth, decided, count)| ErrorCell {
                truth,
                decided,
                count,
            })
            .collect(),
        reports: e
            .reports
            .iter()
            .map(|(truth, r)| QueryReport {
                truth,
                query: &r.query,
                decision: &r.decision,
                tie: r.tie,
                ranking: &r.ranking,
            })
            .collect(),
    };
    ctx.write_json("summary.json", &summary)?;
    println!(
        "recognition rate {:.4} ({}/{})",
        c.recognition_rate(),
        c.correct(),
        c.total()
    );
    ctx.record_run("evaluate", &inputs)
}

pub fn sweep(
    ctx: &Context,
    dataset: Option<&Path>,
    fractions: Option<Vec<f64>>,
) -> Result<(), CliError> {
    let fractions = fractions.unwrap_or_else(|| ctx.cfg.sweep_fractions.clone());
    if let Some(f) = fractions.iter().find(|f| !(0.0..1.0).contains(*f)) {
        return Err(CliError::ConfigInvalid(format!(
            "sweep fraction {f} outside [0, 1)"
        )));
    }
    let mut inputs = Vec::new();
    let samples = dataset_samples(ctx, dataset, &mut inputs)?;
    let points = data_reduction_sweep(
        &samples,
        &fractions,
        &ctx.cfg.recognition_config(),
        ctx.cfg.seed,
    )
    .stage("sweep")?;
    ctx.write("sweep.csv", sweep_csv(&points))?;
    ctx.write_json("sweep.json", &points)?;
    for p in &points {
        println!("{:.2} {:.4}", p.fraction_removed, p.recognition_rate);
    }
    ctx.record_run("sweep", &inputs)
}
