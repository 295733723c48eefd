//! End-to-end runs: simulate, calibrate, process, extract, train and evaluate,
//! with a run summary hashing every artifact written.

use std::collections::BTreeMap;
use std::error::Error as StdError;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::calibration::{
    estimate_perspective, estimate_resolution, synth_checkerboard, PerspectiveTransform, ResolutionMap,
    TransformFile,
};
use crate::classifier::SolverParams;
use crate::evaluation::{
    run_protocol, EvalOptions, EvalReport, FeatureStore, MethodSpec, Protocol, SampleRecord, ThresholdMode,
    DEFAULT_FDR_TARGET,
};
use crate::features::{
    clbp_from_view, lbp_from_view, read_features, write_features, DescriptorKind, FeatureVector, LbpConfig,
    DIRECT_CLBP_DIMS, FTIR_CLBP_DIMS,
};
use crate::image::{read_png, write_png};
use crate::pipeline::{process_ftir, NativePpi};
use crate::rng;
use crate::sim::{capture_gate, generate_dataset, read_manifest, DatasetConfig, DatasetManifest, GateConfig, View};

pub const CONFIG_FORMAT_VERSION: u32 = 1;
pub const SUMMARY_FORMAT_VERSION: u32 = 1;
pub const RUN_SUMMARY_FILE: &str = "run_summary.json";

type BoxError = Box<dyn StdError + Send + Sync>;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing input: {path}")]
    MissingInput { path: String },
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: BoxError,
    },
}

impl ExperimentError {
    /// Process exit status for this error: 2 for configuration problems, 3
    /// for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            _ => 3,
        }
    }

    fn stage(stage: &'static str) -> impl FnOnce(BoxError) -> Self {
        move |source| ExperimentError::Stage { stage, source }
    }
}

fn boxed<E: StdError + Send + Sync + 'static>(e: E) -> BoxError {
    Box::new(e)
}

fn io_error(path: &Path, e: std::io::Error) -> BoxError {
    format!("{}: {e}", path.display()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DatasetSource {
    Simulate { config: DatasetConfig },
    Manifest { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CalibrationSource {
    /// A checkerboard rendered through the dataset's FTIR keystone (identity
    /// when the renderer applies none). `square_px` frontal pixels span
    /// `square_mm` millimetres.
    Synthetic {
        rows: usize,
        cols: usize,
        square_px: usize,
        square_mm: f64,
    },
    /// A stored transform and the frontal resolution it produces.
    Files { transform: PathBuf, ppi_x: f64, ppi_y: f64 },
}

impl Default for CalibrationSource {
    fn default() -> Self {
        CalibrationSource::Synthetic {
            rows: 7,
            cols: 10,
            square_px: 24,
            square_mm: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub seed: u64,
    pub out: PathBuf,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub calibration: CalibrationSource,
    pub methods: Vec<MethodSpec>,
    pub protocols: Vec<Protocol>,
    #[serde(default)]
    pub gate: GateConfig,
    #[serde(default)]
    pub lbp: LbpConfig,
    #[serde(default = "default_fdr")]
    pub fdr_target: f64,
    #[serde(default)]
    pub threshold_mode: ThresholdMode,
    #[serde(default)]
    pub solver: SolverParams,
    /// Write 500 ppi match-ready FTIR images.
    #[serde(default = "yes")]
    pub process_images: bool,
    /// Measure per-sample times single-threaded and record them.
    #[serde(default)]
    pub performance_log: bool,
}

fn default_fdr() -> f64 {
    DEFAULT_FDR_TARGET
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    /// Desk-scale simulated dataset, CLBP feature fusion, both protocols.
    pub fn desk(out: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            seed,
            out: out.into(),
            dataset: DatasetSource::Simulate {
                config: DatasetConfig::desk(),
            },
            calibration: CalibrationSource::default(),
            methods: vec![MethodSpec::clbp_feature_fusion()],
            protocols: vec![Protocol::Known, Protocol::Cross],
            gate: GateConfig::default(),
            lbp: LbpConfig::default(),
            fdr_target: DEFAULT_FDR_TARGET,
            threshold_mode: ThresholdMode::Test,
            solver: SolverParams::default(),
            process_images: true,
            performance_log: false,
        }
    }

    /// Full-scale dataset with the single-view and fused methods.
    pub fn full(out: impl Into<PathBuf>, seed: u64) -> Self {
        let mut cfg = Self::desk(out, seed);
        cfg.dataset = DatasetSource::Simulate {
            config: DatasetConfig::full(),
        };
        cfg.methods = vec![
            MethodSpec::single("FTIR + LBP", View::Ftir, DescriptorKind::Lbp),
            MethodSpec::single("Direct + CLBP", View::Direct, DescriptorKind::Clbp),
            MethodSpec::single("FTIR + CLBP", View::Ftir, DescriptorKind::Clbp),
            MethodSpec::clbp_feature_fusion(),
        ];
        cfg
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|_| ExperimentError::MissingInput {
            path: path.display().to_string(),
        })?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.format_version != CONFIG_FORMAT_VERSION {
            return bad(format!("unsupported format_version {}", self.format_version));
        }
        if self.methods.is_empty() || self.protocols.is_empty() {
            return bad("at least one method and one protocol are required".into());
        }
        for m in &self.methods {
            m.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        if !(self.fdr_target > 0.0 && self.fdr_target < 1.0) {
            return bad(format!("fdr_target must lie in (0, 1), got {}", self.fdr_target));
        }
        self.lbp.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        if let DatasetSource::Simulate { config } = &self.dataset {
            config.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        match &self.calibration {
            CalibrationSource::Synthetic {
                rows,
                cols,
                square_px,
                square_mm,
            } => {
                if *rows < 3 || *cols < 3 || *square_px == 0 || !(*square_mm > 0.0) {
                    return bad("calibration board needs at least 3x3 squares of positive size".into());
                }
            }
            CalibrationSource::Files { ppi_x, ppi_y, .. } => {
                if !(*ppi_x > 0.0 && *ppi_y > 0.0) {
                    return bad("calibration ppi must be positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

/// Per-sample wall-clock statistics of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub stage: String,
    pub samples: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
}

impl TimingStats {
    /// Mean and nearest-rank 95th percentile of `ms`.
    pub fn from_samples(stage: &str, ms: &[f64]) -> Self {
        let mut sorted = ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        Self {
            stage: stage.into(),
            samples: n,
            mean_ms: if n == 0 { 0.0 } else { sorted.iter().sum::<f64>() / n as f64 },
            p95_ms: if n == 0 {
                0.0
            } else {
                sorted[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1]
            },
        }
    }
}

/// Runs `work` on each item sequentially on the calling thread, timing each call.
pub fn timing_probe<T, U>(stage: &str, items: &[T], work: impl Fn(&T) -> U) -> (Vec<U>, TimingStats) {
    let mut ms = Vec::with_capacity(items.len());
    let out = items
        .iter()
        .map(|item| {
            let start = Instant::now();
            let u = work(item);
            ms.push(start.elapsed().as_secs_f64() * 1e3);
            u
        })
        .collect();
    (out, TimingStats::from_samples(stage, &ms))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub transform: TransformFile,
    pub native_ppi: NativePpi,
    /// Raw resolution of the board cells before frontalization.
    pub raw_resolution: ResolutionMap,
}

/// Renders a board through `keystone` (frontal to raw), recovers the
/// raw-to-frontal transform from the corners and measures the raw resolution.
pub fn calibrate_synthetic(
    keystone: Option<&PerspectiveTransform>,
    rows: usize,
    cols: usize,
    square_px: usize,
    square_mm: f64,
) -> Result<(CalibrationResult, crate::Image), ExperimentError> {
    let stage = ExperimentError::stage;
    let identity = PerspectiveTransform::translation(0.0, 0.0);
    let board = synth_checkerboard(rows, cols, square_px, keystone.unwrap_or(&identity))
        .map_err(|e| stage("calibrate")(boxed(e)))?;
    let pairs = board.correspondences().map_err(|e| stage("calibrate")(boxed(e)))?;
    let estimate = estimate_perspective(&pairs).map_err(|e| stage("calibrate")(boxed(e)))?;
    let raw_resolution = estimate_resolution(&pairs, square_mm).map_err(|e| stage("calibrate")(boxed(e)))?;
    let ppi = 25.4 * square_px as f64 / square_mm;
    Ok((
        CalibrationResult {
            transform: TransformFile::new(&estimate),
            native_ppi: NativePpi { x: ppi, y: ppi },
            raw_resolution,
        },
        board.image,
    ))
}

/// Writes a 500 ppi match-ready image for every FTIR entry under `dir`.
pub fn process_dataset(
    manifest: &DatasetManifest,
    transform: &PerspectiveTransform,
    native_ppi: NativePpi,
    dir: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    let entries: Vec<_> = manifest.view_entries(View::Ftir).collect();
    let results = crate::par_map(&entries, |e| -> Result<PathBuf, BoxError> {
        let raw = read_png(&manifest.resolve(e)).map_err(boxed)?;
        let ready = process_ftir(&raw, transform, native_ppi).map_err(boxed)?;
        let path = dir.join(format!("{}_ftir.png", e.sample));
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|err| io_error(parent, err))?;
        }
        write_png(&path, &ready.image, Some(ready.ppi)).map_err(boxed)?;
        Ok(path)
    });
    results
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(ExperimentError::stage("process"))
}

fn view_dims(view: View) -> (usize, usize) {
    match view {
        View::Ftir => FTIR_CLBP_DIMS,
        View::Direct => DIRECT_CLBP_DIMS,
    }
}

/// Descriptor of one view image, at that view's downsampled size.
pub fn view_descriptor(
    img: &crate::Image,
    view: View,
    kind: DescriptorKind,
    cfg: &LbpConfig,
) -> Result<FeatureVector, crate::features::FeatureError> {
    match kind {
        DescriptorKind::Lbp => lbp_from_view(img, view_dims(view), cfg),
        _ => clbp_from_view(img, view_dims(view), cfg),
    }
}

/// Gates every presentation on its FTIR view and extracts `kind` descriptors
/// from both views of the accepted ones. With `timing`, samples run one at a
/// time and per-view extraction times are kept.
pub fn extract_store(
    manifest: &DatasetManifest,
    kind: DescriptorKind,
    lbp: &LbpConfig,
    gate: &GateConfig,
    timing: bool,
) -> Result<(FeatureStore, Vec<TimingStats>), ExperimentError> {
    let samples = crate::evaluation::samples_of(manifest);
    let work = |info: &crate::evaluation::SampleInfo| -> Result<SampleRecord, BoxError> {
        let mut images = BTreeMap::new();
        for view in [View::Ftir, View::Direct] {
            let entry = manifest
                .entry(&info.id, view)
                .ok_or_else(|| format!("sample {} has no {} view", info.id, view.as_str()))?;
            images.insert(view, read_png(&manifest.resolve(entry)).map_err(boxed)?);
        }
        let accepted = capture_gate(&images[&View::Ftir], gate).accepted();
        let mut features = BTreeMap::new();
        let mut extract_ms = BTreeMap::new();
        if accepted {
            for (view, img) in &images {
                let start = Instant::now();
                let f = view_descriptor(img, *view, kind, lbp).map_err(boxed)?;
                if timing {
                    extract_ms.insert(*view, start.elapsed().as_secs_f64() * 1e3);
                }
                features.insert(*view, f.values);
            }
        }
        Ok(SampleRecord {
            info: info.clone(),
            accepted,
            features,
            extract_ms,
        })
    };
    let records = if timing {
        samples.iter().map(work).collect::<Vec<_>>()
    } else {
        crate::par_map(&samples, work)
    };
    let records = records
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(ExperimentError::stage("extract"))?;
    let mut stats = Vec::new();
    if timing {
        let name = format!("{kind:?}").to_lowercase();
        let per_view = |v: View| -> Vec<f64> { records.iter().filter_map(|r| r.extract_ms.get(&v).copied()).collect() };
        let both: Vec<f64> = records
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.extract_ms.values().sum())
            .collect();
        stats.push(TimingStats::from_samples(&format!("extract_{name}_ftir"), &per_view(View::Ftir)));
        stats.push(TimingStats::from_samples(&format!("extract_{name}_direct"), &per_view(View::Direct)));
        stats.push(TimingStats::from_samples(&format!("extract_{name}_dual_view"), &both));
    }
    let store = FeatureStore {
        descriptor: kind,
        samples: records.into_iter().map(|r| (r.info.id.clone(), r)).collect(),
    };
    Ok((store, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoreIndex {
    format_version: u32,
    seed: u64,
    descriptor: DescriptorKind,
    /// Samples in row order; rejected ones carry no rows.
    samples: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexEntry {
    info: crate::evaluation::SampleInfo,
    accepted: bool,
}

fn kind_name(kind: DescriptorKind) -> String {
    format!("{kind:?}").to_lowercase()
}

/// Writes `<kind>_index.json` plus one binary feature file per view.
pub fn save_store(store: &FeatureStore, dir: &Path, seed: u64) -> Result<Vec<PathBuf>, ExperimentError> {
    let err = ExperimentError::stage("extract");
    fs::create_dir_all(dir).map_err(|e| ExperimentError::stage("extract")(io_error(dir, e)))?;
    let name = kind_name(store.descriptor);
    let index = StoreIndex {
        format_version: crate::features::FEATURE_FORMAT_VERSION,
        seed,
        descriptor: store.descriptor,
        samples: store
            .samples
            .values()
            .map(|r| IndexEntry {
                info: r.info.clone(),
                accepted: r.accepted,
            })
            .collect(),
    };
    let mut written = Vec::new();
    for view in [View::Ftir, View::Direct] {
        let rows: Vec<FeatureVector> = store
            .samples
            .values()
            .filter_map(|r| r.features.get(&view))
            .map(|v| FeatureVector::new(v.clone(), store.descriptor))
            .collect();
        let path = dir.join(format!("{name}_{}.bin", view.as_str()));
        write_features(&path, store.descriptor, &rows).map_err(|e| ExperimentError::stage("extract")(boxed(e)))?;
        written.push(path);
    }
    let path = dir.join(format!("{name}_index.json"));
    let text = serde_json::to_string_pretty(&index).expect("index serializes") + "\n";
    fs::write(&path, text).map_err(|e| err(io_error(&path, e)))?;
    written.push(path);
    Ok(written)
}

/// Reads a store written by [`save_store`].
pub fn load_store(dir: &Path, kind: DescriptorKind) -> Result<FeatureStore, ExperimentError> {
    let name = kind_name(kind);
    let path = dir.join(format!("{name}_index.json"));
    let text = fs::read_to_string(&path).map_err(|_| ExperimentError::MissingInput {
        path: path.display().to_string(),
    })?;
    let index: StoreIndex =
        serde_json::from_str(&text).map_err(|e| ExperimentError::stage("load features")(boxed(e)))?;
    let mut rows = BTreeMap::new();
    for view in [View::Ftir, View::Direct] {
        let p = dir.join(format!("{name}_{}.bin", view.as_str()));
        let (_, vectors) = read_features(&p).map_err(|e| ExperimentError::stage("load features")(boxed(e)))?;
        rows.insert(view, vectors.into_iter());
    }
    let mut samples = BTreeMap::new();
    for e in index.samples {
        let mut features = BTreeMap::new();
        if e.accepted {
            for (view, it) in rows.iter_mut() {
                let v = it.next().ok_or_else(|| {
                    ExperimentError::stage("load features")(format!("{} has fewer rows than the index", view.as_str()).into())
                })?;
                features.insert(*view, v.values);
            }
        }
        samples.insert(
            e.info.id.clone(),
            SampleRecord {
                info: e.info,
                accepted: e.accepted,
                features,
                extract_ms: BTreeMap::new(),
            },
        );
    }
    Ok(FeatureStore { descriptor: kind, samples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub method: String,
    pub protocol: Protocol,
    pub dir: String,
    /// `(split, TDR %)`; `None` marks a split without test spoofs.
    pub tdr_pct: Vec<(String, Option<f64>)>,
    pub mean_std_pct: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    /// Wall time, recorded only with the performance log on.
    pub ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Stale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub format_version: u32,
    pub status: RunStatus,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub seed: u64,
    pub prng_name: String,
    pub crate_version: String,
    pub config: ExperimentConfig,
    /// Hashes of files read from outside the output directory.
    pub inputs: Vec<Artifact>,
    pub stages: Vec<StageRecord>,
    pub artifacts: Vec<Artifact>,
    pub reports: Vec<ReportSummary>,
    pub timings: Vec<TimingStats>,
    pub all_converged: bool,
}

pub fn sha256_file(path: &Path) -> Result<String, std::io::Error> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn slug(s: &str) -> String {
    s.to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    written: Vec<PathBuf>,
    inputs: Vec<PathBuf>,
    stages: Vec<StageRecord>,
    timings: Vec<TimingStats>,
    reports: Vec<ReportSummary>,
    all_converged: bool,
}

impl Run<'_> {
    fn timed<T>(
        &mut self,
        name: &'static str,
        f: impl FnOnce(&mut Self) -> Result<T, ExperimentError>,
    ) -> Result<T, ExperimentError> {
        let start = Instant::now();
        let out = f(self)?;
        let ms = self.cfg.performance_log.then(|| start.elapsed().as_secs_f64() * 1e3);
        self.stages.push(StageRecord { name: name.into(), ms });
        Ok(out)
    }

    fn summary(&self, status: RunStatus, failure: Option<&ExperimentError>) -> RunSummary {
        let out = &self.cfg.out;
        let hash = |p: &PathBuf, rel: bool| Artifact {
            path: if rel {
                p.strip_prefix(out).unwrap_or(p).display().to_string()
            } else {
                p.display().to_string()
            },
            sha256: sha256_file(p).unwrap_or_else(|_| "unreadable".into()),
        };
        let mut artifacts: Vec<Artifact> = self.written.iter().map(|p| hash(p, true)).collect();
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        artifacts.dedup_by(|a, b| a.path == b.path);
        RunSummary {
            format_version: SUMMARY_FORMAT_VERSION,
            status,
            failed_stage: failure.and_then(|e| match e {
                ExperimentError::Stage { stage, .. } => Some(stage.to_string()),
                _ => None,
            }),
            error: failure.map(|e| {
                let mut msg = e.to_string();
                let mut src = e.source();
                while let Some(s) = src {
                    msg.push_str(&format!(": {s}"));
                    src = s.source();
                }
                msg
            }),
            seed: self.cfg.seed,
            prng_name: rng::PRNG_NAME.into(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            config: self.cfg.clone(),
            inputs: self.inputs.iter().map(|p| hash(p, false)).collect(),
            stages: self.stages.clone(),
            artifacts,
            reports: self.reports.clone(),
            timings: self.timings.clone(),
            all_converged: self.all_converged,
        }
    }
}

fn write_summary(out: &Path, summary: &RunSummary) -> Result<PathBuf, ExperimentError> {
    let path = out.join(RUN_SUMMARY_FILE);
    let text = serde_json::to_string_pretty(summary).expect("summary serializes") + "\n";
    fs::write(&path, text).map_err(|e| ExperimentError::stage("summary")(io_error(&path, e)))?;
    Ok(path)
}

/// Runs every stage in order. On failure the run summary is still written,
/// marked stale, naming the failed stage.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, ExperimentError> {
    cfg.validate()?;
    let out = &cfg.out;
    fs::create_dir_all(out).map_err(|e| ExperimentError::stage("setup")(io_error(out, e)))?;
    let mut run = Run {
        cfg,
        written: Vec::new(),
        inputs: Vec::new(),
        stages: Vec::new(),
        timings: Vec::new(),
        reports: Vec::new(),
        all_converged: true,
    };
    write_summary(out, &run.summary(RunStatus::Stale, None))?;
    match run_stages(&mut run) {
        Ok(()) => {
            let summary = run.summary(RunStatus::Complete, None);
            write_summary(out, &summary)?;
            Ok(summary)
        }
        Err(e) => {
            write_summary(out, &run.summary(RunStatus::Stale, Some(&e)))?;
            Err(e)
        }
    }
}

fn run_stages(run: &mut Run) -> Result<(), ExperimentError> {
    let cfg = run.cfg;
    let out = cfg.out.clone();
    let config_path = out.join("config.json");
    fs::write(&config_path, cfg.to_json()).map_err(|e| ExperimentError::stage("setup")(io_error(&config_path, e)))?;
    run.written.push(config_path);

    let manifest = run.timed("simulate", |run| match &cfg.dataset {
        DatasetSource::Simulate { config } => {
            let dir = out.join("dataset");
            let m = generate_dataset(config, cfg.seed, &dir, true).map_err(|e| ExperimentError::stage("simulate")(boxed(e)))?;
            run.written.push(dir.join(crate::sim::MANIFEST_FILE));
            run.written.extend(m.entries.iter().map(|e| m.resolve(e)));
            Ok(m)
        }
        DatasetSource::Manifest { path } => {
            if !path.is_file() {
                return Err(ExperimentError::MissingInput {
                    path: path.display().to_string(),
                });
            }
            run.inputs.push(path.clone());
            read_manifest(path).map_err(|e| ExperimentError::stage("simulate")(boxed(e)))
        }
    })?;

    let (transform, native_ppi) = run.timed("calibrate", |run| match &cfg.calibration {
        CalibrationSource::Synthetic {
            rows,
            cols,
            square_px,
            square_mm,
        } => {
            let dir = out.join("calibration");
            fs::create_dir_all(&dir).map_err(|e| ExperimentError::stage("calibrate")(io_error(&dir, e)))?;
            let keystone = manifest.header.config.render.keystone;
            let (cal, board) = calibrate_synthetic(keystone.as_ref(), *rows, *cols, *square_px, *square_mm)?;
            let board_path = dir.join("board.png");
            write_png(&board_path, &board, None).map_err(|e| ExperimentError::stage("calibrate")(boxed(e)))?;
            let cal_path = dir.join("calibration.json");
            let text = serde_json::to_string_pretty(&cal).expect("calibration serializes") + "\n";
            fs::write(&cal_path, text).map_err(|e| ExperimentError::stage("calibrate")(io_error(&cal_path, e)))?;
            run.written.extend([board_path, cal_path]);
            let t = cal.transform.transform().map_err(|e| ExperimentError::stage("calibrate")(boxed(e)))?;
            Ok((t, cal.native_ppi))
        }
        CalibrationSource::Files { transform, ppi_x, ppi_y } => {
            let text = fs::read_to_string(transform).map_err(|_| ExperimentError::MissingInput {
                path: transform.display().to_string(),
            })?;
            run.inputs.push(transform.clone());
            let file: TransformFile =
                serde_json::from_str(&text).map_err(|e| ExperimentError::stage("calibrate")(boxed(e)))?;
            let t = file.transform().map_err(|e| ExperimentError::stage("calibrate")(boxed(e)))?;
            Ok((t, NativePpi { x: *ppi_x, y: *ppi_y }))
        }
    })?;

    if cfg.process_images {
        run.timed("process", |run| {
            let written = process_dataset(&manifest, &transform, native_ppi, &out.join("processed"))?;
            run.written.extend(written);
            Ok(())
        })?;
    }

    let kinds: Vec<DescriptorKind> = {
        let mut k: Vec<DescriptorKind> = cfg.methods.iter().map(|m| m.descriptor).collect();
        k.sort_by_key(|d| kind_name(*d));
        k.dedup();
        k
    };
    let stores = run.timed("extract", |run| {
        let mut stores = BTreeMap::new();
        for kind in kinds {
            let (store, stats) = extract_store(&manifest, kind, &cfg.lbp, &cfg.gate, cfg.performance_log)?;
            run.written.extend(save_store(&store, &out.join("features"), cfg.seed)?);
            run.timings.extend(stats);
            stores.insert(kind_name(kind), store);
        }
        Ok(stores)
    })?;

    run.timed("train_eval", |run| {
        let opts = EvalOptions {
            fdr_target: cfg.fdr_target,
            threshold_mode: cfg.threshold_mode,
            timing: cfg.performance_log,
            solver: cfg.solver.clone(),
        };
        for method in &cfg.methods {
            let store = &stores[&kind_name(method.descriptor)];
            for &protocol in &cfg.protocols {
                let report: EvalReport = run_protocol(&manifest, store, method, protocol, cfg.seed, &opts)
                    .map_err(|e| ExperimentError::stage("train_eval")(boxed(e)))?;
                let rel = format!("reports/{}/{}", slug(&method.label), protocol.as_str());
                let written = report
                    .write(&out.join(&rel))
                    .map_err(|e| ExperimentError::stage("train_eval")(boxed(e)))?;
                run.written.extend(written);
                run.all_converged &= report.rows.iter().all(|r| r.converged);
                run.reports.push(ReportSummary {
                    method: method.label.clone(),
                    protocol,
                    dir: rel,
                    tdr_pct: report.rows.iter().map(|r| (r.split.clone(), r.tdr_pct)).collect(),
                    mean_std_pct: report.summary,
                });
            }
        }
        Ok(())
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timing_stats_nearest_rank() {
        let ms: Vec<f64> = (1..=20).map(f64::from).collect();
        let s = TimingStats::from_samples("x", &ms);
        assert_eq!(s.mean_ms, 10.5);
        assert_eq!(s.p95_ms, 19.0);
        let empty = TimingStats::from_samples("none", &[]);
        assert_eq!((empty.mean_ms, empty.p95_ms), (0.0, 0.0));
    }

    #[test]
    fn noop_probe_is_near_zero() {
        let items = vec![(); 200];
        let (_, s) = timing_probe("noop", &items, |_| ());
        assert_eq!(s.samples, 200);
        assert!(s.mean_ms >= 0.0 && s.mean_ms < 1.0 && s.p95_ms >= 0.0);
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = ExperimentConfig::desk("/tmp/x", 5);
        let back: ExperimentConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        let mut bad = cfg.clone();
        bad.methods.clear();
        assert!(matches!(bad.validate(), Err(ExperimentError::Config(_))));
        let mut bad = cfg;
        bad.fdr_target = 0.0;
        assert_eq!(bad.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn synthetic_calibration_identity_board() {
        let (cal, board) = calibrate_synthetic(None, 4, 5, 20, 0.5).unwrap();
        assert_eq!(board.dims(), (140, 120));
        assert!(cal.transform.residual_rms_px < 1e-9);
        let ppi = 25.4 * 20.0 / 0.5;
        assert!((cal.raw_resolution.min_ppi_x - ppi).abs() < 1e-9);
        assert_eq!(cal.native_ppi, NativePpi { x: ppi, y: ppi });
    }

    #[test]
    fn missing_manifest_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::desk(dir.path(), 1);
        cfg.dataset = DatasetSource::Manifest {
            path: dir.path().join("nope/manifest.json"),
        };
        let err = run_experiment(&cfg).unwrap_err();
        assert!(err.to_string().contains("nope/manifest.json"), "{err}");
        assert_eq!(err.exit_code(), 3);
        let summary: RunSummary =
            serde_json::from_str(&fs::read_to_string(dir.path().join(RUN_SUMMARY_FILE)).unwrap()).unwrap();
        assert_eq!(summary.status, RunStatus::Stale);
    }
}
