use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ftirpad::calibration::{estimate_perspective, estimate_resolution, Correspondences, KeystoneSpec, TransformFile};
use ftirpad::evaluation::{
    run_protocol, train_on_samples, EvalOptions, EvalReport, MethodSpec, Protocol, ThresholdMode,
};
use ftirpad::experiment::{
    calibrate_synthetic, extract_store, load_store, process_dataset, run_experiment, save_store, CalibrationSource,
    ExperimentConfig, ExperimentError,
};
use ftirpad::features::{DescriptorKind, LbpConfig};
use ftirpad::optics::{validate_geometry, GeometrySpec};
use ftirpad::pipeline::NativePpi;
use ftirpad::sim::{generate_dataset, read_manifest, DatasetConfig, GateConfig};

#[derive(Parser)]
#[command(name = "ftirpad", version, about = "Dual-view FTIR fingerprint reader tools")]
struct Cli {
    /// Top-level seed; every stage derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-sample work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Treat SVM non-convergence as failure (exit 4).
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Desk,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Known,
    Cross,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Known => Protocol::Known,
            ProtocolArg::Cross => Protocol::Cross,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DescriptorArg {
    Lbp,
    Clbp,
}

impl From<DescriptorArg> for DescriptorKind {
    fn from(d: DescriptorArg) -> Self {
        match d {
            DescriptorArg::Lbp => DescriptorKind::Lbp,
            DescriptorArg::Clbp => DescriptorKind::Clbp,
        }
    }
}

#[derive(Args)]
struct BoardArgs {
    #[arg(long, default_value_t = 7)]
    rows: usize,
    #[arg(long, default_value_t = 10)]
    cols: usize,
    #[arg(long, default_value_t = 24)]
    square_px: usize,
    #[arg(long, default_value_t = 0.6)]
    square_mm: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Critical angle and camera placement check.
    Geometry {
        #[arg(long, default_value_t = 1.5)]
        n_glass: f64,
        #[arg(long, default_value_t = 1.0)]
        n_air: f64,
        #[arg(long, default_value_t = 10.0)]
        theta_direct: f64,
        #[arg(long, default_value_t = 45.0)]
        theta_ftir: f64,
        #[arg(long, default_value_t = 23.0)]
        distance_mm: f64,
    },
    /// Render a synthetic dual-view dataset and its manifest.
    Simulate {
        /// Dataset config JSON; overrides --scale.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Scale::Desk)]
        scale: Scale,
        /// Replace an existing dataset in the output directory.
        #[arg(long)]
        force: bool,
    },
    /// Estimate the frontalizing transform, from correspondences or a synthetic board.
    Calibrate {
        /// JSON list of {"src": [x, y], "dst": [u, v]} pairs, raw to frontal.
        #[arg(long, conflicts_with = "keystone")]
        pairs: Option<PathBuf>,
        /// Keystone spec JSON for a synthetic board.
        #[arg(long)]
        keystone: Option<PathBuf>,
        #[command(flatten)]
        board: BoardArgs,
    },
    /// Native resolution map from correspondences or a keystone spec.
    Resolution {
        #[arg(long, conflicts_with = "keystone")]
        pairs: Option<PathBuf>,
        #[arg(long)]
        keystone: Option<PathBuf>,
        #[command(flatten)]
        board: BoardArgs,
    },
    /// Raw FTIR frames to 500 ppi match-ready images.
    Process {
        #[arg(long)]
        manifest: PathBuf,
        /// Transform JSON written by `calibrate`.
        #[arg(long)]
        transform: PathBuf,
        #[arg(long)]
        ppi_x: f64,
        #[arg(long)]
        ppi_y: f64,
    },
    /// Gate every presentation and extract descriptors from both views.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = DescriptorArg::Clbp)]
        descriptor: DescriptorArg,
        /// Time extraction single-threaded.
        #[arg(long)]
        timing: bool,
    },
    /// Train a method on every accepted sample of a feature store.
    Train {
        /// Directory written by `extract`.
        #[arg(long)]
        features: PathBuf,
        /// Method spec JSON.
        #[arg(long)]
        method: PathBuf,
    },
    /// Run one protocol for one method.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        method: PathBuf,
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        /// Directory written by `extract`; features are extracted on the fly otherwise.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, default_value_t = 0.01)]
        fdr: f64,
        /// Choose the threshold on training scores instead of test scores.
        #[arg(long)]
        validation_threshold: bool,
        /// Fill the per-sample time column.
        #[arg(long)]
        timing: bool,
    },
    /// Full pipeline from an experiment config.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Scale::Desk)]
        scale: Scale,
        #[arg(long)]
        performance_log: bool,
    },
}

/// Error with the process exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: e.into() }
}

fn data_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 3, error: e.into() }
}

fn experiment_err(e: ExperimentError) -> Failure {
    Failure {
        code: e.exit_code() as u8,
        error: e.into(),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(data_err)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(config_err)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(data_err)?;
    }
    let text = serde_json::to_string_pretty(value).expect("serializes") + "\n";
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(data_err)
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializes"));
}

fn correspondences(pairs: Option<&Path>, keystone: Option<&Path>, board: &BoardArgs) -> Result<Correspondences, Failure> {
    match (pairs, keystone) {
        (Some(p), _) => read_json(p),
        (None, k) => {
            let spec: Option<KeystoneSpec> = k.map(read_json).transpose()?;
            let t = spec.map(|s| s.transform()).transpose().map_err(config_err)?;
            let b = ftirpad::calibration::synth_checkerboard(
                board.rows,
                board.cols,
                board.square_px,
                &t.unwrap_or(ftirpad::calibration::PerspectiveTransform::translation(0.0, 0.0)),
            )
            .map_err(config_err)?;
            b.correspondences().map_err(data_err)
        }
    }
}

fn check_converged(strict: bool, converged: bool) -> Result<(), Failure> {
    if converged {
        return Ok(());
    }
    if strict {
        return Err(Failure {
            code: 4,
            error: anyhow!("SVM training hit its iteration budget before converging"),
        });
    }
    eprintln!("warning: SVM training hit its iteration budget before converging");
    Ok(())
}

fn write_report(report: &EvalReport, out: &Path, strict: bool) -> Result<(), Failure> {
    report.write(out).map_err(data_err)?;
    print!("{}", report.to_text());
    check_converged(strict, report.rows.iter().all(|r| r.converged))
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(j) = cli.jobs {
        ftirpad::set_jobs(j);
    }
    let seed = cli.seed.unwrap_or(1);
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    match cli.command {
        Command::Geometry {
            n_glass,
            n_air,
            theta_direct,
            theta_ftir,
            distance_mm,
        } => {
            let spec = GeometrySpec {
                n_glass,
                n_air,
                theta_direct_deg: theta_direct,
                theta_ftir_deg: theta_ftir,
                camera_distance_mm: distance_mm,
            };
            let report = validate_geometry(&spec).map_err(config_err)?;
            print_json(&report);
            if !report.all_ok() {
                return Err(config_err(anyhow!(
                    "cameras must sit on either side of the {:.2} deg critical angle (direct below, FTIR above)",
                    report.critical_angle_deg
                )));
            }
        }
        Command::Simulate { config, scale, force } => {
            let cfg = match config {
                Some(p) => read_json(&p)?,
                None => match scale {
                    Scale::Desk => DatasetConfig::desk(),
                    Scale::Full => DatasetConfig::full(),
                },
            };
            cfg.validate().map_err(config_err)?;
            let m = generate_dataset(&cfg, seed, &out, force).map_err(data_err)?;
            println!("wrote {} images to {}", m.entries.len(), out.display());
        }
        Command::Calibrate { pairs, keystone, board } => {
            let transform_path = out.join("transform.json");
            if pairs.is_none() {
                let spec: Option<KeystoneSpec> = keystone.as_deref().map(read_json).transpose()?;
                let t = spec.map(|s| s.transform()).transpose().map_err(config_err)?;
                let (cal, image) =
                    calibrate_synthetic(t.as_ref(), board.rows, board.cols, board.square_px, board.square_mm)
                        .map_err(experiment_err)?;
                fs::create_dir_all(&out).map_err(data_err)?;
                ftirpad::image::write_png(&out.join("board.png"), &image, None).map_err(data_err)?;
                write_json(&out.join("calibration.json"), &cal)?;
                write_json(&transform_path, &cal.transform)?;
                print_json(&cal.transform);
            } else {
                let c = correspondences(pairs.as_deref(), None, &board)?;
                let est = estimate_perspective(&c).map_err(data_err)?;
                let file = TransformFile::new(&est);
                write_json(&transform_path, &file)?;
                print_json(&file);
            }
        }
        Command::Resolution { pairs, keystone, board } => {
            let c = correspondences(pairs.as_deref(), keystone.as_deref(), &board)?;
            let map = estimate_resolution(&c, board.square_mm).map_err(data_err)?;
            print_json(&map);
            if cli.out.is_some() {
                write_json(&out.join("resolution.json"), &map)?;
            }
        }
        Command::Process {
            manifest,
            transform,
            ppi_x,
            ppi_y,
        } => {
            let m = read_manifest(&manifest).map_err(data_err)?;
            let file: TransformFile = read_json(&transform)?;
            let t = file.transform().map_err(config_err)?;
            let written = process_dataset(&m, &t, NativePpi { x: ppi_x, y: ppi_y }, &out).map_err(experiment_err)?;
            println!("wrote {} match-ready images to {}", written.len(), out.display());
        }
        Command::Extract {
            manifest,
            descriptor,
            timing,
        } => {
            let m = read_manifest(&manifest).map_err(data_err)?;
            let (store, stats) =
                extract_store(&m, descriptor.into(), &LbpConfig::default(), &GateConfig::default(), timing)
                    .map_err(experiment_err)?;
            let written = save_store(&store, &out, seed).map_err(experiment_err)?;
            let rejected = store.samples.values().filter(|r| !r.accepted).count();
            println!(
                "{} samples ({rejected} rejected by the capture gate); wrote {} files",
                store.samples.len(),
                written.len()
            );
            for s in &stats {
                println!("{}: mean {:.1} ms, p95 {:.1} ms over {}", s.stage, s.mean_ms, s.p95_ms, s.samples);
            }
        }
        Command::Train { features, method } => {
            let method: MethodSpec = read_json(&method)?;
            method.validate().map_err(config_err)?;
            let store = load_store(&features, method.descriptor).map_err(experiment_err)?;
            let ids: Vec<String> = store.samples.keys().cloned().collect();
            let models = train_on_samples(&method, &store, &ids, seed, &EvalOptions::new()).map_err(data_err)?;
            for (k, m) in models.iter().enumerate() {
                let p = out.join(format!("model_{k}.json"));
                fs::create_dir_all(&out).map_err(data_err)?;
                m.save(&p).map_err(data_err)?;
                println!("{}: C = {}, converged = {}", p.display(), m.c, m.converged);
            }
            check_converged(cli.strict, models.iter().all(|m| m.converged))?;
        }
        Command::Eval {
            manifest,
            method,
            protocol,
            features,
            fdr,
            validation_threshold,
            timing,
        } => {
            let m = read_manifest(&manifest).map_err(data_err)?;
            let method: MethodSpec = read_json(&method)?;
            method.validate().map_err(config_err)?;
            if !(fdr > 0.0 && fdr < 1.0) {
                return Err(config_err(anyhow!("--fdr must lie in (0, 1)")));
            }
            let store = match features {
                Some(dir) => load_store(&dir, method.descriptor).map_err(experiment_err)?,
                None => {
                    extract_store(&m, method.descriptor, &LbpConfig::default(), &GateConfig::default(), timing)
                        .map_err(experiment_err)?
                        .0
                }
            };
            let opts = EvalOptions {
                fdr_target: fdr,
                threshold_mode: if validation_threshold {
                    ThresholdMode::Validation
                } else {
                    ThresholdMode::Test
                },
                timing,
                ..EvalOptions::new()
            };
            let report = run_protocol(&m, &store, &method, protocol.into(), seed, &opts).map_err(data_err)?;
            write_report(&report, &out, cli.strict)?;
        }
        Command::Run {
            config,
            scale,
            performance_log,
        } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::load(&p).map_err(experiment_err)?,
                None => match scale {
                    Scale::Desk => ExperimentConfig::desk(&out, seed),
                    Scale::Full => ExperimentConfig::full(&out, seed),
                },
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(o) = cli.out {
                cfg.out = o;
            }
            cfg.performance_log |= performance_log;
            if let CalibrationSource::Files { transform, .. } = &cfg.calibration {
                if !transform.is_file() {
                    return Err(data_err(anyhow!("missing input: {}", transform.display())));
                }
            }
            let summary = run_experiment(&cfg).map_err(experiment_err)?;
            for r in &summary.reports {
                let dir = cfg.out.join(&r.dir);
                print!("{}", fs::read_to_string(dir.join("report.txt")).unwrap_or_default());
            }
            for t in &summary.timings {
                println!("{}: mean {:.1} ms, p95 {:.1} ms over {}", t.stage, t.mean_ms, t.p95_ms, t.samples);
            }
            println!("run summary: {}", cfg.out.join(ftirpad::experiment::RUN_SUMMARY_FILE).display());
            check_converged(cli.strict, summary.all_converged)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
