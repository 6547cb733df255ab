//! `pat` — dataset generation, training, reconstruction, and evaluation for
//! the sparse-data photoacoustic pipeline.

use pat_cli::{config, dataset, io};

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use pat_core::fbp::fbp_reconstruct;
use pat_core::forward::{ForwardConfig, ForwardOperator};
use pat_core::geometry::Geometry;
use pat_core::grid::Grid;
use pat_core::metrics::rel_l2_error;
use pat_core::pgm::export_pgm;
use pat_core::rng;
use pat_core::tv::tv_reconstruct;
use pat_core::CoreError;
use pat_nn::NnError;
use rand::Rng as _;
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::ExperimentConfig;
use dataset::{gen_dataset, load_pairs, DatasetManifest, PhantomClass};

#[derive(Parser)]
#[command(name = "pat", about = "Sparse-data photoacoustic reconstruction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config JSON; defaults to the full-scale setup.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the reduced desk-scale preset as the base config.
    #[arg(long)]
    desk: bool,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = if self.desk {
            ExperimentConfig::desk()
        } else {
            ExperimentConfig::default()
        };
        if let Some(path) = &self.config {
            let bytes = std::fs::read(path)
                .with_context(|| format!("reading {}", path.display()))?;
            cfg = serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing {}", path.display()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of (FBP input, truth) pairs with simulated data.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum, default_value = "ellipse")]
        class: PhantomClass,
        /// Sample count; defaults to the config's train_samples.
        #[arg(long)]
        n: Option<usize>,
        /// Add measurement noise at the configured level.
        #[arg(long)]
        noisy: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the artifact-removal network on a generated dataset.
    Train {
        /// Manifest of the training dataset.
        #[arg(long)]
        manifest: PathBuf,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
        /// Weight initialization seed.
        #[arg(long, default_value_t = 0)]
        init_seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        momentum: Option<f64>,
        /// Shuffle seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reconstruct one dataset sample with fbp, tv, or cnn.
    Reconstruct {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        method: Method,
        /// Trained model file (cnn only).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output image tensor file.
        #[arg(long)]
        out: PathBuf,
        /// Also export a 16-bit PGM preview.
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Per-sample error table over a test dataset.
    EvalTable {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated subset of fbp,tv,cnn.
        #[arg(long, default_value = "fbp")]
        methods: String,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Evaluate tv on at most this many samples (it is slow).
        #[arg(long)]
        tv_limit: Option<usize>,
        /// Output JSON table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert an image tensor file to 16-bit PGM.
    ExportPgm {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Display window; defaults to the image min/max.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        window: Option<Vec<f64>>,
    },
    /// Finite-difference checks of the layer gradients (64-bit).
    Gradcheck,
    /// Dot-product test of the forward/adjoint operator pair.
    AdjointTest {
        #[arg(long, default_value_t = 64)]
        d: usize,
        #[arg(long, default_value_t = 30)]
        detectors: usize,
        #[arg(long, default_value_t = 150)]
        time_samples: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Method {
    Fbp,
    Tv,
    Cnn,
}

/// Reproducibility record written next to every command's outputs.
#[derive(Serialize)]
struct RunRecord {
    argv: Vec<String>,
    config_hash: Option<String>,
    input_hashes: Vec<(String, String)>,
}

fn file_hash(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_run_record(
    out: &Path,
    config_hash: Option<String>,
    inputs: &[&Path],
) -> anyhow::Result<()> {
    let record = RunRecord {
        argv: std::env::args().collect(),
        config_hash,
        input_hashes: inputs
            .iter()
            .map(|p| Ok((p.display().to_string(), file_hash(p)?)))
            .collect::<anyhow::Result<_>>()?,
    };
    let dir = out.parent().unwrap_or(Path::new("."));
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    std::fs::create_dir_all(dir).ok();
    std::fs::write(
        dir.join(format!("{stem}.run.json")),
        serde_json::to_vec_pretty(&record)?,
    )?;
    Ok(())
}

fn parse_methods(s: &str) -> anyhow::Result<Vec<Method>> {
    s.split(',')
        .map(|m| match m.trim() {
            "fbp" => Ok(Method::Fbp),
            "tv" => Ok(Method::Tv),
            "cnn" => Ok(Method::Cnn),
            other => anyhow::bail!("unknown method {other:?} (expected fbp, tv, cnn)"),
        })
        .collect()
}

#[derive(Serialize)]
struct TableColumn {
    method: String,
    per_sample: Vec<Option<f64>>,
    mean: f64,
    /// Mean wall-clock seconds per reconstructed image.
    seconds_per_image: f64,
}

#[derive(Serialize)]
struct ErrorTable {
    samples: usize,
    columns: Vec<TableColumn>,
}

fn cmd_eval_table(
    manifest_path: &Path,
    methods: &[Method],
    model_path: Option<&Path>,
    tv_limit: Option<usize>,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let cfg = &manifest.config;
    let grid = cfg.grid()?;
    let geometry = cfg.geometry()?;
    let fbp_cfg = cfg.fbp_config()?;
    let truths: Vec<_> = manifest
        .samples
        .iter()
        .map(|s| {
            io::load_image::<f32>(manifest.resolve(manifest_path, &s.truth))
                .map(|img| img.map(|v| v as f64))
        })
        .collect::<anyhow::Result<_>>()?;
    let model = match model_path {
        Some(p) => Some(pat_nn::UNetModel::<f32>::load(p)?),
        None => None,
    };
    if methods.contains(&Method::Cnn) && model.is_none() {
        anyhow::bail!("method cnn requires --model");
    }

    let mut columns = Vec::new();
    for &method in methods {
        let mut per_sample = vec![None; manifest.samples.len()];
        let mut elapsed = 0.0;
        let mut counted = 0usize;
        for (i, sample) in manifest.samples.iter().enumerate() {
            if method == Method::Tv {
                if let Some(limit) = tv_limit {
                    if i >= limit {
                        break;
                    }
                }
            }
            let pressure = io::load_pressure::<f64>(
                manifest.resolve(manifest_path, &sample.pressure),
                geometry,
            )?;
            let start = Instant::now();
            let recon = match method {
                Method::Fbp => fbp_reconstruct::<f64>(&pressure, grid, &fbp_cfg),
                Method::Tv => {
                    let op = ForwardOperator::new(grid, geometry, ForwardConfig::for_geometry(&geometry));
                    tv_reconstruct(&pressure, &op, &cfg.tv_config())?.0
                }
                Method::Cnn => {
                    let x = fbp_reconstruct::<f64>(&pressure, grid, &fbp_cfg).map(|v| v as f32);
                    model.as_ref().unwrap().forward_image(&x)?.map(|v| v as f64)
                }
            };
            elapsed += start.elapsed().as_secs_f64();
            counted += 1;
            per_sample[i] = Some(rel_l2_error(&recon, &truths[i])?);
        }
        let known: Vec<f64> = per_sample.iter().flatten().copied().collect();
        anyhow::ensure!(!known.is_empty(), "no samples evaluated for {method:?}");
        columns.push(TableColumn {
            method: format!("{method:?}").to_lowercase(),
            mean: known.iter().sum::<f64>() / known.len() as f64,
            per_sample,
            seconds_per_image: elapsed / counted as f64,
        });
    }

    let table = ErrorTable {
        samples: manifest.samples.len(),
        columns,
    };
    println!("samples: {}", table.samples);
    println!("{:<8} {:>12} {:>16}", "method", "mean error", "sec/image");
    for col in &table.columns {
        println!(
            "{:<8} {:>12.4} {:>16.3}",
            col.method, col.mean, col.seconds_per_image
        );
    }
    if let Some(out) = out {
        std::fs::write(out, serde_json::to_vec_pretty(&table)?)
            .with_context(|| format!("writing {}", out.display()))?;
        write_run_record(out, Some(manifest.config_hash.clone()), &[manifest_path])?;
    }
    Ok(())
}

fn cmd_gradcheck() -> anyhow::Result<()> {
    use pat_nn::layers::*;
    use pat_nn::loss::l1_loss;
    use pat_nn::tensor::Tensor4;

    let mut rngen = rng::seeded(12345);
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    let mut check = |name: &str, analytic: f64, numeric: f64| {
        let dev = (analytic - numeric).abs() / 1.0f64.max(analytic.abs()).max(numeric.abs());
        worst = worst.max(dev);
        println!("{name:<24} analytic {analytic:>12.6e} numeric {numeric:>12.6e} dev {dev:.2e}");
        dev
    };

    // conv + relu + conv + l1: checks every layer's backward through the stack
    let mut p1 = ConvParams::<f64>::same(1, 2, 3)?;
    let mut p2 = ConvParams::<f64>::same(2, 1, 3)?;
    for w in p1.weight.iter_mut().chain(p2.weight.iter_mut()) {
        *w = rngen.gen_range(-0.5..0.5);
    }
    let mk = |data: Vec<f64>| Tensor4::from_data(1, 1, 6, 6, data).unwrap();
    let x = mk((0..36).map(|_| rngen.gen_range(-1.0..1.0)).collect());
    let target = mk((0..36).map(|_| rngen.gen_range(-1.0..1.0)).collect());
    let run = |x: &Tensor4<f64>, p1: &ConvParams<f64>, p2: &ConvParams<f64>| -> f64 {
        let h = relu_forward(&conv2d_forward(x, p1).unwrap());
        l1_loss(&conv2d_forward(&h, p2).unwrap(), &target).unwrap().0
    };
    let a1 = conv2d_forward(&x, &p1)?;
    let h = relu_forward(&a1);
    let y = conv2d_forward(&h, &p2)?;
    let (_, gl) = l1_loss(&y, &target)?;
    let (gh, gp2) = conv2d_backward(&h, &p2, &gl)?;
    let ga1 = pat_nn::layers::relu_backward(&a1, &gh)?;
    let (gx, gp1) = conv2d_backward(&x, &p1, &ga1)?;
    for (idx, label, analytic) in [
        (7usize, "stack d/dx", gx.data[7]),
        (13, "stack d/dx (2)", gx.data[13]),
    ] {
        let mut xp = x.clone();
        xp.data[idx] += step;
        let hi = run(&xp, &p1, &p2);
        xp.data[idx] -= 2.0 * step;
        let lo = run(&xp, &p1, &p2);
        check(label, analytic, (hi - lo) / (2.0 * step));
    }
    for (idx, label, analytic) in [(3usize, "stack d/dw1", gp1.weight[3]), (10, "stack d/dw2", gp2.weight[10])]
    {
        let (orig1, orig2) = (p1.clone(), p2.clone());
        let f = |delta: f64| {
            let (mut q1, mut q2) = (orig1.clone(), orig2.clone());
            if label.ends_with("w1") {
                q1.weight[idx] += delta;
            } else {
                q2.weight[idx] += delta;
            }
            run(&x, &q1, &q2)
        };
        check(label, analytic, (f(step) - f(-step)) / (2.0 * step));
    }

    // upconv adjoint identity
    let mut up = ConvParams::<f64>::zeros(2, 3, 2, 2, 0)?;
    for w in up.weight.iter_mut() {
        *w = rngen.gen_range(-1.0..1.0);
    }
    let xs = Tensor4::from_data(1, 2, 4, 4, (0..32).map(|_| rngen.gen_range(-1.0..1.0)).collect())?;
    let q = Tensor4::from_data(1, 3, 8, 8, (0..192).map(|_| rngen.gen_range(-1.0..1.0)).collect())?;
    let upx = upconv2_forward(&xs, &up)?;
    let mut conv = ConvParams::<f64>::zeros(3, 2, 2, 2, 0)?;
    for lo in 0..2 {
        for hi in 0..3 {
            for t in 0..4 {
                conv.weight[(lo * 3 + hi) * 4 + t] = up.weight[(hi * 2 + lo) * 4 + t];
            }
        }
    }
    let convq = conv2d_forward(&q, &conv)?;
    let lhs: f64 = upx.data.iter().zip(&q.data).map(|(a, b)| a * b).sum();
    let rhs: f64 = xs.data.iter().zip(&convq.data).map(|(a, b)| a * b).sum();
    let dev = check("upconv adjoint", lhs, rhs);
    if dev > 1e-10 {
        return Err(NnError::Diverged("upconv adjoint identity failed".into()).into());
    }

    println!("max deviation: {worst:.2e}");
    if worst > 1e-4 {
        return Err(NnError::Diverged(format!("gradcheck deviation {worst:.2e} > 1e-4")).into());
    }
    println!("gradcheck passed");
    Ok(())
}

fn cmd_adjoint_test(d: usize, detectors: usize, time_samples: usize, trials: usize) -> anyhow::Result<()> {
    let grid = Grid::new(d)?;
    let geometry = Geometry::new(1.0, detectors, 2.0, time_samples)?;
    let op = ForwardOperator::new(grid, geometry, ForwardConfig::for_geometry(&geometry));
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let mut rngen = rng::substream(99, trial as u64);
        let mut x = pat_core::grid::Image::<f64>::zeros(grid);
        for v in x.values_mut() {
            *v = rngen.gen_range(-1.0..1.0);
        }
        let mut q = pat_core::geometry::PressureData::<f64>::zeros(geometry);
        for v in q.values_mut() {
            *v = rngen.gen_range(-1.0..1.0);
        }
        let px = op.forward(&x)?;
        let pq = op.adjoint(&q)?;
        let lhs: f64 = px.values().iter().zip(q.values()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.values().iter().zip(pq.values()).map(|(a, b)| a * b).sum();
        let pxn = px.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        let qn = q.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        let rel = (lhs - rhs).abs() / (pxn * qn).max(1e-300);
        worst = worst.max(rel);
        println!("trial {trial:>2}: <Px,q> = {lhs:+.9e}  <x,P*q> = {rhs:+.9e}  rel {rel:.2e}");
    }
    println!("max relative mismatch: {worst:.2e}");
    if worst > 1e-10 {
        return Err(CoreError::Numerical(format!("adjoint mismatch {worst:.2e} > 1e-10")).into());
    }
    println!("adjoint test passed");
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData {
            config,
            class,
            n,
            noisy,
            seed,
            out,
        } => {
            let cfg = config.load()?;
            let n = n.unwrap_or(cfg.train_samples);
            let manifest = gen_dataset(&cfg, class, n, noisy, seed, &out)?;
            write_run_record(&out.join("manifest.json"), Some(manifest.config_hash.clone()), &[])?;
            println!(
                "generated {} {:?} samples (noisy: {}) in {}",
                manifest.samples.len(),
                class,
                noisy,
                out.display()
            );
        }
        Command::Train {
            manifest,
            out,
            init_seed,
            epochs,
            learning_rate,
            momentum,
            seed,
        } => {
            let m = DatasetManifest::load(&manifest)?;
            let pairs = load_pairs(&m, &manifest)?;
            let mut tc = m.config.train;
            if let Some(e) = epochs {
                tc.epochs = e;
            }
            if let Some(lr) = learning_rate {
                tc.learning_rate = lr;
            }
            if let Some(b) = momentum {
                tc.momentum = b;
            }
            if let Some(s) = seed {
                tc.seed = s;
            }
            tc.validate()?;
            let mut model = pat_nn::UNetModel::<f32>::build(m.config.unet, init_seed)?;
            println!(
                "training on {} pairs for {} epochs ({} parameters)",
                pairs.len(),
                tc.epochs,
                model.parameter_count()
            );
            let start = Instant::now();
            let history = model.train(&pairs, &tc)?;
            println!(
                "done in {:.1}s; loss {:.5} -> {:.5}",
                start.elapsed().as_secs_f64(),
                history.first().unwrap(),
                history.last().unwrap()
            );
            model.save(&out)?;
            let hist_path = out.with_extension("loss.json");
            std::fs::write(&hist_path, serde_json::to_vec_pretty(&history)?)?;
            write_run_record(&out, Some(m.config_hash.clone()), &[&manifest])?;
        }
        Command::Reconstruct {
            manifest,
            index,
            method,
            model,
            out,
            pgm,
        } => {
            let m = DatasetManifest::load(&manifest)?;
            anyhow::ensure!(
                index < m.samples.len(),
                "index {index} out of range ({} samples)",
                m.samples.len()
            );
            let cfg = &m.config;
            let grid = cfg.grid()?;
            let geometry = cfg.geometry()?;
            let pressure = io::load_pressure::<f64>(
                m.resolve(&manifest, &m.samples[index].pressure),
                geometry,
            )?;
            let recon = match method {
                Method::Fbp => fbp_reconstruct::<f64>(&pressure, grid, &cfg.fbp_config()?),
                Method::Tv => {
                    let op =
                        ForwardOperator::new(grid, geometry, ForwardConfig::for_geometry(&geometry));
                    tv_reconstruct(&pressure, &op, &cfg.tv_config())?.0
                }
                Method::Cnn => {
                    let model_path = model.as_ref().context("method cnn requires --model")?;
                    let net = pat_nn::UNetModel::<f32>::load(model_path)?;
                    let x = fbp_reconstruct::<f64>(&pressure, grid, &cfg.fbp_config()?)
                        .map(|v| v as f32);
                    net.forward_image(&x)?.map(|v| v as f64)
                }
            };
            io::save_image(&out, &recon)?;
            if let Some(pgm_path) = pgm {
                let (lo, hi) = recon
                    .values()
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    });
                export_pgm(&recon, &pgm_path, (lo, hi.max(lo + 1e-12)))?;
            }
            let mut inputs: Vec<&Path> = vec![&manifest];
            if let Some(mp) = model.as_deref() {
                inputs.push(mp);
            }
            write_run_record(&out, Some(m.config_hash.clone()), &inputs)?;
            println!("reconstructed sample {index} with {method:?} -> {}", out.display());
        }
        Command::EvalTable {
            manifest,
            methods,
            model,
            tv_limit,
            out,
        } => {
            let methods = parse_methods(&methods)?;
            cmd_eval_table(&manifest, &methods, model.as_deref(), tv_limit, out.as_deref())?;
        }
        Command::ExportPgm { input, output, window } => {
            let img = io::load_image::<f64>(&input)?;
            let (lo, hi) = match window.as_deref() {
                Some([lo, hi]) => (*lo, *hi),
                _ => img
                    .values()
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    }),
            };
            export_pgm(&img, &output, (lo, hi.max(lo + 1e-12)))?;
            write_run_record(&output, None, &[&input])?;
            println!("wrote {}", output.display());
        }
        Command::Gradcheck => cmd_gradcheck()?,
        Command::AdjointTest {
            d,
            detectors,
            time_samples,
            trials,
        } => cmd_adjoint_test(d, detectors, time_samples, trials)?,
    }
    Ok(())
}

/// Exit codes: 0 success, 2 validation/usage error, 3 numerical failure.
fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<CoreError>() {
            if matches!(core, CoreError::Numerical(_)) {
                return 3;
            }
        }
        if let Some(nn) = cause.downcast_ref::<NnError>() {
            if matches!(nn, NnError::Diverged(_)) {
                return 3;
            }
            if let NnError::Core(CoreError::Numerical(_)) = nn {
                return 3;
            }
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}
