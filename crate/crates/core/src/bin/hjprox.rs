//! Command-line surface: data generation, two-stage training, evaluation,
//! minorant studies, scaling studies, and cross-section export.
//!
//! Exit codes: 0 success, 2 config error, 3 numeric failure, 4 missing
//! dependency.

use clap::{Parser, Subcommand, ValueEnum};
use hjprox::config::{ExperimentConfig, ScalingConfig, TrainMeta};
use hjprox::dataset::Dataset;
use hjprox::hj::JbvsTruth;
use hjprox::icnn::IcnnModel;
use hjprox::minorants::{self, JValueSource, MinorantMode};
use hjprox::recover;
use hjprox::rng::uniform_box_sample;
use hjprox::train::{self, LossHistory};
use hjprox::{maxplus, Error, Result, TimeParam};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "hjprox",
    version,
    about = "Proximal operators through Hamilton-Jacobi PDEs"
)]
struct Cli {
    /// Worker threads (overrides the HJPROX_THREADS environment variable).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stage {
    First,
    Second,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Quantity {
    /// The learned convex potential against its closed form.
    Psi,
    /// Direct prior recovery from a conjugate-network checkpoint.
    Prior,
    /// Invert-method recovery from a potential checkpoint.
    Invert,
}

#[derive(Subcommand)]
enum Command {
    /// Generate sample-triplet datasets, one file per dimension.
    GenData {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the potential network and/or its conjugate network.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        stage: Stage,
        /// Shrink total_steps/decay_every by this factor (CI desk scale).
        #[arg(long)]
        desk_scale: Option<f64>,
    },
    /// Score trained models against ground truth; writes the MSE report.
    Eval {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sample a checkpointed model (and optionally the truth) along a line.
    CrossSection {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated origin coordinates.
        #[arg(long)]
        origin: String,
        /// Comma-separated direction (normalized internally).
        #[arg(long)]
        direction: String,
        #[arg(long, default_value_t = 4.0)]
        halfwidth: f64,
        #[arg(long, default_value_t = 201)]
        samples: usize,
        #[arg(long, value_enum, default_value = "psi")]
        quantity: Quantity,
        /// Include the analytic truth column (requires --config for the prior).
        #[arg(long, default_value_t = false)]
        truth: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a minorant model from a dataset and report its sup error.
    Minorant {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        mode: CliMode,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        /// Output directory for the model file and eps report.
        #[arg(long)]
        out: PathBuf,
    },
    /// Minorant error-decay study across dimensions and anchor counts.
    Scaling {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CliMode {
    Pam,
    Pqm,
}

fn main() {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("HJPROX_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::Io(_)
        | Error::DimensionMismatch { .. } => 2,
        Error::DependencyMissing(_) => 4,
        Error::NumericFailure { .. }
        | Error::TrainingDiverged { .. }
        | Error::UnboundedConjugate { .. }
        | Error::Nondifferentiable(_)
        | Error::OutOfRange(_)
        | Error::Unsupported(_) => 3,
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData { config } => cmd_gen_data(&config),
        Command::Train {
            config,
            stage,
            desk_scale,
        } => cmd_train(&config, stage, desk_scale),
        Command::Eval { config } => cmd_eval(&config),
        Command::CrossSection {
            checkpoint,
            origin,
            direction,
            halfwidth,
            samples,
            quantity,
            truth,
            config,
            out,
        } => cmd_cross_section(
            &checkpoint,
            &origin,
            &direction,
            halfwidth,
            samples,
            quantity,
            truth,
            config.as_deref(),
            &out,
        ),
        Command::Minorant {
            config,
            dataset,
            mode,
            alpha,
            out,
        } => cmd_minorant(&config, &dataset, mode, alpha, &out),
        Command::Scaling { config, out } => cmd_scaling(&config, &out),
    }
}

fn dataset_path(dir: &Path, dim: usize) -> PathBuf {
    dir.join(format!("dataset_dim{dim}.csv"))
}

fn ckpt_path(dir: &Path, role: &str, dim: usize) -> PathBuf {
    dir.join(format!("{role}_dim{dim}.ckpt"))
}

fn cmd_gen_data(config: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let dir = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&dir)?;
    let t = TimeParam::new(cfg.t)?;
    for (i, &dim) in cfg.dims.iter().enumerate() {
        let prior = cfg.prior.build(dim)?;
        let n = cfg.n_for(i);
        let seed = cfg.train.seed.wrapping_add(dim as u64);
        let ds = train::synthesize_dataset(&prior, dim, t, n, cfg.a, seed)?;
        let path = dataset_path(&dir, dim);
        ds.to_file(&path)?;
        println!(
            "wrote {} rows (dim {dim}, seed {seed}) to {}",
            ds.len(),
            path.display()
        );
    }
    Ok(())
}

fn write_history(path: &Path, history: &LossHistory) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "step,lr,loss")?;
    for r in history {
        writeln!(f, "{},{},{}", r.step, r.lr, r.loss)?;
    }
    Ok(())
}

fn write_meta(path: &Path, meta: &TrainMeta) -> Result<()> {
    let text = serde_json::to_string_pretty(meta)
        .map_err(|e| Error::Config(format!("meta serialization: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn cmd_train(config: &Path, stage: Stage, desk_scale: Option<f64>) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let dir = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&dir)?;
    let mut tc = cfg.train.clone();
    if desk_scale.is_some() {
        tc.desk_scale = desk_scale;
    }
    for &dim in &cfg.dims {
        let ds = Dataset::from_file(&dataset_path(&dir, dim))?;
        let net = cfg.network.icnn(dim);
        if stage == Stage::First || stage == Stage::Both {
            let (model, history) = train::train_first_lpn(&ds, &net, &tc)?;
            let final_loss = history.last().map_or(f64::NAN, |r| r.loss);
            model.save_file(&ckpt_path(&dir, "psi", dim))?;
            write_history(&dir.join(format!("psi_dim{dim}_loss.csv")), &history)?;
            write_meta(
                &dir.join(format!("psi_dim{dim}.meta.json")),
                &TrainMeta {
                    role: "psi".into(),
                    prior: cfg.prior.name().into(),
                    dim,
                    t: cfg.t,
                    steps: history.len(),
                    batch_size: tc.batch_size,
                    lr0: tc.lr0,
                    seed: tc.seed,
                    final_loss,
                    provenance: None,
                },
            )?;
            println!("trained psi (dim {dim}): final loss {final_loss:.3e}");
        }
        if stage == Stage::Second || stage == Stage::Both {
            let psi = IcnnModel::load_file(&ckpt_path(&dir, "psi", dim))?;
            let cds = train::build_conjugate_dataset(&psi, &ds)?;
            let (model, history) = train::train_second_lpn(&cds, &net, &tc)?;
            let final_loss = history.last().map_or(f64::NAN, |r| r.loss);
            model.save_file(&ckpt_path(&dir, "phig", dim))?;
            write_history(&dir.join(format!("phig_dim{dim}_loss.csv")), &history)?;
            write_meta(
                &dir.join(format!("phig_dim{dim}.meta.json")),
                &TrainMeta {
                    role: "phig".into(),
                    prior: cfg.prior.name().into(),
                    dim,
                    t: cfg.t,
                    steps: history.len(),
                    batch_size: tc.batch_size,
                    lr0: tc.lr0,
                    seed: tc.seed,
                    final_loss,
                    provenance: Some(cds.provenance.clone()),
                },
            )?;
            println!("trained phi_G (dim {dim}): final loss {final_loss:.3e}");
        }
    }
    Ok(())
}

fn cmd_eval(config: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let dir = PathBuf::from(&cfg.output_dir);
    let t = TimeParam::new(cfg.t)?;
    let report_path = dir.join("mse_report.csv");
    let mut rows: Vec<String> = vec!["example,dim,mse_psi,mse_prior".into()];
    for &dim in &cfg.dims {
        let prior = cfg.prior.build(dim)?;
        let psi = IcnnModel::load_file(&ckpt_path(&dir, "psi", dim))?;
        let phig = IcnnModel::load_file(&ckpt_path(&dir, "phig", dim))?;
        let pts = uniform_box_sample(dim, cfg.a, cfg.eval_points, cfg.eval_seed)?;
        let mse_psi = recover::score_mse(&|x| psi.forward(x), &|x| prior.eval_psi(x, t), &pts)?;
        // Prior scoring happens at in-range points: the conjugate network is
        // trained on the learned proximal range, and J_BVS equals the prior
        // there.
        let prior_pts = recover::in_range_eval_points(&psi, cfg.a, cfg.eval_points, cfg.eval_seed)?;
        let truth = JbvsTruth::for_prior(&prior, t, cfg.a)?;
        let mse_direct = recover::score_mse(
            &|x| recover::eval_direct(&phig, x, t, cfg.general_t),
            &|x| truth.eval(x),
            &prior_pts,
        )?;
        // Invert can legitimately fail out-of-range; score the in-range hits.
        let halfwidth = 4.0 * cfg.a + 4.0;
        let mut acc = 0.0;
        let mut n_ok = 0usize;
        for p in &prior_pts {
            if let Ok(v) = recover::eval_invert(&psi, p, t, halfwidth) {
                let d = v - truth.eval(p)?;
                acc += d * d;
                n_ok += 1;
            }
        }
        let mse_invert = if n_ok == 0 {
            f64::NAN
        } else {
            acc / n_ok as f64
        };
        let name = cfg.prior.name();
        rows.push(format!("{name}:direct,{dim},{mse_psi},{mse_direct}"));
        rows.push(format!("{name}:invert,{dim},{mse_psi},{mse_invert}"));
        println!(
            "dim {dim}: mse_psi {mse_psi:.3e}, prior direct {mse_direct:.3e}, invert {mse_invert:.3e} ({n_ok}/{} in range)",
            pts.len()
        );
    }
    std::fs::write(&report_path, rows.join("\n") + "\n")?;
    println!("wrote {}", report_path.display());
    Ok(())
}

fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad coordinate `{c}`")))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_cross_section(
    checkpoint: &Path,
    origin: &str,
    direction: &str,
    halfwidth: f64,
    samples: usize,
    quantity: Quantity,
    truth: bool,
    config: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let model = IcnnModel::load_file(checkpoint)?;
    let origin = parse_point(origin)?;
    let direction = parse_point(direction)?;
    let cfg = match config {
        Some(p) => Some(ExperimentConfig::load(p)?),
        None => None,
    };
    let t = TimeParam::new(cfg.as_ref().map_or(1.0, |c| c.t))?;
    let model_fn = |x: &[f64]| -> Result<f64> {
        match quantity {
            Quantity::Psi => model.forward(x),
            Quantity::Prior => {
                recover::eval_direct(&model, x, t, cfg.as_ref().is_some_and(|c| c.general_t))
            }
            Quantity::Invert => recover::eval_invert(&model, x, t, 4.0 * halfwidth + 4.0),
        }
    };
    let rows = recover::cross_section(&model_fn, &origin, &direction, halfwidth, samples)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(out)?);
    if truth {
        let cfg = cfg.ok_or_else(|| {
            Error::Config("--truth requires --config for the prior definition".into())
        })?;
        let prior = cfg.prior.build(origin.len())?;
        let truth_fn = |x: &[f64]| -> Result<f64> {
            match quantity {
                Quantity::Psi => prior.eval_psi(x, t),
                Quantity::Prior | Quantity::Invert => {
                    JbvsTruth::for_prior(&prior, t, cfg.a)?.eval(x)
                }
            }
        };
        let truth_rows =
            recover::cross_section(&truth_fn, &origin, &direction, halfwidth, samples)?;
        writeln!(f, "coord,value_true,value_model")?;
        for ((s, v), (_, tv)) in rows.iter().zip(&truth_rows) {
            writeln!(f, "{s},{tv},{v}")?;
        }
    } else {
        writeln!(f, "s,value")?;
        for (s, v) in &rows {
            writeln!(f, "{s},{v}")?;
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_minorant(
    config: &Path,
    dataset: &Path,
    mode: CliMode,
    alpha: f64,
    out: &Path,
) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let ds = Dataset::from_file(dataset)?;
    let t = ds.t;
    let prior = cfg.prior.build(ds.dim)?;
    let mode = match mode {
        CliMode::Pam => MinorantMode::Pam,
        CliMode::Pqm => MinorantMode::Pqm,
    };
    // j_values preference: closed form of J at the derived anchors (exact on
    // the reachable set), else the numeric backward sup.
    let (j_values, source): (Vec<f64>, JValueSource) = {
        let mut vals = Vec::with_capacity(ds.len());
        for s in &ds.samples {
            vals.push(prior.eval_j(&s.y(t))?);
        }
        (vals, JValueSource::ClosedForm)
    };
    let model = minorants::build(&ds, &j_values, mode, alpha, source)?;
    std::fs::create_dir_all(out)?;
    let model_path = out.join("minorant.csv");
    model.to_file(&model_path)?;
    let truth = JbvsTruth::for_prior(&prior, t, cfg.a)?;
    let domain = maxplus::BoxDomain::symmetric(ds.dim, cfg.a)?;
    let eps = maxplus::eps_inf_minorant(&|y| truth.eval(y), &model, &domain, 2048, cfg.eval_seed)?;
    let eps_path = out.join("minorant_eps.csv");
    std::fs::write(&eps_path, format!("K,eps_inf\n{},{}\n", model.k(), eps))?;
    println!(
        "wrote {} (K = {}) and {} (eps = {eps:.6e})",
        model_path.display(),
        model.k(),
        eps_path.display()
    );
    Ok(())
}

fn cmd_scaling(config: &Path, out: &Path) -> Result<()> {
    let cfg = ScalingConfig::load(config)?;
    let t = TimeParam::new(cfg.t)?;
    let dim0 = cfg.dims[0];
    let prior = cfg.prior.build(dim0)?;
    let opts = maxplus::ScalingOptions {
        a: cfg.a,
        eps_samples: cfg.eps_samples,
        alpha: cfg.alpha,
        ..maxplus::ScalingOptions::default()
    };
    let reports = maxplus::scaling_experiment_with(
        &prior,
        t,
        &cfg.dims,
        &cfg.k_list,
        cfg.trials,
        cfg.seed,
        &opts,
    )?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(out)?);
    writeln!(f, "dim,K,eps_inf,slope_running")?;
    let mut per_dim: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
    for r in &reports {
        match per_dim.iter_mut().find(|(d, _)| *d == r.dim) {
            Some((_, v)) => v.push((r.k, r.eps_inf)),
            None => per_dim.push((r.dim, vec![(r.k, r.eps_inf)])),
        }
    }
    for (dim, cells) in &per_dim {
        for i in 0..cells.len() {
            let ks: Vec<usize> = cells[..=i].iter().map(|(k, _)| *k).collect();
            let es: Vec<f64> = cells[..=i].iter().map(|(_, e)| *e).collect();
            let slope = maxplus::loglog_slope(&ks, &es);
            let slope_str = if slope.is_nan() {
                "nan".to_string()
            } else {
                format!("{slope}")
            };
            writeln!(f, "{},{},{},{}", dim, cells[i].0, cells[i].1, slope_str)?;
        }
        let full_slope = reports
            .iter()
            .find(|r| r.dim == *dim)
            .map(|r| r.scaling_exponent);
        if let Some(s) = full_slope {
            println!("dim {dim}: fitted slope {s:.3}");
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}
