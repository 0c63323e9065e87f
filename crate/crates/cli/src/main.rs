use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use cpsense::casimir::{hard_sphere_alpha, matsubara_xi};
use cpsense::config::{Preset, RunConfig};
use cpsense::constants::{PASCAL_PER_BAR, VACUUM_PERMITTIVITY};
use cpsense::dataset::{export_csv, generate_dataset, read_dataset, split_indices, write_dataset};
use cpsense::gas::{mixture_alpha, permittivity_from_alpha, MixtureState};
use cpsense::materials::ResponseModel;
use cpsense::nn::{evaluate, load_model, save_model, train, write_loss_history, write_scatter, TrainStage};
use cpsense::{Error, ErrorKind};

/// Gas-mixture sensing with optically trapped nanospheres in a hollow-core fiber.
#[derive(Parser, Debug)]
#[command(name = "cpsense", version)]
struct Cli {
    /// Run configuration (TOML). Defaults to the shipped configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for data-parallel steps.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Output directory (overrides CPSENSE_OUT_DIR and the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Material and gas response data on the imaginary frequency axis.
    #[command(alias = "inspect")]
    Materials(MaterialsArgs),
    /// Trapping frequencies versus single-species pressure.
    Sweep(SweepArgs),
    /// Random mixtures and their 20 trapping frequencies.
    Generate(GenerateArgs),
    /// Train the CO2 regression network on a dataset.
    Train(TrainArgs),
    /// Evaluate a trained network on a dataset.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct MaterialsArgs {
    /// Lowest frequency of the grid, rad/s.
    #[arg(long, default_value_t = 1e12)]
    xi_min: f64,
    /// Highest frequency of the grid, rad/s.
    #[arg(long, default_value_t = 1e18)]
    xi_max: f64,
    #[arg(long, default_value_t = 301)]
    points: usize,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Comma-separated species (default: all).
    #[arg(long, value_delimiter = ',')]
    species: Vec<String>,
    /// Comma-separated sphere materials (default: all configured spheres).
    #[arg(long, value_delimiter = ',')]
    spheres: Vec<String>,
    /// Largest partial pressure, Pa.
    #[arg(long, default_value_t = 2e4)]
    max_pressure: f64,
    /// Grid points from 0 to the largest pressure.
    #[arg(long, default_value_t = 21)]
    points: usize,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// set1 (target on the full simplex) or set2 (target restricted).
    #[arg(long, default_value = "set1")]
    preset: String,
    #[arg(long, short = 'n', default_value_t = 1000)]
    rows: usize,
    /// Output file name inside the output directory.
    #[arg(long)]
    name: Option<String>,
    /// Also write a CSV export next to the binary file.
    #[arg(long)]
    csv: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Hidden layer count (overrides the configuration).
    #[arg(long)]
    layers: Option<usize>,
    /// Hidden layer width (overrides the configuration).
    #[arg(long)]
    width: Option<usize>,
    /// Schedule as `rate:epochs,...` (overrides the configuration).
    #[arg(long)]
    schedule: Option<String>,
    /// Model file name inside the output directory.
    #[arg(long, default_value = "model.bin")]
    name: String,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Evaluate every row, even when the dataset is the one the model was trained on.
    #[arg(long)]
    all_rows: bool,
}

struct Context_ {
    cfg: RunConfig,
    seed: u64,
    workers: usize,
    out: PathBuf,
}

impl Context_ {
    fn new(cli: &Cli) -> anyhow::Result<Self> {
        let cfg = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::builtin(std::env::current_dir().context("cannot read working directory")?),
        };
        let out = match (&cli.out, std::env::var_os("CPSENSE_OUT_DIR")) {
            (Some(o), _) => o.clone(),
            (None, Some(env)) => PathBuf::from(env),
            (None, None) => cfg.output_dir(),
        };
        if cli.workers == 0 {
            return Err(Error::Config("--workers must be >= 1".into()).into());
        }
        Ok(Self {
            seed: cli.seed.unwrap_or(cfg.seed),
            workers: cli.workers,
            cfg,
            out,
        })
    }

    fn out_file(&self, name: &str) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::Io {
            path: self.out.clone(),
            source: e,
        })?;
        Ok(self.out.join(name))
    }

    fn stamp(&self, command: &str) -> anyhow::Result<String> {
        Ok(format!(
            "# cpsense {command} config_hash={} seed={}\n",
            self.cfg.config_hash()?,
            self.seed
        ))
    }
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

/// Puts the provenance line in front of a file written by the library.
fn prepend_stamp(path: &Path, stamp: &str) -> anyhow::Result<()> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    write_text(path, &format!("{stamp}{body}"))
}

fn log_grid(lo: f64, hi: f64, n: usize) -> anyhow::Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || n < 2 {
        return Err(Error::Config(format!("need 0 < xi_min < xi_max and >= 2 points (got {lo}, {hi}, {n})")).into());
    }
    Ok((0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect())
}

fn cmd_materials(ctx: &Context_, args: &MaterialsArgs) -> anyhow::Result<()> {
    let materials = ctx.cfg.material_db()?;
    let species = ctx.cfg.species_db()?;
    let t = ctx.cfg.sensor.temperature;
    let grid = log_grid(args.xi_min, args.xi_max, args.points)?;
    let xi1 = matsubara_xi(t, 1);

    println!("{:<12} {:<11} {:>10} {:>12} {:>12}", "material", "model", "rho kg/m3", "eps(0)", "eps(i xi_1)");
    for m in materials.iter() {
        let kind = match &m.model {
            ResponseModel::Oscillator(_) => "oscillator",
            ResponseModel::Tabulated(_) => "tabulated",
        };
        println!(
            "{:<12} {:<11} {:>10.1} {:>12.5} {:>12.5}",
            m.name,
            kind,
            m.mass_density,
            m.permittivity(0.0)?,
            m.permittivity(xi1)?
        );
    }

    // sphere polarizability volumes in vacuum
    let radii: Vec<(String, f64)> = ctx.cfg.sensor.spheres.iter().map(|s| (s.material.clone(), s.radius)).collect();
    let mut text = ctx.stamp("materials")?;
    text.push_str("xi_rad_s");
    for (name, _) in &radii {
        let _ = write!(text, ",alpha_{name}_m3");
    }
    text.push('\n');
    for &xi in &grid {
        let _ = write!(text, "{xi}");
        for (name, a) in &radii {
            let eps = materials.get(name)?.permittivity(xi)?;
            let alpha = hard_sphere_alpha(eps, 1.0, *a)? / (4.0 * std::f64::consts::PI * VACUUM_PERMITTIVITY);
            let _ = write!(text, ",{alpha}");
        }
        text.push('\n');
    }
    let path = ctx.out_file("sphere_polarizability.csv")?;
    write_text(&path, &text)?;
    println!("wrote {}", path.display());

    // each species alone at the sampling cap
    let cap = ctx.cfg.sampling.cap_pa;
    let mut text = ctx.stamp("materials")?;
    text.push_str("xi_rad_s");
    for name in species.names() {
        let _ = write!(text, ",chi_{name}");
    }
    text.push('\n');
    for &xi in &grid {
        let _ = write!(text, "{xi}");
        for name in species.names() {
            let mix = MixtureState::new([(name, cap)], t)?;
            let chi = permittivity_from_alpha(mixture_alpha(&mix, &species, xi)?)? - 1.0;
            let _ = write!(text, ",{chi}");
        }
        text.push('\n');
    }
    let path = ctx.out_file("gas_susceptibility.csv")?;
    write_text(&path, &text)?;
    println!("wrote {} (each species alone at {cap} Pa)", path.display());
    Ok(())
}

fn cmd_sweep(ctx: &Context_, args: &SweepArgs) -> anyhow::Result<()> {
    if args.points < 2 {
        return Err(Error::Config(format!("--points must be >= 2, got {}", args.points)).into());
    }
    if !(args.max_pressure > 0.0 && args.max_pressure.is_finite()) {
        return Err(Error::Config(format!("--max-pressure must be positive, got {}", args.max_pressure)).into());
    }
    let species = ctx.cfg.species_db()?;
    let configured: Vec<&str> = ctx.cfg.sensor.spheres.iter().map(|s| s.material.as_str()).collect();
    let species_idx: Vec<usize> = if args.species.is_empty() {
        (0..species.len()).collect()
    } else {
        args.species.iter().map(|s| species.index_of(s)).collect::<cpsense::Result<_>>()?
    };
    let sphere_idx: Vec<usize> = if args.spheres.is_empty() {
        (0..configured.len()).collect()
    } else {
        args.spheres
            .iter()
            .map(|s| {
                configured.iter().position(|c| c == s).ok_or_else(|| {
                    Error::Config(format!("unknown sphere '{s}'; configured spheres: {}", configured.join(", ")))
                })
            })
            .collect::<cpsense::Result<_>>()?
    };

    let model = ctx.cfg.build_model(args.max_pressure)?;
    let vacuum = model.traps(&vec![0.0; species.len()])?;
    let mut text = ctx.stamp("sweep")?;
    text.push_str(
        "species,pressure_pa,sphere,omega_z_rad_s,omega_r_rad_s,omega_r_em_only_rad_s,rel_change_vs_vacuum,rel_change_vs_em_only\n",
    );
    for &si in &species_idx {
        let name = species.names()[si];
        for k in 0..args.points {
            let p = args.max_pressure * k as f64 / (args.points - 1) as f64;
            let mut pressures = vec![0.0; species.len()];
            pressures[si] = p;
            let traps = model.traps(&pressures)?;
            let freqs = model.frequencies(&traps, &format!("{name} at {p} Pa"))?;
            for &j in &sphere_idx {
                let wr0 = model.frequencies(&vacuum, "vacuum")?.radial[j];
                let em = traps[j].omega_r_em_only().unwrap_or(f64::NAN);
                let wr = freqs.radial[j];
                let _ = writeln!(
                    text,
                    "{name},{p},{},{},{wr},{em},{},{}",
                    configured[j],
                    freqs.axial[j],
                    wr / wr0 - 1.0,
                    wr / em - 1.0
                );
            }
        }
    }
    let path = ctx.out_file("sweep.csv")?;
    write_text(&path, &text)?;
    println!(
        "wrote {} ({} species x {} spheres x {} pressures)",
        path.display(),
        species_idx.len(),
        sphere_idx.len(),
        args.points
    );
    Ok(())
}

fn cmd_generate(ctx: &Context_, args: &GenerateArgs) -> anyhow::Result<()> {
    let preset: Preset = args.preset.parse()?;
    if args.rows == 0 {
        return Err(Error::Config("--rows must be >= 1".into()).into());
    }
    let species = ctx.cfg.species_db()?;
    let spec = ctx.cfg.sampling_spec(preset, &species, ctx.seed);
    let model = ctx.cfg.build_model(spec.cap)?;
    let start = std::time::Instant::now();
    let ds = generate_dataset(&spec, &model, args.rows, ctx.workers, preset.name(), &ctx.cfg.config_hash()?)?;
    let name = args.name.clone().unwrap_or_else(|| format!("dataset_{}.bin", preset.name()));
    let path = ctx.out_file(&name)?;
    write_dataset(&ds, &path)?;
    println!(
        "wrote {} rows to {} in {:.1?} ({} unstable draws resampled)",
        ds.len(),
        path.display(),
        start.elapsed(),
        ds.meta.resampled
    );
    if args.csv {
        let csv = path.with_extension("csv");
        export_csv(&ds, &csv)?;
        println!("wrote {}", csv.display());
    }
    Ok(())
}

fn parse_schedule(s: &str) -> anyhow::Result<Vec<TrainStage>> {
    s.split(',')
        .map(|stage| {
            let (lr, ep) = stage
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("schedule stage '{stage}' is not rate:epochs")))?;
            Ok(TrainStage {
                learning_rate: lr.trim().parse().map_err(|_| Error::Config(format!("bad learning rate '{lr}'")))?,
                epochs: ep.trim().parse().map_err(|_| Error::Config(format!("bad epoch count '{ep}'")))?,
            })
        })
        .collect()
}

fn cmd_train(ctx: &Context_, args: &TrainArgs) -> anyhow::Result<()> {
    let ds = read_dataset(&args.dataset)?;
    let mut opts = ctx.cfg.train_options(ds.len(), ctx.seed);
    if let Some(l) = args.layers {
        opts.hidden_layers = l;
    }
    if let Some(w) = args.width {
        opts.width = w;
    }
    if let Some(s) = &args.schedule {
        opts.schedule.stages = parse_schedule(s)?;
    }
    println!(
        "training {} hidden x {} on {} rows ({} validation), {} epochs",
        opts.hidden_layers,
        opts.width,
        ds.len() - opts.validation_rows,
        opts.validation_rows,
        opts.schedule.total_epochs()
    );
    let start = std::time::Instant::now();
    let outcome = match train(&ds, &opts) {
        Err(Error::Diverged { epoch, history }) => {
            if let Ok(p) = ctx.out_file("loss_history.csv") {
                if write_loss_history(&history, &p).is_ok() {
                    let _ = prepend_stamp(&p, &ctx.stamp("train")?);
                }
            }
            bail!(Error::Diverged { epoch, history });
        }
        other => other?,
    };
    let model_path = ctx.out_file(&args.name)?;
    save_model(&outcome.model, &model_path)?;
    let hist_path = ctx.out_file("loss_history.csv")?;
    write_loss_history(&outcome.history, &hist_path)?;
    prepend_stamp(&hist_path, &ctx.stamp("train")?)?;
    let report = evaluate(&outcome.model, &ds.select(&outcome.validation_rows))?;
    let scatter = ctx.out_file("validation_scatter.csv")?;
    write_scatter(&report, &scatter)?;
    prepend_stamp(&scatter, &ctx.stamp("train")?)?;
    let summary = format!(
        "dataset: {}\ndataset_hash: {}\nconfig_hash: {}\nseed: {}\nlayers: {} x {}\nepochs: {}\nfinal_train_mse_bar2: {}\nfinal_validation_mse_bar2: {}\nvalidation_rmse_bar: {}\n",
        args.dataset.display(),
        outcome.model.meta.dataset_hash,
        ds.meta.config_hash,
        ctx.seed,
        opts.hidden_layers,
        opts.width,
        opts.schedule.total_epochs(),
        outcome.history.train.last().copied().unwrap_or(f64::NAN),
        report.mse,
        report.rmse
    );
    write_text(&ctx.out_file("train_report.txt")?, &summary)?;
    println!("{summary}trained in {:.1?}; wrote {}, {}, {}", start.elapsed(), model_path.display(), hist_path.display(), scatter.display());
    Ok(())
}

fn cmd_eval(ctx: &Context_, args: &EvalArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model)?;
    let ds = read_dataset(&args.dataset)?;
    if let Some(msg) = model.layout_mismatch(&ds.meta.species, &ds.meta.spheres) {
        return Err(Error::Config(msg).into());
    }
    if model.meta.target != ds.meta.target {
        return Err(Error::Config(format!("model predicts '{}', dataset target is '{}'", model.meta.target, ds.meta.target)).into());
    }
    // rows the model was trained on are left out when the dataset is its own
    let (subset, which) = if !args.all_rows && model.meta.dataset_hash == ds.content_hash() {
        let val = ctx.cfg.train_options(ds.len(), model.meta.seed).validation_rows;
        let (_, rows) = split_indices(ds.len(), val, model.meta.seed)?;
        (ds.select(&rows), "validation split")
    } else {
        (ds.clone(), "all rows")
    };
    let report = evaluate(&model, &subset)?;
    if model.meta.config_hash != ds.meta.config_hash {
        log::warn!(
            "model was trained on data from config {}, dataset comes from config {}",
            model.meta.config_hash,
            ds.meta.config_hash
        );
    }
    let scatter = ctx.out_file("eval_scatter.csv")?;
    write_scatter(&report, &scatter)?;
    prepend_stamp(&scatter, &ctx.stamp("eval")?)?;
    let summary = format!(
        "model: {}\ndataset: {}\nconfig_hash: {}\nrows: {} ({which})\nmse_bar2: {}\ndelta_p_bar: {}\ndelta_p_pa: {}\n",
        args.model.display(),
        args.dataset.display(),
        ds.meta.config_hash,
        subset.len(),
        report.mse,
        report.rmse,
        report.rmse * PASCAL_PER_BAR
    );
    write_text(&ctx.out_file("eval_report.txt")?, &summary)?;
    print!("{summary}");
    println!("wrote {}", scatter.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let kind = err.chain().find_map(|e| e.downcast_ref::<Error>()).map(Error::kind);
    match kind {
        Some(ErrorKind::Usage) => 1,
        Some(ErrorKind::Numeric) => 2,
        Some(ErrorKind::Io) => 3,
        None if err.chain().any(|e| e.is::<std::io::Error>()) => 3,
        None => 1,
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let ctx = Context_::new(cli)?;
    match &cli.command {
        Command::Materials(a) => cmd_materials(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
        Command::Generate(a) => cmd_generate(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
