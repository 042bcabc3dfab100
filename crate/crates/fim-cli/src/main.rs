//! Command-line driver: optimize one scenario, run a sweep against the
//! rigid-array baseline, run the validation oracle suites, or summarize a
//! finished run directory.
//!
//! All data goes to files, progress and warnings go to stderr, and stdout
//! carries a single machine-friendly summary line. Exit codes: 0 success,
//! 1 numerical/convergence/validation failure, 2 configuration error.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fim_core::config::RunConfig;
use fim_core::error::FimError;
use fim_core::geometry::MorphingVector;
use fim_core::output::{write_aggregate_csv, write_drops_csv, write_manifest};
use fim_core::pgm::multi_start;
use fim_core::scenario::run_sweep_with;
use fim_core::validation::run_validation;

#[derive(Parser)]
#[command(
    name = "fim",
    version,
    about = "Morphable-surface downlink spectral-efficiency toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(short, long)]
    out: PathBuf,
    /// Override the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap the worker-thread count.
    #[arg(long)]
    threads: Option<usize>,
    /// Suppress progress output on stderr.
    #[arg(short, long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the surface for one seeded user drop.
    Optimize(RunArgs),
    /// Sweep one axis over seeded user drops, with the rigid baseline.
    Sweep(RunArgs),
    /// Run the quadrature, gradient, and Monte Carlo oracle suites.
    Validate(RunArgs),
    /// Summarize a finished run directory.
    Report {
        /// Directory written by a previous sweep/optimize/validate run.
        #[arg(short, long)]
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                FimError::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch() -> Result<ExitCode, FimError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Optimize(args) => cmd_optimize(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Report { dir } => cmd_report(&dir),
    }
}

fn setup(args: &RunArgs) -> Result<(RunConfig, Vec<u8>), FimError> {
    if let Some(n) = args.threads {
        // ignore the error if a pool already exists (e.g. repeated setup)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let bytes = fs::read(&args.config)
        .map_err(|e| FimError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|e| FimError::Config(format!("configuration is not UTF-8: {e}")))?;
    let cfg = RunConfig::parse(&text)?;
    fs::create_dir_all(&args.out)?;
    Ok((cfg, bytes))
}

fn file(out: &Path, name: &str) -> Result<BufWriter<fs::File>, FimError> {
    Ok(BufWriter::new(fs::File::create(out.join(name))?))
}

fn cmd_optimize(args: RunArgs) -> Result<ExitCode, FimError> {
    let (cfg, config_bytes) = setup(&args)?;
    let mut sc = cfg.scenario_config()?;
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    let opt = cfg.optimizer_settings();

    let mut rng = fim_core::seeding::stream_rng(sc.seed, 0);
    let drops = fim_core::scenario::drop_users(&sc, &mut rng)?;
    let model = sc.build_model(drops.iter().map(|d| d.attenuation).collect())?;
    if !args.quiet {
        eprintln!(
            "optimize: N = {}, K = {}, zeta = {:.4e} m, restarts = {}",
            model.elements(),
            model.users(),
            model.array.zeta,
            opt.restarts
        );
    }

    let raa = model.evaluate(&MorphingVector::flat(model.elements()))?;
    let pgm = opt.pgm_config(&model.array, sc.seed);
    let ms = multi_start(&model, &pgm)?;

    ms.best.write_csv(file(&args.out, "trajectory.csv")?)?;
    let mut yw = file(&args.out, "y_opt.csv")?;
    writeln!(yw, "element,y_m")?;
    for (i, v) in ms.best.y_opt.as_vector().iter().enumerate() {
        writeln!(yw, "{i},{v:.12e}")?;
    }
    write_manifest(
        file(&args.out, "manifest.json")?,
        "optimize",
        "-",
        sc.seed,
        &config_bytes,
    )?;

    println!(
        "optimize: se_nats={:.6} se_bits={:.6} raa_nats={:.6} iterations={} termination={} out={}",
        ms.best.best.se_nats,
        ms.best.best.se_bits,
        raa.se_nats,
        ms.best.iterations(),
        ms.best.termination,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: RunArgs) -> Result<ExitCode, FimError> {
    let (cfg, config_bytes) = setup(&args)?;
    let mut sc = cfg.scenario_config()?;
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    let axis = cfg
        .sweep_axis()?
        .ok_or_else(|| FimError::Config("sweep requires a [sweep] section".into()))?;
    let opt = cfg.optimizer_settings();
    if !args.quiet {
        eprintln!(
            "sweep: axis = {}, points = {}, drops = {}, seed = {}",
            axis.name(),
            axis.len(),
            sc.drops,
            sc.seed
        );
    }

    let quiet = args.quiet;
    let result = run_sweep_with(&sc, &axis, &opt, |idx, point| {
        if !quiet {
            eprintln!(
                "  point {idx}: {} = {:.4}, fim = {:.6} nats, raa = {:.6} nats, gain = {:.2}%",
                axis.name(),
                point.value,
                point.mean_fim_nats,
                point.mean_raa_nats,
                point.gain_percent
            );
        }
        for (drop, msg) in &point.failures {
            eprintln!("warning: drop {drop} at point {idx} failed and was excluded: {msg}");
        }
    })?;

    write_drops_csv(&result, file(&args.out, "drops.csv")?)?;
    write_aggregate_csv(&result, file(&args.out, "aggregate.csv")?)?;
    write_manifest(
        file(&args.out, "manifest.json")?,
        "sweep",
        &result.axis_name,
        sc.seed,
        &config_bytes,
    )?;

    let ok: usize = result.points.iter().map(|p| p.drops.len()).sum();
    println!(
        "sweep: points={} drops_ok={} drops_failed={} out={}",
        result.points.len(),
        ok,
        result.total_failures(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(args: RunArgs) -> Result<ExitCode, FimError> {
    let (cfg, config_bytes) = setup(&args)?;
    let mut sc = cfg.scenario_config()?;
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    let vs = cfg.validation_settings();
    if !args.quiet {
        eprintln!(
            "validate: order = {}, pairs = {}, fd configs = {}, realizations = {}",
            vs.quadrature_order, vs.quadrature_pairs, vs.fd_configs, vs.realizations
        );
    }

    let report = run_validation(&sc, &vs)?;
    report.write_text(file(&args.out, "validation.txt")?)?;
    report.write_csv(file(&args.out, "validation.csv")?)?;
    write_manifest(
        file(&args.out, "manifest.json")?,
        "validate",
        "-",
        sc.seed,
        &config_bytes,
    )?;
    if !args.quiet {
        report.write_text(std::io::stderr().lock())?;
    }

    let failed: usize = report
        .rows
        .iter()
        .filter(|r| r.status == fim_core::validation::CheckStatus::Fail)
        .count();
    println!(
        "validate: {} checks={} failed={} out={}",
        if report.passed() { "PASS" } else { "FAIL" },
        report.rows.len(),
        failed,
        args.out.display()
    );
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("failed suites: {}", report.failed_suites().join(", "));
        Ok(ExitCode::from(1))
    }
}

fn cmd_report(dir: &Path) -> Result<ExitCode, FimError> {
    let manifest_path = dir.join("manifest.json");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&manifest_path).map_err(|e| {
            FimError::Config(format!("cannot read {}: {e}", manifest_path.display()))
        })?)
        .map_err(|e| FimError::Config(format!("malformed manifest: {e}")))?;

    println!(
        "run: {} (tool {} seed {} config {})",
        manifest["subcommand"].as_str().unwrap_or("?"),
        manifest["tool_version"].as_str().unwrap_or("?"),
        manifest["seed"],
        manifest["config_hash"].as_str().unwrap_or("?"),
    );

    let aggregate = dir.join("aggregate.csv");
    if aggregate.exists() {
        let text = fs::read_to_string(&aggregate)?;
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
        println!(
            "{:>16} {:>14} {:>14} {:>9}",
            header.first().copied().unwrap_or("value"),
            "fim nats",
            "raa nats",
            "gain %"
        );
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() >= 6 {
                let num = |s: &str| s.parse::<f64>().unwrap_or(f64::NAN);
                println!(
                    "{:>16} {:>14.6} {:>14.6} {:>9.2}",
                    f[0],
                    num(f[1]),
                    num(f[2]),
                    num(f[5])
                );
            }
        }
    }

    let validation = dir.join("validation.txt");
    if validation.exists() {
        print!("{}", fs::read_to_string(&validation)?);
    }
    Ok(ExitCode::SUCCESS)
}
