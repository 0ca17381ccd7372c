use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use curvemean::bandwidth::{select_bandwidth, BandwidthSelection};
use curvemean::harness::{
    build_population, cell_file_stem, run_experiment, Cell, DesignChoice, EstimatorKind, Experiment,
    ExperimentConfig, NoiseChoice,
};
use curvemean::io::{
    write_allocation_csv, write_band_csv, write_covariance_csv, write_curves, write_json, write_mean_csv,
    write_scores_csv, write_strata_csv, BandSummary,
};
use curvemean::prelude::*;
use log::info;

#[derive(Parser)]
#[command(name = "curvemean", version, about = "Mean curve estimation for sampled populations of noisy curves")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Start from the full-size study instead of the desk-scale defaults.
    #[arg(long, global = true)]
    paper_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write the population curves.
    Synth {
        /// Binary FSRV1 file instead of CSV.
        #[arg(long)]
        binary: bool,
    },
    /// Stratify the population by total and allocate the sample.
    Stratify,
    /// Estimate the mean curve and its confidence band from one sample.
    Estimate {
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long, value_enum, default_value = "wcv")]
        estimator: EstimatorArg,
        /// Fixed bandwidth; skips cross-validation.
        #[arg(long)]
        bandwidth: Option<f64>,
    },
    /// Cross-validation scores over the bandwidth grid for one sample.
    Cv {
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long, value_enum, default_value = "wcv")]
        criterion: CriterionArg,
    },
    /// Run the Monte Carlo experiment.
    Experiment,
}

#[derive(Args)]
struct SampleArgs {
    /// Defaults to the first design of the configuration.
    #[arg(long, value_enum)]
    design: Option<DesignArg>,
    /// Defaults to the first noise model of the configuration.
    #[arg(long, value_enum)]
    noise: Option<NoiseArg>,
    /// Defaults to the first noise level of the configuration.
    #[arg(long)]
    delta: Option<f64>,
    /// Replicate whose sample and noise are reproduced.
    #[arg(long, default_value_t = 0)]
    replicate: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignArg {
    Srswor,
    Stratified,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Heteroscedastic,
    Ar3,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Lin,
    Cv,
    Wcv,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Unweighted,
    Cv,
    Wcv,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_FAILURES: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let mut config = match &g.config {
        Some(path) => ExperimentConfig::from_toml_str(&std::fs::read_to_string(path)?, g.paper_scale)?,
        None if g.paper_scale => ExperimentConfig::paper_scale(),
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(workers) = g.workers {
        config.workers = workers;
    }
    config.validate()?;
    Ok(config)
}

fn restrict(config: &mut ExperimentConfig, args: &SampleArgs) -> Result<Cell> {
    let design = match args.design {
        Some(DesignArg::Srswor) => DesignChoice::Srswor,
        Some(DesignArg::Stratified) => DesignChoice::Stratified,
        None => *config.design.designs.first().ok_or_else(|| Error::Config("no design configured".into()))?,
    };
    let noise = match args.noise {
        Some(NoiseArg::Heteroscedastic) => NoiseChoice::Heteroscedastic,
        Some(NoiseArg::Ar3) => NoiseChoice::Ar3,
        None => *config.noise.models.first().ok_or_else(|| Error::Config("no noise model configured".into()))?,
    };
    let delta = match args.delta {
        Some(d) => d,
        None => *config.noise.deltas.first().ok_or_else(|| Error::Config("no noise level configured".into()))?,
    };
    config.design.designs = vec![design];
    config.noise.models = vec![noise];
    config.noise.deltas = vec![delta];
    config.validate()?;
    Ok(Cell { noise, delta, design })
}

fn synth(config: &ExperimentConfig, out: &Path, binary: bool) -> Result<()> {
    let pop = build_population(config)?;
    let path = out.join(if binary { "population.fsrv" } else { "population.csv" });
    write_curves(&path, pop.grid(), pop.curves())?;
    println!("{} curves on {} points -> {}", pop.len(), pop.grid().len(), path.display());
    Ok(())
}

fn stratify(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let pop = build_population(config)?;
    let strata = stratify_by_total(&pop, &config.design.cuts)?;
    let allocation = neyman_allocation(&pop, &strata, config.design.sample_size)?;
    let sizes = strata.sizes();
    write_strata_csv(&out.join("strata.csv"), &strata)?;
    write_allocation_csv(&out.join("allocation.csv"), &sizes, &allocation)?;
    println!("stratum,size,allocation");
    for (g, (s, a)) in sizes.iter().zip(&allocation).enumerate() {
        println!("{g},{s},{a}");
    }
    Ok(())
}

fn criterion_weights(criterion: CriterionArg, draw: &SampleDraw, probs: &InclusionProbabilities) -> Result<CvWeights> {
    match criterion {
        CriterionArg::Unweighted => CvWeights::unweighted(draw.len()),
        CriterionArg::Cv => CvWeights::opsomer_miller(draw, probs),
        CriterionArg::Wcv => stratified_loo_weights(draw, probs),
    }
}

fn select(exp: &Experiment, obs: &ObservationMatrix, weights: &CvWeights) -> Result<BandwidthSelection> {
    let selection = select_bandwidth(exp.bank(), obs, weights)?;
    info!("selected h = {}", selection.bandwidth);
    Ok(selection)
}

fn estimate(
    mut config: ExperimentConfig,
    out: &Path,
    args: &SampleArgs,
    estimator: EstimatorArg,
    bandwidth: Option<f64>,
) -> Result<()> {
    let cell = restrict(&mut config, args)?;
    let exp = Experiment::prepare(config)?;
    let probs = exp.inclusion_probabilities(cell.design)?;
    let (draw, obs) = exp.sample(cell, args.replicate)?;
    let grid = exp.population().grid();
    let kernel = exp.config().bandwidth.kernel;
    let (curves, kind) = match (bandwidth, estimator) {
        (_, EstimatorArg::Lin) => {
            let rows = obs.values().iter_rows().map(|r| linear_interpolate(r, grid, grid)).collect::<Result<Vec<_>>>()?;
            (CurveMatrix::from_rows(&rows)?, EstimatorKind::Lin)
        }
        (Some(h), e) => {
            let w = local_linear_weights(grid, grid, h, kernel)?;
            let kind = if matches!(e, EstimatorArg::Cv) { EstimatorKind::Cv } else { EstimatorKind::Wcv };
            (w.smooth_rows(obs.values())?, kind)
        }
        (None, e) => {
            let (criterion, kind) = match e {
                EstimatorArg::Cv => (CriterionArg::Cv, EstimatorKind::Cv),
                _ => (CriterionArg::Wcv, EstimatorKind::Wcv),
            };
            let s = select(&exp, &obs, &criterion_weights(criterion, &draw, probs)?)?;
            (exp.bank().smoother(s.index).smooth_rows(obs.values())?, kind)
        }
    };
    let mean = ht_mean(grid, &curves, &draw, probs)?;
    let cov = ht_covariance(grid, &curves, &draw, probs)?;
    let bands = &exp.config().bands;
    let band = build_band(&mean, &cov, bands.alpha, bands.replicates, &exp.band_stream(kind, args.replicate))?;
    write_mean_csv(&out.join("mean.csv"), &mean)?;
    write_covariance_csv(&out.join("covariance.csv"), &cov)?;
    write_band_csv(&out.join("band.csv"), &band)?;
    let summary = BandSummary::from(&band);
    write_json(&out.join("band.json"), &summary)?;
    println!("{}: c = {} area = {}", cell_file_stem(&cell), summary.c, summary.area);
    Ok(())
}

fn cv(mut config: ExperimentConfig, out: &Path, args: &SampleArgs, criterion: CriterionArg) -> Result<()> {
    let cell = restrict(&mut config, args)?;
    let exp = Experiment::prepare(config)?;
    let probs = exp.inclusion_probabilities(cell.design)?;
    let (draw, obs) = exp.sample(cell, args.replicate)?;
    let selection = select(&exp, &obs, &criterion_weights(criterion, &draw, probs)?)?;
    write_scores_csv(&out.join("scores.csv"), &selection)?;
    println!("{}: h = {}", cell_file_stem(&cell), selection.bandwidth);
    Ok(())
}

fn experiment(config: ExperimentConfig, out: &Path) -> Result<u8> {
    let result = run_experiment(config, Some(out))?;
    for c in &result.cells {
        for s in &c.summary {
            let coverage = s.coverage.map(|c| format!("{c:.3}")).unwrap_or_else(|| "-".into());
            println!(
                "{:36} {:9} R {:10.4} L {:10.4} coverage {}",
                cell_file_stem(&c.cell),
                s.estimator.name(),
                s.r_loss.mean,
                s.l_loss.mean,
                coverage
            );
        }
    }
    let (failed, total) = (result.failed_replicates(), result.total_replicates());
    if result.excessive_failures() {
        eprintln!("error: {failed} of {total} replicates failed");
        return Ok(EXIT_FAILURES);
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    let config = load_config(&cli.global)?;
    let out = cli.global.out.as_path();
    std::fs::create_dir_all(out)?;
    match cli.command {
        Command::Synth { binary } => synth(&config, out, binary)?,
        Command::Stratify => stratify(&config, out)?,
        Command::Estimate { sample, estimator, bandwidth } => estimate(config, out, &sample, estimator, bandwidth)?,
        Command::Cv { sample, criterion } => cv(config, out, &sample, criterion)?,
        Command::Experiment => return experiment(config, out),
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
