//! Command-line entry point.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bootstrap::bootstrap_distribution;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::experiments::{
    self, clt_experiment, coupling_check, estimation_trajectory, mean_scaling_check, prepare_chain,
    schedule_of, tail_and_moment_check, trajectory_with_returns, window_report,
};
use crate::harness::report::{
    write_csv_rows, write_json, write_statistics_csv, BoundsReport, CouplingReport, WindowReport,
};
use crate::harness::stats::SampleSummary;
use crate::regeneration::{block_statistics, regeneration_diagnostics, write_decomposition_csv, Diagnostics};
use crate::schedule::alpha_window;
use crate::simulator::{derive_master, SeedSpec};

#[derive(Debug, Parser)]
#[command(name = "regboot", version, about = "Regeneration-block bootstrap experiments")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a trajectory; CSV has one symbol per line.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000)]
        length: usize,
    },
    /// Regeneration blocks of one trajectory.
    Blocks {
        #[command(flatten)]
        common: Common,
    },
    /// Bootstrap statistics for one trajectory.
    Bootstrap {
        #[command(flatten)]
        common: Common,
    },
    /// Bootstrap CLT experiment with KS distance to N(0,1).
    CltCheck {
        #[command(flatten)]
        common: Common,
    },
    /// Return-time tail and moment bounds plus mean scaling.
    BoundsCheck {
        #[command(flatten)]
        common: Common,
    },
    /// Coupling discrepancy rates against the continuity rates.
    CouplingCheck {
        #[command(flatten)]
        common: Common,
    },
    /// Admissible range of the schedule exponent.
    Window {
        #[arg(long)]
        delta: f64,
        /// Mixing exponent; `inf` for finite-order kernels.
        #[arg(long)]
        c: f64,
        /// Positivity constant of the Markov approximation; defaults to delta.
        #[arg(long)]
        delta_underbar: Option<f64>,
    },
}

/// Parse `args` (program name first), run the command and return the exit
/// code: 0 success, 1 invalid input, 2 hypothesis violation, 3 resource cap.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.threads {
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::ResourceCap(format!("thread pool: {e}")))?
            .install(|| dispatch(cli.command)),
        None => dispatch(cli.command),
    }
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn dispatch(command: Command) -> Result<()> {
    let started = Instant::now();
    match command {
        Command::Simulate { common, length } => simulate(&load(&common)?, length)?,
        Command::Blocks { common } => blocks(&load(&common)?)?,
        Command::Bootstrap { common } => bootstrap(&load(&common)?)?,
        Command::CltCheck { common } => clt_check(&load(&common)?)?,
        Command::BoundsCheck { common } => bounds_check(&load(&common)?)?,
        Command::CouplingCheck { common } => coupling(&load(&common)?)?,
        Command::Window { delta, c, delta_underbar } => {
            let w = alpha_window(delta, c, delta_underbar.unwrap_or(delta))?;
            println!("window ({:.5}, {:.5})", w.lower, w.upper);
            println!("c > 18 ln(1/delta): {}", w.infinite_order_condition_ok);
            println!("Markov regime: alpha > {:.5}", w.markov_lower);
            return Ok(());
        }
    }
    println!("wall-clock: {:.3} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn warn_window(window: &WindowReport) {
    if !window.alpha_admissible {
        eprintln!(
            "warning: alpha = {:.5} (m = {}) lies outside the admissible window for this mode",
            window.alpha, window.m
        );
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    length: usize,
    symbol_counts: Vec<usize>,
}

fn simulate(config: &ExperimentConfig, length: usize) -> Result<()> {
    let chain = prepare_chain(config, config.seed)?;
    let seed = SeedSpec::new(derive_master(config.seed, "trajectory", 0), 0);
    let trajectory = chain.source.sample(length, seed)?;
    let mut counts = vec![0usize; chain.source.alphabet_size()];
    for &s in trajectory.iter() {
        counts[s as usize] += 1;
    }
    if let Some(path) = &config.output.csv {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["symbol"])?;
        for &s in trajectory.iter() {
            w.serialize(s)?;
        }
        w.flush()?;
    }
    if let Some(path) = &config.output.json {
        write_json(
            path,
            &SimulateReport {
                config,
                seed: config.seed,
                length,
                symbol_counts: counts.clone(),
            },
        )?;
    }
    println!("simulated {length} symbols; counts {counts:?}");
    Ok(())
}

#[derive(Serialize)]
struct BlocksReport<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    window: WindowReport,
    trajectory_len: usize,
    segment_len: usize,
    blocks: usize,
    mu_hat: f64,
    mu: f64,
    diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<SampleSummary>,
}

/// First outer replicate of the CLT pipeline up to the block sums, and
/// optionally its bootstrap sample.
fn blocks_pipeline(config: &ExperimentConfig, with_bootstrap: bool) -> Result<()> {
    let chain = prepare_chain(config, config.seed)?;
    let window = window_report(config, &chain)?;
    warn_window(&window);
    let (m, _) = schedule_of(config)?;
    let (trajectory, decomposition) = trajectory_with_returns(
        &chain.source,
        config.k,
        m,
        SeedSpec::new(derive_master(config.seed, "trajectory", 0), 0),
        config.caps.max_trajectory,
    )?;
    let blocks = decomposition.blocks(&trajectory)?;
    let stats = block_statistics(&blocks, &chain.observable, Some(chain.mu))?;
    let diagnostics = regeneration_diagnostics(&stats.z, stats.z_tilde.as_deref())?;
    let mut summary = None;
    if with_bootstrap {
        let sample = bootstrap_distribution(
            &stats.z,
            config.bootstrap_replicates,
            derive_master(config.seed, "bootstrap", 0),
        )?;
        summary = Some(SampleSummary::of(&sample)?);
        if let Some(path) = &config.output.csv {
            write_statistics_csv(create(path)?, &sample)?;
        }
    } else if let Some(path) = &config.output.csv {
        let mut w = create(path)?;
        write_decomposition_csv(&mut w, &decomposition, &stats)?;
        w.flush()?;
    }
    println!(
        "{} blocks over {} symbols; mu_hat {:.6}, mu {:.6}; lindeberg ratio {:.6}",
        decomposition.block_count(),
        decomposition.segment_len(),
        stats.mu_hat,
        chain.mu,
        diagnostics.lindeberg_ratio
    );
    if let Some(s) = &summary {
        println!("bootstrap: mean {:.4}, sd {:.4}, KS distance {:.5}", s.mean, s.sd, s.ks_distance);
    }
    if let Some(path) = &config.output.json {
        write_json(
            path,
            &BlocksReport {
                config,
                seed: config.seed,
                window,
                trajectory_len: trajectory.len(),
                segment_len: decomposition.segment_len(),
                blocks: decomposition.block_count(),
                mu_hat: stats.mu_hat,
                mu: chain.mu,
                diagnostics,
                summary,
            },
        )?;
    }
    Ok(())
}

fn blocks(config: &ExperimentConfig) -> Result<()> {
    blocks_pipeline(config, false)
}

fn bootstrap(config: &ExperimentConfig) -> Result<()> {
    blocks_pipeline(config, true)
}

fn clt_check(config: &ExperimentConfig) -> Result<()> {
    let outcome = clt_experiment(config)?;
    let report = &outcome.report;
    warn_window(&report.window);
    if let Some(path) = &config.output.csv {
        write_statistics_csv(create(path)?, &outcome.statistics)?;
    }
    if let Some(path) = &config.output.json {
        write_json(path, report)?;
    }
    let h = &report.hypotheses;
    println!(
        "hypotheses: delta {:.4} (H1 {}), c {} (H2 {}), sigma^2 {:.5} (H3 {})",
        h.delta,
        h.h1_ok,
        h.c.map_or("inf".to_string(), |c| format!("{c:.4}")),
        h.h2_ok,
        h.sigma2_estimate,
        h.h3_ok
    );
    for r in &report.replicates {
        println!(
            "replicate {}: m {}, mean {:.4}, sd {:.4}, skewness {:.4}, KS {:.5}, lindeberg {:.6}",
            r.replicate,
            r.blocks,
            r.summary.mean,
            r.summary.sd,
            r.summary.skewness,
            r.summary.ks_distance,
            r.diagnostics.lindeberg_ratio
        );
    }
    println!(
        "KS threshold {} (convention): {}",
        report.ks_threshold,
        if report.ks_pass { "pass" } else { "fail" }
    );
    Ok(())
}

fn bounds_check(config: &ExperimentConfig) -> Result<()> {
    let chain = prepare_chain(config, config.seed)?;
    let cap = config.caps.max_trajectory;
    let tables = tail_and_moment_check(
        &chain.source,
        config.k,
        &config.bounds.t_grid,
        config.bounds.max_moment,
        config.bounds.replicates,
        derive_master(config.seed, "bounds", 0),
        cap,
    )?;
    let scaling = mean_scaling_check(
        &chain.source,
        &chain.observable,
        chain.mu,
        config.k,
        &config.bounds.m_grid,
        config.bounds.scaling_replicates,
        config.seed,
        cap,
    )?;
    if let Some(path) = &config.output.csv {
        write_csv_rows(path, &tables.tail)?;
    }
    for row in &tables.tail {
        println!(
            "P(D_1 > {}) = {:.5} +- {:.5}; bound {:.5}{}",
            row.t,
            row.empirical,
            row.se,
            row.bound,
            if row.violation { "  VIOLATION" } else { "" }
        );
    }
    for row in &tables.moments {
        println!(
            "E(D_1^{}) = {:.4} +- {:.4}; bound {:.4}{}",
            row.r,
            row.empirical,
            row.se,
            row.bound,
            if row.violation { "  VIOLATION" } else { "" }
        );
    }
    for row in &scaling {
        println!("m {}: m E[(mu_hat - mu)^2] = {:.5} +- {:.5}", row.m, row.value, row.se);
    }
    if let Some(path) = &config.output.json {
        write_json(
            path,
            &BoundsReport {
                config: config.clone(),
                seed: config.seed,
                tables,
                mu: chain.mu,
                scaling,
                conventions: experiments::conventions(),
            },
        )?;
    }
    Ok(())
}

fn coupling(config: &ExperimentConfig) -> Result<()> {
    let kernel = config.kernel.build()?;
    let burn_in = experiments::burn_in_for(config, &kernel);
    let estimation = estimation_trajectory(config, &kernel, config.seed)?;
    let rows = coupling_check(
        &kernel,
        &estimation,
        &config.coupling.k_grid,
        config.coupling.horizon,
        config.coupling.replicates,
        burn_in,
        config.seed,
    )?;
    if let Some(path) = &config.output.csv {
        write_csv_rows(path, &rows)?;
    }
    for row in &rows {
        println!(
            "k {}: single {:.6} +- {:.6} vs beta_k {:.6}{}; horizon {} rate {:.6} +- {:.6}",
            row.k,
            row.single_rate,
            row.single_se,
            row.beta_k,
            if row.violation { "  VIOLATION" } else { "" },
            row.horizon,
            row.horizon_rate,
            row.horizon_se
        );
    }
    if let Some(path) = &config.output.json {
        write_json(
            path,
            &CouplingReport {
                config: config.clone(),
                seed: config.seed,
                rows,
                conventions: experiments::conventions(),
            },
        )?;
    }
    Ok(())
}
