use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use cspbart_core::sim::{run_experiment, Generator, SimConfig};
use cspbart_core::{Hyperparameters, Mode};
use serde::{Deserialize, Serialize};

use crate::artifact;
use crate::config::ConfigFile;
use crate::error::{CliError, CliResult};
use crate::fit::DEFAULT_SEED;
use crate::SamplerArgs;

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// friedman or tree-sim.
    #[arg(long = "gen")]
    pub generator: Option<String>,
    /// Comma-separated modes to fit: csp, ssp, bart.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Rows per replicate.
    #[arg(long)]
    pub n: Option<usize>,
    /// Covariates per replicate.
    #[arg(long)]
    pub p: Option<usize>,
    /// Noise variance.
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Replicates run concurrently on this many threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Full-size study (1000 rows, 50 replicates, 2000 + 2000 iterations)
    /// instead of the desk-size defaults.
    #[arg(long)]
    pub full: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub generator: String,
    pub mode: String,
    pub replicates: usize,
    pub n: usize,
    pub p: usize,
    pub sigma2: f64,
    pub full: bool,
    pub trees: usize,
    pub iters: usize,
    pub burnin: usize,
    pub k: f64,
    pub eta: f64,
    pub zeta: f64,
    pub nu: f64,
    pub seed: u64,
    pub out: String,
}

const KEYS: &[&str] = &[
    "generator", "gen", "mode", "replicates", "n", "p", "sigma2", "jobs", "full", "trees", "iters", "burnin", "k", "eta",
    "zeta", "nu", "seed", "out",
];

fn parse_modes(text: &str) -> CliResult<Vec<Mode>> {
    let mut modes = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m: Mode = part.parse()?;
        if !modes.contains(&m) {
            modes.push(m);
        }
    }
    if modes.is_empty() {
        return Err(CliError::usage("--mode lists no modes"));
    }
    Ok(modes)
}

pub fn run(args: SimulateArgs) -> CliResult<()> {
    let file = ConfigFile::load(args.sampler.config.as_deref())?;
    file.check_keys(KEYS)?;
    let generator_text = match file.pick(args.generator, "gen")? {
        Some(g) => g,
        None => file
            .pick(None, "generator")?
            .ok_or_else(|| CliError::usage("--gen is required (friedman or tree-sim)"))?,
    };
    let generator: Generator = generator_text.parse()?;
    let full = file.switch(args.full, "full")?;
    let (base_sim, base_hyper) = if full {
        (
            SimConfig::full(generator),
            Hyperparameters { iterations: 4000, burn_in: 2000, ..Hyperparameters::simulation() },
        )
    } else {
        (SimConfig::desk(generator), Hyperparameters { iterations: 2000, burn_in: 1000, ..Hyperparameters::simulation() })
    };
    let s = args.sampler;
    let cfg = SimulateConfig {
        generator: generator.to_string(),
        mode: file.pick_or(args.mode, "mode", "csp".into())?,
        replicates: file.pick_or(args.replicates, "replicates", base_sim.replicates)?,
        n: file.pick_or(args.n, "n", base_sim.n)?,
        p: file.pick_or(args.p, "p", base_sim.p)?,
        sigma2: file.pick_or(args.sigma2, "sigma2", base_sim.sigma2)?,
        full,
        trees: file.pick_or(s.trees, "trees", base_hyper.trees)?,
        iters: file.pick_or(s.iters, "iters", base_hyper.iterations)?,
        burnin: file.pick_or(s.burnin, "burnin", base_hyper.burn_in)?,
        k: file.pick_or(s.k, "k", base_hyper.k)?,
        eta: file.pick_or(s.eta, "eta", base_hyper.eta)?,
        zeta: file.pick_or(s.zeta, "zeta", base_hyper.zeta)?,
        nu: file.pick_or(s.nu, "nu", base_hyper.nu)?,
        seed: file.pick_or(s.seed, "seed", DEFAULT_SEED)?,
        out: file.pick_or(args.out.map(|p| p.to_string_lossy().into_owned()), "out", "cspbart-sim".into())?,
    };
    let jobs = file.pick_or(args.jobs, "jobs", std::thread::available_parallelism().map_or(1, |n| n.get()))?;
    let modes = parse_modes(&cfg.mode)?;
    let sim = SimConfig {
        generator,
        n: cfg.n,
        p: cfg.p,
        sigma2: cfg.sigma2,
        replicates: cfg.replicates,
    };
    let hyper = Hyperparameters {
        trees: cfg.trees,
        iterations: cfg.iters,
        burn_in: cfg.burnin,
        k: cfg.k,
        eta: cfg.eta,
        zeta: cfg.zeta,
        nu: cfg.nu,
        ..Hyperparameters::simulation()
    };
    let result = run_experiment(&sim, &hyper, &modes, cfg.seed, jobs, false)?;

    let out = PathBuf::from(&cfg.out);
    std::fs::create_dir_all(&out).map_err(|e| CliError::data(format!("cannot create `{}`: {e}", out.display())))?;
    let header = artifact::header(cfg.seed, &cfg);
    let mut bias = String::from("mode\tparameter\treplicate\testimate\ttruth\tbias\n");
    for r in &result.rows {
        let _ = writeln!(bias, "{}\t{}\t{}\t{}\t{}\t{}", r.mode, r.parameter, r.replicate + 1, r.estimate, r.truth, r.bias);
    }
    artifact::write_text(&out, "bias.tsv", &header, &bias)?;
    let summary = result.summary();
    let mut table = String::from("mode\tparameter\ttruth\tcount\tmean_bias\tsd_bias\tmean_abs_bias\n");
    for s in &summary {
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.mode, s.parameter, s.truth, s.count, s.mean_bias, s.sd_bias, s.mean_abs_bias
        );
    }
    artifact::write_text(&out, "summary.tsv", &header, &table)?;

    let mut report = format!(
        "cspbart {} | {} | n {} p {} sigma2 {} | {} replicates | seed {}\n",
        artifact::tool_version(),
        cfg.generator,
        cfg.n,
        cfg.p,
        cfg.sigma2,
        cfg.replicates,
        cfg.seed
    );
    for m in &modes {
        let _ = writeln!(report, "\nmode {m}");
        let _ = writeln!(report, "  {:<10} {:>8} {:>22} {:>12}", "parameter", "truth", "mean bias ± sd", "mean |bias|");
        for s in summary.iter().filter(|s| s.mode == *m) {
            let _ = writeln!(
                report,
                "  {:<10} {:>8.3} {:>22} {:>12.4}",
                s.parameter,
                s.truth,
                format!("{:.4} ± {:.4}", s.mean_bias, s.sd_bias),
                s.mean_abs_bias
            );
        }
    }
    let _ = writeln!(report, "\nresults written to {}", out.display());
    print!("{report}");

    if !result.failures.is_empty() {
        let mut text = String::from("mode\treplicate\treason\n");
        for f in &result.failures {
            let _ = writeln!(text, "{}\t{}\t{}", f.mode, f.replicate + 1, f.reason);
            eprintln!("replicate {} ({}) failed: {}", f.replicate + 1, f.mode, f.reason);
        }
        artifact::write_text(&out, "failures.tsv", &header, &text)?;
        return Err(CliError::numerical(format!("{} replicate fits failed", result.failures.len())));
    }
    Ok(())
}
