use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use cspbart_core::data::TermEncoding;
use cspbart_core::diagnostics::{misclassification, rmse, sum_to_zero, SummaryRow};
use cspbart_core::{
    detect_interactions, encode_design, load_table, parse_formula, run_chain, summarize, variable_inclusion,
    Hyperparameters, Mode, ModelSpec, PosteriorDraws, ResponseKind, RngStream, Table, X2Selection,
};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::artifact::{self, Manifest, FORMAT_VERSION};
use crate::config::{to_config_text, ConfigFile};
use crate::error::{CliError, CliResult};
use crate::SamplerArgs;

/// Stream of the holdout shuffle; the chain uses stream 0.
const HOLDOUT_STREAM: u64 = 1;

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Delimited data file with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model formula, e.g. "y ~ 0 + x1 + (x2 | g)".
    #[arg(long)]
    pub formula: Option<String>,
    /// Tree covariates: comma-separated names, or `rest`.
    #[arg(long)]
    pub x2: Option<String>,
    /// csp, ssp or bart.
    #[arg(long)]
    pub mode: Option<String>,
    /// Fraction of rows held out for test-set metrics.
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Binary 0/1 response through a probit link.
    #[arg(long)]
    pub probit: bool,
    /// Input is tab-delimited.
    #[arg(long)]
    pub tab: bool,
    /// Model directory to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

/// Fully resolved settings of a fit; written to every output and to
/// `config.txt`, which `fit --config` accepts to repeat the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub data: String,
    pub formula: String,
    pub x2: String,
    pub mode: String,
    pub trees: usize,
    pub iters: usize,
    pub burnin: usize,
    pub k: f64,
    pub eta: f64,
    pub zeta: f64,
    pub nu: f64,
    pub seed: u64,
    pub holdout: f64,
    pub probit: bool,
    pub tab: bool,
    pub out: String,
}

const KEYS: &[&str] = &[
    "data", "formula", "x2", "mode", "trees", "iters", "burnin", "k", "eta", "zeta", "nu", "seed", "holdout", "probit",
    "tab", "out",
];

pub const DEFAULT_SEED: u64 = 1;

fn path_text(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.to_string_lossy().into_owned())
}

impl FitConfig {
    pub fn resolve(args: FitArgs) -> CliResult<Self> {
        let file = ConfigFile::load(args.sampler.config.as_deref())?;
        file.check_keys(KEYS)?;
        let d = Hyperparameters::default();
        let s = args.sampler;
        let required = |v: Option<String>, key: &str| v.ok_or_else(|| CliError::usage(format!("--{key} is required")));
        Ok(Self {
            data: required(file.pick(path_text(args.data), "data")?, "data")?,
            formula: required(file.pick(args.formula, "formula")?, "formula")?,
            x2: file.pick_or(args.x2, "x2", "rest".into())?,
            mode: file.pick_or(args.mode, "mode", Mode::Csp.to_string())?,
            trees: file.pick_or(s.trees, "trees", d.trees)?,
            iters: file.pick_or(s.iters, "iters", d.iterations)?,
            burnin: file.pick_or(s.burnin, "burnin", d.burn_in)?,
            k: file.pick_or(s.k, "k", d.k)?,
            eta: file.pick_or(s.eta, "eta", d.eta)?,
            zeta: file.pick_or(s.zeta, "zeta", d.zeta)?,
            nu: file.pick_or(s.nu, "nu", d.nu)?,
            seed: file.pick_or(s.seed, "seed", DEFAULT_SEED)?,
            holdout: file.pick_or(args.holdout, "holdout", 0.0)?,
            probit: file.switch(args.probit, "probit")?,
            tab: file.switch(args.tab, "tab")?,
            out: file.pick_or(path_text(args.out), "out", "cspbart-model".into())?,
        })
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            trees: self.trees,
            iterations: self.iters,
            burn_in: self.burnin,
            k: self.k,
            eta: self.eta,
            zeta: self.zeta,
            nu: self.nu,
            ..Hyperparameters::default()
        }
    }

    pub fn delimiter(&self) -> u8 {
        if self.tab {
            b'\t'
        } else {
            b','
        }
    }

    pub fn response(&self) -> ResponseKind {
        if self.probit {
            ResponseKind::Probit
        } else {
            ResponseKind::Regression
        }
    }
}

/// Splits off a random `fraction` of rows as a test set.
fn holdout_split(table: &Table, fraction: f64, seed: u64) -> CliResult<(Table, Option<Table>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(CliError::usage(format!("--holdout {fraction} must lie in [0, 1)")));
    }
    if fraction == 0.0 {
        return Ok((table.clone(), None));
    }
    let n = table.n_rows();
    let n_test = (fraction * n as f64).round() as usize;
    if n_test == 0 || n_test + 2 > n {
        return Err(CliError::usage(format!("--holdout {fraction} leaves no usable split of {n} rows")));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut RngStream::new(seed, HOLDOUT_STREAM));
    let (test, train) = rows.split_at_mut(n_test);
    train.sort_unstable();
    test.sort_unstable();
    Ok((table.select_rows(train), Some(table.select_rows(test))))
}

fn rows_block(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let _ = writeln!(s, "{:<20} {:>12.4} {:>12.4} {:>12.4}", r.name, r.mean, r.lower, r.upper);
    }
    s
}

fn delimited_rows(rows: &[SummaryRow]) -> String {
    let mut s = String::from("parameter\tmean\tlower\tupper\n");
    for r in rows {
        let _ = writeln!(s, "{}\t{}\t{}\t{}", r.name, r.mean, r.lower, r.upper);
    }
    s
}

/// Per-row values as `row<TAB>name` lines, rows numbered from 1.
pub fn column_text(name: &str, values: &[f64]) -> String {
    let mut s = format!("row\t{name}\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(s, "{}\t{v}", i + 1);
    }
    s
}

/// Sum-to-zero effect summaries of every categorical fixed effect.
pub fn factor_effects(draws: &PosteriorDraws, encoding: &cspbart_core::Encoding, level: f64) -> CliResult<Vec<(String, Vec<SummaryRow>)>> {
    if draws.mode == Mode::Bart {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for term in &encoding.fixed {
        if let TermEncoding::Factor { name, .. } = term {
            out.push((name.clone(), sum_to_zero(draws, encoding, name)?.summarize(level)?));
        }
    }
    Ok(out)
}

pub fn run(args: FitArgs) -> CliResult<()> {
    let cfg = FitConfig::resolve(args)?;
    let mode: Mode = cfg.mode.parse()?;
    let hyper = cfg.hyperparameters();
    hyper.validate()?;

    let table = load_table(Path::new(&cfg.data), cfg.delimiter())?;
    let formula = parse_formula(&cfg.formula)?;
    let spec = ModelSpec::resolve(formula, &X2Selection::parse(&cfg.x2), &table, mode == Mode::Ssp)?;
    let (train, test) = holdout_split(&table, cfg.holdout, cfg.seed)?;
    let design = encode_design(&train, &spec)?;
    for w in &design.warnings {
        eprintln!("warning: {w}");
    }
    let data = design.model_data()?;
    let draws = run_chain(&data, &hyper, mode, cfg.response(), RngStream::new(cfg.seed, 0))?;

    let out = PathBuf::from(&cfg.out);
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        version: artifact::tool_version().into(),
        seed: cfg.seed,
        config: cfg.clone(),
        spec: spec.clone(),
        encoding: design.encoding.clone(),
        training_rows: data.n(),
        dropped_rows: design.dropped_rows,
        holdout_rows: test.as_ref().map_or(0, Table::n_rows),
        warnings: design.warnings.clone(),
    };
    artifact::save(&out, &manifest, &draws)?;
    let header = artifact::header(cfg.seed, &cfg);

    let summary = summarize(&draws, 0.95)?;
    artifact::write_text(&out, "summary.tsv", &header, &summary.to_delimited())?;
    let effects = factor_effects(&draws, &design.encoding, 0.95)?;
    if !effects.is_empty() {
        let rows: Vec<SummaryRow> = effects.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
        artifact::write_text(&out, "effects.tsv", &header, &delimited_rows(&rows))?;
    }
    let interactions = detect_interactions(&draws);
    artifact::write_text(&out, "interactions.tsv", &header, &interactions.to_delimited())?;
    let mut inclusion = String::from("covariate\tfraction\n");
    for i in variable_inclusion(&draws) {
        let _ = writeln!(inclusion, "{}\t{}", i.name, i.fraction);
    }
    artifact::write_text(&out, "inclusion.tsv", &header, &inclusion)?;
    let fitted = match cfg.response() {
        ResponseKind::Regression => draws.fitted_mean(),
        ResponseKind::Probit => draws.fitted_probabilities(),
    };
    artifact::write_text(&out, "fitted.tsv", &header, &column_text("fitted", &fitted))?;
    artifact::write_text(&out, "config.txt", &header, &to_config_text(&cfg))?;

    let mut report = String::new();
    let _ = writeln!(
        report,
        "cspbart {} | mode {mode} | {} | seed {}",
        artifact::tool_version(),
        if cfg.probit { "probit" } else { "regression" },
        cfg.seed
    );
    let _ = writeln!(
        report,
        "rows: {} used, {} dropped for missing values, {} held out",
        manifest.training_rows, manifest.dropped_rows, manifest.holdout_rows
    );
    let _ = writeln!(report, "kept draws: {}", draws.len());
    let _ = writeln!(report, "\nposterior summary (95% intervals{})", if summary.original_scale { ", original scale" } else { "" });
    report += &summary.to_string();
    for (name, rows) in &effects {
        let _ = writeln!(report, "\nsum-to-zero effects of {name}");
        report += &rows_block(rows);
    }
    let _ = writeln!(report, "\ninteractions");
    report += &interactions.to_string();

    if let Some(test) = test {
        let metric = holdout_metric(&draws, &design.encoding, &test, cfg.response())?;
        let _ = writeln!(report, "\n{}: {:.6} ({} rows)", metric.0, metric.1, metric.2);
        artifact::write_text(&out, "metrics.tsv", &header, &format!("metric\tvalue\trows\n{}\t{}\t{}\n", metric.0, metric.1, metric.2))?;
    }
    let _ = writeln!(report, "\nmodel written to {}", out.display());
    print!("{report}");
    Ok(())
}

fn holdout_metric(
    draws: &PosteriorDraws,
    encoding: &cspbart_core::Encoding,
    test: &Table,
    response: ResponseKind,
) -> CliResult<(&'static str, f64, usize)> {
    let mut used = encoding.covariate_columns();
    used.push(encoding.response.clone());
    let refs: Vec<&str> = used.iter().map(String::as_str).collect();
    let (test, _) = test.complete_cases(&refs)?;
    let x1 = encoding.encode_linear(&test)?;
    let (x2, warnings) = encoding.encode_x2(&test)?;
    for w in warnings {
        eprintln!("warning: holdout: {w}");
    }
    let y = test.numeric(&encoding.response)?;
    let pred = draws.predict(&x1, &x2)?;
    Ok(match response {
        ResponseKind::Regression => ("holdout rmse", rmse(&pred, &y)?, y.len()),
        ResponseKind::Probit => ("holdout misclassification", misclassification(&pred, &y)?, y.len()),
    })
}
