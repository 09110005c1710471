use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use cspbart_core::{detect_interactions, summarize, variable_inclusion, MoveKind};

use crate::artifact;
use crate::error::CliResult;
use crate::fit::factor_effects;

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    /// Model directory written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Credible interval mass.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Number of covariates and pairs to list.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

pub fn run(args: DiagnoseArgs) -> CliResult<()> {
    let (manifest, draws) = artifact::load(&args.model)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "cspbart {} | model {} (written by {}) | mode {} | seed {} | {} kept draws",
        artifact::tool_version(),
        args.model.display(),
        manifest.version,
        draws.mode,
        manifest.seed,
        draws.len()
    );
    let _ = writeln!(out, "formula: {}", manifest.spec.formula);
    let _ = writeln!(out, "tree covariates: {}", manifest.spec.x2.join(", "));

    let summary = summarize(&draws, args.level)?;
    let (lo, hi) = summary.bounds_labels();
    let _ = writeln!(out, "\nposterior summary ({lo}%-{hi}% intervals)");
    out += &summary.to_string();
    for (name, rows) in factor_effects(&draws, &manifest.encoding, args.level)? {
        let _ = writeln!(out, "\nsum-to-zero effects of {name}");
        for r in rows {
            let _ = writeln!(out, "{:<20} {:>12.4} {:>12.4} {:>12.4}", r.name, r.mean, r.lower, r.upper);
        }
    }

    let report = detect_interactions(&draws);
    let _ = writeln!(out, "\ninteractions");
    let _ = writeln!(out, "trees examined: {}", report.trees);
    let _ = writeln!(out, "  stumps {:.1}%, single covariate {:.1}%, with linear covariates {:.1}%, other {:.1}%",
        100.0 * report.stump_fraction(),
        100.0 * report.single_covariate_fraction(),
        100.0 * report.linear_interaction_fraction(),
        100.0 * report.other_fraction());
    let _ = writeln!(out, "  {:<24} {:>12} {:>12}", "pair", "same branch", "same tree");
    for p in report.top_strict(args.top) {
        let _ = writeln!(out, "  {:<24} {:>12} {:>12}", format!("{} x {}", p.first, p.second), p.same_branch, p.same_tree);
    }

    let _ = writeln!(out, "\nvariable inclusion (fraction of trees splitting on the covariate)");
    for i in variable_inclusion(&draws).into_iter().take(args.top) {
        let _ = writeln!(out, "  {:<20} {:.4}", i.name, i.fraction);
    }

    let _ = writeln!(out, "\nmove acceptance");
    for k in MoveKind::ALL {
        let proposed = draws.move_stats.proposed(k);
        if proposed > 0 {
            let accepted = draws.move_stats.accepted(k);
            let _ = writeln!(out, "  {:<14} {:>10} proposed {:>6.1}% accepted", k.to_string(), proposed, 100.0 * accepted as f64 / proposed as f64);
        }
    }
    print!("{out}");
    Ok(())
}
