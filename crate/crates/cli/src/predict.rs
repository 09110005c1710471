use std::path::PathBuf;

use clap::Args;
use cspbart_core::{load_table, ResponseKind};
use serde::Serialize;

use crate::artifact;
use crate::error::{CliError, CliResult};

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Model directory written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Delimited data file with the model's covariate columns.
    #[arg(long)]
    pub data: PathBuf,
    /// Input is tab-delimited.
    #[arg(long)]
    pub tab: bool,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PredictConfig<'a> {
    model: String,
    data: String,
    model_config: &'a crate::fit::FitConfig,
}

pub fn run(args: PredictArgs) -> CliResult<()> {
    let (manifest, draws) = artifact::load(&args.model)?;
    let enc = &manifest.encoding;
    let table = load_table(&args.data, if args.tab { b'\t' } else { b',' })?;
    let columns = enc.covariate_columns();
    for c in &columns {
        if table.column(c).is_err() {
            return Err(CliError::data(format!("covariate `{c}` is missing from `{}`", args.data.display())));
        }
    }
    let complete: Vec<usize> = (0..table.n_rows())
        .filter(|&r| columns.iter().all(|c| !table.column(c).map_or(true, |col| col.is_missing(r))))
        .collect();
    if complete.len() < table.n_rows() {
        eprintln!("warning: {} rows with missing covariates skipped", table.n_rows() - complete.len());
    }
    if complete.is_empty() {
        return Err(CliError::data("no rows with complete covariates"));
    }
    let rows = table.select_rows(&complete);
    let x1 = enc.encode_linear(&rows)?;
    let (x2, warnings) = enc.encode_x2(&rows)?;
    for w in warnings {
        eprintln!("warning: {w}; such rows follow the right branch of splits on that covariate");
    }
    let pred = draws.predict(&x1, &x2)?;
    let name = match draws.response {
        ResponseKind::Regression => "prediction",
        ResponseKind::Probit => "probability",
    };
    let config = PredictConfig {
        model: args.model.to_string_lossy().into_owned(),
        data: args.data.to_string_lossy().into_owned(),
        model_config: &manifest.config,
    };
    let mut text = artifact::header(manifest.seed, &config);
    text += &format!("row\t{name}\n");
    for (r, v) in complete.iter().zip(&pred) {
        text += &format!("{}\t{v}\n", r + 1);
    }
    match &args.out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::data(format!("cannot write `{}`: {e}", p.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}
