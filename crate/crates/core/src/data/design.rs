use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::formula::Formula;
use super::table::{Column, ColumnData, Table};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sampler::ModelData;
use crate::tree::{CovariateKind, TreeCovariates};

/// Which columns the trees may split on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum X2Selection {
    /// Every column other than the response and grouping factors.
    Rest,
    Columns(Vec<String>),
}

impl X2Selection {
    /// `rest` (or `all`) selects the remaining columns; otherwise a comma-separated list.
    pub fn parse(text: &str) -> Self {
        let t = text.trim();
        if t.eq_ignore_ascii_case("rest") || t.eq_ignore_ascii_case("all") {
            X2Selection::Rest
        } else {
            X2Selection::Columns(
                t.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect(),
            )
        }
    }
}

/// A formula resolved against a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub formula: Formula,
    pub x2: Vec<String>,
    /// Names in both the linear terms (fixed or random slope) and `x2`.
    pub shared: BTreeSet<String>,
    /// Sorted levels of every categorical column in use.
    pub levels: BTreeMap<String, Vec<String>>,
}

impl ModelSpec {
    /// Checks every name against `table` and fills in `x2`, `shared` and the
    /// level dictionaries. With `exclude_linear`, `Rest` also leaves out the
    /// linear terms so that no covariate is shared.
    pub fn resolve(formula: Formula, selection: &X2Selection, table: &Table, exclude_linear: bool) -> Result<Self> {
        let linear: Vec<&str> = formula
            .fixed
            .iter()
            .map(String::as_str)
            .chain(formula.random.iter().filter_map(|r| r.slope.as_deref()))
            .collect();
        let groups: BTreeSet<&str> = formula.random.iter().map(|r| r.group.as_str()).collect();
        let x2: Vec<String> = match selection {
            X2Selection::Columns(cols) => cols.clone(),
            X2Selection::Rest => table
                .names()
                .into_iter()
                .filter(|n| *n != formula.response && !groups.contains(n))
                .filter(|n| !exclude_linear || !linear.contains(n))
                .map(str::to_string)
                .collect(),
        };
        if x2.is_empty() {
            return Err(Error::Data("no tree covariates selected".into()));
        }
        let mut seen = BTreeSet::new();
        if let Some(d) = x2.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::Data(format!("tree covariate `{d}` listed twice")));
        }
        if x2.contains(&formula.response) {
            return Err(Error::Data(format!("response `{}` cannot be a tree covariate", formula.response)));
        }
        let shared: BTreeSet<String> = linear.iter().filter(|n| x2.iter().any(|x| x == *n)).map(|n| n.to_string()).collect();
        let groups: BTreeSet<String> = groups.into_iter().map(str::to_string).collect();
        let spec = Self {
            shared,
            formula,
            x2,
            levels: BTreeMap::new(),
        };
        let used = spec.used_columns();
        for name in &used {
            table.column(name)?;
        }
        let refs: Vec<&str> = used.iter().map(String::as_str).collect();
        let (complete, _) = table.complete_cases(&refs)?;
        let mut spec = spec;
        for name in &used {
            let col = complete.column(name)?;
            if col.is_categorical() || groups.contains(name) {
                spec.levels.insert(name.clone(), col.levels());
            }
        }
        Ok(spec)
    }

    /// Every column the model reads, response first, without repeats.
    pub fn used_columns(&self) -> Vec<String> {
        let f = &self.formula;
        let mut out = vec![f.response.clone()];
        let names = f
            .fixed
            .iter()
            .chain(f.random.iter().flat_map(|r| r.slope.iter().chain(std::iter::once(&r.group))))
            .chain(&self.x2);
        for n in names {
            if !out.contains(n) {
                out.push(n.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TermEncoding {
    Numeric { name: String },
    /// Dummy columns for `levels[1..]`; `levels[0]` is the reference.
    Factor { name: String, levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomEncoding {
    pub slope: Option<String>,
    pub group: String,
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct X2Encoding {
    pub name: String,
    pub kind: CovariateKind,
}

/// Column layout learned from training data; re-applies to new tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub response: String,
    pub fixed: Vec<TermEncoding>,
    pub random: Vec<RandomEncoding>,
    pub x2: Vec<X2Encoding>,
}

impl Encoding {
    pub fn fixed_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for t in &self.fixed {
            match t {
                TermEncoding::Numeric { name } => out.push(name.clone()),
                TermEncoding::Factor { name, levels } => {
                    out.extend(levels[1..].iter().map(|l| format!("{name}[{l}]")));
                }
            }
        }
        out
    }

    pub fn random_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for r in &self.random {
            for l in &r.levels {
                out.push(match &r.slope {
                    Some(s) => format!("{s}:{}[{l}]", r.group),
                    None => format!("{}[{l}]", r.group),
                });
            }
        }
        out
    }

    /// Names of the stacked linear columns `[X1 | Z]`.
    pub fn linear_names(&self) -> Vec<String> {
        let mut out = self.fixed_names();
        out.extend(self.random_names());
        out
    }

    pub fn x2_names(&self) -> Vec<String> {
        self.x2.iter().map(|e| e.name.clone()).collect()
    }

    /// Columns needed to build the covariates (the response is not needed).
    pub fn covariate_columns(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |n: &String| {
            if !out.contains(n) {
                out.push(n.clone());
            }
        };
        for t in &self.fixed {
            match t {
                TermEncoding::Numeric { name } | TermEncoding::Factor { name, .. } => push(name),
            }
        }
        for r in &self.random {
            if let Some(s) = &r.slope {
                push(s);
            }
            push(&r.group);
        }
        for e in &self.x2 {
            push(&e.name);
        }
        out
    }

    /// Fixed-effect design. Unseen factor levels are an error.
    pub fn encode_fixed(&self, table: &Table) -> Result<Matrix> {
        let n = table.n_rows();
        let mut cols = Vec::new();
        for t in &self.fixed {
            match t {
                TermEncoding::Numeric { name } => cols.push(table.numeric(name)?),
                TermEncoding::Factor { name, levels } => {
                    let col = table.column(name)?;
                    let mut dummies = vec![vec![0.0; n]; levels.len() - 1];
                    for r in 0..n {
                        let label = required_label(col, r)?;
                        match levels.iter().position(|l| *l == label) {
                            Some(0) => {}
                            Some(k) => dummies[k - 1][r] = 1.0,
                            None => {
                                return Err(Error::Data(format!(
                                    "level `{label}` of `{name}` was not seen in training"
                                )))
                            }
                        }
                    }
                    cols.extend(dummies);
                }
            }
        }
        Matrix::from_columns(n, &cols)
    }

    /// Random-effect design. Rows in an unseen group get zero columns.
    pub fn encode_random(&self, table: &Table) -> Result<Matrix> {
        let n = table.n_rows();
        let mut cols = Vec::new();
        for re in &self.random {
            let group = table.column(&re.group)?;
            let slope = re.slope.as_ref().map(|s| table.numeric(s)).transpose()?;
            let mut z = vec![vec![0.0; n]; re.levels.len()];
            for r in 0..n {
                let label = required_label(group, r)?;
                if let Some(k) = re.levels.iter().position(|l| *l == label) {
                    z[k][r] = slope.as_ref().map_or(1.0, |s| s[r]);
                }
            }
            cols.extend(z);
        }
        Matrix::from_columns(n, &cols)
    }

    /// Stacked `[X1 | Z]`.
    pub fn encode_linear(&self, table: &Table) -> Result<Matrix> {
        self.encode_fixed(table)?.hstack(&self.encode_random(table)?)
    }

    /// Tree covariates. An unseen categorical level is coded `-1`, which no
    /// split rule selects, and reported in the returned warnings.
    pub fn encode_x2(&self, table: &Table) -> Result<(TreeCovariates, Vec<String>)> {
        let n = table.n_rows();
        let mut cols = Vec::with_capacity(self.x2.len());
        let mut warnings = Vec::new();
        for e in &self.x2 {
            match &e.kind {
                CovariateKind::Continuous => cols.push(table.numeric(&e.name)?),
                CovariateKind::Categorical { levels } => {
                    let col = table.column(&e.name)?;
                    let mut v = Vec::with_capacity(n);
                    let mut unseen = BTreeSet::new();
                    for r in 0..n {
                        let label = required_label(col, r)?;
                        match levels.iter().position(|l| *l == label) {
                            Some(k) => v.push(k as f64),
                            None => {
                                v.push(-1.0);
                                unseen.insert(label);
                            }
                        }
                    }
                    if !unseen.is_empty() {
                        let list: Vec<String> = unseen.into_iter().collect();
                        warnings.push(format!(
                            "`{}` has levels not seen in training: {}",
                            e.name,
                            list.join(", ")
                        ));
                    }
                    cols.push(v);
                }
            }
        }
        let x2 = TreeCovariates::new(
            self.x2_names(),
            self.x2.iter().map(|e| e.kind.clone()).collect(),
            Matrix::from_columns(n, &cols)?,
        )?;
        Ok((x2, warnings))
    }
}

fn required_label(col: &Column, row: usize) -> Result<String> {
    col.label(row)
        .ok_or_else(|| Error::Data(format!("missing value in `{}` row {}", col.name, row + 1)))
}

/// Encoded training data.
#[derive(Debug, Clone)]
pub struct Design {
    pub response: Vec<f64>,
    pub x1: Matrix,
    pub z: Matrix,
    pub x2: TreeCovariates,
    /// X2 positions of shared covariates.
    pub shared: BTreeSet<usize>,
    /// X2 positions of categorical linear variables with more than two levels.
    pub categorical_x1: BTreeSet<usize>,
    pub encoding: Encoding,
    pub dropped_rows: usize,
    pub warnings: Vec<String>,
}

impl Design {
    pub fn model_data(&self) -> Result<ModelData> {
        let x1 = self.x1.hstack(&self.z)?;
        let mut data = ModelData::new(
            self.response.clone(),
            x1,
            self.encoding.linear_names(),
            self.x2.clone(),
        )?;
        data.n_fixed = self.x1.cols();
        data.with_shared(self.shared.clone())?
            .with_categorical_x1(self.categorical_x1.clone())
    }
}

/// Builds `X1`, `Z`, `X2` and the response from `table`. Rows with a missing
/// value in any used column are dropped. Factor levels are ordered
/// lexicographically; the first is the dummy-coding reference.
pub fn encode_design(table: &Table, spec: &ModelSpec) -> Result<Design> {
    let used = spec.used_columns();
    let refs: Vec<&str> = used.iter().map(String::as_str).collect();
    let (table, dropped_rows) = table.complete_cases(&refs)?;
    let f = &spec.formula;

    let response = table.numeric(&f.response)?;

    let mut fixed = Vec::new();
    for name in &f.fixed {
        let col = table.column(name)?;
        let levels = col.levels();
        if levels.len() < 2 {
            return Err(Error::Data(format!("linear term `{name}` is constant")));
        }
        fixed.push(match col.data {
            ColumnData::Numeric(_) => TermEncoding::Numeric { name: name.clone() },
            ColumnData::Categorical(_) => TermEncoding::Factor {
                name: name.clone(),
                levels,
            },
        });
    }

    let mut random = Vec::new();
    for r in &f.random {
        let group = table.column(&r.group)?;
        let levels = group.levels();
        if levels.len() < 2 {
            return Err(Error::Data(format!("grouping factor `{}` has a single level", r.group)));
        }
        if let Some(s) = &r.slope {
            if table.column(s)?.is_categorical() {
                return Err(Error::Data(format!("random slope `{s}` must be numeric")));
            }
        }
        random.push(RandomEncoding {
            slope: r.slope.clone(),
            group: r.group.clone(),
            levels,
        });
    }

    let mut x2 = Vec::new();
    for name in &spec.x2 {
        let col = table.column(name)?;
        let kind = match col.data {
            ColumnData::Numeric(_) => CovariateKind::Continuous,
            ColumnData::Categorical(_) => CovariateKind::Categorical { levels: col.levels() },
        };
        x2.push(X2Encoding {
            name: name.clone(),
            kind,
        });
    }

    let encoding = Encoding {
        response: f.response.clone(),
        fixed,
        random,
        x2,
    };
    let x1 = encoding.encode_fixed(&table)?;
    let z = encoding.encode_random(&table)?;
    let (x2, mut warnings) = encoding.encode_x2(&table)?;

    let shared: BTreeSet<usize> = spec.shared.iter().filter_map(|n| x2.position(n)).collect();
    let categorical_x1: BTreeSet<usize> = encoding
        .fixed
        .iter()
        .filter_map(|t| match t {
            TermEncoding::Factor { name, levels } if levels.len() > 2 => x2.position(name),
            _ => None,
        })
        .collect();

    for j in 0..x1.cols() {
        let c = x1.column(j);
        if c.iter().all(|&v| v == c[0]) {
            return Err(Error::Data(format!(
                "linear column `{}` is constant",
                encoding.fixed_names()[j]
            )));
        }
    }
    warnings.extend(monotone_duplicates(&x2));

    Ok(Design {
        response,
        x1,
        z,
        x2,
        shared,
        categorical_x1,
        encoding,
        dropped_rows,
        warnings,
    })
}

/// Warnings for pairs of continuous tree covariates where one is a strictly
/// monotone function of the other. Such pairs induce identical partitions.
fn monotone_duplicates(x2: &TreeCovariates) -> Vec<String> {
    let cont: Vec<usize> = (0..x2.n_cols()).filter(|&c| !x2.kind(c).is_categorical()).collect();
    let cols: Vec<Vec<f64>> = cont.iter().map(|&c| x2.values().column(c)).collect();
    let mut out = Vec::new();
    for a in 0..cont.len() {
        let mut order: Vec<usize> = (0..x2.n_rows()).collect();
        order.sort_by(|&i, &j| cols[a][i].total_cmp(&cols[a][j]));
        for b in a + 1..cont.len() {
            if same_ordering(&cols[a], &cols[b], &order) {
                out.push(format!(
                    "tree covariates `{}` and `{}` are monotone transforms of each other",
                    x2.names()[cont[a]],
                    x2.names()[cont[b]]
                ));
            }
        }
    }
    out
}

fn same_ordering(a: &[f64], b: &[f64], order: &[usize]) -> bool {
    let mut direction = 0.0;
    for w in order.windows(2) {
        let da = a[w[1]] - a[w[0]];
        let db = b[w[1]] - b[w[0]];
        if da == 0.0 {
            if db != 0.0 {
                return false;
            }
            continue;
        }
        let s = db.signum() * (db != 0.0) as u8 as f64;
        if s == 0.0 || (direction != 0.0 && s != direction) {
            return false;
        }
        direction = s;
    }
    direction != 0.0
}
