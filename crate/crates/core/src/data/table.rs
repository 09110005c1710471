use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn numeric(name: &str, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            data: ColumnData::Numeric(values.into_iter().map(Some).collect()),
        }
    }

    pub fn categorical(name: &str, values: &[&str]) -> Self {
        Self {
            name: name.into(),
            data: ColumnData::Categorical(values.iter().map(|v| Some((*v).to_string())).collect()),
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.data, ColumnData::Categorical(_))
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match &self.data {
            ColumnData::Numeric(v) => v[row].is_none(),
            ColumnData::Categorical(v) => v[row].is_none(),
        }
    }

    /// Distinct non-missing levels, sorted lexicographically.
    pub fn levels(&self) -> Vec<String> {
        match &self.data {
            ColumnData::Numeric(v) => {
                let mut vals: Vec<f64> = v.iter().flatten().copied().collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                let set: BTreeSet<String> = vals.iter().map(|x| format_number(*x)).collect();
                set.into_iter().collect()
            }
            ColumnData::Categorical(v) => {
                let set: BTreeSet<&String> = v.iter().flatten().collect();
                set.into_iter().cloned().collect()
            }
        }
    }

    /// Value at `row` rendered as a level label.
    pub fn label(&self, row: usize) -> Option<String> {
        match &self.data {
            ColumnData::Numeric(v) => v[row].map(format_number),
            ColumnData::Categorical(v) => v[row].clone(),
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        let data = match &self.data {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical(v) => ColumnData::Categorical(rows.iter().map(|&r| v[r].clone()).collect()),
        };
        Column {
            name: self.name.clone(),
            data,
        }
    }
}

fn format_number(x: f64) -> String {
    format!("{x}")
}

fn is_missing_token(s: &str) -> bool {
    s.is_empty() || s == "NA"
}

/// A rectangular table of named, typed columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    columns: Vec<Column>,
    n_rows: usize,
}

impl Table {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Column::len);
        if let Some(c) = columns.iter().find(|c| c.len() != n_rows) {
            return Err(Error::DimensionMismatch(format!(
                "column `{}` has {} rows, expected {n_rows}",
                c.name,
                c.len()
            )));
        }
        let mut seen = BTreeSet::new();
        if let Some(c) = columns.iter().find(|c| !seen.insert(c.name.as_str())) {
            return Err(Error::Data(format!("duplicate column name `{}`", c.name)));
        }
        Ok(Self { columns, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Data(format!("column `{name}` not found")))
    }

    pub fn numeric(&self, name: &str) -> Result<Vec<f64>> {
        match &self.column(name)?.data {
            ColumnData::Numeric(v) => v
                .iter()
                .enumerate()
                .map(|(i, x)| x.ok_or_else(|| Error::Data(format!("missing value in `{name}` row {}", i + 1))))
                .collect(),
            ColumnData::Categorical(_) => Err(Error::Data(format!("column `{name}` is not numeric"))),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Table {
        Table {
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            n_rows: rows.len(),
        }
    }

    /// Keeps rows with no missing value in the `used` columns. Returns the
    /// reduced table and the number of dropped rows.
    pub fn complete_cases(&self, used: &[&str]) -> Result<(Table, usize)> {
        let cols: Vec<&Column> = used.iter().map(|n| self.column(n)).collect::<Result<_>>()?;
        let keep: Vec<usize> = (0..self.n_rows)
            .filter(|&r| cols.iter().all(|c| !c.is_missing(r)))
            .collect();
        if keep.is_empty() {
            return Err(Error::Data("no complete rows remain".into()));
        }
        Ok((self.select_rows(&keep), self.n_rows - keep.len()))
    }

    /// Reads delimited text with a header row. A column is numeric when
    /// every non-missing cell parses as a number; empty cells and `NA` are
    /// missing.
    pub fn from_reader<R: Read>(reader: R, delimiter: u8) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(Error::Data("missing header row".into()));
        }
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| match e.kind() {
                csv::ErrorKind::UnequalLengths { .. } => {
                    Error::Data(format!("row {} has a different number of fields than the header", i + 2))
                }
                _ => Error::Csv(e),
            })?;
            for (j, field) in rec.iter().enumerate() {
                raw[j].push(field.to_string());
            }
        }
        let columns = headers
            .into_iter()
            .zip(raw)
            .map(|(name, cells)| {
                let parsed: Option<Vec<Option<f64>>> = cells
                    .iter()
                    .map(|c| {
                        if is_missing_token(c) {
                            Some(None)
                        } else {
                            c.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some)
                        }
                    })
                    .collect();
                let data = match parsed {
                    Some(v) => ColumnData::Numeric(v),
                    None => ColumnData::Categorical(
                        cells
                            .into_iter()
                            .map(|c| (!is_missing_token(&c)).then_some(c))
                            .collect(),
                    ),
                };
                Column { name, data }
            })
            .collect();
        Table::new(columns)
    }
}

/// Loads a delimited file (see [`Table::from_reader`]).
pub fn load_table(path: &Path, delimiter: u8) -> Result<Table> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot read `{}`: {e}", path.display())))?;
    let table = Table::from_reader(std::io::BufReader::new(file), delimiter)?;
    if table.n_rows() == 0 {
        return Err(Error::Data(format!("`{}` has no data rows", path.display())));
    }
    Ok(table)
}
