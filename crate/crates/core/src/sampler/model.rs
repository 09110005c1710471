use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::tree::TreeCovariates;

/// Everything a chain needs about the data: response, linear design and
/// tree covariates with their roles.
#[derive(Debug, Clone)]
pub struct ModelData {
    pub response: Vec<f64>,
    /// Linear design; fixed effects first, then any random-effect columns.
    pub x1: Matrix,
    pub x1_names: Vec<String>,
    /// Number of leading fixed-effect columns in `x1`.
    pub n_fixed: usize,
    pub x2: TreeCovariates,
    /// Tree covariates (X2 column indices) that also enter the linear design.
    pub shared: BTreeSet<usize>,
    /// Tree covariates that are categorical linear-design variables with
    /// more than two levels.
    pub categorical_x1: BTreeSet<usize>,
}

impl ModelData {
    pub fn new(response: Vec<f64>, x1: Matrix, x1_names: Vec<String>, x2: TreeCovariates) -> Result<Self> {
        let n_fixed = x1.cols();
        let data = Self {
            response,
            x1,
            x1_names,
            n_fixed,
            x2,
            shared: BTreeSet::new(),
            categorical_x1: BTreeSet::new(),
        };
        data.check()?;
        Ok(data)
    }

    /// Trees only, no linear design.
    pub fn trees_only(response: Vec<f64>, x2: TreeCovariates) -> Result<Self> {
        let n = response.len();
        Self::new(response, Matrix::zeros(n, 0), Vec::new(), x2)
    }

    pub fn with_shared(mut self, shared: BTreeSet<usize>) -> Result<Self> {
        self.shared = shared;
        self.check()?;
        Ok(self)
    }

    pub fn with_categorical_x1(mut self, categorical: BTreeSet<usize>) -> Result<Self> {
        self.categorical_x1 = categorical;
        self.check()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn p1(&self) -> usize {
        self.x1.cols()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.response.len();
        if n == 0 {
            return Err(Error::Data("no observations".into()));
        }
        if self.x1.rows() != n || self.x2.n_rows() != n {
            return Err(Error::DimensionMismatch(format!(
                "response has {n} rows, X1 has {}, X2 has {}",
                self.x1.rows(),
                self.x2.n_rows()
            )));
        }
        if self.x1_names.len() != self.x1.cols() {
            return Err(Error::DimensionMismatch(format!(
                "{} names for {} linear columns",
                self.x1_names.len(),
                self.x1.cols()
            )));
        }
        if self.n_fixed > self.x1.cols() {
            return Err(Error::DimensionMismatch("more fixed effects than linear columns".into()));
        }
        if let Some(&c) = self.shared.iter().chain(&self.categorical_x1).find(|&&c| c >= self.x2.n_cols()) {
            return Err(Error::DimensionMismatch(format!(
                "covariate role refers to tree column {c} of {}",
                self.x2.n_cols()
            )));
        }
        if self.response.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("response contains non-finite values".into()));
        }
        for j in 0..self.x1.cols() {
            let col = self.x1.column(j);
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "linear column `{}` contains non-finite values",
                    self.x1_names[j]
                )));
            }
            if col.iter().all(|&v| v == col[0]) {
                if col[0] == 1.0 {
                    return Err(Error::InterceptNotPermitted);
                }
                return Err(Error::Data(format!(
                    "linear column `{}` is constant",
                    self.x1_names[j]
                )));
            }
        }
        Ok(())
    }
}
