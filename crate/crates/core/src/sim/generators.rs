use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::random::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Generator {
    /// `10 sin(π x1 x2) + 20 (x3 − 0.5)² + 10 x4 + 5 x5`.
    Friedman,
    /// `10 x1 − 5 x2` plus a four-leaf tree on `x1, x2, x3`.
    TreeSim,
}

impl Generator {
    pub fn as_str(self) -> &'static str {
        match self {
            Generator::Friedman => "friedman",
            Generator::TreeSim => "tree-sim",
        }
    }

    fn min_p(self) -> usize {
        match self {
            Generator::Friedman => 5,
            Generator::TreeSim => 3,
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "friedman" => Ok(Generator::Friedman),
            "tree-sim" | "treesim" | "tree" => Ok(Generator::TreeSim),
            other => Err(Error::InvalidParameter(format!(
                "unknown generator `{other}` (expected friedman or tree-sim)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub generator: Generator,
    pub n: usize,
    pub p: usize,
    /// Noise variance; zero gives a noise-free response.
    pub sigma2: f64,
    pub replicates: usize,
}

impl SimConfig {
    /// Reduced protocol: 500 rows, 10 covariates, unit noise, 10 replicates.
    pub fn desk(generator: Generator) -> Self {
        Self {
            generator,
            n: 500,
            p: 10,
            sigma2: 1.0,
            replicates: 10,
        }
    }

    /// Full protocol: 1000 rows and 50 replicates.
    pub fn full(generator: Generator) -> Self {
        Self {
            n: 1000,
            replicates: 50,
            ..Self::desk(generator)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < self.generator.min_p() {
            return Err(Error::InvalidParameter(format!(
                "{} needs at least {} covariates, got {}",
                self.generator,
                self.generator.min_p(),
                self.p
            )));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be non-negative, got {}",
                self.sigma2
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidParameter("at least two rows are required".into()));
        }
        Ok(())
    }
}

/// The linear coefficients that generated the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub names: Vec<String>,
    /// Zero-based covariate columns the coefficients multiply.
    pub columns: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    /// Covariate names `x1..xp`.
    pub names: Vec<String>,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub truth: Truth,
}

/// Noise-free Friedman mean for one row.
pub fn friedman_mean(x: &[f64]) -> f64 {
    10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
}

/// Noise-free tree-simulation mean for one row.
pub fn tree_sim_mean(x: &[f64]) -> f64 {
    let tree = if x[0] < 0.5 {
        if x[1] < 0.5 {
            4.0
        } else {
            -7.0
        }
    } else if x[2] < 0.5 {
        3.0
    } else {
        -8.0
    };
    10.0 * x[0] - 5.0 * x[1] + tree
}

fn generate(config: &SimConfig, mean: fn(&[f64]) -> f64, truth: Truth, rng: &mut RngStream) -> Result<SimData> {
    config.validate()?;
    let (n, p) = (config.n, config.p);
    let mut data = Vec::with_capacity(n * p);
    for _ in 0..n * p {
        data.push(rng.uniform());
    }
    let x = Matrix::from_row_major(n, p, data)?;
    let sd = config.sigma2.sqrt();
    let y = (0..n).map(|i| mean(x.row(i)) + sd * rng.standard_normal()).collect();
    Ok(SimData {
        names: (1..=p).map(|j| format!("x{j}")).collect(),
        x,
        y,
        truth,
    })
}

/// Friedman data with uniform covariates; the linear truth is `β4 = 10, β5 = 5`.
pub fn gen_friedman(config: &SimConfig, rng: &mut RngStream) -> Result<SimData> {
    let truth = Truth {
        names: vec!["x4".into(), "x5".into()],
        columns: vec![3, 4],
        values: vec![10.0, 5.0],
    };
    generate(config, friedman_mean, truth, rng)
}

/// Tree-structured data with uniform covariates; the linear truth is
/// `β1 = 10, β2 = −5`.
pub fn gen_tree_sim(config: &SimConfig, rng: &mut RngStream) -> Result<SimData> {
    let truth = Truth {
        names: vec!["x1".into(), "x2".into()],
        columns: vec![0, 1],
        values: vec![10.0, -5.0],
    };
    generate(config, tree_sim_mean, truth, rng)
}

impl Generator {
    pub fn generate(self, config: &SimConfig, rng: &mut RngStream) -> Result<SimData> {
        match self {
            Generator::Friedman => gen_friedman(config, rng),
            Generator::TreeSim => gen_tree_sim(config, rng),
        }
    }
}
