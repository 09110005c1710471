//! Posterior summaries, interaction counts, variable usage and fit metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Encoding, TermEncoding};
use crate::error::{Error, Result};
use crate::sampler::{PosteriorDraws, ResponseKind};
use crate::tree::Tree;

/// Unordered covariate pair, smaller index first.
pub type Pair = (usize, usize);

fn pair(a: usize, b: usize) -> Pair {
    (a.min(b), a.max(b))
}

/// Covariate pairs of one tree: `(loose, strict)`. Loose pairs co-occur
/// anywhere in the tree; strict pairs co-occur on a root-to-leaf path.
pub fn tree_pairs(tree: &Tree) -> (BTreeSet<Pair>, BTreeSet<Pair>) {
    let covs: Vec<usize> = tree.covariates().into_iter().collect();
    let mut loose = BTreeSet::new();
    for (i, &a) in covs.iter().enumerate() {
        for &b in &covs[i + 1..] {
            loose.insert(pair(a, b));
        }
    }
    let mut strict = BTreeSet::new();
    for (_, path) in tree.terminal_paths() {
        let on_path: BTreeSet<usize> = path.into_iter().collect();
        let on_path: Vec<usize> = on_path.into_iter().collect();
        for (i, &a) in on_path.iter().enumerate() {
            for &b in &on_path[i + 1..] {
                strict.insert(pair(a, b));
            }
        }
    }
    (loose, strict)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreeCategory {
    Stump,
    SingleCovariate,
    /// Two or more covariates, at least one of them in the linear design.
    LinearInteraction,
    Other,
}

pub fn tree_category(tree: &Tree, shared: &BTreeSet<usize>) -> TreeCategory {
    let covs = tree.covariates();
    match covs.len() {
        0 => TreeCategory::Stump,
        1 => TreeCategory::SingleCovariate,
        _ if covs.iter().any(|c| shared.contains(c)) => TreeCategory::LinearInteraction,
        _ => TreeCategory::Other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCount {
    pub first: String,
    pub second: String,
    /// Trees containing both covariates.
    pub same_tree: u64,
    /// Trees with both covariates on one root-to-leaf path.
    pub same_branch: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionReport {
    pub trees: u64,
    pub stumps: u64,
    pub single_covariate: u64,
    pub linear_interaction: u64,
    pub other: u64,
    /// Sorted by strict count, then loose count, descending.
    pub pairs: Vec<PairCount>,
}

impl InteractionReport {
    fn fraction(&self, count: u64) -> f64 {
        if self.trees == 0 {
            0.0
        } else {
            count as f64 / self.trees as f64
        }
    }

    pub fn stump_fraction(&self) -> f64 {
        self.fraction(self.stumps)
    }

    pub fn single_covariate_fraction(&self) -> f64 {
        self.fraction(self.single_covariate)
    }

    pub fn linear_interaction_fraction(&self) -> f64 {
        self.fraction(self.linear_interaction)
    }

    pub fn other_fraction(&self) -> f64 {
        self.fraction(self.other)
    }

    pub fn top_strict(&self, n: usize) -> &[PairCount] {
        &self.pairs[..n.min(self.pairs.len())]
    }

    /// Tab-separated pair table with a header row.
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("first\tsecond\tsame_tree\tsame_branch\n");
        for p in &self.pairs {
            out += &format!("{}\t{}\t{}\t{}\n", p.first, p.second, p.same_tree, p.same_branch);
        }
        out
    }
}

impl fmt::Display for InteractionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "trees examined: {}", self.trees)?;
        writeln!(f, "  stumps:                      {:6.1}%", 100.0 * self.stump_fraction())?;
        writeln!(f, "  single covariate:            {:6.1}%", 100.0 * self.single_covariate_fraction())?;
        writeln!(f, "  interactions with linear:    {:6.1}%", 100.0 * self.linear_interaction_fraction())?;
        writeln!(f, "  other interactions:          {:6.1}%", 100.0 * self.other_fraction())?;
        writeln!(f, "top pairs (same branch / same tree):")?;
        for p in self.top_strict(10) {
            writeln!(f, "  {:>12} x {:<12} {:8} {:8}", p.first, p.second, p.same_branch, p.same_tree)?;
        }
        Ok(())
    }
}

/// Interaction counts over `forests` (one forest per kept draw).
pub fn count_interactions(forests: &[Vec<Tree>], names: &[String], shared: &BTreeSet<usize>) -> InteractionReport {
    let mut counts: BTreeMap<Pair, (u64, u64)> = BTreeMap::new();
    let mut report = InteractionReport {
        trees: 0,
        stumps: 0,
        single_covariate: 0,
        linear_interaction: 0,
        other: 0,
        pairs: Vec::new(),
    };
    for tree in forests.iter().flatten() {
        report.trees += 1;
        match tree_category(tree, shared) {
            TreeCategory::Stump => report.stumps += 1,
            TreeCategory::SingleCovariate => report.single_covariate += 1,
            TreeCategory::LinearInteraction => report.linear_interaction += 1,
            TreeCategory::Other => report.other += 1,
        }
        let (loose, strict) = tree_pairs(tree);
        for p in loose {
            counts.entry(p).or_default().0 += 1;
        }
        for p in strict {
            counts.entry(p).or_default().1 += 1;
        }
    }
    let name = |c: usize| names.get(c).cloned().unwrap_or_else(|| format!("#{c}"));
    let mut pairs: Vec<(Pair, (u64, u64))> = counts.into_iter().collect();
    pairs.sort_by(|a, b| (b.1 .1, b.1 .0).cmp(&(a.1 .1, a.1 .0)).then(a.0.cmp(&b.0)));
    report.pairs = pairs
        .into_iter()
        .map(|((a, b), (same_tree, same_branch))| PairCount {
            first: name(a),
            second: name(b),
            same_tree,
            same_branch,
        })
        .collect();
    report
}

pub fn detect_interactions(draws: &PosteriorDraws) -> InteractionReport {
    count_interactions(&draws.forests, &draws.x2_names, &draws.shared)
}

/// Percentile by linear interpolation between order statistics of `sorted`
/// (the usual "type 7" definition).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub level: f64,
    pub original_scale: bool,
    pub rows: Vec<SummaryRow>,
}

/// Percent label without float noise: 2.5, 25, 97.5.
fn percent_label(p: f64) -> String {
    let s = format!("{:.4}", p);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl PosteriorSummary {
    /// Labels of the lower and upper interval percentiles.
    pub fn bounds_labels(&self) -> (String, String) {
        let lo = 50.0 * (1.0 - self.level);
        (percent_label(lo), percent_label(100.0 - lo))
    }

    pub fn row(&self, name: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_delimited(&self) -> String {
        let (lo, hi) = self.bounds_labels();
        let mut out = format!("parameter\tmean\tq{lo}\tq{hi}\n");
        for r in &self.rows {
            out += &format!("{}\t{}\t{}\t{}\n", r.name, r.mean, r.lower, r.upper);
        }
        out
    }
}

impl fmt::Display for PosteriorSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (lo, hi) = self.bounds_labels();
        writeln!(f, "{:<20} {:>12} {:>12} {:>12}", "parameter", "mean", format!("{lo}%"), format!("{hi}%"))?;
        for r in &self.rows {
            writeln!(f, "{:<20} {:>12.4} {:>12.4} {:>12.4}", r.name, r.mean, r.lower, r.upper)?;
        }
        Ok(())
    }
}

/// Mean and central `level` interval of one parameter's draws.
pub fn summarize_values(name: &str, values: &[f64], level: f64) -> Result<SummaryRow> {
    if values.is_empty() {
        return Err(Error::Data(format!("no draws for `{name}`")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("credibility level {level} outside (0, 1)")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(SummaryRow {
        name: name.into(),
        mean: values.iter().sum::<f64>() / values.len() as f64,
        lower: percentile(&sorted, tail),
        upper: percentile(&sorted, 1.0 - tail),
    })
}

/// Summaries of the named columns of a draw matrix (one row per draw).
pub fn summarize_columns(names: &[String], draws: &[Vec<f64>], level: f64) -> Result<Vec<SummaryRow>> {
    names
        .iter()
        .enumerate()
        .map(|(j, n)| {
            let col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            summarize_values(n, &col, level)
        })
        .collect()
}

/// Linear coefficients and, in regression mode, `sigma2`.
pub fn summarize(draws: &PosteriorDraws, level: f64) -> Result<PosteriorSummary> {
    if draws.len() < 2 {
        return Err(Error::Data(format!("{} kept draws; at least 2 are needed", draws.len())));
    }
    let mut rows = summarize_columns(&draws.x1_names, &draws.beta, level)?;
    if draws.response == ResponseKind::Regression {
        rows.push(summarize_values("sigma2", &draws.sigma2, level)?);
    }
    Ok(PosteriorSummary {
        level,
        original_scale: draws.response == ResponseKind::Regression,
        rows,
    })
}

/// Level effects with the reference fixed at 0, shifted to sum to zero.
/// `contrasts` are the non-reference effects.
pub fn center_effects(contrasts: &[f64]) -> Vec<f64> {
    let mut effects = Vec::with_capacity(contrasts.len() + 1);
    effects.push(0.0);
    effects.extend_from_slice(contrasts);
    let mean = effects.iter().sum::<f64>() / effects.len() as f64;
    effects.iter().map(|e| e - mean).collect()
}

/// Per-draw sum-to-zero level effects of a categorical fixed effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEffects {
    pub factor: String,
    pub names: Vec<String>,
    /// One row per draw, one column per level.
    pub draws: Vec<Vec<f64>>,
}

impl LevelEffects {
    pub fn summarize(&self, level: f64) -> Result<Vec<SummaryRow>> {
        summarize_columns(&self.names, &self.draws, level)
    }
}

pub fn sum_to_zero(draws: &PosteriorDraws, encoding: &Encoding, factor: &str) -> Result<LevelEffects> {
    let mut offset = 0;
    for term in &encoding.fixed {
        match term {
            TermEncoding::Numeric { name } if name == factor => {
                return Err(Error::InvalidParameter(format!("`{factor}` is not categorical")));
            }
            TermEncoding::Numeric { .. } => offset += 1,
            TermEncoding::Factor { name, levels } if name == factor => {
                let k = levels.len() - 1;
                let rows = draws
                    .beta
                    .iter()
                    .map(|b| {
                        b.get(offset..offset + k)
                            .map(center_effects)
                            .ok_or_else(|| Error::DimensionMismatch("draws do not match the encoding".into()))
                    })
                    .collect::<Result<_>>()?;
                return Ok(LevelEffects {
                    factor: factor.into(),
                    names: levels.iter().map(|l| format!("{factor}[{l}]")).collect(),
                    draws: rows,
                });
            }
            TermEncoding::Factor { levels, .. } => offset += levels.len() - 1,
        }
    }
    Err(Error::InvalidParameter(format!("`{factor}` is not a linear term")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    pub covariate: usize,
    pub name: String,
    /// Fraction of kept trees with at least one split on the covariate.
    pub fraction: f64,
}

/// Usage of every tree covariate, most used first.
pub fn variable_inclusion(draws: &PosteriorDraws) -> Vec<Inclusion> {
    inclusion_from(&draws.forests, &draws.x2_names)
}

pub fn inclusion_from(forests: &[Vec<Tree>], names: &[String]) -> Vec<Inclusion> {
    let mut counts = vec![0u64; names.len()];
    let mut trees = 0u64;
    for tree in forests.iter().flatten() {
        trees += 1;
        for c in tree.covariates() {
            if let Some(n) = counts.get_mut(c) {
                *n += 1;
            }
        }
    }
    let mut out: Vec<Inclusion> = counts
        .into_iter()
        .enumerate()
        .map(|(c, n)| Inclusion {
            covariate: c,
            name: names[c].clone(),
            fraction: if trees == 0 { 0.0 } else { n as f64 / trees as f64 },
        })
        .collect();
    out.sort_by(|a, b| b.fraction.total_cmp(&a.fraction).then(a.covariate.cmp(&b.covariate)));
    out
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!("{a} predictions for {b} observations")));
    }
    if a == 0 {
        return Err(Error::Data("no observations".into()));
    }
    Ok(())
}

pub fn rmse(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(predictions.len(), truth.len())?;
    let sse: f64 = predictions.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / truth.len() as f64).sqrt())
}

/// Fraction of rows where `probability >= 0.5` disagrees with the 0/1 label.
pub fn misclassification(probabilities: &[f64], labels: &[f64]) -> Result<f64> {
    check_lengths(probabilities.len(), labels.len())?;
    let wrong = probabilities
        .iter()
        .zip(labels)
        .filter(|(p, &y)| (**p >= 0.5) != (y == 1.0))
        .count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// Posterior-mean estimate minus the true value.
pub fn bias(draws: &[f64], truth: f64) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::Data("no draws".into()));
    }
    Ok(draws.iter().sum::<f64>() / draws.len() as f64 - truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::random::RngStream;
    use crate::tree::{tests::generating_tree, SplitRule, Threshold, TreeCovariates};
    use proptest::prelude::*;

    fn grid(p: usize) -> TreeCovariates {
        let rows: Vec<Vec<f64>> = (0..64)
            .map(|i| (0..p).map(|j| ((i * (j + 3) + j) % 8) as f64 / 8.0 + 0.01).collect())
            .collect();
        TreeCovariates::continuous(Matrix::from_rows(&rows).unwrap())
    }

    fn below(c: usize, t: f64) -> SplitRule {
        SplitRule::new(c, Threshold::Below(t))
    }

    #[test]
    fn stump_has_no_pairs() {
        let t = Tree::stump(10);
        let (l, s) = tree_pairs(&t);
        assert!(l.is_empty() && s.is_empty());
        let r = count_interactions(&[vec![t]], &[], &BTreeSet::new());
        assert_eq!((r.trees, r.stumps), (1, 1));
    }

    #[test]
    fn generating_tree_pairs() {
        let x2 = grid(3);
        let (loose, strict) = tree_pairs(&generating_tree(&x2));
        assert_eq!(strict, BTreeSet::from([(0, 1), (0, 2)]));
        assert_eq!(loose, BTreeSet::from([(0, 1), (0, 2), (1, 2)]));
    }

    #[test]
    fn separate_subtrees_pair_loosely_only() {
        // Root on x5; x6 in the left subtree only; x7 in the right subtree only.
        let x2 = grid(8);
        let mut t = Tree::stump(64);
        t.assign_observations(&x2);
        t.split_terminal(0, below(5, 0.5), &x2);
        let left = 1;
        t.split_terminal(left, below(6, 0.5), &x2);
        let right = *t.terminals().iter().find(|&&i| t.node(i).depth == 1).unwrap();
        t.split_terminal(right, below(7, 0.5), &x2);
        let (loose, strict) = tree_pairs(&t);
        assert!(strict.contains(&(5, 6)) && strict.contains(&(5, 7)));
        assert!(loose.contains(&(6, 7)));
        assert!(!strict.contains(&(6, 7)));
    }

    #[test]
    fn categories_partition_trees() {
        let x2 = grid(3);
        let mut single = Tree::stump(64);
        single.assign_observations(&x2);
        single.split_terminal(0, below(1, 0.5), &x2);
        let forests = vec![vec![Tree::stump(64), single.clone()], vec![generating_tree(&x2), generating_tree(&x2)]];
        let names: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let r = count_interactions(&forests, &names, &BTreeSet::from([2]));
        assert_eq!((r.stumps, r.single_covariate, r.linear_interaction, r.other), (1, 1, 2, 0));
        let r = count_interactions(&forests, &names, &BTreeSet::new());
        assert_eq!(r.other, 2);
        let total = r.stump_fraction() + r.single_covariate_fraction() + r.linear_interaction_fraction() + r.other_fraction();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(r.pairs[0].same_branch, 2);
        let bc = r.pairs.iter().find(|p| p.first == "b" && p.second == "c").unwrap();
        assert_eq!((bc.same_tree, bc.same_branch), (2, 0));
    }

    #[test]
    fn percentiles() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = summarize_values("v", &v, 0.95).unwrap();
        assert_eq!(s.mean, 50.5);
        assert!((s.lower - 3.475).abs() < 1e-12);
        assert!((s.upper - 97.525).abs() < 1e-12);
        let s = summarize_values("v", &v, 0.5).unwrap();
        assert!((s.lower - 25.75).abs() < 1e-12 && (s.upper - 75.25).abs() < 1e-12);
        assert_eq!(percent_label(50.0 * (1.0 - 0.95)), "2.5");
        assert_eq!(percent_label(75.0), "75");
        let c = summarize_values("c", &[2.5; 7], 0.95).unwrap();
        assert_eq!((c.mean, c.lower, c.upper), (2.5, 2.5, 2.5));
        assert!(summarize_values("e", &[], 0.95).is_err());
    }

    #[test]
    fn centering() {
        assert_eq!(center_effects(&[3.0, 3.0]), vec![-2.0, 1.0, 1.0]);
        assert_eq!(center_effects(&[4.0]), vec![-2.0, 2.0]);
    }

    #[test]
    fn metric_definitions() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((bias(&[9.2, 10.0], 10.0).unwrap() + 0.4).abs() < 1e-12);
        assert_eq!(misclassification(&[0.9, 0.2], &[1.0, 1.0]).unwrap(), 0.5);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn inclusion_fractions() {
        let x2 = grid(2);
        let names = vec!["x1".to_string(), "x2".to_string()];
        let mut t = Tree::stump(64);
        t.assign_observations(&x2);
        t.split_terminal(0, below(0, 0.5), &x2);
        let inc = inclusion_from(&[vec![t.clone()]], &names);
        assert_eq!((inc[0].name.as_str(), inc[0].fraction), ("x1", 1.0));
        let inc = inclusion_from(&[vec![t, Tree::stump(64)]], &names);
        assert_eq!(inc[0].fraction, 0.5);
        let inc = inclusion_from(&[vec![Tree::stump(64)]], &names);
        assert!(inc.iter().all(|i| i.fraction == 0.0));
    }

    fn random_tree(seed: u64, p: usize, splits: usize) -> Tree {
        let x2 = grid(p);
        let mut rng = RngStream::new(seed, 0);
        let mut t = Tree::stump(64);
        t.assign_observations(&x2);
        for _ in 0..splits {
            let leaves = t.terminals();
            let leaf = leaves[rng.index(leaves.len())];
            let cov = rng.index(p);
            let cut = (1 + rng.index(7)) as f64 / 8.0;
            t.split_terminal(leaf, below(cov, cut), &x2);
        }
        t
    }

    proptest! {
        #[test]
        fn strict_pairs_are_loose(seed in any::<u64>(), p in 2usize..7, splits in 0usize..12) {
            let (loose, strict) = tree_pairs(&random_tree(seed, p, splits));
            prop_assert!(strict.is_subset(&loose));
        }

        #[test]
        fn centering_is_a_shift(contrasts in proptest::collection::vec(-50.0f64..50.0, 1..6)) {
            let e = center_effects(&contrasts);
            prop_assert!(e.iter().sum::<f64>().abs() < 1e-9);
            for (i, c) in contrasts.iter().enumerate() {
                prop_assert!(((e[i + 1] - e[0]) - c).abs() < 1e-9);
            }
        }

        #[test]
        fn interval_ordered(values in proptest::collection::vec(-1e3f64..1e3, 2..50), level in 0.05f64..0.99) {
            let s = summarize_values("v", &values, level).unwrap();
            prop_assert!(s.lower <= s.upper);
        }
    }
}
