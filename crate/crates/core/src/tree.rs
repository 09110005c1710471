//! Decision trees for the sum-of-trees component: structure, observation
//! routing, the branching-process depth prior, the integrated leaf
//! likelihood, leaf-value draws, and the identifiability validity rules.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::random::RngStream;

/// Leaf prior variance used for shrink-flagged terminals, relative to the
/// regular leaf variance. Stands in for a zero prior variance.
pub const SHRINK_VARIANCE_FACTOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CovariateKind {
    Continuous,
    /// Values are stored as level codes `0..levels.len()`.
    Categorical { levels: Vec<String> },
}

impl CovariateKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, CovariateKind::Categorical { .. })
    }
}

/// The covariates available to the trees (`X2`), one column per covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeCovariates {
    names: Vec<String>,
    kinds: Vec<CovariateKind>,
    values: Matrix,
}

impl TreeCovariates {
    pub fn new(names: Vec<String>, kinds: Vec<CovariateKind>, values: Matrix) -> Result<Self> {
        if names.len() != values.cols() || kinds.len() != values.cols() {
            return Err(Error::DimensionMismatch(format!(
                "{} names and {} kinds for {} tree covariates",
                names.len(),
                kinds.len(),
                values.cols()
            )));
        }
        Ok(Self {
            names,
            kinds,
            values,
        })
    }

    /// All-continuous covariates from a matrix, named `x1..xp`.
    pub fn continuous(values: Matrix) -> Self {
        let names = (1..=values.cols()).map(|j| format!("x{j}")).collect();
        let kinds = vec![CovariateKind::Continuous; values.cols()];
        Self {
            names,
            kinds,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.cols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[CovariateKind] {
        &self.kinds
    }

    pub fn kind(&self, col: usize) -> &CovariateKind {
        &self.kinds[col]
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[(row, col)]
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Returns a copy with one column replaced.
    pub fn with_column(&self, col: usize, values: &[f64]) -> Result<Self> {
        if values.len() != self.n_rows() {
            return Err(Error::DimensionMismatch(format!(
                "replacement column has {} rows, expected {}",
                values.len(),
                self.n_rows()
            )));
        }
        let mut out = self.clone();
        for (r, &v) in values.iter().enumerate() {
            out.values[(r, col)] = v;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    /// Continuous rule `x < t`.
    Below(f64),
    /// Categorical rule `x == level` (single level against the rest).
    Level(u32),
}

/// A split rule. Rows satisfying the rule go to the left child.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub covariate: usize,
    pub threshold: Threshold,
    /// Covariate is also in the linear design (`X1 ∩ X2`).
    pub shared: bool,
    /// Covariate is a categorical linear-design variable with more than two levels.
    pub categorical_x1: bool,
}

impl SplitRule {
    pub fn new(covariate: usize, threshold: Threshold) -> Self {
        Self {
            covariate,
            threshold,
            shared: false,
            categorical_x1: false,
        }
    }

    #[inline]
    pub fn sends_left(&self, value: f64) -> bool {
        match self.threshold {
            Threshold::Below(t) => value < t,
            Threshold::Level(l) => value == f64::from(l),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Internal {
        rule: SplitRule,
        left: usize,
        right: usize,
    },
    Terminal {
        mu: f64,
        shrink: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub depth: usize,
    pub parent: Option<usize>,
    pub kind: NodeKind,
    rows: Vec<u32>,
    count: usize,
}

impl Node {
    fn terminal(depth: usize, parent: Option<usize>) -> Self {
        Self {
            depth,
            parent,
            kind: NodeKind::Terminal {
                mu: 0.0,
                shrink: false,
            },
            rows: Vec::new(),
            count: 0,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.kind, NodeKind::Terminal { .. })
    }

    /// Training rows routed to this node (empty for stored snapshots).
    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    /// Number of training rows reaching this node.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn rule(&self) -> Option<&SplitRule> {
        match &self.kind {
            NodeKind::Internal { rule, .. } => Some(rule),
            NodeKind::Terminal { .. } => None,
        }
    }

    pub fn mu(&self) -> Option<f64> {
        match self.kind {
            NodeKind::Terminal { mu, .. } => Some(mu),
            NodeKind::Internal { .. } => None,
        }
    }

    pub fn shrink(&self) -> bool {
        matches!(self.kind, NodeKind::Terminal { shrink: true, .. })
    }
}

/// A binary regression tree. Node 0 is the root; after every structural edit
/// the nodes are renumbered in depth-first preorder (left before right).
/// Serializes as its text dump, so member rows are not persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// A single terminal node holding rows `0..n_rows`.
    pub fn stump(n_rows: usize) -> Self {
        let mut root = Node::terminal(0, None);
        root.rows = (0..n_rows as u32).collect();
        root.count = n_rows;
        Self { nodes: vec![root] }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn is_stump(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn terminals(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_terminal())
            .collect()
    }

    pub fn internals(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| !self.nodes[i].is_terminal())
            .collect()
    }

    /// Internal nodes whose two children are both terminal.
    pub fn terminal_parents(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| match self.nodes[i].kind {
                NodeKind::Internal { left, right, .. } => {
                    self.nodes[left].is_terminal() && self.nodes[right].is_terminal()
                }
                NodeKind::Terminal { .. } => false,
            })
            .collect()
    }

    /// `b_t`, the number of terminal nodes.
    pub fn terminal_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_terminal()).count()
    }

    pub fn internal_count(&self) -> usize {
        self.nodes.len() - self.terminal_count()
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Distinct covariates used by split rules.
    pub fn covariates(&self) -> BTreeSet<usize> {
        self.nodes
            .iter()
            .filter_map(|n| n.rule().map(|r| r.covariate))
            .collect()
    }

    /// Routes rows `0..x2.n_rows()` from the root down, populating the member
    /// sets of every node.
    pub fn assign_observations(&mut self, x2: &TreeCovariates) {
        self.nodes[0].rows = (0..x2.n_rows() as u32).collect();
        self.route_subtree(0, x2);
    }

    /// Re-partitions the rows held at `node` among its descendants.
    pub fn route_subtree(&mut self, node: usize, x2: &TreeCovariates) {
        let mut stack = vec![node];
        while let Some(id) = stack.pop() {
            self.nodes[id].count = self.nodes[id].rows.len();
            if let NodeKind::Internal { rule, left, right } = self.nodes[id].kind {
                let rows = std::mem::take(&mut self.nodes[id].rows);
                let (l, r): (Vec<u32>, Vec<u32>) = rows
                    .iter()
                    .partition(|&&row| rule.sends_left(x2.value(row as usize, rule.covariate)));
                self.nodes[id].rows = rows;
                self.nodes[left].rows = l;
                self.nodes[right].rows = r;
                stack.push(right);
                stack.push(left);
            }
        }
    }

    /// Turns terminal `leaf` into an internal node with `rule`, routing its
    /// rows to two new terminal children. Returns the new (left, right) ids
    /// after renumbering.
    pub fn split_terminal(
        &mut self,
        leaf: usize,
        rule: SplitRule,
        x2: &TreeCovariates,
    ) -> (usize, usize) {
        assert!(self.nodes[leaf].is_terminal(), "node {leaf} is not terminal");
        let depth = self.nodes[leaf].depth;
        let left = self.nodes.len();
        let right = left + 1;
        self.nodes.push(Node::terminal(depth + 1, Some(leaf)));
        self.nodes.push(Node::terminal(depth + 1, Some(leaf)));
        self.nodes[leaf].kind = NodeKind::Internal { rule, left, right };
        self.route_subtree(leaf, x2);
        let map = self.compact();
        (map[left], map[right])
    }

    /// Removes everything below `node`, making it terminal again. Returns
    /// the node's id after renumbering.
    pub fn collapse(&mut self, node: usize) -> usize {
        let count = self.nodes[node].count;
        self.nodes[node].kind = NodeKind::Terminal {
            mu: 0.0,
            shrink: false,
        };
        self.nodes[node].count = count;
        self.compact()[node]
    }

    pub fn set_rule(&mut self, node: usize, new_rule: SplitRule, x2: &TreeCovariates) {
        match &mut self.nodes[node].kind {
            NodeKind::Internal { rule, .. } => *rule = new_rule,
            NodeKind::Terminal { .. } => panic!("node {node} is terminal"),
        }
        self.route_subtree(node, x2);
    }

    pub fn set_leaf_value(&mut self, node: usize, value: f64) {
        if let NodeKind::Terminal { mu, .. } = &mut self.nodes[node].kind {
            *mu = value;
        }
    }

    /// Renumbers reachable nodes in preorder; returns old-id -> new-id
    /// (`usize::MAX` for dropped nodes).
    fn compact(&mut self) -> Vec<usize> {
        let mut map = vec![usize::MAX; self.nodes.len()];
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            map[id] = order.len();
            order.push(id);
            if let NodeKind::Internal { left, right, .. } = self.nodes[id].kind {
                stack.push(right);
                stack.push(left);
            }
        }
        if order.len() == self.nodes.len() && order.iter().enumerate().all(|(i, &o)| i == o) {
            return map;
        }
        let mut old: Vec<Option<Node>> = std::mem::take(&mut self.nodes)
            .into_iter()
            .map(Some)
            .collect();
        self.nodes = order
            .iter()
            .map(|&id| {
                let mut n = old[id].take().expect("node visited once");
                n.parent = n.parent.map(|p| map[p]);
                if let NodeKind::Internal { left, right, .. } = &mut n.kind {
                    *left = map[*left];
                    *right = map[*right];
                }
                n
            })
            .collect();
        map
    }

    /// Copy without member row sets; counts and leaf values are kept.
    pub fn snapshot(&self) -> Tree {
        Tree {
            nodes: self
                .nodes
                .iter()
                .map(|n| Node {
                    depth: n.depth,
                    parent: n.parent,
                    kind: n.kind.clone(),
                    rows: Vec::new(),
                    count: n.count,
                })
                .collect(),
        }
    }

    /// Same topology and split rules, ignoring leaf values and rows.
    pub fn same_structure(&self, other: &Tree) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.nodes.iter().zip(&other.nodes).all(|(a, b)| {
                a.depth == b.depth
                    && match (&a.kind, &b.kind) {
                        (
                            NodeKind::Internal { rule: ra, left: la, right: rra },
                            NodeKind::Internal { rule: rb, left: lb, right: rrb },
                        ) => ra.covariate == rb.covariate
                            && ra.threshold == rb.threshold
                            && la == lb
                            && rra == rrb,
                        (NodeKind::Terminal { .. }, NodeKind::Terminal { .. }) => true,
                        _ => false,
                    }
            })
    }

    /// Member sets of the terminal nodes, in preorder.
    pub fn partition(&self) -> Vec<Vec<u32>> {
        self.nodes
            .iter()
            .filter(|n| n.is_terminal())
            .map(|n| {
                let mut r = n.rows.clone();
                r.sort_unstable();
                r
            })
            .collect()
    }

    /// For every terminal node, the covariates of the rules on its path from
    /// the root (root first).
    pub fn terminal_paths(&self) -> Vec<(usize, Vec<usize>)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((id, path)) = stack.pop() {
            match &self.nodes[id].kind {
                NodeKind::Terminal { .. } => out.push((id, path)),
                NodeKind::Internal { rule, left, right } => {
                    let mut p = path;
                    p.push(rule.covariate);
                    stack.push((*right, p.clone()));
                    stack.push((*left, p));
                }
            }
        }
        out
    }

    /// Leaf value reached by a single row whose covariates are given by `value(col)`.
    pub fn predict_one(&self, value: impl Fn(usize) -> f64) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id].kind {
                NodeKind::Terminal { mu, .. } => return *mu,
                NodeKind::Internal { rule, left, right } => {
                    id = if rule.sends_left(value(rule.covariate)) {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Adds this tree's contribution for every row of `x2` into `out`.
    pub fn add_predictions(&self, x2: &TreeCovariates, out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o += self.predict_one(|c| x2.value(r, c));
        }
    }

    /// Writes the leaf value of each training row into `out`, using the
    /// member sets.
    pub fn write_fitted(&self, out: &mut [f64]) {
        for n in &self.nodes {
            if let NodeKind::Terminal { mu, .. } = n.kind {
                for &r in &n.rows {
                    out[r as usize] = mu;
                }
            }
        }
    }

    /// Marks rules with shared / categorical-X1 flags from the given sets.
    pub fn annotate(&mut self, shared: &BTreeSet<usize>, categorical_x1: &BTreeSet<usize>) {
        for n in &mut self.nodes {
            if let NodeKind::Internal { rule, .. } = &mut n.kind {
                rule.shared = shared.contains(&rule.covariate);
                rule.categorical_x1 = categorical_x1.contains(&rule.covariate);
            }
        }
    }

    /// One line per node: `id depth kind covariate threshold mu n`
    /// (tab separated; `-` for fields that do not apply). Internal kinds may
    /// carry `:shared` / `:categorical` flags; `terminal*` marks a shrunk leaf.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (id, n) in self.nodes.iter().enumerate() {
            match &n.kind {
                NodeKind::Internal { rule, .. } => {
                    let thr = match rule.threshold {
                        Threshold::Below(t) => format!("<{t:?}"),
                        Threshold::Level(l) => format!("={l}"),
                    };
                    let kind = match (rule.shared, rule.categorical_x1) {
                        (false, false) => "internal",
                        (true, false) => "internal:shared",
                        (false, true) => "internal:categorical",
                        (true, true) => "internal:shared,categorical",
                    };
                    let _ = writeln!(
                        s,
                        "{id}\t{}\t{kind}\t{}\t{thr}\t-\t{}",
                        n.depth, rule.covariate, n.count
                    );
                }
                NodeKind::Terminal { mu, shrink } => {
                    let kind = if *shrink { "terminal*" } else { "terminal" };
                    let _ = writeln!(s, "{id}\t{}\t{kind}\t-\t-\t{mu:?}\t{}", n.depth, n.count);
                }
            }
        }
        s
    }

    /// Parses the output of [`Tree::dump`].
    pub fn parse_dump(text: &str) -> Result<Tree> {
        let bad = |line: usize, msg: &str| Error::Data(format!("tree dump line {line}: {msg}"));
        struct Parsed {
            depth: usize,
            rule: Option<SplitRule>,
            mu: f64,
            shrink: bool,
            count: usize,
        }
        let mut parsed = Vec::new();
        for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 7 {
                return Err(bad(i + 1, "expected 7 tab-separated fields"));
            }
            if f[0].parse::<usize>().ok() != Some(i) {
                return Err(bad(i + 1, "node ids must be consecutive from 0"));
            }
            let depth = f[1].parse().map_err(|_| bad(i + 1, "bad depth"))?;
            let count = f[6].parse().map_err(|_| bad(i + 1, "bad count"))?;
            let p = match f[2] {
                kind if kind == "internal" || kind.starts_with("internal:") => {
                    let flags = kind.strip_prefix("internal:").unwrap_or("");
                    let flags: Vec<&str> = flags.split(',').filter(|f| !f.is_empty()).collect();
                    if flags.iter().any(|f| *f != "shared" && *f != "categorical") {
                        return Err(bad(i + 1, "unknown rule flag"));
                    }
                    let cov = f[3].parse().map_err(|_| bad(i + 1, "bad covariate"))?;
                    let threshold = if let Some(t) = f[4].strip_prefix('<') {
                        Threshold::Below(t.parse().map_err(|_| bad(i + 1, "bad threshold"))?)
                    } else if let Some(l) = f[4].strip_prefix('=') {
                        Threshold::Level(l.parse().map_err(|_| bad(i + 1, "bad level"))?)
                    } else {
                        return Err(bad(i + 1, "bad threshold"));
                    };
                    Parsed {
                        depth,
                        rule: Some(SplitRule {
                            covariate: cov,
                            threshold,
                            shared: flags.contains(&"shared"),
                            categorical_x1: flags.contains(&"categorical"),
                        }),
                        mu: 0.0,
                        shrink: false,
                        count,
                    }
                }
                "terminal" | "terminal*" => Parsed {
                    depth,
                    rule: None,
                    mu: f[5].parse().map_err(|_| bad(i + 1, "bad leaf value"))?,
                    shrink: f[2] == "terminal*",
                    count,
                },
                _ => return Err(bad(i + 1, "unknown node kind")),
            };
            parsed.push(p);
        }
        if parsed.is_empty() {
            return Err(Error::Data("empty tree dump".into()));
        }
        // Rebuild preorder links: each internal node's left child follows it
        // immediately, its right child follows the left subtree.
        fn build(
            parsed: &[Parsed],
            pos: &mut usize,
            parent: Option<usize>,
            depth: usize,
            nodes: &mut Vec<Node>,
        ) -> Result<usize> {
            let id = *pos;
            let p = parsed
                .get(id)
                .ok_or_else(|| Error::Data("tree dump ends inside a subtree".into()))?;
            if p.depth != depth {
                return Err(Error::Data(format!("tree dump node {id}: depth mismatch")));
            }
            *pos += 1;
            nodes.push(Node {
                depth,
                parent,
                kind: NodeKind::Terminal {
                    mu: p.mu,
                    shrink: p.shrink,
                },
                rows: Vec::new(),
                count: p.count,
            });
            if let Some(rule) = p.rule {
                let left = build(parsed, pos, Some(id), depth + 1, nodes)?;
                let right = build(parsed, pos, Some(id), depth + 1, nodes)?;
                nodes[id].kind = NodeKind::Internal { rule, left, right };
            }
            Ok(id)
        }
        let mut nodes = Vec::with_capacity(parsed.len());
        let mut pos = 0;
        build(&parsed, &mut pos, None, 0, &mut nodes)?;
        if pos != parsed.len() {
            return Err(Error::Data("trailing nodes in tree dump".into()));
        }
        Ok(Tree { nodes })
    }
}

impl From<Tree> for String {
    fn from(t: Tree) -> String {
        t.dump()
    }
}

impl TryFrom<String> for Tree {
    type Error = Error;

    fn try_from(s: String) -> Result<Tree> {
        Tree::parse_dump(&s)
    }
}

/// Log of the branching-process prior: each internal node at depth `d`
/// contributes `log(η(1+d)^-ζ)`, each terminal node `log(1 - η(1+d)^-ζ)`.
pub fn tree_log_prior(tree: &Tree, eta: f64, zeta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "depth prior needs eta in (0,1), got {eta}"
        )));
    }
    if !(zeta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "depth prior needs zeta >= 0, got {zeta}"
        )));
    }
    Ok(tree
        .nodes
        .iter()
        .map(|n| {
            let p = eta * (1.0 + n.depth as f64).powf(-zeta);
            if n.is_terminal() {
                (1.0 - p).ln()
            } else {
                p.ln()
            }
        })
        .sum())
}

#[inline]
fn leaf_variance(shrink: bool, sigma_mu2: f64) -> f64 {
    if shrink {
        SHRINK_VARIANCE_FACTOR * sigma_mu2
    } else {
        sigma_mu2
    }
}

/// Log marginal likelihood of the partial residuals given the tree, with the
/// leaf values integrated out, up to terms shared by every tree:
/// `Σ_ℓ ½log(σ²/(σ_μ²n + σ²)) + σ_μ²(Σr)² / (2σ²(σ_μ²n + σ²))`.
pub fn log_marginal_likelihood(
    tree: &Tree,
    residuals: &[f64],
    sigma2: f64,
    sigma_mu2: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for (id, n) in tree.nodes.iter().enumerate() {
        let NodeKind::Terminal { shrink, .. } = n.kind else {
            continue;
        };
        if n.rows.is_empty() {
            return Err(Error::EmptyTerminal { node: id });
        }
        let s2mu = leaf_variance(shrink, sigma_mu2);
        let count = n.rows.len() as f64;
        let sum: f64 = n.rows.iter().map(|&r| residuals[r as usize]).sum();
        let denom = s2mu * count + sigma2;
        total += 0.5 * (sigma2 / denom).ln() + s2mu * sum * sum / (2.0 * sigma2 * denom);
    }
    Ok(total)
}

/// Posterior mean and variance of a leaf value given its member residuals.
pub fn leaf_posterior(sum: f64, count: usize, sigma2: f64, leaf_var: f64) -> (f64, f64) {
    if leaf_var <= 0.0 {
        return (0.0, 0.0);
    }
    let precision = count as f64 / sigma2 + 1.0 / leaf_var;
    (sum / sigma2 / precision, 1.0 / precision)
}

/// Draws every leaf value from its full conditional.
pub fn sample_leaf_values(
    tree: &mut Tree,
    residuals: &[f64],
    sigma2: f64,
    sigma_mu2: f64,
    rng: &mut RngStream,
) {
    for n in &mut tree.nodes {
        if let NodeKind::Terminal { mu, shrink } = &mut n.kind {
            let sum: f64 = n.rows.iter().map(|&r| residuals[r as usize]).sum();
            let (mean, var) = leaf_posterior(sum, n.rows.len(), sigma2, leaf_variance(*shrink, sigma_mu2));
            *mu = mean + var.sqrt() * rng.standard_normal();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvalidReason {
    /// Every split uses the same covariate, and it is shared with the linear design.
    SingleSharedCovariate(usize),
    /// A root-to-leaf branch is made only of repeated splits on one
    /// categorical linear-design covariate.
    CategoricalBranch(usize),
    /// A terminal node holds fewer than the minimum number of rows.
    TooFewObservations { node: usize, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validity {
    Valid,
    Invalid(InvalidReason),
}

impl Validity {
    pub fn is_valid(self) -> bool {
        self == Validity::Valid
    }
}

/// Checks the identifiability rules and the minimum node size, and sets the
/// shrink flag on every terminal node whose ancestors all split on a single
/// shared covariate.
pub fn validate_tree(
    tree: &mut Tree,
    shared: &BTreeSet<usize>,
    categorical_x1: &BTreeSet<usize>,
    n_min: usize,
) -> Validity {
    let mut verdict = Validity::Valid;
    let covs = tree.covariates();
    if covs.len() == 1 {
        let c = *covs.iter().next().unwrap();
        if shared.contains(&c) {
            verdict = Validity::Invalid(InvalidReason::SingleSharedCovariate(c));
        }
    }
    for (id, path) in tree.terminal_paths() {
        let single = path.first().copied().filter(|&c| path.iter().all(|&p| p == c));
        if verdict.is_valid() {
            if let Some(c) = single {
                if path.len() >= 2 && categorical_x1.contains(&c) {
                    verdict = Validity::Invalid(InvalidReason::CategoricalBranch(c));
                }
            }
        }
        let count = tree.nodes[id].count;
        if verdict.is_valid() && count < n_min {
            verdict = Validity::Invalid(InvalidReason::TooFewObservations { node: id, count });
        }
        if let NodeKind::Terminal { shrink, .. } = &mut tree.nodes[id].kind {
            *shrink = single.is_some_and(|c| shared.contains(&c));
        }
    }
    verdict
}

/// The trees of the ensemble and their per-row fitted contributions.
#[derive(Debug, Clone)]
pub struct Forest {
    trees: Vec<Tree>,
    fits: Vec<Vec<f64>>,
    total: Vec<f64>,
}

impl Forest {
    /// `n_trees` stumps with zero leaf values over `n_rows` rows.
    pub fn stumps(n_trees: usize, n_rows: usize) -> Self {
        Self {
            trees: vec![Tree::stump(n_rows); n_trees],
            fits: vec![vec![0.0; n_rows]; n_trees],
            total: vec![0.0; n_rows],
        }
    }

    /// Rebuilds a forest from trees, routing the training rows.
    pub fn from_trees(mut trees: Vec<Tree>, x2: &TreeCovariates) -> Self {
        let n = x2.n_rows();
        let fits = trees
            .iter_mut()
            .map(|t| {
                t.assign_observations(x2);
                let mut f = vec![0.0; n];
                t.write_fitted(&mut f);
                f
            })
            .collect();
        let mut forest = Self {
            trees,
            fits,
            total: vec![0.0; n],
        };
        forest.recompute_total();
        forest
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn tree(&self, t: usize) -> &Tree {
        &self.trees[t]
    }

    pub fn fit(&self, t: usize) -> &[f64] {
        &self.fits[t]
    }

    /// Elementwise sum of all tree contributions.
    pub fn prediction(&self) -> &[f64] {
        &self.total
    }

    /// Replaces tree `t` and updates its contribution.
    pub fn set_tree(&mut self, t: usize, tree: Tree) {
        let fit = &mut self.fits[t];
        for (tot, f) in self.total.iter_mut().zip(fit.iter()) {
            *tot -= f;
        }
        tree.write_fitted(fit);
        for (tot, f) in self.total.iter_mut().zip(fit.iter()) {
            *tot += f;
        }
        self.trees[t] = tree;
    }

    /// Recomputes the total from the per-tree contributions, discarding
    /// accumulated rounding.
    pub fn recompute_total(&mut self) {
        self.total.iter_mut().for_each(|v| *v = 0.0);
        for fit in &self.fits {
            for (tot, f) in self.total.iter_mut().zip(fit) {
                *tot += f;
            }
        }
    }
}

/// Sum of the leaf values reached in each tree, for every row of `x2`.
pub fn predict(trees: &[Tree], x2: &TreeCovariates) -> Vec<f64> {
    let mut out = vec![0.0; x2.n_rows()];
    for t in trees {
        t.add_predictions(x2, &mut out);
    }
    out
}
