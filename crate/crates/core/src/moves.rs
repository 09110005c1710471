//! Proposal kernels for single-tree updates and the Metropolis-Hastings
//! accept step.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random::RngStream;
use crate::tree::{
    log_marginal_likelihood, tree_log_prior, CovariateKind, SplitRule, Threshold, Tree,
    TreeCovariates,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MoveKind {
    Grow,
    DoubleGrow,
    Prune,
    DoublePrune,
    Change,
    Swap,
    StumpFallback,
}

impl MoveKind {
    pub const ALL: [MoveKind; 7] = [
        MoveKind::Grow,
        MoveKind::DoubleGrow,
        MoveKind::Prune,
        MoveKind::DoublePrune,
        MoveKind::Change,
        MoveKind::Swap,
        MoveKind::StumpFallback,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MoveKind::Grow => "grow",
            MoveKind::DoubleGrow => "double-grow",
            MoveKind::Prune => "prune",
            MoveKind::DoublePrune => "double-prune",
            MoveKind::Change => "change",
            MoveKind::Swap => "swap",
            MoveKind::StumpFallback => "stump-fallback",
        }
    }

    /// The base move this kind was drawn as.
    pub fn family(self) -> MoveKind {
        match self {
            MoveKind::DoubleGrow => MoveKind::Grow,
            MoveKind::DoublePrune => MoveKind::Prune,
            k => k,
        }
    }
}

impl fmt::Display for MoveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Probabilities of attempting grow, prune, change and swap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveProbabilities {
    pub grow: f64,
    pub prune: f64,
    pub change: f64,
    pub swap: f64,
}

impl Default for MoveProbabilities {
    fn default() -> Self {
        Self {
            grow: 0.25,
            prune: 0.25,
            change: 0.40,
            swap: 0.10,
        }
    }
}

impl MoveProbabilities {
    pub fn validate(&self) -> Result<()> {
        let p = [self.grow, self.prune, self.change, self.swap];
        if p.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(
                "move probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "move probabilities must sum to 1, got {total}"
            )));
        }
        Ok(())
    }

    /// Probability of the base move `kind` (zero for non-base kinds).
    pub fn of(&self, kind: MoveKind) -> f64 {
        match kind {
            MoveKind::Grow => self.grow,
            MoveKind::Prune => self.prune,
            MoveKind::Change => self.change,
            MoveKind::Swap => self.swap,
            _ => 0.0,
        }
    }

    fn draw(&self, u: f64) -> MoveKind {
        if u < self.grow {
            MoveKind::Grow
        } else if u < self.grow + self.prune {
            MoveKind::Prune
        } else if u < self.grow + self.prune + self.change {
            MoveKind::Change
        } else {
            MoveKind::Swap
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveSettings {
    pub probabilities: MoveProbabilities,
    /// Attempts made to find a valid proposal before giving up.
    pub retry_limit: usize,
    pub n_min: usize,
    /// Enables double grow and double prune.
    pub double_moves: bool,
    /// Double grow splits both children of the root instead of one.
    pub double_grow_both_children: bool,
}

impl Default for MoveSettings {
    fn default() -> Self {
        Self {
            probabilities: MoveProbabilities::default(),
            retry_limit: 5,
            n_min: 5,
            double_moves: true,
            double_grow_both_children: false,
        }
    }
}

/// Data and covariate roles a proposal is built against.
#[derive(Debug, Clone, Copy)]
pub struct TreeContext<'a> {
    pub x2: &'a TreeCovariates,
    pub shared: &'a BTreeSet<usize>,
    pub categorical_x1: &'a BTreeSet<usize>,
}

#[derive(Debug, Clone)]
pub struct MoveProposal {
    pub kind: MoveKind,
    /// The base move that was attempted (grow, prune, change or swap).
    pub requested: MoveKind,
    /// `None` when no valid proposal could be built; such proposals are
    /// always rejected.
    pub tree: Option<Tree>,
    pub attempts: usize,
}

impl MoveProposal {
    fn degenerate(kind: MoveKind, attempts: usize) -> Self {
        Self {
            kind,
            requested: kind.family(),
            tree: None,
            attempts,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.tree.is_none()
    }
}

/// Draws a split rule for `cov` among the values held at `node`: a
/// threshold uniformly chosen among the distinct observed values other than
/// the smallest, or a single level uniformly chosen among the levels present.
pub fn draw_rule(
    tree: &Tree,
    node: usize,
    cov: usize,
    ctx: &TreeContext<'_>,
    rng: &mut RngStream,
) -> Option<SplitRule> {
    let mut values: Vec<f64> = tree
        .node(node)
        .rows()
        .iter()
        .map(|&r| ctx.x2.value(r as usize, cov))
        .filter(|v| !v.is_nan())
        .collect();
    values.sort_unstable_by(f64::total_cmp);
    values.dedup();
    if values.len() < 2 {
        return None;
    }
    let threshold = match ctx.x2.kind(cov) {
        CovariateKind::Continuous => Threshold::Below(values[1 + rng.index(values.len() - 1)]),
        CovariateKind::Categorical { .. } => Threshold::Level(values[rng.index(values.len())] as u32),
    };
    Some(SplitRule {
        covariate: cov,
        threshold,
        shared: ctx.shared.contains(&cov),
        categorical_x1: ctx.categorical_x1.contains(&cov),
    })
}

fn checked(
    mut tree: Tree,
    ctx: &TreeContext<'_>,
    settings: &MoveSettings,
) -> Option<Tree> {
    let v = crate::tree::validate_tree(&mut tree, ctx.shared, ctx.categorical_x1, settings.n_min);
    v.is_valid().then_some(tree)
}

fn fallback_stump(ctx: &TreeContext<'_>, requested: MoveKind, attempts: usize) -> MoveProposal {
    let mut stump = Tree::stump(ctx.x2.n_rows());
    stump.assign_observations(ctx.x2);
    MoveProposal {
        kind: MoveKind::StumpFallback,
        requested,
        tree: Some(stump),
        attempts,
    }
}

/// Grow: split a uniformly chosen terminal node holding at least `2·n_min`
/// rows. On a stump whose drawn covariate is shared, a second split on a
/// different covariate is added below (double grow).
pub fn propose_grow(
    tree: &Tree,
    ctx: &TreeContext<'_>,
    settings: &MoveSettings,
    rng: &mut RngStream,
) -> MoveProposal {
    let p = ctx.x2.n_cols();
    for attempt in 1..=settings.retry_limit {
        let growable: Vec<usize> = tree
            .terminals()
            .into_iter()
            .filter(|&i| tree.node(i).count() >= 2 * settings.n_min)
            .collect();
        if growable.is_empty() || p == 0 {
            return MoveProposal::degenerate(MoveKind::Grow, attempt);
        }
        let leaf = growable[rng.index(growable.len())];
        let cov = rng.index(p);
        let Some(rule) = draw_rule(tree, leaf, cov, ctx, rng) else {
            continue;
        };
        let mut cand = tree.clone();
        let (left, right) = cand.split_terminal(leaf, rule, ctx.x2);
        let double = settings.double_moves && tree.is_stump() && ctx.shared.contains(&cov);
        if double {
            if p < 2 {
                continue;
            }
            let mut second = rng.index(p - 1);
            if second >= cov {
                second += 1;
            }
            let targets = if settings.double_grow_both_children {
                vec![left, right]
            } else if rng.uniform() < 0.5 {
                vec![left]
            } else {
                vec![right]
            };
            // Splitting the left child renumbers the right one; go right first.
            let mut ok = true;
            for &child in targets.iter().rev() {
                match draw_rule(&cand, child, second, ctx, rng) {
                    Some(r2) => {
                        cand.split_terminal(child, r2, ctx.x2);
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
        }
        if let Some(t) = checked(cand, ctx, settings) {
            let kind = if double {
                MoveKind::DoubleGrow
            } else {
                MoveKind::Grow
            };
            return MoveProposal {
                kind,
                requested: MoveKind::Grow,
                tree: Some(t),
                attempts: attempt,
            };
        }
    }
    MoveProposal::degenerate(MoveKind::Grow, settings.retry_limit)
}

fn is_single_shared(tree: &Tree, shared: &BTreeSet<usize>) -> bool {
    let covs = tree.covariates();
    covs.len() == 1 && covs.iter().all(|c| shared.contains(c))
}

/// Prune: collapse a uniformly chosen parent of two terminal nodes. If the
/// result splits on a single shared covariate only, keep pruning (double
/// prune), which may end at a stump.
pub fn propose_prune(
    tree: &Tree,
    ctx: &TreeContext<'_>,
    settings: &MoveSettings,
    rng: &mut RngStream,
) -> MoveProposal {
    for attempt in 1..=settings.retry_limit {
        let parents = tree.terminal_parents();
        if parents.is_empty() {
            return MoveProposal::degenerate(MoveKind::Prune, attempt);
        }
        let mut cand = tree.clone();
        cand.collapse(parents[rng.index(parents.len())]);
        let mut kind = MoveKind::Prune;
        while settings.double_moves && is_single_shared(&cand, ctx.shared) {
            kind = MoveKind::DoublePrune;
            let parents = cand.terminal_parents();
            let pick = parents[rng.index(parents.len())];
            cand.collapse(pick);
        }
        if let Some(t) = checked(cand, ctx, settings) {
            return MoveProposal {
                kind,
                requested: MoveKind::Prune,
                tree: Some(t),
                attempts: attempt,
            };
        }
    }
    MoveProposal::degenerate(MoveKind::Prune, settings.retry_limit)
}

/// Change: redraw the rule of a uniformly chosen internal node. Falls back
/// to a stump when no valid tree is found within the retry limit.
pub fn propose_change(
    tree: &Tree,
    ctx: &TreeContext<'_>,
    settings: &MoveSettings,
    rng: &mut RngStream,
) -> MoveProposal {
    let internals = tree.internals();
    if internals.is_empty() || ctx.x2.n_cols() == 0 {
        return MoveProposal::degenerate(MoveKind::Change, 0);
    }
    for attempt in 1..=settings.retry_limit {
        let node = internals[rng.index(internals.len())];
        let cov = rng.index(ctx.x2.n_cols());
        let Some(rule) = draw_rule(tree, node, cov, ctx, rng) else {
            continue;
        };
        let mut cand = tree.clone();
        cand.set_rule(node, rule, ctx.x2);
        if let Some(t) = checked(cand, ctx, settings) {
            return MoveProposal {
                kind: MoveKind::Change,
                requested: MoveKind::Change,
                tree: Some(t),
                attempts: attempt,
            };
        }
    }
    fallback_stump(ctx, MoveKind::Change, settings.retry_limit)
}

/// Swap: exchange the rules of two distinct, uniformly chosen parents of
/// terminal nodes. Falls back to a stump when no valid tree is found within
/// the retry limit.
pub fn propose_swap(
    tree: &Tree,
    ctx: &TreeContext<'_>,
    settings: &MoveSettings,
    rng: &mut RngStream,
) -> MoveProposal {
    let parents = tree.terminal_parents();
    if parents.len() < 2 {
        return MoveProposal::degenerate(MoveKind::Swap, 0);
    }
    for attempt in 1..=settings.retry_limit {
        let i = rng.index(parents.len());
        let mut j = rng.index(parents.len() - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (parents[i], parents[j]);
        let ra = *tree.node(a).rule().expect("parent is internal");
        let rb = *tree.node(b).rule().expect("parent is internal");
        let mut cand = tree.clone();
        cand.set_rule(a, rb, ctx.x2);
        cand.set_rule(b, ra, ctx.x2);
        if let Some(t) = checked(cand, ctx, settings) {
            return MoveProposal {
                kind: MoveKind::Swap,
                requested: MoveKind::Swap,
                tree: Some(t),
                attempts: attempt,
            };
        }
    }
    fallback_stump(ctx, MoveKind::Swap, settings.retry_limit)
}

/// Draws a move kind and builds the proposal. A stump can only grow.
pub fn propose(
    tree: &Tree,
    ctx: &TreeContext<'_>,
    settings: &MoveSettings,
    rng: &mut RngStream,
) -> MoveProposal {
    let u = rng.uniform();
    let kind = if tree.is_stump() {
        MoveKind::Grow
    } else {
        settings.probabilities.draw(u)
    };
    match kind {
        MoveKind::Grow => propose_grow(tree, ctx, settings, rng),
        MoveKind::Prune => propose_prune(tree, ctx, settings, rng),
        MoveKind::Change => propose_change(tree, ctx, settings, rng),
        _ => propose_swap(tree, ctx, settings, rng),
    }
}

/// Parameters of the tree posterior used in the accept step.
#[derive(Debug, Clone, Copy)]
pub struct TreePosterior {
    pub sigma2: f64,
    pub sigma_mu2: f64,
    pub eta: f64,
    pub zeta: f64,
}

impl TreePosterior {
    /// Log posterior of a tree up to a constant, `None` when a terminal
    /// node is empty.
    pub fn log_density(&self, tree: &Tree, residuals: &[f64]) -> Result<Option<f64>> {
        let prior = tree_log_prior(tree, self.eta, self.zeta)?;
        match log_marginal_likelihood(tree, residuals, self.sigma2, self.sigma_mu2) {
            Ok(l) => Ok(Some(l + prior)),
            Err(Error::EmptyTerminal { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Acceptance probability of moving from `current` to `proposed`.
    pub fn acceptance(&self, current: &Tree, proposed: &Tree, residuals: &[f64]) -> Result<f64> {
        let Some(new) = self.log_density(proposed, residuals)? else {
            return Ok(0.0);
        };
        let old = self.log_density(current, residuals)?.unwrap_or(f64::NEG_INFINITY);
        let log_ratio = new - old;
        Ok(if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() })
    }
}

/// Accepts `proposal` with probability `min(1, p(T*|R,σ²)/p(T|R,σ²))`.
/// Returns the retained tree and whether the proposal was accepted.
pub fn mh_step(
    current: Tree,
    proposal: MoveProposal,
    residuals: &[f64],
    posterior: &TreePosterior,
    rng: &mut RngStream,
) -> Result<(Tree, bool)> {
    let Some(proposed) = proposal.tree else {
        return Ok((current, false));
    };
    let alpha = posterior.acceptance(&current, &proposed, residuals)?;
    if rng.uniform() < alpha {
        Ok((proposed, true))
    } else {
        Ok((current, false))
    }
}
