//! Finite discrete-time markets stored as event trees.
//!
//! Nodes are kept in breadth-first order, so the nodes of one time level
//! form a contiguous index range and the descendants of any node at a later
//! level are contiguous as well. Leaves are the last level; a leaf's ordinal
//! (its position among the leaves) is what [`Measure`] weights and terminal
//! payoffs are indexed by.
//!
//! Prices are already discounted: there is no bank account.

use std::collections::VecDeque;
use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for "sums to one" and "is zero" checks.
pub const DEFAULT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("invalid tree specification: {0}")]
    InvalidSpec(String),
    #[error("child probabilities of node {node} sum to {sum}")]
    ProbabilitySum { node: usize, sum: f64 },
    #[error("node {node} has fewer than two children")]
    TooFewChildren { node: usize },
    #[error("node {node}: one-step price increments do not span the asset space")]
    DegenerateNode { node: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("strategy mode mismatch: {left:?} vs {right:?}")]
    ModeMismatch {
        left: StrategyMode,
        right: StrategyMode,
    },
    #[error("wealth {wealth} at node {node} is not strictly positive")]
    AdmissibilityViolation { node: usize, wealth: f64 },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
}

/// Recombining multiplicative binomial lattice, expanded into a full tree.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LatticeSpec {
    pub s0: f64,
    pub u: f64,
    pub d: f64,
    pub q: f64,
    pub steps: usize,
}

/// Multi-asset, multi-branch lattice: every node has one child per move,
/// each move multiplying the price vector componentwise.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MultinomialSpec {
    pub s0: Vec<f64>,
    pub moves: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
    pub steps: usize,
}

/// One entry of an explicit node list. Parents must precede their children.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NodeSpec {
    #[serde(default)]
    pub parent: Option<usize>,
    /// Transition probability from the parent; ignored for the root.
    #[serde(default)]
    pub prob: Option<f64>,
    pub price: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum TreeSpec {
    Lattice(LatticeSpec),
    Multinomial(MultinomialSpec),
    Nodes(Vec<NodeSpec>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub parent: Option<usize>,
    pub time: usize,
    /// One-step transition probability from the parent (1 for the root).
    pub prob: f64,
    pub price: Vec<f64>,
    children: Vec<usize>,
}

impl Node {
    pub fn children(&self) -> &[usize] {
        &self.children
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioTree {
    nodes: Vec<Node>,
    horizon: usize,
    assets: usize,
    level_start: Vec<usize>,
    path_prob: Vec<f64>,
    leaf_range: Vec<Range<usize>>,
}

impl ScenarioTree {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn assets(&self) -> usize {
        self.assets
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes at time `t`.
    pub fn level(&self, t: usize) -> Range<usize> {
        self.level_start[t]..self.level_start[t + 1]
    }

    /// Non-terminal nodes; strategies are indexed by these ids.
    pub fn internal_nodes(&self) -> Range<usize> {
        0..self.level_start[self.horizon]
    }

    pub fn internal_count(&self) -> usize {
        self.level_start[self.horizon]
    }

    pub fn leaves(&self) -> Range<usize> {
        self.level(self.horizon)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.len() - self.level_start[self.horizon]
    }

    /// Leaf ordinal of a terminal node id.
    pub fn leaf_ordinal(&self, node: usize) -> usize {
        node - self.level_start[self.horizon]
    }

    /// Leaf ordinals below `node`.
    pub fn leaves_below(&self, node: usize) -> Range<usize> {
        self.leaf_range[node].clone()
    }

    /// P-probability of reaching `node` from the root.
    pub fn path_prob(&self, node: usize) -> f64 {
        self.path_prob[node]
    }

    /// Node ids from the root to `node`, inclusive.
    pub fn path(&self, node: usize) -> Vec<usize> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    pub fn physical_measure(&self) -> Measure {
        Measure {
            weights: self.leaves().map(|n| self.path_prob[n]).collect(),
        }
    }

    /// Price increment ΔS into `child`.
    pub fn increment(&self, child: usize) -> Vec<f64> {
        let parent = self.nodes[child].parent.expect("root has no increment");
        self.nodes[child]
            .price
            .iter()
            .zip(&self.nodes[parent].price)
            .map(|(s, s_prev)| s - s_prev)
            .collect()
    }

    /// Return increment ΔR = ΔS / S_prev into `child`.
    pub fn return_increment(&self, child: usize) -> Vec<f64> {
        let parent = self.nodes[child].parent.expect("root has no increment");
        self.nodes[child]
            .price
            .iter()
            .zip(&self.nodes[parent].price)
            .map(|(s, s_prev)| (s - s_prev) / s_prev)
            .collect()
    }

    pub(crate) fn increments(&self, child: usize, kind: Increment) -> Vec<f64> {
        match kind {
            Increment::Price => self.increment(child),
            Increment::Return => self.return_increment(child),
        }
    }

    /// Mass of the subtree below each node under `m`.
    pub fn node_masses(&self, m: &Measure) -> Vec<f64> {
        let mut mass = vec![0.0; self.nodes.len()];
        for (k, leaf) in self.leaves().enumerate() {
            mass[leaf] = m.weights[k];
        }
        for n in (1..self.nodes.len()).rev() {
            let p = self.nodes[n].parent.unwrap();
            let v = mass[n];
            mass[p] += v;
        }
        mass
    }

    /// Conditional one-step probabilities of the children of `node` under a
    /// measure with the given node masses. Zero-mass nodes fall back to the
    /// physical transition probabilities.
    pub fn transition_probs(&self, masses: &[f64], node: usize) -> Vec<f64> {
        let children = &self.nodes[node].children;
        if masses[node] > 0.0 {
            children.iter().map(|&c| masses[c] / masses[node]).collect()
        } else {
            children.iter().map(|&c| self.nodes[c].prob).collect()
        }
    }

    /// Fails unless `values` has one entry per leaf.
    pub fn check_leaf_values(&self, values: &[f64], what: &str) -> Result<(), MarketError> {
        if values.len() != self.leaf_count() {
            return Err(MarketError::Shape(format!(
                "{what}: expected {} leaf values, got {}",
                self.leaf_count(),
                values.len()
            )));
        }
        Ok(())
    }

    /// Fails unless `m` has one weight per leaf.
    pub fn check_measure(&self, m: &Measure) -> Result<(), MarketError> {
        if m.weights.len() != self.leaf_count() {
            return Err(MarketError::Shape(format!(
                "measure has {} weights, tree has {} leaves",
                m.weights.len(),
                self.leaf_count()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Increment {
    Price,
    Return,
}

/// Probability measure on the leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    weights: Vec<f64>,
}

impl Measure {
    pub fn new(weights: Vec<f64>) -> Result<Self, MarketError> {
        Self::with_tolerance(weights, DEFAULT_TOL)
    }

    pub fn with_tolerance(weights: Vec<f64>, tol: f64) -> Result<Self, MarketError> {
        if weights.is_empty() {
            return Err(MarketError::InvalidMeasure("no weights".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(MarketError::InvalidMeasure(format!(
                "weight {w} is negative or not finite"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(MarketError::InvalidMeasure(format!("weights sum to {sum}")));
        }
        Ok(Self { weights })
    }

    /// Normalizes non-negative weights to a probability measure.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self, MarketError> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(MarketError::InvalidMeasure(format!("total mass {sum}")));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_equivalent(&self) -> bool {
        self.weights.iter().all(|&w| w > 0.0)
    }

    pub fn expectation(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Leafwise density dself/dother; requires `other` to have full support.
    pub fn density(&self, other: &Measure) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| a / b)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyMode {
    /// Numbers of shares, integrated against price increments.
    Shares,
    /// Fractions of current wealth, integrated against returns.
    Fractions,
    /// Monetary amounts, integrated against returns.
    Amounts,
}

impl StrategyMode {
    pub(crate) fn increment(self) -> Increment {
        match self {
            StrategyMode::Shares => Increment::Price,
            StrategyMode::Fractions | StrategyMode::Amounts => Increment::Return,
        }
    }
}

/// Predictable strategy: one position vector per non-terminal node, applied
/// to the step leaving that node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    mode: StrategyMode,
    positions: Vec<Vec<f64>>,
}

impl Strategy {
    pub fn zeros(tree: &ScenarioTree, mode: StrategyMode) -> Self {
        Self::constant(tree, mode, &vec![0.0; tree.assets()])
    }

    pub fn constant(tree: &ScenarioTree, mode: StrategyMode, position: &[f64]) -> Self {
        Self {
            mode,
            positions: vec![position.to_vec(); tree.internal_count()],
        }
    }

    pub fn from_positions(
        tree: &ScenarioTree,
        mode: StrategyMode,
        positions: Vec<Vec<f64>>,
    ) -> Result<Self, MarketError> {
        if positions.len() != tree.internal_count() {
            return Err(MarketError::Shape(format!(
                "strategy has {} positions, tree has {} non-terminal nodes",
                positions.len(),
                tree.internal_count()
            )));
        }
        if positions.iter().any(|p| p.len() != tree.assets()) {
            return Err(MarketError::Shape(
                "position length differs from asset count".into(),
            ));
        }
        Ok(Self { mode, positions })
    }

    /// Builds a strategy from a flat vector laid out node-major.
    pub(crate) fn from_flat(tree: &ScenarioTree, mode: StrategyMode, flat: &[f64]) -> Self {
        let d = tree.assets();
        Self {
            mode,
            positions: flat.chunks(d).map(|c| c.to_vec()).collect(),
        }
    }

    pub(crate) fn to_flat(&self) -> Vec<f64> {
        self.positions.iter().flatten().copied().collect()
    }

    pub fn mode(&self) -> StrategyMode {
        self.mode
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn at(&self, node: usize) -> &[f64] {
        &self.positions[node]
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|x| c * x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            mode: self.mode,
            positions: self
                .positions
                .iter()
                .map(|p| p.iter().map(|&x| f(x)).collect())
                .collect(),
        }
    }

    pub fn with_mode(mut self, mode: StrategyMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn difference(&self, other: &Strategy) -> Result<Strategy, MarketError> {
        if self.mode != other.mode {
            return Err(MarketError::ModeMismatch {
                left: self.mode,
                right: other.mode,
            });
        }
        if self.positions.len() != other.positions.len() {
            return Err(MarketError::Shape(
                "strategies live on different trees".into(),
            ));
        }
        Ok(Strategy {
            mode: self.mode,
            positions: self
                .positions
                .iter()
                .zip(&other.positions)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
        })
    }

    /// Largest absolute component over all nodes.
    pub fn sup_norm(&self) -> f64 {
        self.positions
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, x| acc.max(x.abs()))
    }
}

/// One value per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptedProcess {
    values: Vec<f64>,
}

impl AdaptedProcess {
    pub fn new(tree: &ScenarioTree, values: Vec<f64>) -> Result<Self, MarketError> {
        if values.len() != tree.num_nodes() {
            return Err(MarketError::Shape(format!(
                "process has {} values, tree has {} nodes",
                values.len(),
                tree.num_nodes()
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, node: usize) -> f64 {
        self.values[node]
    }

    /// Terminal values in leaf-ordinal order.
    pub fn terminal<'a>(&'a self, tree: &ScenarioTree) -> &'a [f64] {
        &self.values[tree.leaves()]
    }
}

pub fn build_tree(spec: &TreeSpec) -> Result<ScenarioTree, MarketError> {
    build_tree_with_tolerance(spec, DEFAULT_TOL)
}

pub fn build_tree_with_tolerance(spec: &TreeSpec, tol: f64) -> Result<ScenarioTree, MarketError> {
    match spec {
        TreeSpec::Lattice(l) => {
            if !(l.u > l.d) {
                return Err(MarketError::InvalidSpec(format!(
                    "u = {} must exceed d = {}",
                    l.u, l.d
                )));
            }
            let multinomial = MultinomialSpec {
                s0: vec![l.s0],
                moves: vec![vec![l.u], vec![l.d]],
                probs: vec![l.q, 1.0 - l.q],
                steps: l.steps,
            };
            if !(l.q > 0.0 && l.q < 1.0) {
                return Err(MarketError::InvalidSpec(format!(
                    "branch probability {} outside (0,1)",
                    l.q
                )));
            }
            build_multinomial(&multinomial, tol)
        }
        TreeSpec::Multinomial(m) => build_multinomial(m, tol),
        TreeSpec::Nodes(nodes) => build_from_nodes(nodes, tol),
    }
}

fn build_multinomial(spec: &MultinomialSpec, tol: f64) -> Result<ScenarioTree, MarketError> {
    if spec.steps == 0 {
        return Err(MarketError::InvalidSpec("steps must be at least 1".into()));
    }
    if spec.moves.len() != spec.probs.len() {
        return Err(MarketError::InvalidSpec(
            "moves and probs differ in length".into(),
        ));
    }
    if spec.moves.iter().any(|m| m.len() != spec.s0.len()) {
        return Err(MarketError::InvalidSpec(
            "move dimension differs from asset count".into(),
        ));
    }
    if spec.moves.iter().flatten().any(|f| !(*f > 0.0)) {
        return Err(MarketError::InvalidSpec(
            "price factors must be positive".into(),
        ));
    }
    let mut nodes = vec![NodeSpec {
        parent: None,
        prob: None,
        price: spec.s0.clone(),
    }];
    let mut frontier = vec![0usize];
    for _ in 0..spec.steps {
        let mut next = Vec::with_capacity(frontier.len() * spec.moves.len());
        for &parent in &frontier {
            for (mv, &q) in spec.moves.iter().zip(&spec.probs) {
                let price = nodes[parent]
                    .price
                    .iter()
                    .zip(mv)
                    .map(|(s, f)| s * f)
                    .collect();
                nodes.push(NodeSpec {
                    parent: Some(parent),
                    prob: Some(q),
                    price,
                });
                next.push(nodes.len() - 1);
            }
        }
        frontier = next;
    }
    build_from_nodes(&nodes, tol)
}

fn build_from_nodes(specs: &[NodeSpec], tol: f64) -> Result<ScenarioTree, MarketError> {
    if specs.is_empty() {
        return Err(MarketError::InvalidSpec("empty node list".into()));
    }
    let roots: Vec<usize> = (0..specs.len())
        .filter(|&i| specs[i].parent.is_none())
        .collect();
    if roots != [0] {
        return Err(MarketError::InvalidSpec(
            "exactly one root, listed first, is required".into(),
        ));
    }
    let assets = specs[0].price.len();
    if assets == 0 {
        return Err(MarketError::InvalidSpec(
            "price vectors must be non-empty".into(),
        ));
    }
    let mut input_children = vec![Vec::new(); specs.len()];
    for (i, s) in specs.iter().enumerate() {
        if s.price.len() != assets {
            return Err(MarketError::InvalidSpec(format!(
                "node {i}: price dimension differs"
            )));
        }
        if s.price.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(MarketError::InvalidSpec(format!(
                "node {i}: non-positive price"
            )));
        }
        if let Some(p) = s.parent {
            if p >= i {
                return Err(MarketError::InvalidSpec(format!(
                    "node {i}: parent {p} must precede it"
                )));
            }
            let q = s
                .prob
                .ok_or_else(|| MarketError::InvalidSpec(format!("node {i}: missing prob")))?;
            if !(q > 0.0 && q < 1.0) {
                return Err(MarketError::InvalidSpec(format!(
                    "node {i}: probability {q} outside (0,1)"
                )));
            }
            input_children[p].push(i);
        }
    }

    // Breadth-first relabelling.
    let mut order = Vec::with_capacity(specs.len());
    let mut new_id = vec![usize::MAX; specs.len()];
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        new_id[i] = order.len();
        order.push(i);
        queue.extend(input_children[i].iter().copied());
    }

    let mut nodes: Vec<Node> = Vec::with_capacity(specs.len());
    for &i in &order {
        let parent = specs[i].parent.map(|p| new_id[p]);
        let time = parent.map_or(0, |p| nodes[p].time + 1);
        nodes.push(Node {
            parent,
            time,
            prob: if parent.is_some() {
                specs[i].prob.unwrap()
            } else {
                1.0
            },
            price: specs[i].price.clone(),
            children: input_children[i].iter().map(|&c| new_id[c]).collect(),
        });
    }

    let horizon = nodes.last().unwrap().time;
    if horizon == 0 {
        return Err(MarketError::InvalidSpec(
            "tree needs at least one step".into(),
        ));
    }
    for (id, n) in nodes.iter().enumerate() {
        if n.children.is_empty() && n.time != horizon {
            return Err(MarketError::InvalidSpec(format!(
                "leaf {id} at time {} before horizon {horizon}",
                n.time
            )));
        }
        if n.time < horizon {
            if n.children.len() < 2 {
                return Err(MarketError::TooFewChildren { node: id });
            }
            let sum: f64 = n.children.iter().map(|&c| nodes[c].prob).sum();
            if (sum - 1.0).abs() > tol {
                return Err(MarketError::ProbabilitySum { node: id, sum });
            }
        }
    }

    let mut level_start = vec![0usize; horizon + 2];
    for t in 0..=horizon {
        level_start[t + 1] = level_start[t] + nodes.iter().filter(|n| n.time == t).count();
    }

    let mut path_prob = vec![1.0; nodes.len()];
    for id in 1..nodes.len() {
        path_prob[id] = path_prob[nodes[id].parent.unwrap()] * nodes[id].prob;
    }

    let leaf_start = level_start[horizon];
    // start at an inverted sentinel so the first child sets both ends
    let mut leaf_range: Vec<Range<usize>> = vec![
        Range {
            start: usize::MAX,
            end: 0
        };
        nodes.len()
    ];
    for id in (0..nodes.len()).rev() {
        if id >= leaf_start {
            leaf_range[id] = (id - leaf_start)..(id - leaf_start + 1);
        }
        if let Some(p) = nodes[id].parent {
            let r = leaf_range[id].clone();
            let pr = &mut leaf_range[p];
            pr.start = pr.start.min(r.start);
            pr.end = pr.end.max(r.end);
        }
    }

    let tree = ScenarioTree {
        nodes,
        horizon,
        assets,
        level_start,
        path_prob,
        leaf_range,
    };
    for id in tree.internal_nodes() {
        let cov = one_step_covariance(&tree, id, &[], Increment::Price);
        let scale = cov.diagonal().iter().fold(0.0_f64, |a, &b| a.max(b));
        let min_eig = SymmetricEigen::new(cov)
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        if !(scale > 0.0) || min_eig <= 1e-12 * scale {
            return Err(MarketError::DegenerateNode { node: id });
        }
    }
    Ok(tree)
}

/// Conditional covariance of the one-step increments leaving `node` under
/// the transition probabilities `probs`.
pub(crate) fn one_step_covariance(
    tree: &ScenarioTree,
    node: usize,
    probs: &[f64],
    kind: Increment,
) -> DMatrix<f64> {
    let children = tree.node(node).children();
    // `probs` may be empty to request the physical transition probabilities.
    let probs: Vec<f64> = if probs.is_empty() {
        children.iter().map(|&c| tree.node(c).prob).collect()
    } else {
        probs.to_vec()
    };
    let d = tree.assets();
    let incs: Vec<Vec<f64>> = children.iter().map(|&c| tree.increments(c, kind)).collect();
    let mut mean = vec![0.0; d];
    for (inc, q) in incs.iter().zip(&probs) {
        for i in 0..d {
            mean[i] += q * inc[i];
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for (inc, q) in incs.iter().zip(&probs) {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += q * (inc[i] - mean[i]) * (inc[j] - mean[j]);
            }
        }
    }
    cov
}

fn check_mode(s: &Strategy, expected: StrategyMode) -> Result<(), MarketError> {
    if s.mode != expected {
        return Err(MarketError::ModeMismatch {
            left: expected,
            right: s.mode,
        });
    }
    Ok(())
}

fn check_strategy(tree: &ScenarioTree, s: &Strategy) -> Result<(), MarketError> {
    if s.positions.len() != tree.internal_count() {
        return Err(MarketError::Shape("strategy does not match tree".into()));
    }
    Ok(())
}

/// Wealth of a share strategy: X_t = x0 + Σ H_{s-1}·ΔS_s.
pub fn wealth_additive(
    tree: &ScenarioTree,
    h: &Strategy,
    x0: f64,
) -> Result<AdaptedProcess, MarketError> {
    check_mode(h, StrategyMode::Shares)?;
    check_strategy(tree, h)?;
    let mut values = vec![x0; tree.num_nodes()];
    for id in 1..tree.num_nodes() {
        let p = tree.node(id).parent.unwrap();
        let inc = tree.increment(id);
        values[id] = values[p] + dot(h.at(p), &inc);
    }
    Ok(AdaptedProcess { values })
}

/// Wealth of a fraction strategy: X_t = X_{t-1}(1 + π_{t-1}·ΔR_t).
pub fn wealth_multiplicative(
    tree: &ScenarioTree,
    pi: &Strategy,
    x0: f64,
) -> Result<AdaptedProcess, MarketError> {
    check_mode(pi, StrategyMode::Fractions)?;
    check_strategy(tree, pi)?;
    if !(x0 > 0.0) {
        return Err(MarketError::AdmissibilityViolation {
            node: 0,
            wealth: x0,
        });
    }
    let mut values = vec![x0; tree.num_nodes()];
    for id in 1..tree.num_nodes() {
        let p = tree.node(id).parent.unwrap();
        let r = tree.return_increment(id);
        values[id] = values[p] * (1.0 + dot(pi.at(p), &r));
        if !(values[id] > 0.0) {
            return Err(MarketError::AdmissibilityViolation {
                node: id,
                wealth: values[id],
            });
        }
    }
    Ok(AdaptedProcess { values })
}

/// E_m[X_T | F_t] for every node at time `t`, in level order.
pub fn conditional_expectation(
    tree: &ScenarioTree,
    m: &Measure,
    terminal: &[f64],
    t: usize,
) -> Result<Vec<f64>, MarketError> {
    tree.check_leaf_values(terminal, "terminal values")?;
    let level: Vec<f64> = terminal.to_vec();
    project(tree, m, &level, tree.horizon(), t)
}

/// Conditional expectation of a time-`from` variable (one value per node
/// of that level) down to time `to ≤ from`.
pub fn project(
    tree: &ScenarioTree,
    m: &Measure,
    values: &[f64],
    from: usize,
    to: usize,
) -> Result<Vec<f64>, MarketError> {
    tree.check_measure(m)?;
    if to > from || from > tree.horizon() {
        return Err(MarketError::Shape(format!(
            "cannot project from time {from} to {to}"
        )));
    }
    if values.len() != tree.level(from).len() {
        return Err(MarketError::Shape(
            "value count differs from level size".into(),
        ));
    }
    let masses = tree.node_masses(m);
    let mut cur = values.to_vec();
    for t in (to..from).rev() {
        let base_next = tree.level(t + 1).start;
        cur = tree
            .level(t)
            .map(|n| {
                let probs = tree.transition_probs(&masses, n);
                tree.node(n)
                    .children()
                    .iter()
                    .zip(&probs)
                    .map(|(&c, q)| q * cur[c - base_next])
                    .sum()
            })
            .collect();
    }
    Ok(cur)
}

/// The martingale closure t ↦ E_m[X_T | F_t] as a process on all nodes.
pub fn martingale_closure(
    tree: &ScenarioTree,
    m: &Measure,
    terminal: &[f64],
) -> Result<AdaptedProcess, MarketError> {
    tree.check_leaf_values(terminal, "terminal values")?;
    tree.check_measure(m)?;
    let masses = tree.node_masses(m);
    let mut values = vec![0.0; tree.num_nodes()];
    for (k, leaf) in tree.leaves().enumerate() {
        values[leaf] = terminal[k];
    }
    for n in tree.internal_nodes().rev() {
        let probs = tree.transition_probs(&masses, n);
        values[n] = tree
            .node(n)
            .children()
            .iter()
            .zip(&probs)
            .map(|(&c, q)| q * values[c])
            .sum();
    }
    Ok(AdaptedProcess { values })
}

/// Largest one-step drift of the prices under `m`, over nodes charged by `m`.
pub fn martingale_residual(tree: &ScenarioTree, m: &Measure) -> Result<f64, MarketError> {
    tree.check_measure(m)?;
    let masses = tree.node_masses(m);
    let mut worst = 0.0_f64;
    for n in tree.internal_nodes() {
        if masses[n] <= 0.0 {
            continue;
        }
        let probs = tree.transition_probs(&masses, n);
        let mut drift = vec![0.0; tree.assets()];
        for (&c, q) in tree.node(n).children().iter().zip(&probs) {
            for (acc, inc) in drift.iter_mut().zip(tree.increment(c)) {
                *acc += q * inc;
            }
        }
        worst = drift.iter().fold(worst, |a, x| a.max(x.abs()));
    }
    Ok(worst)
}

/// Expected discrete predictable bracket of ((A − B)·S) under `m`:
/// Σ_nodes m(node) · (A−B)ᵀ Cov_m(Δ | node) (A−B).
///
/// Share strategies use price increments; fraction and amount strategies
/// use return increments.
pub fn bracket_distance(
    tree: &ScenarioTree,
    m: &Measure,
    a: &Strategy,
    b: &Strategy,
) -> Result<f64, MarketError> {
    let diff = a.difference(b)?;
    check_strategy(tree, &diff)?;
    tree.check_measure(m)?;
    let masses = tree.node_masses(m);
    let kind = diff.mode.increment();
    let mut total = 0.0;
    for n in tree.internal_nodes() {
        if masses[n] <= 0.0 {
            continue;
        }
        let probs = tree.transition_probs(&masses, n);
        let cov = one_step_covariance(tree, n, &probs, kind);
        let h = diff.at(n);
        let mut quad = 0.0;
        for i in 0..h.len() {
            for j in 0..h.len() {
                quad += h[i] * cov[(i, j)] * h[j];
            }
        }
        total += masses[n] * quad;
    }
    Ok(total)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-step binomial or multi-step binomial lattice shorthand.
pub fn binomial(
    s0: f64,
    u: f64,
    d: f64,
    q: f64,
    steps: usize,
) -> Result<ScenarioTree, MarketError> {
    build_tree(&TreeSpec::Lattice(LatticeSpec { s0, u, d, q, steps }))
}
