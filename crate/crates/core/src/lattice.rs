//! Mixture-of-Dirichlet-processes state: lattice nodes, the type registry,
//! the baseline measure, and the weighted node table.
//!
//! Every distribution the library produces is a finite mixture
//! `sum_m w_m Pi_{alpha + sum_k m_k delta_{y_k}}` indexed by multiplicity
//! vectors `m` over the registered types. Node tables are `BTreeMap`s so every
//! reduction walks nodes in lexicographic order and floating-point results
//! are reproducible run to run.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::error::{Error, Result};

/// Weights must sum to one within this tolerance after every public operation.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Default pruning threshold.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Multiplicity vector over the registered types.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Node {
    counts: Vec<u32>,
    size: u32,
}

impl Node {
    pub fn new(counts: Vec<u32>) -> Self {
        let size = counts.iter().sum();
        Node { counts, size }
    }

    pub fn zeros(len: usize) -> Self {
        Node { counts: vec![0; len], size: 0 }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// `|m|`, the total multiplicity.
    pub fn cardinality(&self) -> u32 {
        self.size
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.size == 0
    }

    pub fn get(&self, k: usize) -> u32 {
        self.counts[k]
    }

    /// Number of types with a nonzero count.
    pub fn active_types(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Componentwise `self <= other`.
    pub fn is_dominated_by(&self, other: &Node) -> bool {
        self.len() == other.len() && self.counts.iter().zip(&other.counts).all(|(a, b)| a <= b)
    }

    pub fn plus(&self, other: &Node) -> Node {
        debug_assert_eq!(self.len(), other.len());
        Node::new(self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect())
    }

    /// Copy of `self` with `extra` zero coordinates appended.
    pub fn padded(&self, extra: usize) -> Node {
        let mut counts = self.counts.clone();
        counts.resize(self.len() + extra, 0);
        Node { counts, size: self.size }
    }

    /// Decrement coordinate `k` in place.
    pub(crate) fn remove_one(&mut self, k: usize) {
        debug_assert!(self.counts[k] > 0);
        self.counts[k] -= 1;
        self.size -= 1;
    }

    /// Every node `n <= self`, in lexicographic order.
    pub fn lower_box(&self) -> LowerBox<'_> {
        LowerBox { upper: self, next: Some(Node::zeros(self.len())) }
    }

    /// Number of nodes in `lower_box`, `prod_k (m_k + 1)`.
    pub fn lower_box_size(&self) -> u128 {
        self.counts.iter().map(|&c| u128::from(c) + 1).product()
    }
}

impl fmt::Debug for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.counts)
    }
}

impl From<Vec<u32>> for Node {
    fn from(counts: Vec<u32>) -> Self {
        Node::new(counts)
    }
}

impl<const K: usize> From<[u32; K]> for Node {
    fn from(counts: [u32; K]) -> Self {
        Node::new(counts.to_vec())
    }
}

/// Odometer over the box `{n : n <= upper}`.
pub struct LowerBox<'a> {
    upper: &'a Node,
    next: Option<Node>,
}

impl Iterator for LowerBox<'_> {
    type Item = Node;

    fn next(&mut self) -> Option<Node> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        // Increment the last coordinate first so output is lexicographic.
        let mut k = succ.len();
        loop {
            if k == 0 {
                break;
            }
            k -= 1;
            if succ.counts[k] < self.upper.counts[k] {
                succ.counts[k] += 1;
                succ.size += 1;
                self.next = Some(succ);
                break;
            }
            succ.size -= succ.counts[k];
            succ.counts[k] = 0;
        }
        Some(current)
    }
}

/// Append-only list of distinct observed labels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TypeRegistry {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl TypeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut reg = TypeRegistry::new();
        for l in labels {
            reg.push(l.into())?;
        }
        Ok(reg)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, k: usize) -> &str {
        &self.labels[k]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    pub fn push(&mut self, label: String) -> Result<usize> {
        if self.index.contains_key(&label) {
            return Err(Error::DuplicateLabel(label));
        }
        let k = self.labels.len();
        self.index.insert(label.clone(), k);
        self.labels.push(label);
        Ok(k)
    }
}

/// Offspring distribution `P0`. `alpha = theta * P0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Baseline {
    /// Diffuse `P0`: every particular label has mass zero.
    Nonatomic,
    /// Atom table `label -> P0(label)`. Mass not listed belongs to atoms that
    /// have not been observed.
    Atomic(Vec<(String, f64)>),
}

impl Baseline {
    /// Validates an atom table: distinct labels, positive masses, total at most one.
    pub fn atomic<I, S>(atoms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let atoms: Vec<(String, f64)> = atoms.into_iter().map(|(l, p)| (l.into(), p)).collect();
        let mut seen = BTreeSet::new();
        let mut total = 0.0;
        for (label, p) in &atoms {
            if !seen.insert(label.as_str()) {
                return Err(Error::DuplicateLabel(label.clone()));
            }
            if !(p.is_finite() && *p > 0.0) {
                return Err(Error::Invalid(format!("atom {label:?} has mass {p}")));
            }
            total += p;
        }
        if total > 1.0 + 1e-9 {
            return Err(Error::Invalid(format!("atom masses sum to {total} > 1")));
        }
        Ok(Baseline::Atomic(atoms))
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Baseline::Atomic(_))
    }

    /// `P0({label})`.
    pub fn mass(&self, label: &str) -> f64 {
        match self {
            Baseline::Nonatomic => 0.0,
            Baseline::Atomic(atoms) => {
                atoms.iter().find(|(l, _)| l == label).map_or(0.0, |(_, p)| *p)
            }
        }
    }
}

/// Finite mixture of Dirichlet-process laws indexed by lattice nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FvddpState {
    theta: f64,
    baseline: Baseline,
    registry: TypeRegistry,
    nodes: BTreeMap<Node, f64>,
}

impl FvddpState {
    /// Prior `Pi_alpha`: the zero node with weight one. Atomic baselines
    /// register their atoms up front.
    pub fn prior(theta: f64, baseline: Baseline) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::NonpositiveTheta(theta));
        }
        let registry = match &baseline {
            Baseline::Nonatomic => TypeRegistry::new(),
            Baseline::Atomic(atoms) => TypeRegistry::from_labels(atoms.iter().map(|(l, _)| l.clone()))?,
        };
        let mut nodes = BTreeMap::new();
        nodes.insert(Node::zeros(registry.len()), 1.0);
        Ok(FvddpState { theta, baseline, registry, nodes })
    }

    /// Builds a state from raw parts. Weights are validated and renormalized;
    /// zero-weight rows are dropped.
    pub fn from_parts(
        theta: f64,
        baseline: Baseline,
        registry: TypeRegistry,
        nodes: BTreeMap<Node, f64>,
    ) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::NonpositiveTheta(theta));
        }
        if let Some(bad) = nodes.keys().find(|n| n.len() != registry.len()) {
            return Err(Error::Invalid(format!(
                "node {bad:?} has length {} but {} types are registered",
                bad.len(),
                registry.len()
            )));
        }
        let nodes = normalize_table(nodes)?;
        Ok(FvddpState { theta, baseline, registry, nodes })
    }

    /// Same as `from_parts` but keeps the weights bit-for-bit; they must
    /// already be positive and normalized.
    pub fn from_normalized_parts(
        theta: f64,
        baseline: Baseline,
        registry: TypeRegistry,
        nodes: BTreeMap<Node, f64>,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Invalid("state has no nodes".into()));
        }
        if let Some(w) = nodes.values().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Invalid(format!("weight {w} is not positive")));
        }
        let total: f64 = nodes.values().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE * nodes.len().max(1) as f64 {
            return Err(Error::Invalid(format!("weights sum to {total}")));
        }
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::NonpositiveTheta(theta));
        }
        if let Some(bad) = nodes.keys().find(|n| n.len() != registry.len()) {
            return Err(Error::Invalid(format!("node {bad:?} does not match the registry")));
        }
        Ok(FvddpState { theta, baseline, registry, nodes })
    }

    pub(crate) fn with_nodes(&self, nodes: BTreeMap<Node, f64>) -> Result<Self> {
        Ok(FvddpState {
            theta: self.theta,
            baseline: self.baseline.clone(),
            registry: self.registry.clone(),
            nodes: normalize_table(nodes)?,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn baseline(&self) -> &Baseline {
        &self.baseline
    }

    pub fn registry(&self) -> &TypeRegistry {
        &self.registry
    }

    pub fn nodes(&self) -> &BTreeMap<Node, f64> {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight(&self, node: &Node) -> f64 {
        self.nodes.get(node).copied().unwrap_or(0.0)
    }

    pub fn max_cardinality(&self) -> u32 {
        self.nodes.keys().map(Node::cardinality).max().unwrap_or(0)
    }

    /// `alpha(y_k) = theta * P0(y_k)` for each registered type.
    pub fn alpha(&self) -> Vec<f64> {
        self.registry.labels().iter().map(|l| self.theta * self.baseline.mass(l)).collect()
    }

    /// `P0` mass not carried by registered labels.
    pub fn residual_mass(&self) -> f64 {
        match &self.baseline {
            Baseline::Nonatomic => 1.0,
            Baseline::Atomic(_) => {
                let covered: f64 = self.registry.labels().iter().map(|l| self.baseline.mass(l)).sum();
                (1.0 - covered).max(0.0)
            }
        }
    }

    /// Re-expresses the state over `target`, which must contain every
    /// registered label. Coordinates follow `target` order.
    pub fn align_to(&self, target: &TypeRegistry) -> Result<Self> {
        let map: Vec<usize> = self
            .registry
            .labels()
            .iter()
            .map(|l| {
                target
                    .index_of(l)
                    .ok_or_else(|| Error::Invalid(format!("label {l:?} missing from target registry")))
            })
            .collect::<Result<_>>()?;
        let nodes = self
            .nodes
            .iter()
            .map(|(n, &w)| {
                let mut counts = vec![0; target.len()];
                for (k, &c) in n.counts().iter().enumerate() {
                    counts[map[k]] = c;
                }
                (Node::new(counts), w)
            })
            .collect();
        Ok(FvddpState {
            theta: self.theta,
            baseline: self.baseline.clone(),
            registry: target.clone(),
            nodes,
        })
    }
}

fn normalize_table(nodes: BTreeMap<Node, f64>) -> Result<BTreeMap<Node, f64>> {
    if let Some(&w) = nodes.values().find(|w| **w < 0.0 || w.is_nan()) {
        return Err(Error::NegativeWeight(w));
    }
    let total: f64 = nodes.values().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::AllZero);
    }
    Ok(nodes.into_iter().filter(|(_, w)| *w > 0.0).map(|(n, w)| (n, w / total)).collect())
}

/// Rescales nonnegative weights to sum to one.
pub fn normalize(weights: &[f64]) -> Result<Vec<f64>> {
    if let Some(&w) = weights.iter().find(|w| **w < 0.0 || w.is_nan()) {
        return Err(Error::NegativeWeight(w));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZero);
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Drops nodes with weight strictly below `epsilon` and renormalizes.
pub fn prune(state: &FvddpState, epsilon: f64) -> Result<FvddpState> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::Invalid(format!("pruning threshold {epsilon} outside [0, 1)")));
    }
    if state.nodes.values().all(|&w| w >= epsilon) {
        return Ok(state.clone());
    }
    let kept: BTreeMap<Node, f64> =
        state.nodes.iter().filter(|(_, &w)| w >= epsilon).map(|(n, &w)| (n.clone(), w)).collect();
    if kept.is_empty() {
        let largest = state.nodes.values().copied().fold(0.0, f64::max);
        return Err(Error::EverythingPruned { epsilon, largest });
    }
    state.with_nodes(kept)
}

/// Sums weights of duplicate nodes. Entries are sorted by node, then weight,
/// before accumulating so the result does not depend on input order.
pub fn merge<I>(entries: I) -> BTreeMap<Node, f64>
where
    I: IntoIterator<Item = (Node, f64)>,
{
    let mut entries: Vec<(Node, f64)> = entries.into_iter().collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out = BTreeMap::new();
    for (n, w) in entries {
        *out.entry(n).or_insert(0.0) += w;
    }
    out
}

/// All lattice points dominated by some input node.
pub fn lower_set<'a, I>(nodes: I) -> BTreeSet<Node>
where
    I: IntoIterator<Item = &'a Node>,
{
    let mut out = BTreeSet::new();
    for m in nodes {
        if out.contains(m) {
            continue;
        }
        out.extend(m.lower_box());
    }
    out
}

/// Registers `new_labels`, zero-padding every node.
pub fn extend_registry<S: AsRef<str>>(state: &FvddpState, new_labels: &[S]) -> Result<FvddpState> {
    if new_labels.is_empty() {
        return Ok(state.clone());
    }
    let mut registry = state.registry.clone();
    for l in new_labels {
        registry.push(l.as_ref().to_owned())?;
    }
    let extra = new_labels.len();
    let nodes = state.nodes.iter().map(|(n, &w)| (n.padded(extra), w)).collect();
    Ok(FvddpState {
        theta: state.theta,
        baseline: state.baseline.clone(),
        registry,
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_with(nodes: &[(&[u32], f64)]) -> FvddpState {
        let k = nodes[0].0.len();
        let registry = TypeRegistry::from_labels((0..k).map(|i| format!("y{i}"))).unwrap();
        let table = nodes.iter().map(|(c, w)| (Node::new(c.to_vec()), *w)).collect();
        FvddpState::from_parts(1.0, Baseline::Nonatomic, registry, table).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[2.0, 2.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(normalize(&[1.0]).unwrap(), vec![1.0]);
        let out = normalize(&[0.3, 0.1, 0.6]).unwrap();
        for (a, b) in out.iter().zip([0.3, 0.1, 0.6]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(normalize(&[0.0, 0.0]), Err(Error::AllZero)));
        assert!(matches!(normalize(&[1.0, -0.1]), Err(Error::NegativeWeight(_))));
    }

    #[test]
    fn prune_threshold_semantics() {
        let s = state_with(&[(&[1, 0], 0.7), (&[0, 1], 0.3 - 1e-10), (&[1, 1], 1e-10)]);
        let p = prune(&s, 1e-9).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.weight(&Node::from([1, 1])), 0.0);
        let total: f64 = p.nodes().values().sum();
        assert!((total - 1.0).abs() < 1e-12);

        assert_eq!(prune(&s, 0.0).unwrap(), s);
    }

    #[test]
    fn prune_keeps_weight_equal_to_epsilon() {
        let registry = TypeRegistry::from_labels(["a", "b"]).unwrap();
        let mut table = BTreeMap::new();
        table.insert(Node::from([1, 0]), 0.999999999);
        table.insert(Node::from([0, 1]), 1e-9);
        let s = FvddpState::from_normalized_parts(1.0, Baseline::Nonatomic, registry, table).unwrap();
        assert_eq!(prune(&s, 1e-9).unwrap().len(), 2);
    }

    #[test]
    fn prune_everything_is_an_error() {
        let s = state_with(&[(&[1, 0], 0.5), (&[0, 1], 0.5)]);
        assert!(matches!(prune(&s, 0.6), Err(Error::EverythingPruned { .. })));
        assert!(matches!(prune(&s, 1.0), Err(Error::Invalid(_))));
    }

    #[test]
    fn merge_examples() {
        let entries = vec![
            (Node::from([1, 0]), 0.2),
            (Node::from([1, 0]), 0.3),
            (Node::from([0, 1]), 0.5),
        ];
        let merged = merge(entries.clone());
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[&Node::from([1, 0])], 0.5);
        assert_eq!(merged[&Node::from([0, 1])], 0.5);
        assert!(merge(Vec::new()).is_empty());
        let mut rev = entries;
        rev.reverse();
        assert_eq!(merge(rev), merged);
    }

    #[test]
    fn lower_set_examples() {
        let ls = lower_set([&Node::from([2, 1])]);
        let expected: BTreeSet<Node> =
            [[0, 0], [1, 0], [2, 0], [0, 1], [1, 1], [2, 1]].into_iter().map(Node::from).collect();
        assert_eq!(ls, expected);
        assert_eq!(lower_set([&Node::from([0, 0])]).len(), 1);
        let two = lower_set([&Node::from([1, 0]), &Node::from([0, 1])]);
        assert_eq!(two.len(), 3);
    }

    #[test]
    fn lower_box_is_lexicographic() {
        let all: Vec<Node> = Node::from([1, 2]).lower_box().collect();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(all, sorted);
        assert_eq!(all.len(), 6);
        assert!(all.iter().all(|n| n.cardinality() == n.counts().iter().sum::<u32>()));
        assert_eq!(Node::zeros(0).lower_box().count(), 1);
    }

    #[test]
    fn extend_registry_pads_nodes() {
        let s = state_with(&[(&[2, 1], 1.0)]);
        let e = extend_registry(&s, &["new"]).unwrap();
        assert_eq!(e.registry().len(), 3);
        assert_eq!(e.weight(&Node::from([2, 1, 0])), 1.0);
        assert_eq!(extend_registry::<&str>(&s, &[]).unwrap(), s);
        assert!(matches!(extend_registry(&s, &["y0"]), Err(Error::DuplicateLabel(_))));

        let prior = FvddpState::prior(1.0, Baseline::Nonatomic).unwrap();
        let e = extend_registry(&prior, &["a", "b"]).unwrap();
        assert_eq!(e.nodes().keys().next().unwrap(), &Node::zeros(2));
    }

    #[test]
    fn prior_shapes() {
        let s = FvddpState::prior(1.0, Baseline::Nonatomic).unwrap();
        assert_eq!(s.registry().len(), 0);
        assert_eq!(s.len(), 1);
        let b = Baseline::atomic([("a", 0.5), ("b", 0.5)]).unwrap();
        let s = FvddpState::prior(0.5, b).unwrap();
        assert_eq!(s.registry().len(), 2);
        assert_eq!(s.weight(&Node::zeros(2)), 1.0);
        assert!(matches!(FvddpState::prior(-1.0, Baseline::Nonatomic), Err(Error::NonpositiveTheta(_))));
    }

    #[test]
    fn align_permutes_and_pads() {
        let s = state_with(&[(&[2, 1], 1.0)]);
        let target = TypeRegistry::from_labels(["z", "y1", "y0"]).unwrap();
        let a = s.align_to(&target).unwrap();
        assert_eq!(a.weight(&Node::from([0, 1, 2])), 1.0);
    }
}
