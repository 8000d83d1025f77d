//! Smoothing: combines the forward filter at the last collection time before
//! `t` with the backward filter at the first collection time after `t`.
//!
//! Both filters are pushed toward `t` by independent death processes, and
//! every arrival pair `(k1, k2)` contributes to node `k1 + n + k2` with weight
//! `u_{m1} v_{m2} p_{m1,k1}(dt_past) p_{m2,k2}(dt_future) q(k1, n, k2)`,
//! normalized once over all contributions.

use std::collections::{BTreeMap, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::death::{gillespie_arrival, transition_row, CCoefficientCache, DeathModel};
use crate::error::{Error, Result};
use crate::filtering::{filter_dataset, Dataset, InferenceOptions, Mode, ObservationBatch};
use crate::lattice::{merge, prune, Baseline, FvddpState, Node, TypeRegistry};
use crate::mc::{next_seed, run_chunks};
use crate::numeric::{ln_factorial_pred, ln_rising};

/// Types whose information is shared across the past, present and future.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SharedIndexSets {
    /// Present in the past and in the present or the future.
    pub d_past: Vec<usize>,
    /// Present in the future and in the present or the past.
    pub d_future: Vec<usize>,
    /// `d_past ∪ d_future`.
    pub s: Vec<usize>,
}

impl SharedIndexSets {
    /// Sets from per-type presence flags for the past and future sides.
    pub fn from_presence(past: &[bool], n: &Node, future: &[bool]) -> Self {
        let mut sets = SharedIndexSets::default();
        for k in 0..n.len() {
            let now = n.get(k) > 0;
            let in_past = past[k] && (now || future[k]);
            let in_future = future[k] && (now || past[k]);
            if in_past {
                sets.d_past.push(k);
            }
            if in_future {
                sets.d_future.push(k);
            }
            if in_past || in_future {
                sets.s.push(k);
            }
        }
        sets
    }

    /// Whether `(k1, k2)` keeps every shared type alive on its side.
    pub fn supports(&self, k1: &Node, k2: &Node) -> bool {
        self.d_past.iter().all(|&k| k1.get(k) > 0) && self.d_future.iter().all(|&k| k2.get(k) > 0)
    }
}

/// Shared-index sets of an ancestor pair, from node positivity alone.
pub fn shared_index_sets(m1: &Node, n: &Node, m2: &Node) -> SharedIndexSets {
    let past: Vec<bool> = m1.counts().iter().map(|&c| c > 0).collect();
    let future: Vec<bool> = m2.counts().iter().map(|&c| c > 0).collect();
    SharedIndexSets::from_presence(&past, n, &future)
}

/// Shared-index sets where a type also counts as present on a side if it was
/// observed in that side's data, even when the ancestor node lost it.
pub fn shared_index_sets_with_history(
    m1: &Node,
    n: &Node,
    m2: &Node,
    past_seen: &[bool],
    future_seen: &[bool],
) -> SharedIndexSets {
    SharedIndexSets::from_presence(&presence(m1, past_seen), n, &presence(m2, future_seen))
}

fn presence(m: &Node, seen: &[bool]) -> Vec<bool> {
    m.counts().iter().zip(seen).map(|(&c, &s)| c > 0 || s).collect()
}

/// `ln m(x)`, the Dirichlet-multinomial probability of one ordered sequence
/// with counts `x`, with `|alpha| = theta`.
fn ln_sequence_marginal(x: &Node, theta: f64, alpha: &[f64]) -> f64 {
    let num: f64 = x.counts().iter().zip(alpha).map(|(&c, &a)| ln_rising(a, c)).sum();
    num - ln_rising(theta, x.cardinality())
}

fn ln_q_atomic(k1: &Node, n: &Node, k2: &Node, theta: f64, alpha: &[f64]) -> f64 {
    let joint = k1.plus(n).plus(k2);
    ln_sequence_marginal(&joint, theta, alpha)
        - ln_sequence_marginal(k1, theta, alpha)
        - ln_sequence_marginal(n, theta, alpha)
        - ln_sequence_marginal(k2, theta, alpha)
}

/// `q(k1, n, k2) = m(k1 + n + k2) / (m(k1) m(n) m(k2))` for an atomic
/// baseline with `P0` masses `atom_masses` on the registered types.
pub fn q_weight_atomic(k1: &Node, n: &Node, k2: &Node, theta: f64, atom_masses: &[f64]) -> f64 {
    let alpha: Vec<f64> = atom_masses.iter().map(|p| theta * p).collect();
    ln_q_atomic(k1, n, k2, theta, &alpha).exp()
}

fn ln_q_nonatomic(k1: &Node, n: &Node, k2: &Node, theta: f64, sets: &SharedIndexSets) -> f64 {
    if !sets.supports(k1, k2) {
        return f64::NEG_INFINITY;
    }
    let (a, b) = (k1.cardinality(), k2.cardinality());
    let mut acc = ln_rising(theta, a) + ln_rising(theta, b) - ln_rising(theta + f64::from(n.cardinality()), a + b);
    for &k in &sets.s {
        let (x, y, z) = (k1.get(k), n.get(k), k2.get(k));
        acc += ln_factorial_pred(x + y + z) - ln_factorial_pred(x) - ln_factorial_pred(y) - ln_factorial_pred(z);
        // each extra occurrence of an already-present type saves one theta
        let present = [x, y, z].iter().filter(|&&c| c > 0).count() as f64;
        acc -= (present - 1.0).max(0.0) * theta.ln();
    }
    acc
}

/// Smoothing reweighting for a nonatomic baseline. Zero unless every type in
/// `d_past` survives in `k1` and every type in `d_future` survives in `k2`.
pub fn q_weight_nonatomic(k1: &Node, n: &Node, k2: &Node, theta: f64, sets: &SharedIndexSets) -> f64 {
    ln_q_nonatomic(k1, n, k2, theta, sets).exp()
}

/// Both filters re-expressed over one registry, plus everything the q-weights need.
struct Frame {
    theta: f64,
    baseline: Baseline,
    registry: TypeRegistry,
    forward: FvddpState,
    backward: FvddpState,
    n: Node,
    past_seen: Vec<bool>,
    future_seen: Vec<bool>,
    alpha: Vec<f64>,
}

impl Frame {
    fn new(forward: &FvddpState, backward: &FvddpState, batch: &ObservationBatch) -> Result<Self> {
        if forward.theta() != backward.theta() || forward.baseline() != backward.baseline() {
            return Err(Error::Invalid("forward and backward filters use different models".into()));
        }
        let mut registry = forward.registry().clone();
        for l in backward.registry().labels() {
            if !registry.contains(l) {
                registry.push(l.clone())?;
            }
        }
        for l in batch.unseen_labels(&registry) {
            if forward.baseline().is_atomic() {
                return Err(Error::UnknownAtom(l));
            }
            registry.push(l)?;
        }
        let past_seen = registry.labels().iter().map(|l| forward.registry().contains(l)).collect();
        let future_seen = registry.labels().iter().map(|l| backward.registry().contains(l)).collect();
        let forward = forward.align_to(&registry)?;
        let backward = backward.align_to(&registry)?;
        let n = batch.multiplicities(&registry)?;
        let alpha = forward.alpha();
        Ok(Frame {
            theta: forward.theta(),
            baseline: forward.baseline().clone(),
            registry,
            forward,
            backward,
            n,
            past_seen,
            future_seen,
            alpha,
        })
    }

    fn is_atomic(&self) -> bool {
        self.baseline.is_atomic()
    }

    /// Presence flags of an ancestor; atomic baselines impose no support
    /// constraint so every ancestor maps to the same key.
    fn past_key(&self, m1: &Node) -> Vec<bool> {
        if self.is_atomic() {
            Vec::new()
        } else {
            presence(m1, &self.past_seen)
        }
    }

    fn future_key(&self, m2: &Node) -> Vec<bool> {
        if self.is_atomic() {
            Vec::new()
        } else {
            presence(m2, &self.future_seen)
        }
    }

    fn weigher(&self, past_key: &[bool], future_key: &[bool]) -> QWeigher<'_> {
        if self.is_atomic() {
            QWeigher::Atomic { theta: self.theta, alpha: &self.alpha }
        } else {
            QWeigher::Nonatomic {
                theta: self.theta,
                sets: SharedIndexSets::from_presence(past_key, &self.n, future_key),
            }
        }
    }

    fn finish(&self, table: BTreeMap<Node, f64>) -> Result<FvddpState> {
        FvddpState::from_parts(self.theta, self.baseline.clone(), self.registry.clone(), table).map_err(|e| match e {
            Error::AllZero => Error::ZeroLikelihood,
            other => other,
        })
    }
}

enum QWeigher<'a> {
    Atomic { theta: f64, alpha: &'a [f64] },
    Nonatomic { theta: f64, sets: SharedIndexSets },
}

impl QWeigher<'_> {
    fn ln_q(&self, k1: &Node, n: &Node, k2: &Node) -> f64 {
        match self {
            QWeigher::Atomic { theta, alpha } => ln_q_atomic(k1, n, k2, *theta, alpha),
            QWeigher::Nonatomic { theta, sets } => ln_q_nonatomic(k1, n, k2, *theta, sets),
        }
    }
}

fn check_gap(dt: f64) -> Result<()> {
    if dt < 0.0 || !dt.is_finite() {
        return Err(Error::Invalid(format!("time gap must be nonnegative, got {dt}")));
    }
    Ok(())
}

/// Pushes every ancestor through the death process and sums `w_m p_{m,k}`
/// per arrival `k`, separately for each ancestor support key.
fn propagate_groups<F>(
    state: &FvddpState,
    dt: f64,
    key: F,
    model: &DeathModel,
    cache: &CCoefficientCache,
) -> Result<BTreeMap<Vec<bool>, BTreeMap<Node, f64>>>
where
    F: Fn(&Node) -> Vec<bool>,
{
    let mut groups: BTreeMap<Vec<bool>, BTreeMap<Node, f64>> = BTreeMap::new();
    for (m, &w) in state.nodes() {
        let group = groups.entry(key(m)).or_default();
        if dt == 0.0 {
            *group.entry(m.clone()).or_insert(0.0) += w;
            continue;
        }
        for (k, p) in transition_row(m, dt, model, cache)? {
            if p > 0.0 {
                *group.entry(k).or_insert(0.0) += w * p;
            }
        }
    }
    Ok(groups)
}

/// Number of `(k1, k2)` combinations `smooth_exact` would visit.
pub fn exact_pair_count(forward: &FvddpState, backward: &FvddpState) -> u128 {
    let a: u128 = forward.nodes().keys().map(Node::lower_box_size).sum();
    let b: u128 = backward.nodes().keys().map(Node::lower_box_size).sum();
    a.saturating_mul(b)
}

/// Exact smoothing distribution at a time `dt_past` after the forward filter
/// and `dt_future` before the backward filter, with `batch` observed at that
/// time. A zero gap means no propagation on that side.
pub fn smooth_exact(
    forward: &FvddpState,
    backward: &FvddpState,
    batch: &ObservationBatch,
    dt_past: f64,
    dt_future: f64,
    pair_budget: u128,
) -> Result<FvddpState> {
    check_gap(dt_past)?;
    check_gap(dt_future)?;
    let pairs = exact_pair_count(forward, backward);
    if pairs > pair_budget {
        return Err(Error::ExactInfeasible(format!(
            "exact smoothing needs {pairs} descendant pairs (budget {pair_budget})"
        )));
    }
    let frame = Frame::new(forward, backward, batch)?;
    let model = DeathModel::new(frame.theta)?;
    let cache = CCoefficientCache::new(model);
    let past = propagate_groups(&frame.forward, dt_past, |m| frame.past_key(m), &model, &cache)?;
    let future = propagate_groups(&frame.backward, dt_future, |m| frame.future_key(m), &model, &cache)?;

    let mut acc: HashMap<Node, f64> = HashMap::new();
    for (past_key, arrivals1) in &past {
        for (future_key, arrivals2) in &future {
            let weigher = frame.weigher(past_key, future_key);
            for (k1, &a1) in arrivals1 {
                let shifted = k1.plus(&frame.n);
                for (k2, &a2) in arrivals2 {
                    let lq = weigher.ln_q(k1, &frame.n, k2);
                    if lq == f64::NEG_INFINITY {
                        continue;
                    }
                    *acc.entry(shifted.plus(k2)).or_insert(0.0) += a1 * a2 * lq.exp();
                }
            }
        }
    }
    frame.finish(acc.into_iter().filter(|(_, w)| *w > 0.0).collect())
}

/// Per descendant pair: analytic q-weight and Monte Carlo draw count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinEntry {
    pub q_value: f64,
    pub draw_count: u64,
}

/// Descendant pairs sampled from one ancestor pair `(m1, m2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AncestorBin {
    pub m1: Node,
    pub m2: Node,
    /// `u_{m1} v_{m2}`.
    pub ancestor_weight: f64,
    pub entries: BTreeMap<(Node, Node), BinEntry>,
}

impl AncestorBin {
    pub fn draws(&self) -> u64 {
        self.entries.values().map(|e| e.draw_count).sum()
    }

    /// Canonical text key `m1|m2`.
    pub fn key(&self) -> String {
        let join = |n: &Node| n.counts().iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        format!("{}|{}", join(&self.m1), join(&self.m2))
    }
}

/// Folds bins into node weights: each bin contributes
/// `bin_weight(bin) * q * entry_frequency(bin, entry)` to node `k1 + n + k2`.
pub fn combine_bins<B, E>(bins: &[AncestorBin], n: &Node, bin_weight: B, entry_frequency: E) -> BTreeMap<Node, f64>
where
    B: Fn(&AncestorBin) -> f64,
    E: Fn(&AncestorBin, &(Node, Node), &BinEntry) -> f64,
{
    let mut contributions = Vec::new();
    for bin in bins {
        let outer = bin_weight(bin);
        for (pair, entry) in &bin.entries {
            let w = outer * entry.q_value * entry_frequency(bin, pair, entry);
            if w > 0.0 {
                contributions.push((pair.0.plus(n).plus(&pair.1), w));
            }
        }
    }
    merge(contributions)
}

/// Samples ancestor pairs and their death-process arrivals, then computes
/// q-weights once per distinct descendant pair.
pub fn sample_bins(
    forward: &FvddpState,
    backward: &FvddpState,
    batch: &ObservationBatch,
    dt_past: f64,
    dt_future: f64,
    particles: u64,
    seed: u64,
) -> Result<(Vec<AncestorBin>, Node, FvddpState)> {
    check_gap(dt_past)?;
    check_gap(dt_future)?;
    if particles == 0 {
        return Err(Error::Invalid("particle count must be positive".into()));
    }
    let frame = Frame::new(forward, backward, batch)?;
    let model = DeathModel::new(frame.theta)?;
    let past: Vec<(&Node, f64)> = frame.forward.nodes().iter().map(|(n, &w)| (n, w)).collect();
    let future: Vec<(&Node, f64)> = frame.backward.nodes().iter().map(|(n, &w)| (n, w)).collect();
    let pick_past = WeightedIndex::new(past.iter().map(|p| p.1)).map_err(|e| Error::Invalid(e.to_string()))?;
    let pick_future = WeightedIndex::new(future.iter().map(|p| p.1)).map_err(|e| Error::Invalid(e.to_string()))?;

    type Counts = HashMap<(usize, usize), HashMap<(Node, Node), u64>>;
    let chunks: Vec<Counts> = run_chunks(particles, seed, |rng, count| {
        let mut bins: Counts = HashMap::new();
        for _ in 0..count {
            let i1 = pick_past.sample(rng);
            let i2 = pick_future.sample(rng);
            let k1 = if dt_past > 0.0 { gillespie_arrival(past[i1].0, dt_past, &model, rng) } else { past[i1].0.clone() };
            let k2 = if dt_future > 0.0 {
                gillespie_arrival(future[i2].0, dt_future, &model, rng)
            } else {
                future[i2].0.clone()
            };
            *bins.entry((i1, i2)).or_default().entry((k1, k2)).or_insert(0) += 1;
        }
        bins
    });
    let mut merged: BTreeMap<(usize, usize), HashMap<(Node, Node), u64>> = BTreeMap::new();
    for chunk in chunks {
        for (key, entries) in chunk {
            let bin = merged.entry(key).or_default();
            for (pair, c) in entries {
                *bin.entry(pair).or_insert(0) += c;
            }
        }
    }

    let bins = merged
        .into_iter()
        .map(|((i1, i2), entries)| {
            let (m1, u) = past[i1];
            let (m2, v) = future[i2];
            let weigher = frame.weigher(&frame.past_key(m1), &frame.future_key(m2));
            let entries = entries
                .into_iter()
                .map(|(pair, draw_count)| {
                    let q_value = weigher.ln_q(&pair.0, &frame.n, &pair.1).exp();
                    (pair, BinEntry { q_value, draw_count })
                })
                .collect();
            AncestorBin { m1: m1.clone(), m2: m2.clone(), ancestor_weight: u * v, entries }
        })
        .collect();
    let template = frame.finish(BTreeMap::from([(Node::zeros(frame.registry.len()), 1.0)]))?;
    Ok((bins, frame.n, template))
}

/// Monte Carlo smoothing with `particles` ancestor pairs. Each sampled pair
/// lands in the bin of its ancestors; node weights are the empirical average
/// of q over all particles, renormalized and pruned at `epsilon`.
#[allow(clippy::too_many_arguments)]
pub fn smooth_mc(
    forward: &FvddpState,
    backward: &FvddpState,
    batch: &ObservationBatch,
    dt_past: f64,
    dt_future: f64,
    particles: u64,
    epsilon: f64,
    seed: u64,
) -> Result<FvddpState> {
    let (bins, n, template) = sample_bins(forward, backward, batch, dt_past, dt_future, particles, seed)?;
    let total = particles as f64;
    let table = combine_bins(
        &bins,
        &n,
        |bin| bin.draws() as f64 / total,
        |bin, _, entry| entry.draw_count as f64 / bin.draws() as f64,
    );
    if table.is_empty() {
        return Err(Error::DegenerateBins);
    }
    prune(&template.with_nodes(table)?, epsilon)
}

/// Filter of the time-reversed `suffix`: the law at the suffix's first time
/// given the suffix data.
pub fn backward_filter(suffix: &Dataset, opts: &InferenceOptions) -> Result<FvddpState> {
    if suffix.is_empty() {
        return Err(Error::Invalid("backward filter needs at least one collection time".into()));
    }
    filter_dataset(&suffix.reversed(), opts)
}

/// Smoothing distribution at time `t` given the whole dataset. Data at `t`
/// (if `t` is a collection time) enter as the present batch.
pub fn smooth_dataset(dataset: &Dataset, t: f64, opts: &InferenceOptions) -> Result<FvddpState> {
    let times = dataset.times();
    let (first, last) = match (times.first(), times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::Invalid("dataset has no collection times".into())),
    };
    if !(first..=last).contains(&t) {
        return Err(Error::Invalid(format!("time {t} outside [{first}, {last}]")));
    }
    let mut master = ChaCha8Rng::seed_from_u64(opts.seed);
    let (forward_seed, backward_seed, smooth_seed) =
        (next_seed(&mut master), next_seed(&mut master), next_seed(&mut master));

    let past_end = times.partition_point(|&x| x < t);
    let future_start = times.partition_point(|&x| x <= t);
    let prior = || crate::filtering::init_state(dataset.theta, dataset.baseline.clone());

    let (forward, dt_past) = if past_end > 0 {
        let o = InferenceOptions { seed: forward_seed, ..opts.clone() };
        (filter_dataset(&dataset.slice(0..past_end), &o)?, t - times[past_end - 1])
    } else {
        (prior()?, 0.0)
    };
    let (backward, dt_future) = if future_start < times.len() {
        let o = InferenceOptions { seed: backward_seed, ..opts.clone() };
        (backward_filter(&dataset.slice(future_start..times.len()), &o)?, times[future_start] - t)
    } else {
        (prior()?, 0.0)
    };
    let batch = if future_start > past_end {
        dataset.batches()[past_end].clone()
    } else {
        ObservationBatch::default()
    };

    let mc = || smooth_mc(&forward, &backward, &batch, dt_past, dt_future, opts.particles, opts.epsilon, smooth_seed);
    match opts.mode {
        Mode::Exact => smooth_exact(&forward, &backward, &batch, dt_past, dt_future, opts.pair_budget),
        Mode::Mc => mc(),
        Mode::Auto => match smooth_exact(&forward, &backward, &batch, dt_past, dt_future, opts.pair_budget) {
            Err(Error::ExactInfeasible(_) | Error::CancellationFailure { .. }) => mc(),
            other => other,
        },
    }
}
