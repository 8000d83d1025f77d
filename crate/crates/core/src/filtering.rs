//! Forward inference: prior, Pólya-urn data update, and exact or Monte Carlo
//! propagation through the death process.

use std::collections::{BTreeMap, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::death::{gillespie_arrival, transition_row, CCoefficientCache, DeathModel, EXACT_CARDINALITY_CEILING};
use crate::error::{Error, Result};
use crate::lattice::{extend_registry, prune, Baseline, FvddpState, Node, TypeRegistry, DEFAULT_EPSILON};
use crate::mc::{next_seed, run_chunks};
use crate::numeric::{ln_factorial, ln_factorial_pred, ln_rising};

/// Labels observed at one collection time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObservationBatch {
    labels: Vec<String>,
}

impl ObservationBatch {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ObservationBatch { labels: labels.into_iter().map(Into::into).collect() }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Distinct labels not in `registry`, in first-appearance order.
    pub fn unseen_labels(&self, registry: &TypeRegistry) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for l in &self.labels {
            if !registry.contains(l) && !out.contains(l) {
                out.push(l.clone());
            }
        }
        out
    }

    /// Multiplicity vector over `registry`; every label must be registered.
    pub fn multiplicities(&self, registry: &TypeRegistry) -> Result<Node> {
        let mut counts = vec![0u32; registry.len()];
        for l in &self.labels {
            let k = registry
                .index_of(l)
                .ok_or_else(|| Error::Invalid(format!("label {l:?} is not registered")))?;
            counts[k] += 1;
        }
        Ok(Node::new(counts))
    }
}

/// Observations at increasing collection times, with the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub theta: f64,
    pub baseline: Baseline,
    times: Vec<f64>,
    batches: Vec<ObservationBatch>,
}

impl Dataset {
    /// Batches sharing a timestamp are merged; times must be nondecreasing.
    pub fn new(theta: f64, baseline: Baseline, times: Vec<f64>, batches: Vec<ObservationBatch>) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::NonpositiveTheta(theta));
        }
        if times.len() != batches.len() {
            return Err(Error::Invalid(format!(
                "{} times but {} observation batches",
                times.len(),
                batches.len()
            )));
        }
        let mut merged_times: Vec<f64> = Vec::with_capacity(times.len());
        let mut merged: Vec<ObservationBatch> = Vec::with_capacity(times.len());
        for (t, b) in times.into_iter().zip(batches) {
            if !t.is_finite() {
                return Err(Error::Invalid(format!("time {t} is not finite")));
            }
            match merged_times.last() {
                Some(&last) if t < last => {
                    return Err(Error::Invalid(format!("times must be increasing ({t} after {last})")));
                }
                Some(&last) if t == last => {
                    merged.last_mut().expect("batch").labels.extend(b.labels);
                }
                _ => {
                    merged_times.push(t);
                    merged.push(b);
                }
            }
        }
        Ok(Dataset { theta, baseline, times: merged_times, batches: merged })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn batches(&self) -> &[ObservationBatch] {
        &self.batches
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Collection times in `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            theta: self.theta,
            baseline: self.baseline.clone(),
            times: self.times[range.clone()].to_vec(),
            batches: self.batches[range].to_vec(),
        }
    }

    /// Same batches in reverse order with the gaps between times preserved.
    pub fn reversed(&self) -> Dataset {
        let end = self.times.last().copied().unwrap_or(0.0);
        Dataset {
            theta: self.theta,
            baseline: self.baseline.clone(),
            times: self.times.iter().rev().map(|t| end - t).collect(),
            batches: self.batches.iter().rev().cloned().collect(),
        }
    }
}

/// How propagation steps are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Mc,
    /// Exact while the lattice stays under the node budget, Monte Carlo after.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOptions {
    pub mode: Mode,
    pub particles: u64,
    pub epsilon: f64,
    pub seed: u64,
    /// Auto mode switches to Monte Carlo above this many candidate nodes.
    pub node_budget: u128,
    /// Exact smoothing refuses above this many (k1, k2) combinations.
    pub pair_budget: u128,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            mode: Mode::Exact,
            particles: 1_000_000,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
            node_budget: 50_000,
            pair_budget: 200_000_000,
        }
    }
}

/// `Pi_alpha` with no data.
pub fn init_state(theta: f64, baseline: Baseline) -> Result<FvddpState> {
    FvddpState::prior(theta, baseline)
}

/// `ln PU(n | m)`. `alpha[k]` is `theta P0(y_k)`; `novel[k]` marks types
/// first seen in this batch, whose first draw takes the whole diffuse mass
/// `theta` under a nonatomic baseline.
pub fn ln_polya_urn_prob(n: &Node, m: &Node, theta: f64, alpha: &[f64], novel: &[bool]) -> f64 {
    let mut acc = ln_factorial(n.cardinality());
    for k in 0..n.len() {
        let nk = n.get(k);
        if nk == 0 {
            continue;
        }
        acc -= ln_factorial(nk);
        let weight = alpha[k] + f64::from(m.get(k));
        if novel[k] && weight == 0.0 {
            acc += theta.ln() + ln_factorial_pred(nk);
        } else {
            acc += ln_rising(weight, nk);
        }
    }
    acc - ln_rising(theta + f64::from(m.cardinality()), n.cardinality())
}

/// Probability of the multiplicity pattern `n` under sequential Pólya-urn
/// draws from `theta P0 + sum_k m_k delta_{y_k}`.
pub fn polya_urn_prob(n: &Node, m: &Node, theta: f64, alpha: &[f64], novel: &[bool]) -> f64 {
    ln_polya_urn_prob(n, m, theta, alpha, novel).exp()
}

/// Conditions the mixture on one batch of observations.
pub fn update(state: &FvddpState, batch: &ObservationBatch) -> Result<FvddpState> {
    if batch.is_empty() {
        return Ok(state.clone());
    }
    let unseen = batch.unseen_labels(state.registry());
    if state.baseline().is_atomic() {
        if let Some(l) = unseen.first() {
            return Err(Error::UnknownAtom(l.clone()));
        }
    }
    let extended = extend_registry(state, &unseen)?;
    let registry = extended.registry();
    let n = batch.multiplicities(registry)?;
    let novel: Vec<bool> = registry.labels().iter().map(|l| unseen.contains(l)).collect();
    let alpha = extended.alpha();
    let theta = extended.theta();

    let scored: Vec<(Node, f64)> = extended
        .nodes()
        .iter()
        .map(|(m, &w)| (m.plus(&n), w.ln() + ln_polya_urn_prob(&n, m, theta, &alpha, &novel)))
        .collect();
    let top = scored.iter().map(|(_, l)| *l).fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::ZeroLikelihood);
    }
    let table: BTreeMap<Node, f64> =
        scored.into_iter().map(|(node, l)| (node, (l - top).exp())).filter(|(_, w)| *w > 0.0).collect();
    extended.with_nodes(table)
}

/// Exact propagation: the node set becomes the lower set and weight `n`
/// collects `sum_{m >= n} w_m p_{m,n}(elapsed)`.
pub fn propagate_exact(state: &FvddpState, elapsed: f64) -> Result<FvddpState> {
    if elapsed < 0.0 || !elapsed.is_finite() {
        return Err(Error::Invalid(format!("elapsed time must be nonnegative, got {elapsed}")));
    }
    if elapsed == 0.0 {
        return Ok(state.clone());
    }
    if state.max_cardinality() > EXACT_CARDINALITY_CEILING {
        return Err(Error::ExactInfeasible(format!(
            "state holds a node of total count {} (ceiling {EXACT_CARDINALITY_CEILING})",
            state.max_cardinality()
        )));
    }
    let model = DeathModel::new(state.theta())?;
    let cache = CCoefficientCache::new(model);
    let mut out: BTreeMap<Node, f64> = BTreeMap::new();
    for (m, &w) in state.nodes() {
        for (n, p) in transition_row(m, elapsed, &model, &cache)? {
            *out.entry(n).or_insert(0.0) += w * p;
        }
    }
    state.with_nodes(out)
}

/// Monte Carlo propagation: `particles` ancestors drawn from the weights, each
/// pushed through the death chain; arrival frequencies become the weights,
/// pruned at `epsilon`.
pub fn propagate_mc(state: &FvddpState, elapsed: f64, particles: u64, epsilon: f64, seed: u64) -> Result<FvddpState> {
    if particles == 0 {
        return Err(Error::Invalid("particle count must be positive".into()));
    }
    if elapsed < 0.0 || !elapsed.is_finite() {
        return Err(Error::Invalid(format!("elapsed time must be nonnegative, got {elapsed}")));
    }
    if elapsed == 0.0 {
        return Ok(state.clone());
    }
    let model = DeathModel::new(state.theta())?;
    let ancestors: Vec<&Node> = state.nodes().keys().collect();
    let picker = WeightedIndex::new(state.nodes().values().copied())
        .map_err(|e| Error::Invalid(format!("cannot sample ancestors: {e}")))?;

    let chunks = run_chunks(particles, seed, |rng, count| {
        let mut hits: HashMap<Node, u64> = HashMap::new();
        for _ in 0..count {
            let m = ancestors[picker.sample(rng)];
            *hits.entry(gillespie_arrival(m, elapsed, &model, rng)).or_insert(0) += 1;
        }
        hits
    });
    let mut counts: BTreeMap<Node, u64> = BTreeMap::new();
    for chunk in chunks {
        for (n, c) in chunk {
            *counts.entry(n).or_insert(0) += c;
        }
    }
    let total = particles as f64;
    let table = counts.into_iter().map(|(n, c)| (n, c as f64 / total)).collect();
    prune(&state.with_nodes(table)?, epsilon)
}

fn exact_step_size(state: &FvddpState) -> u128 {
    state.nodes().keys().map(Node::lower_box_size).sum()
}

/// One propagation step under `opts.mode`.
pub fn propagate(state: &FvddpState, elapsed: f64, opts: &InferenceOptions, seed: u64) -> Result<FvddpState> {
    match opts.mode {
        Mode::Exact => propagate_exact(state, elapsed),
        Mode::Mc => propagate_mc(state, elapsed, opts.particles, opts.epsilon, seed),
        Mode::Auto => {
            if exact_step_size(state) <= opts.node_budget {
                match propagate_exact(state, elapsed) {
                    Err(Error::ExactInfeasible(_) | Error::CancellationFailure { .. }) => {}
                    other => return other,
                }
            }
            propagate_mc(state, elapsed, opts.particles, opts.epsilon, seed)
        }
    }
}

/// Law of the signal at the last collection time given every batch.
pub fn filter_dataset(dataset: &Dataset, opts: &InferenceOptions) -> Result<FvddpState> {
    let mut master = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut state = init_state(dataset.theta, dataset.baseline.clone())?;
    for (i, batch) in dataset.batches().iter().enumerate() {
        if i > 0 {
            let dt = dataset.times()[i] - dataset.times()[i - 1];
            state = propagate(&state, dt, opts, next_seed(&mut master))?;
        }
        state = update(&state, batch)?;
    }
    Ok(state)
}
