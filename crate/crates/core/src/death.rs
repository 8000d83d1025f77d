//! The K-dimensional pure-death process that drives propagation.
//!
//! From node `m` the process removes one individual of type `j` at rate
//! `m_j (theta + |m| - 1) / 2`, so the total count `|m|` is itself a pure-death
//! chain with rates `lambda_h = h (theta + h - 1) / 2`. Transition
//! probabilities factor into the one-dimensional fall `C_{|m|,|n|}(s)` of the
//! total count times a multivariate hypergeometric choice of survivors.

use std::collections::HashMap;
use std::sync::RwLock;

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::lattice::Node;
use crate::numeric::{ln_binomial, CompensatedSum};

/// Largest total count accepted by the analytic transition probabilities.
pub const EXACT_CARDINALITY_CEILING: u32 = 170;

/// Values of `C` within this distance outside `[0, 1]` are clamped; farther
/// out, or when the rounding-error bound of the alternating sum exceeds it,
/// the evaluation is reported as a cancellation failure.
pub const CLAMP_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeathModel {
    theta: f64,
}

impl DeathModel {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::NonpositiveTheta(theta));
        }
        Ok(DeathModel { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn rate(&self, cardinality: u32) -> f64 {
        total_rate(cardinality, self.theta)
    }
}

/// `lambda_h = h (theta + h - 1) / 2`.
pub fn total_rate(cardinality: u32, theta: f64) -> f64 {
    let h = f64::from(cardinality);
    h * (theta + h - 1.0) / 2.0
}

/// Multivariate hypergeometric pmf: probability that `|n|` individuals drawn
/// without replacement from `m` have type counts `n`.
pub fn mvh_pmf(n: &Node, m: &Node) -> Result<f64> {
    if !n.is_dominated_by(m) {
        return Err(Error::DominationViolated { lower: n.counts().to_vec(), upper: m.counts().to_vec() });
    }
    let ln_num: f64 = n.counts().iter().zip(m.counts()).map(|(&nj, &mj)| ln_binomial(mj, nj)).sum();
    Ok((ln_num - ln_binomial(m.cardinality(), n.cardinality())).exp())
}

/// Probability that the total-count chain falls from `from` to exactly `to`
/// within `elapsed` time.
///
/// Evaluates the alternating sum
/// `prod_{h=to+1}^{from} lambda_h * sum_k e^{-lambda_k s} / prod_{h != k} (lambda_h - lambda_k)`
/// term by term in log space, then adds the signed terms from largest to
/// smallest magnitude with compensated summation.
pub fn c_coefficient(from: u32, to: u32, elapsed: f64, theta: f64) -> Result<f64> {
    if to >= from {
        return Err(Error::Invalid(format!("C({from},{to}) requires to < from")));
    }
    if elapsed.is_nan() || elapsed <= 0.0 {
        return Err(Error::Invalid(format!("elapsed time must be positive, got {elapsed}")));
    }
    if from > EXACT_CARDINALITY_CEILING {
        return Err(Error::ExactInfeasible(format!(
            "total count {from} exceeds the exact ceiling {EXACT_CARDINALITY_CEILING}"
        )));
    }
    let ln_rate_product: f64 = (to + 1..=from).map(|h| total_rate(h, theta).ln()).sum();
    let mut terms: Vec<(f64, f64)> = (to..=from)
        .map(|k| {
            // lambda_k - lambda_h = (k - h)(theta + k + h - 1) / 2
            let ln_denominator: f64 = (to..=from)
                .filter(|&h| h != k)
                .map(|h| {
                    let gap = (f64::from(k) - f64::from(h)).abs();
                    gap.ln() + (theta + f64::from(k) + f64::from(h) - 1.0).ln() - std::f64::consts::LN_2
                })
                .sum();
            let ln_mag = ln_rate_product - total_rate(k, theta) * elapsed - ln_denominator;
            let sign = if (k - to).is_multiple_of(2) { 1.0 } else { -1.0 };
            (ln_mag, sign)
        })
        .collect();
    terms.sort_by(|a, b| b.0.total_cmp(&a.0));
    let value = terms.iter().map(|&(l, s)| s * l.exp()).collect::<CompensatedSum>().value();
    // each term carries relative error of order (from - to) * eps from its
    // log-space evaluation, which the largest term scales up
    let error_bound = terms[0].0.exp() * f64::from(from - to + 1) * 10.0 * f64::EPSILON;
    if error_bound > CLAMP_TOLERANCE {
        return Err(Error::CancellationFailure { from, to, value });
    }
    clamp_probability(value).ok_or(Error::CancellationFailure { from, to, value })
}

fn clamp_probability(value: f64) -> Option<f64> {
    if !value.is_finite() || !(-CLAMP_TOLERANCE..=1.0 + CLAMP_TOLERANCE).contains(&value) {
        None
    } else {
        Some(value.clamp(0.0, 1.0))
    }
}

/// Memo table for `C_{from,to}(s)` under one `theta`.
#[derive(Debug)]
pub struct CCoefficientCache {
    theta: f64,
    table: RwLock<HashMap<(u32, u32, u64), f64>>,
}

impl CCoefficientCache {
    pub fn new(model: DeathModel) -> Self {
        CCoefficientCache { theta: model.theta, table: RwLock::new(HashMap::new()) }
    }

    pub fn get(&self, from: u32, to: u32, elapsed: f64) -> Result<f64> {
        let key = (from, to, elapsed.to_bits());
        if let Some(&v) = self.table.read().expect("cache lock").get(&key) {
            return Ok(v);
        }
        let v = c_coefficient(from, to, elapsed, self.theta)?;
        self.table.write().expect("cache lock").insert(key, v);
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.table.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `p_{m,n}(s)`: probability the death process started at `m` sits at `n`
/// after `elapsed`.
pub fn transition_prob(
    m: &Node,
    n: &Node,
    elapsed: f64,
    model: &DeathModel,
    cache: &CCoefficientCache,
) -> Result<f64> {
    if !n.is_dominated_by(m) {
        return Err(Error::DominationViolated { lower: n.counts().to_vec(), upper: m.counts().to_vec() });
    }
    if n == m {
        return Ok((-model.rate(m.cardinality()) * elapsed).exp());
    }
    debug_assert_eq!(cache.theta, model.theta);
    Ok(cache.get(m.cardinality(), n.cardinality(), elapsed)? * mvh_pmf(n, m)?)
}

/// Every `(n, p_{m,n}(s))` with `n <= m`, in lexicographic order of `n`.
pub fn transition_row(
    m: &Node,
    elapsed: f64,
    model: &DeathModel,
    cache: &CCoefficientCache,
) -> Result<Vec<(Node, f64)>> {
    if m.cardinality() > EXACT_CARDINALITY_CEILING {
        return Err(Error::ExactInfeasible(format!(
            "node with total count {} exceeds the exact ceiling {EXACT_CARDINALITY_CEILING}",
            m.cardinality()
        )));
    }
    m.lower_box()
        .map(|n| {
            let p = transition_prob(m, &n, elapsed, model, cache)?;
            Ok((n, p))
        })
        .collect()
}

/// Simulates the death chain from `m` for `elapsed` time units (Gillespie
/// direct method) and returns the arrival node.
pub fn gillespie_arrival<R: Rng + ?Sized>(m: &Node, elapsed: f64, model: &DeathModel, rng: &mut R) -> Node {
    let mut state = m.clone();
    let mut clock = 0.0;
    while state.cardinality() > 0 {
        let rate = model.rate(state.cardinality());
        let wait: f64 = rng.sample(Exp1);
        clock += wait / rate;
        if clock > elapsed {
            break;
        }
        // coordinate j with probability m_j / |m|
        let mut pick = rng.random_range(0..state.cardinality());
        let j = state
            .counts()
            .iter()
            .position(|&c| {
                if pick < c {
                    true
                } else {
                    pick -= c;
                    false
                }
            })
            .expect("pick below cardinality");
        state.remove_one(j);
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(theta: f64) -> DeathModel {
        DeathModel::new(theta).unwrap()
    }

    #[test]
    fn rates() {
        assert_eq!(total_rate(0, 1.0), 0.0);
        assert_eq!(total_rate(2, 1.0), 2.0);
        assert_eq!(total_rate(3, 0.5), 3.75);
    }

    #[test]
    fn mvh_examples() {
        assert!((mvh_pmf(&Node::from([1, 0]), &Node::from([2, 0])).unwrap() - 1.0).abs() < 1e-15);
        assert!((mvh_pmf(&Node::from([1, 0]), &Node::from([1, 1])).unwrap() - 0.5).abs() < 1e-15);
        assert!((mvh_pmf(&Node::from([1, 1]), &Node::from([2, 2])).unwrap() - 4.0 / 6.0).abs() < 1e-15);
        assert!(matches!(
            mvh_pmf(&Node::from([2, 0]), &Node::from([1, 1])),
            Err(Error::DominationViolated { .. })
        ));
    }

    #[test]
    fn c_closed_form_two_terms() {
        // lambda_1 = 1/2, lambda_2 = 2 at theta = 1
        let expected = 4.0 / 3.0 * ((-0.25f64).exp() - (-1.0f64).exp());
        let got = c_coefficient(2, 1, 0.5, 1.0).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.54790).abs() < 1e-5);
        let to_zero = c_coefficient(2, 0, 0.5, 1.0).unwrap();
        assert!((to_zero - 0.08423).abs() < 1e-5);
        assert!((to_zero + got + (-1.0f64).exp() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn c_absorbs_at_large_times() {
        assert!((c_coefficient(1, 0, 1e6, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(c_coefficient(5, 3, 1e6, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn c_rejects_bad_arguments() {
        assert!(c_coefficient(2, 2, 0.5, 1.0).is_err());
        assert!(c_coefficient(2, 1, 0.0, 1.0).is_err());
        assert!(matches!(c_coefficient(171, 0, 0.5, 1.0), Err(Error::ExactInfeasible(_))));
    }

    #[test]
    fn transition_examples() {
        let md = model(1.0);
        let cache = CCoefficientCache::new(md);
        let p = |m: [u32; 2], n: [u32; 2]| transition_prob(&m.into(), &n.into(), 0.5, &md, &cache).unwrap();
        assert!((p([2, 0], [2, 0]) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((p([2, 0], [1, 0]) - 0.54790).abs() < 1e-5);
        assert!((p([1, 1], [1, 0]) - 0.27395).abs() < 1e-5);
        assert!(!cache.is_empty());
    }

    #[test]
    fn cache_matches_fresh_evaluation() {
        let md = model(0.7);
        let cache = CCoefficientCache::new(md);
        for from in 1..8 {
            for to in 0..from {
                let a = cache.get(from, to, 0.3).unwrap();
                let b = cache.get(from, to, 0.3).unwrap();
                let fresh = c_coefficient(from, to, 0.3, 0.7).unwrap();
                assert_eq!(a.to_bits(), fresh.to_bits());
                assert_eq!(b.to_bits(), fresh.to_bits());
            }
        }
    }

    #[test]
    fn gillespie_absorbs_and_short_time() {
        let md = model(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(gillespie_arrival(&Node::from([0, 0]), 10.0, &md, &mut rng), Node::from([0, 0]));
        let stay = (0..1000)
            .filter(|_| gillespie_arrival(&Node::from([1, 1]), 1e-9, &md, &mut rng) == Node::from([1, 1]))
            .count();
        assert_eq!(stay, 1000);
    }
}
