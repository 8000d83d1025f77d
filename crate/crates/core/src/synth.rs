//! Synthetic benchmark data with integer labels.
//!
//! At collection time `i` each label is drawn from the mixture
//! `1/2 Pois(1/mu_i) + 1/2 Pois(5 + 1/nu_i)`, where `mu` and `nu` start at
//! 0.2 and take independent `Exp(1)` steps between times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};

use crate::error::{Error, Result};
use crate::filtering::{Dataset, ObservationBatch};
use crate::lattice::Baseline;

/// Starting value of both random walks.
pub const WALK_START: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub times: Vec<f64>,
    /// Observations per time.
    pub counts: Vec<usize>,
    pub theta: f64,
    /// Atomic baseline with `P0(k) = (k + 1) / 2^(k + 2)` on the observed
    /// labels; otherwise nonatomic.
    pub atomic: bool,
    pub seed: u64,
}

/// `NegBin(2, 1/2)` pmf at `k`.
pub fn negbin_mass(k: u64) -> f64 {
    (k as f64 + 1.0) * 0.5f64.powi((k + 2).min(i32::MAX as u64) as i32)
}

pub fn simulate(config: &SimulationConfig) -> Result<Dataset> {
    if config.times.len() != config.counts.len() {
        return Err(Error::Invalid(format!(
            "{} times but {} observation counts",
            config.times.len(),
            config.counts.len()
        )));
    }
    if let Some(w) = config.times.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::Invalid(format!("times must be strictly increasing ({} then {})", w[0], w[1])));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut mu, mut nu) = (WALK_START, WALK_START);
    let mut batches = Vec::with_capacity(config.times.len());
    let mut seen = std::collections::BTreeSet::new();
    for (i, &count) in config.counts.iter().enumerate() {
        if i > 0 {
            mu += rng.sample::<f64, _>(Exp1);
            nu += rng.sample::<f64, _>(Exp1);
        }
        let low = Poisson::new(1.0 / mu).map_err(|e| Error::Invalid(e.to_string()))?;
        let high = Poisson::new(5.0 + 1.0 / nu).map_err(|e| Error::Invalid(e.to_string()))?;
        let labels: Vec<String> = (0..count)
            .map(|_| {
                let x: f64 = if rng.random_bool(0.5) { low.sample(&mut rng) } else { high.sample(&mut rng) };
                let k = x as u64;
                seen.insert(k);
                k.to_string()
            })
            .collect();
        batches.push(ObservationBatch::new(labels));
    }
    let baseline = if config.atomic {
        Baseline::atomic(seen.iter().map(|&k| (k.to_string(), negbin_mass(k))))?
    } else {
        Baseline::Nonatomic
    };
    Dataset::new(config.theta, baseline, config.times.clone(), batches)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(counts: Vec<usize>, seed: u64) -> SimulationConfig {
        SimulationConfig { times: vec![0.0, 0.5, 1.0], counts, theta: 1.0, atomic: true, seed }
    }

    #[test]
    fn shape_and_reproducibility() {
        let a = simulate(&config(vec![10, 10, 10], 4)).unwrap();
        let total: usize = a.batches().iter().map(ObservationBatch::len).sum();
        assert_eq!(total, 30);
        assert!(a.batches().iter().flat_map(|b| b.labels()).all(|l| l.parse::<u64>().is_ok()));
        assert_eq!(a, simulate(&config(vec![10, 10, 10], 4)).unwrap());
        assert_ne!(a, simulate(&config(vec![10, 10, 10], 5)).unwrap());
    }

    #[test]
    fn empty_time() {
        let d = simulate(&config(vec![3, 0, 2], 1)).unwrap();
        assert!(d.batches()[1].is_empty());
        assert_eq!(d.len(), 3);
    }

    #[test]
    fn negbin_sums_to_one() {
        let total: f64 = (0..200).map(negbin_mass).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(negbin_mass(0), 0.25);
    }
}
