//! Predictive distribution of the next observation and draws from it.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::FvddpState;

/// Probability that the next draw is each registered type, or a type not yet
/// registered (zero under an atomic baseline, whose atoms are all registered).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    pub labels: Vec<String>,
    pub per_type: Vec<f64>,
    pub new_type: f64,
}

/// One-step predictive: `sum_m w_m (alpha_k + m_k) / (theta + |m|)`.
pub fn predictive(state: &FvddpState) -> PredictiveSummary {
    let theta = state.theta();
    let alpha = state.alpha();
    let residual = state.residual_mass();
    let mut per_type = vec![0.0; alpha.len()];
    let mut new_type = 0.0;
    for (m, &w) in state.nodes() {
        let denom = theta + f64::from(m.cardinality());
        for (k, p) in per_type.iter_mut().enumerate() {
            *p += w * (alpha[k] + f64::from(m.get(k))) / denom;
        }
        new_type += w * theta * residual / denom;
    }
    PredictiveSummary { labels: state.registry().labels().to_vec(), per_type, new_type }
}

/// Posterior mean of the population frequency of each registered label.
pub fn mean_frequencies(state: &FvddpState) -> Vec<(String, f64)> {
    let p = predictive(state);
    p.labels.into_iter().zip(p.per_type).collect()
}

/// Draws `count` further observations jointly: one mixture component, then
/// sequential Pólya-urn draws. Fresh types under a nonatomic baseline get
/// labels `new-1`, `new-2`, ...
pub fn sample_next<R: Rng + ?Sized>(state: &FvddpState, count: usize, rng: &mut R) -> Result<Vec<String>> {
    if count == 0 {
        return Err(Error::Invalid("sample count must be positive".into()));
    }
    let nodes: Vec<_> = state.nodes().iter().collect();
    let pick = WeightedIndex::new(nodes.iter().map(|(_, &w)| w)).map_err(|e| Error::Invalid(e.to_string()))?;
    let m = nodes[pick.sample(rng)].0;

    let mut labels: Vec<String> = state.registry().labels().to_vec();
    let mut urn: Vec<f64> = state.alpha().iter().zip(m.counts()).map(|(a, &c)| a + f64::from(c)).collect();
    let diffuse = state.theta() * state.residual_mass();
    let mut fresh = 0;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let total: f64 = urn.iter().sum::<f64>() + diffuse;
        let mut u = rng.random::<f64>() * total;
        let hit = urn.iter().position(|&w| {
            if u < w {
                true
            } else {
                u -= w;
                false
            }
        });
        let k = match hit {
            Some(k) => k,
            None if diffuse > 0.0 => {
                fresh += 1;
                labels.push(format!("new-{fresh}"));
                urn.push(0.0);
                urn.len() - 1
            }
            // rounding left u just above the last bucket
            None => urn.iter().rposition(|&w| w > 0.0).expect("urn has mass"),
        };
        urn[k] += 1.0;
        out.push(labels[k].clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Baseline, Node, TypeRegistry};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn prior_predictive_is_all_new() {
        let p = predictive(&FvddpState::prior(2.0, Baseline::Nonatomic).unwrap());
        assert!(p.per_type.is_empty());
        assert_eq!(p.new_type, 1.0);
    }

    #[test]
    fn single_node_predictive() {
        let reg = TypeRegistry::from_labels(["a", "b"]).unwrap();
        let s = FvddpState::from_parts(1.0, Baseline::Nonatomic, reg, [(Node::from([2, 1]), 1.0)].into()).unwrap();
        let p = predictive(&s);
        assert!((p.per_type[0] - 0.5).abs() < 1e-15);
        assert!((p.per_type[1] - 0.25).abs() < 1e-15);
        assert!((p.new_type - 0.25).abs() < 1e-15);
    }

    #[test]
    fn two_node_average() {
        let reg = TypeRegistry::from_labels(["a", "b"]).unwrap();
        let table = [(Node::from([1, 0]), 0.5), (Node::from([0, 1]), 0.5)].into();
        let s = FvddpState::from_parts(1.0, Baseline::Nonatomic, reg, table).unwrap();
        let p = predictive(&s);
        assert_eq!(p.per_type, vec![0.25, 0.25]);
        assert_eq!(p.new_type, 0.5);
        let means: Vec<f64> = mean_frequencies(&s).into_iter().map(|(_, f)| f).collect();
        assert_eq!(means, p.per_type);
    }

    #[test]
    fn atomic_predictive_sums_to_one() {
        let s = FvddpState::prior(1.5, Baseline::atomic([("a", 0.3), ("b", 0.7)]).unwrap()).unwrap();
        let p = predictive(&s);
        assert_eq!(p.new_type, 0.0);
        assert!((p.per_type.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sampling() {
        let s = FvddpState::prior(1.0, Baseline::Nonatomic).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_next(&s, 0, &mut rng).is_err());
        let draws = sample_next(&s, 5, &mut rng).unwrap();
        assert_eq!(draws.len(), 5);
        assert_eq!(draws[0], "new-1");
    }
}
