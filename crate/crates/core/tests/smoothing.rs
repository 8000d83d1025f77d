use std::collections::BTreeMap;

use fvddp::death::{transition_prob, CCoefficientCache, DeathModel};
use fvddp::filtering::{filter_dataset, Dataset, InferenceOptions, ObservationBatch};
use fvddp::smoothing::{
    backward_filter, combine_bins, q_weight_atomic, q_weight_nonatomic, shared_index_sets_with_history,
    smooth_dataset, smooth_exact, smooth_mc, AncestorBin, BinEntry,
};
use fvddp::{Baseline, Error, FvddpState, Node, TypeRegistry};

fn state(labels: &[&str], nodes: &[(&[u32], f64)], baseline: &Baseline) -> FvddpState {
    let reg = TypeRegistry::from_labels(labels.iter().copied()).unwrap();
    let table = nodes.iter().map(|(c, w)| (Node::new(c.to_vec()), *w)).collect();
    FvddpState::from_parts(1.0, baseline.clone(), reg, table).unwrap()
}

fn dataset(batches: &[&[&str]], times: &[f64], baseline: Baseline) -> Dataset {
    let b = batches.iter().map(|b| ObservationBatch::new(b.iter().copied())).collect();
    Dataset::new(1.0, baseline, times.to_vec(), b).unwrap()
}

fn assert_close(a: &FvddpState, b: &FvddpState, tol: f64) {
    let b = b.align_to(a.registry()).unwrap();
    assert_eq!(a.len(), b.len(), "component counts differ");
    for (n, w) in a.nodes() {
        assert!((b.weight(n) - w).abs() < tol, "{n:?}: {w} vs {}", b.weight(n));
    }
}

fn atomic() -> Baseline {
    Baseline::atomic([("a", 0.3), ("b", 0.2), ("c", 0.1)]).unwrap()
}

/// Every `(k1, k2)` below every ancestor pair, with unit draw counts.
fn enumerated_bins<F>(fwd: &FvddpState, bwd: &FvddpState, q: F) -> Vec<AncestorBin>
where
    F: Fn(&Node, &Node, &Node, &Node) -> f64,
{
    let mut bins = vec![];
    for (m1, u) in fwd.nodes() {
        for (m2, v) in bwd.nodes() {
            let mut entries = BTreeMap::new();
            for k1 in m1.lower_box() {
                for k2 in m2.lower_box() {
                    let q_value = q(m1, m2, &k1, &k2);
                    entries.insert((k1.clone(), k2), BinEntry { q_value, draw_count: 1 });
                }
            }
            bins.push(AncestorBin { m1: m1.clone(), m2: m2.clone(), ancestor_weight: u * v, entries });
        }
    }
    bins
}

fn analytic_combination(bins: &[AncestorBin], n: &Node) -> BTreeMap<Node, f64> {
    let model = DeathModel::new(1.0).unwrap();
    let cache = CCoefficientCache::new(model);
    let (dp, df) = (0.4, 0.3);
    let table = combine_bins(
        bins,
        n,
        |bin| bin.ancestor_weight,
        |bin, (k1, k2), _| {
            transition_prob(&bin.m1, k1, dp, &model, &cache).unwrap()
                * transition_prob(&bin.m2, k2, df, &model, &cache).unwrap()
        },
    );
    let total: f64 = table.values().sum();
    table.into_iter().map(|(k, w)| (k, w / total)).collect()
}

#[test]
fn bins_with_analytic_frequencies_reproduce_exact_atomic() {
    let base = atomic();
    let fwd = state(&["a", "b", "c"], &[(&[2, 1, 0], 0.7), (&[1, 0, 1], 0.3)], &base);
    let bwd = state(&["a", "b", "c"], &[(&[0, 2, 1], 0.4), (&[1, 1, 0], 0.6)], &base);
    let n = Node::from([1, 0, 1]);
    let masses = [0.3, 0.2, 0.1];
    let bins = enumerated_bins(&fwd, &bwd, |_, _, k1, k2| q_weight_atomic(k1, &n, k2, 1.0, &masses));
    let table = analytic_combination(&bins, &n);
    let exact = smooth_exact(&fwd, &bwd, &ObservationBatch::new(["a", "c"]), 0.4, 0.3, u128::MAX).unwrap();
    assert_eq!(table.len(), exact.len());
    for (k, w) in table {
        assert!((exact.weight(&k) - w).abs() < 1e-13, "{k:?}");
    }
}

#[test]
fn bins_with_analytic_frequencies_reproduce_exact_nonatomic() {
    let base = Baseline::Nonatomic;
    let fwd = state(&["a", "b"], &[(&[2, 1], 0.7), (&[1, 1], 0.2), (&[1, 0], 0.1)], &base);
    let bwd = state(&["a", "c"], &[(&[1, 2], 0.4), (&[2, 1], 0.6)], &base);
    let reg = TypeRegistry::from_labels(["a", "b", "c"]).unwrap();
    let (fwd_all, bwd_all) = (fwd.align_to(&reg).unwrap(), bwd.align_to(&reg).unwrap());
    let n = Node::from([1, 0, 0]);
    let (past_seen, future_seen) = ([true, true, false], [true, false, true]);
    let bins = enumerated_bins(&fwd_all, &bwd_all, |m1, m2, k1, k2| {
        let sets = shared_index_sets_with_history(m1, &n, m2, &past_seen, &future_seen);
        q_weight_nonatomic(k1, &n, k2, 1.0, &sets)
    });
    let table = analytic_combination(&bins, &n);
    let exact = smooth_exact(&fwd, &bwd, &ObservationBatch::new(["a"]), 0.4, 0.3, u128::MAX).unwrap();
    assert_eq!(exact.registry(), &reg);
    assert_eq!(table.len(), exact.len());
    for (k, w) in table {
        assert!(k.get(0) > 0);
        assert!((exact.weight(&k) - w).abs() < 1e-13, "{k:?}");
    }
}

#[test]
fn swapping_past_and_future_is_a_symmetry() {
    for base in [atomic(), Baseline::Nonatomic] {
        let fwd = state(&["a", "b"], &[(&[2, 1], 0.7), (&[1, 0], 0.3)], &base);
        let bwd = state(&["b", "c"], &[(&[2, 1], 0.4), (&[0, 1], 0.6)], &base);
        let batch = ObservationBatch::new(["a", "b"]);
        let x = smooth_exact(&fwd, &bwd, &batch, 0.4, 0.9, u128::MAX).unwrap();
        let y = smooth_exact(&bwd, &fwd, &batch, 0.9, 0.4, u128::MAX).unwrap();
        assert_close(&x, &y, 1e-13);
    }
}

#[test]
fn time_reversal_of_the_dataset() {
    for base in [atomic(), Baseline::Nonatomic] {
        let d = dataset(&[&["a", "b", "a"], &["b"], &["c", "a"]], &[0.0, 0.3, 1.0], base);
        let r = d.reversed();
        let opts = InferenceOptions::default();
        for t in [0.0, 0.2, 0.3, 0.65, 1.0] {
            let x = smooth_dataset(&d, t, &opts).unwrap();
            let y = smooth_dataset(&r, 1.0 - t, &opts).unwrap();
            assert_close(&x, &y, 1e-12);
        }
    }
}

#[test]
fn batch_at_t_equals_folding_it_into_the_forward_filter() {
    for base in [atomic(), Baseline::Nonatomic] {
        let d = dataset(&[&["a", "b"], &["a", "c", "c"], &["b", "a"]], &[0.0, 0.5, 1.0], base);
        let opts = InferenceOptions::default();
        let before = filter_dataset(&d.slice(0..1), &opts).unwrap();
        let through = filter_dataset(&d.slice(0..2), &opts).unwrap();
        let future = backward_filter(&d.slice(2..3), &opts).unwrap();
        let x = smooth_exact(&before, &future, &d.batches()[1], 0.5, 0.5, u128::MAX).unwrap();
        let y = smooth_exact(&through, &future, &ObservationBatch::default(), 0.0, 0.5, u128::MAX).unwrap();
        assert_close(&x, &y, 1e-12);
        let z = smooth_dataset(&d, 0.5, &opts).unwrap();
        assert_close(&x, &z, 1e-15);
    }
}

#[test]
fn boundary_times() {
    let d = dataset(&[&["a", "b"], &["a"], &["b", "c"]], &[0.0, 0.5, 1.0], Baseline::Nonatomic);
    let opts = InferenceOptions::default();
    let at_end = smooth_dataset(&d, 1.0, &opts).unwrap();
    assert_close(&filter_dataset(&d, &opts).unwrap(), &at_end, 1e-12);
    let at_start = smooth_dataset(&d, 0.0, &opts).unwrap();
    assert_close(&backward_filter(&d, &opts).unwrap(), &at_start, 1e-12);
    assert!(matches!(smooth_dataset(&d, 1.5, &opts), Err(Error::Invalid(_))));

    let single = dataset(&[&["a", "a"]], &[2.0], Baseline::Nonatomic);
    let s = smooth_dataset(&single, 2.0, &opts).unwrap();
    assert_eq!(s.weight(&Node::from([2])), 1.0);
}

#[test]
fn nonatomic_support_is_respected() {
    // "a" is seen at every time, so every node must keep it
    let d = dataset(&[&["a", "b"], &["a"], &["a", "c"]], &[0.0, 0.5, 1.0], Baseline::Nonatomic);
    for t in [0.25, 0.5, 0.75] {
        let s = smooth_dataset(&d, t, &InferenceOptions::default()).unwrap();
        let a = s.registry().index_of("a").unwrap();
        assert!(s.nodes().keys().all(|n| n.get(a) > 0), "t = {t}");
    }
}

#[test]
fn mc_smoothing_tracks_exact() {
    let base = atomic();
    let fwd = state(&["a", "b", "c"], &[(&[2, 1, 0], 0.7), (&[1, 0, 1], 0.3)], &base);
    let bwd = state(&["a", "b", "c"], &[(&[0, 2, 1], 0.4), (&[1, 1, 0], 0.6)], &base);
    let batch = ObservationBatch::new(["b"]);
    let exact = smooth_exact(&fwd, &bwd, &batch, 0.4, 0.3, u128::MAX).unwrap();
    let mc = smooth_mc(&fwd, &bwd, &batch, 0.4, 0.3, 400_000, 0.0, 17).unwrap();
    let worst = exact.nodes().iter().map(|(n, w)| (mc.weight(n) - w).abs()).fold(0.0, f64::max);
    assert!(worst < 5e-3, "worst error {worst}");
    assert!(mc.nodes().keys().all(|n| exact.weight(n) > 0.0));
}

#[test]
fn degenerate_bins_are_reported() {
    let base = Baseline::Nonatomic;
    let fwd = state(&["a"], &[(&[1], 1.0)], &base);
    let bwd = state(&["a"], &[(&[1], 1.0)], &base);
    let r = smooth_mc(&fwd, &bwd, &ObservationBatch::default(), 60.0, 60.0, 100, 0.0, 1);
    assert!(matches!(r, Err(Error::DegenerateBins)), "{r:?}");
    assert!(smooth_exact(&fwd, &bwd, &ObservationBatch::default(), 60.0, 60.0, u128::MAX).is_ok());
}

#[test]
fn zero_gaps_skip_propagation() {
    let base = atomic();
    let fwd = state(&["a", "b", "c"], &[(&[2, 1, 0], 1.0)], &base);
    let prior = FvddpState::prior(1.0, base).unwrap();
    let s = smooth_exact(&fwd, &prior, &ObservationBatch::default(), 0.0, 0.0, u128::MAX).unwrap();
    assert_eq!(s, fwd);
}
