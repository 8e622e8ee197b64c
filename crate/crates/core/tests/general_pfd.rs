mod common;

use common::{relative_error, TestRng};
use proptest::prelude::*;
use wfisher::closed_form::{tail_distinct_with, tail_identical, DistinctWeights};
use wfisher::numeric::ConditioningPolicy;
use wfisher::oracle::{conv_tail, default_grid, mc_tail};
use wfisher::pfd::*;

fn groups(pairs: &[(f64, usize)]) -> WeightGroups {
    WeightGroups::from_multiplicities(pairs, 1e-9).unwrap()
}

fn expand(pairs: &[(f64, usize)]) -> Vec<f64> {
    pairs
        .iter()
        .flat_map(|&(w, n)| std::iter::repeat_n(w, n))
        .collect()
}

fn random_grouping(rng: &mut TestRng, max_groups: usize, max_total: usize) -> Vec<(f64, usize)> {
    let m = rng.int(1, max_groups);
    let weights = rng.separated_weights(m, 0.1, 10.0, 0.05);
    let mut pairs: Vec<(f64, usize)> = weights.into_iter().map(|w| (w, 1)).collect();
    let mut total = m;
    while total < max_total && rng.uniform() < 0.6 {
        let i = rng.int(0, m - 1);
        pairs[i].1 += 1;
        total += 1;
    }
    pairs
}

#[test]
fn agrees_with_distinct_closed_form() {
    let mut rng = TestRng::new(11);
    let permissive = ConditioningPolicy::permissive();
    for _ in 0..200 {
        let k = rng.int(2, 8);
        let w = rng.separated_weights(k, 0.1, 10.0, 0.05);
        let total: f64 = w.iter().sum();
        let v = rng.range(0.0, 3.0 * total);
        let pairs: Vec<(f64, usize)> = w.iter().map(|&w| (w, 1)).collect();
        let coeffs = pfd_coefficients(&groups(&pairs)).unwrap();
        let general = right_tail_with(v, &coeffs, &permissive).unwrap().value;
        let distinct = tail_distinct_with(v, &DistinctWeights::new(w.clone()).unwrap(), &permissive)
            .unwrap()
            .value;
        assert!(
            relative_error(general, distinct) < 1e-10,
            "{w:?} v={v}: {general} vs {distinct}"
        );
    }
}

#[test]
fn agrees_with_erlang_for_a_single_group() {
    let mut rng = TestRng::new(12);
    for _ in 0..200 {
        let n = rng.int(1, 30);
        let w = rng.log_uniform(0.1, 10.0);
        let v = rng.range(0.0, 3.0 * n as f64 * w);
        let coeffs = pfd_coefficients(&groups(&[(w, n)])).unwrap();
        let general = right_tail(v, &coeffs).unwrap().value;
        let erlang = tail_identical(v, w, n).value;
        assert!(relative_error(general, erlang) < 1e-12, "w={w} n={n} v={v}");
    }
}

#[test]
fn coefficient_invariants_hold() {
    let mut rng = TestRng::new(13);
    for _ in 0..200 {
        let pairs = random_grouping(&mut rng, 5, 10);
        let coeffs = pfd_coefficients(&groups(&pairs)).unwrap();
        assert_eq!(coeffs.c, 1.0);
        assert!(coeffs.c_gap < 1e-10, "{pairs:?}: {}", coeffs.c_gap);
        assert!(coeffs.sum_gap < 1e-10, "{pairs:?}: {}", coeffs.sum_gap);
    }
}

#[test]
fn matches_convolution_and_monte_carlo() {
    let mut rng = TestRng::new(14);
    for case in 0..20 {
        let pairs = random_grouping(&mut rng, 3, 6);
        let weights = expand(&pairs);
        let total: f64 = weights.iter().sum();
        let v = rng.range(0.2 * total, 2.5 * total);
        let coeffs = pfd_coefficients(&groups(&pairs)).unwrap();
        let analytic = right_tail(v, &coeffs).unwrap().value;

        let (step, max) = default_grid(&weights, v);
        let conv = conv_tail(&weights, v, step, max).unwrap();
        assert!((analytic - conv).abs() < 1e-6, "{pairs:?} v={v}: {analytic} vs conv {conv}");

        let mc = mc_tail(&weights, v, 1_000_000, 100 + case).unwrap();
        let z = mc.z_score(analytic);
        assert!(z.abs() < 4.0, "{pairs:?} v={v}: z={z}");
    }
}

#[test]
fn density_matches_finite_differences() {
    let mut rng = TestRng::new(15);
    for _ in 0..50 {
        let pairs = random_grouping(&mut rng, 4, 8);
        let weights = expand(&pairs);
        let total: f64 = weights.iter().sum();
        let v = rng.range(0.3 * total, 2.0 * total);
        let coeffs = pfd_coefficients(&groups(&pairs)).unwrap();
        let h = 1e-3 * v;
        let s = |x: f64| right_tail(x, &coeffs).unwrap().value;
        let fd = (8.0 * (s(v - h) - s(v + h)) - (s(v - 2.0 * h) - s(v + 2.0 * h))) / (12.0 * h);
        let analytic = density(v, &coeffs).value;
        assert!(relative_error(fd, analytic) < 1e-6, "{pairs:?} v={v}: {fd} vs {analytic}");
    }
}

#[test]
fn left_and_right_tails_are_complementary() {
    let coeffs = pfd_coefficients(&groups(&[(1.0, 2), (2.0, 1)])).unwrap();
    for v in [0.5, 2.0, 4.0, 8.0] {
        let p = left_tail(v, &coeffs).unwrap().value;
        let s = right_tail(v, &coeffs).unwrap().value;
        assert!((p + s - 1.0).abs() < 1e-14);
        // closed form for {1, 1, 2}
        let expected = 4.0 * (-v / 2.0).exp() - (v + 3.0) * (-v).exp();
        assert!(relative_error(s, expected) < 1e-13);
    }
}

fn grouping() -> impl Strategy<Value = Vec<(f64, usize)>> {
    prop::collection::vec((0.1f64..10.0, 1usize..4), 1..4).prop_filter("separated", |pairs| {
        pairs.iter().enumerate().all(|(i, (a, _))| {
            pairs
                .iter()
                .skip(i + 1)
                .all(|(b, _)| (a - b).abs() > 0.05 * a.max(*b))
        })
    })
}

proptest! {
    #[test]
    fn left_tail_is_a_distribution_function(pairs in grouping(), v in 0.0f64..80.0, dv in 0.0f64..5.0) {
        let coeffs = pfd_coefficients(&groups(&pairs)).unwrap();
        let permissive = ConditioningPolicy::permissive();
        let at = 1.0 - right_tail_with(v, &coeffs, &permissive).unwrap().value;
        let later = 1.0 - right_tail_with(v + dv, &coeffs, &permissive).unwrap().value;
        prop_assert!(at >= -1e-12 && at <= 1.0 + 1e-12);
        prop_assert!(later >= at - 1e-12);
        prop_assert_eq!(left_tail(0.0, &coeffs).unwrap().value, 0.0);
    }

    #[test]
    fn coefficients_are_invariant_under_pair_order(pairs in grouping()) {
        let mut reversed = pairs.clone();
        reversed.reverse();
        let a = pfd_coefficients(&groups(&pairs)).unwrap();
        let b = pfd_coefficients(&groups(&reversed)).unwrap();
        prop_assert_eq!(a, b);
    }
}
