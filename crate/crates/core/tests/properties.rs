use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use chirp_core::analysis::{
    bin_equal_volume, calibrate, correlate, fit_calibration, pearson, spearman, Bin, PairedSample,
};
use chirp_core::chirp::{chirp_exact, estimate_chirp, pair_seed, DistanceMatrix, SamplingConfig};
use chirp_core::clustering::{k_medoids, k_medoids_traced, within_cluster_cost};
use chirp_core::gridworld::{make_variant, Action, Cell, GridMdp};
use chirp_core::lifelong::{run_scenario, wilson_interval, ReuseStrategy, Scenario};
use chirp_core::policy::{evaluate_from, optimal_policy, PolicyRole, TabularPolicy};
use chirp_core::sopr::sopr;
use chirp_core::transport::{w1_bruteforce, w1_exact, PointCloud};

fn cell() -> impl Strategy<Value = Cell> {
    (1..=18i32, 1..=18i32).prop_map(|(x, y)| Cell::new(x, y))
}

fn variant(slip: f64) -> impl Strategy<Value = GridMdp> {
    (cell(), cell())
        .prop_filter("start differs from goal", |(g, s)| g != s)
        .prop_map(move |(g, s)| make_variant(g, s, slip).unwrap())
}

fn action() -> impl Strategy<Value = Action> {
    (0..4usize).prop_map(|i| Action::from_index(i).unwrap())
}

fn cloud_pair(max_n: usize, max_d: usize) -> impl Strategy<Value = (PointCloud, PointCloud, PointCloud)> {
    (1..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
        let pts = move || proptest::collection::vec(-10.0..10.0f64, n * d);
        (pts(), pts(), pts()).prop_map(move |(a, b, c)| {
            (
                PointCloud::from_flat(d, a).unwrap(),
                PointCloud::from_flat(d, b).unwrap(),
                PointCloud::from_flat(d, c).unwrap(),
            )
        })
    })
}

fn matrix(max_n: usize) -> impl Strategy<Value = DistanceMatrix> {
    (2..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(0.0..1.0f64, n * (n - 1) / 2).prop_map(move |upper| {
            let mut e = vec![0.0; n * n];
            let mut it = upper.into_iter();
            for i in 0..n {
                for j in i + 1..n {
                    let v = it.next().unwrap();
                    e[i * n + j] = v;
                    e[j * n + i] = v;
                }
            }
            DistanceMatrix::new((0..n).map(|i| format!("m{i}")).collect(), e, 1).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slip_free_steps_are_deterministic(m in variant(0.0), s in cell(), a in action(), seed in any::<u64>()) {
        let t1 = m.step(s, a, seed).unwrap();
        let t2 = m.step(s, a, seed.wrapping_add(1)).unwrap();
        prop_assert_eq!(t1, t2);
    }

    #[test]
    fn rewards_stay_in_band(m in variant(0.3), s in cell(), a in action(), seed in any::<u64>()) {
        let t = m.step(s, a, seed).unwrap();
        let floor = -m.c_scale * 2.0 * f64::from(m.grid_size - 2);
        prop_assert!(t.reward <= 0.0 && t.reward >= floor);
        prop_assert!(m.is_passable(t.next_state));
        prop_assert_eq!(t.terminal, t.next_state == m.goal);
        let total: f64 = m.outcomes(s, a).iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert_eq!(m.enumerate_state_actions().len(), 18 * 18 * 4);
    }

    #[test]
    fn w1_matches_brute_force_and_scales((x, y, _) in cloud_pair(6, 5), lambda in prop_oneof![Just(0.5), Just(2.0)]) {
        let c = w1_exact(&x, &y).unwrap().cost;
        prop_assert!(c >= 0.0);
        prop_assert!((c - w1_bruteforce(&x, &y).unwrap()).abs() <= 1e-12);
        let scaled = w1_exact(&x.scaled(lambda), &y.scaled(lambda)).unwrap().cost;
        prop_assert!((scaled - lambda * c).abs() <= 1e-9 * (1.0 + c));
    }

    #[test]
    fn w1_is_a_metric((x, y, z) in cloud_pair(6, 5)) {
        let xy = w1_exact(&x, &y).unwrap().cost;
        prop_assert!((xy - w1_exact(&y, &x).unwrap().cost).abs() <= 1e-9);
        prop_assert!(w1_exact(&x, &x).unwrap().cost <= 1e-12);
        let xz = w1_exact(&x, &z).unwrap().cost;
        let yz = w1_exact(&y, &z).unwrap().cost;
        prop_assert!(xz <= xy + yz + 1e-9);
    }

    #[test]
    fn w1_vanishes_only_on_equal_multisets((x, _, _) in cloud_pair(6, 3), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..x.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let permuted: Vec<Vec<f64>> = order.iter().map(|&i| x.point(i).to_vec()).collect();
        let y = PointCloud::new(&permuted).unwrap();
        prop_assert!(w1_exact(&x, &y).unwrap().cost <= 1e-12);
        let mut moved = permuted.clone();
        moved[0][0] += 1.0;
        prop_assert!(w1_exact(&x, &PointCloud::new(&moved).unwrap()).unwrap().cost > 0.0);
    }

    #[test]
    fn pair_seeds_are_order_free(base in any::<u64>(), i in 0..50usize, j in 0..50usize, r in 0..5usize) {
        prop_assert_eq!(pair_seed(base, i, j, r), pair_seed(base, j, i, r));
    }

    #[test]
    fn spearman_ignores_monotone_transforms(xs in proptest::collection::vec(-3.0..3.0f64, 5..40), noise in proptest::collection::vec(-1.0..1.0f64, 40)) {
        let ys: Vec<f64> = xs.iter().zip(&noise).map(|(x, e)| x + e).collect();
        prop_assume!(xs.iter().any(|&v| v != xs[0]) && ys.iter().any(|&v| v != ys[0]));
        let base = spearman(&xs, &ys).unwrap();
        let ex: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        let cube: Vec<f64> = ys.iter().map(|y| y.powi(3)).collect();
        prop_assert!((spearman(&ex, &ys).unwrap() - base).abs() < 1e-12);
        prop_assert!((spearman(&xs, &cube).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn pearson_ignores_positive_affine_maps(xs in proptest::collection::vec(-3.0..3.0f64, 5..40), a in 0.1..10.0f64, b in -5.0..5.0f64) {
        let ys: Vec<f64> = xs.iter().map(|x| (x * 1.7).sin()).collect();
        prop_assume!(xs.iter().any(|&v| (v - xs[0]).abs() > 1e-6) && ys.iter().any(|&v| (v - ys[0]).abs() > 1e-6));
        let base = pearson(&xs, &ys).unwrap();
        let moved: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        prop_assert!((pearson(&moved, &ys).unwrap() - base).abs() < 1e-9);
    }

    #[test]
    fn permutation_p_values_are_probabilities(xs in proptest::collection::vec(0.0..1.0f64, 3..30), seed in any::<u64>()) {
        let samples: Vec<PairedSample> = xs.iter().enumerate()
            .map(|(i, &x)| PairedSample { pair_id: i.to_string(), chirp: x, sopr: (x * 13.0).fract() })
            .collect();
        if let Ok(r) = correlate(&samples, 100, seed) {
            prop_assert!((0.0..=1.0).contains(&r.p_pearson) && (0.0..=1.0).contains(&r.p_spearman));
            prop_assert!(r.p_pearson > 0.0);
            prop_assert!((-1.0..=1.0).contains(&r.pearson_rho));
        }
    }

    #[test]
    fn calibration_is_monotone_and_bounded(ys in proptest::collection::vec(-0.2..1.2f64, 5..20), xs_step in 0.01..0.3f64) {
        let bins: Vec<Bin> = ys.iter().enumerate()
            .map(|(i, &y)| Bin { median_chirp: i as f64 * xs_step, median_sopr: y, count: 1 })
            .collect();
        let curve = fit_calibration(&bins).unwrap();
        let (lo, hi) = (curve.domain[0], curve.domain[1]);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=400 {
            let v = calibrate(&curve, lo - 0.5 + (hi - lo + 1.0) * k as f64 / 400.0);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn binning_is_balanced(xs in proptest::collection::vec(0.0..1.0f64, 16..200), n_bins in 2..16usize) {
        let samples: Vec<PairedSample> = xs.iter().enumerate()
            .map(|(i, &x)| PairedSample { pair_id: i.to_string(), chirp: x, sopr: x })
            .collect();
        let bins = bin_equal_volume(&samples, n_bins).unwrap();
        let sizes: Vec<usize> = bins.iter().map(|b| b.count).collect();
        prop_assert_eq!(sizes.iter().sum::<usize>(), xs.len());
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert!(bins.windows(2).all(|w| w[0].median_chirp <= w[1].median_chirp));
    }

    #[test]
    fn k_medoids_is_consistent(d in matrix(10), k_frac in 0.0..1.0f64, seed in any::<u64>()) {
        let k = 1 + ((d.len() - 1) as f64 * k_frac) as usize;
        let (a, history) = k_medoids_traced(&d, k, seed, 4).unwrap();
        prop_assert!(history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(a.medoids.len(), k);
        prop_assert!(a.medoids.windows(2).all(|w| w[0] < w[1]));
        for &m in &a.medoids {
            prop_assert_eq!(a.labels[m], m);
        }
        prop_assert!((within_cluster_cost(&d, &a).unwrap() - a.cost).abs() < 1e-12);
        prop_assert_eq!(k_medoids(&d, k, seed).unwrap(), k_medoids(&d, k, seed).unwrap());
    }

    #[test]
    fn wilson_contains_the_estimate(trials in 1..500usize, frac in 0.0..=1.0f64) {
        let successes = (trials as f64 * frac).floor() as usize;
        let w = wilson_interval(successes, trials).unwrap();
        prop_assert!(0.0 <= w.ci_low && w.ci_low <= w.rate && w.rate <= w.ci_high && w.ci_high <= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sopr_is_bounded(a in variant(0.1), b in variant(0.1)) {
        let r = sopr(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.value));
        prop_assert_eq!(sopr(&a, &a).unwrap().value, 0.0);
    }

    #[test]
    fn policy_values_are_bracketed(m in variant(0.2), seed in any::<u64>()) {
        let best = optimal_policy(&m, PolicyRole::MaxOptimal).unwrap();
        let worst = optimal_policy(&m, PolicyRole::MinOptimal).unwrap();
        let start = [(m.start, 1.0)];
        let hi = evaluate_from(&best, &m, &start).unwrap().value;
        let lo = evaluate_from(&worst, &m, &start).unwrap().value;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        for _ in 0..10 {
            let probs: Vec<[f64; 4]> = (0..m.n_cells())
                .map(|_| {
                    let w: [f64; 4] = [rng.gen(), rng.gen(), rng.gen(), rng.gen()];
                    let s: f64 = w.iter().sum();
                    w.map(|v| v / s)
                })
                .collect();
            let p = TabularPolicy::new(m.grid_size, probs, PolicyRole::Learned).unwrap();
            let v = evaluate_from(&p, &m, &start).unwrap().value;
            prop_assert!(lo <= v + 1e-9 && v <= hi + 1e-9);
        }
    }

    #[test]
    fn estimates_are_symmetric_and_non_negative(a in variant(0.0), b in variant(0.0), seed in any::<u64>()) {
        for cfg in [SamplingConfig::random(15, 1, seed), SamplingConfig::reward_shaped(15, 1, seed)] {
            let ab = estimate_chirp(&a, &b, &cfg).unwrap();
            let ba = estimate_chirp(&b, &a, &cfg).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-12);
        }
    }

    #[test]
    fn scenario_runs_are_reproducible(seed in any::<u64>(), change in 0.0..=1.0f64) {
        let g = |x, y| make_variant(Cell::new(x, y), Cell::new(9, 9), 0.0).unwrap();
        let s = Scenario { tasks: vec![g(2, 2), g(17, 17), g(2, 17), g(17, 2)], change_prob: change, total_episodes: 150, horizon: 60, eval_window: 50 };
        for strategy in [ReuseStrategy::Cpr { task_to_policy: vec![0, 1, 0, 1] }, ReuseStrategy::lpr(3), ReuseStrategy::Single] {
            let log = run_scenario(&s, &strategy, seed).unwrap();
            prop_assert_eq!(&log, &run_scenario(&s, &strategy, seed).unwrap());
            prop_assert!(log.records.iter().all(|r| r.policy_id < strategy.policy_count()));
            if let ReuseStrategy::Cpr { task_to_policy } = &strategy {
                prop_assert!(log.records.iter().all(|r| r.policy_id == task_to_policy[r.task_id]));
            }
        }
    }
}

#[test]
fn exact_distance_is_symmetric_and_zero_on_self() {
    let a = make_variant(Cell::new(4, 15), Cell::new(12, 3), 0.0).unwrap();
    let b = make_variant(Cell::new(16, 6), Cell::new(2, 2), 0.0).unwrap();
    assert_eq!(chirp_exact(&a, &a).unwrap(), 0.0);
    let (ab, ba) = (chirp_exact(&a, &b).unwrap(), chirp_exact(&b, &a).unwrap());
    assert!(ab > 0.0 && (ab - ba).abs() < 1e-12);
}
