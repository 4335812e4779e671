use cluster_sieve::inference::{run_test, TestRequest, VarianceSpec};
use cluster_sieve::kmeans::{run_kmeans, within_ss, KMeansConfig};
use cluster_sieve::projection::{all_pairs, build_projection, PairSet};
use cluster_sieve::selection::{select_pairs, SelectionRule};
use cluster_sieve::simulation::{
    kolmogorov_pvalue, ks_two_sample, replicate_pvalues, run_type1, MuKind, SimConfig, TestTemplate,
};
use cluster_sieve::truncation::{known_sigma_truncation, unknown_sigma_truncation, KnownSigmaPath, UnknownSigmaPath};
use cluster_sieve::DataMatrix;
use proptest::prelude::*;

fn matrix(n: usize, q: usize) -> impl Strategy<Value = DataMatrix> {
    prop::collection::vec(-4.0f64..4.0, n * q).prop_map(move |v| DataMatrix::new(n, q, v).unwrap())
}

fn instance() -> impl Strategy<Value = (DataMatrix, usize, u64)> {
    (8usize..25, 1usize..3, 2usize..4, any::<u64>())
        .prop_flat_map(|(n, q, k, seed)| (matrix(n, q), Just(k), Just(seed)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lloyd_is_deterministic_and_descends((x, k, seed) in instance()) {
        let cfg = KMeansConfig::new(k, seed);
        let (Ok(a), Ok(b)) = (run_kmeans(&x, &cfg), run_kmeans(&x, &cfg)) else { return Ok(()) };
        prop_assert_eq!(&a, &b);
        // Each step's labels are scored after centres move, which cannot raise the cost.
        let costs: Vec<f64> = a.assignments().iter().map(|l| within_ss(&x, l, k)).collect();
        for w in costs.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", costs);
        }
    }

    #[test]
    fn statistic_lies_in_its_set((x, k, seed) in instance()) {
        let Ok(trace) = run_kmeans(&x, &KMeansConfig::new(k, seed)) else { return Ok(()) };
        let part = trace.final_partition();
        let bundle = build_projection(&part, &PairSet::all(k), x.cols()).unwrap();
        if let Ok(path) = KnownSigmaPath::new(&x, &bundle, 0.7) {
            let set = known_sigma_truncation(&x, &trace, &bundle, 0.7).unwrap();
            let t = path.statistic();
            prop_assert!(set.contains(t) || set.distance_to_boundary(t) < 1e-9 * t.max(1.0), "{} {}", t, set);
        }
        if let Ok(path) = UnknownSigmaPath::new(&x, &part, &bundle) {
            let set = unknown_sigma_truncation(&x, &trace, &part, &bundle).unwrap();
            let t = path.statistic();
            prop_assert!(set.contains(t) || set.distance_to_boundary(t) < 1e-9 * t.max(1.0), "{} {}", t, set);
        }
    }

    #[test]
    fn equal_spans_give_equal_statistics((x, seed) in (12usize..25, 1usize..3).prop_flat_map(|(n, q)| (matrix(n, q), any::<u64>()))) {
        let k = 3;
        let test = |pairs: Vec<(usize, usize)>, variance| {
            run_test(&TestRequest::new(x.clone(), KMeansConfig::new(k, seed), SelectionRule::Fixed(pairs), variance))
        };
        for variance in [VarianceSpec::Known(1.0), VarianceSpec::Unknown] {
            let (Ok(a), Ok(b)) = (test(all_pairs(k), variance), test(vec![(0, 2), (1, 2)], variance)) else { continue };
            if a.degenerate || b.degenerate {
                continue;
            }
            prop_assert!((a.statistic - b.statistic).abs() <= 1e-10 * a.statistic.max(1.0));
            prop_assert!((a.p_value - b.p_value).abs() <= 1e-9);
        }
    }

    #[test]
    fn selection_replays_at_the_observed_statistic((x, k, seed) in instance(), g in 1usize..3) {
        let Ok(trace) = run_kmeans(&x, &KMeansConfig::new(k, seed)) else { return Ok(()) };
        let part = trace.final_partition();
        let rule = SelectionRule::TopG(g.min(k * (k - 1) / 2));
        let observed = select_pairs(&x, &part, &rule).unwrap();
        let bundle = build_projection(&part, &observed, x.cols()).unwrap();
        let Ok(path) = KnownSigmaPath::new(&x, &bundle, 1.0) else { return Ok(()) };
        let again = select_pairs(&path.at(path.statistic()), &part, &rule).unwrap();
        prop_assert_eq!(observed.pairs(), again.pairs());
    }
}

fn null_config(mu_kind: MuKind, seed: u64) -> SimConfig {
    SimConfig {
        n: 60,
        q: 2,
        k: 3,
        sigma: 1.0,
        mu_kind,
        replicates: 400,
        alpha: 0.05,
        master_seed: seed,
        test: TestTemplate::new(SelectionRule::Fixed(all_pairs(3)), VarianceSpec::Known(1.0)),
    }
}

#[test]
fn zero_signal_layouts_match_the_null() {
    let null: Vec<f64> = replicate_pvalues(&null_config(MuKind::Null, 1)).unwrap().into_iter().flatten().collect();
    for layout in [MuKind::KGon(0.0), MuKind::Horizontal(0.0)] {
        let other: Vec<f64> = replicate_pvalues(&null_config(layout, 2)).unwrap().into_iter().flatten().collect();
        let d = ks_two_sample(&null, &other);
        let m = null.len() * other.len() / (null.len() + other.len());
        assert!(kolmogorov_pvalue(d, m) > 0.01, "{layout:?}: D = {d}");
    }
}

#[test]
fn not_available_results_are_rare() {
    let mut cfg = null_config(MuKind::Null, 3);
    cfg.n = 120;
    cfg.replicates = 300;
    let summary = run_type1(&cfg).unwrap();
    assert!((summary.na_count as f64) < 0.05 * cfg.replicates as f64, "{}", summary.na_count);
}
