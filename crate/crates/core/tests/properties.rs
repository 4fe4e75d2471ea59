mod common;

use proptest::prelude::*;

use common::{ami_oracle, brute_shared, flood_fill};
use mmc_core::clustering::{run_mmc, ClusterParams, KernelKind, SampleGraph};
use mmc_core::data::{normalize_minmax, Dataset, SampleSet};
use mmc_core::kernels::{IkModel, KernelModel, Mechanism, Similarity};
use mmc_core::massdist::{mass, mean_map, total_objective, ClusterMeanMap};
use mmc_core::metrics::{ami_score, f1_score};
use mmc_core::synthetic::{generate_synthetic, Family};

fn dataset(max_n: usize, max_d: usize) -> impl Strategy<Value = Dataset> {
    (2..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
        prop::collection::vec(-5.0f64..5.0, n * d).prop_map(move |pts| Dataset::from_flat(pts, d, None).unwrap())
    })
}

fn mechanism() -> impl Strategy<Value = Mechanism> {
    prop_oneof![Just(Mechanism::Voronoi), Just(Mechanism::Hypersphere)]
}

/// Dataset with a valid (ψ, t) for either mechanism.
fn fitted() -> impl Strategy<Value = (Dataset, IkModel)> {
    (dataset(30, 3), mechanism(), 1usize..=24, any::<u64>()).prop_flat_map(|(ds, mech, t, seed)| {
        let lo = if mech == Mechanism::Hypersphere { 2 } else { 1 };
        let hi = ds.len().min(8).max(lo);
        (lo..=hi).prop_map(move |psi| {
            let model = IkModel::fit(&ds, psi, t, mech, seed).unwrap();
            (ds.clone(), model)
        })
    })
}

fn labels(n: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..k, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalize_is_idempotent_and_bounded(ds in dataset(40, 4)) {
        let once = normalize_minmax(&ds);
        prop_assert!(once.points().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(normalize_minmax(&once), once);
    }

    #[test]
    fn ik_similarity_is_an_exact_count((ds, model) in fitted()) {
        for i in 0..ds.len() {
            for j in 0..ds.len() {
                let (x, y) = (ds.point(i), ds.point(j));
                let expected = brute_shared(&model, x, y) as f64 / model.t() as f64;
                prop_assert_eq!(model.similarity(x, y).unwrap(), expected);
            }
        }
    }

    #[test]
    fn feature_norms((ds, model) in fitted(), probe in prop::collection::vec(-6.0f64..6.0, 3)) {
        let x = &probe[..ds.dim()];
        let f = model.embed(x).unwrap();
        prop_assert_eq!(f.squared_norm(), f.set_count() as f64);
        match model.mechanism() {
            Mechanism::Voronoi => prop_assert_eq!(f.set_count(), model.t()),
            Mechanism::Hypersphere => prop_assert!(f.set_count() <= model.t()),
        }
    }

    #[test]
    fn similarity_symmetric_and_bounded((ds, model) in fitted()) {
        let emb = model.embed_dataset(&ds).unwrap();
        for i in 0..ds.len() {
            for j in 0..ds.len() {
                let s = emb.similarity(i, j);
                prop_assert!((0.0..=1.0).contains(&s));
                prop_assert_eq!(s, emb.similarity(j, i));
                prop_assert_eq!(s, model.similarity(ds.point(i), ds.point(j)).unwrap());
            }
            if model.mechanism() == Mechanism::Voronoi {
                prop_assert_eq!(emb.similarity(i, i), 1.0);
            }
        }
    }

    #[test]
    fn mass_is_mean_similarity((ds, model) in fitted(), pick in prop::collection::vec(any::<bool>(), 30)) {
        let members: Vec<usize> = (0..ds.len()).filter(|&i| pick[i]).collect();
        prop_assume!(!members.is_empty());
        let emb = model.embed_dataset(&ds).unwrap();
        let cmm = mean_map(&emb, &members).unwrap();
        for i in 0..ds.len() {
            let x = ds.point(i);
            let direct: f64 = members.iter().map(|&j| model.similarity(x, ds.point(j)).unwrap()).sum::<f64>()
                / members.len() as f64;
            prop_assert!((mass(&model, x, &cmm).unwrap() - direct).abs() <= 1e-12);
            prop_assert!((cmm.value(&emb, i) - direct).abs() <= 1e-12);
        }
    }

    #[test]
    fn incremental_maps_match_rebuilds((ds, model) in fitted(), ops in prop::collection::vec(any::<bool>(), 30)) {
        let emb = model.embed_dataset(&ds).unwrap();
        let mut live = ClusterMeanMap::empty(&emb);
        let mut members = Vec::new();
        for (i, &add) in ops.iter().enumerate().take(ds.len()) {
            if add || members.is_empty() {
                live.add(&emb, i);
                members.push(i);
            } else {
                let j = members.remove(0);
                live.remove(&emb, j);
            }
        }
        prop_assume!(!members.is_empty());
        let rebuilt = mean_map(&emb, &members).unwrap();
        prop_assert_eq!(live.size(), rebuilt.size());
        prop_assert_eq!(live.sums(), rebuilt.sums());
    }

    #[test]
    fn components_match_flood_fill(
        s in 2usize..60,
        seed in any::<u64>(),
        tau_i in 1usize..10,
    ) {
        let sim = common::RandomGraph::new(s, seed);
        let sample = SampleSet { indices: (0..s).collect(), seed: 0 };
        let graph = SampleGraph::build(&sim, &sample);
        let tau = tau_i as f64 / 10.0;
        let comps = graph.components(tau);
        for w in comps.windows(2) {
            prop_assert!(w[0].len() > w[1].len() || (w[0].len() == w[1].len() && w[0][0] < w[1][0]));
        }
        let mut got: Vec<Vec<usize>> = comps.into_iter().map(|mut c| { c.sort_unstable(); c }).collect();
        got.sort();
        prop_assert_eq!(got, flood_fill(&|a, b| sim.similarity(a, b), s, tau));
    }

    #[test]
    fn metrics_ignore_label_names(truth in labels(60, 4), pred in labels(60, 5), shift in 1usize..50) {
        let renamed: Vec<usize> = pred.iter().map(|&l| (l * 7 + shift) % 1000).collect();
        prop_assert!((f1_score(&pred, &truth).unwrap() - f1_score(&renamed, &truth).unwrap()).abs() < 1e-12);
        prop_assert!((ami_score(&pred, &truth).unwrap() - ami_score(&renamed, &truth).unwrap()).abs() < 1e-10);
        prop_assert!(f1_score(&truth, &truth).unwrap() == 1.0);
    }

    #[test]
    fn ami_symmetric_and_matches_oracle(a in labels(80, 4), b in labels(80, 3)) {
        let ab = ami_score(&a, &b).unwrap();
        prop_assert!((ab - ami_score(&b, &a).unwrap()).abs() < 1e-10);
        prop_assert!((ab - ami_oracle(&a, &b)).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn objective_total_matches_members(seed in any::<u64>(), k in 1usize..4) {
        let ds = generate_synthetic(Family::ThreeGaussians, 90, seed).unwrap();
        let model = IkModel::fit(&ds, 8, 20, Mechanism::Voronoi, seed).unwrap();
        let emb = model.embed_dataset(&ds).unwrap();
        let lab: Vec<usize> = (0..ds.len()).map(|i| i % k).collect();
        let obj = total_objective(&emb, &lab, k).unwrap();
        let mut direct = 0.0;
        for i in 0..ds.len() {
            let members: Vec<usize> = (0..ds.len()).filter(|&j| lab[j] == lab[i]).collect();
            direct += members.iter().map(|&j| emb.similarity(i, j)).sum::<f64>() / members.len() as f64;
        }
        prop_assert!((obj.total - direct).abs() < 1e-9);
    }

    #[test]
    fn runs_are_deterministic_and_refinement_never_lowers_objective(seed in any::<u64>(), tau_i in 2usize..8) {
        let ds = generate_synthetic(Family::ThreeGaussians, 300, seed).unwrap();
        let params = ClusterParams::new(3, KernelKind::IkHypersphere { psi: 16 })
            .with_tau(tau_i as f64 / 10.0)
            .with_t(50)
            .with_s(100)
            .with_seed(seed);
        match run_mmc(&ds, &params) {
            Ok(a) => {
                prop_assert!(a.objective.total >= a.objective_before_refine.total);
                let b = run_mmc(&ds, &params).unwrap();
                prop_assert_eq!(a.labels, b.labels);
                prop_assert_eq!(a.objective, b.objective);
            }
            Err(e) => {
                let too_few = matches!(e, mmc_core::Error::TooFewComponents { .. });
                prop_assert!(too_few, "unexpected error: {}", e);
            }
        }
    }
}
