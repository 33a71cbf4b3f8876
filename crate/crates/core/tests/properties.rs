mod common;

use adscope_core::catgraph::{build_graph, detect_communities, modularity, UndirectedGraph};
use adscope_core::cluster::{fit_kmeans, nearest_centroid, KMeansConfig, Points};
use adscope_core::corpus::{corpus_stats, ctr, dedup};
use adscope_core::numeric::Matrix;
use adscope_core::objstats::{detect_stop_objects, filter_stop_objects, object_frequencies};
use adscope_core::predict::{
    pearson, train_boosted_trees, BoostingParams, Dataset, FeatureKind, FeatureSet, ModelParams,
};
use adscope_core::SplitMix64;
use common::*;
use proptest::prelude::*;

fn series(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn pearson_is_symmetric_bounded_and_affine_invariant(
        xy in (3usize..40).prop_flat_map(|n| (series(n..n + 1), series(n..n + 1))),
        a in prop_oneof![0.1f64..10.0, -10.0f64..-0.1],
        b in -100.0f64..100.0,
    ) {
        let (x, y) = xy;
        let Ok(r) = pearson(&x, &y) else { return Ok(()); };
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert_eq!(pearson(&y, &x).unwrap().to_bits(), r.to_bits());
        let scaled: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let rs = pearson(&scaled, &y).unwrap();
        prop_assert!((rs - a.signum() * r).abs() <= 1e-12, "{} vs {}", rs, r);
    }

    #[test]
    fn dedup_is_idempotent(seed in any::<u64>(), dups in 0usize..50) {
        let corpus = random_corpus(seed % 1000);
        let mut records = corpus.records().to_vec();
        let mut rng = SplitMix64::new(seed);
        for _ in 0..dups {
            let r = records[rng.index(records.len())].clone();
            records.push(r);
        }
        let (once, dropped) = dedup(records);
        prop_assert_eq!(dropped, dups);
        let (twice, again) = dedup(once.clone());
        prop_assert_eq!(again, 0);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn ctr_and_stats_are_consistent(seed in 0u64..500) {
        let corpus = random_corpus(seed);
        for r in corpus.records() {
            match ctr(r) {
                Ok(c) => {
                    prop_assert!((0.0..=1.0).contains(&c));
                    prop_assert_eq!(c, r.clicks as f64 / r.impressions as f64);
                }
                Err(_) => prop_assert_eq!(r.impressions, 0),
            }
        }
        let stats = corpus_stats(&corpus);
        prop_assert_eq!(stats.per_category.values().sum::<usize>(), stats.total);
    }

    #[test]
    fn stop_filtering_never_raises_a_fraction(seed in 0u64..500, t in 0.01f64..0.5) {
        let corpus = random_corpus(seed);
        let table = object_frequencies(&corpus).unwrap();
        let report = detect_stop_objects(&table, t).unwrap();
        prop_assert!(report.stop_objects.iter().all(|s| s.corpus_fraction > t));
        let filtered = filter_stop_objects(&corpus, &report).unwrap();
        for (id, f) in filtered.corpus_fractions() {
            prop_assert!(f <= table.corpus_fraction(id));
            prop_assert!(!report.class_ids().contains(&id));
        }
        for cat in filtered.category_sizes.keys() {
            for (id, f) in filtered.category_fractions(cat) {
                prop_assert!((0.0..=1.0).contains(&f));
                prop_assert!(f <= table.category_fraction(cat, id));
            }
        }
        let none = detect_stop_objects(&table, 1.0 - 1e-9).unwrap();
        let universal = table.object_counts.values().any(|&c| c == table.total_ads);
        prop_assert_eq!(none.stop_objects.is_empty(), !universal);
    }

    #[test]
    fn raising_the_edge_threshold_never_adds_edges(seed in 0u64..500, lo in 0.001f64..0.5, step in 0.0f64..0.4) {
        let table = object_frequencies(&random_corpus(seed)).unwrap();
        let low = graph_edges(&build_graph(&table, lo).unwrap());
        let high = graph_edges(&build_graph(&table, lo + step).unwrap());
        prop_assert!(high.is_subset(&low));
    }

    #[test]
    fn communities_are_sane_on_random_graphs(
        n in 1usize..40,
        density in 0.0f64..0.5,
        seed in any::<u64>(),
    ) {
        let mut rng = SplitMix64::new(seed);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.next_f64() < density {
                    edges.push((a, b));
                }
            }
        }
        let g = UndirectedGraph::new(n, &edges).unwrap();
        let found = detect_communities(&g, seed).unwrap();
        prop_assert!(found.modularity >= 0.0);
        prop_assert!((-0.5..=1.0).contains(&found.modularity));
        let q = modularity(&g, &found.community_of).unwrap();
        prop_assert_eq!(q.to_bits(), found.modularity.to_bits());
        let degrees = g.degrees();
        let members = found.members();
        for (v, &d) in degrees.iter().enumerate() {
            if d == 0 {
                prop_assert_eq!(&members[found.community_of[v]], &vec![v]);
            }
        }
    }

    #[test]
    fn strongly_clustered_graphs_survive_relabeling(
        sizes in prop::collection::vec(5usize..9, 2..6),
        seed in any::<u64>(),
    ) {
        let mut edges = Vec::new();
        let mut base = 0;
        let mut planted = Vec::new();
        for (c, &s) in sizes.iter().enumerate() {
            for a in base..base + s {
                for b in a + 1..base + s {
                    edges.push((a, b));
                }
            }
            if base > 0 {
                edges.push((base - 1, base));
            }
            planted.extend(std::iter::repeat_n(c, s));
            base += s;
        }
        let n = base;
        let mut perm: Vec<usize> = (0..n).collect();
        SplitMix64::new(seed).shuffle(&mut perm);
        let relabeled: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let g = UndirectedGraph::new(n, &edges).unwrap();
        let h = UndirectedGraph::new(n, &relabeled).unwrap();
        let original = detect_communities(&g, seed).unwrap().community_of;
        let moved = detect_communities(&h, seed ^ 1).unwrap().community_of;
        let pulled_back: Vec<usize> = (0..n).map(|v| moved[perm[v]]).collect();
        prop_assert!(same_partition(&original, &pulled_back));
        prop_assert!(same_partition(&original, &planted));
    }

    #[test]
    fn kmeans_traces_are_monotone_and_assignments_stable(
        seed in any::<u64>(),
        n in 5usize..80,
        k in 1usize..6,
    ) {
        let mut rng = SplitMix64::new(seed);
        let rows: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.standard_normal(), rng.standard_normal() * 3.0, (rng.below(3) as f64) * 4.0])
            .collect();
        let points = Points::from_rows(&rows).unwrap();
        prop_assume!(k <= points.distinct_count());
        let config = KMeansConfig { max_iter: 200, ..Default::default() };
        let model = fit_kmeans(&points, k, &config, seed).unwrap();
        prop_assert!(model.wcss_trace.windows(2).all(|w| w[1] <= w[0]));
        if model.converged {
            for i in 0..n {
                prop_assert_eq!(nearest_centroid(points.row(i), &model.centroids).0, model.assignment[i]);
            }
        }
    }

    #[test]
    fn k_equal_to_distinct_points_gives_zero_wcss(seed in any::<u64>(), distinct in 1usize..6, copies in 1usize..10) {
        let mut rng = SplitMix64::new(seed);
        let base: Vec<[f64; 2]> = (0..distinct).map(|i| [i as f64 * 10.0 + rng.next_f64(), rng.next_f64()]).collect();
        let rows: Vec<[f64; 2]> = base.iter().flat_map(|p| std::iter::repeat_n(*p, copies)).collect();
        let points = Points::from_rows(&rows).unwrap();
        let model = fit_kmeans(&points, distinct, &KMeansConfig::default(), seed).unwrap();
        prop_assert_eq!(model.wcss, 0.0);
    }

    #[test]
    fn boosting_loss_never_rises(seed in any::<u64>(), n in 4usize..120) {
        let mut rng = SplitMix64::new(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.next_f64(), rng.standard_normal()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] * r[1] + 0.1 * rng.standard_normal()).collect();
        let data = Dataset {
            features: Matrix::from_rows(&rows),
            targets: y,
            feature_set: FeatureSet { kind: FeatureKind::DimsOnly, dimension: 2 },
        };
        let params = BoostingParams { iterations: 30, ..Default::default() };
        let model = train_boosted_trees(&data, &params, seed).unwrap();
        let ModelParams::BoostedTrees { training_loss, .. } = &model.params else { unreachable!() };
        prop_assert!(training_loss.windows(2).all(|w| w[1] <= w[0]));
    }
}
