mod common;

use std::collections::BTreeSet;

use adscope_core::catgraph::build_graph;
use adscope_core::objstats::{
    detect_stop_objects, filter_stop_objects, object_frequencies, top_objects_per_category,
};
use adscope_core::predict::{filter_ads, FilterParams};
use adscope_core::synth::{generate_corpus, CategorySpec, SynthSpec};
use adscope_core::Sequential;
use common::*;

fn assert_table_matches(table: &adscope_core::objstats::ObjectFrequencyTable, rc: &Recount) {
    assert_eq!(table.total_ads, rc.total);
    assert_eq!(table.object_counts, rc.corpus);
    assert_eq!(table.category_sizes, rc.sizes);
    for (cat, size) in &rc.sizes {
        let empty = Default::default();
        let expected = rc.per_category.get(cat).unwrap_or(&empty);
        let found = table.category_counts.get(cat).unwrap_or(&empty);
        assert_eq!(found, expected, "category {cat} of size {size}");
    }
}

#[test]
fn object_and_graph_stages_match_recount_on_random_corpora() {
    for seed in 0..20 {
        let corpus = random_corpus(seed);
        let classes = corpus.num_classes();

        let table = object_frequencies(&corpus).unwrap();
        let raw = recount(corpus.records(), classes, &BTreeSet::new());
        assert_table_matches(&table, &raw);

        let report = detect_stop_objects(&table, 0.05).unwrap();
        let stop: Vec<u32> = report.stop_objects.iter().map(|s| s.class_id).collect();
        assert_eq!(stop, oracle_stop_objects(&raw), "seed {seed}");
        for s in &report.stop_objects {
            assert_eq!(
                s.corpus_fraction,
                raw.corpus[&s.class_id] as f64 / raw.total as f64
            );
        }

        let filtered = filter_stop_objects(&corpus, &report).unwrap();
        let kept = recount(corpus.records(), classes, &report.class_ids());
        assert_table_matches(&filtered, &kept);

        for (view, rc) in [(&table, &raw), (&filtered, &kept)] {
            let graph = build_graph(view, 0.01).unwrap();
            assert_eq!(graph_edges(&graph), oracle_edges(rc), "seed {seed}");
            let linked: BTreeSet<u32> = oracle_edges(rc).iter().map(|e| e.1).collect();
            let vertices: BTreeSet<u32> = graph.objects().iter().map(|o| o.class_id).collect();
            assert_eq!(vertices, linked);
            let cats: Vec<String> = rc.sizes.keys().cloned().collect();
            assert_eq!(graph.categories(), cats.as_slice());
            assert!(graph.skeleton().two_coloring().is_some());
        }

        let ads = filter_ads(&corpus, &FilterParams::default());
        let ids: Vec<String> = ads.records().iter().map(|r| r.id.clone()).collect();
        assert_eq!(ids, oracle_filter_ads(corpus.records()), "seed {seed}");
    }
}

#[test]
fn empirical_frequencies_track_planted_profile() {
    let spec = SynthSpec::standard(11, 10_000, 4, 2);
    let (corpus, truth) = generate_corpus(&spec, &Sequential).unwrap();
    let table = object_frequencies(&corpus).unwrap();
    let mut z = Vec::new();
    for (cat, planted) in &truth.category_object_freq {
        let n = table.category_sizes[cat] as f64;
        for (&id, &p) in planted {
            let se = (p * (1.0 - p) / n).sqrt();
            z.push((table.category_fraction(cat, id) - p) / se);
        }
    }
    // Hundreds of comparisons: a 3-sigma miss now and then is expected
    // (about 0.3% of them), a systematic bias is not.
    let beyond = z.iter().filter(|v| v.abs() > 3.0).count();
    assert!(
        beyond * 100 <= z.len(),
        "{beyond} of {} beyond 3 sigma",
        z.len()
    );
    assert!(z.iter().all(|v| v.abs() < 5.0));
    let mean_sq = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
    assert!((0.7..1.3).contains(&mean_sq), "mean z^2 {mean_sq}");
}

#[test]
fn ranking_follows_planted_order() {
    let mut spec = SynthSpec::standard(12, 10_000, 4, 2);
    spec.categories = ["Auto", "Travel"]
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let b = 10 * c as u32;
            CategorySpec {
                name: name.to_string(),
                weight: 1.0,
                slots: vec![
                    vec![(b + 1, 8.0), (b + 2, 2.0)],
                    vec![(b + 3, 6.0), (b + 4, 4.0)],
                    vec![(b + 5, 1.0)],
                    vec![(b + 6, 3.0), (b + 7, 7.0)],
                    vec![(b + 8, 1.0), (b + 9, 9.0)],
                ],
            }
        })
        .collect();
    let (corpus, truth) = generate_corpus(&spec, &Sequential).unwrap();
    let table = object_frequencies(&corpus).unwrap();
    let ranking = top_objects_per_category(&table, 10).unwrap();
    for (cat, planted) in &truth.category_object_freq {
        let mut order: Vec<(u32, f64)> = planted.iter().map(|(&k, &v)| (k, v)).collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let ranked: Vec<u32> = ranking[cat].iter().map(|r| r.0).collect();
        let planted: Vec<u32> = order.iter().map(|r| r.0).collect();
        assert_eq!(ranked, planted, "{cat}");
    }
}
