//! Brute-force oracles and fixtures shared by the integration tests.
//!
//! Nothing here calls the code under test except to build inputs; every
//! count is redone with plain nested loops and integer arithmetic.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use adscope_core::catgraph::{CategoryObjectGraph, UndirectedGraph};
use adscope_core::corpus::{label_order, AdRecord, Corpus, ObjectLabel};
use adscope_core::synth::{CtrModel, SynthSpec};
use adscope_core::SplitMix64;

pub const ORACLE_CLASSES: u32 = 60;

const CATEGORY_NAMES: [&str; 6] = ["Auto", "Travel", "Finance", "Retail", "Health", "Games"];

/// A small random corpus meant to stress counting edge cases: skewed and
/// repeated labels, category sizes that are often multiples of 100, and
/// impressions/clicks clustered around the filter boundaries.
pub fn random_corpus(seed: u64) -> Corpus {
    let mut rng = SplitMix64::new(seed);
    let round_sizes = rng.below(2) == 0;
    let n = if round_sizes {
        100 * (1 + rng.index(10))
    } else {
        1 + rng.index(1000)
    };
    let num_cats = 1 + rng.index(CATEGORY_NAMES.len());
    let block = n.div_ceil(num_cats).max(1);
    let records = (0..n)
        .map(|i| {
            let category = if round_sizes {
                CATEGORY_NAMES[(i / block).min(num_cats - 1)]
            } else {
                CATEGORY_NAMES[rng.index(num_cats)]
            };
            let mut ids: Vec<u32> = (0..5)
                .map(|_| {
                    // Squaring a uniform draw skews mass towards low ids.
                    let u = rng.next_f64();
                    (u * u * f64::from(ORACLE_CLASSES)) as u32
                })
                .collect();
            if rng.below(10) == 0 {
                ids[4] = ids[0];
            }
            let mut labels: Vec<ObjectLabel> = ids
                .into_iter()
                .map(|class_id| ObjectLabel {
                    class_id,
                    name: format!("class {class_id}"),
                    score: rng.range_inclusive(1, 20) as f64 / 20.0,
                })
                .collect();
            labels.sort_by(label_order);
            let impressions = match rng.below(5) {
                0 => 0,
                1 => 4_999,
                2 => 5_000,
                3 => 5_001,
                _ => rng.range_inclusive(1, 1_000_000),
            };
            let clicks = match rng.below(4) {
                0 => impressions / 5,
                1 => impressions / 5 + 1,
                2 => 0,
                _ => rng.range_inclusive(0, impressions),
            }
            .min(impressions);
            AdRecord {
                id: format!("{i:08x}"),
                width: 1 + rng.below(1000) as u32,
                height: 1 + rng.below(800) as u32,
                category: category.to_string(),
                impressions,
                clicks,
                labels,
                vector: vec![rng.next_f64() as f32, rng.next_f64() as f32],
            }
        })
        .collect();
    Corpus::from_records(records, 2, ORACLE_CLASSES).unwrap().0
}

/// Ads per category and, per category and class, ads whose top-5 contains
/// the class (excluded classes never count).
#[derive(Debug, Default, PartialEq)]
pub struct Recount {
    pub total: usize,
    pub corpus: BTreeMap<u32, usize>,
    pub sizes: BTreeMap<String, usize>,
    pub per_category: BTreeMap<String, BTreeMap<u32, usize>>,
}

pub fn recount(records: &[AdRecord], num_classes: u32, excluded: &BTreeSet<u32>) -> Recount {
    let mut out = Recount {
        total: records.len(),
        ..Recount::default()
    };
    for r in records {
        *out.sizes.entry(r.category.clone()).or_insert(0) += 1;
    }
    for class_id in 0..num_classes {
        if excluded.contains(&class_id) {
            continue;
        }
        for r in records {
            if r.labels.iter().any(|l| l.class_id == class_id) {
                *out.corpus.entry(class_id).or_insert(0) += 1;
                *out.per_category
                    .entry(r.category.clone())
                    .or_default()
                    .entry(class_id)
                    .or_insert(0) += 1;
            }
        }
    }
    out
}

/// Stop objects by exact rational comparison `count / total > 1/20`,
/// ordered by count descending then class id.
pub fn oracle_stop_objects(rc: &Recount) -> Vec<u32> {
    let mut ids: Vec<(usize, u32)> = rc
        .corpus
        .iter()
        .filter(|&(_, &c)| 20 * c > rc.total)
        .map(|(&id, &c)| (c, id))
        .collect();
    ids.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    ids.into_iter().map(|(_, id)| id).collect()
}

/// Edges `(category, class, weight)` with `count / size >= 1/100`.
pub fn oracle_edges(rc: &Recount) -> BTreeSet<(String, u32, u64)> {
    let mut edges = BTreeSet::new();
    for (cat, counts) in &rc.per_category {
        let size = rc.sizes[cat];
        for (&id, &c) in counts {
            if 100 * c >= size {
                edges.insert((cat.clone(), id, (c as f64 / size as f64).to_bits()));
            }
        }
    }
    edges
}

pub fn graph_edges(g: &CategoryObjectGraph) -> BTreeSet<(String, u32, u64)> {
    g.edges()
        .iter()
        .map(|e| {
            (
                g.categories()[e.category].clone(),
                g.objects()[e.object].class_id,
                e.weight.to_bits(),
            )
        })
        .collect()
}

/// Ids kept by the CTR-stage filter: at least 5,000 impressions and
/// `clicks / impressions <= 1/5`, compared as exact rationals.
pub fn oracle_filter_ads(records: &[AdRecord]) -> Vec<String> {
    let mut kept = Vec::new();
    for r in records {
        if r.impressions >= 5_000 && 5 * u128::from(r.clicks) <= u128::from(r.impressions) {
            kept.push(r.id.clone());
        }
    }
    kept
}

/// `Q * (2m)^2` as an exact integer: `sum_ij (2m A_ij - k_i k_j)` over
/// same-community vertex pairs (ordered, including `i == j`).
pub fn scaled_modularity(graph: &UndirectedGraph, community_of: &[usize]) -> i64 {
    let n = graph.num_vertices();
    let mut adj = vec![vec![0i64; n]; n];
    let mut deg = vec![0i64; n];
    for &(a, b) in graph.edges() {
        adj[a][b] = 1;
        adj[b][a] = 1;
        deg[a] += 1;
        deg[b] += 1;
    }
    let two_m = 2 * graph.edges().len() as i64;
    let mut total = 0;
    for i in 0..n {
        for j in 0..n {
            if community_of[i] == community_of[j] {
                total += two_m * adj[i][j] - deg[i] * deg[j];
            }
        }
    }
    total
}

/// Every set partition of `0..n` as restricted growth strings.
pub fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let next = prefix.iter().max().map_or(0, |m| m + 1);
        for c in 0..=next {
            prefix.push(c);
            extend(prefix, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::new(), n, &mut out);
    out
}

/// Best `(scaled modularity, partition)` by exhaustive search.
pub fn exhaustive_optimum(graph: &UndirectedGraph) -> (i64, Vec<Vec<usize>>) {
    let mut best = i64::MIN;
    let mut argmax = Vec::new();
    for p in all_partitions(graph.num_vertices()) {
        let q = scaled_modularity(graph, &p);
        if q > best {
            best = q;
            argmax = vec![p];
        } else if q == best {
            argmax.push(p);
        }
    }
    (best, argmax)
}

pub fn two_cliques_with_bridge() -> UndirectedGraph {
    let mut edges = Vec::new();
    for base in [0, 4] {
        for a in base..base + 4 {
            for b in a + 1..base + 4 {
                edges.push((a, b));
            }
        }
    }
    edges.push((3, 4));
    UndirectedGraph::new(8, &edges).unwrap()
}

/// Same partition up to renaming of the labels.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = BTreeMap::new();
    let mut back = BTreeMap::new();
    a.iter()
        .zip(b)
        .all(|(x, y)| *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
}

/// Brute-force adjusted Rand index over all item pairs.
pub fn pairwise_ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut in_a, mut in_b) = (0u64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            both += u64::from(sa && sb);
            in_a += u64::from(sa);
            in_b += u64::from(sb);
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let expected = in_a as f64 * in_b as f64 / pairs;
    let max = (in_a + in_b) as f64 / 2.0;
    if max == expected {
        return 1.0;
    }
    (both as f64 - expected) / (max - expected)
}

/// Noise-free CTR that is linear in width, height and three embedding
/// coordinates, with impressions large enough that click rounding moves
/// CTR by at most 5e-10. Every record survives the CTR filter unclamped.
pub fn linear_ctr_spec(seed: u64, num_records: usize, dim: usize) -> SynthSpec {
    let mut spec = SynthSpec::standard(seed, num_records, dim, 4.min(dim));
    spec.ctr_model = CtrModel {
        intercept: 0.05,
        width_weight: 0.2,
        height_weight: 0.3,
        embedding_weights: vec![(0, 0.004), (1, 0.002), (2, 0.001)],
        interactions: Vec::new(),
        noise_sd: 0.0,
    };
    spec.impressions_range = (1_000_000_000, 2_000_000_000);
    spec
}

/// CTR driven by cluster-level embedding weights plus a within-cluster
/// interaction, with Gaussian noise of sd 0.01.
pub fn ensemble_ctr_spec(seed: u64, num_records: usize, dim: usize) -> SynthSpec {
    let mut spec = SynthSpec::standard(seed, num_records, dim, 5);
    spec.ctr_model = CtrModel {
        intercept: 0.08,
        width_weight: 0.0,
        height_weight: 0.0,
        embedding_weights: vec![(0, 0.006), (1, -0.004), (2, 0.003)],
        interactions: vec![(0, 5, 0.05), (1, 6, 0.04)],
        noise_sd: 0.01,
    };
    spec.impressions_range = (5_000, 1_000_000);
    spec
}
