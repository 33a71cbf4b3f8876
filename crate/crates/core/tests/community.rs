mod common;

use adscope_core::catgraph::{detect_communities, modularity, UndirectedGraph};
use adscope_core::SplitMix64;
use common::*;

#[test]
fn partition_enumeration_counts_match_bell_numbers() {
    let bell = [1, 1, 2, 5, 15, 52, 203, 877, 4140];
    for (n, &b) in bell.iter().enumerate() {
        assert_eq!(all_partitions(n).len(), b, "n = {n}");
    }
}

#[test]
fn float_modularity_agrees_with_integer_oracle() {
    let g = two_cliques_with_bridge();
    let m2 = (2 * g.edges().len()) as f64;
    for p in all_partitions(8) {
        let exact = scaled_modularity(&g, &p) as f64 / (m2 * m2);
        assert!((modularity(&g, &p).unwrap() - exact).abs() < 1e-12);
    }
}

#[test]
fn bridged_cliques_reach_the_exhaustive_optimum() {
    let g = two_cliques_with_bridge();
    let (best, argmax) = exhaustive_optimum(&g);
    assert_eq!(argmax.len(), 1);
    assert_eq!(argmax[0], vec![0, 0, 0, 0, 1, 1, 1, 1]);
    for seed in 0..10 {
        let found = detect_communities(&g, seed).unwrap();
        assert_eq!(found.num_communities, 2);
        assert_eq!(found.community_of, argmax[0]);
        assert_eq!(scaled_modularity(&g, &found.community_of), best);
    }
}

#[test]
fn single_edge_stays_together() {
    let g = UndirectedGraph::new(2, &[(0, 1)]).unwrap();
    let (_, argmax) = exhaustive_optimum(&g);
    assert_eq!(argmax, vec![vec![0, 0]]);
    assert_eq!(detect_communities(&g, 0).unwrap().community_of, vec![0, 0]);
}

#[test]
fn two_triangles_score_exactly_half() {
    let g = UndirectedGraph::new(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap();
    let q = modularity(&g, &[0, 0, 0, 1, 1, 1]).unwrap();
    assert!((q - 0.5).abs() < 1e-12);
    let found = detect_communities(&g, 9).unwrap();
    assert_eq!(found.community_of, vec![0, 0, 0, 1, 1, 1]);
}

/// Random graphs of at most 8 vertices: greedy never beats the optimum,
/// stays non-negative, and is near-optimal on these sizes.
#[test]
fn small_random_graphs_against_exhaustive_search() {
    let mut rng = SplitMix64::new(77);
    let mut optimal = 0;
    let trials = 60;
    for _ in 0..trials {
        let n = 2 + rng.index(7);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.below(100) < 40 {
                    edges.push((a, b));
                }
            }
        }
        let g = UndirectedGraph::new(n, &edges).unwrap();
        let (best, _) = exhaustive_optimum(&g);
        let found = detect_communities(&g, rng.next_u64()).unwrap();
        let score = scaled_modularity(&g, &found.community_of);
        assert!(score <= best);
        assert!(found.modularity >= 0.0);
        optimal += usize::from(score == best);
    }
    assert!(
        optimal * 10 >= trials * 8,
        "optimal on {optimal} of {trials}"
    );
}
