//! Category/object bipartite graph, modularity and community detection.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objstats::ObjectFrequencyTable;
use crate::rng::{domain, SplitMix64};

pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.01;

/// Upper bound on refinement sweeps; each sweep strictly raises modularity.
const MAX_REFINEMENT_SWEEPS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("edge threshold {0} not in (0, 1)")]
    ThresholdOutOfRange(f64),
    #[error("partition covers {found} vertices, graph has {expected}")]
    PartitionSize { expected: usize, found: usize },
    #[error("graph has no vertices")]
    EmptyGraph,
    #[error("edge ({0}, {1}) is a self loop or references a missing vertex")]
    InvalidEdge(usize, usize),
    #[error("edge references unknown endpoint {0}")]
    UnknownEndpoint(String),
    #[error("edge weight {0} is not a fraction in [0, 1]")]
    InvalidWeight(f64),
}

/// Simple undirected graph on vertices `0..num_vertices`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndirectedGraph {
    num_vertices: usize,
    edges: Vec<(usize, usize)>,
}

impl UndirectedGraph {
    /// Normalizes edges to `(min, max)` and drops duplicates.
    pub fn new(num_vertices: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b || a >= num_vertices || b >= num_vertices {
                return Err(GraphError::InvalidEdge(a, b));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        normalized.dedup();
        Ok(Self {
            num_vertices,
            edges: normalized,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_vertices];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_vertices];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Connected-component index of every vertex, numbered by first vertex.
    pub fn components(&self) -> Vec<usize> {
        let adj = self.adjacency();
        let mut comp = vec![usize::MAX; self.num_vertices];
        let mut next = 0;
        for start in 0..self.num_vertices {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = next;
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &w in &adj[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = next;
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    /// Proper 2-coloring, or `None` if the graph has an odd cycle.
    pub fn two_coloring(&self) -> Option<Vec<u8>> {
        let adj = self.adjacency();
        let mut color = vec![u8::MAX; self.num_vertices];
        for start in 0..self.num_vertices {
            if color[start] != u8::MAX {
                continue;
            }
            color[start] = 0;
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &w in &adj[v] {
                    if color[w] == u8::MAX {
                        color[w] = 1 - color[v];
                        stack.push(w);
                    } else if color[w] == color[v] {
                        return None;
                    }
                }
            }
        }
        Some(color)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityPartition {
    pub community_of: Vec<usize>,
    pub num_communities: usize,
    pub modularity: f64,
}

impl CommunityPartition {
    /// Members of each community, in vertex order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_communities];
        for (v, &c) in self.community_of.iter().enumerate() {
            out[c].push(v);
        }
        out
    }
}

/// Relabels communities `0..c` in order of their lowest vertex.
pub fn canonical_labels(community_of: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    let labels = community_of
        .iter()
        .map(|c| {
            let next = map.len();
            *map.entry(*c).or_insert(next)
        })
        .collect();
    (labels, map.len())
}

/// Newman-Girvan modularity of an unweighted graph:
/// `sum_c [ L_c / m - (D_c / 2m)^2 ]`. An edgeless graph scores 0.
pub fn modularity(graph: &UndirectedGraph, community_of: &[usize]) -> Result<f64, GraphError> {
    if community_of.len() != graph.num_vertices() {
        return Err(GraphError::PartitionSize {
            expected: graph.num_vertices(),
            found: community_of.len(),
        });
    }
    let m = graph.edges().len();
    if m == 0 {
        return Ok(0.0);
    }
    let mut internal: BTreeMap<usize, usize> = BTreeMap::new();
    let mut degree: BTreeMap<usize, usize> = BTreeMap::new();
    for &(a, b) in graph.edges() {
        let (ca, cb) = (community_of[a], community_of[b]);
        if ca == cb {
            *internal.entry(ca).or_insert(0) += 1;
        }
        *degree.entry(ca).or_insert(0) += 1;
        *degree.entry(cb).or_insert(0) += 1;
    }
    let m = m as f64;
    let covered: f64 = internal.values().map(|&l| l as f64 / m).sum();
    let expected: f64 = degree
        .values()
        .map(|&d| {
            let a = d as f64 / (2.0 * m);
            a * a
        })
        .sum();
    Ok(covered - expected)
}

/// Greedy agglomerative modularity maximization followed by single-vertex
/// refinement sweeps.
///
/// Merges are chosen by the exact integer gain `2m * e_ij - D_i * D_j`,
/// ties going to the lexicographically smallest community pair. The seed
/// only fixes the vertex visiting order of the refinement sweeps.
pub fn detect_communities(
    graph: &UndirectedGraph,
    seed: u64,
) -> Result<CommunityPartition, GraphError> {
    let n = graph.num_vertices();
    if n == 0 {
        return Err(GraphError::EmptyGraph);
    }
    let m = graph.edges().len();
    if m == 0 {
        return finish(graph, (0..n).collect());
    }
    let mut community = agglomerate(graph);
    refine(graph, &mut community, seed);

    let candidate = finish(graph, community)?;
    if candidate.modularity >= 0.0 {
        return Ok(candidate);
    }
    // Components always score >= 0.
    finish(graph, graph.components())
}

fn finish(
    graph: &UndirectedGraph,
    community: Vec<usize>,
) -> Result<CommunityPartition, GraphError> {
    let (community_of, num_communities) = canonical_labels(&community);
    let q = modularity(graph, &community_of)?;
    Ok(CommunityPartition {
        community_of,
        num_communities,
        modularity: q,
    })
}

fn agglomerate(graph: &UndirectedGraph) -> Vec<usize> {
    let n = graph.num_vertices();
    let two_m = 2 * graph.edges().len() as i128;
    let mut degree: Vec<i128> = graph.degrees().into_iter().map(|d| d as i128).collect();
    let mut links: Vec<BTreeMap<usize, i128>> = vec![BTreeMap::new(); n];
    for &(a, b) in graph.edges() {
        *links[a].entry(b).or_insert(0) += 1;
        *links[b].entry(a).or_insert(0) += 1;
    }
    let mut alive = vec![true; n];
    let mut parent: Vec<usize> = (0..n).collect();

    loop {
        let mut best: Option<(i128, usize, usize)> = None;
        for c in (0..n).filter(|&c| alive[c]) {
            for (&d, &e) in links[c].range(c + 1..) {
                let gain = two_m * e - degree[c] * degree[d];
                if gain > 0 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, c, d));
                }
            }
        }
        let Some((_, keep, gone)) = best else { break };
        let moved = core::mem::take(&mut links[gone]);
        for (other, e) in moved {
            links[other].remove(&gone);
            if other != keep {
                *links[keep].entry(other).or_insert(0) += e;
                *links[other].entry(keep).or_insert(0) += e;
            }
        }
        degree[keep] += degree[gone];
        alive[gone] = false;
        parent[gone] = keep;
    }

    (0..n)
        .map(|v| {
            let mut c = v;
            while parent[c] != c {
                c = parent[c];
            }
            c
        })
        .collect()
}

fn refine(graph: &UndirectedGraph, community: &mut [usize], seed: u64) {
    let n = graph.num_vertices();
    let two_m = 2 * graph.edges().len() as i128;
    let adj = graph.adjacency();
    let degree: Vec<i128> = adj.iter().map(|a| a.len() as i128).collect();
    let mut comm_degree = vec![0i128; n];
    for v in 0..n {
        comm_degree[community[v]] += degree[v];
    }

    let mut order: Vec<usize> = (0..n).collect();
    for sweep in 0..MAX_REFINEMENT_SWEEPS {
        let mut rng = SplitMix64::substream(seed, &[domain::COMMUNITY, sweep as u64]);
        rng.shuffle(&mut order);
        let mut moved = false;
        for &v in &order {
            if degree[v] == 0 {
                continue;
            }
            let home = community[v];
            let mut links: BTreeMap<usize, i128> = BTreeMap::new();
            for &w in &adj[v] {
                *links.entry(community[w]).or_insert(0) += 1;
            }
            let to_home = links.get(&home).copied().unwrap_or(0);
            let home_rest = comm_degree[home] - degree[v];
            let mut best: Option<(i128, usize)> = None;
            for (&target, &to_target) in &links {
                if target == home {
                    continue;
                }
                let gain =
                    two_m * (to_target - to_home) - degree[v] * (comm_degree[target] - home_rest);
                if gain > 0 && best.is_none_or(|(g, _)| gain > g) {
                    best = Some((gain, target));
                }
            }
            if let Some((_, target)) = best {
                comm_degree[home] -= degree[v];
                comm_degree[target] += degree[v];
                community[v] = target;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectVertex {
    pub class_id: u32,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedEdge {
    /// Index into `categories`.
    pub category: usize,
    /// Index into `objects`.
    pub object: usize,
    /// Fraction of the category's ads containing the object.
    pub weight: f64,
}

/// Bipartite category/object graph. Vertex ids put the categories first
/// (`0..#categories`) and the objects after them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryObjectGraph {
    categories: Vec<String>,
    objects: Vec<ObjectVertex>,
    edges: Vec<WeightedEdge>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexKind {
    Category,
    Object,
}

impl CategoryObjectGraph {
    /// Assembles a graph from explicit parts; categories and objects are
    /// sorted (by name, by class id) and edges reindexed accordingly.
    pub fn from_parts(
        categories: Vec<String>,
        objects: Vec<ObjectVertex>,
        edges: &[(String, u32, f64)],
    ) -> Result<Self, GraphError> {
        let categories: Vec<String> = categories
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut objects = objects;
        objects.sort_by_key(|o| o.class_id);
        objects.dedup_by_key(|o| o.class_id);
        let cat_index: BTreeMap<&str, usize> = categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let obj_index: BTreeMap<u32, usize> = objects
            .iter()
            .enumerate()
            .map(|(i, o)| (o.class_id, i))
            .collect();
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(edges.len());
        for (cat, class_id, weight) in edges {
            let (Some(&c), Some(&o)) = (cat_index.get(cat.as_str()), obj_index.get(class_id))
            else {
                return Err(GraphError::UnknownEndpoint(alloc::format!(
                    "{cat} -> {class_id}"
                )));
            };
            if !(weight.is_finite() && (0.0..=1.0).contains(weight)) {
                return Err(GraphError::InvalidWeight(*weight));
            }
            if seen.insert((c, o)) {
                out.push(WeightedEdge {
                    category: c,
                    object: o,
                    weight: *weight,
                });
            }
        }
        out.sort_by_key(|e| (e.category, e.object));
        Ok(Self {
            categories,
            objects,
            edges: out,
        })
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn objects(&self) -> &[ObjectVertex] {
        &self.objects
    }

    pub fn edges(&self) -> &[WeightedEdge] {
        &self.edges
    }

    pub fn num_vertices(&self) -> usize {
        self.categories.len() + self.objects.len()
    }

    pub fn category_vertex(&self, category: usize) -> usize {
        category
    }

    pub fn object_vertex(&self, object: usize) -> usize {
        self.categories.len() + object
    }

    pub fn vertex_kind(&self, vertex: usize) -> VertexKind {
        if vertex < self.categories.len() {
            VertexKind::Category
        } else {
            VertexKind::Object
        }
    }

    /// Unweighted skeleton used for modularity and communities.
    pub fn skeleton(&self) -> UndirectedGraph {
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|e| {
                (
                    self.category_vertex(e.category),
                    self.object_vertex(e.object),
                )
            })
            .collect();
        UndirectedGraph::new(self.num_vertices(), &edges)
            .expect("category/object edges reference distinct valid vertices")
    }
}

/// Links each category to every object present in at least `threshold` of
/// its ads. Objects without any edge are left out of the vertex set.
pub fn build_graph(
    table: &ObjectFrequencyTable,
    threshold: f64,
) -> Result<CategoryObjectGraph, GraphError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(GraphError::ThresholdOutOfRange(threshold));
    }
    let categories: Vec<String> = table.category_sizes.keys().cloned().collect();
    let mut edges = Vec::new();
    let mut linked = BTreeSet::new();
    for cat in &categories {
        for (class_id, weight) in table.category_fractions(cat) {
            if weight >= threshold {
                edges.push((cat.clone(), class_id, weight));
                linked.insert(class_id);
            }
        }
    }
    let objects = linked
        .into_iter()
        .map(|class_id| ObjectVertex {
            class_id,
            name: table
                .name(class_id)
                .map(String::from)
                .unwrap_or_else(|| crate::synth::class_name(class_id)),
        })
        .collect();
    CategoryObjectGraph::from_parts(categories, objects, &edges)
}
