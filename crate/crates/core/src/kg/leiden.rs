//! Leiden community detection on weighted undirected graphs.
//!
//! Quality is weighted modularity with a resolution parameter `γ`:
//! `Q = Σ_c [ L_c / m − γ (K_c / 2m)² ]` where `L_c` is the internal edge
//! weight of community `c`, `K_c` its total degree and `m` the total edge
//! weight. Each iteration runs fast local moving, refines every community
//! into well-connected sub-communities, and aggregates the graph on the
//! refined partition. The refined partitions and the final partition form
//! a nested hierarchy, finest first.

use std::collections::{BTreeMap, VecDeque};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{KgError, KnowledgeGraph};

const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    degree: Vec<f64>,
    total: f64,
}

impl WeightedGraph {
    /// Builds a graph from `(a, b, weight)` edges; parallel edges are summed
    /// and `a == b` contributes a self-loop.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        let mut self_loops = vec![0.0; n];
        for &(a, b, w) in edges {
            assert!(a < n && b < n, "edge endpoint out of range");
            if a == b {
                self_loops[a] += w;
            } else {
                *maps[a].entry(b).or_default() += w;
                *maps[b].entry(a).or_default() += w;
            }
        }
        let adj = maps.into_iter().map(|m| m.into_iter().collect()).collect();
        Self::from_parts(adj, self_loops)
    }

    fn from_parts(adj: Vec<Vec<(usize, f64)>>, self_loops: Vec<f64>) -> Self {
        let degree: Vec<f64> = adj
            .iter()
            .zip(&self_loops)
            .map(|(nbrs, s)| nbrs.iter().map(|(_, w)| w).sum::<f64>() + 2.0 * s)
            .collect();
        let total = degree.iter().sum::<f64>() / 2.0;
        Self { adj, self_loops, degree, total }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[v]
    }

    pub fn total_weight(&self) -> f64 {
        self.total
    }

    /// Modularity of `partition` at resolution `gamma`.
    pub fn quality(&self, partition: &[usize], gamma: f64) -> f64 {
        if self.total <= 0.0 {
            return 0.0;
        }
        let n = self.node_count();
        let mut internal = vec![0.0; n.max(1)];
        let mut tot = vec![0.0; n.max(1)];
        for v in 0..n {
            let c = partition[v];
            tot[c] += self.degree[v];
            internal[c] += self.self_loops[v];
            for &(u, w) in &self.adj[v] {
                if u > v && partition[u] == c {
                    internal[c] += w;
                }
            }
        }
        let two_m = 2.0 * self.total;
        internal.iter().zip(&tot).map(|(l, k)| l / self.total - gamma * (k / two_m).powi(2)).sum()
    }

    /// True when every community of `partition` induces a connected subgraph.
    pub fn communities_connected(&self, partition: &[usize]) -> bool {
        let split = split_disconnected(self, partition);
        count_communities(&split) == count_communities(partition)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeidenConfig {
    pub resolution: f64,
    pub seed: u64,
    pub max_levels: usize,
    /// Randomness of the refinement phase.
    pub theta: f64,
    pub max_iterations: usize,
}

impl Default for LeidenConfig {
    fn default() -> Self {
        Self { resolution: 1.0, seed: 42, max_levels: 3, theta: 0.01, max_iterations: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeidenResult {
    /// Node → community per level, finest first; ids are dense and numbered
    /// by first appearance in node order.
    pub levels: Vec<Vec<usize>>,
    /// Quality of the working partition after every local-moving pass.
    pub quality_trace: Vec<f64>,
}

impl LeidenResult {
    pub fn final_partition(&self) -> &[usize] {
        self.levels.last().expect("at least one level")
    }
}

fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn shuffled(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, below(rng, i + 1));
    }
    order
}

fn renumber(partition: &[usize]) -> Vec<usize> {
    let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(partition.len());
    let mut next = 0;
    for &c in partition {
        let id = *ids.entry(c).or_insert_with(|| {
            next += 1;
            next - 1
        });
        out.push(id);
    }
    out
}

fn count_communities(partition: &[usize]) -> usize {
    let mut seen: Vec<usize> = partition.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Fast local moving. Returns true when any node changed community.
fn move_nodes(g: &WeightedGraph, part: &mut [usize], gamma: f64, rng: &mut ChaCha8Rng) -> bool {
    let n = g.node_count();
    let two_m = 2.0 * g.total;
    let mut tot = vec![0.0; n];
    let mut size = vec![0usize; n];
    for v in 0..n {
        tot[part[v]] += g.degree[v];
        size[part[v]] += 1;
    }
    let mut empty: Vec<usize> = (0..n).filter(|&c| size[c] == 0).collect();
    let mut queue: VecDeque<usize> = shuffled(n, rng).into();
    let mut queued = vec![true; n];
    let mut weights = vec![0.0; n];
    let mut marked = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut moved = false;

    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        let current = part[v];
        let k = g.degree[v];
        for &(u, w) in &g.adj[v] {
            let c = part[u];
            if !marked[c] {
                marked[c] = true;
                touched.push(c);
            }
            weights[c] += w;
        }
        tot[current] -= k;
        size[current] -= 1;

        let gain = |c: usize, weights: &[f64], tot: &[f64]| weights[c] - gamma * k * tot[c] / two_m;
        let mut best = current;
        let mut best_gain = gain(current, &weights, &tot);
        for &c in &touched {
            let g_c = gain(c, &weights, &tot);
            if g_c > best_gain + GAIN_EPS {
                best = c;
                best_gain = g_c;
            }
        }
        if best_gain < -GAIN_EPS && size[current] > 0 {
            if let Some(c) = empty.pop() {
                best = c;
            }
        }
        if size[current] == 0 && best != current {
            empty.push(current);
        }
        tot[best] += k;
        size[best] += 1;
        part[v] = best;

        if best != current {
            moved = true;
            for &(u, _) in &g.adj[v] {
                if !queued[u] && part[u] != best {
                    queued[u] = true;
                    queue.push_back(u);
                }
            }
        }
        for c in touched.drain(..) {
            weights[c] = 0.0;
            marked[c] = false;
        }
    }
    moved
}

/// Refines each community of `part` into well-connected sub-communities.
fn refine(g: &WeightedGraph, part: &[usize], gamma: f64, theta: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = g.node_count();
    let two_m = 2.0 * g.total;
    let mut comm_tot = vec![0.0; n];
    for v in 0..n {
        comm_tot[part[v]] += g.degree[v];
    }
    let mut refined: Vec<usize> = (0..n).collect();
    let mut r_tot = g.degree.clone();
    let mut r_size = vec![1usize; n];
    // Weight from each refined community to the rest of its parent community.
    let mut r_ext: Vec<f64> = (0..n)
        .map(|v| g.adj[v].iter().filter(|(u, _)| part[*u] == part[v]).map(|(_, w)| w).sum())
        .collect();
    let mut weights = vec![0.0; n];
    let mut marked = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();

    for v in shuffled(n, rng) {
        let own = refined[v];
        if r_size[own] > 1 {
            continue;
        }
        let c = part[v];
        let k = g.degree[v];
        if r_ext[own] < gamma * k * (comm_tot[c] - k) / two_m {
            continue;
        }
        for &(u, w) in &g.adj[v] {
            if part[u] != c {
                continue;
            }
            let r = refined[u];
            if !marked[r] {
                marked[r] = true;
                touched.push(r);
            }
            weights[r] += w;
        }
        let mut candidates: Vec<(usize, f64)> = vec![(own, 0.0)];
        for &r in &touched {
            if r == own || r_ext[r] < gamma * r_tot[r] * (comm_tot[c] - r_tot[r]) / two_m {
                continue;
            }
            let gain = weights[r] - gamma * k * r_tot[r] / two_m;
            if gain >= 0.0 {
                candidates.push((r, gain));
            }
        }
        let max_gain = candidates.iter().map(|(_, g)| *g).fold(f64::NEG_INFINITY, f64::max);
        let probs: Vec<f64> = candidates.iter().map(|(_, g)| ((g - max_gain) / theta).exp()).collect();
        let total: f64 = probs.iter().sum();
        let mut draw = unit(rng) * total;
        let mut chosen = candidates[candidates.len() - 1].0;
        for (i, p) in probs.iter().enumerate() {
            if draw < *p {
                chosen = candidates[i].0;
                break;
            }
            draw -= p;
        }
        if chosen != own {
            r_ext[chosen] += r_ext[own] - 2.0 * weights[chosen];
            r_tot[chosen] += k;
            r_size[chosen] += 1;
            r_size[own] = 0;
            r_tot[own] = 0.0;
            r_ext[own] = 0.0;
            refined[v] = chosen;
        }
        for r in touched.drain(..) {
            weights[r] = 0.0;
            marked[r] = false;
        }
    }
    renumber(&refined)
}

/// Collapses each community of `partition` (dense ids) into one node.
fn aggregate(g: &WeightedGraph, partition: &[usize]) -> WeightedGraph {
    let count = count_communities(partition);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (v, &c) in partition.iter().enumerate() {
        members[c].push(v);
    }
    let mut adj = Vec::with_capacity(count);
    let mut self_loops = vec![0.0; count];
    let mut weights = vec![0.0; count];
    let mut marked = vec![false; count];
    let mut touched: Vec<usize> = Vec::new();
    for (c, nodes) in members.iter().enumerate() {
        let mut internal = 0.0;
        for &v in nodes {
            self_loops[c] += g.self_loops[v];
            for &(u, w) in &g.adj[v] {
                let d = partition[u];
                if d == c {
                    internal += w;
                } else {
                    if !marked[d] {
                        marked[d] = true;
                        touched.push(d);
                    }
                    weights[d] += w;
                }
            }
        }
        self_loops[c] += internal / 2.0;
        touched.sort_unstable();
        adj.push(touched.iter().map(|&d| (d, weights[d])).collect::<Vec<_>>());
        for d in touched.drain(..) {
            weights[d] = 0.0;
            marked[d] = false;
        }
    }
    WeightedGraph::from_parts(adj, self_loops)
}

/// Splits every community into its connected components.
fn split_disconnected(g: &WeightedGraph, partition: &[usize]) -> Vec<usize> {
    let n = g.node_count();
    let mut component = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        component[start] = next;
        stack.push(start);
        while let Some(v) = stack.pop() {
            for &(u, _) in &g.adj[v] {
                if component[u] == usize::MAX && partition[u] == partition[start] {
                    component[u] = next;
                    stack.push(u);
                }
            }
        }
        next += 1;
    }
    component
}

/// Runs Leiden until no aggregation progress is possible.
pub fn leiden(graph: &WeightedGraph, config: &LeidenConfig) -> LeidenResult {
    let n = graph.node_count();
    let gamma = config.resolution;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut g = graph.clone();
    let mut membership: Vec<usize> = (0..n).collect();
    let mut part: Vec<usize> = (0..n).collect();
    let mut levels: Vec<Vec<usize>> = Vec::new();
    let mut trace = vec![graph.quality(&(0..n).collect::<Vec<_>>(), gamma)];

    for _ in 0..config.max_iterations {
        move_nodes(&g, &mut part, gamma, &mut rng);
        let original: Vec<usize> = membership.iter().map(|&a| part[a]).collect();
        let q = graph.quality(&original, gamma);
        let prev = *trace.last().expect("trace seeded");
        assert!(q >= prev - 1e-9 * prev.abs().max(1.0), "quality decreased: {prev} -> {q}");
        trace.push(q);
        if count_communities(&part) == g.node_count() {
            break;
        }
        let refined = refine(&g, &part, gamma, config.theta, &mut rng);
        let refined_count = count_communities(&refined);
        if refined_count == g.node_count() {
            break;
        }
        levels.push(renumber(&membership.iter().map(|&a| refined[a]).collect::<Vec<_>>()));
        let mut next_part = vec![0; refined_count];
        for (v, &r) in refined.iter().enumerate() {
            next_part[r] = part[v];
        }
        g = aggregate(&g, &refined);
        for a in membership.iter_mut() {
            *a = refined[*a];
        }
        part = renumber(&next_part);
    }

    let final_partition = renumber(&membership.iter().map(|&a| part[a]).collect::<Vec<_>>());
    let final_partition = renumber(&split_disconnected(graph, &final_partition));
    let q = graph.quality(&final_partition, gamma);
    if q != *trace.last().expect("trace seeded") {
        trace.push(q);
    }
    levels.push(final_partition);
    levels.dedup();
    if levels.len() > config.max_levels.max(1) {
        levels.drain(..levels.len() - config.max_levels.max(1));
    }
    LeidenResult { levels, quality_trace: trace }
}

/// Community hierarchy over entity ids with per-community summaries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Hierarchy {
    /// Entity id → community id, one map per level, finest first.
    pub levels: Vec<BTreeMap<String, usize>>,
    pub summaries: BTreeMap<(usize, usize), String>,
    pub quality_trace: Vec<f64>,
}

impl Hierarchy {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn community_of(&self, level: usize, entity: &str) -> Option<usize> {
        self.levels.get(level)?.get(entity).copied()
    }

    pub fn community_count(&self, level: usize) -> usize {
        self.levels.get(level).map_or(0, |m| m.values().max().map_or(0, |c| c + 1))
    }

    /// Members of a community in id order.
    pub fn members(&self, level: usize, community: usize) -> Vec<String> {
        self.levels
            .get(level)
            .map(|m| m.iter().filter(|(_, &c)| c == community).map(|(id, _)| id.clone()).collect())
            .unwrap_or_default()
    }

    pub fn summary(&self, level: usize, community: usize) -> Option<&str> {
        self.summaries.get(&(level, community)).map(String::as_str)
    }
}

/// Leiden over the entity graph. Entities are ordered by id.
pub fn leiden_partition(graph: &KnowledgeGraph, config: &LeidenConfig) -> Result<Hierarchy, KgError> {
    if graph.entities.is_empty() {
        return Err(KgError::EmptyGraph);
    }
    let (ids, weighted) = graph.undirected();
    let result = leiden(&weighted, config);
    let levels = result
        .levels
        .iter()
        .map(|level| ids.iter().cloned().zip(level.iter().copied()).collect())
        .collect();
    Ok(Hierarchy { levels, summaries: BTreeMap::new(), quality_trace: result.quality_trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clique_edges(nodes: std::ops::Range<usize>) -> Vec<(usize, usize, f64)> {
        let nodes: Vec<usize> = nodes.collect();
        let mut edges = Vec::new();
        for (i, &a) in nodes.iter().enumerate() {
            for &b in &nodes[i + 1..] {
                edges.push((a, b, 1.0));
            }
        }
        edges
    }

    #[test]
    fn single_node_is_one_community() {
        let g = WeightedGraph::from_edges(1, &[]);
        let r = leiden(&g, &LeidenConfig::default());
        assert_eq!(r.levels, vec![vec![0]]);
    }

    #[test]
    fn complete_graph_is_one_community() {
        let g = WeightedGraph::from_edges(5, &clique_edges(0..5));
        let r = leiden(&g, &LeidenConfig::default());
        assert_eq!(r.final_partition(), &[0, 0, 0, 0, 0]);
    }

    #[test]
    fn two_cliques_split_at_the_bridge() {
        let mut edges = clique_edges(0..5);
        edges.extend(clique_edges(5..10));
        edges.push((4, 5, 1.0));
        let g = WeightedGraph::from_edges(10, &edges);
        let r = leiden(&g, &LeidenConfig::default());
        assert_eq!(r.final_partition(), &[0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        assert!(r.quality_trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn aggregation_preserves_quality() {
        let mut edges = clique_edges(0..4);
        edges.push((3, 4, 2.0));
        edges.push((4, 4, 1.0));
        let g = WeightedGraph::from_edges(5, &edges);
        let part = vec![0, 0, 1, 1, 2];
        let agg = aggregate(&g, &part);
        assert!((agg.total_weight() - g.total_weight()).abs() < 1e-12);
        let q_orig = g.quality(&part, 1.0);
        let q_agg = agg.quality(&[0, 1, 2], 1.0);
        assert!((q_orig - q_agg).abs() < 1e-12);
    }

    #[test]
    fn disconnected_communities_are_split() {
        let g = WeightedGraph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        assert!(!g.communities_connected(&[0, 0, 0, 0]));
        assert_eq!(renumber(&split_disconnected(&g, &[0, 0, 0, 0])), vec![0, 0, 1, 1]);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut edges = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..300 {
            edges.push((below(&mut rng, 100), below(&mut rng, 100), 1.0));
        }
        let g = WeightedGraph::from_edges(100, &edges);
        let a = leiden(&g, &LeidenConfig::default());
        let b = leiden(&g, &LeidenConfig::default());
        assert_eq!(a, b);
    }
}
