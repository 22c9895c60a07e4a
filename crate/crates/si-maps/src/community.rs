//! Community structure over instance graphs: weighted modularity, the
//! Louvain two-phase loop, the K% over-segmentation merge, and deterministic
//! instance numbering.
//!
//! Everything here is deliberately free of randomness. Node scan order,
//! tie-breaking, and merge order are all fixed, so identical graphs always
//! produce identical partitions.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::instance_graph::InstanceGraph;

#[derive(Debug, Error, PartialEq)]
pub enum CommunityError {
    #[error("graph has no edge weight; modularity is undefined")]
    EmptyGraph,
}

/// Undirected weighted graph in adjacency form. Serves both the original
/// cell-level graphs and the aggregated community-level graphs, which is why
/// self-loops are allowed (they carry intra-community weight).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    /// Per node: (neighbor, weight), ascending by neighbor, no self entries.
    adj: Vec<Vec<(u32, f64)>>,
    /// Self-loop weight per node, counted once.
    self_loop: Vec<f64>,
    /// Weighted degree; a self-loop of weight w contributes 2w.
    degree: Vec<f64>,
    /// Total edge weight, each undirected edge and each self-loop once.
    m: f64,
}

impl WeightedGraph {
    /// Build from an edge list. Endpoints a == b become self-loops;
    /// duplicate pairs accumulate.
    pub fn new(n: usize, edges: &[(u32, u32, f64)]) -> Self {
        let mut pair_weight: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        let mut self_loop = vec![0.0; n];
        for &(a, b, w) in edges {
            assert!(w > 0.0, "edge weights must be positive");
            assert!((a as usize) < n && (b as usize) < n, "edge endpoint out of range");
            if a == b {
                self_loop[a as usize] += w;
            } else {
                *pair_weight.entry((a.min(b), a.max(b))).or_insert(0.0) += w;
            }
        }
        let mut adj = vec![Vec::new(); n];
        let mut degree: Vec<f64> = self_loop.iter().map(|w| 2.0 * w).collect();
        let mut m: f64 = self_loop.iter().sum();
        for (&(a, b), &w) in &pair_weight {
            adj[a as usize].push((b, w));
            adj[b as usize].push((a, w));
            degree[a as usize] += w;
            degree[b as usize] += w;
            m += w;
        }
        for list in &mut adj {
            list.sort_unstable_by_key(|&(n, _)| n);
        }
        Self { adj, self_loop, degree, m }
    }

    pub fn from_instance_graph(g: &InstanceGraph) -> Self {
        Self::new(g.node_count(), &g.edges)
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.m
    }

    pub fn degree(&self, node: usize) -> f64 {
        self.degree[node]
    }

    pub fn neighbors(&self, node: usize) -> &[(u32, f64)] {
        &self.adj[node]
    }

    pub fn self_loop(&self, node: usize) -> f64 {
        self.self_loop[node]
    }
}

/// Node to community assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    assignment: Vec<u32>,
}

impl Partition {
    pub fn singletons(n: usize) -> Self {
        Self { assignment: (0..n as u32).collect() }
    }

    pub fn from_assignment(assignment: Vec<u32>) -> Self {
        Self { assignment }
    }

    pub fn community_of(&self, node: usize) -> u32 {
        self.assignment[node]
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.assignment
    }

    /// Distinct community count.
    pub fn community_count(&self) -> usize {
        let mut ids: Vec<u32> = self.assignment.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Relabel communities to 0..k, ordered by ascending original id.
    pub fn compact(&self) -> (Partition, usize) {
        let mut ids: Vec<u32> = self.assignment.clone();
        ids.sort_unstable();
        ids.dedup();
        let rank: BTreeMap<u32, u32> =
            ids.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect();
        let assignment = self.assignment.iter().map(|c| rank[c]).collect();
        (Partition { assignment }, ids.len())
    }

    /// Members per community, keyed by community id.
    pub fn members(&self) -> BTreeMap<u32, Vec<u32>> {
        let mut out: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for (node, &c) in self.assignment.iter().enumerate() {
            out.entry(c).or_default().push(node as u32);
        }
        out
    }
}

/// Newman-Girvan weighted modularity at resolution 1:
/// Q = sum over communities of (e_c/m - (d_c/2m)^2), where e_c is the
/// intra-community weight (self-loops once) and d_c the summed degrees.
pub fn modularity(g: &WeightedGraph, p: &Partition) -> Result<f64, CommunityError> {
    assert_eq!(p.len(), g.node_count(), "partition does not cover the graph");
    if g.total_weight() <= 0.0 {
        return Err(CommunityError::EmptyGraph);
    }
    let k = p.assignment.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    let mut intra = vec![0.0; k];
    let mut deg = vec![0.0; k];
    for node in 0..g.node_count() {
        let c = p.community_of(node) as usize;
        deg[c] += g.degree(node);
        intra[c] += g.self_loop(node);
        for &(nb, w) in g.neighbors(node) {
            // Each intra pair is visited from both ends; count it half.
            if p.community_of(nb as usize) == p.community_of(node) {
                intra[c] += 0.5 * w;
            }
        }
    }
    let m = g.total_weight();
    let mut q = 0.0;
    for c in 0..k {
        q += intra[c] / m - (deg[c] / (2.0 * m)).powi(2);
    }
    Ok(q)
}

/// One full ascending-order scan of all nodes. Each node moves to the
/// neighboring community with the largest strictly positive modularity gain
/// (ties to the lowest community id). Returns how many nodes moved.
pub fn local_move_pass(g: &WeightedGraph, p: &mut Partition) -> Result<usize, CommunityError> {
    assert_eq!(p.len(), g.node_count(), "partition does not cover the graph");
    if g.total_weight() <= 0.0 {
        return Err(CommunityError::EmptyGraph);
    }
    let m = g.total_weight();
    let n = g.node_count();
    // Community degree sums, indexed by community id.
    let top = p.assignment.iter().copied().max().unwrap_or(0) as usize + 1;
    let mut comm_degree = vec![0.0; top];
    for node in 0..n {
        comm_degree[p.community_of(node) as usize] += g.degree(node);
    }
    // Scratch: weight from the current node into each community.
    let mut weight_to = vec![0.0; top];
    let mut touched: Vec<u32> = Vec::new();

    let mut moves = 0;
    for node in 0..n {
        let c_old = p.community_of(node);
        let k_i = g.degree(node);

        touched.clear();
        for &(nb, w) in g.neighbors(node) {
            let c = p.community_of(nb as usize);
            if weight_to[c as usize] == 0.0 {
                touched.push(c);
            }
            weight_to[c as usize] += w;
        }
        touched.sort_unstable();

        let d_old_rest = comm_degree[c_old as usize] - k_i;
        let removal_cost = -weight_to[c_old as usize] / m + k_i * d_old_rest / (2.0 * m * m);

        let mut best_comm = c_old;
        let mut best_gain = 0.0;
        for &c in &touched {
            if c == c_old {
                continue;
            }
            let gain = removal_cost + weight_to[c as usize] / m
                - k_i * comm_degree[c as usize] / (2.0 * m * m);
            // Strict improvement; ascending scan keeps the lowest id on ties.
            if gain > best_gain {
                best_gain = gain;
                best_comm = c;
            }
        }
        for &c in &touched {
            weight_to[c as usize] = 0.0;
        }

        if best_comm != c_old {
            comm_degree[c_old as usize] -= k_i;
            comm_degree[best_comm as usize] += k_i;
            p.assignment[node] = best_comm;
            moves += 1;
        }
    }
    Ok(moves)
}

/// Contract each community to one node. Community ids are compacted in
/// ascending order to form the new node ids; intra-community weight becomes
/// a self-loop; total weight is preserved.
pub fn aggregate(g: &WeightedGraph, p: &Partition) -> WeightedGraph {
    let (pc, k) = p.compact();
    aggregate_compacted(g, &pc, k)
}

fn aggregate_compacted(g: &WeightedGraph, pc: &Partition, k: usize) -> WeightedGraph {
    let mut edges: Vec<(u32, u32, f64)> = Vec::new();
    for node in 0..g.node_count() {
        let ca = pc.community_of(node);
        if g.self_loop(node) > 0.0 {
            edges.push((ca, ca, g.self_loop(node)));
        }
        for &(nb, w) in g.neighbors(node) {
            // Visit each undirected edge from its lower endpoint only.
            if (nb as usize) > node {
                edges.push((ca.min(pc.community_of(nb as usize)), ca.max(pc.community_of(nb as usize)), w));
            }
        }
    }
    WeightedGraph::new(k, &edges)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LouvainConfig {
    /// Outer iterations stop once an iteration gains less than this.
    pub min_gain: f64,
    pub max_outer_iterations: usize,
}

impl Default for LouvainConfig {
    fn default() -> Self {
        Self { min_gain: 1e-9, max_outer_iterations: 64 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LouvainResult {
    /// Assignment of the original nodes.
    pub partition: Partition,
    /// Modularity after every local-move pass, across all levels. Aggregation
    /// preserves modularity, so this sequence must be non-decreasing.
    pub trace: Vec<f64>,
}

/// The two-phase loop: scan to a local fixpoint, contract communities to
/// nodes, repeat until an outer iteration stops improving. Edgeless graphs
/// yield all-singletons.
pub fn louvain(g: &WeightedGraph, cfg: &LouvainConfig) -> LouvainResult {
    let n = g.node_count();
    if g.total_weight() <= 0.0 || n == 0 {
        return LouvainResult { partition: Partition::singletons(n), trace: Vec::new() };
    }

    let mut flat: Vec<u32> = (0..n as u32).collect();
    let mut current = g.clone();
    let mut trace = vec![modularity(&current, &Partition::singletons(current.node_count()))
        .expect("m > 0 checked above")];

    for _ in 0..cfg.max_outer_iterations {
        let q_before = *trace.last().unwrap();
        let mut p = Partition::singletons(current.node_count());
        let mut moved_total = 0;
        loop {
            let moved = local_move_pass(&current, &mut p).expect("m > 0 is level-invariant");
            if moved == 0 {
                break;
            }
            moved_total += moved;
            let q = modularity(&current, &p).expect("m > 0");
            debug_assert!(
                q >= trace.last().copied().unwrap_or(f64::NEG_INFINITY) - 1e-12,
                "modularity decreased within a level"
            );
            trace.push(q);
        }
        if moved_total == 0 {
            break;
        }
        let (pc, k) = p.compact();
        for c in flat.iter_mut() {
            *c = pc.community_of(*c as usize);
        }
        current = aggregate_compacted(&current, &pc, k);
        let q_after = *trace.last().unwrap();
        if q_after - q_before < cfg.min_gain {
            break;
        }
    }
    LouvainResult { partition: Partition::from_assignment(flat), trace }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeConfig {
    /// The K in "merge when more than K% of one community's members touch
    /// the other".
    pub k_percent: f64,
    /// Communities below this cell count become semantic-only residue (t=0).
    pub min_instance_cells: usize,
}

impl MergeConfig {
    pub fn new(k_percent: f64, min_instance_cells: usize) -> Self {
        assert!((0.0..=100.0).contains(&k_percent), "K is a percentage");
        Self { k_percent, min_instance_cells }
    }
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self { k_percent: 5.0, min_instance_cells: 3 }
    }
}

/// Fraction of `from`'s members that have at least one graph edge into `to`.
fn boundary_fraction(
    g: &WeightedGraph,
    p: &Partition,
    from: &[u32],
    to: u32,
) -> f64 {
    let touching = from
        .iter()
        .filter(|&&v| g.neighbors(v as usize).iter().any(|&(nb, _)| p.community_of(nb as usize) == to))
        .count();
    touching as f64 / from.len() as f64
}

/// Merge communities that Louvain left over-segmented: C1 and C2 join when
/// more than K% of either one's members have edges into the other. Adjacent
/// pairs are examined smallest-community first (then by id pair); after
/// every merge the scan restarts, until a full scan makes no merge.
pub fn merge_oversegmented(p: &Partition, g: &WeightedGraph, cfg: &MergeConfig) -> Partition {
    let mut p = p.clone();
    let threshold = cfg.k_percent / 100.0;
    loop {
        let members = p.members();
        // Community pairs connected by at least one edge.
        let mut pairs: Vec<(usize, u32, u32)> = Vec::new();
        let mut seen: std::collections::BTreeSet<(u32, u32)> = std::collections::BTreeSet::new();
        for node in 0..g.node_count() {
            let ca = p.community_of(node);
            for &(nb, _) in g.neighbors(node) {
                let cb = p.community_of(nb as usize);
                if ca != cb {
                    let key = (ca.min(cb), ca.max(cb));
                    if seen.insert(key) {
                        let size = members[&key.0].len().min(members[&key.1].len());
                        pairs.push((size, key.0, key.1));
                    }
                }
            }
        }
        pairs.sort_unstable();

        let mut merged = false;
        for (_, a, b) in pairs {
            let fa = boundary_fraction(g, &p, &members[&a], b);
            let fb = boundary_fraction(g, &p, &members[&b], a);
            if fa > threshold || fb > threshold {
                // Keep the lower id.
                for node in 0..p.len() {
                    if p.assignment[node] == b {
                        p.assignment[node] = a;
                    }
                }
                merged = true;
                break;
            }
        }
        if !merged {
            return p;
        }
    }
}

/// Number the surviving communities of one class: t = 1.. by cell count
/// descending, ties to the community containing the smallest row-major cell
/// index. Communities below the size floor get t = 0.
///
/// `cells[i]` is the row-major cell index of node i; the result is t per
/// node, aligned with `cells`.
pub fn assign_instance_ids(cells: &[u32], p: &Partition, cfg: &MergeConfig) -> Vec<u16> {
    assert_eq!(cells.len(), p.len(), "one cell per node");
    // (size desc, min cell asc) over communities meeting the floor.
    let mut ranked: Vec<(usize, u32, u32)> = p
        .members()
        .into_iter()
        .filter(|(_, nodes)| nodes.len() >= cfg.min_instance_cells)
        .map(|(c, nodes)| {
            let min_cell = nodes.iter().map(|&v| cells[v as usize]).min().unwrap();
            (nodes.len(), min_cell, c)
        })
        .collect();
    ranked.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut t_of_community: BTreeMap<u32, u16> = BTreeMap::new();
    for (rank, &(_, _, c)) in ranked.iter().enumerate() {
        t_of_community.insert(c, (rank + 1) as u16);
    }
    (0..cells.len())
        .map(|node| t_of_community.get(&p.community_of(node)).copied().unwrap_or(0))
        .collect()
}
