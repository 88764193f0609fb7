//! Enclosing-subgraph extraction around a target pair, structural node
//! labeling, and one-hot feature construction.

use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, NodeId};
use crate::seeds;
use crate::split::EdgeSplit;
use crate::{Error, Result};

/// How node feature rows are synthesized. The datasets carry no attributes,
/// so features come from the subgraph structure itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// Single all-ones column.
    Constant,
    /// Single column: local degree / (local nodes - 1).
    Degree,
    /// One-hot of the double-radius structural label, clamped to
    /// `max_label`; slot 0 marks unreachable nodes.
    Drnl,
}

impl FeatureMode {
    pub fn width(&self, max_label: u32) -> usize {
        match self {
            FeatureMode::Constant | FeatureMode::Degree => 1,
            FeatureMode::Drnl => max_label as usize + 1,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(FeatureMode::Constant),
            "degree" => Ok(FeatureMode::Degree),
            "drnl" => Ok(FeatureMode::Drnl),
            _ => Err(Error::InvalidArgument(format!(
                "unknown feature mode '{s}' (expected constant|degree|drnl)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureMode::Constant => "constant",
            FeatureMode::Degree => "degree",
            FeatureMode::Drnl => "drnl",
        }
    }
}

/// The local h-hop context of a queried node pair. `local_graph` never
/// contains the target edge itself; local ids are assigned in ascending
/// global-id order.
#[derive(Debug, Clone)]
pub struct EnclosingSubgraph {
    pub local_graph: Graph,
    /// local id -> global id
    pub global_ids: Vec<NodeId>,
    /// local indices of the queried pair
    pub target_local: (u32, u32),
    /// per-node structural label; 0 = unreachable from a target
    pub labels: Vec<u32>,
    /// rows = local nodes; empty until built
    pub features: Array2<f64>,
}

/// Union of the <=h-hop balls around both targets over the observed graph,
/// targets always kept. If the ball exceeds `node_budget`, non-target nodes
/// are subsampled uniformly (seeded per pair). Induced edges, minus the
/// target edge when present.
pub fn extract_subgraph(
    split: &EdgeSplit,
    pair: (NodeId, NodeId),
    h: u32,
    node_budget: usize,
    seed: u64,
) -> Result<EnclosingSubgraph> {
    let g = &split.observed;
    let (a, b) = pair;
    if a >= g.num_nodes() || b >= g.num_nodes() {
        return Err(Error::NodeOutOfRange {
            id: a.max(b),
            num_nodes: g.num_nodes(),
        });
    }
    if h < 1 {
        return Err(Error::InvalidArgument("h must be >= 1".into()));
    }
    if node_budget < 2 {
        return Err(Error::InvalidArgument("node_budget must be >= 2".into()));
    }

    let da = g.shortest_path_within(a, h)?;
    let db = g.shortest_path_within(b, h)?;
    let mut ball: Vec<NodeId> = da.keys().chain(db.keys()).copied().collect();
    ball.sort_unstable();
    ball.dedup();

    let keep: Vec<NodeId> = if ball.len() > node_budget {
        let mut rest: Vec<NodeId> = ball.iter().copied().filter(|&x| x != a && x != b).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix3(seed, a as u64, b as u64));
        // partial Fisher-Yates over the sorted candidate list
        let take = node_budget - 2;
        for i in 0..take {
            let j = rng.gen_range(i..rest.len());
            rest.swap(i, j);
        }
        rest.truncate(take);
        rest.push(a);
        rest.push(b);
        rest.sort_unstable();
        rest.dedup();
        rest
    } else {
        ball
    };

    let mut local_of: HashMap<NodeId, u32> = HashMap::with_capacity(keep.len());
    for (i, &gid) in keep.iter().enumerate() {
        local_of.insert(gid, i as u32);
    }
    let target_edge = (a.min(b), a.max(b));
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for &gid in &keep {
        let lu = local_of[&gid];
        for &w in g.neighbors(gid)? {
            if gid < w {
                if let Some(&lv) = local_of.get(&w) {
                    if (gid, w) != target_edge {
                        edges.push((lu.min(lv), lu.max(lv)));
                    }
                }
            }
        }
    }
    let local_graph = Graph::from_edges(keep.len() as u32, &edges)?;
    let target_local = (local_of[&a], local_of[&b]);
    Ok(EnclosingSubgraph {
        local_graph,
        global_ids: keep,
        target_local,
        labels: Vec::new(),
        features: Array2::zeros((0, 0)),
    })
}

impl EnclosingSubgraph {
    /// Double-radius structural labels computed in the local graph (target
    /// edge already removed). Targets get 1; nodes unreachable from either
    /// target get 0.
    pub fn label_nodes(&mut self) -> &[u32] {
        let n = self.local_graph.num_nodes();
        let (ti, tj) = self.target_local;
        let cap = n; // full BFS within the subgraph
        let di = self
            .local_graph
            .shortest_path_within(ti, cap)
            .expect("target in range");
        let dj = self
            .local_graph
            .shortest_path_within(tj, cap)
            .expect("target in range");
        let mut labels = vec![0u32; n as usize];
        for v in 0..n {
            if v == ti || v == tj {
                labels[v as usize] = 1;
                continue;
            }
            let (Some(&a), Some(&b)) = (di.get(&v), dj.get(&v)) else {
                continue; // unreachable -> 0
            };
            let d = a + b;
            labels[v as usize] = 1 + a.min(b) + (d / 2) * (d / 2 + d % 2 - 1);
        }
        self.labels = labels;
        &self.labels
    }

    /// One row per node; width fixed by `(mode, max_label)` across a run.
    /// DRNL rows are one-hot of `min(label, max_label)`.
    pub fn build_features(&mut self, max_label: u32, mode: FeatureMode) -> &Array2<f64> {
        if self.labels.is_empty() {
            self.label_nodes();
        }
        let n = self.local_graph.num_nodes() as usize;
        let width = mode.width(max_label);
        let mut x = Array2::<f64>::zeros((n, width));
        match mode {
            FeatureMode::Constant => x.fill(1.0),
            FeatureMode::Degree => {
                let denom = (n.max(2) - 1) as f64;
                for v in 0..n {
                    x[(v, 0)] = self.local_graph.degree(v as u32) as f64 / denom;
                }
            }
            FeatureMode::Drnl => {
                for v in 0..n {
                    let slot = self.labels[v].min(max_label) as usize;
                    x[(v, slot)] = 1.0;
                }
            }
        }
        self.features = x;
        &self.features
    }

    /// Extraction + labels + features in one go.
    pub fn prepare(
        split: &EdgeSplit,
        pair: (NodeId, NodeId),
        h: u32,
        node_budget: usize,
        seed: u64,
        max_label: u32,
        mode: FeatureMode,
    ) -> Result<EnclosingSubgraph> {
        let mut sg = extract_subgraph(split, pair, h, node_budget, seed)?;
        sg.label_nodes();
        sg.build_features(max_label, mode);
        Ok(sg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::split::split_edges;

    /// Split stand-in whose observed graph is exactly `g` (no held-out
    /// edges), for direct extraction tests.
    fn full_split(g: &Graph) -> EdgeSplit {
        EdgeSplit {
            observed: g.clone(),
            train_pos: g.edges().to_vec(),
            train_neg: vec![],
            test_pos: vec![],
            test_neg: vec![],
            train_fraction: 1.0,
            seed: 0,
            num_nodes: g.num_nodes(),
        }
    }

    #[test]
    fn path_pair_one_hop_covers_all() {
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let s = full_split(&g);
        let sg = extract_subgraph(&s, (1, 3), 1, 100, 0).unwrap();
        assert_eq!(sg.global_ids, vec![0, 1, 2, 3, 4]);
        // 1-3 is not an edge, so nothing is removed
        assert_eq!(sg.local_graph.num_edges(), 4);
    }

    #[test]
    fn target_edge_is_removed() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let s = full_split(&g);
        let sg = extract_subgraph(&s, (0, 1), 1, 100, 0).unwrap();
        assert_eq!(sg.global_ids, vec![0, 1, 2]);
        assert_eq!(sg.local_graph.edges(), &[(0, 2), (1, 2)]);
    }

    #[test]
    fn budget_caps_nodes_and_keeps_targets() {
        let mut pairs = Vec::new();
        for leaf in 1..=100u32 {
            pairs.push((0, leaf));
        }
        let g = Graph::from_edges(101, &pairs).unwrap();
        let s = full_split(&g);
        let sg = extract_subgraph(&s, (0, 5), 1, 20, 9).unwrap();
        assert_eq!(sg.global_ids.len(), 20);
        assert!(sg.global_ids.contains(&0));
        assert!(sg.global_ids.contains(&5));
        // same seed → same subsample
        let sg2 = extract_subgraph(&s, (0, 5), 1, 20, 9).unwrap();
        assert_eq!(sg.global_ids, sg2.global_ids);
        let sg3 = extract_subgraph(&s, (0, 5), 1, 20, 10).unwrap();
        assert_ne!(sg.global_ids, sg3.global_ids);
    }

    #[test]
    fn isolated_targets_yield_two_node_empty_subgraph() {
        let g = Graph::from_edges(6, &[(2, 3), (3, 4), (4, 5), (2, 4), (2, 5), (3, 5)]).unwrap();
        // 0 and 1 are isolated
        let s = full_split(&g);
        let sg = extract_subgraph(&s, (0, 1), 2, 100, 0).unwrap();
        assert_eq!(sg.global_ids, vec![0, 1]);
        assert_eq!(sg.local_graph.num_edges(), 0);
        let mut sg = sg;
        sg.label_nodes();
        assert_eq!(sg.labels, vec![1, 1]);
    }

    #[test]
    fn drnl_label_values() {
        // targets 0,1; node 2 adjacent to both (d=1,1); node 3 at (1,2)
        let g = Graph::from_edges(4, &[(0, 2), (1, 2), (0, 3), (2, 3), (0, 1)]).unwrap();
        let s = full_split(&g);
        let mut sg = extract_subgraph(&s, (0, 1), 2, 100, 0).unwrap();
        sg.label_nodes();
        // local ids == global ids here (all nodes kept, sorted)
        assert_eq!(sg.labels[0], 1, "target");
        assert_eq!(sg.labels[1], 1, "target");
        assert_eq!(sg.labels[2], 2, "common neighbor d=(1,1)");
        // node 3: d0=1; d1 via 3-2-1 = 2 -> d=3 -> 1+1+1*(1+1-1) = 3
        assert_eq!(sg.labels[3], 3, "d=(1,2)");
    }

    #[test]
    fn unreachable_nodes_get_zero_and_slot_zero() {
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        let s = full_split(&g);
        // pair (1,2): 1's component {0,1}, 2's component {2,3}
        let mut sg = extract_subgraph(&s, (1, 2), 2, 100, 0).unwrap();
        sg.label_nodes();
        let l0 = sg.global_ids.iter().position(|&g| g == 0).unwrap();
        assert_eq!(sg.labels[l0], 0, "node 0 unreachable from target 2");
        sg.build_features(8, FeatureMode::Drnl);
        assert_eq!(sg.features[(l0, 0)], 1.0);
        assert_eq!(sg.features.row(l0).sum(), 1.0);
    }

    #[test]
    fn feature_rows_are_one_hot_and_clamped() {
        // long path, pair = endpoints, so interior labels exceed max_label
        let pairs: Vec<_> = (0..30u32).map(|i| (i, i + 1)).collect();
        let g = Graph::from_edges(31, &pairs).unwrap();
        let s = full_split(&g);
        let mut sg = extract_subgraph(&s, (0, 30), 30, 100, 0).unwrap();
        sg.label_nodes();
        let x = sg.build_features(8, FeatureMode::Drnl).clone();
        assert_eq!(x.ncols(), 9);
        for r in 0..x.nrows() {
            assert_eq!(x.row(r).sum(), 1.0, "row {r} not one-hot");
        }
        assert!(sg.labels.iter().any(|&l| l > 8), "want a clamped label");
        let big = sg.labels.iter().position(|&l| l > 8).unwrap();
        assert_eq!(x[(big, 8)], 1.0);
        // targets land on slot 1
        let t = sg.target_local.0 as usize;
        assert_eq!(x[(t, 1)], 1.0);
    }

    #[test]
    fn ball_respects_distance_condition_on_random_graphs() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for trial in 0..30 {
            let n = rng.gen_range(6..24u32);
            let p = [0.1, 0.25, 0.4][trial % 3];
            let mut pairs = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    if rng.gen::<f64>() < p {
                        pairs.push((u, v));
                    }
                }
            }
            if pairs.len() < 2 {
                continue;
            }
            let g = Graph::from_edges(n, &pairs).unwrap();
            let s = full_split(&g);
            let a = rng.gen_range(0..n);
            let b = (a + 1 + rng.gen_range(0..n - 1)) % n;
            if a == b {
                continue;
            }
            let h = rng.gen_range(1..3u32);
            let sg = extract_subgraph(&s, (a, b), h, usize::MAX, 0).unwrap();
            let da = g.shortest_path_within(a, h).unwrap();
            let db = g.shortest_path_within(b, h).unwrap();
            for &gid in &sg.global_ids {
                let ok = gid == a || gid == b || da.contains_key(&gid) || db.contains_key(&gid);
                assert!(ok, "node {gid} outside both {h}-hop balls");
            }
            // and the other direction: every ball node is kept (no budget)
            for &gid in da.keys().chain(db.keys()) {
                assert!(sg.global_ids.contains(&gid));
            }
        }
    }

    #[test]
    fn extraction_uses_observed_graph_only() {
        let pairs: Vec<_> = (0..20u32).map(|i| (i, (i + 1) % 20)).collect();
        let g = Graph::from_edges(20, &pairs).unwrap();
        let split = split_edges(&g, 0.5, 3).unwrap();
        let &(u, v) = split.test_pos.first().unwrap();
        let sg = extract_subgraph(&split, (u, v), 2, 100, 0).unwrap();
        // test edge was never in observed, so local graph can't contain it
        let (lu, lv) = sg.target_local;
        assert!(!sg.local_graph.has_edge(lu, lv));
    }
}
