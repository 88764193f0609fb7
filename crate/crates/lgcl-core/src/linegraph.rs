//! Line-graph transformation of an enclosing subgraph: one node per subgraph
//! edge plus a node for the queried pair, adjacency by shared endpoint, and
//! features lifted by endpoint concatenation.

use ndarray::Array2;

use crate::graph::Graph;
use crate::subgraph::EnclosingSubgraph;
use crate::Result;

/// The line-graph view of a subgraph. Node order is lexicographic by the
/// underlying canonical edge pair, with the target pair's node appended last
/// (its edge is withheld from the subgraph, but the encoder needs a node to
/// read out).
#[derive(Debug, Clone)]
pub struct LineGraphView {
    /// underlying subgraph edge per line-graph node (local subgraph ids)
    pub node_pairs: Vec<(u32, u32)>,
    /// adjacency between line-graph nodes
    pub adjacency: Graph,
    /// index of the target pair's node (always the last one)
    pub target_index: u32,
    /// lifted node features; empty until built
    pub features: Array2<f64>,
}

/// Build the line graph: nodes are the subgraph's edges plus the target
/// pair; two nodes are adjacent iff their edges share an endpoint.
pub fn to_line_graph(sg: &EnclosingSubgraph) -> Result<LineGraphView> {
    let (ti, tj) = sg.target_local;
    let target_pair = (ti.min(tj), ti.max(tj));
    let mut node_pairs: Vec<(u32, u32)> = sg.local_graph.edges().to_vec();
    node_pairs.push(target_pair);
    let m = node_pairs.len();
    let target_index = (m - 1) as u32;

    // endpoint incidence index: subgraph node -> line-graph nodes touching it
    let n_sub = sg.local_graph.num_nodes() as usize;
    let mut incident: Vec<Vec<u32>> = vec![Vec::new(); n_sub];
    for (idx, &(u, v)) in node_pairs.iter().enumerate() {
        incident[u as usize].push(idx as u32);
        incident[v as usize].push(idx as u32);
    }
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for list in &incident {
        for i in 0..list.len() {
            for j in (i + 1)..list.len() {
                edges.push((list[i].min(list[j]), list[i].max(list[j])));
            }
        }
    }
    // distinct edge pairs share at most one endpoint, so no duplicates arise
    let adjacency = Graph::from_edges(m as u32, &edges)?;
    Ok(LineGraphView {
        node_pairs,
        adjacency,
        target_index,
        features: Array2::zeros((0, 0)),
    })
}

/// Eq-style closed form for the line graph's edge count over the subgraph's
/// edge set (optionally with the target edge added): sum of Deg(v)^2 over
/// nodes, halved, minus the edge count. Equals `sum C(deg, 2)` exactly.
pub fn count_line_edges(sg: &EnclosingSubgraph, include_target: bool) -> u64 {
    let n = sg.local_graph.num_nodes() as usize;
    let mut deg: Vec<u64> = (0..n)
        .map(|v| sg.local_graph.degree(v as u32) as u64)
        .collect();
    let mut num_edges = sg.local_graph.num_edges() as u64;
    if include_target {
        let (ti, tj) = sg.target_local;
        deg[ti as usize] += 1;
        deg[tj as usize] += 1;
        num_edges += 1;
    }
    let sum_sq: u64 = deg.iter().map(|&d| d * d).sum();
    sum_sq / 2 - num_edges
}

impl LineGraphView {
    /// Feature of the node for edge `(u, v)`: concat of the endpoint feature
    /// rows, ordered by ascending structural label then ascending local id.
    pub fn lift_features(&mut self, sg: &EnclosingSubgraph) -> &Array2<f64> {
        assert!(
            sg.features.nrows() as u32 == sg.local_graph.num_nodes(),
            "subgraph features must be built before lifting"
        );
        let f = sg.features.ncols();
        let mut x = Array2::<f64>::zeros((self.node_pairs.len(), 2 * f));
        for (idx, &(u, v)) in self.node_pairs.iter().enumerate() {
            let (first, second) = order_endpoints(sg, u, v);
            for c in 0..f {
                x[(idx, c)] = sg.features[(first as usize, c)];
                x[(idx, f + c)] = sg.features[(second as usize, c)];
            }
        }
        self.features = x;
        &self.features
    }

    /// Build view + lifted features.
    pub fn prepare(sg: &EnclosingSubgraph) -> Result<LineGraphView> {
        let mut lg = to_line_graph(sg)?;
        lg.lift_features(sg);
        Ok(lg)
    }

    pub fn num_nodes(&self) -> usize {
        self.node_pairs.len()
    }
}

fn order_endpoints(sg: &EnclosingSubgraph, u: u32, v: u32) -> (u32, u32) {
    let lu = sg.labels[u as usize];
    let lv = sg.labels[v as usize];
    if (lu, u) <= (lv, v) {
        (u, v)
    } else {
        (v, u)
    }
}
