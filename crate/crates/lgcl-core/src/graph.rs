//! Immutable undirected graphs with compacted integer ids and sorted
//! adjacency, loaded from whitespace edge lists.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::{Error, Result};

/// Compact node identifier, `0..num_nodes`.
pub type NodeId = u32;

/// An undirected, unweighted graph. Immutable after construction; safe to
/// share across threads.
///
/// Edges are stored once in canonical `(u, v), u < v` order and mirrored
/// into per-node sorted neighbor lists (CSR layout).
#[derive(Clone)]
pub struct Graph {
    num_nodes: u32,
    edges: Vec<(NodeId, NodeId)>,
    offsets: Vec<usize>,
    neighbors: Vec<NodeId>,
    /// Original input ids, indexed by compact id. Identity when built
    /// directly from compact pairs.
    original_ids: Vec<u64>,
    /// Self-loops dropped while loading.
    dropped_self_loops: usize,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("num_nodes", &self.num_nodes)
            .field("num_edges", &self.edges.len())
            .finish()
    }
}

impl Graph {
    /// Build from undirected pairs over `0..num_nodes`. Duplicates and
    /// reversed copies collapse to one edge; self-loops are rejected.
    pub fn from_edges(num_nodes: u32, pairs: &[(NodeId, NodeId)]) -> Result<Self> {
        let mut edges = Vec::with_capacity(pairs.len());
        for &(u, v) in pairs {
            if u == v {
                return Err(Error::InvalidArgument(format!("self-loop on node {u}")));
            }
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::NodeOutOfRange {
                    id: u.max(v),
                    num_nodes,
                });
            }
            edges.push((u.min(v), u.max(v)));
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self::assemble(
            num_nodes,
            edges,
            (0..num_nodes as u64).collect(),
            0,
        ))
    }

    fn assemble(
        num_nodes: u32,
        edges: Vec<(NodeId, NodeId)>,
        original_ids: Vec<u64>,
        dropped_self_loops: usize,
    ) -> Self {
        let mut degrees = vec![0usize; num_nodes as usize];
        for &(u, v) in &edges {
            degrees[u as usize] += 1;
            degrees[v as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(num_nodes as usize + 1);
        let mut acc = 0usize;
        offsets.push(0);
        for &d in &degrees {
            acc += d;
            offsets.push(acc);
        }
        let mut cursor = offsets.clone();
        let mut neighbors = vec![0 as NodeId; acc];
        for &(u, v) in &edges {
            neighbors[cursor[u as usize]] = v;
            cursor[u as usize] += 1;
            neighbors[cursor[v as usize]] = u;
            cursor[v as usize] += 1;
        }
        for n in 0..num_nodes as usize {
            neighbors[offsets[n]..offsets[n + 1]].sort_unstable();
        }
        Graph {
            num_nodes,
            edges,
            offsets,
            neighbors,
            original_ids,
            dropped_self_loops,
        }
    }

    /// Load a whitespace-separated edge list. Lines starting with `#` are
    /// comments. Node ids may be arbitrary non-negative integers; they are
    /// compacted to `0..num_nodes` in first-appearance order (the map is
    /// kept, see [`Graph::original_ids`]). Reversed/duplicate edges are
    /// merged and self-loops dropped (counted).
    pub fn load_edge_list<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path_str = path.as_ref().display().to_string();
        let file = std::fs::File::open(path.as_ref()).map_err(|source| Error::Io {
            path: path_str.clone(),
            source,
        })?;
        let reader = BufReader::new(file);

        let mut compact: HashMap<u64, NodeId> = HashMap::new();
        let mut original_ids: Vec<u64> = Vec::new();
        let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
        let mut dropped_self_loops = 0usize;

        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| Error::Io {
                path: path_str.clone(),
                source,
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut parts = trimmed.split_whitespace();
            let parse = |tok: Option<&str>, lineno: usize| -> Result<u64> {
                tok.ok_or_else(|| Error::Parse {
                    path: path_str.clone(),
                    line: lineno + 1,
                    msg: "expected two node ids".into(),
                })?
                .parse::<u64>()
                .map_err(|e| Error::Parse {
                    path: path_str.clone(),
                    line: lineno + 1,
                    msg: e.to_string(),
                })
            };
            let a = parse(parts.next(), lineno)?;
            let b = parse(parts.next(), lineno)?;
            if parts.next().is_some() {
                return Err(Error::Parse {
                    path: path_str.clone(),
                    line: lineno + 1,
                    msg: "trailing tokens after edge pair".into(),
                });
            }
            let mut intern = |id: u64| -> NodeId {
                *compact.entry(id).or_insert_with(|| {
                    original_ids.push(id);
                    (original_ids.len() - 1) as NodeId
                })
            };
            let u = intern(a);
            let v = intern(b);
            if u == v {
                dropped_self_loops += 1;
                continue;
            }
            edges.push((u.min(v), u.max(v)));
        }

        if original_ids.is_empty() {
            return Err(Error::EmptyGraph(path_str));
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self::assemble(
            original_ids.len() as u32,
            edges,
            original_ids,
            dropped_self_loops,
        ))
    }

    /// Canonical save: `u v` per line with `u < v`, pairs ascending.
    pub fn save_canonical<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let path_str = path.as_ref().display().to_string();
        let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref()).map_err(
            |source| Error::Io {
                path: path_str.clone(),
                source,
            },
        )?);
        for &(u, v) in &self.edges {
            writeln!(out, "{u} {v}").map_err(|source| Error::Io {
                path: path_str.clone(),
                source,
            })?;
        }
        out.flush().map_err(|source| Error::Io {
            path: path_str,
            source,
        })
    }

    pub fn num_nodes(&self) -> u32 {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical `(u, v), u < v` edge pairs, ascending.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn degree(&self, v: NodeId) -> usize {
        let v = v as usize;
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: NodeId) -> Result<&[NodeId]> {
        if v >= self.num_nodes {
            return Err(Error::NodeOutOfRange {
                id: v,
                num_nodes: self.num_nodes,
            });
        }
        let v = v as usize;
        Ok(&self.neighbors[self.offsets[v]..self.offsets[v + 1]])
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        if u >= self.num_nodes || v >= self.num_nodes || u == v {
            return false;
        }
        let row = &self.neighbors[self.offsets[u as usize]..self.offsets[u as usize + 1]];
        row.binary_search(&v).is_ok()
    }

    /// Truncated BFS: hop distances from `source` for every node within
    /// `cap` hops. The source maps to 0.
    pub fn shortest_path_within(&self, source: NodeId, cap: u32) -> Result<HashMap<NodeId, u32>> {
        if source >= self.num_nodes {
            return Err(Error::NodeOutOfRange {
                id: source,
                num_nodes: self.num_nodes,
            });
        }
        let mut dist: HashMap<NodeId, u32> = HashMap::new();
        dist.insert(source, 0);
        let mut frontier = vec![source];
        let mut depth = 0u32;
        while depth < cap && !frontier.is_empty() {
            depth += 1;
            let mut next = Vec::new();
            for &u in &frontier {
                for &w in self.neighbors(u)? {
                    dist.entry(w).or_insert_with(|| {
                        next.push(w);
                        depth
                    });
                }
            }
            frontier = next;
        }
        Ok(dist)
    }

    /// Original input id for a compact node id.
    pub fn original_id(&self, v: NodeId) -> u64 {
        self.original_ids[v as usize]
    }

    /// Compact-to-original id map, indexed by compact id.
    pub fn original_ids(&self) -> &[u64] {
        &self.original_ids
    }

    pub fn dropped_self_loops(&self) -> usize {
        self.dropped_self_loops
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes as usize)
            .map(|v| self.offsets[v + 1] - self.offsets[v])
            .max()
            .unwrap_or(0)
    }
}
