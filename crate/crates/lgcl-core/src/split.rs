//! Train/test edge splits with uniform negative sampling, plus the on-disk
//! split manifest.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, NodeId};
use crate::seeds;
use crate::{Error, Result};

/// A reproducible edge split: the observed training graph (training
/// positives only) plus disjoint positive/negative pair sets for train and
/// test. All pair lists are canonical `(u, v), u < v` ascending, so equal
/// splits serialize to byte-identical manifests.
#[derive(Debug, Clone)]
pub struct EdgeSplit {
    pub observed: Graph,
    pub train_pos: Vec<(NodeId, NodeId)>,
    pub train_neg: Vec<(NodeId, NodeId)>,
    pub test_pos: Vec<(NodeId, NodeId)>,
    pub test_neg: Vec<(NodeId, NodeId)>,
    pub train_fraction: f64,
    pub seed: u64,
    pub num_nodes: u32,
}

const SHUFFLE_TAG: u64 = 0x5b17;
const NEG_TAG: u64 = 0x9e6d;

/// Split the edge set into train/test positives by a seeded shuffle and draw
/// `neg_ratio` negatives per positive, uniformly over non-edges of the
/// *original* graph, without replacement. `floor(fraction * |E|)` edges go
/// to train.
pub fn split_edges(g: &Graph, train_fraction: f64, seed: u64) -> Result<EdgeSplit> {
    split_edges_with_ratio(g, train_fraction, seed, 1)
}

pub fn split_edges_with_ratio(
    g: &Graph,
    train_fraction: f64,
    seed: u64,
    neg_ratio: u32,
) -> Result<EdgeSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    if g.num_edges() < 10 {
        return Err(Error::InvalidArgument(format!(
            "graph has {} edges; need at least 10 to split",
            g.num_edges()
        )));
    }
    if neg_ratio == 0 {
        return Err(Error::InvalidArgument("neg_ratio must be >= 1".into()));
    }

    let n = g.num_nodes();
    let mut edges: Vec<(NodeId, NodeId)> = g.edges().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(seed, SHUFFLE_TAG));
    edges.shuffle(&mut rng);

    let n_train = (train_fraction * g.num_edges() as f64).floor() as usize;
    let n_train = n_train.clamp(1, g.num_edges() - 1);
    let mut train_pos: Vec<_> = edges[..n_train].to_vec();
    let mut test_pos: Vec<_> = edges[n_train..].to_vec();
    train_pos.sort_unstable();
    test_pos.sort_unstable();

    let needed_train = train_pos.len() * neg_ratio as usize;
    let needed_test = test_pos.len() * neg_ratio as usize;
    let needed = needed_train + needed_test;
    let possible = n as usize * (n as usize - 1) / 2 - g.num_edges();
    if needed > possible {
        return Err(Error::NotEnoughNonEdges {
            requested: needed,
            available: possible,
        });
    }

    let mut neg_rng = ChaCha8Rng::seed_from_u64(seeds::mix(seed, NEG_TAG));
    let negatives = sample_non_edges(g, needed, possible, &mut neg_rng);
    let mut train_neg: Vec<_> = negatives[..needed_train].to_vec();
    let mut test_neg: Vec<_> = negatives[needed_train..].to_vec();
    train_neg.sort_unstable();
    test_neg.sort_unstable();

    let observed = Graph::from_edges(n, &train_pos)?;
    Ok(EdgeSplit {
        observed,
        train_pos,
        train_neg,
        test_pos,
        test_neg,
        train_fraction,
        seed,
        num_nodes: n,
    })
}

/// Uniform sample of `needed` distinct non-edges. Rejection sampling when the
/// pool is large; explicit enumeration + partial shuffle when the pool is
/// within 4x of the request (dense graphs), so the draw always terminates.
fn sample_non_edges(
    g: &Graph,
    needed: usize,
    possible: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(NodeId, NodeId)> {
    let n = g.num_nodes();
    if possible <= needed.saturating_mul(4) {
        let mut pool: Vec<(NodeId, NodeId)> = Vec::with_capacity(possible);
        for u in 0..n {
            for v in (u + 1)..n {
                if !g.has_edge(u, v) {
                    pool.push((u, v));
                }
            }
        }
        // partial Fisher-Yates: the first `needed` entries are the sample
        for i in 0..needed {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        pool.truncate(needed);
        return pool;
    }
    let mut seen: HashSet<(NodeId, NodeId)> = HashSet::with_capacity(needed * 2);
    let mut out = Vec::with_capacity(needed);
    while out.len() < needed {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let pair = (a.min(b), a.max(b));
        if g.has_edge(pair.0, pair.1) || !seen.insert(pair) {
            continue;
        }
        out.push(pair);
    }
    out
}

impl EdgeSplit {
    /// All training pairs with labels, canonical order (pair asc, negatives
    /// after positives on the impossible tie). Callers shuffle per epoch.
    pub fn train_pairs_labeled(&self) -> Vec<((NodeId, NodeId), f64)> {
        let mut out: Vec<((NodeId, NodeId), f64)> =
            Vec::with_capacity(self.train_pos.len() + self.train_neg.len());
        out.extend(self.train_pos.iter().map(|&p| (p, 1.0)));
        out.extend(self.train_neg.iter().map(|&p| (p, 0.0)));
        out.sort_by(|a, b| (a.0, (a.1 as i64)).cmp(&(b.0, b.1 as i64)));
        out
    }

    pub fn test_pairs_labeled(&self) -> Vec<((NodeId, NodeId), f64)> {
        let mut out: Vec<((NodeId, NodeId), f64)> =
            Vec::with_capacity(self.test_pos.len() + self.test_neg.len());
        out.extend(self.test_pos.iter().map(|&p| (p, 1.0)));
        out.extend(self.test_neg.iter().map(|&p| (p, 0.0)));
        out.sort_by(|a, b| (a.0, (a.1 as i64)).cmp(&(b.0, b.1 as i64)));
        out
    }

    /// Write the manifest: four canonical edge-list files plus metadata and
    /// the id-compaction map of the source graph.
    pub fn save_manifest<P: AsRef<Path>>(&self, dir: P, source: &Graph) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let write_pairs = |name: &str, pairs: &[(NodeId, NodeId)]| -> Result<()> {
            let path = dir.join(name);
            let mut f = std::io::BufWriter::new(std::fs::File::create(&path).map_err(
                |source| Error::Io {
                    path: path.display().to_string(),
                    source,
                },
            )?);
            for &(u, v) in pairs {
                writeln!(f, "{u} {v}").map_err(|source| Error::Io {
                    path: path.display().to_string(),
                    source,
                })?;
            }
            Ok(())
        };
        write_pairs("train_pos.txt", &self.train_pos)?;
        write_pairs("train_neg.txt", &self.train_neg)?;
        write_pairs("test_pos.txt", &self.test_pos)?;
        write_pairs("test_neg.txt", &self.test_neg)?;

        let meta_path = dir.join("meta.txt");
        let meta = format!(
            "num_nodes = {}\nfraction = {}\nseed = {}\ntrain_pos = {}\ntrain_neg = {}\ntest_pos = {}\ntest_neg = {}\n",
            self.num_nodes,
            self.train_fraction,
            self.seed,
            self.train_pos.len(),
            self.train_neg.len(),
            self.test_pos.len(),
            self.test_neg.len(),
        );
        std::fs::write(&meta_path, meta).map_err(|source| Error::Io {
            path: meta_path.display().to_string(),
            source,
        })?;

        let nodes_path = dir.join("nodes.txt");
        let mut f = std::io::BufWriter::new(std::fs::File::create(&nodes_path).map_err(
            |source| Error::Io {
                path: nodes_path.display().to_string(),
                source,
            },
        )?);
        for (compact, original) in source.original_ids().iter().enumerate() {
            writeln!(f, "{compact} {original}").map_err(|source| Error::Io {
                path: nodes_path.display().to_string(),
                source,
            })?;
        }
        Ok(())
    }

    pub fn load_manifest<P: AsRef<Path>>(dir: P) -> Result<EdgeSplit> {
        let dir = dir.as_ref();
        let meta_path = dir.join("meta.txt");
        let meta = std::fs::read_to_string(&meta_path).map_err(|source| Error::Io {
            path: meta_path.display().to_string(),
            source,
        })?;
        let mut num_nodes: Option<u32> = None;
        let mut fraction: Option<f64> = None;
        let mut seed: Option<u64> = None;
        for line in meta.lines() {
            let Some((k, v)) = line.split_once('=') else {
                continue;
            };
            match k.trim() {
                "num_nodes" => num_nodes = v.trim().parse().ok(),
                "fraction" => fraction = v.trim().parse().ok(),
                "seed" => seed = v.trim().parse().ok(),
                _ => {}
            }
        }
        let num_nodes = num_nodes.ok_or_else(|| Error::Parse {
            path: meta_path.display().to_string(),
            line: 0,
            msg: "missing num_nodes".into(),
        })?;

        let read_pairs = |name: &str| -> Result<Vec<(NodeId, NodeId)>> {
            let path = dir.join(name);
            let f = std::fs::File::open(&path).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
            let mut out = Vec::new();
            for (lineno, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|source| Error::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    continue;
                }
                let mut it = trimmed.split_whitespace();
                let parse_one = |tok: Option<&str>| -> Result<NodeId> {
                    tok.ok_or_else(|| Error::Parse {
                        path: path.display().to_string(),
                        line: lineno + 1,
                        msg: "expected pair".into(),
                    })?
                    .parse()
                    .map_err(|_| Error::Parse {
                        path: path.display().to_string(),
                        line: lineno + 1,
                        msg: "bad node id".into(),
                    })
                };
                out.push((parse_one(it.next())?, parse_one(it.next())?));
            }
            Ok(out)
        };

        let train_pos = read_pairs("train_pos.txt")?;
        let train_neg = read_pairs("train_neg.txt")?;
        let test_pos = read_pairs("test_pos.txt")?;
        let test_neg = read_pairs("test_neg.txt")?;
        let observed = Graph::from_edges(num_nodes, &train_pos)?;
        Ok(EdgeSplit {
            observed,
            train_pos,
            train_neg,
            test_pos,
            test_neg,
            train_fraction: fraction.unwrap_or(0.0),
            seed: seed.unwrap_or(0),
            num_nodes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ring(n: u32) -> Graph {
        let pairs: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::from_edges(n, &pairs).unwrap()
    }

    #[test]
    fn split_counts_follow_floor_rule() {
        let g = ring(12); // 12 edges
        let s = split_edges(&g, 2.0 / 3.0, 1).unwrap();
        assert_eq!(s.train_pos.len(), 8);
        assert_eq!(s.test_pos.len(), 4);
        assert_eq!(s.train_neg.len(), 8);
        assert_eq!(s.test_neg.len(), 4);
    }

    #[test]
    fn split_is_deterministic() {
        let g = ring(30);
        let a = split_edges(&g, 0.5, 42).unwrap();
        let b = split_edges(&g, 0.5, 42).unwrap();
        assert_eq!(a.train_pos, b.train_pos);
        assert_eq!(a.train_neg, b.train_neg);
        assert_eq!(a.test_pos, b.test_pos);
        assert_eq!(a.test_neg, b.test_neg);
        let c = split_edges(&g, 0.5, 43).unwrap();
        assert_ne!(a.train_pos, c.train_pos);
    }

    #[test]
    fn split_partitions_and_negatives_are_valid() {
        let g = ring(40);
        let s = split_edges(&g, 0.7, 9).unwrap();
        let original: HashSet<_> = g.edges().iter().copied().collect();
        let train: HashSet<_> = s.train_pos.iter().copied().collect();
        let test: HashSet<_> = s.test_pos.iter().copied().collect();
        assert!(train.is_disjoint(&test));
        let union: HashSet<_> = train.union(&test).copied().collect();
        assert_eq!(union, original);

        let tn: HashSet<_> = s.train_neg.iter().copied().collect();
        let sn: HashSet<_> = s.test_neg.iter().copied().collect();
        assert!(tn.is_disjoint(&sn));
        assert_eq!(tn.len(), s.train_neg.len());
        assert_eq!(sn.len(), s.test_neg.len());
        for &(u, v) in s.train_neg.iter().chain(&s.test_neg) {
            assert_ne!(u, v);
            assert!(!original.contains(&(u, v)));
        }
        assert_eq!(s.observed.num_edges(), s.train_pos.len());
        assert_eq!(s.observed.edges(), &s.train_pos[..]);
    }

    #[test]
    fn too_few_edges_rejected() {
        let tri = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert!(matches!(
            split_edges(&tri, 2.0 / 3.0, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn near_complete_graph_runs_out_of_non_edges() {
        // K6 minus one edge: 14 edges, only 1 non-edge, need 14 negatives.
        let mut pairs = Vec::new();
        for u in 0..6u32 {
            for v in (u + 1)..6 {
                if (u, v) != (4, 5) {
                    pairs.push((u, v));
                }
            }
        }
        let g = Graph::from_edges(6, &pairs).unwrap();
        assert!(matches!(
            split_edges(&g, 0.5, 3),
            Err(Error::NotEnoughNonEdges { .. })
        ));
    }

    #[test]
    fn dense_pool_path_still_uniformly_samples() {
        // 12 nodes, ring plus chords: pool enumeration path, still valid.
        let mut pairs: Vec<_> = (0..12u32).map(|i| (i, (i + 1) % 12)).collect();
        for i in 0..12u32 {
            pairs.push((i, (i + 2) % 12));
            pairs.push((i, (i + 3) % 12));
            pairs.push((i, (i + 4) % 12));
        }
        let g = Graph::from_edges(12, &pairs).unwrap();
        // 66 possible pairs, 48 edges -> 18 non-edges; need 2*... adjust fraction
        let s = split_edges(&g, 0.8, 5);
        // needed = 48 negatives > 18 available -> must error
        assert!(matches!(s, Err(Error::NotEnoughNonEdges { .. })));
    }

    #[test]
    fn manifest_round_trips_byte_identically() {
        let g = ring(25);
        let s = split_edges(&g, 0.6, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let d1 = dir.path().join("a");
        let d2 = dir.path().join("b");
        s.save_manifest(&d1, &g).unwrap();
        let s2 = EdgeSplit::load_manifest(&d1).unwrap();
        s2.save_manifest(&d2, &g).unwrap();
        for name in [
            "train_pos.txt",
            "train_neg.txt",
            "test_pos.txt",
            "test_neg.txt",
            "meta.txt",
        ] {
            assert_eq!(
                std::fs::read(d1.join(name)).unwrap(),
                std::fs::read(d2.join(name)).unwrap(),
                "{name} differs"
            );
        }
        assert_eq!(s.train_pos, s2.train_pos);
        assert_eq!(s.num_nodes, s2.num_nodes);
    }

    #[test]
    fn power_dataset_split_counts() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/power.txt");
        if !std::path::Path::new(path).exists() {
            panic!("vendored dataset missing: {path}");
        }
        let g = Graph::load_edge_list(path).unwrap();
        assert_eq!(g.num_nodes(), 4941);
        assert_eq!(g.num_edges(), 6594);
        let s = split_edges(&g, 0.8, 7).unwrap();
        assert_eq!(s.train_pos.len(), 5275); // floor(0.8 * 6594)
        assert_eq!(s.test_pos.len(), 1319);
        assert_eq!(s.train_neg.len(), 5275);
        assert_eq!(s.test_neg.len(), 1319);
    }
}
