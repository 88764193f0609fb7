//! The two graph encoders and the loss stack: a subgraph encoder with
//! sort-based pooling, a line-graph encoder with target-node readout,
//! projection heads into a shared contrast space, and the supervised +
//! contrastive objectives combined as
//! `alpha * L_line + (1 - alpha) * L_sub + beta * L_con`.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor};
use crate::graph::Graph;
use crate::linegraph::LineGraphView;
use crate::seeds;
use crate::subgraph::{EnclosingSubgraph, FeatureMode};
use crate::{Error, Result};

/// Which trained head scores a pair at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalHead {
    Subgraph,
    LineGraph,
    /// Mean of the two heads' probabilities.
    Fused,
}

impl EvalHead {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "subgraph" => Ok(EvalHead::Subgraph),
            "linegraph" => Ok(EvalHead::LineGraph),
            "fused" => Ok(EvalHead::Fused),
            _ => Err(Error::InvalidArgument(format!(
                "unknown head '{s}' (expected subgraph|linegraph|fused)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EvalHead::Subgraph => "subgraph",
            EvalHead::LineGraph => "linegraph",
            EvalHead::Fused => "fused",
        }
    }
}

/// Full training configuration. Defaults follow the values used for the
/// reported runs; `alpha = 0.3`, `beta = 0.1` are the sweet spot of the
/// loss-weight sweep.
#[derive(Debug, Clone)]
pub struct LgclConfig {
    pub h_hops: u32,
    pub num_layers: usize,
    pub hidden: usize,
    pub sortpool_k: usize,
    pub contrast_dim: usize,
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub node_budget: usize,
    pub max_label: u32,
    pub feature_mode: FeatureMode,
    /// Include the anchor's own positive pair in the contrastive
    /// denominator (off reproduces the printed objective).
    pub include_positive: bool,
    /// Compute train AUC per epoch (extra forward pass).
    pub track_train_auc: bool,
    /// Checkpoint every k epochs; 0 = final only.
    pub checkpoint_every: usize,
    /// Sample-cache memory budget; overflow falls back to on-the-fly
    /// extraction.
    pub cache_mem_mb: usize,
}

impl Default for LgclConfig {
    fn default() -> Self {
        LgclConfig {
            h_hops: 2,
            num_layers: 3,
            hidden: 32,
            sortpool_k: 30,
            contrast_dim: 64,
            tau: 0.5,
            alpha: 0.3,
            beta: 0.1,
            lr: 1e-3,
            epochs: 15,
            batch_size: 64,
            seed: 7,
            node_budget: 100,
            max_label: 8,
            feature_mode: FeatureMode::Drnl,
            include_positive: false,
            track_train_auc: false,
            checkpoint_every: 0,
            cache_mem_mb: 2048,
        }
    }
}

impl LgclConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.beta < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "beta must be >= 0, got {}",
                self.beta
            )));
        }
        if self.tau <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "tau must be > 0, got {}",
                self.tau
            )));
        }
        if self.sortpool_k < 1 {
            return Err(Error::InvalidArgument("sortpool_k must be >= 1".into()));
        }
        if self.num_layers < 1 || self.hidden < 1 || self.contrast_dim < 1 {
            return Err(Error::InvalidArgument(
                "num_layers, hidden, contrast_dim must be >= 1".into(),
            ));
        }
        if self.h_hops < 1 {
            return Err(Error::InvalidArgument("h_hops must be >= 1".into()));
        }
        if self.node_budget < 2 {
            return Err(Error::InvalidArgument("node_budget must be >= 2".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch_size must be >= 2".into()));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArgument("lr must be > 0".into()));
        }
        Ok(())
    }

    pub fn feature_width(&self) -> usize {
        self.feature_mode.width(self.max_label)
    }

    /// Width of the pooled subgraph embedding.
    pub fn subgraph_embedding_dim(&self) -> usize {
        self.sortpool_k * self.num_layers * self.hidden
    }

    /// Canonical `key = value` listing, the basis of the config hash.
    pub fn canonical_entries(&self) -> Vec<(String, String)> {
        vec![
            ("h_hops".into(), self.h_hops.to_string()),
            ("num_layers".into(), self.num_layers.to_string()),
            ("hidden".into(), self.hidden.to_string()),
            ("sortpool_k".into(), self.sortpool_k.to_string()),
            ("contrast_dim".into(), self.contrast_dim.to_string()),
            ("tau".into(), format!("{}", self.tau)),
            ("alpha".into(), format!("{}", self.alpha)),
            ("beta".into(), format!("{}", self.beta)),
            ("lr".into(), format!("{}", self.lr)),
            ("epochs".into(), self.epochs.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("node_budget".into(), self.node_budget.to_string()),
            ("max_label".into(), self.max_label.to_string()),
            ("feature_mode".into(), self.feature_mode.name().into()),
            ("include_positive".into(), self.include_positive.to_string()),
        ]
    }
}

const PARAM_INIT_TAG: u64 = 0xael as u64;

/// All trainable tensors, flat-indexed with stable names; layout records
/// which index plays which role.
#[derive(Debug, Clone)]
pub struct ModelParams {
    tensors: Vec<Array2<f64>>,
    names: Vec<String>,
    sub_layers: Vec<(usize, usize)>,
    line_layers: Vec<(usize, usize)>,
    sub_head: [usize; 4],
    line_head: [usize; 4],
    proj_s: usize,
    proj_l: usize,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, deterministic under the config
    /// seed.
    pub fn init(cfg: &LgclConfig) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(cfg.seed, PARAM_INIT_TAG));
        let mut tensors = Vec::new();
        let mut names = Vec::new();
        let mut push = |name: String, t: Array2<f64>| -> usize {
            tensors.push(t);
            names.push(name);
            tensors.len() - 1
        };
        let glorot = |rng: &mut ChaCha8Rng, fin: usize, fout: usize| {
            let a = (6.0 / (fin + fout) as f64).sqrt();
            Array2::from_shape_fn((fin, fout), |_| rng.gen_range(-a..a))
        };

        let f = cfg.feature_width();
        let mut sub_layers = Vec::new();
        let mut w_in = f;
        for l in 0..cfg.num_layers {
            let w = push(format!("sub_conv{l}_w"), glorot(&mut rng, w_in, cfg.hidden));
            let b = push(format!("sub_conv{l}_b"), Array2::zeros((1, cfg.hidden)));
            sub_layers.push((w, b));
            w_in = cfg.hidden;
        }
        let mut line_layers = Vec::new();
        let mut w_in = 2 * f;
        for l in 0..cfg.num_layers {
            let w = push(format!("line_conv{l}_w"), glorot(&mut rng, w_in, cfg.hidden));
            let b = push(format!("line_conv{l}_b"), Array2::zeros((1, cfg.hidden)));
            line_layers.push((w, b));
            w_in = cfg.hidden;
        }

        let zs_dim = cfg.subgraph_embedding_dim();
        let sub_head = [
            push("sub_head_w1".into(), glorot(&mut rng, zs_dim, cfg.hidden)),
            push("sub_head_b1".into(), Array2::zeros((1, cfg.hidden))),
            push("sub_head_w2".into(), glorot(&mut rng, cfg.hidden, 1)),
            push("sub_head_b2".into(), Array2::zeros((1, 1))),
        ];
        let line_head = [
            push(
                "line_head_w1".into(),
                glorot(&mut rng, cfg.hidden, cfg.hidden),
            ),
            push("line_head_b1".into(), Array2::zeros((1, cfg.hidden))),
            push("line_head_w2".into(), glorot(&mut rng, cfg.hidden, 1)),
            push("line_head_b2".into(), Array2::zeros((1, 1))),
        ];
        let proj_s = push("proj_s".into(), glorot(&mut rng, zs_dim, cfg.contrast_dim));
        let proj_l = push(
            "proj_l".into(),
            glorot(&mut rng, cfg.hidden, cfg.contrast_dim),
        );

        ModelParams {
            tensors,
            names,
            sub_layers,
            line_layers,
            sub_head,
            line_head,
            proj_s,
            proj_l,
        }
    }

    pub fn tensors(&self) -> &[Array2<f64>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn proj_s(&self) -> &Array2<f64> {
        &self.tensors[self.proj_s]
    }

    pub fn proj_l(&self) -> &Array2<f64> {
        &self.tensors[self.proj_l]
    }

    pub fn proj_indices(&self) -> (usize, usize) {
        (self.proj_s, self.proj_l)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Replace every tensor from a named list (checkpoint restore).
    pub fn load_named(&mut self, named: &[(String, Array2<f64>)]) -> Result<()> {
        for (name, value) in named {
            let Some(i) = self.names.iter().position(|n| n == name) else {
                return Err(Error::Checkpoint(format!("unknown tensor '{name}'")));
            };
            if self.tensors[i].dim() != value.dim() {
                return Err(Error::Checkpoint(format!(
                    "tensor '{name}' has shape {:?}, expected {:?}",
                    value.dim(),
                    self.tensors[i].dim()
                )));
            }
            self.tensors[i] = value.clone();
        }
        Ok(())
    }

    pub fn to_named(&self) -> Vec<(String, Array2<f64>)> {
        self.names
            .iter()
            .cloned()
            .zip(self.tensors.iter().cloned())
            .collect()
    }

    /// Layer shapes and parameter counts, for humans.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for (name, t) in self.names.iter().zip(&self.tensors) {
            out.push_str(&format!(
                "{name:<16} {:>5} x {:<5} {:>8}\n",
                t.nrows(),
                t.ncols(),
                t.len()
            ));
        }
        out.push_str(&format!("total parameters: {}\n", self.num_params()));
        out
    }
}

/// Per-tape leaves for a subset of parameters, remembering flat indices so
/// backward results map back onto the optimizer's layout.
pub struct BoundParams {
    /// (flat param index, leaf tensor)
    pub leaves: Vec<(usize, Tensor)>,
}

impl BoundParams {
    fn get(&self, flat: usize) -> &Tensor {
        &self
            .leaves
            .iter()
            .find(|(i, _)| *i == flat)
            .expect("param bound")
            .1
    }
}

/// Bind every encoder + head parameter (everything except the projection
/// heads) as leaves on `tape`.
pub fn bind_encoder_params(tape: &Tape, params: &ModelParams) -> Result<BoundParams> {
    let mut leaves = Vec::new();
    let mut bind = |flat: usize| -> Result<()> {
        leaves.push((flat, tape.leaf_from(&params.tensors[flat])?));
        Ok(())
    };
    for &(w, b) in &params.sub_layers {
        bind(w)?;
        bind(b)?;
    }
    for &(w, b) in &params.line_layers {
        bind(w)?;
        bind(b)?;
    }
    for &i in &params.sub_head {
        bind(i)?;
    }
    for &i in &params.line_head {
        bind(i)?;
    }
    Ok(BoundParams { leaves })
}

/// Row-normalized adjacency with self-loops: each row of `A + I` divided by
/// its degree-plus-one, so rows are stochastic.
pub fn row_normalized_adjacency(g: &Graph) -> Array2<f64> {
    let n = g.num_nodes() as usize;
    let mut a = Array2::<f64>::zeros((n, n));
    for v in 0..n {
        let inv = 1.0 / (g.degree(v as u32) + 1) as f64;
        a[(v, v)] = inv;
        for &w in g.neighbors(v as u32).expect("in range") {
            a[(v, w as usize)] = inv;
        }
    }
    a
}

/// Symmetric GCN normalization with self-loops:
/// `S[u][v] = 1 / (sqrt(deg(u)+1) * sqrt(deg(v)+1))` on `A + I`'s support.
pub fn sym_normalized_adjacency(g: &Graph) -> Array2<f64> {
    let n = g.num_nodes() as usize;
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|v| 1.0 / ((g.degree(v as u32) + 1) as f64).sqrt())
        .collect();
    let mut a = Array2::<f64>::zeros((n, n));
    for v in 0..n {
        a[(v, v)] = inv_sqrt[v] * inv_sqrt[v];
        for &w in g.neighbors(v as u32).expect("in range") {
            a[(v, w as usize)] = inv_sqrt[v] * inv_sqrt[w as usize];
        }
    }
    a
}

/// Sort-pooling permutation: node order descending by the last column,
/// breaking ties by earlier columns right-to-left, then by local id.
fn sortpool_order(z: &Array2<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..z.nrows()).collect();
    idx.sort_by(|&a, &b| {
        for c in (0..z.ncols()).rev() {
            match z[(b, c)].partial_cmp(&z[(a, c)]) {
                Some(std::cmp::Ordering::Equal) | None => continue,
                Some(ord) => return ord,
            }
        }
        a.cmp(&b)
    });
    idx
}

/// Subgraph encoder: stacked row-normalized convolutions with tanh, layer
/// concatenation, sort-pooling to `k` rows, then a two-layer head. Returns
/// the pooled flattened embedding (pre-head) and the scalar logit.
pub fn encode_subgraph(
    tape: &Tape,
    bound: &BoundParams,
    params: &ModelParams,
    sg: &EnclosingSubgraph,
    cfg: &LgclConfig,
) -> Result<(Tensor, Tensor)> {
    if sg.features.nrows() as u32 != sg.local_graph.num_nodes() || sg.features.nrows() == 0 {
        return Err(Error::InvalidArgument(
            "subgraph features not built or empty".into(),
        ));
    }
    let n = sg.local_graph.num_nodes() as usize;
    let x = tape.leaf_from(&sg.features)?;
    let p = tape.leaf(row_normalized_adjacency(&sg.local_graph))?;

    let mut h = x;
    let mut layer_outputs = Vec::with_capacity(cfg.num_layers);
    for &(wi, bi) in &params.sub_layers {
        let prop = tape.matmul(&p, &h)?;
        let lin = tape.matmul(&prop, bound.get(wi))?;
        let lin = tape.add(&lin, bound.get(bi))?;
        h = tape.tanh(&lin);
        layer_outputs.push(h.clone());
    }
    let mut zcat = layer_outputs[0].clone();
    for next in &layer_outputs[1..] {
        zcat = tape.concat_cols(&zcat, next)?;
    }

    let order = sortpool_order(zcat.value());
    let keep = cfg.sortpool_k.min(n);
    let pooled = tape.gather_rows(&zcat, &order[..keep])?;
    let pooled = if keep < cfg.sortpool_k {
        let pad = tape.zeros(cfg.sortpool_k - keep, zcat.ncols());
        tape.concat_rows(&pooled, &pad)?
    } else {
        pooled
    };
    let zs = tape.reshape(&pooled, 1, cfg.sortpool_k * zcat.ncols())?;

    let [w1, b1, w2, b2] = params.sub_head;
    let h1 = tape.matmul(&zs, bound.get(w1))?;
    let h1 = tape.add(&h1, bound.get(b1))?;
    let h1 = tape.relu(&h1);
    let logit = tape.matmul(&h1, bound.get(w2))?;
    let logit = tape.add(&logit, bound.get(b2))?;
    Ok((zs, logit))
}

/// Line-graph encoder: stacked symmetric-normalized convolutions with relu;
/// the embedding is the target node's final-layer row, classified by a
/// two-layer head.
pub fn encode_line_graph(
    tape: &Tape,
    bound: &BoundParams,
    params: &ModelParams,
    lg: &LineGraphView,
    cfg: &LgclConfig,
) -> Result<(Tensor, Tensor)> {
    if lg.features.nrows() != lg.num_nodes() || lg.features.nrows() == 0 {
        return Err(Error::InvalidArgument(
            "line-graph features not built or empty".into(),
        ));
    }
    let x = tape.leaf_from(&lg.features)?;
    let s = tape.leaf(sym_normalized_adjacency(&lg.adjacency))?;

    let mut h = x;
    for &(wi, bi) in &params.line_layers {
        let prop = tape.matmul(&s, &h)?;
        let lin = tape.matmul(&prop, bound.get(wi))?;
        let lin = tape.add(&lin, bound.get(bi))?;
        h = tape.relu(&lin);
    }
    let zl = tape.gather_rows(&h, &[lg.target_index as usize])?;

    let [w1, b1, w2, b2] = params.line_head;
    let h1 = tape.matmul(&zl, bound.get(w1))?;
    let h1 = tape.add(&h1, bound.get(b1))?;
    let h1 = tape.relu(&h1);
    let logit = tape.matmul(&h1, bound.get(w2))?;
    let logit = tape.add(&logit, bound.get(b2))?;
    Ok((zl, logit))
}

/// Contrastive objective over already-projected batches: for each anchor n,
/// `-log( exp(sim(s_n, l_n)/tau) / sum_{m != n} exp(sim(s_n, l_m)/tau) )`
/// averaged over the batch. The positive pair is excluded from the
/// denominator unless `include_positive`.
pub fn contrastive_loss(
    tape: &Tape,
    zs_proj: &Tensor,
    zl_proj: &Tensor,
    tau: f64,
    include_positive: bool,
) -> Result<Tensor> {
    let n = zs_proj.nrows();
    if zl_proj.nrows() != n {
        return Err(Error::ShapeMismatch {
            op: "contrastive_loss",
            left: zs_proj.shape2(),
            right: zl_proj.shape2(),
        });
    }
    if n < 2 && !include_positive {
        return Err(Error::InvalidArgument(
            "contrastive loss needs a batch of size >= 2 (no negatives otherwise)".into(),
        ));
    }
    let sims = tape.cosine_matrix(zs_proj, zl_proj)?;
    let scaled = tape.scale(&sims, 1.0 / tau);
    let exp = tape.exp(&scaled);
    let denom_mask = Array2::from_shape_fn((n, n), |(r, c)| {
        if r == c && !include_positive {
            0.0
        } else {
            1.0
        }
    });
    let mask = tape.leaf(denom_mask)?;
    let masked = tape.mul(&exp, &mask)?;
    let denom = tape.sum_rows(&masked);
    let log_denom = tape.log(&denom);
    let eye = tape.leaf(Array2::from_shape_fn((n, n), |(r, c)| {
        if r == c {
            1.0
        } else {
            0.0
        }
    }))?;
    let diag = tape.sum_rows(&tape.mul(&scaled, &eye)?);
    let per_anchor = tape.sub(&log_denom, &diag)?;
    Ok(tape.mean(&per_anchor))
}

/// `alpha * L_line + (1 - alpha) * L_sub + beta * L_con`.
pub fn total_loss(
    tape: &Tape,
    l_sub: &Tensor,
    l_line: &Tensor,
    l_con: Option<&Tensor>,
    alpha: f64,
    beta: f64,
) -> Result<Tensor> {
    let weighted = tape.add(&tape.scale(l_line, alpha), &tape.scale(l_sub, 1.0 - alpha))?;
    match l_con {
        Some(c) => tape.add(&weighted, &tape.scale(c, beta)),
        None => Ok(weighted),
    }
}
