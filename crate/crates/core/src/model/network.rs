//! Forward pass of the interpolator on a recorded [`Graph`].

use serde::{Deserialize, Serialize};

use crate::error::{NiertError, Result};
use crate::model::config::{AttentionMode, ModelConfig};
use crate::model::params::{self, ParamSet};
use crate::numerics::{ErrorNorm, Graph, Matrix, NodeId};
use crate::taskgen::InterpolationTask;

/// Effective attention weights of one head of one layer.
///
/// Rows are queries (observed points first, then targets); columns are the
/// keys the query may read: the `n` observed points under partial attention,
/// all `n + m` points under vanilla attention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    pub layer: usize,
    pub head: usize,
    pub weights: Matrix,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `(n + m) × d_y`, observed rows first.
    pub predictions: Matrix,
    pub attention: Option<Vec<AttentionMap>>,
    /// Point representations after the embedding and after every layer.
    pub hidden: Vec<Matrix>,
}

/// Which points contribute to the training loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossScope {
    #[default]
    AllPoints,
    TargetsOnly,
}

/// Node handles of a recorded forward pass.
pub struct Recorded {
    pub graph: Graph,
    pub params: Vec<NodeId>,
    pub predictions: NodeId,
    pub hidden: Vec<NodeId>,
    /// `(layer, head, softmax node)`.
    pub attention: Vec<(usize, usize, NodeId)>,
    /// `(layer, head, Σ_j α_ij v_j node)` before the output projection.
    pub head_outputs: Vec<(usize, usize, NodeId)>,
}

fn check_task(task: &InterpolationTask, config: &ModelConfig, params: &ParamSet) -> Result<()> {
    if task.d_x != config.d_x || task.d_y != config.d_y {
        return Err(NiertError::shape(format!(
            "task dims ({}, {}) vs model dims ({}, {})",
            task.d_x, task.d_y, config.d_x, config.d_y
        )));
    }
    if task.observed.is_empty() {
        return Err(NiertError::shape("task has no observed points"));
    }
    if params.tensors.len() != params::layout(config).len() {
        return Err(NiertError::shape("parameter set does not match config"));
    }
    Ok(())
}

fn inputs(task: &InterpolationTask, config: &ModelConfig) -> Result<(Matrix, Matrix)> {
    let mut xs = Vec::with_capacity((task.n() + task.m()) * config.d_x);
    for p in task.observed.iter().chain(&task.targets) {
        if p.x.len() != config.d_x {
            return Err(NiertError::shape(format!("point of dimension {}", p.x.len())));
        }
        xs.extend_from_slice(&p.x);
    }
    let mut ys = Vec::with_capacity(task.n() * config.d_y);
    for i in 0..task.n() {
        let y = task.observed_y(i);
        if y.len() != config.d_y {
            return Err(NiertError::shape(format!("value of dimension {}", y.len())));
        }
        ys.extend_from_slice(y);
    }
    Ok((
        Matrix::from_raw(task.n() + task.m(), config.d_x, xs),
        Matrix::from_raw(task.n(), config.d_y, ys),
    ))
}

fn embed_nodes(
    g: &mut Graph,
    p: &[NodeId],
    x: Matrix,
    y_obs: Matrix,
    m: usize,
) -> Result<NodeId> {
    let x = g.constant(x);
    let y = g.constant(y_obs);
    let x_emb = g.affine(x, p[params::EMBED_X_W], p[params::EMBED_X_B])?;
    let y_emb = g.affine(y, p[params::EMBED_Y_W], p[params::EMBED_Y_B])?;
    let y_all = if m > 0 {
        let mask = g.repeat_row(p[params::MASK_Y], m)?;
        g.concat_rows(&[y_emb, mask])?
    } else {
        y_emb
    };
    let cat = g.concat_cols(&[x_emb, y_all])?;
    g.affine(cat, p[params::EMBED_IN_W], p[params::EMBED_IN_B])
}

struct LayerTrace<'a> {
    layer: usize,
    attention: &'a mut Vec<(usize, usize, NodeId)>,
    head_outputs: &'a mut Vec<(usize, usize, NodeId)>,
}

fn layer_nodes(
    g: &mut Graph,
    p: &[NodeId],
    h: NodeId,
    config: &ModelConfig,
    n_observed: usize,
    trace: LayerTrace<'_>,
) -> Result<NodeId> {
    let s = params::layer_slots(trace.layer);
    let dk = config.head_dim();
    let q = g.affine(h, p[s.q.0], p[s.q.1])?;
    // Keys and values come from observed rows only, which removes target
    // columns before the softmax normalizes each row.
    let kv_source = match config.attention {
        AttentionMode::Partial => g.slice_rows(h, 0, n_observed)?,
        AttentionMode::Vanilla => h,
    };
    let k = g.affine(kv_source, p[s.k.0], p[s.k.1])?;
    let v = g.affine(kv_source, p[s.v.0], p[s.v.1])?;
    let scale = 1.0 / (dk as f64).sqrt();
    let mut heads = Vec::with_capacity(config.num_heads);
    for head in 0..config.num_heads {
        let qh = g.slice_cols(q, head * dk, dk)?;
        let kh = g.slice_cols(k, head * dk, dk)?;
        let vh = g.slice_cols(v, head * dk, dk)?;
        let logits = g.matmul_t(qh, kh)?;
        let logits = g.scale(logits, scale);
        let alpha = g.softmax(logits);
        let out = g.matmul(alpha, vh)?;
        trace.attention.push((trace.layer, head, alpha));
        trace.head_outputs.push((trace.layer, head, out));
        heads.push(out);
    }
    let merged = g.concat_cols(&heads)?;
    let attn = g.affine(merged, p[s.o.0], p[s.o.1])?;
    let res1 = g.add(h, attn)?;
    let mid = g.layer_norm(res1, p[s.norm1.0], p[s.norm1.1])?;
    let ff = g.affine(mid, p[s.ffn1.0], p[s.ffn1.1])?;
    let ff = g.relu(ff);
    let ff = g.affine(ff, p[s.ffn2.0], p[s.ffn2.1])?;
    let res2 = g.add(mid, ff)?;
    g.layer_norm(res2, p[s.norm2.0], p[s.norm2.1])
}

fn head_nodes(g: &mut Graph, p: &[NodeId], h: NodeId, config: &ModelConfig) -> Result<NodeId> {
    let [w1, b1, w2, b2] = params::head_slots(config);
    let hidden = g.affine(h, p[w1], p[b1])?;
    let hidden = g.relu(hidden);
    g.affine(hidden, p[w2], p[b2])
}

/// Records the full forward pass with every tensor as a trainable leaf.
pub fn record(task: &InterpolationTask, params: &ParamSet, config: &ModelConfig) -> Result<Recorded> {
    check_task(task, config, params)?;
    let (x, y) = inputs(task, config)?;
    let mut g = Graph::new();
    let pnodes: Vec<NodeId> = params.tensors.iter().map(|t| g.param(t.value.clone())).collect();
    let mut hidden = Vec::with_capacity(config.num_layers + 1);
    let mut attention = Vec::new();
    let mut head_outputs = Vec::new();
    let mut h = embed_nodes(&mut g, &pnodes, x, y, task.m())?;
    hidden.push(h);
    for layer in 0..config.num_layers {
        h = layer_nodes(
            &mut g,
            &pnodes,
            h,
            config,
            task.n(),
            LayerTrace {
                layer,
                attention: &mut attention,
                head_outputs: &mut head_outputs,
            },
        )?;
        hidden.push(h);
    }
    let predictions = head_nodes(&mut g, &pnodes, h, config)?;
    Ok(Recorded {
        graph: g,
        params: pnodes,
        predictions,
        hidden,
        attention,
        head_outputs,
    })
}

/// Initial point representations `H⁰`, `(n + m) × d_model`.
pub fn embed(task: &InterpolationTask, params: &ParamSet, config: &ModelConfig) -> Result<Matrix> {
    check_task(task, config, params)?;
    let (x, y) = inputs(task, config)?;
    let mut g = Graph::new();
    let pnodes: Vec<NodeId> = params.tensors.iter().map(|t| g.constant(t.value.clone())).collect();
    let h = embed_nodes(&mut g, &pnodes, x, y, task.m())?;
    Ok(g.value(h).clone())
}

/// Applies transformer layer `layer` to representations `h` whose first
/// `n_observed` rows are observed points.
pub fn partial_attention_layer(
    h: &Matrix,
    params: &ParamSet,
    config: &ModelConfig,
    layer: usize,
    n_observed: usize,
) -> Result<Matrix> {
    if h.cols() != config.d_model {
        return Err(NiertError::shape(format!(
            "layer input width {} vs d_model {}",
            h.cols(),
            config.d_model
        )));
    }
    if n_observed == 0 || n_observed > h.rows() || layer >= config.num_layers {
        return Err(NiertError::shape(format!(
            "layer {layer} with {n_observed} observed of {} rows",
            h.rows()
        )));
    }
    let mut g = Graph::new();
    let pnodes: Vec<NodeId> = params.tensors.iter().map(|t| g.constant(t.value.clone())).collect();
    let hn = g.constant(h.clone());
    let mut a = Vec::new();
    let mut o = Vec::new();
    let out = layer_nodes(
        &mut g,
        &pnodes,
        hn,
        config,
        n_observed,
        LayerTrace {
            layer,
            attention: &mut a,
            head_outputs: &mut o,
        },
    )?;
    Ok(g.value(out).clone())
}

/// Predictions for every observed and target point.
pub fn forward(
    task: &InterpolationTask,
    params: &ParamSet,
    config: &ModelConfig,
    capture_attention: bool,
) -> Result<ForwardOutput> {
    let rec = record(task, params, config)?;
    let g = &rec.graph;
    let attention = capture_attention.then(|| {
        rec.attention
            .iter()
            .map(|&(layer, head, id)| AttentionMap {
                layer,
                head,
                weights: g.value(id).clone(),
            })
            .collect()
    });
    Ok(ForwardOutput {
        predictions: g.value(rec.predictions).clone(),
        attention,
        hidden: rec.hidden.iter().map(|&id| g.value(id).clone()).collect(),
    })
}

fn row_weights(task: &InterpolationTask, scope: LossScope) -> Vec<f64> {
    let obs = match scope {
        LossScope::AllPoints => 1.0,
        LossScope::TargetsOnly => 0.0,
    };
    std::iter::repeat_n(obs, task.n())
        .chain(std::iter::repeat_n(1.0, task.m()))
        .collect()
}

fn truth_matrix(task: &InterpolationTask) -> Matrix {
    let rows = task.all_truth();
    Matrix::from_raw(rows.len(), task.d_y, rows.concat())
}

/// Number of `(point, channel)` terms a task contributes under `scope`.
pub fn loss_terms(task: &InterpolationTask, scope: LossScope) -> usize {
    let points = match scope {
        LossScope::AllPoints => task.n() + task.m(),
        LossScope::TargetsOnly => task.m(),
    };
    points * task.d_y
}

/// Mean pointwise error of `predictions` against the task's truth over all
/// `n + m` points and every output channel.
pub fn loss(predictions: &Matrix, task: &InterpolationTask, norm: ErrorNorm) -> Result<f64> {
    scoped_loss(predictions, task, norm, LossScope::AllPoints)
}

pub fn scoped_loss(
    predictions: &Matrix,
    task: &InterpolationTask,
    norm: ErrorNorm,
    scope: LossScope,
) -> Result<f64> {
    let truth = truth_matrix(task);
    predictions.same_shape(&truth)?;
    let weights = row_weights(task, scope);
    let mut total = 0.0;
    for (r, w) in weights.iter().enumerate() {
        for (p, t) in predictions.row(r).iter().zip(truth.row(r)) {
            let d = p - t;
            total += w * match norm {
                ErrorNorm::L1 => d.abs(),
                ErrorNorm::L2 => d * d,
            };
        }
    }
    Ok(total / loss_terms(task, scope) as f64)
}

/// Training objective of one task and its gradient with respect to every
/// parameter, flattened in [`ParamSet`] order.
///
/// The objective is `scale · Σ err` over the points selected by `scope`; the
/// trainer sets `scale` to one over the batch's total term count.
pub fn loss_and_grad(
    task: &InterpolationTask,
    params: &ParamSet,
    config: &ModelConfig,
    scope: LossScope,
    scale: f64,
) -> Result<(f64, Vec<f64>)> {
    let mut rec = record(task, params, config)?;
    let loss = rec.graph.weighted_error(
        rec.predictions,
        truth_matrix(task),
        row_weights(task, scope),
        config.loss_norm,
        scale,
    )?;
    let value = rec.graph.value(loss)[(0, 0)];
    let grads = rec.graph.backward(loss)?;
    let mut flat = Vec::with_capacity(params.num_scalars());
    for (t, &id) in params.tensors.iter().zip(&rec.params) {
        match grads.get(id) {
            Some(gm) => flat.extend_from_slice(gm.as_slice()),
            None => flat.extend(std::iter::repeat_n(0.0, t.value.len())),
        }
    }
    Ok((value, flat))
}

/// Loss value only, for finite-difference checks.
pub fn loss_value(
    task: &InterpolationTask,
    params: &ParamSet,
    config: &ModelConfig,
    scope: LossScope,
    scale: f64,
) -> Result<f64> {
    let out = forward(task, params, config, false)?;
    let mean = scoped_loss(&out.predictions, task, config.loss_norm, scope)?;
    Ok(mean * loss_terms(task, scope) as f64 * scale)
}
