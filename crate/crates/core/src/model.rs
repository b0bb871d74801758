//! Detection-driven navigation policy network.
//!
//! Pipeline per step: assemble the detected-object matrix and the target
//! vector, score each detection against the target through a shared linear
//! projection (target attention), pool detection features by the attention
//! weights, compare observed and desired states through a weight-shared
//! Siamese branch pair combined by absolute difference, then feed-forward,
//! LSTM, and actor/critic heads. Ablation switches replace attention with
//! mean pooling and the difference with concatenation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{EmbedError, EmbeddingTable};
use crate::grad::{GradError, Mode, NodeId, ParamSet, Tape, Tensor};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Number of discrete actions the actor head scores.
pub const N_ACTIONS: usize = 6;

/// Desired on-screen state of the target: centered, a quarter of the frame.
pub const TARGET_X: f64 = 0.5;
pub const TARGET_Y: f64 = 0.5;
pub const TARGET_AREA: f64 = 0.25;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error("input width {got} does not match configured width {expected}")]
    WidthMismatch { got: usize, expected: usize },
}

/// One detected object: normalized image-plane box center and area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: String,
    pub x: f64,
    pub y: f64,
    pub area: f64,
}

/// Which modules are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    NoTa,
    NoSa,
    NoTaNoSa,
}

impl Ablation {
    pub fn attention(&self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoSa)
    }

    pub fn siamese(&self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoTa)
    }

    pub fn all() -> [Ablation; 4] {
        [
            Ablation::Full,
            Ablation::NoTa,
            Ablation::NoSa,
            Ablation::NoTaNoSa,
        ]
    }

    pub fn label(&self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoTa => "no_ta",
            Ablation::NoSa => "no_sa",
            Ablation::NoTaNoSa => "no_ta_no_sa",
        }
    }
}

/// Network dimensions and regularization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub d_att: usize,
    pub d_l1: usize,
    pub d_sa: usize,
    pub d_ffn: usize,
    pub d_hidden: usize,
    pub dropout: f64,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk(32)
    }
}

impl ModelConfig {
    /// Small dimensions for desk-scale experiments.
    pub fn desk(embed_dim: usize) -> Self {
        ModelConfig {
            embed_dim,
            d_att: 16,
            d_l1: 32,
            d_sa: 32,
            d_ffn: 64,
            d_hidden: 64,
            dropout: 0.25,
            ablation: Ablation::Full,
        }
    }

    /// Dimensions sized for 300-d word embeddings; the scalar count lands
    /// near three million.
    pub fn full_scale() -> Self {
        ModelConfig {
            embed_dim: 300,
            d_att: 128,
            d_l1: 256,
            d_sa: 256,
            d_ffn: 512,
            d_hidden: 600,
            dropout: 0.25,
            ablation: Ablation::Full,
        }
    }

    /// Tiny dimensions for finite-difference checks.
    pub fn tiny(embed_dim: usize) -> Self {
        ModelConfig {
            embed_dim,
            d_att: 4,
            d_l1: 8,
            d_sa: 8,
            d_ffn: 8,
            d_hidden: 8,
            dropout: 0.0,
            ablation: Ablation::Full,
        }
    }

    /// Width of one detection row: geometry (x, y, area) plus embedding.
    pub fn input_width(&self) -> usize {
        3 + self.embed_dim
    }
}

/// Recurrent carry between steps; reset to zeros at episode start.
#[derive(Debug, Clone)]
pub struct HiddenState<S: Scalar> {
    pub h: Tensor<S>,
    pub c: Tensor<S>,
}

impl<S: Scalar> HiddenState<S> {
    pub fn zeros(hidden: usize) -> Self {
        HiddenState {
            h: Tensor::zeros(1, hidden),
            c: Tensor::zeros(1, hidden),
        }
    }
}

/// Per-step attention record for inspection and rendering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub detections: Vec<Detection>,
    pub v_corr: Vec<f64>,
    pub v_att: Vec<f64>,
}

/// Actor logits and critic value extracted from a forward pass.
#[derive(Debug, Clone)]
pub struct PolicyOutput<S: Scalar> {
    pub logits: Vec<S>,
    pub value: S,
}

/// Tape nodes produced by one forward step.
#[derive(Debug, Clone, Copy)]
pub struct StepNodes {
    pub logits: NodeId,
    pub value: NodeId,
    pub h: NodeId,
    pub c: NodeId,
    /// Post-dropout state representation entering the feed-forward trunk.
    pub representation: NodeId,
}

/// Resolved tape node ids for every registered parameter.
#[derive(Debug, Clone)]
pub struct ParamIds {
    ta: Option<(NodeId, NodeId)>,
    l1: (NodeId, NodeId),
    siam: (NodeId, NodeId),
    merge: Option<(NodeId, NodeId)>,
    ffn: (NodeId, NodeId),
    lstm: (NodeId, NodeId, NodeId),
    actor: (NodeId, NodeId),
    critic: (NodeId, NodeId),
}

impl ParamIds {
    /// Target-attention (weight, bias); None when attention is ablated.
    pub fn ta(&self) -> Option<(NodeId, NodeId)> {
        self.ta
    }

    /// Linear1 feature projection (weight, bias).
    pub fn l1(&self) -> (NodeId, NodeId) {
        self.l1
    }

    /// Shared Siamese branch (weight, bias).
    pub fn siam(&self) -> (NodeId, NodeId) {
        self.siam
    }
}

/// Build the n x (3+E) detected-object matrix: one row [x, y, area, w] per
/// detection in input order; no detections encode as a single all-zero row.
pub fn build_detected_matrix<S: Scalar>(
    detections: &[Detection],
    table: &EmbeddingTable,
) -> Result<Tensor<S>, ModelError> {
    let width = 3 + table.dim();
    if detections.is_empty() {
        return Ok(Tensor::zeros(1, width));
    }
    let mut rows = Vec::with_capacity(detections.len());
    for d in detections {
        let emb = table.embedding_of(&d.class)?;
        let mut row = Vec::with_capacity(width);
        row.push(S::from_f64(d.x));
        row.push(S::from_f64(d.y));
        row.push(S::from_f64(d.area));
        row.extend(emb.iter().map(|&v| S::from_f64(v)));
        rows.push(row);
    }
    Tensor::from_rows(&rows).map_err(ModelError::Grad)
}

/// Desired-state row for the target class: [0.5, 0.5, 0.25, w_t].
pub fn build_target_vector<S: Scalar>(
    target: &str,
    table: &EmbeddingTable,
) -> Result<Tensor<S>, ModelError> {
    let emb = table.embedding_of(target)?;
    let mut row = Vec::with_capacity(3 + table.dim());
    row.push(S::from_f64(TARGET_X));
    row.push(S::from_f64(TARGET_Y));
    row.push(S::from_f64(TARGET_AREA));
    row.extend(emb.iter().map(|&v| S::from_f64(v)));
    Ok(Tensor::row(row))
}

/// Target attention: the same shared projection maps the target row and
/// every detection row into a common space, correspondence scores are their
/// inner products, and the softmax of the scores weights the Linear1
/// features into a single pooled vector.
///
/// Returns (correspondence, attention, pooled) node ids.
pub fn target_attention<S: Scalar>(
    tape: &mut Tape<S>,
    ta_w: NodeId,
    ta_b: NodeId,
    l1_w: NodeId,
    l1_b: NodeId,
    m_d: NodeId,
    v_t: NodeId,
) -> Result<(NodeId, NodeId, NodeId), GradError> {
    if tape.value(m_d).cols() != tape.value(v_t).cols() {
        return Err(GradError::ShapeMismatch {
            op: "target_attention",
            lhs: tape.value(m_d).shape().to_vec(),
            rhs: tape.value(v_t).shape().to_vec(),
        });
    }
    let proj_t = tape.linear(v_t, ta_w, ta_b)?;
    let proj_d = tape.linear(m_d, ta_w, ta_b)?;
    let v_corr = tape.matmul_nt(proj_t, proj_d)?;
    let v_att = tape.softmax_row(v_corr)?;
    let m_l1 = tape.linear(m_d, l1_w, l1_b)?;
    let v_l1 = tape.matmul(v_att, m_l1)?;
    Ok((v_corr, v_att, v_l1))
}

/// Siamese comparison: both inputs pass through one weight-shared branch
/// (linear + ReLU); the representation is the absolute difference of the
/// branch outputs, with inverted dropout in train mode.
pub fn siamese_diff<S: Scalar>(
    tape: &mut Tape<S>,
    siam_w: NodeId,
    siam_b: NodeId,
    obs: NodeId,
    target: NodeId,
    dropout: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<NodeId, GradError> {
    let bo = {
        let lin = tape.linear(obs, siam_w, siam_b)?;
        tape.relu(lin)?
    };
    let bt = {
        let lin = tape.linear(target, siam_w, siam_b)?;
        tape.relu(lin)?
    };
    let d = tape.sub(bo, bt)?;
    let a = tape.abs(d)?;
    tape.dropout(a, dropout, mode, rng)
}

/// The policy network: configuration plus forward construction. Parameters
/// live in a [`ParamSet`] so snapshots are plain clones.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    pub cfg: ModelConfig,
}

impl PolicyNet {
    pub fn new(cfg: ModelConfig) -> Self {
        PolicyNet { cfg }
    }

    /// Fresh parameters: uniform Kaiming-style fan-in bounds for linear
    /// weights, +-1/sqrt(fan_in) for LSTM weights, zero biases.
    pub fn init_params<S: Scalar>(&self, seed: u64) -> ParamSet<S> {
        let cfg = &self.cfg;
        let w = cfg.input_width();
        let mut rng = Rng::new(seed);
        let mut params = ParamSet::new();

        let linear_init =
            |params: &mut ParamSet<S>, rng: &mut Rng, name: &str, fan_in: usize, fan_out: usize| {
                let bound = (6.0 / fan_in as f64).sqrt();
                let data: Vec<S> = (0..fan_in * fan_out)
                    .map(|_| S::from_f64(rng.uniform(-bound, bound)))
                    .collect();
                params
                    .register(
                        &format!("{name}.w"),
                        Tensor::new(vec![fan_in, fan_out], data).expect("init shape"),
                    )
                    .expect("unique");
                params
                    .register(&format!("{name}.b"), Tensor::zeros(1, fan_out))
                    .expect("unique");
            };

        if cfg.ablation.attention() {
            linear_init(&mut params, &mut rng, "ta", w, cfg.d_att);
        }
        linear_init(&mut params, &mut rng, "l1", w, cfg.d_l1);
        linear_init(&mut params, &mut rng, "siam", cfg.d_l1, cfg.d_sa);
        if !cfg.ablation.siamese() {
            linear_init(&mut params, &mut rng, "merge", 2 * cfg.d_sa, cfg.d_sa);
        }
        linear_init(&mut params, &mut rng, "ffn", cfg.d_sa, cfg.d_ffn);

        let lstm_bound_ih = 1.0 / (cfg.d_ffn as f64).sqrt();
        let lstm_bound_hh = 1.0 / (cfg.d_hidden as f64).sqrt();
        let h4 = 4 * cfg.d_hidden;
        let w_ih: Vec<S> = (0..cfg.d_ffn * h4)
            .map(|_| S::from_f64(rng.uniform(-lstm_bound_ih, lstm_bound_ih)))
            .collect();
        params
            .register(
                "lstm.w_ih",
                Tensor::new(vec![cfg.d_ffn, h4], w_ih).expect("init shape"),
            )
            .expect("unique");
        let w_hh: Vec<S> = (0..cfg.d_hidden * h4)
            .map(|_| S::from_f64(rng.uniform(-lstm_bound_hh, lstm_bound_hh)))
            .collect();
        params
            .register(
                "lstm.w_hh",
                Tensor::new(vec![cfg.d_hidden, h4], w_hh).expect("init shape"),
            )
            .expect("unique");
        params
            .register("lstm.b", Tensor::zeros(1, h4))
            .expect("unique");

        linear_init(&mut params, &mut rng, "actor", cfg.d_hidden, N_ACTIONS);
        linear_init(&mut params, &mut rng, "critic", cfg.d_hidden, 1);
        params
    }

    /// Map registered tape nodes back to named roles.
    pub fn resolve_ids<S: Scalar>(
        &self,
        params: &ParamSet<S>,
        ids: &[NodeId],
    ) -> ParamIds {
        let pick = |name: &str| ids[params.slot(name).expect("param registered")];
        let pair = |name: &str| (pick(&format!("{name}.w")), pick(&format!("{name}.b")));
        ParamIds {
            ta: self.cfg.ablation.attention().then(|| pair("ta")),
            l1: pair("l1"),
            siam: pair("siam"),
            merge: (!self.cfg.ablation.siamese()).then(|| pair("merge")),
            ffn: pair("ffn"),
            lstm: (pick("lstm.w_ih"), pick("lstm.w_hh"), pick("lstm.b")),
            actor: pair("actor"),
            critic: pair("critic"),
        }
    }

    /// One forward step on the tape. `h`/`c` are the recurrent carry nodes;
    /// the attention trace is emitted only when attention is active.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_on_tape<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        ids: &ParamIds,
        detections: &[Detection],
        target: &str,
        table: &EmbeddingTable,
        h: NodeId,
        c: NodeId,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(StepNodes, Option<AttentionTrace>), ModelError> {
        let cfg = &self.cfg;
        let m_d_t = build_detected_matrix::<S>(detections, table)?;
        if m_d_t.cols() != cfg.input_width() {
            return Err(ModelError::WidthMismatch {
                got: m_d_t.cols(),
                expected: cfg.input_width(),
            });
        }
        let v_t_t = build_target_vector::<S>(target, table)?;
        let m_d = tape.constant(m_d_t).map_err(ModelError::Grad)?;
        let v_t = tape.constant(v_t_t).map_err(ModelError::Grad)?;
        self.trunk_from_inputs(tape, ids, detections, m_d, v_t, h, c, mode, rng)
    }

    /// Forward from already-recorded input nodes (lets tests drive the
    /// pipeline with custom matrices).
    #[allow(clippy::too_many_arguments)]
    pub fn trunk_from_inputs<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        ids: &ParamIds,
        detections: &[Detection],
        m_d: NodeId,
        v_t: NodeId,
        h: NodeId,
        c: NodeId,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(StepNodes, Option<AttentionTrace>), ModelError> {
        let cfg = &self.cfg;
        let (l1_w, l1_b) = ids.l1;

        // Observed-state vector: attention-pooled or plain mean of features.
        let (v_l1, trace) = if let Some((ta_w, ta_b)) = ids.ta {
            let (v_corr, v_att, v_l1) =
                target_attention(tape, ta_w, ta_b, l1_w, l1_b, m_d, v_t)
                    .map_err(ModelError::Grad)?;
            let trace = AttentionTrace {
                detections: detections.to_vec(),
                v_corr: tape
                    .value(v_corr)
                    .data()
                    .iter()
                    .map(|v| Scalar::to_f64(*v))
                    .collect(),
                v_att: tape
                    .value(v_att)
                    .data()
                    .iter()
                    .map(|v| Scalar::to_f64(*v))
                    .collect(),
            };
            (v_l1, Some(trace))
        } else {
            let m_l1 = tape.linear(m_d, l1_w, l1_b).map_err(ModelError::Grad)?;
            let pooled = tape.mean_rows(m_l1).map_err(ModelError::Grad)?;
            (pooled, None)
        };

        // Desired-state vector through the same Linear1.
        let t_l1 = tape.linear(v_t, l1_w, l1_b).map_err(ModelError::Grad)?;

        let (siam_w, siam_b) = ids.siam;
        let rep = if cfg.ablation.siamese() {
            siamese_diff(
                tape, siam_w, siam_b, v_l1, t_l1, cfg.dropout, mode, rng,
            )
            .map_err(ModelError::Grad)?
        } else {
            // Ablated combiner: both branch outputs concatenated, then a
            // width-adapting linear keeps downstream dimensions unchanged.
            let bo = {
                let lin = tape.linear(v_l1, siam_w, siam_b).map_err(ModelError::Grad)?;
                tape.relu(lin).map_err(ModelError::Grad)?
            };
            let bt = {
                let lin = tape.linear(t_l1, siam_w, siam_b).map_err(ModelError::Grad)?;
                tape.relu(lin).map_err(ModelError::Grad)?
            };
            let cat = tape.concat_cols(bo, bt).map_err(ModelError::Grad)?;
            let (mw, mb) = ids.merge.expect("merge params exist when siamese is off");
            let merged = tape.linear(cat, mw, mb).map_err(ModelError::Grad)?;
            tape.dropout(merged, cfg.dropout, mode, rng)
                .map_err(ModelError::Grad)?
        };

        let (ffn_w, ffn_b) = ids.ffn;
        let ffn = {
            let lin = tape.linear(rep, ffn_w, ffn_b).map_err(ModelError::Grad)?;
            tape.relu(lin).map_err(ModelError::Grad)?
        };

        let (w_ih, w_hh, lb) = ids.lstm;
        let (h2, c2) = tape
            .lstm_step(ffn, h, c, w_ih, w_hh, lb)
            .map_err(ModelError::Grad)?;

        let (aw, ab) = ids.actor;
        let logits = tape.linear(h2, aw, ab).map_err(ModelError::Grad)?;
        let (cw, cb) = ids.critic;
        let value = tape.linear(h2, cw, cb).map_err(ModelError::Grad)?;

        Ok((
            StepNodes {
                logits,
                value,
                h: h2,
                c: c2,
                representation: rep,
            },
            trace,
        ))
    }

    /// Convenience single-step forward outside training: fresh tape,
    /// hidden state carried as plain tensors.
    pub fn step<S: Scalar>(
        &self,
        params: &ParamSet<S>,
        detections: &[Detection],
        target: &str,
        table: &EmbeddingTable,
        hidden: &HiddenState<S>,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(PolicyOutput<S>, HiddenState<S>, Option<AttentionTrace>), ModelError> {
        let mut tape = Tape::new();
        let ids = tape.register_params(params).map_err(ModelError::Grad)?;
        let ids = self.resolve_ids(params, &ids);
        let h = tape.constant(hidden.h.clone()).map_err(ModelError::Grad)?;
        let c = tape.constant(hidden.c.clone()).map_err(ModelError::Grad)?;
        let (nodes, trace) = self.forward_on_tape(
            &mut tape, &ids, detections, target, table, h, c, mode, rng,
        )?;
        let out = PolicyOutput {
            logits: tape.value(nodes.logits).data().to_vec(),
            value: tape.value(nodes.value).item(),
        };
        let hidden = HiddenState {
            h: tape.value(nodes.h).clone(),
            c: tape.value(nodes.c).clone(),
        };
        Ok((out, hidden, trace))
    }
}
