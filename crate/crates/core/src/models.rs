//! Node-classification backbones built on [`ValueGraph`].
//!
//! Every backbone stacks `layers` blocks. Hidden blocks apply
//! `propagate → (+ residual) → normalization → relu → dropout`; the last
//! block only propagates, producing `C` logits per node. Propagation is
//!
//! * MLP:  `H W + b`
//! * GCN:  `Â (H W) + b`
//! * SAGE: `H W_self + M (H W_nbr) + b`, `M` the neighbor-mean operator
//!
//! Residual connections are added on hidden blocks whose input and output
//! widths match, i.e. every hidden block except the first.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, ValueGraph};
use crate::error::{Error, TensorError};
use crate::graph::GraphOperators;
use crate::nn::{derive_seed, dropout_mask, Mode, NormAxis, NormStats};
use crate::tensor::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Mlp,
    Gcn,
    Sage,
}

impl std::fmt::Display for Backbone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mlp => "mlp",
            Self::Gcn => "gcn",
            Self::Sage => "sage",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    None,
    Layer,
    Batch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub backbone: Backbone,
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub norm: NormKind,
    pub residual: bool,
    pub num_classes: usize,
}

impl ArchConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.layers == 0 {
            return Err(Error::Config("layers must be >= 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden dim must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Indices into [`ModelParams::tensors`] for one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSlots {
    pub weight: usize,
    pub weight_nbr: Option<usize>,
    pub bias: usize,
    pub gamma: Option<usize>,
    pub beta: Option<usize>,
}

/// Trainable tensors plus the batch-norm statistics from the last
/// training-mode forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub tensors: Vec<DenseMatrix>,
    pub layout: Vec<LayerSlots>,
    pub norm_stats: Vec<Option<NormStats>>,
}

impl ModelParams {
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data().len()).sum()
    }

    /// All parameters concatenated in tensor order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// Overwrites every parameter from a flat buffer produced by [`Self::flatten`].
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<(), TensorError> {
        if flat.len() != self.num_scalars() {
            return Err(TensorError::Shape(format!(
                "flat buffer of {} for {} parameters",
                flat.len(),
                self.num_scalars()
            )));
        }
        let mut off = 0;
        for t in &mut self.tensors {
            let n = t.data().len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }
}

/// Uniform fan-in initialization: weights in `(-1/√fan_in, 1/√fan_in)`,
/// biases zero, normalization affine `γ = 1`, `β = 0`.
pub fn init_model(config: &ArchConfig, feature_dim: usize, seed: u64) -> Result<ModelParams, Error> {
    config.validate()?;
    if feature_dim == 0 {
        return Err(Error::Config("feature dim must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = Vec::new();
    let mut layout = Vec::new();
    let uniform = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
        let bound = 1.0 / (rows as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
        DenseMatrix::from_vec(rows, cols, data).expect("sized buffer")
    };
    for i in 0..config.layers {
        let fan_in = if i == 0 { feature_dim } else { config.hidden };
        let last = i + 1 == config.layers;
        let out = if last { config.num_classes } else { config.hidden };
        let mut push = |t: DenseMatrix| {
            tensors.push(t);
            tensors.len() - 1
        };
        let weight = push(uniform(fan_in, out, &mut rng));
        let weight_nbr = (config.backbone == Backbone::Sage).then(|| push(uniform(fan_in, out, &mut rng)));
        let bias = push(DenseMatrix::zeros(1, out));
        let (gamma, beta) = if !last && config.norm != NormKind::None {
            (
                Some(push(DenseMatrix::filled(1, out, 1.0))),
                Some(push(DenseMatrix::zeros(1, out))),
            )
        } else {
            (None, None)
        };
        layout.push(LayerSlots {
            weight,
            weight_nbr,
            bias,
            gamma,
            beta,
        });
    }
    let norm_stats = vec![None; config.layers];
    Ok(ModelParams {
        tensors,
        layout,
        norm_stats,
    })
}

/// Result of one recorded forward pass.
#[derive(Debug)]
pub struct ForwardOutput {
    pub logits: NodeId,
    /// Graph node of each entry of [`ModelParams::tensors`].
    pub params: Vec<NodeId>,
    /// Batch statistics computed in this pass, per block.
    pub norm_stats: Vec<Option<NormStats>>,
}

/// Records a full forward pass onto `g`.
///
/// `dropout_seed` selects the dropout masks; block `i` uses
/// `derive_seed([dropout_seed, i])`.
pub fn forward(
    g: &mut ValueGraph,
    config: &ArchConfig,
    params: &ModelParams,
    ops: &GraphOperators,
    x: &DenseMatrix,
    mode: Mode,
    dropout_seed: u64,
) -> Result<ForwardOutput, Error> {
    let first = params.tensors[params.layout[0].weight].rows();
    if x.cols() != first {
        return Err(TensorError::Shape(format!(
            "features have {} columns, model expects {first}",
            x.cols()
        ))
        .into());
    }
    if config.backbone != Backbone::Mlp && x.rows() != ops.gcn.matrix().rows() {
        return Err(TensorError::Shape(format!(
            "{} feature rows for a {}-node graph",
            x.rows(),
            ops.gcn.matrix().rows()
        ))
        .into());
    }
    let param_nodes: Vec<NodeId> = params.tensors.iter().map(|t| g.param(t.clone())).collect();
    let mut h = g.constant(x.clone());
    let mut norm_stats = vec![None; config.layers];

    for (i, slots) in params.layout.iter().enumerate() {
        let last = i + 1 == config.layers;
        let w = param_nodes[slots.weight];
        let mut z = match config.backbone {
            Backbone::Mlp => g.matmul(h, w)?,
            Backbone::Gcn => {
                let hw = g.matmul(h, w)?;
                g.spmm(&ops.gcn, hw)?
            }
            Backbone::Sage => {
                let own = g.matmul(h, w)?;
                let wn = param_nodes[slots.weight_nbr.expect("sage layout has neighbor weight")];
                let hn = g.matmul(h, wn)?;
                let agg = g.spmm(&ops.mean, hn)?;
                g.add(own, agg)?
            }
        };
        z = g.add_bias(z, param_nodes[slots.bias])?;
        if last {
            h = z;
            break;
        }
        if config.residual && i > 0 {
            z = g.add(z, h)?;
        }
        if let (Some(gi), Some(bi)) = (slots.gamma, slots.beta) {
            let (axis, frozen) = match config.norm {
                NormKind::Layer => (NormAxis::Row, None),
                NormKind::Batch if mode == Mode::Eval => (NormAxis::Col, params.norm_stats[i].as_ref()),
                _ => (NormAxis::Col, None),
            };
            let (out, stats) = g.norm(z, param_nodes[gi], param_nodes[bi], axis, frozen)?;
            if config.norm == NormKind::Batch && mode == Mode::Train {
                norm_stats[i] = Some(stats);
            }
            z = out;
        }
        z = g.relu(z);
        if mode == Mode::Train && config.dropout > 0.0 {
            let (r, c) = g.value(z).shape();
            let mask = dropout_mask(r, c, config.dropout, derive_seed(&[dropout_seed, i as u64]))?;
            z = g.dropout(z, mask)?;
        }
        h = z;
    }
    Ok(ForwardOutput {
        logits: h,
        params: param_nodes,
        norm_stats,
    })
}

/// Eval-mode logits without keeping the graph around.
pub fn predict_logits(
    config: &ArchConfig,
    params: &ModelParams,
    ops: &GraphOperators,
    x: &DenseMatrix,
) -> Result<DenseMatrix, Error> {
    let mut g = ValueGraph::new();
    let out = forward(&mut g, config, params, ops, x, Mode::Eval, 0)?;
    Ok(g.value(out.logits).clone())
}
