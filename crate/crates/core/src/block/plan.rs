//! Network-level blocking plans.
//!
//! A [`BlockingPlan`] assigns every layer a grid and, for convolutions, the
//! per-block padding that keeps blocked output shapes equal to the
//! unblocked ones. Two pattern families generate plans:
//!
//! - fixed blocking keeps the block size constant across layers, so the
//!   block count shrinks after pooling (adjacent reduced-resolution blocks
//!   splice into a full-size block again);
//! - hierarchical blocking keeps the block count constant, so blocks shrink
//!   with resolution and the network decomposes into independent spatial
//!   sub-networks.
//!
//! Pooling executes per block. On grids whose bands divide the pooling
//! stride this equals whole-map pooling; on odd bands the blocked network
//! is its own reference, matching what a per-block accelerator computes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::format::PadMode;
use crate::graph::{LayerKind, NetWeights, NetworkDesc};
use crate::ops::{eltwise_add, maxpool2d};
use crate::tensor::Tensor4D;
use crate::BlockError;

use super::{block_conv2d, concat_blocks, split_blocks, BlockGrid, BlockPadding};

/// Which layers a pattern applies to, judged on the layer's input
/// resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "predicate", rename_all = "snake_case")]
pub enum BlockPredicate {
    All,
    /// Blocked iff the input resolution reaches the given extents, i.e. the
    /// layer can host at least one full block.
    MinResolution { h: usize, w: usize },
}

impl BlockPredicate {
    pub fn applies(&self, h: usize, w: usize) -> bool {
        match self {
            BlockPredicate::All => true,
            BlockPredicate::MinResolution { h: mh, w: mw } => h >= *mh && w >= *mw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatternKind {
    Fixed { t_r: usize, t_c: usize },
    Hierarchical { rows: usize, cols: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockingPattern {
    #[serde(flatten)]
    pub kind: PatternKind,
    pub applies_to: BlockPredicate,
    pub pad_mode: PadMode,
}

impl BlockingPattern {
    /// Fixed `t_r x t_c` blocking of every layer that can host a full block.
    pub fn fixed(t_r: usize, t_c: usize) -> Self {
        BlockingPattern {
            kind: PatternKind::Fixed { t_r, t_c },
            applies_to: BlockPredicate::MinResolution { h: t_r, w: t_c },
            pad_mode: PadMode::Zero,
        }
    }

    /// Constant `rows x cols` grid on every layer.
    pub fn hierarchical(rows: usize, cols: usize) -> Self {
        BlockingPattern {
            kind: PatternKind::Hierarchical { rows, cols },
            applies_to: BlockPredicate::All,
            pad_mode: PadMode::Zero,
        }
    }

    pub fn with_pad_mode(mut self, mode: PadMode) -> Self {
        self.pad_mode = mode;
        self
    }

    fn grid_for(&self, h: usize, w: usize) -> Result<BlockGrid, BlockError> {
        if !self.applies_to.applies(h, w) {
            return Ok(BlockGrid::whole(h, w));
        }
        match self.kind {
            PatternKind::Fixed { t_r, t_c } => BlockGrid::tiled(h, w, t_r, t_c),
            PatternKind::Hierarchical { rows, cols } => BlockGrid::even(h, w, rows, cols),
        }
    }
}

/// Grid and solved padding of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBlocking {
    pub layer: String,
    pub grid: BlockGrid,
    pub padding: Option<BlockPadding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockingPlan {
    pub layers: Vec<LayerBlocking>,
}

impl BlockingPlan {
    pub fn for_layer(&self, id: &str) -> Option<&LayerBlocking> {
        self.layers.iter().find(|l| l.layer == id)
    }

    pub fn to_json(&self) -> Result<String, BlockError> {
        serde_json::to_string_pretty(self).map_err(|e| BlockError::Inconsistent(e.to_string()))
    }

    pub fn from_json(json: &str) -> Result<Self, BlockError> {
        serde_json::from_str(json).map_err(|e| BlockError::Inconsistent(e.to_string()))
    }

    /// Fraction of conv layers with a non-trivial or pattern-selected grid.
    pub fn blocked_conv_ratio(&self, net: &NetworkDesc, pattern: &BlockingPattern) -> f64 {
        let shapes = match net.infer_shapes() {
            Ok(s) => s,
            Err(_) => return 0.0,
        };
        let mut convs = 0usize;
        let mut blocked = 0usize;
        for (layer, input) in net.layers.iter().zip(&shapes.input) {
            if layer.kind.is_conv() {
                convs += 1;
                if pattern.applies_to.applies(input.h, input.w) {
                    blocked += 1;
                }
            }
        }
        if convs == 0 {
            0.0
        } else {
            blocked as f64 / convs as f64
        }
    }
}

/// Generate a per-layer blocking plan for a network.
///
/// The walker tracks the blocked map extent (per-block pooling can deviate
/// from whole-map pooling on odd bands) and solves the block padding of
/// every blocked convolution. Infeasible layers are reported by id.
pub fn make_blocking_plan(net: &NetworkDesc, pattern: &BlockingPattern) -> Result<BlockingPlan, BlockError> {
    net.infer_shapes().map_err(|e| BlockError::Inconsistent(e.to_string()))?;
    let mut layers = Vec::with_capacity(net.layers.len());
    let (mut bh, mut bw) = (net.input_shape.h, net.input_shape.w);
    for layer in &net.layers {
        let infeasible = |reason: String| BlockError::PatternInfeasible {
            layer: layer.id.clone(),
            reason,
        };
        match &layer.kind {
            LayerKind::Input | LayerKind::Output | LayerKind::EltwiseAdd { .. } => {
                let grid = pattern.grid_for(bh, bw).map_err(|e| infeasible(e.to_string()))?;
                layers.push(LayerBlocking { layer: layer.id.clone(), grid, padding: None });
            }
            LayerKind::Conv { k, stride, padding, .. } => {
                let grid = pattern.grid_for(bh, bw).map_err(|e| infeasible(e.to_string()))?;
                let bpad = BlockPadding::solve(&grid, *k, *stride, *padding, pattern.pad_mode)
                    .map_err(|e| infeasible(e.to_string()))?;
                // apportionment preserves the unblocked output extent
                let out_h = crate::ops::conv_out_extent(bh, *k, *padding, *padding, *stride)
                    .map_err(|e| infeasible(e.to_string()))?;
                let out_w = crate::ops::conv_out_extent(bw, *k, *padding, *padding, *stride)
                    .map_err(|e| infeasible(e.to_string()))?;
                layers.push(LayerBlocking { layer: layer.id.clone(), grid, padding: Some(bpad) });
                bh = out_h;
                bw = out_w;
            }
            LayerKind::MaxPool { k, stride } => {
                let grid = pattern.grid_for(bh, bw).map_err(|e| infeasible(e.to_string()))?;
                let pooled = |bands: &[usize]| -> Result<usize, BlockError> {
                    bands
                        .iter()
                        .map(|&b| {
                            if b < *k {
                                Err(infeasible(format!("pool window {k} exceeds block extent {b}")))
                            } else {
                                Ok((b - k) / stride + 1)
                            }
                        })
                        .sum()
                };
                bh = pooled(&grid.row_band_sizes())?;
                bw = pooled(&grid.col_band_sizes())?;
                layers.push(LayerBlocking { layer: layer.id.clone(), grid, padding: None });
            }
        }
    }
    Ok(BlockingPlan { layers })
}

/// Run a network layer by layer under a blocking plan: every layer splits
/// its input along its grid, computes each block independently, and splices
/// the results. This is the functional reference the fused dataflow
/// simulator is checked against bit for bit.
pub fn blocked_forward(
    net: &NetworkDesc,
    weights: &NetWeights,
    input: &Tensor4D,
    plan: &BlockingPlan,
) -> Result<Tensor4D, BlockError> {
    if plan.layers.len() != net.layers.len() {
        return Err(BlockError::Inconsistent(format!(
            "plan covers {} layers, network has {}",
            plan.layers.len(),
            net.layers.len()
        )));
    }
    let mut residual_targets: BTreeMap<&str, Tensor4D> = BTreeMap::new();
    let needed: Vec<&str> = net
        .layers
        .iter()
        .filter_map(|l| match &l.kind {
            LayerKind::EltwiseAdd { residual_source } => Some(residual_source.as_str()),
            _ => None,
        })
        .collect();
    let mut current = input.clone();
    if needed.contains(&"") {
        return Err(BlockError::Inconsistent("empty residual source".into()));
    }
    for (layer, blocking) in net.layers.iter().zip(&plan.layers) {
        if blocking.layer != layer.id {
            return Err(BlockError::Inconsistent(format!(
                "plan layer {} does not match network layer {}",
                blocking.layer, layer.id
            )));
        }
        current = match &layer.kind {
            LayerKind::Input | LayerKind::Output => current,
            LayerKind::Conv { stride, depthwise, .. } => {
                let (w, b) = weights.for_layer(&layer.id).ok_or_else(|| {
                    BlockError::Inconsistent(format!("no weights for layer {}", layer.id))
                })?;
                let bpad = blocking.padding.as_ref().ok_or_else(|| {
                    BlockError::Inconsistent(format!("no block padding for conv {}", layer.id))
                })?;
                block_conv2d(&current, w, Some(b), &blocking.grid, bpad, *stride, *depthwise)?
            }
            LayerKind::MaxPool { k, stride } => {
                let blocks = split_blocks(&current, &blocking.grid)?;
                let pooled: Vec<Tensor4D> = blocks
                    .iter()
                    .map(|b| maxpool2d(b, *k, *stride))
                    .collect::<Result<_, _>>()?;
                let cols = blocking.grid.cols();
                let row_bands: Vec<usize> = pooled.iter().step_by(cols).map(|b| b.dims.h).collect();
                let col_bands: Vec<usize> = pooled[..cols].iter().map(|b| b.dims.w).collect();
                let out_grid = BlockGrid::from_bands(&row_bands, &col_bands)?;
                concat_blocks(&pooled, &out_grid)?
            }
            LayerKind::EltwiseAdd { residual_source } => {
                let operand = residual_targets.get(residual_source.as_str()).ok_or_else(|| {
                    BlockError::Inconsistent(format!(
                        "residual source {residual_source} not produced before {}",
                        layer.id
                    ))
                })?;
                eltwise_add(&current, operand)?
            }
        };
        if needed.contains(&layer.id.as_str()) {
            residual_targets.insert(layer.id.as_str(), current.clone());
        }
    }
    Ok(current)
}
