//! Conventional tiled accelerator schedule.
//!
//! The network executes pass by pass, one pass per fusion unit (a
//! convolution with its trailing pooling and element-wise layers folded
//! in). Every pass reads its input map from DRAM at full unhaloed size,
//! streams filter tiles per phase, and writes its output map back, so every
//! inter-pass map round-trips through DRAM. The separate overhead column
//! collects everything the tiled schedule moves beyond that model: halo
//! duplication of overlapped input tiles, channel-tile re-reads, and
//! partial-sum round trips.
//!
//! Two reference-hardware accounting conventions are exposed as options,
//! both off by default:
//!
//! - `fuse_head`: the first two convolution passes execute as one, so their
//!   boundary map never round-trips (profitable when the network input has
//!   very few channels);
//! - `host_residual_output`: a final element-wise add against the network
//!   input runs on the host during output DMA and contributes no
//!   accelerator traffic.

use crate::graph::{LayerKind, NetWeights, NetworkDesc};
use crate::ops::{conv2d_ref, eltwise_add, maxpool2d, ConvParams};
use crate::planner::fusion_units;
use crate::tensor::{Dims, Tensor4D};
use crate::{PadSpec, SimError};

use super::traffic::{TensorClass, TrafficReport};
use super::{BufferState, PhaseTrace, SimOutput, TraceEvent};

/// Spatial and channel tile extents of the baseline dataflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tiling {
    pub t_r: usize,
    pub t_c: usize,
    pub t_m: usize,
    pub t_n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineOptions {
    pub tiling: Tiling,
    /// Account the overheads of the tiled schedule (halo reads, channel
    /// re-reads, partial sums) in the overhead column.
    pub halo: bool,
    pub fuse_head: bool,
    pub host_residual_output: bool,
}

impl BaselineOptions {
    pub fn new(tiling: Tiling) -> Self {
        BaselineOptions { tiling, halo: true, fuse_head: false, host_residual_output: false }
    }
}

/// Passes are fusion units; `fuse_head` merges the first two.
fn build_passes(net: &NetworkDesc, fuse_head: bool) -> Vec<(usize, usize)> {
    let mut units = fusion_units(net);
    if fuse_head && units.len() >= 2 {
        let merged = (units[0].0, units[1].1);
        units.splice(0..2, [merged]);
    }
    units
}

/// True when the final layer is an element-wise add whose residual operand
/// is the network input; under `host_residual_output` that add moves to the
/// host.
fn host_residual_applies(net: &NetworkDesc) -> bool {
    let Some(last) = net.layers.last() else { return false };
    let LayerKind::EltwiseAdd { residual_source } = &last.kind else { return false };
    net.layer_index(residual_source)
        .map(|i| matches!(net.layers[i].kind, LayerKind::Input))
        .unwrap_or(false)
}

fn clamped_tiles(extent: usize, tile: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < extent {
        let len = tile.min(extent - start);
        out.push((start, len));
        start += len;
    }
    out
}

/// Input rows a halo-extended tile must fetch for `len` output rows
/// starting at `start`, clamped to the unpadded map.
fn halo_extent(start: usize, len: usize, stride: usize, k: usize, pad: usize, input: usize) -> usize {
    let lo = (start * stride) as i64 - pad as i64;
    let hi = ((start + len - 1) * stride + k - 1) as i64 - pad as i64;
    let lo = lo.max(0);
    let hi = hi.min(input as i64 - 1);
    if hi < lo {
        0
    } else {
        (hi - lo + 1) as usize
    }
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Traffic and trace of the baseline schedule, without tensor arithmetic.
pub fn simulate_baseline_shapes(
    net: &NetworkDesc,
    opts: &BaselineOptions,
) -> Result<(TrafficReport, PhaseTrace), SimError> {
    if !net.activation_format.is_fixed() || !net.weight_format.is_fixed() {
        return Err(SimError::RealFormat(net.activation_format));
    }
    let shapes = net.infer_shapes()?;
    let act_bits = net.activation_format.value_bits();
    let w_bits = net.weight_format.value_bits();
    let t = opts.tiling;
    if t.t_r == 0 || t.t_c == 0 || t.t_m == 0 || t.t_n == 0 {
        return Err(SimError::BadTiling { layer: "<tiling>".into(), reason: "zero tile extent".into() });
    }
    for layer in &net.layers {
        if let LayerKind::Conv { k, .. } = &layer.kind {
            if t.t_r < *k || t.t_c < *k {
                return Err(SimError::BadTiling {
                    layer: layer.id.clone(),
                    reason: format!("tile {}x{} smaller than kernel {}", t.t_r, t.t_c, k),
                });
            }
        }
    }

    let host_add = opts.host_residual_output && host_residual_applies(net);
    let passes = build_passes(net, opts.fuse_head);
    let mut traffic = TrafficReport::default();
    let mut trace = PhaseTrace::default();
    let mut step = 0usize;

    // capacities derived from the tiling; double buffering doubles the
    // input tile staging
    let mut max_in_tile = 0u64;
    let mut max_out_tile = 0u64;
    let mut max_w_tile = 0u64;
    for (idx, layer) in net.layers.iter().enumerate() {
        if let LayerKind::Conv { k, stride, depthwise, .. } = &layer.kind {
            let n_ch = if *depthwise { 1 } else { shapes.input[idx].c };
            let in_rows = (t.t_r - 1) * stride + k;
            let in_cols = (t.t_c - 1) * stride + k;
            max_in_tile = max_in_tile.max((in_rows * in_cols * t.t_n.min(n_ch.max(1))) as u64 * act_bits);
            max_out_tile = max_out_tile.max((t.t_r * t.t_c * t.t_m.min(shapes.output[idx].c.max(1))) as u64 * act_bits);
            max_w_tile = max_w_tile.max((t.t_m.min(shapes.output[idx].c.max(1)) * t.t_n.min(n_ch.max(1)) * k * k) as u64 * w_bits);
        }
    }
    let mut input_buf = BufferState::new("input", 2 * max_in_tile);
    let mut output_buf = BufferState::new("output", max_out_tile);
    let mut weight_buf = BufferState::new("weight", max_w_tile);

    for (pi, &(start, end)) in passes.iter().enumerate() {
        let first = start;
        let last = end - 1;
        let in_shape = shapes.input[first];
        let out_shape = shapes.output[last];
        let read_layer = net.layers[first..end]
            .iter()
            .find(|l| !matches!(l.kind, LayerKind::Input | LayerKind::Output))
            .unwrap_or(&net.layers[first]);
        let first_conv = (first..end).find(|&i| net.layers[i].kind.is_conv());

        // model read of the pass input map
        let in_bits = (in_shape.c * in_shape.h * in_shape.w) as u64 * act_bits;
        let in_class = if pi == 0 { TensorClass::InputImage } else { TensorClass::IntermediateFmap };
        traffic.add_read(&read_layer.id, in_class, in_bits);
        trace.events.push(TraceEvent::Load {
            tensor: format!("{}.in", read_layer.id),
            bits: in_bits,
        });

        for idx in first..end {
            let layer = &net.layers[idx];
            match &layer.kind {
                LayerKind::Conv { k, stride, padding, depthwise, .. } => {
                    let out = shapes.output[idx];
                    let inp = shapes.input[idx];
                    let n_ch = if *depthwise { 1 } else { inp.c };
                    let m = out.c;
                    let r_tiles = clamped_tiles(out.h, t.t_r);
                    let c_tiles = clamped_tiles(out.w, t.t_c);
                    let m_steps = ceil_div(m.max(1), t.t_m);
                    let n_steps = ceil_div(n_ch.max(1), t.t_n);

                    // per-phase filter streaming
                    let w_total = (r_tiles.len() * c_tiles.len() * m.max(1) * n_ch.max(1) * k * k) as u64 * w_bits;
                    traffic.add_read(&layer.id, TensorClass::Weights, w_total);

                    if opts.halo {
                        // halo-extended tile reads of the pass input, only
                        // for the conv that actually reads DRAM
                        if Some(idx) == first_conv {
                            let rows: usize =
                                r_tiles.iter().map(|&(s, l)| halo_extent(s, l, *stride, *k, *padding, inp.h)).sum();
                            let cols: usize =
                                c_tiles.iter().map(|&(s, l)| halo_extent(s, l, *stride, *k, *padding, inp.w)).sum();
                            let actual = (rows * cols * inp.c) as u64 * act_bits * m_steps as u64;
                            traffic.add_read(&layer.id, TensorClass::HaloOverhead, actual.saturating_sub(in_bits));
                        }
                        // partial-sum round trips when input channels are
                        // tiled and this conv's output leaves the chip
                        if idx == last && n_steps > 1 {
                            let out_bits = (out.c * out.h * out.w) as u64 * act_bits;
                            traffic.add_write(&layer.id, TensorClass::HaloOverhead, (n_steps as u64 - 1) * out_bits);
                            traffic.add_read(&layer.id, TensorClass::HaloOverhead, (n_steps as u64 - 1) * out_bits);
                        }
                    }

                    // occupancy: one staged tile pair, a filter tile, an
                    // output tile
                    let in_rows = (t.t_r - 1) * stride + k;
                    let in_cols = (t.t_c - 1) * stride + k;
                    let staged = (in_rows * in_cols * t.t_n.min(n_ch.max(1))) as u64 * act_bits;
                    input_buf.occupy(2 * staged.min(max_in_tile), step)?;
                    weight_buf.occupy((t.t_m.min(m.max(1)) * t.t_n.min(n_ch.max(1)) * k * k) as u64 * w_bits, step)?;
                    output_buf.occupy((t.t_r * t.t_c * t.t_m.min(m.max(1))) as u64 * act_bits, step)?;

                    for (ri, _) in r_tiles.iter().enumerate() {
                        for (ci, _) in c_tiles.iter().enumerate() {
                            trace.events.push(TraceEvent::Compute { layer: layer.id.clone(), block: (ri, ci) });
                            step += 1;
                        }
                    }
                }
                LayerKind::MaxPool { .. } => {
                    trace.events.push(TraceEvent::Compute { layer: layer.id.clone(), block: (0, 0) });
                    step += 1;
                }
                LayerKind::EltwiseAdd { residual_source } => {
                    let is_host = host_add && idx == net.layers.len() - 1;
                    if !is_host {
                        let src = net.layer_index(residual_source).expect("validated by shape inference");
                        let src_shape = shapes.output[src];
                        let bits = (src_shape.c * src_shape.h * src_shape.w) as u64 * act_bits;
                        let class = if matches!(net.layers[src].kind, LayerKind::Input) {
                            TensorClass::InputImage
                        } else {
                            TensorClass::IntermediateFmap
                        };
                        traffic.add_read(&layer.id, class, bits);
                        trace.events.push(TraceEvent::Load {
                            tensor: format!("{}.residual", layer.id),
                            bits,
                        });
                    }
                    trace.events.push(TraceEvent::Compute { layer: layer.id.clone(), block: (0, 0) });
                    step += 1;
                }
                LayerKind::Input | LayerKind::Output => {}
            }
        }

        // model write of the pass output map
        let out_bits = (out_shape.c * out_shape.h * out_shape.w) as u64 * act_bits;
        let out_class = if pi == passes.len() - 1 { TensorClass::Output } else { TensorClass::IntermediateFmap };
        let write_layer = &net.layers[last];
        traffic.add_write(&write_layer.id, out_class, out_bits);
        trace.events.push(TraceEvent::Store {
            tensor: format!("{}.out", write_layer.id),
            bits: out_bits,
        });
        trace.events.push(TraceEvent::BufferSwap);
    }
    Ok((traffic, trace))
}

/// The plain layer-by-layer chain over the reference kernels.
fn run_chain(net: &NetworkDesc, weights: &NetWeights, input: &Tensor4D) -> Result<Tensor4D, SimError> {
    let mut saved: std::collections::BTreeMap<&str, Tensor4D> = Default::default();
    let needed: Vec<&str> = net
        .layers
        .iter()
        .filter_map(|l| match &l.kind {
            LayerKind::EltwiseAdd { residual_source } => Some(residual_source.as_str()),
            _ => None,
        })
        .collect();
    let mut current = input.clone();
    for layer in &net.layers {
        current = match &layer.kind {
            LayerKind::Input | LayerKind::Output => current,
            LayerKind::Conv { k: _, stride, padding, depthwise, .. } => {
                let (w, b) = weights
                    .for_layer(&layer.id)
                    .ok_or_else(|| SimError::BadTiling { layer: layer.id.clone(), reason: "missing weights".into() })?;
                let params = ConvParams {
                    stride: *stride,
                    padding: PadSpec::uniform(*padding),
                    pad_mode: crate::PadMode::Zero,
                    depthwise: *depthwise,
                };
                conv2d_ref(&current, w, Some(b), &params)?
            }
            LayerKind::MaxPool { k, stride } => maxpool2d(&current, *k, *stride)?,
            LayerKind::EltwiseAdd { residual_source } => {
                let operand = saved.get(residual_source.as_str()).ok_or_else(|| {
                    SimError::BadTiling { layer: layer.id.clone(), reason: "residual source not yet produced".into() }
                })?;
                eltwise_add(&current, operand)?
            }
        };
        if needed.contains(&layer.id.as_str()) {
            saved.insert(layer.id.as_str(), current.clone());
        }
    }
    Ok(current)
}

/// Full baseline simulation: bit-exact chained output plus traffic and
/// trace of the tiled schedule.
pub fn simulate_baseline(
    net: &NetworkDesc,
    weights: &NetWeights,
    input: &Tensor4D,
    opts: &BaselineOptions,
) -> Result<SimOutput, SimError> {
    if !net.activation_format.is_fixed() || !net.weight_format.is_fixed() {
        return Err(SimError::RealFormat(net.activation_format));
    }
    let expected = Dims::new(1, net.input_shape.c, net.input_shape.h, net.input_shape.w);
    if input.dims != expected {
        return Err(SimError::Tensor(crate::TensorError::ShapeMismatch(format!(
            "input {} does not match network input {}",
            input.dims, expected
        ))));
    }
    let (traffic, trace) = simulate_baseline_shapes(net, opts)?;
    let output = run_chain(net, weights, input)?;
    Ok(SimOutput { output, traffic, trace })
}
