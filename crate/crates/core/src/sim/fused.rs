//! Fused block-convolution schedule.
//!
//! Each group of the fusion plan processes the network block by block:
//! a block is loaded once, flows through every layer of the group via two
//! ping-pong intermediate buffers, and only the group's final output leaves
//! the chip. Fixed-blocking merges assemble pooled blocks into full-size
//! blocks inside extra buffers; residual operands within a group are block
//! copies in extra buffers. Block padding is applied by index manipulation
//! (`conv2d_virtual`), so padded tiles never occupy modeled memory; the
//! functional result still matches the materialized-pad kernels bit for
//! bit.
//!
//! Off-chip traffic: the network weights count once at startup, the group
//! entry map is read block by block, each internal group boundary is
//! written and re-read in full, residual operands from earlier groups are
//! re-read, and the network output is written once. A plan with a single
//! full-network group therefore moves no intermediate feature map at all.

use std::collections::BTreeMap;

use crate::block::{concat_blocks, BlockGrid, BlockingPlan};
use crate::graph::{LayerKind, NetWeights, NetworkDesc};
use crate::ops::{conv2d_virtual, eltwise_add, maxpool2d, ConvParams};
use crate::planner::{
    fit_channel_tiles, group_buffers, plan_layout, ExtraKind, FusionPlan, HardwareBudget,
    PlanLayout,
};
use crate::tensor::{Dims, Tensor4D};
use crate::SimError;

use super::traffic::{TensorClass, TrafficReport};
use super::{BufferState, PhaseTrace, SimOutput, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FusedOptions {
    /// Model a third intermediate buffer holding the prefetched next block.
    pub prefetch: bool,
    /// A final element-wise add against the network input runs host-side
    /// and contributes no accelerator traffic.
    pub host_residual_output: bool,
}

struct Segment {
    /// Layer indices covered, in order.
    layers: Vec<usize>,
    /// Re-tiling after the segment, if any.
    merge: Option<crate::planner::MergeInfo>,
}

fn band_at(bands: &[usize], idx: usize) -> (usize, usize) {
    let start: usize = bands[..idx].iter().sum();
    (start, bands[idx])
}

fn build_segments(layout: &PlanLayout, group: usize) -> Vec<Segment> {
    let mut segments: Vec<Segment> = Vec::new();
    let mut current = Segment { layers: Vec::new(), merge: None };
    for (ix, layer) in layout.layers.iter().enumerate() {
        if layer.group != group {
            continue;
        }
        current.layers.push(ix);
        if let Some(m) = &layer.merge_after {
            current.merge = Some(m.clone());
            segments.push(std::mem::replace(&mut current, Segment { layers: Vec::new(), merge: None }));
        }
    }
    if !current.layers.is_empty() {
        segments.push(current);
    }
    segments
}

fn validate_blocking(layout: &PlanLayout, blocking: &BlockingPlan) -> Result<(), SimError> {
    if blocking.layers.len() != layout.layers.len() {
        return Err(SimError::PlanInconsistent {
            layer: "<plan>".into(),
            reason: format!(
                "blocking plan covers {} layers, fusion plan covers {}",
                blocking.layers.len(),
                layout.layers.len()
            ),
        });
    }
    for (l, b) in layout.layers.iter().zip(&blocking.layers) {
        if b.layer != l.id {
            return Err(SimError::PlanInconsistent {
                layer: b.layer.clone(),
                reason: format!("expected layer {}", l.id),
            });
        }
        if b.grid.row_band_sizes() != l.in_row_bands || b.grid.col_band_sizes() != l.in_col_bands {
            return Err(SimError::PlanInconsistent {
                layer: l.id.clone(),
                reason: format!(
                    "blocking grid bands {:?}x{:?} do not match the plan's {:?}x{:?}",
                    b.grid.row_band_sizes(),
                    b.grid.col_band_sizes(),
                    l.in_row_bands,
                    l.in_col_bands
                ),
            });
        }
    }
    Ok(())
}

struct FusedWalk<'a> {
    net: &'a NetworkDesc,
    layout: PlanLayout,
    blocking: &'a BlockingPlan,
    weights: Option<&'a NetWeights>,
    budget: &'a HardwareBudget,
    opts: FusedOptions,
    act_bits: u64,
    traffic: TrafficReport,
    trace: PhaseTrace,
    intermediates: [BufferState; 3],
    ping: usize,
    extras: BTreeMap<(usize, ExtraKind), BufferState>,
    weight_buf: BufferState,
    /// In-group residual consumers per source layer index.
    residual_consumers: BTreeMap<usize, Vec<usize>>,
    /// Off-chip maps available for residual reads: the network input and
    /// every group exit, by producing layer index.
    dram: BTreeMap<usize, Tensor4D>,
    /// In-group residual copies, by consuming add layer index.
    residual_store: BTreeMap<usize, Tensor4D>,
}

impl<'a> FusedWalk<'a> {
    fn step(&self) -> usize {
        self.trace.events.len()
    }

    fn block_bits(&self, rows: usize, cols: usize, ch: usize) -> u64 {
        (rows * cols * ch) as u64 * self.act_bits
    }

    /// Run one block through a segment, recursing into the previous
    /// segment to assemble merged inputs. Returns the block's tensor in
    /// functional mode.
    #[allow(clippy::too_many_arguments)]
    fn produce(
        &mut self,
        group: usize,
        segments: &[Segment],
        seg: usize,
        bi: usize,
        bj: usize,
        entry: Option<&Tensor4D>,
        entry_class: TensorClass,
    ) -> Result<Option<Tensor4D>, SimError> {
        let mut block: Option<Tensor4D>;
        let mut merge_key = None;
        if seg == 0 {
            let g = &self.layout.groups[group];
            let (r0, rlen) = band_at(&g.entry_row_bands, bi);
            let (c0, clen) = band_at(&g.entry_col_bands, bj);
            let first_id = self.layout.layers[segments[0].layers[0]].id.clone();
            let bits = self.block_bits(rlen, clen, g.entry_ch);
            self.traffic.add_read(&first_id, entry_class, bits);
            self.trace.events.push(TraceEvent::Load {
                tensor: format!("{first_id}.in.block({bi},{bj})"),
                bits,
            });
            let step = self.step();
            self.intermediates[self.ping].occupy(bits, step)?;
            block = match entry {
                Some(t) => Some(t.slice_spatial(r0, rlen, c0, clen).map_err(SimError::Tensor)?),
                None => None,
            };
        } else {
            // assemble the merged block from the previous segment's output
            let prev = &segments[seg - 1];
            let prev_exit = *prev.layers.last().unwrap();
            let merge = prev.merge.as_ref().expect("segment boundary is a merge");
            let fine_rows: Vec<usize> =
                merge.row_map.iter().enumerate().filter(|(_, &t)| t == bi).map(|(i, _)| i).collect();
            let fine_cols: Vec<usize> =
                merge.col_map.iter().enumerate().filter(|(_, &t)| t == bj).map(|(i, _)| i).collect();
            let prev_rows = self.layout.layers[prev_exit].out_row_bands.clone();
            let prev_cols = self.layout.layers[prev_exit].out_col_bands.clone();
            let prev_ch = self.layout.layers[prev_exit].out_ch;
            let key = (prev_exit, ExtraKind::Merge);
            let mut fine_blocks = Vec::new();
            for &fi in &fine_rows {
                for &fj in &fine_cols {
                    let sub = self.produce(group, segments, seg - 1, fi, fj, entry, entry_class)?;
                    let bits = self.block_bits(prev_rows[fi], prev_cols[fj], prev_ch);
                    let step = self.step();
                    self.extras
                        .get_mut(&key)
                        .expect("merge buffer sized by the planner")
                        .add(bits, step)?;
                    if let Some(sub) = sub {
                        fine_blocks.push(sub);
                    }
                }
            }
            merge_key = Some(key);
            block = if self.weights.is_some() {
                let sub_rows: Vec<usize> = fine_rows.iter().map(|&i| prev_rows[i]).collect();
                let sub_cols: Vec<usize> = fine_cols.iter().map(|&j| prev_cols[j]).collect();
                let grid = BlockGrid::from_bands(&sub_rows, &sub_cols)?;
                Some(concat_blocks(&fine_blocks, &grid)?)
            } else {
                None
            };
        }

        for pos in 0..segments[seg].layers.len() {
            let ix = segments[seg].layers[pos];
            let id = self.layout.layers[ix].id.clone();
            let out_ch = self.layout.layers[ix].out_ch;
            let out_bits =
                self.block_bits(self.layout.layers[ix].out_row_bands[bi], self.layout.layers[ix].out_col_bands[bj], out_ch);
            match self.net.layers[ix].kind.clone() {
                LayerKind::Input | LayerKind::Output => {}
                LayerKind::Conv { k, stride, depthwise, .. } => {
                    let grid_cols = self.layout.layers[ix].in_col_bands.len();
                    let bpad = self.blocking.layers[ix].padding.as_ref().ok_or_else(|| {
                        SimError::PlanInconsistent {
                            layer: id.clone(),
                            reason: "conv layer without block padding".into(),
                        }
                    })?;
                    let spec = bpad.per_block[bi * grid_cols + bj];
                    let mode = bpad.mode;

                    let m = out_ch.max(1);
                    let n_ch = if depthwise { 1 } else { self.layout.layers[ix].in_ch.max(1) };
                    let w_bits = self.net.weight_format.value_bits();
                    let (t_m, t_n) = fit_channel_tiles(m, n_ch, k, w_bits, self.budget.weight_buffer_bits)?;
                    let step = self.step();
                    self.weight_buf.occupy((t_m * t_n * k * k) as u64 * w_bits, step)?;

                    if let (Some(t), Some(weights)) = (&block, self.weights) {
                        let (w, b) = weights.for_layer(&id).ok_or_else(|| SimError::BadTiling {
                            layer: id.clone(),
                            reason: "missing weights".into(),
                        })?;
                        let params = ConvParams { stride, padding: spec, pad_mode: mode, depthwise };
                        block = Some(conv2d_virtual(t, w, Some(b), &params).map_err(SimError::Tensor)?);
                    }
                    self.trace.events.push(TraceEvent::Compute { layer: id.clone(), block: (bi, bj) });
                    let step = self.step();
                    self.intermediates[1 - self.ping].occupy(out_bits, step)?;
                    self.ping = 1 - self.ping;
                    self.trace.events.push(TraceEvent::BufferSwap);
                }
                LayerKind::MaxPool { k, stride } => {
                    if let Some(t) = &block {
                        block = Some(maxpool2d(t, k, stride).map_err(SimError::Tensor)?);
                    }
                    self.trace.events.push(TraceEvent::Compute { layer: id.clone(), block: (bi, bj) });
                    let step = self.step();
                    self.intermediates[1 - self.ping].occupy(out_bits, step)?;
                    self.ping = 1 - self.ping;
                    self.trace.events.push(TraceEvent::BufferSwap);
                }
                LayerKind::EltwiseAdd { residual_source } => {
                    let (src, in_group) = self.layout.layers[ix].residual.expect("layout records residuals");
                    let src_is_input = matches!(self.net.layers[src].kind, LayerKind::Input);
                    let host = self.opts.host_residual_output
                        && ix == self.net.layers.len() - 1
                        && src_is_input;
                    let operand: Option<Tensor4D> = if in_group {
                        if let Some(buf) = self.extras.get_mut(&(ix, ExtraKind::Residual)) {
                            buf.clear();
                        }
                        self.residual_store.remove(&ix)
                    } else {
                        if !host {
                            let class = if src_is_input {
                                TensorClass::InputImage
                            } else {
                                TensorClass::IntermediateFmap
                            };
                            self.traffic.add_read(&id, class, out_bits);
                            self.trace.events.push(TraceEvent::Load {
                                tensor: format!("{id}.residual.block({bi},{bj})"),
                                bits: out_bits,
                            });
                        }
                        match self.dram.get(&src) {
                            Some(map) => {
                                let (r0, rlen) = band_at(&self.layout.layers[ix].in_row_bands, bi);
                                let (c0, clen) = band_at(&self.layout.layers[ix].in_col_bands, bj);
                                Some(map.slice_spatial(r0, rlen, c0, clen).map_err(SimError::Tensor)?)
                            }
                            None if self.weights.is_some() => {
                                return Err(SimError::PlanInconsistent {
                                    layer: id.clone(),
                                    reason: format!("residual source {residual_source} not off-chip"),
                                });
                            }
                            None => None,
                        }
                    };
                    if let (Some(t), Some(op)) = (&block, &operand) {
                        block = Some(eltwise_add(t, op).map_err(SimError::Tensor)?);
                    }
                    self.trace.events.push(TraceEvent::Compute { layer: id.clone(), block: (bi, bj) });
                }
            }
            // a residual source copies its freshly produced block into the
            // consuming add's extra buffer
            if let Some(consumers) = self.residual_consumers.get(&ix).cloned() {
                for add_ix in consumers {
                    let bits = out_bits;
                    let step = self.step();
                    if let Some(buf) = self.extras.get_mut(&(add_ix, ExtraKind::Residual)) {
                        buf.occupy(bits, step)?;
                    }
                    if let Some(t) = &block {
                        self.residual_store.insert(add_ix, t.clone());
                    }
                }
            }
        }

        if let Some(key) = merge_key {
            if let Some(buf) = self.extras.get_mut(&key) {
                buf.clear();
            }
        }
        Ok(block)
    }
}

fn run_fused(
    net: &NetworkDesc,
    weights: Option<&NetWeights>,
    input: Option<&Tensor4D>,
    plan: &FusionPlan,
    blocking: &BlockingPlan,
    budget: &HardwareBudget,
    opts: FusedOptions,
) -> Result<(Option<Tensor4D>, TrafficReport, PhaseTrace), SimError> {
    if !net.activation_format.is_fixed() || !net.weight_format.is_fixed() {
        return Err(SimError::RealFormat(net.activation_format));
    }
    if u64::from(budget.activation_bits) != net.activation_format.value_bits() {
        return Err(SimError::BadTiling {
            layer: "<budget>".into(),
            reason: format!(
                "budget activation width {} does not match the network's {}",
                budget.activation_bits,
                net.activation_format.value_bits()
            ),
        });
    }
    let layout = plan_layout(net, plan)?;
    validate_blocking(&layout, blocking)?;
    let act_bits = net.activation_format.value_bits();
    let w_bits = net.weight_format.value_bits();

    let mut residual_consumers: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for layer in &layout.layers {
        if let Some((src, true)) = layer.residual {
            residual_consumers.entry(src).or_default().push(layer.idx);
        }
    }

    let mut walk = FusedWalk {
        net,
        layout,
        blocking,
        weights,
        budget,
        opts,
        act_bits,
        traffic: TrafficReport::default(),
        trace: PhaseTrace::default(),
        intermediates: [
            BufferState::new("intermediate_1", 0),
            BufferState::new("intermediate_2", 0),
            BufferState::new("intermediate_3", 0),
        ],
        ping: 0,
        extras: BTreeMap::new(),
        weight_buf: BufferState::new("weight", budget.weight_buffer_bits),
        residual_consumers,
        dram: BTreeMap::new(),
        residual_store: BTreeMap::new(),
    };

    // all network weights load once at startup
    let shapes = net.infer_shapes()?;
    for (idx, layer) in net.layers.iter().enumerate() {
        if let LayerKind::Conv { k, depthwise, .. } = &layer.kind {
            let n_ch = if *depthwise { 1 } else { shapes.input[idx].c };
            let bits = (shapes.output[idx].c * n_ch * k * k) as u64 * w_bits;
            walk.traffic.add_read(&layer.id, TensorClass::Weights, bits);
            walk.trace.events.push(TraceEvent::Load { tensor: format!("{}.weights", layer.id), bits });
        }
    }

    let mut current: Option<Tensor4D> = input.cloned();
    if let Some(t) = &current {
        let expected = Dims::new(1, net.input_shape.c, net.input_shape.h, net.input_shape.w);
        if t.dims != expected {
            return Err(SimError::Tensor(crate::TensorError::ShapeMismatch(format!(
                "input {} does not match network input {}",
                t.dims, expected
            ))));
        }
        // the input image stays host-resident; residual reads may slice it
        for (idx, layer) in net.layers.iter().enumerate() {
            if matches!(layer.kind, LayerKind::Input) {
                walk.dram.insert(idx, t.clone());
            }
        }
    }

    let group_count = walk.layout.groups.len();
    for gi in 0..group_count {
        let buffers = group_buffers(&walk.layout, gi, act_bits);
        walk.intermediates = [
            BufferState::new("intermediate_1", buffers.intermediate_bits),
            BufferState::new("intermediate_2", buffers.intermediate_bits),
            BufferState::new("intermediate_3", buffers.intermediate_bits),
        ];
        walk.ping = 0;
        walk.extras = buffers
            .extras
            .iter()
            .map(|(idx, kind, bits)| ((*idx, *kind), BufferState::new(format!("extra[{idx}]"), *bits)))
            .collect();
        if opts.prefetch {
            let bits = walk.layout.groups[gi].entry_block_bits(act_bits);
            let step = walk.step();
            walk.intermediates[2].occupy(bits, step)?;
        }

        let segments = build_segments(&walk.layout, gi);
        let seg_last = segments.len() - 1;
        let exit_ix = *segments[seg_last].layers.last().unwrap();
        let exit_rows = walk.layout.layers[exit_ix].out_row_bands.clone();
        let exit_cols = walk.layout.layers[exit_ix].out_col_bands.clone();
        let exit_ch = walk.layout.layers[exit_ix].out_ch;
        let exit_id = walk.layout.layers[exit_ix].id.clone();
        let entry_class = if gi == 0 { TensorClass::InputImage } else { TensorClass::IntermediateFmap };
        let is_last_group = gi == group_count - 1;

        let mut out_blocks = Vec::new();
        for (bi, &band_r) in exit_rows.iter().enumerate() {
            for (bj, &band_c) in exit_cols.iter().enumerate() {
                let block = walk.produce(gi, &segments, seg_last, bi, bj, current.as_ref(), entry_class)?;
                let bits = walk.block_bits(band_r, band_c, exit_ch);
                let class = if is_last_group { TensorClass::Output } else { TensorClass::IntermediateFmap };
                walk.traffic.add_write(&exit_id, class, bits);
                walk.trace.events.push(TraceEvent::Store {
                    tensor: format!("{exit_id}.out.block({bi},{bj})"),
                    bits,
                });
                if let Some(b) = block {
                    out_blocks.push(b);
                }
            }
        }
        if weights.is_some() {
            let grid = BlockGrid::from_bands(&exit_rows, &exit_cols)?;
            let assembled = concat_blocks(&out_blocks, &grid)?;
            walk.dram.insert(exit_ix, assembled.clone());
            current = Some(assembled);
        } else {
            current = None;
        }
    }

    Ok((current, walk.traffic, walk.trace))
}

/// Full fused simulation: bit-exact per-block output plus traffic and
/// trace. The blocking plan must materialize exactly the grids the fusion
/// plan implies (see `fusion_blocking_plan`).
pub fn simulate_fused(
    net: &NetworkDesc,
    weights: &NetWeights,
    input: &Tensor4D,
    plan: &FusionPlan,
    blocking: &BlockingPlan,
    budget: &HardwareBudget,
    opts: FusedOptions,
) -> Result<SimOutput, SimError> {
    if !net.activation_format.is_fixed() || !net.weight_format.is_fixed() {
        return Err(SimError::RealFormat(net.activation_format));
    }
    let (output, traffic, trace) = run_fused(net, Some(weights), Some(input), plan, blocking, budget, opts)?;
    Ok(SimOutput { output: output.expect("functional run produces a tensor"), traffic, trace })
}

/// Traffic and trace of the fused schedule without tensor arithmetic.
pub fn simulate_fused_shapes(
    net: &NetworkDesc,
    plan: &FusionPlan,
    blocking: &BlockingPlan,
    budget: &HardwareBudget,
    opts: FusedOptions,
) -> Result<(TrafficReport, PhaseTrace), SimError> {
    let (_, traffic, trace) = run_fused(net, None, None, plan, blocking, budget, opts)?;
    Ok((traffic, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::ScalarFormat;
    use crate::graph::{LayerDesc, MapShape};
    use crate::planner::{fusion_blocking_plan, BlockingStyle};

    fn f8() -> ScalarFormat {
        ScalarFormat::fixed(8, 4).unwrap()
    }

    fn budget() -> HardwareBudget {
        HardwareBudget { bram_bits: 1 << 24, n_pe: 2, activation_bits: 8, weight_buffer_bits: 1 << 22 }
    }

    fn toy() -> NetworkDesc {
        NetworkDesc {
            input_shape: MapShape::new(2, 16, 16),
            activation_format: f8(),
            weight_format: f8(),
            layers: vec![
                LayerDesc::input("input"),
                LayerDesc::conv("c1", 3, 1, 1, 2, 4),
                LayerDesc::conv("c2", 3, 1, 1, 4, 4),
                LayerDesc::eltwise_add("add", "c1"),
                LayerDesc::maxpool("p1", 2, 2),
                LayerDesc::conv("c3", 3, 1, 1, 4, 2),
            ],
        }
    }

    #[test]
    fn single_group_matches_blocked_reference_and_moves_no_intermediate() {
        let net = toy();
        let weights = NetWeights::seeded(&net, 21).unwrap();
        let input = Tensor4D::seeded_random(Dims::new(1, 2, 16, 16), f8(), 22);
        let plan = FusionPlan::single_group(&net, (8, 8), BlockingStyle::Fixed);
        let blocking = fusion_blocking_plan(&net, &plan).unwrap();
        let sim =
            simulate_fused(&net, &weights, &input, &plan, &blocking, &budget(), FusedOptions::default()).unwrap();

        let reference = crate::block::blocked_forward(&net, &weights, &input, &blocking).unwrap();
        assert_eq!(sim.output, reference);
        assert_eq!(sim.traffic.total().intermediate_fmap, 0);
        assert!(sim.trace.is_causal());
    }

    #[test]
    fn per_unit_groups_round_trip_every_boundary() {
        let net = toy();
        let weights = NetWeights::seeded(&net, 31).unwrap();
        let input = Tensor4D::seeded_random(Dims::new(1, 2, 16, 16), f8(), 32);
        let units = crate::planner::fusion_units(&net);
        let groups: Vec<(usize, (usize, usize))> = units.iter().map(|_| (1, (8, 8))).collect();
        let plan = FusionPlan::from_unit_counts(&net, BlockingStyle::Fixed, &groups).unwrap();
        let blocking = fusion_blocking_plan(&net, &plan).unwrap();
        let sim =
            simulate_fused(&net, &weights, &input, &plan, &blocking, &budget(), FusedOptions::default()).unwrap();
        // units: [input, c1], [c2, add, p1], [c3]; boundary maps are c1's
        // output (16x16x4) and p1's output (8x8x4); the cross-group
        // residual re-reads c1's map
        let b1 = 16 * 16 * 4 * 8u64;
        let b2 = 8 * 8 * 4 * 8u64;
        assert_eq!(sim.traffic.total().intermediate_fmap, 2 * (b1 + b2) + b1);

        let reference = crate::block::blocked_forward(&net, &weights, &input, &blocking).unwrap();
        assert_eq!(sim.output, reference);
    }

    #[test]
    fn weight_buffer_too_small_fails_the_simulation() {
        let net = toy();
        let plan = FusionPlan::single_group(&net, (8, 8), BlockingStyle::Fixed);
        let blocking = fusion_blocking_plan(&net, &plan).unwrap();
        let tiny = HardwareBudget { weight_buffer_bits: 8, ..budget() };
        assert!(simulate_fused_shapes(&net, &plan, &blocking, &tiny, FusedOptions::default()).is_err());
    }

    #[test]
    fn blocking_grid_mismatch_is_reported() {
        let net = toy();
        let plan = FusionPlan::single_group(&net, (8, 8), BlockingStyle::Fixed);
        let other = FusionPlan::single_group(&net, (16, 16), BlockingStyle::Fixed);
        let blocking = fusion_blocking_plan(&net, &other).unwrap();
        match simulate_fused_shapes(&net, &plan, &blocking, &budget(), FusedOptions::default()) {
            Err(SimError::PlanInconsistent { .. }) => {}
            other => panic!("expected inconsistency, got {other:?}"),
        }
    }

    #[test]
    fn shapes_only_traffic_equals_functional_traffic() {
        let net = toy();
        let weights = NetWeights::seeded(&net, 41).unwrap();
        let input = Tensor4D::seeded_random(Dims::new(1, 2, 16, 16), f8(), 42);
        let plan = FusionPlan::single_group(&net, (8, 8), BlockingStyle::Fixed);
        let blocking = fusion_blocking_plan(&net, &plan).unwrap();
        let full =
            simulate_fused(&net, &weights, &input, &plan, &blocking, &budget(), FusedOptions::default()).unwrap();
        let (shape_traffic, shape_trace) =
            simulate_fused_shapes(&net, &plan, &blocking, &budget(), FusedOptions::default()).unwrap();
        assert_eq!(full.traffic, shape_traffic);
        assert_eq!(full.trace, shape_trace);
    }
}
