//! Per-layer tile layout of a fusion plan.
//!
//! The layout walker is the single source of truth for how block shapes
//! evolve through a plan: the memory estimate, the cycle sum, the off-chip
//! boundary accounting, the derived blocking plan and the fused simulator's
//! buffer capacities all read from it, so the planner's declared numbers
//! and the simulator's enforced ones cannot drift apart.

use serde::{Deserialize, Serialize};

use crate::block::{BlockGrid, BlockPadding, BlockingPlan, LayerBlocking};
use crate::graph::{LayerKind, NetworkDesc};
use crate::ops::conv_out_extent;
use crate::PlanError;

use super::{
    bram_round, estimate_cycles, fit_channel_tiles, BlockingStyle, FusionPlan, HardwareBudget,
    PlanScore,
};

/// Fixed-style re-tiling after a layer: old output bands splice into the
/// group's block size again. `row_map[i]` is the target band of old band i.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeInfo {
    pub new_row_bands: Vec<usize>,
    pub new_col_bands: Vec<usize>,
    pub row_map: Vec<usize>,
    pub col_map: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutLayer {
    pub idx: usize,
    pub id: String,
    pub group: usize,
    pub is_conv: bool,
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_row_bands: Vec<usize>,
    pub in_col_bands: Vec<usize>,
    pub out_row_bands: Vec<usize>,
    pub out_col_bands: Vec<usize>,
    /// Reported block size: the largest input band on each axis.
    pub tile: (usize, usize),
    pub merge_after: Option<MergeInfo>,
    /// For an element-wise add: (source layer index, source in same group).
    pub residual: Option<(usize, bool)>,
}

impl LayoutLayer {
    pub fn max_out_block_bits(&self, act_bits: u64) -> u64 {
        let r = self.out_row_bands.iter().copied().max().unwrap_or(0) as u64;
        let c = self.out_col_bands.iter().copied().max().unwrap_or(0) as u64;
        r * c * self.out_ch as u64 * act_bits
    }

    pub fn out_map_bits(&self, act_bits: u64) -> u64 {
        let r: usize = self.out_row_bands.iter().sum();
        let c: usize = self.out_col_bands.iter().sum();
        (r * c * self.out_ch) as u64 * act_bits
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLayout {
    pub first: usize,
    pub last: usize,
    pub entry_row_bands: Vec<usize>,
    pub entry_col_bands: Vec<usize>,
    pub entry_ch: usize,
}

impl GroupLayout {
    pub fn entry_block_bits(&self, act_bits: u64) -> u64 {
        let r = self.entry_row_bands.iter().copied().max().unwrap_or(0) as u64;
        let c = self.entry_col_bands.iter().copied().max().unwrap_or(0) as u64;
        r * c * self.entry_ch as u64 * act_bits
    }

    pub fn entry_map_bits(&self, act_bits: u64) -> u64 {
        let r: usize = self.entry_row_bands.iter().sum();
        let c: usize = self.entry_col_bands.iter().sum();
        (r * c * self.entry_ch) as u64 * act_bits
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanLayout {
    pub layers: Vec<LayoutLayer>,
    pub groups: Vec<GroupLayout>,
}

fn tiled_bands(extent: usize, tile: usize) -> Vec<usize> {
    let mut bands = Vec::new();
    let mut rest = extent;
    while rest > tile {
        bands.push(tile);
        rest -= tile;
    }
    bands.push(rest);
    bands
}

/// Map each fine band to the coarse band it belongs to; the fine bands must
/// partition the coarse ones exactly.
fn coarsening_map(fine: &[usize], coarse: &[usize]) -> Option<Vec<usize>> {
    let mut map = Vec::with_capacity(fine.len());
    let mut target = 0;
    let mut acc = 0;
    for &band in fine {
        if target >= coarse.len() {
            return None;
        }
        acc += band;
        map.push(target);
        if acc == coarse[target] {
            acc = 0;
            target += 1;
        } else if acc > coarse[target] {
            return None;
        }
    }
    if acc == 0 && target == coarse.len() {
        Some(map)
    } else {
        None
    }
}

/// Walk a plan over a network, deriving every layer's band structure.
pub fn plan_layout(net: &NetworkDesc, plan: &FusionPlan) -> Result<PlanLayout, PlanError> {
    let shapes = net.infer_shapes()?;
    // groups must list the network's layers in order, exactly once
    let mut cursor = 0;
    for group in &plan.groups {
        for id in &group.layers {
            if net.layers.get(cursor).map(|l| l.id.as_str()) != Some(id.as_str()) {
                return Err(PlanError::BadGrouping);
            }
            cursor += 1;
        }
    }
    if cursor != net.layers.len() {
        return Err(PlanError::BadGrouping);
    }

    let mut layers: Vec<LayoutLayer> = Vec::with_capacity(net.layers.len());
    let mut groups: Vec<GroupLayout> = Vec::with_capacity(plan.groups.len());
    let (mut bh, mut bw) = (net.input_shape.h, net.input_shape.w);
    let mut li = 0;
    for (gi, group) in plan.groups.iter().enumerate() {
        if group.layers.is_empty() {
            return Err(PlanError::BadGrouping);
        }
        let (t_r, t_c) = group.tile;
        if t_r == 0 || t_c == 0 {
            return Err(PlanError::ZeroTile);
        }
        let mut row_bands = tiled_bands(bh, t_r);
        let mut col_bands = tiled_bands(bw, t_c);
        groups.push(GroupLayout {
            first: li,
            last: li + group.layers.len().saturating_sub(1),
            entry_row_bands: row_bands.clone(),
            entry_col_bands: col_bands.clone(),
            entry_ch: shapes.input.get(li).map(|s| s.c).unwrap_or(net.input_shape.c),
        });
        for _ in &group.layers {
            let layer = &net.layers[li];
            let in_row = row_bands.clone();
            let in_col = col_bands.clone();
            let mut residual = None;
            match &layer.kind {
                LayerKind::Input | LayerKind::Output => {}
                LayerKind::EltwiseAdd { residual_source } => {
                    let src = net.layer_index(residual_source).ok_or(PlanError::BadGrouping)?;
                    let in_group = src >= groups[gi].first;
                    if !in_group {
                        // a cross-group operand must exist off-chip: either
                        // the network input or some earlier group's exit
                        let available = matches!(net.layers[src].kind, LayerKind::Input)
                            || groups.iter().take(gi).any(|g| g.last == src);
                        if !available {
                            return Err(PlanError::Block(crate::BlockError::Inconsistent(format!(
                                "residual source {residual_source} of {} is neither in the same \
                                 group nor written at a group boundary",
                                layer.id
                            ))));
                        }
                    }
                    residual = Some((src, in_group));
                }
                LayerKind::Conv { k, stride, padding, .. } => {
                    // validate that per-band padding exists on both axes
                    crate::block::solve_bands(bh, &row_bands, *k, *stride, *padding)?;
                    crate::block::solve_bands(bw, &col_bands, *k, *stride, *padding)?;
                    let out_h = conv_out_extent(bh, *k, *padding, *padding, *stride)
                        .map_err(crate::BlockError::Tensor)?;
                    let out_w = conv_out_extent(bw, *k, *padding, *padding, *stride)
                        .map_err(crate::BlockError::Tensor)?;
                    row_bands = crate::block::apportion_outputs(out_h, &row_bands);
                    col_bands = crate::block::apportion_outputs(out_w, &col_bands);
                    bh = out_h;
                    bw = out_w;
                }
                LayerKind::MaxPool { k, stride } => {
                    let pool = |bands: &[usize]| -> Result<Vec<usize>, PlanError> {
                        bands
                            .iter()
                            .map(|&b| {
                                if b < *k {
                                    Err(PlanError::Block(crate::BlockError::PatternInfeasible {
                                        layer: layer.id.clone(),
                                        reason: format!("pool window {k} exceeds block extent {b}"),
                                    }))
                                } else {
                                    Ok((b - k) / stride + 1)
                                }
                            })
                            .collect()
                    };
                    row_bands = pool(&row_bands)?;
                    col_bands = pool(&col_bands)?;
                    bh = row_bands.iter().sum();
                    bw = col_bands.iter().sum();
                }
            }
            // fixed blocking re-tiles to the group block size after any
            // resolution change; hierarchical keeps the band count. The
            // group's last layer never merges: re-blocking across a group
            // boundary happens in DRAM, not in an extra buffer.
            let last_in_group = li == groups[gi].last;
            let mut merge_after = None;
            if plan.style == BlockingStyle::Fixed && !last_in_group {
                let target_rows = tiled_bands(bh, t_r);
                let target_cols = tiled_bands(bw, t_c);
                if target_rows != row_bands || target_cols != col_bands {
                    let row_map = coarsening_map(&row_bands, &target_rows).ok_or_else(|| {
                        PlanError::Block(crate::BlockError::Inconsistent(format!(
                            "bands after {} do not splice into {}x{} blocks",
                            layer.id, t_r, t_c
                        )))
                    })?;
                    let col_map = coarsening_map(&col_bands, &target_cols).ok_or_else(|| {
                        PlanError::Block(crate::BlockError::Inconsistent(format!(
                            "bands after {} do not splice into {}x{} blocks",
                            layer.id, t_r, t_c
                        )))
                    })?;
                    merge_after = Some(MergeInfo {
                        new_row_bands: target_rows.clone(),
                        new_col_bands: target_cols.clone(),
                        row_map,
                        col_map,
                    });
                }
            }
            layers.push(LayoutLayer {
                idx: li,
                id: layer.id.clone(),
                group: gi,
                is_conv: layer.kind.is_conv(),
                in_ch: shapes.input[li].c,
                out_ch: shapes.output[li].c,
                in_row_bands: in_row.clone(),
                in_col_bands: in_col.clone(),
                out_row_bands: row_bands.clone(),
                out_col_bands: col_bands.clone(),
                tile: (
                    in_row.iter().copied().max().unwrap_or(0),
                    in_col.iter().copied().max().unwrap_or(0),
                ),
                merge_after: merge_after.clone(),
                residual,
            });
            if let Some(merge) = merge_after {
                row_bands = merge.new_row_bands;
                col_bands = merge.new_col_bands;
            }
            li += 1;
        }
    }
    Ok(PlanLayout { layers, groups })
}

/// On-chip memory requirement of a plan.
///
/// Two ping-pong intermediate buffers (three with prefetch) each hold the
/// largest single block tensor in flight within a group; extra buffers
/// accumulate fixed-blocking merge outputs and residual block copies. Every
/// buffer is rounded up to whole BRAM blocks; the reported composition is
/// the peak group's, plus the reserved weight buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryBreakdown {
    pub intermediate_bits: u64,
    pub intermediate_copies: u64,
    pub extra_bits: Vec<u64>,
    pub weight_buffer_bits: u64,
    pub total_bits: u64,
    pub bram_blocks: u64,
}

/// What an extra buffer caches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExtraKind {
    /// Assembly area for a fixed-blocking merge after the given layer.
    Merge,
    /// Copy of the residual operand block consumed by the given add layer.
    Residual,
}

pub(crate) struct GroupBuffers {
    pub intermediate_bits: u64,
    /// (layer idx, kind, bits) in layer order; the fused simulator indexes
    /// its extra buffers by the same keys.
    pub extras: Vec<(usize, ExtraKind, u64)>,
}

pub(crate) fn group_buffers(layout: &PlanLayout, group: usize, act_bits: u64) -> GroupBuffers {
    let g = &layout.groups[group];
    let mut intermediate = g.entry_block_bits(act_bits);
    let mut extras = Vec::new();
    for layer in layout.layers.iter().filter(|l| l.group == group) {
        intermediate = intermediate.max(layer.max_out_block_bits(act_bits));
        if let Some(merge) = &layer.merge_after {
            let r = merge.new_row_bands.iter().copied().max().unwrap_or(0) as u64;
            let c = merge.new_col_bands.iter().copied().max().unwrap_or(0) as u64;
            extras.push((layer.idx, ExtraKind::Merge, r * c * layer.out_ch as u64 * act_bits));
        }
        if let Some((src, true)) = layer.residual {
            extras.push((layer.idx, ExtraKind::Residual, layout.layers[src].max_out_block_bits(act_bits)));
        }
    }
    GroupBuffers { intermediate_bits: intermediate, extras }
}

pub fn estimate_memory(
    net: &NetworkDesc,
    plan: &FusionPlan,
    budget: &HardwareBudget,
    prefetch: bool,
) -> Result<MemoryBreakdown, PlanError> {
    let layout = plan_layout(net, plan)?;
    estimate_memory_from_layout(&layout, budget, prefetch)
}

pub(crate) fn estimate_memory_from_layout(
    layout: &PlanLayout,
    budget: &HardwareBudget,
    prefetch: bool,
) -> Result<MemoryBreakdown, PlanError> {
    let act_bits = u64::from(budget.activation_bits);
    let copies = if prefetch { 3 } else { 2 };
    let mut peak_total = 0u64;
    let mut peak = MemoryBreakdown {
        intermediate_bits: 0,
        intermediate_copies: copies,
        extra_bits: Vec::new(),
        weight_buffer_bits: budget.weight_buffer_bits,
        total_bits: 0,
        bram_blocks: 0,
    };
    for gi in 0..layout.groups.len() {
        let buffers = group_buffers(layout, gi, act_bits);
        let total: u64 = bram_round(buffers.intermediate_bits) * copies
            + buffers.extras.iter().map(|(_, _, b)| bram_round(*b)).sum::<u64>();
        if total >= peak_total {
            peak_total = total;
            peak.intermediate_bits = buffers.intermediate_bits;
            peak.extra_bits = buffers.extras.iter().map(|(_, _, b)| *b).collect();
        }
    }
    let total_bits = peak_total + bram_round(budget.weight_buffer_bits);
    peak.total_bits = total_bits;
    peak.bram_blocks = total_bits / super::BRAM_BLOCK_BITS;
    Ok(peak)
}

/// Feature-map bits crossing the off-chip boundary under the fused
/// schedule: the network input once, each internal group boundary written
/// and re-read, residual operands sourced from earlier groups re-read, and
/// the network output once.
pub fn plan_offchip_bits(net: &NetworkDesc, plan: &FusionPlan, act_bits: u64) -> Result<u64, PlanError> {
    let layout = plan_layout(net, plan)?;
    Ok(offchip_bits_from_layout(&layout, act_bits))
}

pub(crate) fn offchip_bits_from_layout(layout: &PlanLayout, act_bits: u64) -> u64 {
    if layout.groups.is_empty() {
        return 0;
    }
    let mut bits = layout.groups[0].entry_map_bits(act_bits);
    for g in &layout.groups {
        let exit = layout.layers[g.last].out_map_bits(act_bits);
        let is_last = g.last + 1 == layout.layers.len();
        bits += if is_last { exit } else { 2 * exit };
    }
    for layer in &layout.layers {
        if let Some((src, false)) = layer.residual {
            bits += layout.layers[src].out_map_bits(act_bits);
        }
    }
    bits
}

/// Model cycles of a plan: the per-conv-layer cycle model summed, with
/// pooling and element-wise work folded into the producing pass.
pub fn plan_cycles(net: &NetworkDesc, plan: &FusionPlan, budget: &HardwareBudget) -> Result<u64, PlanError> {
    let layout = plan_layout(net, plan)?;
    cycles_from_layout(net, &layout, budget)
}

pub(crate) fn cycles_from_layout(
    net: &NetworkDesc,
    layout: &PlanLayout,
    budget: &HardwareBudget,
) -> Result<u64, PlanError> {
    let weight_bits = net.weight_format.value_bits();
    let mut total = 0u64;
    for layer in &layout.layers {
        let LayerKind::Conv { k, depthwise, .. } = &net.layers[layer.idx].kind else {
            continue;
        };
        let m = layer.out_ch.max(1);
        let n_ch = if *depthwise { 1 } else { layer.in_ch.max(1) };
        let (t_m, t_n) = fit_channel_tiles(m, n_ch, *k, weight_bits, budget.weight_buffer_bits)?;
        let r: usize = layer.out_row_bands.iter().sum();
        let c: usize = layer.out_col_bands.iter().sum();
        total += estimate_cycles(
            m as u64,
            n_ch as u64,
            r as u64,
            c as u64,
            *k as u64,
            layer.tile.0.min(r.max(1)) as u64,
            layer.tile.1.min(c.max(1)) as u64,
            t_m as u64,
            t_n as u64,
            budget.n_pe,
        )?;
    }
    Ok(total)
}

/// Score a plan: cycles, BRAM-rounded peak on-chip bits, boundary traffic.
pub fn plan_score(
    net: &NetworkDesc,
    plan: &FusionPlan,
    budget: &HardwareBudget,
    prefetch: bool,
) -> Result<(PlanScore, MemoryBreakdown), PlanError> {
    let layout = plan_layout(net, plan)?;
    let breakdown = estimate_memory_from_layout(&layout, budget, prefetch)?;
    let cycles = cycles_from_layout(net, &layout, budget)?;
    let offchip = offchip_bits_from_layout(&layout, u64::from(budget.activation_bits));
    Ok((
        PlanScore { cycles, onchip_bits: breakdown.total_bits, offchip_bits: offchip },
        breakdown,
    ))
}

/// Materialize the per-layer grids and block paddings a fusion plan implies,
/// in the same format pattern-generated blocking plans use.
pub fn fusion_blocking_plan(net: &NetworkDesc, plan: &FusionPlan) -> Result<BlockingPlan, PlanError> {
    let layout = plan_layout(net, plan)?;
    let mut layers = Vec::with_capacity(layout.layers.len());
    for layer in &layout.layers {
        let grid = BlockGrid::from_bands(&layer.in_row_bands, &layer.in_col_bands)?;
        let padding = match &net.layers[layer.idx].kind {
            LayerKind::Conv { k, stride, padding, .. } => {
                Some(BlockPadding::solve(&grid, *k, *stride, *padding, plan.pad_mode)?)
            }
            _ => None,
        };
        layers.push(LayerBlocking { layer: layer.id.clone(), grid, padding });
    }
    Ok(BlockingPlan { layers })
}
