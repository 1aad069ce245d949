//! Fusion planning: grouping enumeration, cycle model, on-chip memory
//! model, and brute-force design-space exploration.

mod explore;
mod layout;

pub use explore::{
    enumerate_groupings, explore, fusion_units, pareto_indices, ExploreConfig, ExploreResult,
    ScoredPlan,
};
pub use layout::{
    estimate_memory, fusion_blocking_plan, plan_cycles, plan_layout, plan_offchip_bits,
    plan_score, ExtraKind, GroupLayout, LayoutLayer, MemoryBreakdown, MergeInfo, PlanLayout,
};
pub(crate) use layout::group_buffers;

use serde::{Deserialize, Serialize};

use crate::format::PadMode;
use crate::graph::NetworkDesc;
use crate::PlanError;

/// One 18 Kbit block RAM. Capacity is modeled at this granularity only;
/// port and width constraints are synthesis-tool specific and out of scope.
pub const BRAM_BLOCK_BITS: u64 = 18 * 1024;

/// Capacity envelope of the target device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardwareBudget {
    /// Total on-chip BRAM capacity in bits.
    pub bram_bits: u64,
    /// Parallel processing elements.
    pub n_pe: u64,
    /// Activation bitwidth of the design point (a design-space dimension;
    /// it may differ from a network's stored format during exploration).
    pub activation_bits: u32,
    /// Reserved share for the filter staging buffer.
    pub weight_buffer_bits: u64,
}

impl HardwareBudget {
    /// ZC706-class device: 1090 x 18 Kbit BRAMs.
    pub fn zc706(n_pe: u64, activation_bits: u32, weight_buffer_bits: u64) -> Self {
        HardwareBudget {
            bram_bits: 1090 * BRAM_BLOCK_BITS,
            n_pe,
            activation_bits,
            weight_buffer_bits,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("budget serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }
}

/// How block shapes evolve across pooling inside a fused group.
///
/// `Fixed` re-tiles to the group's block size after every resolution
/// change, merging adjacent blocks through extra buffers; `Hierarchical`
/// keeps the block count constant so blocks simply shrink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockingStyle {
    Fixed,
    Hierarchical,
}

/// A run of consecutive layers fused on-chip, processed block by block at
/// the given entry tile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionGroup {
    pub layers: Vec<String>,
    pub tile: (usize, usize),
}

/// Partition of a network into fused groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionPlan {
    pub style: BlockingStyle,
    #[serde(default = "default_pad_mode")]
    pub pad_mode: PadMode,
    pub groups: Vec<FusionGroup>,
}

fn default_pad_mode() -> PadMode {
    PadMode::Zero
}

impl FusionPlan {
    /// All layers in one group: the whole network runs per block with no
    /// off-chip traffic between layers.
    pub fn single_group(net: &NetworkDesc, tile: (usize, usize), style: BlockingStyle) -> Self {
        FusionPlan {
            style,
            pad_mode: PadMode::Zero,
            groups: vec![FusionGroup {
                layers: net.layers.iter().map(|l| l.id.clone()).collect(),
                tile,
            }],
        }
    }

    /// Build a plan from per-group fusion-unit counts and tiles. A fusion
    /// unit is a convolution plus the non-convolution layers glued to it
    /// (see [`fusion_units`]).
    pub fn from_unit_counts(
        net: &NetworkDesc,
        style: BlockingStyle,
        groups: &[(usize, (usize, usize))],
    ) -> Result<Self, PlanError> {
        let units = fusion_units(net);
        let requested: usize = groups.iter().map(|(n, _)| n).sum();
        if requested != units.len() || groups.iter().any(|(n, _)| *n == 0) {
            return Err(PlanError::BadGrouping);
        }
        let mut out = Vec::with_capacity(groups.len());
        let mut next = 0;
        for (count, tile) in groups {
            let first = units[next].0;
            let last = units[next + count - 1].1;
            out.push(FusionGroup {
                layers: net.layers[first..last].iter().map(|l| l.id.clone()).collect(),
                tile: *tile,
            });
            next += count;
        }
        Ok(FusionPlan { style, pad_mode: PadMode::Zero, groups: out })
    }

    /// Group sizes as conv-layer counts, e.g. "2,2,3,3,3".
    pub fn grouping_string(&self, net: &NetworkDesc) -> String {
        self.groups
            .iter()
            .map(|g| {
                g.layers
                    .iter()
                    .filter(|id| {
                        net.layer_index(id)
                            .map(|i| net.layers[i].kind.is_conv())
                            .unwrap_or(false)
                    })
                    .count()
                    .to_string()
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }
}

/// Cost of one plan: model cycles, peak on-chip bits (BRAM-rounded), and
/// feature-map bits crossing the off-chip boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanScore {
    pub cycles: u64,
    pub onchip_bits: u64,
    pub offchip_bits: u64,
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// Round a buffer up to whole BRAM blocks.
pub fn bram_round(bits: u64) -> u64 {
    ceil_div(bits, BRAM_BLOCK_BITS) * BRAM_BLOCK_BITS
}

/// Computational phases of one layer: each phase processes one
/// `(t_r, t_c, t_m, t_n)` tile, and every dimension is covered by ceiling
/// division.
#[allow(clippy::too_many_arguments)]
pub fn phase_count(m: u64, n_ch: u64, r: u64, c: u64, t_r: u64, t_c: u64, t_m: u64, t_n: u64) -> Result<u64, PlanError> {
    if t_r == 0 || t_c == 0 || t_m == 0 || t_n == 0 {
        return Err(PlanError::ZeroTile);
    }
    Ok(ceil_div(m, t_m) * ceil_div(n_ch, t_n) * ceil_div(r, t_r) * ceil_div(c, t_c))
}

/// Cycle model of one convolution layer.
///
/// A phase sweeps a `(t_r + k - 1) x (t_c + k - 1)` padded tile over `t_m`
/// output channels spread across `n_pe` parallel PEs; total cycles are the
/// phase count times that per-phase cost, rounded up. For a 3x3 kernel the
/// padded tile is the familiar `(t_r + 2) x (t_c + 2)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_cycles(
    m: u64,
    n_ch: u64,
    r: u64,
    c: u64,
    k: u64,
    t_r: u64,
    t_c: u64,
    t_m: u64,
    t_n: u64,
    n_pe: u64,
) -> Result<u64, PlanError> {
    if n_pe == 0 {
        return Err(PlanError::ZeroTile);
    }
    let phases = phase_count(m, n_ch, r, c, t_r, t_c, t_m, t_n)?;
    let work = phases * (t_r + k - 1) * (t_c + k - 1) * t_m;
    Ok(ceil_div(work, n_pe))
}

/// Largest channel tiles `(t_m, t_n)` whose filter tile fits the weight
/// buffer. Starts from full channels and repeatedly drops the larger side
/// to its next-smaller divisor (ties shrink `t_m`).
pub fn fit_channel_tiles(
    m: usize,
    n_ch: usize,
    k: usize,
    weight_value_bits: u64,
    weight_buffer_bits: u64,
) -> Result<(usize, usize), PlanError> {
    let tile_bits = |tm: usize, tn: usize| (tm * tn * k * k) as u64 * weight_value_bits;
    let next_divisor = |of: usize, below: usize| (1..below).rev().find(|&d| of.is_multiple_of(d));
    let (mut tm, mut tn) = (m.max(1), n_ch.max(1));
    loop {
        if tile_bits(tm, tn) <= weight_buffer_bits {
            return Ok((tm, tn));
        }
        if tm >= tn {
            match next_divisor(m.max(1), tm) {
                Some(d) => tm = d,
                None => match next_divisor(n_ch.max(1), tn) {
                    Some(d) => tn = d,
                    None => {
                        return Err(PlanError::WeightTileTooLarge {
                            needed: tile_bits(1, 1),
                            available: weight_buffer_bits,
                        })
                    }
                },
            }
        } else {
            match next_divisor(n_ch.max(1), tn) {
                Some(d) => tn = d,
                None => match next_divisor(m.max(1), tm) {
                    Some(d) => tm = d,
                    None => {
                        return Err(PlanError::WeightTileTooLarge {
                            needed: tile_bits(1, 1),
                            available: weight_buffer_bits,
                        })
                    }
                },
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::preset;

    #[test]
    fn cycle_model_worked_example() {
        // 64 channels in and out, 28x28 map, 14x14 tiles, full channel
        // tiles, 3x3 kernel, 2 PEs: 4 phases of 16*16*64 work each
        let cycles = estimate_cycles(64, 64, 28, 28, 3, 14, 14, 64, 64, 2).unwrap();
        assert_eq!(cycles, 4 * 16 * 16 * 64 / 2);
        assert_eq!(cycles, 32768);
    }

    #[test]
    fn single_phase_when_tiles_cover_the_layer() {
        assert_eq!(phase_count(64, 64, 28, 28, 28, 28, 64, 64).unwrap(), 1);
        assert!(phase_count(1, 1, 1, 1, 0, 1, 1, 1).is_err());
    }

    #[test]
    fn doubling_pes_halves_cycles_when_divisible() {
        let one = estimate_cycles(64, 32, 56, 56, 3, 14, 14, 32, 32, 2).unwrap();
        let two = estimate_cycles(64, 32, 56, 56, 3, 14, 14, 32, 32, 4).unwrap();
        assert_eq!(one, 2 * two);
    }

    #[test]
    fn cycles_monotone_in_problem_size() {
        let base = estimate_cycles(64, 64, 28, 28, 3, 14, 14, 64, 64, 2).unwrap();
        assert!(estimate_cycles(128, 64, 28, 28, 3, 14, 14, 64, 64, 2).unwrap() >= base);
        assert!(estimate_cycles(64, 128, 28, 28, 3, 14, 14, 64, 64, 2).unwrap() >= base);
        assert!(estimate_cycles(64, 64, 56, 28, 3, 14, 14, 64, 64, 2).unwrap() >= base);
        assert!(estimate_cycles(64, 64, 28, 56, 3, 14, 14, 64, 64, 2).unwrap() >= base);
    }

    #[test]
    fn channel_tiles_shrink_to_fit() {
        // full 512x512x9 at 8 bits is 18.9 Mbit; an 8 Mbit buffer forces a
        // divisor split
        let (tm, tn) = fit_channel_tiles(512, 512, 3, 8, 8 << 20).unwrap();
        assert!(tm * tn * 9 * 8 <= 8 << 20);
        assert_eq!(512 % tm, 0);
        assert_eq!(512 % tn, 0);
        // generous buffer keeps full channels
        assert_eq!(fit_channel_tiles(64, 64, 3, 4, 8 << 20).unwrap(), (64, 64));
        assert!(fit_channel_tiles(4, 4, 3, 8, 10).is_err());
    }

    #[test]
    fn unit_count_plans_cover_the_network() {
        let net = preset("vgg16-conv").unwrap();
        let plan = FusionPlan::from_unit_counts(
            &net,
            BlockingStyle::Fixed,
            &[(2, (14, 14)), (2, (14, 14)), (3, (14, 14)), (3, (14, 14)), (3, (14, 14))],
        )
        .unwrap();
        assert_eq!(plan.grouping_string(&net), "2,2,3,3,3");
        let covered: usize = plan.groups.iter().map(|g| g.layers.len()).sum();
        assert_eq!(covered, net.layers.len());
        assert!(FusionPlan::from_unit_counts(&net, BlockingStyle::Fixed, &[(12, (14, 14))]).is_err());
    }

    #[test]
    fn budget_and_plan_json_round_trip() {
        let budget = HardwareBudget::zc706(4, 8, 8 << 20);
        assert_eq!(budget.bram_bits, 20_090_880);
        let back = HardwareBudget::from_json(&budget.to_json()).unwrap();
        assert_eq!(back, budget);

        let net = preset("vdsr").unwrap();
        let plan = FusionPlan::single_group(&net, (27, 48), BlockingStyle::Hierarchical);
        let back = FusionPlan::from_json(&plan.to_json()).unwrap();
        assert_eq!(back, plan);
    }
}
