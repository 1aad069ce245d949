//! Brute-force design-space exploration.
//!
//! Plans are enumerated over (grouping x blocking style x candidate tile):
//! every ordered partition of the network's fusion units into consecutive
//! groups, under both block-evolution styles, with one entry tile drawn
//! from the candidate set. Each plan is scored by the cycle and memory
//! models; the Pareto subset over (cycles, on-chip bits) is reported.

use serde::{Deserialize, Serialize};

use crate::graph::NetworkDesc;
use crate::PlanError;

use super::layout::plan_score;
use super::{BlockingStyle, FusionGroup, FusionPlan, HardwareBudget, MemoryBreakdown, PlanScore};

/// A fusion unit is one convolution together with the non-convolution
/// layers glued to it: leading markers attach to the first unit, and
/// pooling or element-wise layers attach to the preceding convolution.
/// Group boundaries can only fall between units. Returned ranges are
/// half-open layer index ranges.
pub fn fusion_units(net: &NetworkDesc) -> Vec<(usize, usize)> {
    let conv_positions: Vec<usize> = net
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.kind.is_conv())
        .map(|(i, _)| i)
        .collect();
    if conv_positions.is_empty() {
        return if net.layers.is_empty() { vec![] } else { vec![(0, net.layers.len())] };
    }
    conv_positions
        .iter()
        .enumerate()
        .map(|(ui, &pos)| {
            let start = if ui == 0 { 0 } else { pos };
            let end = conv_positions.get(ui + 1).copied().unwrap_or(net.layers.len());
            (start, end)
        })
        .collect()
}

/// All ordered partitions of `units` items into consecutive groups, as
/// per-group lengths. There are `2^(units-1)` of them.
pub fn enumerate_groupings(units: usize, cap: usize) -> Result<Vec<Vec<usize>>, PlanError> {
    if units > cap {
        return Err(PlanError::EnumerationCap { units, cap });
    }
    if units == 0 {
        return Ok(vec![vec![]]);
    }
    let gaps = units - 1;
    let mut out = Vec::with_capacity(1usize << gaps);
    for mask in 0u64..(1u64 << gaps) {
        let mut lengths = Vec::new();
        let mut run = 1;
        for gap in 0..gaps {
            if mask & (1 << gap) != 0 {
                lengths.push(run);
                run = 1;
            } else {
                run += 1;
            }
        }
        lengths.push(run);
        out.push(lengths);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreConfig {
    /// Enumeration cap on fusion units (groupings grow as 2^(units-1)).
    pub max_units: usize,
    /// Model a third intermediate buffer for block prefetch.
    pub prefetch: bool,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig { max_units: 20, prefetch: false }
    }
}

/// One scored design point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPlan {
    pub id: String,
    pub grouping: String,
    pub plan: FusionPlan,
    pub score: PlanScore,
    pub buffers: MemoryBreakdown,
    pub fits_onchip: bool,
}

impl ScoredPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreResult {
    /// All shape-consistent plans, ordered by (cycles, on-chip bits, id).
    pub plans: Vec<ScoredPlan>,
    /// Indices into `plans` forming the Pareto frontier.
    pub pareto: Vec<usize>,
}

impl ExploreResult {
    pub fn feasible(&self) -> impl Iterator<Item = &ScoredPlan> {
        self.plans.iter().filter(|p| p.fits_onchip)
    }

    /// Best feasible plan: fewest cycles, then least memory, then id.
    pub fn best(&self) -> Option<&ScoredPlan> {
        self.feasible()
            .min_by(|a, b| (a.score.cycles, a.score.onchip_bits, &a.id).cmp(&(b.score.cycles, b.score.onchip_bits, &b.id)))
    }

    /// One CSV row per plan, in result order, with Pareto membership.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "id,style,grouping,tile,cycles,onchip_bits,offchip_bits,fits_onchip,pareto\n",
        );
        for (i, p) in self.plans.iter().enumerate() {
            let style = match p.plan.style {
                BlockingStyle::Fixed => "fixed",
                BlockingStyle::Hierarchical => "hierarchical",
            };
            let tile = p
                .plan
                .groups
                .first()
                .map(|g| format!("{}x{}", g.tile.0, g.tile.1))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{},{},\"{}\",{},{},{},{},{},{}\n",
                p.id,
                style,
                p.grouping,
                tile,
                p.score.cycles,
                p.score.onchip_bits,
                p.score.offchip_bits,
                p.fits_onchip,
                self.pareto.contains(&i)
            ));
        }
        out
    }
}

/// Score every (grouping x style x tile) plan. Plans whose block shapes
/// cannot evolve consistently (for example a tile shrinking below the
/// kernel) are dropped; the rest are returned whether or not they fit the
/// budget, with the fit flagged.
pub fn explore(
    net: &NetworkDesc,
    budget: &HardwareBudget,
    candidate_tiles: &[(usize, usize)],
    config: &ExploreConfig,
) -> Result<ExploreResult, PlanError> {
    if candidate_tiles.is_empty() {
        return Err(PlanError::NoCandidates);
    }
    let units = fusion_units(net);
    let groupings = enumerate_groupings(units.len(), config.max_units)?;
    let mut plans = Vec::new();
    for style in [BlockingStyle::Fixed, BlockingStyle::Hierarchical] {
        for lengths in &groupings {
            for &tile in candidate_tiles {
                let plan = plan_from_lengths(net, &units, lengths, style, tile);
                let Ok((score, buffers)) = plan_score(net, &plan, budget, config.prefetch) else {
                    continue;
                };
                let grouping = plan.grouping_string(net);
                let id = format!(
                    "{}-{}-{}x{}",
                    match style {
                        BlockingStyle::Fixed => "fixed",
                        BlockingStyle::Hierarchical => "hier",
                    },
                    grouping.replace(',', "_"),
                    tile.0,
                    tile.1
                );
                let fits_onchip = score.onchip_bits <= budget.bram_bits;
                plans.push(ScoredPlan { id, grouping, plan, score, buffers, fits_onchip });
            }
        }
    }
    plans.sort_by(|a, b| {
        (a.score.cycles, a.score.onchip_bits, &a.id).cmp(&(b.score.cycles, b.score.onchip_bits, &b.id))
    });
    let pareto = pareto_indices(&plans);
    Ok(ExploreResult { plans, pareto })
}

fn plan_from_lengths(
    net: &NetworkDesc,
    units: &[(usize, usize)],
    lengths: &[usize],
    style: BlockingStyle,
    tile: (usize, usize),
) -> FusionPlan {
    let mut groups = Vec::with_capacity(lengths.len());
    let mut next = 0;
    for &len in lengths {
        let first = units[next].0;
        let last = units[next + len - 1].1;
        groups.push(FusionGroup {
            layers: net.layers[first..last].iter().map(|l| l.id.clone()).collect(),
            tile,
        });
        next += len;
    }
    FusionPlan { style, pad_mode: crate::PadMode::Zero, groups }
}

/// Indices of plans not dominated on (cycles, onchip_bits): no other plan
/// is at least as good on both axes and strictly better on one.
pub fn pareto_indices(plans: &[ScoredPlan]) -> Vec<usize> {
    let mut out = Vec::new();
    'outer: for (i, p) in plans.iter().enumerate() {
        for (j, q) in plans.iter().enumerate() {
            if i == j {
                continue;
            }
            let no_worse = q.score.cycles <= p.score.cycles && q.score.onchip_bits <= p.score.onchip_bits;
            let better = q.score.cycles < p.score.cycles || q.score.onchip_bits < p.score.onchip_bits;
            if no_worse && better {
                continue 'outer;
            }
        }
        out.push(i);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::ScalarFormat;
    use crate::graph::{preset, LayerDesc, MapShape};

    fn chain(n: usize) -> NetworkDesc {
        let f8 = ScalarFormat::fixed(8, 4).unwrap();
        let mut layers = Vec::new();
        for i in 0..n {
            layers.push(LayerDesc::conv(&format!("c{i}"), 3, 1, 1, if i == 0 { 2 } else { 4 }, 4));
        }
        NetworkDesc {
            input_shape: MapShape::new(2, 16, 16),
            activation_format: f8,
            weight_format: f8,
            layers,
        }
    }

    #[test]
    fn grouping_counts_are_compositions() {
        assert_eq!(enumerate_groupings(3, 20).unwrap().len(), 4);
        assert_eq!(enumerate_groupings(1, 20).unwrap().len(), 1);
        assert_eq!(enumerate_groupings(5, 20).unwrap().len(), 16);
        assert!(matches!(
            enumerate_groupings(25, 20),
            Err(PlanError::EnumerationCap { .. })
        ));
    }

    #[test]
    fn units_glue_non_convs_to_their_conv() {
        let net = preset("vdsr").unwrap();
        let units = fusion_units(&net);
        assert_eq!(units.len(), 20);
        // the input marker folds into the first unit, the residual add
        // into the last
        assert_eq!(units[0], (0, 2));
        assert_eq!(units[19].1, net.layers.len());

        let vgg = preset("vgg16-conv").unwrap();
        let units = fusion_units(&vgg);
        assert_eq!(units.len(), 13);
        // conv1_2 carries pool1
        assert_eq!(units[1].1 - units[1].0, 2);
    }

    #[test]
    fn explore_scores_every_combination() {
        let net = chain(3);
        let budget = HardwareBudget { bram_bits: 1 << 22, n_pe: 2, activation_bits: 8, weight_buffer_bits: 1 << 18 };
        let tiles = [(8, 8), (16, 16)];
        let result = explore(&net, &budget, &tiles, &ExploreConfig::default()).unwrap();
        // 4 groupings x 2 styles x 2 tiles
        assert_eq!(result.plans.len(), 16);
        // deterministic ordering
        let again = explore(&net, &budget, &tiles, &ExploreConfig::default()).unwrap();
        assert_eq!(result.plans, again.plans);
    }

    #[test]
    fn zero_budget_leaves_no_feasible_plans() {
        let net = chain(2);
        let budget = HardwareBudget { bram_bits: 0, n_pe: 1, activation_bits: 8, weight_buffer_bits: 1 << 16 };
        let result = explore(&net, &budget, &[(8, 8)], &ExploreConfig::default()).unwrap();
        assert!(result.feasible().next().is_none());
        assert!(!result.plans.is_empty());
    }

    #[test]
    fn pareto_subset_has_no_dominated_point() {
        let net = chain(4);
        let budget = HardwareBudget { bram_bits: 1 << 22, n_pe: 2, activation_bits: 8, weight_buffer_bits: 1 << 18 };
        let result = explore(&net, &budget, &[(8, 8), (16, 16)], &ExploreConfig::default()).unwrap();
        for &i in &result.pareto {
            for (j, q) in result.plans.iter().enumerate() {
                if i == j {
                    continue;
                }
                let p = &result.plans[i];
                let dominates = q.score.cycles <= p.score.cycles
                    && q.score.onchip_bits <= p.score.onchip_bits
                    && (q.score.cycles < p.score.cycles || q.score.onchip_bits < p.score.onchip_bits);
                assert!(!dominates, "plan {} dominated by {}", p.id, q.id);
            }
        }
    }
}
