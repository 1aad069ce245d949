//! Block padding solver.
//!
//! Converting a convolution `(k, stride, padding)` into a block convolution
//! over N blocks means finding a per-block padding so that the per-block
//! output extents sum to the unblocked output extent. The solver works per
//! axis: each band of the grid gets a target output extent and the smallest
//! total padding that reaches it, split as evenly as possible across the
//! leading and trailing side (the trailing side takes the odd pixel).

use crate::ops::conv_out_extent;
use crate::BlockError;

/// Apportion the unblocked output extent across bands proportionally to the
/// band sizes, largest remainder first (ties go to the earlier band). For
/// "same" convolutions this reduces to each band producing its own extent.
pub fn apportion_outputs(total_out: usize, bands: &[usize]) -> Vec<usize> {
    let input: usize = bands.iter().sum();
    if input == 0 || bands.is_empty() {
        return vec![0; bands.len()];
    }
    let mut out: Vec<usize> = Vec::with_capacity(bands.len());
    let mut remainders: Vec<(usize, usize)> = Vec::with_capacity(bands.len());
    let mut assigned = 0;
    for (i, &b) in bands.iter().enumerate() {
        let num = total_out as u128 * b as u128;
        out.push((num / input as u128) as usize);
        remainders.push(((num % input as u128) as usize, i));
        assigned += out[i];
    }
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(total_out - assigned) {
        out[i] += 1;
    }
    out
}

/// Smallest per-side padding `(leading, trailing)` making one band of
/// `extent` rows produce `target` output rows under `(k, stride)`. Each
/// side is capped at `k - 1`; ties between equal totals resolve toward the
/// symmetric split.
pub fn solve_band_padding(extent: usize, k: usize, stride: usize, target: usize) -> Result<(usize, usize), BlockError> {
    if stride == 0 {
        return Err(BlockError::Tensor(crate::TensorError::ZeroStride));
    }
    let max_side = k - 1;
    let mut best_residual = i64::MAX;
    for total in 0..=2 * max_side {
        let padded = extent + total;
        if padded < k {
            continue;
        }
        let out = (padded - k) / stride + 1;
        let residual = out as i64 - target as i64;
        if residual == 0 {
            let lead = total / 2;
            return Ok((lead, total - lead));
        }
        best_residual = if residual.abs() < best_residual.abs() { residual } else { best_residual };
    }
    Err(BlockError::InfeasiblePadding {
        extent,
        k,
        stride,
        target,
        max: max_side,
        residual: if best_residual == i64::MAX { target as i64 } else { best_residual },
    })
}

/// Solve one axis of a grid: per-band targets from [`apportion_outputs`],
/// then one padding pair per band.
pub fn solve_bands(
    extent: usize,
    bands: &[usize],
    k: usize,
    stride: usize,
    orig_pad: usize,
) -> Result<Vec<(usize, usize)>, BlockError> {
    let total_out = conv_out_extent(extent, k, orig_pad, orig_pad, stride)?;
    let targets = apportion_outputs(total_out, bands);
    bands
        .iter()
        .zip(&targets)
        .map(|(&band, &target)| solve_band_padding(band, k, stride, target))
        .collect()
}

/// Solve the split equation for an even N-way split of one axis: find the
/// single `(leading, trailing)` padding under which each of the N blocks
/// produces exactly `1/N` of the unblocked output extent.
///
/// The strict equation requires the block count to divide the output
/// extent; a non-dividing count is reported as infeasible with the leftover
/// as the residual. Uneven grids go through the per-band solver
/// ([`solve_bands`]) instead.
pub fn solve_block_padding(
    extent: usize,
    k: usize,
    stride: usize,
    orig_pad: usize,
    blocks: usize,
) -> Result<(usize, usize), BlockError> {
    if blocks == 0 || blocks > extent {
        return Err(BlockError::BadCuts { extent, cuts: vec![blocks] });
    }
    let total_out = conv_out_extent(extent, k, orig_pad, orig_pad, stride)?;
    if total_out % blocks != 0 {
        return Err(BlockError::InfeasiblePadding {
            extent,
            k,
            stride,
            target: total_out,
            max: k - 1,
            residual: (total_out % blocks) as i64,
        });
    }
    let target = total_out / blocks;
    let base = extent / blocks;
    let rem = extent % blocks;
    let mut solution: Option<(usize, usize)> = None;
    for i in 0..blocks {
        let band = base + usize::from(i < rem);
        let pair = solve_band_padding(band, k, stride, target)?;
        match solution {
            None => solution = Some(pair),
            Some(prev) if prev == pair => {}
            Some(_) => {
                return Err(BlockError::Inconsistent(
                    "uneven split requires per-band padding; use solve_bands".into(),
                ))
            }
        }
    }
    Ok(solution.expect("at least one band"))
}
