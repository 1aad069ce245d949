//! Block convolution: spatially independent tiled convolution.
//!
//! A feature map is split into blocks along a [`BlockGrid`], every block is
//! padded locally ([`BlockPadding`], solved so the concatenated output keeps
//! the unblocked output shape), convolved on its own, and the results are
//! spliced back together. No data crosses block boundaries: each block's
//! convolution sees only its own slice, which is what lets consecutive
//! layers fuse without buffering whole intermediate maps.

mod plan;
mod solver;

pub use plan::{
    blocked_forward, make_blocking_plan, BlockPredicate, BlockingPattern, BlockingPlan,
    LayerBlocking,
};
pub use solver::{apportion_outputs, solve_band_padding, solve_bands, solve_block_padding};

use serde::{Deserialize, Serialize};

use crate::format::{PadMode, PadSpec};
use crate::ops::{conv2d_ref, mac_count, pad, ConvCost, ConvParams};
use crate::tensor::{Bias, Dims, Tensor4D};
use crate::BlockError;

/// Partition of an `h x w` plane into rectangular blocks.
///
/// Cut positions are strictly increasing and strictly inside the extent, so
/// blocks tile the plane exactly: no overlap, no gap. Uneven partitions are
/// first-class (a 41-row map cut at 28 gives 28- and 13-row bands). Blocks
/// are ordered row-major everywhere.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockGrid {
    h: usize,
    w: usize,
    row_cuts: Vec<usize>,
    col_cuts: Vec<usize>,
}

impl BlockGrid {
    pub fn new(h: usize, w: usize, row_cuts: Vec<usize>, col_cuts: Vec<usize>) -> Result<Self, BlockError> {
        check_cuts(h, &row_cuts)?;
        check_cuts(w, &col_cuts)?;
        Ok(BlockGrid { h, w, row_cuts, col_cuts })
    }

    /// The trivial 1x1 grid covering the whole plane.
    pub fn whole(h: usize, w: usize) -> Self {
        BlockGrid { h, w, row_cuts: Vec::new(), col_cuts: Vec::new() }
    }

    /// Split into `rows x cols` blocks of near-equal size (larger bands
    /// first when the extent does not divide).
    pub fn even(h: usize, w: usize, rows: usize, cols: usize) -> Result<Self, BlockError> {
        Ok(BlockGrid {
            h,
            w,
            row_cuts: even_cuts(h, rows)?,
            col_cuts: even_cuts(w, cols)?,
        })
    }

    /// Cut every `t_r` rows and `t_c` cols; trailing bands may be smaller.
    pub fn tiled(h: usize, w: usize, t_r: usize, t_c: usize) -> Result<Self, BlockError> {
        if t_r == 0 || t_c == 0 {
            return Err(BlockError::BadCuts { extent: h, cuts: vec![0] });
        }
        let row_cuts = (1..).map(|i| i * t_r).take_while(|&c| c < h).collect();
        let col_cuts = (1..).map(|i| i * t_c).take_while(|&c| c < w).collect();
        Ok(BlockGrid { h, w, row_cuts, col_cuts })
    }

    /// Rebuild a grid from band sizes.
    pub fn from_bands(row_bands: &[usize], col_bands: &[usize]) -> Result<Self, BlockError> {
        let h = row_bands.iter().sum();
        let w = col_bands.iter().sum();
        let cuts = |bands: &[usize]| {
            let mut acc = 0;
            bands[..bands.len() - 1]
                .iter()
                .map(|b| {
                    acc += b;
                    acc
                })
                .collect::<Vec<_>>()
        };
        if row_bands.is_empty() || col_bands.is_empty() {
            return Err(BlockError::BadCuts { extent: 0, cuts: vec![] });
        }
        BlockGrid::new(h, w, cuts(row_bands), cuts(col_bands))
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn rows(&self) -> usize {
        self.row_cuts.len() + 1
    }

    pub fn cols(&self) -> usize {
        self.col_cuts.len() + 1
    }

    pub fn block_count(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn is_trivial(&self) -> bool {
        self.block_count() == 1
    }

    pub fn row_cuts(&self) -> &[usize] {
        &self.row_cuts
    }

    pub fn col_cuts(&self) -> &[usize] {
        &self.col_cuts
    }

    /// Band (start, length) pairs along the rows.
    pub fn row_bands(&self) -> Vec<(usize, usize)> {
        bands(self.h, &self.row_cuts)
    }

    pub fn col_bands(&self) -> Vec<(usize, usize)> {
        bands(self.w, &self.col_cuts)
    }

    pub fn row_band_sizes(&self) -> Vec<usize> {
        self.row_bands().into_iter().map(|(_, len)| len).collect()
    }

    pub fn col_band_sizes(&self) -> Vec<usize> {
        self.col_bands().into_iter().map(|(_, len)| len).collect()
    }
}

fn check_cuts(extent: usize, cuts: &[usize]) -> Result<(), BlockError> {
    let ok = extent > 0
        && cuts.windows(2).all(|w| w[0] < w[1])
        && cuts.iter().all(|&c| c > 0 && c < extent);
    if ok {
        Ok(())
    } else {
        Err(BlockError::BadCuts { extent, cuts: cuts.to_vec() })
    }
}

fn even_cuts(extent: usize, parts: usize) -> Result<Vec<usize>, BlockError> {
    if parts == 0 || parts > extent {
        return Err(BlockError::BadCuts { extent, cuts: vec![parts] });
    }
    let base = extent / parts;
    let rem = extent % parts;
    let mut cuts = Vec::with_capacity(parts - 1);
    let mut acc = 0;
    for i in 0..parts - 1 {
        acc += base + usize::from(i < rem);
        cuts.push(acc);
    }
    Ok(cuts)
}

fn bands(extent: usize, cuts: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for &c in cuts {
        out.push((start, c - start));
        start = c;
    }
    out.push((start, extent - start));
    out
}

/// Per-block padding: one per-side quadruple per block, plus the fill mode.
/// Blocks in the same row band share top/bottom amounts and blocks in the
/// same column band share left/right amounts when produced by the solver,
/// but arbitrary assignments are allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPadding {
    pub mode: PadMode,
    pub per_block: Vec<PadSpec>,
}

impl BlockPadding {
    pub fn uniform(mode: PadMode, spec: PadSpec, block_count: usize) -> Self {
        BlockPadding { mode, per_block: vec![spec; block_count] }
    }

    /// Solve the split equation for every block of `grid` against the
    /// unblocked convolution `(k, stride, orig_pad)`: per-band paddings are
    /// chosen so the per-block outputs sum to the unblocked output extent.
    pub fn solve(grid: &BlockGrid, k: usize, stride: usize, orig_pad: usize, mode: PadMode) -> Result<Self, BlockError> {
        let (h, w) = grid.extent();
        let row = solver::solve_bands(h, &grid.row_band_sizes(), k, stride, orig_pad)?;
        let col = solver::solve_bands(w, &grid.col_band_sizes(), k, stride, orig_pad)?;
        let mut per_block = Vec::with_capacity(grid.block_count());
        for &(top, bottom) in &row {
            for &(left, right) in &col {
                per_block.push(PadSpec { top, bottom, left, right });
            }
        }
        Ok(BlockPadding { mode, per_block })
    }
}

/// Cut a tensor into row-major blocks.
pub fn split_blocks(t: &Tensor4D, grid: &BlockGrid) -> Result<Vec<Tensor4D>, BlockError> {
    if grid.extent() != (t.dims.h, t.dims.w) {
        return Err(BlockError::Inconsistent(format!(
            "grid covers {}x{}, tensor is {}x{}",
            grid.extent().0,
            grid.extent().1,
            t.dims.h,
            t.dims.w
        )));
    }
    let mut blocks = Vec::with_capacity(grid.block_count());
    for (r0, rh) in grid.row_bands() {
        for (c0, cw) in grid.col_bands() {
            blocks.push(t.slice_spatial(r0, rh, c0, cw)?);
        }
    }
    Ok(blocks)
}

/// Splice row-major blocks back into one tensor. Block dims must agree with
/// the grid's bands exactly.
pub fn concat_blocks(blocks: &[Tensor4D], grid: &BlockGrid) -> Result<Tensor4D, BlockError> {
    if blocks.len() != grid.block_count() {
        return Err(BlockError::BlockCountMismatch {
            blocks: blocks.len(),
            rows: grid.rows(),
            cols: grid.cols(),
        });
    }
    let first = &blocks[0];
    let (h, w) = grid.extent();
    let out_dims = Dims::new(first.dims.n, first.dims.c, h, w);
    let mut out = Tensor4D::zeros(out_dims, first.format);
    let row_bands = grid.row_bands();
    let col_bands = grid.col_bands();
    for (bi, (r0, rh)) in row_bands.iter().enumerate() {
        for (bj, (c0, cw)) in col_bands.iter().enumerate() {
            let block = &blocks[bi * grid.cols() + bj];
            let expected = Dims::new(first.dims.n, first.dims.c, *rh, *cw);
            if block.dims != expected || block.format != first.format {
                return Err(BlockError::BlockDimsMismatch {
                    row: bi,
                    col: bj,
                    expected,
                    actual: block.dims,
                });
            }
            for n in 0..block.dims.n {
                for c in 0..block.dims.c {
                    for row in 0..*rh {
                        let src = block.index(n, c, row, 0);
                        let dst = out.index(n, c, r0 + row, *c0);
                        use crate::tensor::TensorData::*;
                        match (&block.data, &mut out.data) {
                            (Real(s), Real(d)) => d[dst..dst + cw].copy_from_slice(&s[src..src + cw]),
                            (Fixed(s), Fixed(d)) => d[dst..dst + cw].copy_from_slice(&s[src..src + cw]),
                            _ => unreachable!(),
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Block convolution: split, pad each block locally, convolve each block
/// independently, splice the results.
///
/// Every block's convolution sees only that block's slice; replicate and
/// reflect padding draw from the block's own boundary. With a padding that
/// satisfies the split equation the result has the unblocked output shape.
pub fn block_conv2d(
    input: &Tensor4D,
    weights: &Tensor4D,
    bias: Option<&Bias>,
    grid: &BlockGrid,
    bpad: &BlockPadding,
    stride: usize,
    depthwise: bool,
) -> Result<Tensor4D, BlockError> {
    if bpad.per_block.len() != grid.block_count() {
        return Err(BlockError::Inconsistent(format!(
            "{} paddings for {} blocks",
            bpad.per_block.len(),
            grid.block_count()
        )));
    }
    let blocks = split_blocks(input, grid)?;
    let mut outputs = Vec::with_capacity(blocks.len());
    for (block, spec) in blocks.iter().zip(&bpad.per_block) {
        let padded = pad(block, *spec, bpad.mode)?;
        let params = ConvParams {
            stride,
            padding: PadSpec::default(),
            pad_mode: PadMode::Zero,
            depthwise,
        };
        outputs.push(conv2d_ref(&padded, weights, bias, &params)?);
    }
    // bands of the output grid come from the per-block output extents and
    // must be consistent along each band
    let cols = grid.cols();
    let out_row_bands: Vec<usize> = outputs.iter().step_by(cols).map(|b| b.dims.h).collect();
    let out_col_bands: Vec<usize> = outputs[..cols].iter().map(|b| b.dims.w).collect();
    for (idx, block) in outputs.iter().enumerate() {
        let (bi, bj) = (idx / cols, idx % cols);
        if block.dims.h != out_row_bands[bi] || block.dims.w != out_col_bands[bj] {
            return Err(BlockError::Inconsistent(format!(
                "block ({bi}, {bj}) output {}x{} breaks band structure",
                block.dims.h, block.dims.w
            )));
        }
    }
    let out_grid = BlockGrid::from_bands(&out_row_bands, &out_col_bands)?;
    concat_blocks(&outputs, &out_grid)
}

/// Operation counts of a block convolution: the per-block counts summed.
/// With a padding that satisfies the split equation this equals the
/// unblocked [`mac_count`].
pub fn mac_count_blocked(
    in_ch: usize,
    grid: &BlockGrid,
    bpad: &BlockPadding,
    out_ch: usize,
    k: usize,
    stride: usize,
    depthwise: bool,
) -> Result<ConvCost, BlockError> {
    let mut total = ConvCost { kernel_applications: 0, macs: 0 };
    let row_bands = grid.row_bands();
    let col_bands = grid.col_bands();
    for (bi, (_, rh)) in row_bands.iter().enumerate() {
        for (bj, (_, cw)) in col_bands.iter().enumerate() {
            let spec = bpad.per_block[bi * grid.cols() + bj];
            let cost = mac_count(in_ch, *rh, *cw, out_ch, k, stride, spec, depthwise)?;
            total = total + cost;
        }
    }
    Ok(total)
}
