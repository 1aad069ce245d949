//! Scalar formats and padding descriptors shared by every kernel.

use serde::{Deserialize, Serialize};

use crate::TensorError;

/// Numeric format of the values stored in a tensor.
///
/// `Real64` is used by oracles and tests only; simulated dataflows always
/// run on `Fixed` tensors. A `Fixed` value is a signed integer raw code of
/// at most `bits` bits with `frac` fractional bits, i.e. it represents
/// `raw / 2^frac`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarFormat {
    Real64,
    Fixed { bits: u32, frac: u32 },
}

impl ScalarFormat {
    pub fn fixed(bits: u32, frac: u32) -> Result<Self, TensorError> {
        if !matches!(bits, 4 | 8 | 16) {
            return Err(TensorError::BadFormat(format!(
                "fixed bitwidth must be 4, 8 or 16, got {bits}"
            )));
        }
        if frac > bits {
            return Err(TensorError::BadFormat(format!(
                "fraction bits {frac} exceed bitwidth {bits}"
            )));
        }
        Ok(ScalarFormat::Fixed { bits, frac })
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, ScalarFormat::Fixed { .. })
    }

    /// Storage width in bits of one value under this format. This is what
    /// traffic and buffer accounting use.
    pub fn value_bits(&self) -> u64 {
        match self {
            ScalarFormat::Real64 => 64,
            ScalarFormat::Fixed { bits, .. } => u64::from(*bits),
        }
    }

    /// Inclusive raw range of a fixed format.
    pub fn raw_range(&self) -> Option<(i64, i64)> {
        match self {
            ScalarFormat::Real64 => None,
            ScalarFormat::Fixed { bits, .. } => {
                let max = (1i64 << (bits - 1)) - 1;
                Some((-max - 1, max))
            }
        }
    }

    pub fn raw_in_range(&self, raw: i64) -> bool {
        match self.raw_range() {
            Some((lo, hi)) => raw >= lo && raw <= hi,
            None => true,
        }
    }

    /// Clamp a raw code into the representable range.
    pub fn saturate(&self, raw: i64) -> i64 {
        match self.raw_range() {
            Some((lo, hi)) => raw.clamp(lo, hi),
            None => raw,
        }
    }

    /// Quantize a real value to this format's raw code, rounding half away
    /// from zero and saturating.
    pub fn quantize_real(&self, value: f64) -> i64 {
        match self {
            ScalarFormat::Real64 => panic!("quantize_real on a real64 format"),
            ScalarFormat::Fixed { frac, .. } => {
                let scaled = value * f64::from(1u32 << frac);
                let rounded = if scaled >= 0.0 {
                    (scaled + 0.5).floor()
                } else {
                    (scaled - 0.5).ceil()
                };
                self.saturate(rounded as i64)
            }
        }
    }

    /// Real value represented by a raw code of this format.
    pub fn dequantize(&self, raw: i64) -> f64 {
        match self {
            ScalarFormat::Real64 => panic!("dequantize on a real64 format"),
            ScalarFormat::Fixed { frac, .. } => raw as f64 / f64::from(1u32 << frac),
        }
    }
}

/// Divide a wide accumulator by `2^shift`, rounding half away from zero.
pub fn round_half_away(acc: i64, shift: u32) -> i64 {
    if shift == 0 {
        return acc;
    }
    let half = 1i64 << (shift - 1);
    if acc >= 0 {
        (acc + half) >> shift
    } else {
        -((-acc + half) >> shift)
    }
}

/// Boundary fill rule used when padding a tensor or a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    Zero,
    Replicate,
    Reflect,
}

/// Per-side padding amounts. Asymmetric padding is first-class: block
/// padding frequently needs a different leading and trailing amount.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PadSpec {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl PadSpec {
    pub fn new(top: usize, bottom: usize, left: usize, right: usize) -> Self {
        PadSpec { top, bottom, left, right }
    }

    pub fn uniform(p: usize) -> Self {
        PadSpec { top: p, bottom: p, left: p, right: p }
    }

    pub fn is_zero(&self) -> bool {
        self.top == 0 && self.bottom == 0 && self.left == 0 && self.right == 0
    }

    pub fn vertical(&self) -> usize {
        self.top + self.bottom
    }

    pub fn horizontal(&self) -> usize {
        self.left + self.right
    }
}

/// Map a possibly out-of-range coordinate into the source extent according
/// to the pad mode. Returns `None` for zero padding outside the extent.
///
/// Reflect mirrors with the boundary pixel as the axis, so the boundary
/// pixel itself is not duplicated; it requires the overshoot to stay below
/// the extent.
pub fn padded_source_index(pos: i64, extent: usize, mode: PadMode) -> Option<usize> {
    let n = extent as i64;
    if pos >= 0 && pos < n {
        return Some(pos as usize);
    }
    match mode {
        PadMode::Zero => None,
        PadMode::Replicate => Some(pos.clamp(0, n - 1) as usize),
        PadMode::Reflect => {
            let m = if pos < 0 { -pos } else { 2 * (n - 1) - pos };
            debug_assert!(m >= 0 && m < n, "reflect overshoot must be checked by caller");
            Some(m as usize)
        }
    }
}
