//! Independent oracles for the integration suites.
//!
//! Everything in here is deliberately written from scratch against the
//! mathematical definitions — naive loop nests and explicit index
//! mirroring — and shares no code with the library paths it checks.

#![allow(dead_code)]

use blockconv::graph::{LayerDesc, MapShape, NetworkDesc};
use blockconv::{PadMode, ScalarFormat};

/// Raw NCHW tensor view for oracle arithmetic.
#[derive(Debug, Clone)]
pub struct RawTensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<i64>,
}

impl RawTensor {
    pub fn from_tensor(t: &blockconv::Tensor4D) -> RawTensor {
        RawTensor {
            n: t.dims.n,
            c: t.dims.c,
            h: t.dims.h,
            w: t.dims.w,
            data: t.fixed_data().unwrap().to_vec(),
        }
    }

    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> i64 {
        self.data[((n * self.c + c) * self.h + h) * self.w + w]
    }
}

/// Padded fetch by the mirror/clamp/zero rule, written as its own index
/// arithmetic.
pub fn oracle_padded_at(t: &RawTensor, n: usize, c: usize, row: i64, col: i64, mode: PadMode) -> i64 {
    let map = |pos: i64, extent: i64| -> Option<i64> {
        if (0..extent).contains(&pos) {
            return Some(pos);
        }
        match mode {
            PadMode::Zero => None,
            PadMode::Replicate => Some(pos.clamp(0, extent - 1)),
            PadMode::Reflect => {
                let m = if pos < 0 { -pos } else { 2 * (extent - 1) - pos };
                Some(m)
            }
        }
    };
    match (map(row, t.h as i64), map(col, t.w as i64)) {
        (Some(r), Some(c2)) => t.at(n, c, r as usize, c2 as usize),
        _ => 0,
    }
}

fn saturate(v: i64, bits: u32) -> i64 {
    let max = (1i64 << (bits - 1)) - 1;
    v.clamp(-max - 1, max)
}

fn requantize(acc: i64, shift: u32) -> i64 {
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

/// Seven-nested-loop convolution with implicit padding, no tiling, no
/// materialized pad. Weights are (kout, kin, k, k); bias raw codes sit at
/// the accumulator scale.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv(
    input: &RawTensor,
    weights: &RawTensor,
    bias: Option<&[i64]>,
    stride: usize,
    pads: (usize, usize, usize, usize), // top, bottom, left, right
    mode: PadMode,
    depthwise: bool,
    act_bits: u32,
    weight_frac: u32,
) -> RawTensor {
    let (top, bottom, left, right) = pads;
    let k = weights.h;
    let out_ch = weights.n;
    let out_h = (input.h + top + bottom - k) / stride + 1;
    let out_w = (input.w + left + right - k) / stride + 1;
    let mut data = Vec::with_capacity(input.n * out_ch * out_h * out_w);
    for n in 0..input.n {
        for oc in 0..out_ch {
            for oh in 0..out_h {
                for ow in 0..out_w {
                    let mut acc = bias.map_or(0, |b| b[oc]);
                    let in_channels = if depthwise { 1 } else { input.c };
                    for g in 0..in_channels {
                        let ic = if depthwise { oc } else { g };
                        let wc = if depthwise { 0 } else { g };
                        for kh in 0..k {
                            for kw in 0..k {
                                let row = (oh * stride + kh) as i64 - top as i64;
                                let col = (ow * stride + kw) as i64 - left as i64;
                                let v = oracle_padded_at(input, n, ic, row, col, mode);
                                acc += v * weights.at(oc, wc, kh, kw);
                            }
                        }
                    }
                    data.push(saturate(requantize(acc, weight_frac), act_bits));
                }
            }
        }
    }
    RawTensor { n: input.n, c: out_ch, h: out_h, w: out_w, data }
}

/// Direct window-scan max pooling.
pub fn naive_maxpool(input: &RawTensor, k: usize, stride: usize) -> RawTensor {
    let out_h = (input.h - k) / stride + 1;
    let out_w = (input.w - k) / stride + 1;
    let mut data = Vec::new();
    for n in 0..input.n {
        for c in 0..input.c {
            for oh in 0..out_h {
                for ow in 0..out_w {
                    let mut best = i64::MIN;
                    for kh in 0..k {
                        for kw in 0..k {
                            best = best.max(input.at(n, c, oh * stride + kh, ow * stride + kw));
                        }
                    }
                    data.push(best);
                }
            }
        }
    }
    RawTensor { n: input.n, c: input.c, h: out_h, w: out_w, data }
}

/// Element-wise saturating sum.
pub fn naive_add(a: &RawTensor, b: &RawTensor, act_bits: u32) -> RawTensor {
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| saturate(x + y, act_bits)).collect();
    RawTensor { data, ..a.clone() }
}

/// Full padded tensor built by the mirror/clamp rule, element by element.
pub fn naive_pad(input: &RawTensor, pads: (usize, usize, usize, usize), mode: PadMode) -> RawTensor {
    let (top, bottom, left, right) = pads;
    let out_h = input.h + top + bottom;
    let out_w = input.w + left + right;
    let mut data = Vec::with_capacity(input.n * input.c * out_h * out_w);
    for n in 0..input.n {
        for c in 0..input.c {
            for oh in 0..out_h {
                for ow in 0..out_w {
                    data.push(oracle_padded_at(
                        input,
                        n,
                        c,
                        oh as i64 - top as i64,
                        ow as i64 - left as i64,
                        mode,
                    ));
                }
            }
        }
    }
    RawTensor { n: input.n, c: input.c, h: out_h, w: out_w, data }
}

/// Deterministic small random networks for the simulator campaigns: at
/// most six compute layers, 16 channels, 32x32 maps. Every third seed
/// carries a residual block, every third a depthwise layer, every third a
/// pooling layer.
pub fn random_small_net(seed: u64) -> NetworkDesc {
    let act = ScalarFormat::fixed(8, 4).unwrap();
    let wfmt = ScalarFormat::fixed(8, 4).unwrap();
    let pick = |salt: u64, n: u64| -> usize { ((seed.wrapping_mul(0x9E37_79B9).wrapping_add(salt)) % n) as usize };

    let res = [8usize, 16, 24, 32][pick(1, 4)];
    let ch = [2usize, 4, 8, 16][pick(2, 4)];
    let in_ch = 1 + pick(3, 3);
    let mut layers = vec![LayerDesc::input("input"), LayerDesc::conv("c1", 3, 1, 1, in_ch, ch)];
    match seed % 3 {
        0 => {
            // residual block: two convs and an add back to c1's output
            layers.push(LayerDesc::conv("c2", 3, 1, 1, ch, ch));
            layers.push(LayerDesc::eltwise_add("add", "c1"));
            layers.push(LayerDesc::conv("c3", 1, 1, 0, ch, ch / 2 + 1));
        }
        1 => {
            // depthwise followed by pointwise
            layers.push(LayerDesc::depthwise("dw", 3, 1, 1, ch));
            layers.push(LayerDesc::conv("pw", 1, 1, 0, ch, ch));
            layers.push(LayerDesc::conv("c3", 3, 1, 1, ch, ch / 2 + 1));
        }
        _ => {
            // pooled chain
            layers.push(LayerDesc::conv("c2", 3, 1, 1, ch, ch));
            layers.push(LayerDesc::maxpool("p1", 2, 2));
            layers.push(LayerDesc::conv("c3", 3, 1, 1, ch, ch / 2 + 1));
        }
    }
    NetworkDesc {
        input_shape: MapShape::new(in_ch, res, res),
        activation_format: act,
        weight_format: wfmt,
        layers,
    }
}
