//! Reference tensor kernels: convolution, pooling, padding, element-wise
//! addition and operation counting.
//!
//! `conv2d_ref` materializes its padding and is the correctness oracle for
//! every other convolution path in the crate. `conv2d_virtual` computes the
//! same function by index manipulation without materializing the pad; the
//! fused dataflow simulator uses it so that padded tiles never occupy
//! modeled buffer space.

use crate::format::{padded_source_index, round_half_away, PadMode, PadSpec, ScalarFormat};
use crate::tensor::{Bias, Dims, Tensor4D, TensorData};
use crate::TensorError;

/// Convolution configuration. Padding amounts are per side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub stride: usize,
    pub padding: PadSpec,
    pub pad_mode: PadMode,
    pub depthwise: bool,
}

impl ConvParams {
    pub fn new(stride: usize, padding: PadSpec, pad_mode: PadMode) -> Self {
        ConvParams { stride, padding, pad_mode, depthwise: false }
    }

    pub fn uniform(stride: usize, padding: usize) -> Self {
        Self::new(stride, PadSpec::uniform(padding), PadMode::Zero)
    }
}

/// Output extent of a strided window sweep over a padded extent.
pub fn conv_out_extent(extent: usize, k: usize, lead: usize, trail: usize, stride: usize) -> Result<usize, TensorError> {
    if stride == 0 {
        return Err(TensorError::ZeroStride);
    }
    let padded = extent + lead + trail;
    if padded < k {
        return Err(TensorError::KernelExceedsInput { k, extent: padded });
    }
    Ok((padded - k) / stride + 1)
}

struct ConvShape {
    out: Dims,
    k: usize,
    in_per_group: usize,
}

fn check_conv(input: &Tensor4D, weights: &Tensor4D, bias: Option<&Bias>, params: &ConvParams) -> Result<ConvShape, TensorError> {
    let k = weights.dims.h;
    if weights.dims.w != k {
        return Err(TensorError::ShapeMismatch(format!(
            "weights must be square, got {}x{}",
            weights.dims.h, weights.dims.w
        )));
    }
    let out_ch = weights.dims.n;
    let in_per_group = if params.depthwise {
        if weights.dims.c != 1 {
            return Err(TensorError::ShapeMismatch(format!(
                "depthwise weights must have a single input channel, got {}",
                weights.dims.c
            )));
        }
        if out_ch != input.dims.c {
            return Err(TensorError::ShapeMismatch(format!(
                "depthwise output channels {} must equal input channels {}",
                out_ch, input.dims.c
            )));
        }
        1
    } else {
        if weights.dims.c != input.dims.c {
            return Err(TensorError::ShapeMismatch(format!(
                "weights expect {} input channels, tensor has {}",
                weights.dims.c, input.dims.c
            )));
        }
        input.dims.c
    };
    if let Some(b) = bias {
        if b.len() != out_ch {
            return Err(TensorError::ShapeMismatch(format!(
                "bias length {} does not match output channels {}",
                b.len(),
                out_ch
            )));
        }
    }
    let out_h = conv_out_extent(input.dims.h, k, params.padding.top, params.padding.bottom, params.stride)?;
    let out_w = conv_out_extent(input.dims.w, k, params.padding.left, params.padding.right, params.stride)?;
    Ok(ConvShape { out: Dims::new(input.dims.n, out_ch, out_h, out_w), k, in_per_group })
}

/// Requantization shift from the accumulator scale back to the activation
/// scale: products carry `frac_in + frac_w` fractional bits.
fn requant_shift(input: &ScalarFormat, weights: &ScalarFormat) -> Result<u32, TensorError> {
    match (input, weights) {
        (ScalarFormat::Fixed { .. }, ScalarFormat::Fixed { frac, .. }) => Ok(*frac),
        _ => Err(TensorError::BadFormat(
            "fixed convolution requires fixed input and weights".into(),
        )),
    }
}

/// Reference convolution: materialized padding followed by a direct loop
/// nest. Fixed tensors accumulate in 64-bit integers, then requantize with
/// round-half-away-from-zero and saturate into the input's format.
pub fn conv2d_ref(input: &Tensor4D, weights: &Tensor4D, bias: Option<&Bias>, params: &ConvParams) -> Result<Tensor4D, TensorError> {
    let shape = check_conv(input, weights, bias, params)?;
    let padded = pad(input, params.padding, params.pad_mode)?;
    let mut out = Tensor4D::zeros(shape.out, input.format);
    match (&padded.data, &weights.data) {
        (TensorData::Fixed(inp), TensorData::Fixed(wts)) => {
            let shift = requant_shift(&input.format, &weights.format)?;
            let b = match bias {
                None => None,
                Some(Bias::Fixed(v)) => Some(v.as_slice()),
                Some(Bias::Real(_)) => {
                    return Err(TensorError::BadFormat("fixed convolution requires a fixed bias".into()))
                }
            };
            let dst = match &mut out.data {
                TensorData::Fixed(v) => v,
                _ => unreachable!(),
            };
            conv_loop_fixed(&padded, inp, weights, wts, b, params, &shape, shift, input.format, dst);
        }
        (TensorData::Real(inp), TensorData::Real(wts)) => {
            let b = match bias {
                None => None,
                Some(Bias::Real(v)) => Some(v.as_slice()),
                Some(Bias::Fixed(_)) => {
                    return Err(TensorError::BadFormat("real convolution requires a real bias".into()))
                }
            };
            let dst = match &mut out.data {
                TensorData::Real(v) => v,
                _ => unreachable!(),
            };
            conv_loop_real(&padded, inp, weights, wts, b, params, &shape, dst);
        }
        _ => return Err(TensorError::BadFormat("input and weights must share a storage kind".into())),
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn conv_loop_fixed(
    padded: &Tensor4D,
    inp: &[i64],
    weights: &Tensor4D,
    wts: &[i64],
    bias: Option<&[i64]>,
    params: &ConvParams,
    shape: &ConvShape,
    shift: u32,
    out_fmt: ScalarFormat,
    dst: &mut [i64],
) {
    let k = shape.k;
    let s = params.stride;
    let (out_h, out_w) = (shape.out.h, shape.out.w);
    // accumulate one output plane per (batch, out channel); the innermost
    // loop runs over a full output row, which vectorizes. Products of
    // in-range raw codes cannot overflow the 64-bit accumulator at any
    // desk-scale shape, so the MAC runs wrapping.
    let mut acc = vec![0i64; out_h * out_w];
    for n in 0..shape.out.n {
        for oc in 0..shape.out.c {
            acc.fill(bias.map_or(0, |b| b[oc]));
            for g in 0..shape.in_per_group {
                let ic = if params.depthwise { oc } else { g };
                let wc = if params.depthwise { 0 } else { g };
                for kh in 0..k {
                    for kw in 0..k {
                        let wv = wts[weights.index(oc, wc, kh, kw)];
                        if wv == 0 {
                            continue;
                        }
                        for oh in 0..out_h {
                            let ib = padded.index(n, ic, oh * s + kh, kw);
                            let orow = &mut acc[oh * out_w..(oh + 1) * out_w];
                            if s == 1 {
                                let irow = &inp[ib..ib + out_w];
                                for j in 0..out_w {
                                    orow[j] = orow[j].wrapping_add(irow[j].wrapping_mul(wv));
                                }
                            } else {
                                for (j, o) in orow.iter_mut().enumerate() {
                                    *o = o.wrapping_add(inp[ib + j * s].wrapping_mul(wv));
                                }
                            }
                        }
                    }
                }
            }
            let base = (n * shape.out.c + oc) * out_h * out_w;
            for (j, &a) in acc.iter().enumerate() {
                dst[base + j] = out_fmt.saturate(round_half_away(a, shift));
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_loop_real(
    padded: &Tensor4D,
    inp: &[f64],
    weights: &Tensor4D,
    wts: &[f64],
    bias: Option<&[f64]>,
    params: &ConvParams,
    shape: &ConvShape,
    dst: &mut [f64],
) {
    let k = shape.k;
    let s = params.stride;
    let (out_h, out_w) = (shape.out.h, shape.out.w);
    for n in 0..shape.out.n {
        for oc in 0..shape.out.c {
            let base = (n * shape.out.c + oc) * out_h * out_w;
            let acc = &mut dst[base..base + out_h * out_w];
            acc.fill(bias.map_or(0.0, |b| b[oc]));
            for g in 0..shape.in_per_group {
                let ic = if params.depthwise { oc } else { g };
                let wc = if params.depthwise { 0 } else { g };
                for kh in 0..k {
                    for kw in 0..k {
                        let wv = wts[weights.index(oc, wc, kh, kw)];
                        for oh in 0..out_h {
                            let ib = padded.index(n, ic, oh * s + kh, kw);
                            let orow = &mut acc[oh * out_w..(oh + 1) * out_w];
                            for (j, o) in orow.iter_mut().enumerate() {
                                *o += inp[ib + j * s] * wv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Same function as [`conv2d_ref`] computed with on-the-fly padding: border
/// contributions come from index mapping instead of a materialized pad.
pub fn conv2d_virtual(input: &Tensor4D, weights: &Tensor4D, bias: Option<&Bias>, params: &ConvParams) -> Result<Tensor4D, TensorError> {
    let shape = check_conv(input, weights, bias, params)?;
    check_reflect(&params.padding, params.pad_mode, input.dims.h, input.dims.w)?;
    let mut out = Tensor4D::zeros(shape.out, input.format);
    let k = shape.k;
    let s = params.stride;
    let (h, w) = (input.dims.h, input.dims.w);
    match (&input.data, &weights.data) {
        (TensorData::Fixed(inp), TensorData::Fixed(wts)) => {
            let shift = requant_shift(&input.format, &weights.format)?;
            let b = match bias {
                None => None,
                Some(Bias::Fixed(v)) => Some(v.as_slice()),
                Some(Bias::Real(_)) => {
                    return Err(TensorError::BadFormat("fixed convolution requires a fixed bias".into()))
                }
            };
            let dst = match &mut out.data {
                TensorData::Fixed(v) => v,
                _ => unreachable!(),
            };
            let (out_h, out_w) = (shape.out.h, shape.out.w);
            let (top, left) = (params.padding.top as i64, params.padding.left as i64);
            let mut acc = vec![0i64; out_h * out_w];
            for n in 0..shape.out.n {
                for oc in 0..shape.out.c {
                    acc.fill(b.map_or(0, |b| b[oc]));
                    for g in 0..shape.in_per_group {
                        let ic = if params.depthwise { oc } else { g };
                        let wc = if params.depthwise { 0 } else { g };
                        for kh in 0..k {
                            for kw in 0..k {
                                let wv = wts[weights.index(oc, wc, kh, kw)];
                                if wv == 0 {
                                    continue;
                                }
                                // columns whose source j*s + kw - left lies
                                // inside [0, w) take the fast row path;
                                // border columns resolve per mode
                                let off = kw as i64 - left;
                                let j_lo = if off >= 0 { 0 } else { (-off + s as i64 - 1) / s as i64 } as usize;
                                let j_hi_excl = (((w as i64 - 1 - off) / s as i64) + 1).clamp(0, out_w as i64) as usize;
                                for oh in 0..out_h {
                                    let row = oh as i64 * s as i64 + kh as i64 - top;
                                    let Some(sr) = padded_source_index(row, h, params.pad_mode) else {
                                        continue;
                                    };
                                    let row_base = input.index(n, ic, sr, 0);
                                    let orow = &mut acc[oh * out_w..(oh + 1) * out_w];
                                    for (j, o) in orow.iter_mut().enumerate().take(j_lo.min(out_w)) {
                                        let col = j as i64 * s as i64 + off;
                                        if let Some(sc) = padded_source_index(col, w, params.pad_mode) {
                                            *o = o.wrapping_add(inp[row_base + sc].wrapping_mul(wv));
                                        }
                                    }
                                    if j_lo < j_hi_excl {
                                        let src0 = (j_lo as i64 * s as i64 + off) as usize;
                                        if s == 1 {
                                            let irow = &inp[row_base + src0..row_base + src0 + (j_hi_excl - j_lo)];
                                            let mid = &mut orow[j_lo..j_hi_excl];
                                            for (o, &v) in mid.iter_mut().zip(irow) {
                                                *o = o.wrapping_add(v.wrapping_mul(wv));
                                            }
                                        } else {
                                            for (step, o) in orow[j_lo..j_hi_excl].iter_mut().enumerate() {
                                                let src = row_base + src0 + step * s;
                                                *o = o.wrapping_add(inp[src].wrapping_mul(wv));
                                            }
                                        }
                                    }
                                    for (j, o) in orow.iter_mut().enumerate().skip(j_hi_excl.max(j_lo)) {
                                        let col = j as i64 * s as i64 + off;
                                        if let Some(sc) = padded_source_index(col, w, params.pad_mode) {
                                            *o = o.wrapping_add(inp[row_base + sc].wrapping_mul(wv));
                                        }
                                    }
                                }
                            }
                        }
                    }
                    let base = (n * shape.out.c + oc) * out_h * out_w;
                    for (j, &a) in acc.iter().enumerate() {
                        dst[base + j] = input.format.saturate(round_half_away(a, shift));
                    }
                }
            }
        }
        (TensorData::Real(inp), TensorData::Real(wts)) => {
            let b = match bias {
                None => None,
                Some(Bias::Real(v)) => Some(v.as_slice()),
                Some(Bias::Fixed(_)) => {
                    return Err(TensorError::BadFormat("real convolution requires a real bias".into()))
                }
            };
            let dst = match &mut out.data {
                TensorData::Real(v) => v,
                _ => unreachable!(),
            };
            let mut di = 0;
            for n in 0..shape.out.n {
                for oc in 0..shape.out.c {
                    let bias_acc = b.map_or(0.0, |b| b[oc]);
                    for oh in 0..shape.out.h {
                        for ow in 0..shape.out.w {
                            let mut acc = bias_acc;
                            for g in 0..shape.in_per_group {
                                let ic = if params.depthwise { oc } else { g };
                                let wc = if params.depthwise { 0 } else { g };
                                for kh in 0..k {
                                    let row = oh as i64 * s as i64 + kh as i64 - params.padding.top as i64;
                                    let Some(sr) = padded_source_index(row, h, params.pad_mode) else {
                                        continue;
                                    };
                                    for kw in 0..k {
                                        let col = ow as i64 * s as i64 + kw as i64 - params.padding.left as i64;
                                        let Some(sc) = padded_source_index(col, w, params.pad_mode) else {
                                            continue;
                                        };
                                        acc += inp[input.index(n, ic, sr, sc)]
                                            * wts[weights.index(oc, wc, kh, kw)];
                                    }
                                }
                            }
                            dst[di] = acc;
                            di += 1;
                        }
                    }
                }
            }
        }
        _ => return Err(TensorError::BadFormat("input and weights must share a storage kind".into())),
    }
    Ok(out)
}

fn check_reflect(amounts: &PadSpec, mode: PadMode, h: usize, w: usize) -> Result<(), TensorError> {
    if mode != PadMode::Reflect {
        return Ok(());
    }
    for (amount, extent) in [
        (amounts.top, h),
        (amounts.bottom, h),
        (amounts.left, w),
        (amounts.right, w),
    ] {
        if amount >= extent {
            return Err(TensorError::ReflectTooLarge { amount, extent });
        }
    }
    Ok(())
}

/// Pad a tensor on each spatial side. Zero fills with the raw zero code,
/// replicate copies boundary pixels outward, reflect mirrors with the
/// boundary pixel as the axis.
pub fn pad(input: &Tensor4D, amounts: PadSpec, mode: PadMode) -> Result<Tensor4D, TensorError> {
    check_reflect(&amounts, mode, input.dims.h, input.dims.w)?;
    if amounts.is_zero() {
        return Ok(input.clone());
    }
    let out_dims = Dims::new(
        input.dims.n,
        input.dims.c,
        input.dims.h + amounts.vertical(),
        input.dims.w + amounts.horizontal(),
    );
    let mut out = Tensor4D::zeros(out_dims, input.format);
    for n in 0..out_dims.n {
        for c in 0..out_dims.c {
            for oh in 0..out_dims.h {
                let src_h = padded_source_index(oh as i64 - amounts.top as i64, input.dims.h, mode);
                for ow in 0..out_dims.w {
                    let src_w = padded_source_index(ow as i64 - amounts.left as i64, input.dims.w, mode);
                    let (Some(sh), Some(sw)) = (src_h, src_w) else {
                        continue; // zeros() already filled the border
                    };
                    let si = input.index(n, c, sh, sw);
                    let di = out.index(n, c, oh, ow);
                    match (&input.data, &mut out.data) {
                        (TensorData::Real(s), TensorData::Real(d)) => d[di] = s[si],
                        (TensorData::Fixed(s), TensorData::Fixed(d)) => d[di] = s[si],
                        _ => unreachable!(),
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Max pooling with an unpadded strided window.
pub fn maxpool2d(input: &Tensor4D, k: usize, stride: usize) -> Result<Tensor4D, TensorError> {
    if stride == 0 {
        return Err(TensorError::ZeroStride);
    }
    if k > input.dims.h {
        return Err(TensorError::WindowExceedsInput { k, extent: input.dims.h });
    }
    if k > input.dims.w {
        return Err(TensorError::WindowExceedsInput { k, extent: input.dims.w });
    }
    let out_h = (input.dims.h - k) / stride + 1;
    let out_w = (input.dims.w - k) / stride + 1;
    let out_dims = Dims::new(input.dims.n, input.dims.c, out_h, out_w);
    let mut out = Tensor4D::zeros(out_dims, input.format);
    for n in 0..out_dims.n {
        for c in 0..out_dims.c {
            for oh in 0..out_h {
                for ow in 0..out_w {
                    let di = out.index(n, c, oh, ow);
                    match (&input.data, &mut out.data) {
                        (TensorData::Fixed(s), TensorData::Fixed(d)) => {
                            let mut best = i64::MIN;
                            for kh in 0..k {
                                let base = input.index(n, c, oh * stride + kh, ow * stride);
                                for &v in &s[base..base + k] {
                                    best = best.max(v);
                                }
                            }
                            d[di] = best;
                        }
                        (TensorData::Real(s), TensorData::Real(d)) => {
                            let mut best = f64::NEG_INFINITY;
                            for kh in 0..k {
                                let base = input.index(n, c, oh * stride + kh, ow * stride);
                                for &v in &s[base..base + k] {
                                    best = best.max(v);
                                }
                            }
                            d[di] = best;
                        }
                        _ => unreachable!(),
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Element-wise saturating sum of two tensors with identical dims and format.
pub fn eltwise_add(a: &Tensor4D, b: &Tensor4D) -> Result<Tensor4D, TensorError> {
    if a.dims != b.dims {
        return Err(TensorError::ShapeMismatch(format!("{} vs {}", a.dims, b.dims)));
    }
    if a.format != b.format {
        return Err(TensorError::BadFormat("element-wise add requires matching formats".into()));
    }
    let data = match (&a.data, &b.data) {
        (TensorData::Fixed(x), TensorData::Fixed(y)) => TensorData::Fixed(
            x.iter().zip(y).map(|(&p, &q)| a.format.saturate(p + q)).collect(),
        ),
        (TensorData::Real(x), TensorData::Real(y)) => {
            TensorData::Real(x.iter().zip(y).map(|(&p, &q)| p + q).collect())
        }
        _ => unreachable!(),
    };
    Ok(Tensor4D { dims: a.dims, format: a.format, data })
}

/// Kernel-application and multiply-accumulate counts of a convolution.
///
/// One kernel application is a single k x k window dot product; a dense
/// convolution applies the kernel once per (output pixel, input channel,
/// output channel), a depthwise one once per (output pixel, channel).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvCost {
    pub kernel_applications: u64,
    pub macs: u64,
}

impl std::ops::Add for ConvCost {
    type Output = ConvCost;
    fn add(self, rhs: ConvCost) -> ConvCost {
        ConvCost {
            kernel_applications: self.kernel_applications + rhs.kernel_applications,
            macs: self.macs + rhs.macs,
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn mac_count(
    in_ch: usize,
    h: usize,
    w: usize,
    out_ch: usize,
    k: usize,
    stride: usize,
    padding: PadSpec,
    depthwise: bool,
) -> Result<ConvCost, TensorError> {
    let out_h = conv_out_extent(h, k, padding.top, padding.bottom, stride)?;
    let out_w = conv_out_extent(w, k, padding.left, padding.right, stride)?;
    let pixels = out_h as u64 * out_w as u64;
    let kernel_applications = if depthwise {
        pixels * in_ch as u64
    } else {
        pixels * in_ch as u64 * out_ch as u64
    };
    Ok(ConvCost { kernel_applications, macs: kernel_applications * (k * k) as u64 })
}
