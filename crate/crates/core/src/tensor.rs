//! NCHW tensor container for real and fixed-point values.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::format::ScalarFormat;
use crate::TensorError;

/// Tensor extents in NCHW order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Dims { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Backing storage; the variant must agree with the tensor's format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TensorData {
    Real(Vec<f64>),
    Fixed(Vec<i64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::Real(v) => v.len(),
            TensorData::Fixed(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A dense row-major NCHW tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor4D {
    pub dims: Dims,
    pub format: ScalarFormat,
    pub data: TensorData,
}

impl Tensor4D {
    pub fn new(dims: Dims, format: ScalarFormat, data: TensorData) -> Result<Self, TensorError> {
        if data.len() != dims.len() {
            return Err(TensorError::LengthMismatch { expected: dims.len(), actual: data.len() });
        }
        match (&format, &data) {
            (ScalarFormat::Real64, TensorData::Real(_)) => {}
            (ScalarFormat::Fixed { .. }, TensorData::Fixed(raw)) => {
                if let Some(&bad) = raw.iter().find(|&&v| !format.raw_in_range(v)) {
                    return Err(TensorError::ValueOutOfRange { raw: bad, format });
                }
            }
            _ => {
                return Err(TensorError::BadFormat(
                    "storage variant does not match scalar format".into(),
                ))
            }
        }
        Ok(Tensor4D { dims, format, data })
    }

    pub fn zeros(dims: Dims, format: ScalarFormat) -> Self {
        let data = match format {
            ScalarFormat::Real64 => TensorData::Real(vec![0.0; dims.len()]),
            ScalarFormat::Fixed { .. } => TensorData::Fixed(vec![0; dims.len()]),
        };
        Tensor4D { dims, format, data }
    }

    pub fn from_fixed(dims: Dims, format: ScalarFormat, raw: Vec<i64>) -> Result<Self, TensorError> {
        Self::new(dims, format, TensorData::Fixed(raw))
    }

    pub fn from_real(dims: Dims, values: Vec<f64>) -> Result<Self, TensorError> {
        Self::new(dims, ScalarFormat::Real64, TensorData::Real(values))
    }

    /// Uniformly random tensor over the full representable range (or
    /// [-1, 1] for real64), reproducible from the seed.
    pub fn seeded_random(dims: Dims, format: ScalarFormat, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random(dims, format, &mut rng)
    }

    pub fn random<R: Rng>(dims: Dims, format: ScalarFormat, rng: &mut R) -> Self {
        match format {
            ScalarFormat::Real64 => {
                let data = (0..dims.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                Tensor4D { dims, format, data: TensorData::Real(data) }
            }
            ScalarFormat::Fixed { .. } => {
                let (lo, hi) = format.raw_range().unwrap();
                let data = (0..dims.len()).map(|_| rng.random_range(lo..=hi)).collect();
                Tensor4D { dims, format, data: TensorData::Fixed(data) }
            }
        }
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.dims.c + c) * self.dims.h + h) * self.dims.w + w
    }

    pub fn fixed_data(&self) -> Result<&[i64], TensorError> {
        match &self.data {
            TensorData::Fixed(v) => Ok(v),
            TensorData::Real(_) => Err(TensorError::BadFormat("expected fixed tensor".into())),
        }
    }

    pub fn real_data(&self) -> Result<&[f64], TensorError> {
        match &self.data {
            TensorData::Real(v) => Ok(v),
            TensorData::Fixed(_) => Err(TensorError::BadFormat("expected real tensor".into())),
        }
    }

    /// Scan every stored value against the format range.
    pub fn validate_range(&self) -> Result<(), TensorError> {
        if let TensorData::Fixed(raw) = &self.data {
            if let Some(&bad) = raw.iter().find(|&&v| !self.format.raw_in_range(v)) {
                return Err(TensorError::ValueOutOfRange { raw: bad, format: self.format });
            }
        }
        Ok(())
    }

    /// Total storage bits under the format, the unit of traffic accounting.
    pub fn bits(&self) -> u64 {
        self.dims.len() as u64 * self.format.value_bits()
    }

    /// Lift a fixed tensor to its exact real values.
    pub fn to_real(&self) -> Result<Tensor4D, TensorError> {
        match &self.data {
            TensorData::Real(_) => Ok(self.clone()),
            TensorData::Fixed(raw) => {
                let values = raw.iter().map(|&v| self.format.dequantize(v)).collect();
                Tensor4D::from_real(self.dims, values)
            }
        }
    }

    /// Copy a spatial window `[h0, h0+h) x [w0, w0+w)` across all batches
    /// and channels.
    pub fn slice_spatial(&self, h0: usize, h: usize, w0: usize, w: usize) -> Result<Tensor4D, TensorError> {
        if h0 + h > self.dims.h || w0 + w > self.dims.w {
            return Err(TensorError::SliceOutOfBounds {
                dims: self.dims,
                h0,
                h,
                w0,
                w,
            });
        }
        let out_dims = Dims::new(self.dims.n, self.dims.c, h, w);
        let mut out = Tensor4D::zeros(out_dims, self.format);
        for n in 0..self.dims.n {
            for c in 0..self.dims.c {
                for row in 0..h {
                    let src = self.index(n, c, h0 + row, w0);
                    let dst = out.index(n, c, row, 0);
                    match (&self.data, &mut out.data) {
                        (TensorData::Real(s), TensorData::Real(d)) => {
                            d[dst..dst + w].copy_from_slice(&s[src..src + w]);
                        }
                        (TensorData::Fixed(s), TensorData::Fixed(d)) => {
                            d[dst..dst + w].copy_from_slice(&s[src..src + w]);
                        }
                        _ => unreachable!(),
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Per-output-channel bias. Fixed biases are raw codes at the accumulator
/// scale of the convolution they feed (input frac + weight frac).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Bias {
    Real(Vec<f64>),
    Fixed(Vec<i64>),
}

impl Bias {
    pub fn len(&self) -> usize {
        match self {
            Bias::Real(v) => v.len(),
            Bias::Fixed(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
