//! Network description, shape inference and feature-map volume analysis.
//!
//! Networks are a chain of layers with optional residual edges: each layer
//! consumes its chain predecessor's output, and an `eltwise_add` layer
//! additionally consumes the output of an earlier layer named by
//! `residual_source`. Fully-connected layers are out of the model; the
//! planner and simulators operate on convolutional bodies.

mod presets;
mod rewrite;

pub use presets::{preset, PRESET_NAMES};
pub use rewrite::stride_to_pool_rewrite;

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::format::{PadSpec, ScalarFormat};
use crate::tensor::{Bias, Dims, Tensor4D};
use crate::GraphError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    /// Pass-through marker for the network input; residual edges may name it.
    Input,
    /// Pass-through marker for the network output.
    Output,
    Conv {
        k: usize,
        stride: usize,
        padding: usize,
        in_ch: usize,
        out_ch: usize,
        #[serde(default)]
        depthwise: bool,
    },
    #[serde(rename = "maxpool")]
    MaxPool { k: usize, stride: usize },
    EltwiseAdd { residual_source: String },
}

impl LayerKind {
    pub fn is_conv(&self) -> bool {
        matches!(self, LayerKind::Conv { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDesc {
    pub id: String,
    #[serde(flatten)]
    pub kind: LayerKind,
}

impl LayerDesc {
    pub fn conv(id: &str, k: usize, stride: usize, padding: usize, in_ch: usize, out_ch: usize) -> Self {
        LayerDesc {
            id: id.into(),
            kind: LayerKind::Conv { k, stride, padding, in_ch, out_ch, depthwise: false },
        }
    }

    pub fn depthwise(id: &str, k: usize, stride: usize, padding: usize, ch: usize) -> Self {
        LayerDesc {
            id: id.into(),
            kind: LayerKind::Conv { k, stride, padding, in_ch: ch, out_ch: ch, depthwise: true },
        }
    }

    pub fn maxpool(id: &str, k: usize, stride: usize) -> Self {
        LayerDesc { id: id.into(), kind: LayerKind::MaxPool { k, stride } }
    }

    pub fn eltwise_add(id: &str, residual_source: &str) -> Self {
        LayerDesc { id: id.into(), kind: LayerKind::EltwiseAdd { residual_source: residual_source.into() } }
    }

    pub fn input(id: &str) -> Self {
        LayerDesc { id: id.into(), kind: LayerKind::Input }
    }

    pub fn output(id: &str) -> Self {
        LayerDesc { id: id.into(), kind: LayerKind::Output }
    }
}

/// Spatial shape of one feature map: channels x rows x cols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapShape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl MapShape {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        MapShape { c, h, w }
    }

    pub fn volume_bits(&self, value_bits: u64) -> u64 {
        self.c as u64 * self.h as u64 * self.w as u64 * value_bits
    }

    /// Batch-1 tensor dims for this map.
    pub fn dims(&self) -> Dims {
        Dims::new(1, self.c, self.h, self.w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDesc {
    pub input_shape: MapShape,
    pub activation_format: ScalarFormat,
    pub weight_format: ScalarFormat,
    pub layers: Vec<LayerDesc>,
}

/// Input and output map shape of each layer, in layer order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShapes {
    pub input: Vec<MapShape>,
    pub output: Vec<MapShape>,
}

impl NetworkDesc {
    pub fn layer_index(&self, id: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.id == id)
    }

    /// Compute every layer's input and output shape, validating the chain
    /// and all residual edges along the way.
    pub fn infer_shapes(&self) -> Result<LayerShapes, GraphError> {
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut current = self.input_shape;
        for (idx, layer) in self.layers.iter().enumerate() {
            if seen.insert(layer.id.as_str(), idx).is_some() {
                return Err(GraphError::DuplicateId(layer.id.clone()));
            }
            inputs.push(current);
            let out = match &layer.kind {
                LayerKind::Input | LayerKind::Output => current,
                LayerKind::Conv { k, stride, padding, in_ch, out_ch, depthwise } => {
                    if *in_ch != current.c {
                        return Err(GraphError::BadLayer {
                            layer: layer.id.clone(),
                            reason: format!("expects {in_ch} input channels, gets {}", current.c),
                        });
                    }
                    if *depthwise && in_ch != out_ch {
                        return Err(GraphError::BadLayer {
                            layer: layer.id.clone(),
                            reason: "depthwise layers must preserve the channel count".into(),
                        });
                    }
                    if *stride == 0 {
                        return Err(GraphError::BadLayer {
                            layer: layer.id.clone(),
                            reason: "stride must be positive".into(),
                        });
                    }
                    let h = out_extent(current.h, *k, *padding, *stride);
                    let w = out_extent(current.w, *k, *padding, *stride);
                    if h <= 0 || w <= 0 {
                        return Err(GraphError::NegativeExtent { layer: layer.id.clone(), h, w });
                    }
                    MapShape::new(*out_ch, h as usize, w as usize)
                }
                LayerKind::MaxPool { k, stride } => {
                    if *stride == 0 {
                        return Err(GraphError::BadLayer {
                            layer: layer.id.clone(),
                            reason: "stride must be positive".into(),
                        });
                    }
                    if *k > current.h || *k > current.w {
                        return Err(GraphError::BadLayer {
                            layer: layer.id.clone(),
                            reason: format!("window {k} exceeds input {}x{}", current.h, current.w),
                        });
                    }
                    MapShape::new(current.c, (current.h - k) / stride + 1, (current.w - k) / stride + 1)
                }
                LayerKind::EltwiseAdd { residual_source } => {
                    let Some(&src) = seen.get(residual_source.as_str()) else {
                        return Err(GraphError::BadResidualSource {
                            layer: layer.id.clone(),
                            source_id: residual_source.clone(),
                        });
                    };
                    let src_shape: MapShape = outputs[src];
                    if src_shape != current {
                        return Err(GraphError::BadLayer {
                            layer: layer.id.clone(),
                            reason: format!(
                                "residual operand {}x{}x{} does not match {}x{}x{}",
                                src_shape.c, src_shape.h, src_shape.w, current.c, current.h, current.w
                            ),
                        });
                    }
                    current
                }
            };
            outputs.push(out);
            current = out;
        }
        Ok(LayerShapes { input: inputs, output: outputs })
    }

    pub fn output_shape(&self) -> Result<MapShape, GraphError> {
        let shapes = self.infer_shapes()?;
        Ok(shapes.output.last().copied().unwrap_or(self.input_shape))
    }

    pub fn conv_layer_count(&self) -> usize {
        self.layers.iter().filter(|l| l.kind.is_conv()).count()
    }

    pub fn to_json(&self) -> Result<String, GraphError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn out_extent(extent: usize, k: usize, padding: usize, stride: usize) -> i64 {
    let num = extent as i64 + 2 * padding as i64 - k as i64;
    if num < 0 {
        return num;
    }
    num / stride as i64 + 1
}

/// Parse and fully validate a network description.
pub fn load_network(json: &str) -> Result<NetworkDesc, GraphError> {
    let net: NetworkDesc = serde_json::from_str(json)?;
    net.infer_shapes()?;
    Ok(net)
}

/// Unit used when reporting feature-map volumes. Both are binary units:
/// 1 Mbit = 2^20 bits, 1 MB = 2^20 bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeUnit {
    Mbits,
    MBytes,
}

impl VolumeUnit {
    pub fn convert(&self, bits: u64) -> f64 {
        match self {
            VolumeUnit::Mbits => bits as f64 / (1u64 << 20) as f64,
            VolumeUnit::MBytes => bits as f64 / 8.0 / (1u64 << 20) as f64,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            VolumeUnit::Mbits => "mbits",
            VolumeUnit::MBytes => "mbytes",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerVolume {
    pub id: String,
    pub is_conv: bool,
    pub shape: MapShape,
    pub bits: u64,
}

/// CSV of per-conv-layer output volumes, the classic per-layer storage
/// profile of a convolutional body.
pub fn volumes_to_csv(volumes: &[LayerVolume], unit: VolumeUnit) -> String {
    let mut out = format!("layer,out_c,out_h,out_w,volume_{}\n", unit.label());
    for v in volumes.iter().filter(|v| v.is_conv) {
        out.push_str(&format!(
            "{},{},{},{},{:.6}\n",
            v.id,
            v.shape.c,
            v.shape.h,
            v.shape.w,
            unit.convert(v.bits)
        ));
    }
    out
}

/// Output feature-map volume of every layer at the network's activation
/// width.
pub fn feature_map_volumes(net: &NetworkDesc) -> Result<Vec<LayerVolume>, GraphError> {
    let shapes = net.infer_shapes()?;
    let bits = net.activation_format.value_bits();
    Ok(net
        .layers
        .iter()
        .zip(&shapes.output)
        .map(|(layer, shape)| LayerVolume {
            id: layer.id.clone(),
            is_conv: layer.kind.is_conv(),
            shape: *shape,
            bits: shape.volume_bits(bits),
        })
        .collect())
}

/// Concrete weights and biases for every conv layer of a network.
///
/// The artifact proves traffic and arithmetic equivalence, not accuracy, so
/// weights are synthetic: uniformly random over the weight format's range,
/// reproducible from a single seed. Biases are raw codes at the
/// convolution's accumulator scale.
#[derive(Debug, Clone, PartialEq)]
pub struct NetWeights {
    pub by_layer: BTreeMap<String, (Tensor4D, Bias)>,
}

impl NetWeights {
    pub fn seeded(net: &NetworkDesc, seed: u64) -> Result<Self, GraphError> {
        let mut by_layer = BTreeMap::new();
        for (idx, layer) in net.layers.iter().enumerate() {
            let LayerKind::Conv { k, in_ch, out_ch, depthwise, .. } = &layer.kind else {
                continue;
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let wdims = if *depthwise {
                Dims::new(*out_ch, 1, *k, *k)
            } else {
                Dims::new(*out_ch, *in_ch, *k, *k)
            };
            let weights = Tensor4D::random(wdims, net.weight_format, &mut rng);
            let bias = match (net.activation_format, net.weight_format) {
                (ScalarFormat::Fixed { bits, .. }, ScalarFormat::Fixed { frac, .. }) => {
                    let mag = (1i64 << (bits - 1)) << frac;
                    Bias::Fixed((0..*out_ch).map(|_| rng.random_range(-mag / 4..=mag / 4)).collect())
                }
                _ => Bias::Real((0..*out_ch).map(|_| rng.random_range(-0.5..0.5)).collect()),
            };
            by_layer.insert(layer.id.clone(), (weights, bias));
        }
        Ok(NetWeights { by_layer })
    }

    pub fn for_layer(&self, id: &str) -> Option<(&Tensor4D, &Bias)> {
        self.by_layer.get(id).map(|(w, b)| (w, b))
    }

    /// Total weight storage bits across the network.
    pub fn total_bits(&self) -> u64 {
        self.by_layer.values().map(|(w, _)| w.bits()).sum()
    }
}

/// Conv parameters of a layer as kernel-level types.
pub fn conv_params_of(kind: &LayerKind) -> Option<(usize, usize, PadSpec, bool)> {
    match kind {
        LayerKind::Conv { k, stride, padding, depthwise, .. } => {
            Some((*k, *stride, PadSpec::uniform(*padding), *depthwise))
        }
        _ => None,
    }
}
