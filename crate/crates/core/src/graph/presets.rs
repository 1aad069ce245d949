//! Built-in network presets.
//!
//! The presets transcribe the convolutional bodies of well-known
//! architectures; classifiers and other fully-connected tails are not part
//! of the graph model. Two modeling conventions apply:
//!
//! - `resnet18-conv` keeps only identity shortcuts. The 1x1 projection
//!   convolutions on stage-transition shortcuts sit off the chain and are
//!   omitted, which matches counting 17 convolutions for this body. The
//!   stem's 3x3/2 max pooling is modeled as 2x2/2 because pooling here is
//!   unpadded.
//! - default fixed-point formats: 16-bit activations and weights for the
//!   classification bodies, 8-bit activations with 4-bit weights for the
//!   super-resolution network.

use crate::format::ScalarFormat;
use crate::GraphError;

use super::{LayerDesc, MapShape, NetworkDesc};

pub const PRESET_NAMES: [&str; 4] = ["vgg16-conv", "vdsr", "resnet18-conv", "mobilenet-v1-conv"];

/// Look up a preset by name.
pub fn preset(name: &str) -> Result<NetworkDesc, GraphError> {
    let net = match name {
        "vgg16-conv" => vgg16_conv(),
        "vdsr" => vdsr(),
        "resnet18-conv" => resnet18_conv(),
        "mobilenet-v1-conv" => mobilenet_v1_conv(),
        other => return Err(GraphError::UnknownPreset(other.to_string())),
    };
    debug_assert!(net.infer_shapes().is_ok());
    Ok(net)
}

fn fx(bits: u32, frac: u32) -> ScalarFormat {
    ScalarFormat::fixed(bits, frac).expect("preset format")
}

fn vgg16_conv() -> NetworkDesc {
    let mut layers = Vec::new();
    let stages: [(usize, &[&str]); 5] = [
        (64, &["conv1_1", "conv1_2"]),
        (128, &["conv2_1", "conv2_2"]),
        (256, &["conv3_1", "conv3_2", "conv3_3"]),
        (512, &["conv4_1", "conv4_2", "conv4_3"]),
        (512, &["conv5_1", "conv5_2", "conv5_3"]),
    ];
    let mut in_ch = 3;
    for (stage, (out_ch, names)) in stages.iter().enumerate() {
        for name in *names {
            layers.push(LayerDesc::conv(name, 3, 1, 1, in_ch, *out_ch));
            in_ch = *out_ch;
        }
        layers.push(LayerDesc::maxpool(&format!("pool{}", stage + 1), 2, 2));
    }
    NetworkDesc {
        input_shape: MapShape::new(3, 224, 224),
        activation_format: fx(16, 8),
        weight_format: fx(16, 8),
        layers,
    }
}

fn vdsr() -> NetworkDesc {
    let mut layers = vec![LayerDesc::input("input"), LayerDesc::conv("conv1", 3, 1, 1, 1, 64)];
    for i in 2..=19 {
        layers.push(LayerDesc::conv(&format!("conv{i}"), 3, 1, 1, 64, 64));
    }
    layers.push(LayerDesc::conv("conv20", 3, 1, 1, 64, 1));
    layers.push(LayerDesc::eltwise_add("residual_add", "input"));
    NetworkDesc {
        input_shape: MapShape::new(1, 1080, 1920),
        activation_format: fx(8, 4),
        weight_format: fx(4, 2),
        layers,
    }
}

fn resnet18_conv() -> NetworkDesc {
    let mut layers = vec![
        LayerDesc::conv("conv1", 7, 2, 3, 3, 64),
        LayerDesc::maxpool("pool1", 2, 2),
    ];
    // (stage, channels, first block downsamples)
    let stages = [(2usize, 64usize, false), (3, 128, true), (4, 256, true), (5, 512, true)];
    let mut in_ch = 64;
    let mut prev_id = String::from("pool1");
    for (stage, ch, downsample) in stages {
        for block in 1..=2 {
            let s = if downsample && block == 1 { 2 } else { 1 };
            let a = format!("conv{stage}_{block}_1");
            let b = format!("conv{stage}_{block}_2");
            layers.push(LayerDesc::conv(&a, 3, s, 1, in_ch, ch));
            layers.push(LayerDesc::conv(&b, 3, 1, 1, ch, ch));
            in_ch = ch;
            if s == 1 {
                // identity shortcut back to the block input
                let add = format!("add{stage}_{block}");
                layers.push(LayerDesc::eltwise_add(&add, &prev_id));
                prev_id = add;
            } else {
                // projection shortcut omitted; the chain continues
                prev_id = b;
            }
        }
    }
    NetworkDesc {
        input_shape: MapShape::new(3, 224, 224),
        activation_format: fx(16, 8),
        weight_format: fx(16, 8),
        layers,
    }
}

fn mobilenet_v1_conv() -> NetworkDesc {
    let mut layers = vec![LayerDesc::conv("conv1", 3, 2, 1, 3, 32)];
    // (depthwise stride, pointwise output channels)
    let pairs: [(usize, usize); 13] = [
        (1, 64),
        (2, 128),
        (1, 128),
        (2, 256),
        (1, 256),
        (2, 512),
        (1, 512),
        (1, 512),
        (1, 512),
        (1, 512),
        (1, 512),
        (2, 1024),
        (1, 1024),
    ];
    let mut in_ch = 32;
    for (i, (stride, out_ch)) in pairs.iter().enumerate() {
        let n = i + 2;
        layers.push(LayerDesc::depthwise(&format!("dw{n}"), 3, *stride, 1, in_ch));
        layers.push(LayerDesc::conv(&format!("pw{n}"), 1, 1, 0, in_ch, *out_ch));
        in_ch = *out_ch;
    }
    NetworkDesc {
        input_shape: MapShape::new(3, 224, 224),
        activation_format: fx(16, 8),
        weight_format: fx(16, 8),
        layers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::MapShape;

    #[test]
    fn vdsr_structure() {
        let net = preset("vdsr").unwrap();
        assert_eq!(net.conv_layer_count(), 20);
        assert!(net.layers.iter().any(|l| l.id == "residual_add"));
        let shapes = net.infer_shapes().unwrap();
        // every conv keeps the input resolution; channels follow the body
        for (layer, out) in net.layers.iter().zip(&shapes.output) {
            if layer.kind.is_conv() {
                assert_eq!((out.h, out.w), (1080, 1920), "{}", layer.id);
            }
        }
        let mid = net.layer_index("conv10").unwrap();
        assert_eq!(shapes.output[mid], MapShape::new(64, 1080, 1920));
        assert_eq!(shapes.output.last().copied().unwrap(), MapShape::new(1, 1080, 1920));
    }

    #[test]
    fn vgg16_shapes() {
        let net = preset("vgg16-conv").unwrap();
        assert_eq!(net.conv_layer_count(), 13);
        let shapes = net.infer_shapes().unwrap();
        let c53 = net.layer_index("conv5_3").unwrap();
        assert_eq!(shapes.output[c53], MapShape::new(512, 14, 14));
        let c11 = net.layer_index("conv1_1").unwrap();
        assert_eq!(shapes.output[c11], MapShape::new(64, 224, 224));
    }

    #[test]
    fn resnet18_shapes() {
        let net = preset("resnet18-conv").unwrap();
        assert_eq!(net.conv_layer_count(), 17);
        let shapes = net.infer_shapes().unwrap();
        assert_eq!(shapes.output.last().copied().unwrap(), MapShape::new(512, 7, 7));
        let s2 = net.layer_index("conv2_1_1").unwrap();
        assert_eq!(shapes.input[s2], MapShape::new(64, 56, 56));
    }

    #[test]
    fn mobilenet_shapes() {
        let net = preset("mobilenet-v1-conv").unwrap();
        assert_eq!(net.conv_layer_count(), 27);
        let shapes = net.infer_shapes().unwrap();
        assert_eq!(shapes.output.last().copied().unwrap(), MapShape::new(1024, 7, 7));
    }

    #[test]
    fn unknown_preset_is_an_error() {
        assert!(matches!(preset("lenet"), Err(GraphError::UnknownPreset(_))));
    }
}
