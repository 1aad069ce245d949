//! Strided-convolution rewrite.

use super::{LayerDesc, LayerKind, NetworkDesc};

/// Replace every convolution of stride `s > 1` by the same convolution at
/// stride 1 followed by an `s x s` max pooling of stride `s`.
///
/// The rewrite preserves output shapes layer for layer on the even-extent
/// "same" convolutions used by the presets; it lets block padding stay
/// symmetric where a strided convolution would force an uneven split.
pub fn stride_to_pool_rewrite(net: &NetworkDesc) -> NetworkDesc {
    let mut layers = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        match &layer.kind {
            LayerKind::Conv { k, stride, padding, in_ch, out_ch, depthwise } if *stride > 1 => {
                layers.push(LayerDesc {
                    id: layer.id.clone(),
                    kind: LayerKind::Conv {
                        k: *k,
                        stride: 1,
                        padding: *padding,
                        in_ch: *in_ch,
                        out_ch: *out_ch,
                        depthwise: *depthwise,
                    },
                });
                layers.push(LayerDesc::maxpool(&format!("{}_pool", layer.id), *stride, *stride));
            }
            _ => layers.push(layer.clone()),
        }
    }
    NetworkDesc { layers, ..net.clone() }
}
