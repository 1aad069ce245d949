//! Shared fixtures for the criterion benches.

use blockconv::graph::{LayerDesc, MapShape, NetworkDesc};
use blockconv::ScalarFormat;

/// A small homogeneous conv chain for planner and simulator benches.
pub fn conv_chain(layers: usize, ch: usize, res: usize) -> NetworkDesc {
    let f8 = ScalarFormat::fixed(8, 4).expect("format");
    let mut descs = Vec::with_capacity(layers);
    for i in 0..layers {
        let in_ch = if i == 0 { 1 } else { ch };
        descs.push(LayerDesc::conv(&format!("c{i}"), 3, 1, 1, in_ch, ch));
    }
    NetworkDesc {
        input_shape: MapShape::new(1, res, res),
        activation_format: f8,
        weight_format: f8,
        layers: descs,
    }
}
