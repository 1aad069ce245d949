//! Off-chip traffic accounting.
//!
//! Traffic is counted in bits, split by tensor class. The model columns
//! (`input_image`, `weights`, `intermediate_fmap`, `output`) count every
//! off-chip tensor at its full unhaloed size, once per write and once per
//! read; everything a tiled schedule moves beyond that — halo duplication,
//! channel-tile re-reads, partial-sum round trips — lands in the separate
//! `halo_overhead` column.

use serde::{Deserialize, Serialize};

const MBIT: f64 = (1u64 << 20) as f64;

/// Bits moved per tensor class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficBreakdown {
    pub input_image: u64,
    pub weights: u64,
    pub intermediate_fmap: u64,
    pub output: u64,
    pub halo_overhead: u64,
}

impl TrafficBreakdown {
    pub fn class(&self, name: TensorClass) -> u64 {
        match name {
            TensorClass::InputImage => self.input_image,
            TensorClass::Weights => self.weights,
            TensorClass::IntermediateFmap => self.intermediate_fmap,
            TensorClass::Output => self.output,
            TensorClass::HaloOverhead => self.halo_overhead,
        }
    }

    fn class_mut(&mut self, name: TensorClass) -> &mut u64 {
        match name {
            TensorClass::InputImage => &mut self.input_image,
            TensorClass::Weights => &mut self.weights,
            TensorClass::IntermediateFmap => &mut self.intermediate_fmap,
            TensorClass::Output => &mut self.output,
            TensorClass::HaloOverhead => &mut self.halo_overhead,
        }
    }
}

impl std::ops::Add for TrafficBreakdown {
    type Output = TrafficBreakdown;
    fn add(self, rhs: TrafficBreakdown) -> TrafficBreakdown {
        TrafficBreakdown {
            input_image: self.input_image + rhs.input_image,
            weights: self.weights + rhs.weights,
            intermediate_fmap: self.intermediate_fmap + rhs.intermediate_fmap,
            output: self.output + rhs.output,
            halo_overhead: self.halo_overhead + rhs.halo_overhead,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorClass {
    InputImage,
    Weights,
    IntermediateFmap,
    Output,
    HaloOverhead,
}

impl TensorClass {
    pub const ALL: [TensorClass; 5] = [
        TensorClass::InputImage,
        TensorClass::Weights,
        TensorClass::IntermediateFmap,
        TensorClass::Output,
        TensorClass::HaloOverhead,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            TensorClass::InputImage => "input_image",
            TensorClass::Weights => "weights",
            TensorClass::IntermediateFmap => "intermediate_fmap",
            TensorClass::Output => "output",
            TensorClass::HaloOverhead => "halo_overhead",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTraffic {
    pub layer: String,
    pub read: TrafficBreakdown,
    pub write: TrafficBreakdown,
}

/// Per-layer and total off-chip bits, split by class and direction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficReport {
    pub layers: Vec<LayerTraffic>,
}

impl TrafficReport {
    pub(crate) fn add_read(&mut self, layer: &str, class: TensorClass, bits: u64) {
        *self.entry_mut(layer).read.class_mut(class) += bits;
    }

    pub(crate) fn add_write(&mut self, layer: &str, class: TensorClass, bits: u64) {
        *self.entry_mut(layer).write.class_mut(class) += bits;
    }

    fn entry_mut(&mut self, layer: &str) -> &mut LayerTraffic {
        if let Some(pos) = self.layers.iter().position(|l| l.layer == layer) {
            &mut self.layers[pos]
        } else {
            self.layers.push(LayerTraffic { layer: layer.to_string(), ..Default::default() });
            self.layers.last_mut().unwrap()
        }
    }

    pub fn total_read(&self) -> TrafficBreakdown {
        self.layers.iter().fold(TrafficBreakdown::default(), |acc, l| acc + l.read)
    }

    pub fn total_write(&self) -> TrafficBreakdown {
        self.layers.iter().fold(TrafficBreakdown::default(), |acc, l| acc + l.write)
    }

    pub fn total(&self) -> TrafficBreakdown {
        self.total_read() + self.total_write()
    }

    /// Feature-map bits under the counting model: input, intermediate and
    /// output classes in both directions; weights and overheads excluded.
    pub fn fmap_total_bits(&self) -> u64 {
        let t = self.total();
        t.input_image + t.intermediate_fmap + t.output
    }

    pub fn fmap_total_mbits(&self) -> f64 {
        self.fmap_total_bits() as f64 / MBIT
    }

    pub fn intermediate_total_bits(&self) -> u64 {
        self.total().intermediate_fmap
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    /// CSV rendering: one row per (layer, class) plus total rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,class,read_bits,write_bits,read_mbits,write_mbits\n");
        let mut row = |name: &str, read: &TrafficBreakdown, write: &TrafficBreakdown| {
            for class in TensorClass::ALL {
                let (r, w) = (read.class(class), write.class(class));
                out.push_str(&format!(
                    "{},{},{},{},{:.6},{:.6}\n",
                    name,
                    class.label(),
                    r,
                    w,
                    r as f64 / MBIT,
                    w as f64 / MBIT
                ));
            }
        };
        for layer in &self.layers {
            row(&layer.layer, &layer.read, &layer.write);
        }
        let (tr, tw) = (self.total_read(), self.total_write());
        row("total", &tr, &tw);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_equal_sum_of_layers() {
        let mut report = TrafficReport::default();
        report.add_read("a", TensorClass::InputImage, 100);
        report.add_write("a", TensorClass::IntermediateFmap, 200);
        report.add_read("b", TensorClass::IntermediateFmap, 200);
        report.add_write("b", TensorClass::Output, 50);
        report.add_read("b", TensorClass::Weights, 70);
        let total = report.total();
        assert_eq!(total.input_image, 100);
        assert_eq!(total.intermediate_fmap, 400);
        assert_eq!(total.output, 50);
        assert_eq!(total.weights, 70);
        assert_eq!(report.fmap_total_bits(), 550);
    }

    #[test]
    fn empty_report_renders_headers_only() {
        let report = TrafficReport::default();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        // header plus the all-zero total rows
        assert_eq!(lines[0], "layer,class,read_bits,write_bits,read_mbits,write_mbits");
        assert!(lines[1..].iter().all(|l| l.starts_with("total,")));
    }

    #[test]
    fn json_round_trip() {
        let mut report = TrafficReport::default();
        report.add_read("conv1", TensorClass::InputImage, 123);
        report.add_write("conv1", TensorClass::Output, 456);
        let back = TrafficReport::from_json(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }
}
