//! Functional dataflow simulation.
//!
//! Two schedules are simulated over the same network and weights:
//!
//! - [`simulate_baseline`]: the conventional tiled accelerator. Layers run
//!   pass by pass; every pass reads its input map from off-chip memory and
//!   writes its output map back, so intermediate maps round-trip through
//!   DRAM. Pooling and element-wise layers fold into the producing pass.
//! - [`simulate_fused`]: the block-convolution schedule. Layers of a fused
//!   group run back to back per block through ping-pong intermediate
//!   buffers; fixed-blocking merges accumulate in extra buffers; off-chip
//!   traffic occurs only at group boundaries.
//!
//! Both produce bit-exact tensors (checked against the reference kernels),
//! a byte-exact [`TrafficReport`], and a [`PhaseTrace`] whose buffer
//! occupancy never exceeds the declared capacities — a violation is a
//! [`SimError::BufferOverflow`], proving the plan infeasible. Shapes-only
//! variants skip tensor arithmetic and produce the same traffic and trace.

mod baseline;
mod fused;
pub mod traffic;

pub use baseline::{simulate_baseline, simulate_baseline_shapes, BaselineOptions, Tiling};
pub use fused::{simulate_fused, simulate_fused_shapes, FusedOptions};
pub use traffic::{LayerTraffic, TensorClass, TrafficBreakdown, TrafficReport};

use serde::{Deserialize, Serialize};

use crate::tensor::{Tensor4D, TensorData};
use crate::{SimError, TensorError};

/// One step of a simulated schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    /// Off-chip to on-chip transfer.
    Load { tensor: String, bits: u64 },
    /// One kernel invocation on one block or tile.
    Compute { layer: String, block: (usize, usize) },
    /// On-chip to off-chip transfer.
    Store { tensor: String, bits: u64 },
    /// Ping-pong buffers exchange roles.
    BufferSwap,
}

/// Ordered schedule events of one simulation run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub events: Vec<TraceEvent>,
}

impl PhaseTrace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    /// Every compute step must consume data previously loaded or produced
    /// on-chip; loads and stores must carry nonzero payloads for nonempty
    /// tensors. Used by tests as a structural sanity check.
    pub fn is_causal(&self) -> bool {
        let mut resident = false;
        for event in &self.events {
            match event {
                TraceEvent::Load { .. } => resident = true,
                TraceEvent::Compute { .. } => {
                    if !resident {
                        return false;
                    }
                }
                TraceEvent::Store { .. } | TraceEvent::BufferSwap => {}
            }
        }
        true
    }
}

/// Occupancy-checked on-chip buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BufferState {
    pub role: String,
    pub capacity_bits: u64,
    pub occupied_bits: u64,
}

impl BufferState {
    pub fn new(role: impl Into<String>, capacity_bits: u64) -> Self {
        BufferState { role: role.into(), capacity_bits, occupied_bits: 0 }
    }

    /// Set the occupancy, failing the simulation on overflow.
    pub fn occupy(&mut self, bits: u64, step: usize) -> Result<(), SimError> {
        if bits > self.capacity_bits {
            return Err(SimError::BufferOverflow {
                role: self.role.clone(),
                step,
                occupied: bits,
                capacity: self.capacity_bits,
            });
        }
        self.occupied_bits = bits;
        Ok(())
    }

    pub fn add(&mut self, bits: u64, step: usize) -> Result<(), SimError> {
        let next = self.occupied_bits + bits;
        if next > self.capacity_bits {
            return Err(SimError::BufferOverflow {
                role: self.role.clone(),
                step,
                occupied: next,
                capacity: self.capacity_bits,
            });
        }
        self.occupied_bits = next;
        Ok(())
    }

    pub fn clear(&mut self) {
        self.occupied_bits = 0;
    }
}

/// Result of a full (functional) simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub output: Tensor4D,
    pub traffic: TrafficReport,
    pub trace: PhaseTrace,
}

/// Outcome of a bit-exact comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyResult {
    Pass,
    Mismatch { index: usize, left: String, right: String },
}

/// Bit-exact tensor comparison: raw codes for fixed tensors, bit patterns
/// for real ones. Shape or format disagreement is an error, not a mismatch.
pub fn verify_equivalence(a: &Tensor4D, b: &Tensor4D) -> Result<VerifyResult, SimError> {
    if a.dims != b.dims {
        return Err(SimError::Tensor(TensorError::ShapeMismatch(format!(
            "{} vs {}",
            a.dims, b.dims
        ))));
    }
    if a.format != b.format {
        return Err(SimError::Tensor(TensorError::BadFormat(
            "formats differ".into(),
        )));
    }
    match (&a.data, &b.data) {
        (TensorData::Fixed(x), TensorData::Fixed(y)) => {
            for (i, (p, q)) in x.iter().zip(y).enumerate() {
                if p != q {
                    return Ok(VerifyResult::Mismatch {
                        index: i,
                        left: p.to_string(),
                        right: q.to_string(),
                    });
                }
            }
        }
        (TensorData::Real(x), TensorData::Real(y)) => {
            for (i, (p, q)) in x.iter().zip(y).enumerate() {
                if p.to_bits() != q.to_bits() {
                    return Ok(VerifyResult::Mismatch {
                        index: i,
                        left: p.to_string(),
                        right: q.to_string(),
                    });
                }
            }
        }
        _ => unreachable!("format equality implies storage equality"),
    }
    Ok(VerifyResult::Pass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::ScalarFormat;
    use crate::tensor::Dims;

    #[test]
    fn verify_passes_on_identical_and_flags_first_flip() {
        let f8 = ScalarFormat::fixed(8, 0).unwrap();
        let a = Tensor4D::seeded_random(Dims::new(1, 2, 3, 3), f8, 77);
        assert_eq!(verify_equivalence(&a, &a).unwrap(), VerifyResult::Pass);

        let mut b = a.clone();
        if let TensorData::Fixed(d) = &mut b.data {
            d[7] ^= 1;
        }
        match verify_equivalence(&a, &b).unwrap() {
            VerifyResult::Mismatch { index, .. } => assert_eq!(index, 7),
            VerifyResult::Pass => panic!("expected mismatch"),
        }

        let c = Tensor4D::zeros(Dims::new(1, 2, 3, 4), f8);
        assert!(verify_equivalence(&a, &c).is_err());
    }

    #[test]
    fn buffer_overflow_reports_step_and_role() {
        let mut buf = BufferState::new("intermediate_1", 100);
        buf.occupy(80, 3).unwrap();
        match buf.add(30, 4) {
            Err(SimError::BufferOverflow { role, step, occupied, capacity }) => {
                assert_eq!(role, "intermediate_1");
                assert_eq!(step, 4);
                assert_eq!(occupied, 110);
                assert_eq!(capacity, 100);
            }
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn trace_serializes_one_event_per_line() {
        let trace = PhaseTrace {
            events: vec![
                TraceEvent::Load { tensor: "input.block(0,0)".into(), bits: 128 },
                TraceEvent::Compute { layer: "c1".into(), block: (0, 0) },
                TraceEvent::BufferSwap,
                TraceEvent::Store { tensor: "c1.out.block(0,0)".into(), bits: 256 },
            ],
        };
        assert_eq!(trace.to_jsonl().lines().count(), 4);
        assert!(trace.is_causal());
    }
}
