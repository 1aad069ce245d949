//! Block convolution and layer fusion for memory-limited CNN accelerators.
//!
//! The crate has four pillars:
//!
//! - exact reference kernels over real and fixed-point NCHW tensors
//!   ([`ops`]), including convolution with per-side padding in zero,
//!   replicate and reflect modes;
//! - block convolution ([`block`]): spatially independent tiled
//!   convolution, the padding solver that keeps blocked output shapes equal
//!   to the unblocked ones, and blocking-plan generation for whole networks;
//! - network description, shape inference and feature-map volume analysis
//!   ([`graph`]) with presets for well-known convolutional bodies;
//! - a fusion planner ([`planner`]) and a functional dataflow simulator
//!   ([`sim`]) that execute either the conventional tiled schedule or the
//!   fused block-convolution schedule, producing bit-exact outputs and
//!   byte-exact off-chip traffic reports.

pub mod block;
pub mod error;
pub mod format;
pub mod graph;
pub mod io;
pub mod ops;
pub mod planner;
pub mod sim;
pub mod tensor;

pub use error::{BlockError, GraphError, PlanError, SimError, TensorError};
pub use format::{PadMode, PadSpec, ScalarFormat};
pub use tensor::{Bias, Dims, Tensor4D, TensorData};

pub use block::{
    solve_block_padding, BlockGrid, BlockPadding, BlockingPattern, BlockingPlan, LayerBlocking,
};
pub use graph::{stride_to_pool_rewrite, LayerDesc, LayerKind, NetWeights, NetworkDesc};
pub use ops::{conv2d_ref, conv2d_virtual, eltwise_add, mac_count, maxpool2d, pad, ConvCost, ConvParams};
pub use planner::{FusionPlan, HardwareBudget, MemoryBreakdown, PlanScore, ScoredPlan};
pub use sim::{PhaseTrace, TraceEvent, TrafficBreakdown, TrafficReport};
