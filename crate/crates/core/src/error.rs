//! Error types for the library surface.

use thiserror::Error;

use crate::format::ScalarFormat;
use crate::tensor::Dims;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("data length {actual} does not match dims product {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("raw value {raw} out of range for {format:?}")]
    ValueOutOfRange { raw: i64, format: ScalarFormat },
    #[error("bad format: {0}")]
    BadFormat(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("stride must be positive")]
    ZeroStride,
    #[error("kernel {k} exceeds padded extent {extent}")]
    KernelExceedsInput { k: usize, extent: usize },
    #[error("pool window {k} exceeds input extent {extent}")]
    WindowExceedsInput { k: usize, extent: usize },
    #[error("reflect padding {amount} must be smaller than extent {extent}")]
    ReflectTooLarge { amount: usize, extent: usize },
    #[error("slice [{h0}+{h}, {w0}+{w}] out of bounds for {dims}")]
    SliceOutOfBounds { dims: Dims, h0: usize, h: usize, w0: usize, w: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("container: {0}")]
    Container(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum BlockError {
    #[error("cut positions must be strictly increasing inside (0, {extent}): {cuts:?}")]
    BadCuts { extent: usize, cuts: Vec<usize> },
    #[error("block count {blocks} does not match grid ({rows}x{cols})")]
    BlockCountMismatch { blocks: usize, rows: usize, cols: usize },
    #[error("block ({row}, {col}) has dims {actual} where the grid expects {expected}")]
    BlockDimsMismatch { row: usize, col: usize, expected: Dims, actual: Dims },
    #[error(
        "no block padding <= {max} satisfies the split equation \
         (extent {extent}, k {k}, stride {stride}, target {target}); best residual {residual}"
    )]
    InfeasiblePadding { extent: usize, k: usize, stride: usize, target: usize, max: usize, residual: i64 },
    #[error("blocked output dims {actual} differ from the unblocked dims {expected}")]
    OutputDimsMismatch { expected: Dims, actual: Dims },
    #[error("grid/padding inconsistency: {0}")]
    Inconsistent(String),
    #[error("pattern infeasible for layer {layer}: {reason}")]
    PatternInfeasible { layer: String, reason: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("layer {0}: duplicate id")]
    DuplicateId(String),
    #[error("layer {layer}: residual source {source_id} not found among earlier layers")]
    BadResidualSource { layer: String, source_id: String },
    #[error("layer {layer}: {reason}")]
    BadLayer { layer: String, reason: String },
    #[error("layer {layer}: output extent would be non-positive ({h}x{w})")]
    NegativeExtent { layer: String, h: i64, w: i64 },
    #[error("unknown preset {0}")]
    UnknownPreset(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("tile dimensions must be positive")]
    ZeroTile,
    #[error("groups must cover all compute units exactly once, in order")]
    BadGrouping,
    #[error("enumeration over {units} units exceeds the cap of {cap}")]
    EnumerationCap { units: usize, cap: usize },
    #[error("no candidate tiles supplied")]
    NoCandidates,
    #[error("weight tile {needed} bits cannot fit the weight buffer of {available} bits")]
    WeightTileTooLarge { needed: u64, available: u64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Block(#[from] BlockError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("buffer {role} overflow at trace step {step}: occupied {occupied} of {capacity} bits")]
    BufferOverflow { role: String, step: usize, occupied: u64, capacity: u64 },
    #[error("plan/blocking inconsistency at layer {layer}: {reason}")]
    PlanInconsistent { layer: String, reason: String },
    #[error("tiling invalid for layer {layer}: {reason}")]
    BadTiling { layer: String, reason: String },
    #[error("simulated dataflows require fixed-point formats, got {0:?}")]
    RealFormat(ScalarFormat),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}
