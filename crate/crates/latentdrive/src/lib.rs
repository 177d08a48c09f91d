//! Core machinery for latent-space driving world models: next-frame samplers
//! (flow matching and masked-token decoding) with sliding-window rollout,
//! factorized vector-quantization primitives, the associated training losses,
//! and a trajectory-distribution evaluation suite (ADE, discrete Fréchet,
//! k-NN precision/recall) with windowed protocols and synthetic trajectory
//! generators.
//!
//! Every numeric routine is generic over the scalar type via [`Scalar`]
//! (`f32` or `f64`); the concrete aliases below pin common types to one
//! width.

pub mod eval;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod quantizer;
pub mod rollout;
pub mod scalar;
pub mod synth;
pub mod trajectory;

pub use scalar::Scalar;

pub use metrics::{TrajectoryMetric, TrajectorySet};
pub use quantizer::{Codebook, CodecMode, FactorizedCodec, LatentGrid, TokenGrid};
pub use rollout::{ContextWindow, FrameLatent};
pub use trajectory::{PlanarPath, Pose, PoseSequence};

/// Single-precision pose.
pub type Pose32 = Pose<f32>;
/// Double-precision pose.
pub type Pose64 = Pose<f64>;
/// Single-precision pose sequence.
pub type PoseSequence32 = PoseSequence<f32>;
/// Double-precision pose sequence.
pub type PoseSequence64 = PoseSequence<f64>;
/// Single-precision planar path.
pub type PlanarPath32 = PlanarPath<f32>;
/// Double-precision planar path.
pub type PlanarPath64 = PlanarPath<f64>;
/// Single-precision trajectory set.
pub type TrajectorySet32 = TrajectorySet<f32>;
/// Double-precision trajectory set.
pub type TrajectorySet64 = TrajectorySet<f64>;
/// Single-precision codebook.
pub type Codebook32 = Codebook<f32>;
/// Double-precision codebook.
pub type Codebook64 = Codebook<f64>;
/// Single-precision latent grid.
pub type LatentGrid32 = LatentGrid<f32>;
/// Double-precision latent grid.
pub type LatentGrid64 = LatentGrid<f64>;
/// Single-precision frame latent.
pub type FrameLatent32 = FrameLatent<f32>;
/// Double-precision frame latent.
pub type FrameLatent64 = FrameLatent<f64>;
