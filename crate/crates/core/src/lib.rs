//! Non-systematic noise models for time-of-flight depth cameras.
//!
//! The crate covers the whole loop around a per-mode Gaussian noise model:
//!
//! * [`model`] evaluates the axial standard deviation `σ_z(z, θ)` and the
//!   lateral edge jitter `σ_x`, and draws samples from both.
//! * [`scene`] renders clean depth frames of a planar target.
//! * [`inject`] turns clean frames into noisy "as captured" frames.
//! * [`calib`] recovers the model coefficients from stacks of frames.
//! * [`validate`] scores a model against data with pixel-wise KL divergence.
//! * [`frame`] and [`dataset`] handle the DPF1 container and its metadata.

// `!(a < b)` comparisons double as NaN rejection.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod dataset;
pub mod error;
pub mod frame;
pub mod inject;
pub mod model;
pub mod rng;
pub mod scene;
pub mod validate;

pub use error::{Error, Result};
pub use frame::{CameraIntrinsics, CaptureCondition, DepthFrame, FrameStack, StackMeta};
pub use model::{LateralMode, ModeId, ModePreset, NoiseModelCoefficients};
pub use scene::{Background, PlanarScene};
