//! Stochastic gradient descent variants and the pieces needed to compare them.
//!
//! Two variants sit next to classical baselines (SGD, Momentum, Adam, RMSprop):
//!
//! * **NRSGD** mixes each gradient with Gaussian noise whose mean and standard
//!   deviation match the gradient tensor's own statistics:
//!   `x <- x - lr * (w * (g - n) + n)`.
//! * **IAGD** predicts the next gradient from the last four by second-order
//!   Newton divided differences and applies current and predicted gradient in
//!   one step: `x <- x - (lr_i * g + lr_{i-1} * predict(g))`.
//!
//! Everything is `f64`, deterministic under a seed, and free of external
//! numeric dependencies.

pub mod data;
pub mod error;
pub mod interp;
pub mod models;
pub mod optim;
pub mod schedule;
pub mod tensor;

pub use error::{Error, Result};
pub use interp::{GradHistory, GuardPolicy};
pub use models::{Batch, Objective};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use schedule::LrSchedule;
pub use tensor::{RngStream, Tensor};
