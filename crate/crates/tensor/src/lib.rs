//! Shaped double-precision arrays with reverse-mode differentiation.
//!
//! Ops record themselves onto an implicit graph whenever one of their
//! inputs is tracked. [`grad`] walks that graph backwards; with
//! `create_graph = true` the backward pass is recorded too, so gradient
//! norms (e.g. a gradient penalty) can be differentiated again.
//!
//! ```
//! use xplore_tensor::{grad, nn, Tensor};
//!
//! let x = Tensor::leaf(vec![3.0, 4.0], &[1, 2]);
//! let loss = nn::l2_norm_mean(&x).unwrap();
//! assert_eq!(loss.item(), 5.0);
//! let g = grad(&loss, &[&x], false).unwrap();
//! assert!((g[0].data()[0] - 0.6).abs() < 1e-12);
//! ```

mod adam;
mod autograd;
pub mod conv;
mod error;
pub mod gradcheck;
pub mod kink;
pub mod nn;
pub mod ops;
mod tensor;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use autograd::{grad, Graph, OpRecord};
pub use error::{Result, TensorError};
pub use tensor::{grad_enabled, no_grad, with_grad_mode, Tensor};
