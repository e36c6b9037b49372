//! Reverse-mode differentiation and the neural primitives every model
//! is built from.

pub mod adam;
pub mod gradcheck;
pub mod nn;
pub mod params;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use nn::{cross_entropy, dropout, log_softmax, sigmoid, softmax, Lstm, LstmState, Mode};
pub use params::{Gradients, Param, ParamId, ParamSet};
pub use tape::{Graph, NodeId};
