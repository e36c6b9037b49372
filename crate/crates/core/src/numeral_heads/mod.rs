//! Open-vocabulary numeral strategies.

pub mod combination;
pub mod drnn;
pub mod mog;
pub mod pattern;

pub use combination::{CombinationGate, STRATEGIES};
pub use drnn::DigitHead;
pub use mog::MogHead;
pub use pattern::PatternModel;
