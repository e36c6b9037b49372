pub mod compute;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod heads;
pub mod model;
pub mod numeral_heads;
pub mod train;

pub use error::{Error, Result};
