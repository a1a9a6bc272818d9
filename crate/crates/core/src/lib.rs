pub mod config;
pub mod driver;
pub mod error;
pub mod experiments;
pub mod oracle;
pub mod sketching;
pub mod spin_model;
pub mod tensor_train;
pub mod util;
pub mod walker;

pub use error::{Error, Result};
