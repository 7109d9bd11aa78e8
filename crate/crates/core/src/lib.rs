pub mod commands;
pub mod config;
pub mod error;
pub mod finitekey;
pub mod fock;
pub mod measurements;
pub mod optimizer;
pub mod photonics;
pub mod protocol;

pub use error::{Error, Result};
