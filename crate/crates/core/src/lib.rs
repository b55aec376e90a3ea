//! Special flows over two-frequency torus translations.

pub mod birkhoff;
pub mod ceiling;
pub mod cfrac;
pub mod diagnostics;
pub mod error;
pub mod exact;
pub mod flow;
pub mod schrodinger;
pub mod serde_util;
pub mod tolerance;
pub mod trig;

pub use error::{Error, Result};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
