pub mod alternatives;
pub mod analysis;
pub mod calibrate;
pub mod ccurve;
pub mod dyadic;
pub mod error;
pub mod gofstats;
pub mod powerstudy;
pub mod quad;
pub mod refmodels;
pub mod render;

pub use error::{Error, Result};
