pub mod config;
pub mod divisors;
pub mod error;
pub mod interpolate;
pub mod jet;
pub mod kernels;
pub mod nullpole;
pub mod numerics;
pub mod theta;
pub mod torus;
pub mod trivialize;

pub use config::Tolerances;
pub use error::{Error, Result};
pub use numerics::{CMat, C64};
pub use torus::{EllipticCurve, TorusPoint};
