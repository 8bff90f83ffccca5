//! Analysis, pole-placement synthesis and adaptive closed-loop simulation of
//! singular (descriptor) SISO systems with a single input delay.

pub mod adaptive;
pub mod controller;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod linalg;
pub mod par;
pub mod pencil;
pub mod polynomial;
pub mod sim;
pub mod system;

pub use error::{Error, Result};
pub use pencil::{DescriptorSystem, Tolerances, WeierstrassForm};
pub use polynomial::{Polynomial, QuasiPolynomial};
pub use system::SmoothSignal;
