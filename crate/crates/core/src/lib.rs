//! Link-level MIMO simulation and channel estimation.
//!
//! The crate simulates uplink Rayleigh block-fading transmission and compares
//! three channel estimators — a variational blind estimator trained per
//! coherence block, pilot-aided least squares, and pilot-aided linear MMSE —
//! under a maximum-likelihood detector, sweeping SNR and reporting MSE/SER.

pub mod adam;
pub mod autodiff;
pub mod baselines;
pub mod channel;
pub mod config;
pub mod constellation;
pub mod detection;
pub mod encoder;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod stacked;
pub mod vi;

pub use error::{Error, Result};
pub use linalg::{cmatmul, ComplexMatrix, ComplexVector};
pub use rng::Rng;
pub use stacked::StackedRealVector;
