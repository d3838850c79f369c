//! Functional quantization of the Wiener process with a Gaussian starting
//! point, `Z_t = W_{k+t}` on `[0, T]`.
//!
//! The crate is organized bottom-up:
//!
//! * [`kernel`]: process parameters and the covariance `(k+t) ∧ (k+s)`.
//! * [`spectrum`]: Karhunen–Loève eigenpairs from the transcendental
//!   equation `cot(x) = (k/T) x`, the c-sequence and spectral tail brackets.
//! * [`gauss1d`]: optimal quadratic quantizers of the standard normal.
//! * [`funcquant`]: product quantizers over the KL coordinates.
//! * [`rate`]: asymptotic rate constants and empirical rate fitting.
//! * [`mc`]: seeded Monte Carlo cross-checks of the distortion brackets.
//!
//! [`special`] and [`quadrature`] hold the numerical primitives shared by
//! the modules above.

pub mod error;
pub mod funcquant;
pub mod gauss1d;
pub mod kernel;
pub mod mc;
pub mod quadrature;
pub mod rate;
pub mod special;
pub mod spectrum;

pub use error::{Error, Result};
pub use funcquant::{AllocMethod, Allocation, DistortionBracket, ProductQuantizer, QuantizedPath};
pub use gauss1d::{DistortionTable, ScalarQuantizer};
pub use kernel::ProcessParams;
pub use mc::{McConfig, McEstimate};
pub use rate::{CInfEstimate, RateFit, RegVarying, SharpRate};
pub use spectrum::{CSeqEntry, EigenPair, PaperNewton, Spectrum, TailBounds};
