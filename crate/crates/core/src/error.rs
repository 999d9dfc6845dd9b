use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("faddeeva: exp(-z^2) overflows for z = {z}")]
    Overflow { z: Complex64 },

    #[error("root finder did not converge; best bracket k in [{lo:.17e}, {hi:.17e}]")]
    RootNotConverged { lo: f64, hi: f64 },

    #[error(
        "eigenvalues not resolvable in double precision: midpoint lambda = {midpoint:.17e}, \
         splitting below {delta_bound:.3e}"
    )]
    DegeneratePair { midpoint: f64, delta_bound: f64 },

    #[error("lambda = {lambda} is not an eigenvalue (|det| = {residual:.3e})")]
    NotAnEigenvalue { lambda: f64, residual: f64 },

    #[error("spectrum has {found} bound state(s), two are required")]
    NoBeatingPair { found: usize },

    #[error("no beating: eigenvalue splitting {delta_lambda} is not positive")]
    NoBeating { delta_lambda: f64 },

    #[error("kernel moment mismatch on [{lo}, {hi}]: closed form vs quadrature differ by {diff:.3e}")]
    MomentMismatch { lo: f64, hi: f64, diff: f64 },

    #[error(
        "inner iteration did not converge at step {step} (t = {time}): residual {residual:.3e} \
         after {iterations} iterations"
    )]
    InnerIteration { step: usize, time: f64, residual: f64, iterations: usize },

    #[error("time {time} is not a point of the trajectory grid (dt = {dt})")]
    OffGrid { time: f64, dt: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
