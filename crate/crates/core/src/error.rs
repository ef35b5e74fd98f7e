use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:e} below -{tolerance:e}")]
    NotPsd { eigenvalue: f64, tolerance: f64 },

    #[error("matrix is not symmetric: asymmetry {asymmetry:e} exceeds {tolerance:e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("system is not of negative type (spectral abscissa {abscissa:e}); infinite-horizon quantities are undefined")]
    Unstable { abscissa: f64 },

    #[error("ODE integration too stiff: eigenvalue spread {spread:e} needs more than {max_steps} steps")]
    Stiff { spread: f64, max_steps: usize },

    #[error("target is not reachable: distance to the reachable subspace is {defect:e}")]
    Unreachable { defect: f64 },

    #[error("vector is not in H: distance to range(Q_inf^1/2) is {defect:e}")]
    NotInH { defect: f64 },

    #[error("operator not invertible at t = {time}: smallest singular value {sigma_min:e}")]
    NotInvertible { time: f64, sigma_min: f64 },

    #[error("finite-difference step underflow at t = {0}")]
    StepUnderflow(f64),

    #[error("mesh too coarse: {0}")]
    Resolution(String),

    #[error("invalid model: {0}")]
    Model(String),
}
