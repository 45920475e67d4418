use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("mode m={mode} sits within {gap:.3e} of the threshold h*|m| = 1")]
    ThresholdCollision { mode: i64, gap: f64 },

    #[error("profile is not an hourglass")]
    NotHourglass,

    #[error("integrator step underflow at t={t:.6}")]
    IntegratorFailure { t: f64 },

    #[error("adaptive quadrature did not converge (estimate {estimate:.3e}, error {error:.3e})")]
    QuadratureFailure { estimate: f64, error: f64 },

    #[error("grid too coarse: {points_per_wavelength:.1} points per wavelength")]
    GridTooCoarse { points_per_wavelength: f64 },

    #[error("mode m={mode}: unitarity defect {defect:.3e}")]
    NonUnitary { mode: i64, defect: f64 },

    #[error("wave reached the box edge (relative amplitude {amplitude:.3e})")]
    BoundaryContamination { amplitude: f64 },

    #[error("coherent state center eta={eta:.4} is too close to |eta| = 1 at h={h}")]
    TooCloseToEdge { eta: f64, h: f64 },

    #[error("input is not unitary (defect {defect:.3e})")]
    NonUnitaryInput { defect: f64 },

    #[error("power iteration stalled after {iterations} iterations")]
    NonConvergedPowerIteration { iterations: usize },

    #[error("state is zero")]
    ZeroState,

    #[error("trajectory from theta={theta:.4}, eta={eta:.4} is trapped")]
    Trapped { theta: f64, eta: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
