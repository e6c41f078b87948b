use thiserror::Error;

/// Errors surfaced by the numerical machinery.
#[derive(Debug, Error)]
pub enum ThermoError {
    #[error("vertical degree {0} exceeds the hard cap {1}")]
    DegreeCap(i32, i32),

    #[error("operation requires a compact (torus) chart")]
    NonCompactChart,

    #[error("orbit left the configured half-plane box at t = {0}")]
    ChartExit(f64),

    #[error("step size {dt} exceeds dt_max = {dt_max} for these parameters")]
    StepSize { dt: f64, dt_max: f64 },

    #[error("Riccati solution passed the cap at t = {0}")]
    RiccatiBlowup(f64),

    #[error("weak-bundle seeds disagree by {0:.3e}; data does not look Anosov")]
    SeedDisagreement(f64),

    #[error("premise violated: V^3 p + 4 V p has norm {0:.3e}")]
    PremiseViolation(f64),

    #[error("conjugate gradient failed to converge in {0} iterations (residual {1:.3e})")]
    SolverDiverged(usize, f64),

    #[error("closed-orbit search did not converge; best defect {0:.3e}")]
    OrbitNoConvergence(f64),

    #[error("incompatible request: {0}")]
    Incompatible(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ThermoError>;
