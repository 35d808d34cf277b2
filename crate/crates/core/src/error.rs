use thiserror::Error;

/// Failure modes of the numerical machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation not supported for model {0}")]
    UnsupportedModel(String),

    #[error("spectral anomaly: expected a negative eigenvalue, found {0}")]
    SpectralAnomaly(f64),

    #[error("degenerate localizer: 2x2 orthogonality system is singular")]
    DegenerateLocalizer,

    #[error("profile verification failure: {name} residual {residual:.3e} exceeds {threshold:.3e}")]
    ProfileVerification {
        name: &'static str,
        residual: f64,
        threshold: f64,
    },

    #[error("Fredholm condition violated: <V, LamW> defect {0:.3e}")]
    FredholmCondition(f64),

    #[error("ansatz out of regime: lambda/mu = {0:.3e} too large")]
    AnsatzOutOfRegime(f64),

    #[error("parameter blow-up at t = {0}")]
    ParameterBlowup(f64),

    #[error("CFL violation: dt = {dt:.3e} exceeds {limit:.3e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("solver diverged (NaN) at t = {0}")]
    SolverDiverged(f64),

    #[error("modulation failure: Newton did not converge in {0} iterations")]
    ModulationFailure(usize),

    #[error("degenerate modulation: orthogonality Jacobian not diagonally dominant")]
    DegenerateModulation,

    #[error("cutoff construction error: property {0} failed the audit")]
    CutoffConstruction(&'static str),

    #[error("initial data system is not diagonally dominant")]
    InitialDataDegenerate,

    #[error("shooting bracket error: interval endpoints classify to the same exit")]
    ShootingBracket,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
