use thiserror::Error;

pub type Result<T> = std::result::Result<T, GlarmaError>;

#[derive(Debug, Error)]
pub enum GlarmaError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The linear predictor left the representable range; parameters are divergent.
    #[error("overflow guard tripped at t={t}: W_t = {w}")]
    OverflowGuard { t: usize, w: f64 },

    #[error("non-finite curvature in {0}")]
    NonFiniteCurvature(&'static str),

    #[error("negated Hessian is indefinite (min eigenvalue {min_eig:e}, max {max_eig:e})")]
    IndefiniteHessian { min_eig: f64, max_eig: f64 },

    #[error("singular Newton system in {0}")]
    SingularSystem(&'static str),

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("Poisson GLM fit is degenerate: {0}")]
    Separation(String),

    #[error("degenerate problem: {0}")]
    DegenerateProblem(String),

    #[error("subsample size {0} is below the minimum of 2")]
    SubsampleTooSmall(usize),

    #[error("lasso_best needs the true support")]
    MissingOracle,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("outer iteration {iteration}: {source}")]
    Pipeline {
        iteration: usize,
        #[source]
        source: Box<GlarmaError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GlarmaError {
    /// Process exit code for the command-line front end: 2 usage, 3 numeric, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            GlarmaError::DimensionMismatch(_)
            | GlarmaError::InvalidInput(_)
            | GlarmaError::Config(_)
            | GlarmaError::MissingOracle
            | GlarmaError::SubsampleTooSmall(_) => 2,
            GlarmaError::Io(_) | GlarmaError::Csv(_) | GlarmaError::Json(_) => 4,
            GlarmaError::Pipeline { source, .. } => source.exit_code(),
            _ => 3,
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> GlarmaError {
        GlarmaError::Pipeline {
            iteration,
            source: Box::new(self),
        }
    }
}
