use thiserror::Error;

/// Errors raised by the analysis, synthesis and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix pencil (E, A) is not regular")]
    NotRegular,

    #[error("decomposition is ill-conditioned: {what} has condition number {cond:.3e}")]
    IllConditioned { what: &'static str, cond: f64 },

    #[error("could not find {needed} sample points away from the zeros of det(sE - A)")]
    SamplePointFailure { needed: usize },

    #[error("Sylvester matrix is rank deficient (polynomials not coprime or degrees inconsistent)")]
    SingularSylvester,

    #[error("Diophantine equation has no exact solution (relative residual {residual:.3e})")]
    NoExactSolution { residual: f64 },

    #[error("operation requires a nonzero polynomial")]
    ZeroPolynomial,

    #[error("degree violation: {0}")]
    DegreeViolation(String),

    #[error("signal supplies derivatives up to order {available}, order {required} required")]
    InsufficientSmoothness { required: usize, available: usize },

    #[error("step {dt} does not divide the delay {h} into an integer number of steps")]
    StepTooLarge { dt: f64, h: f64 },

    #[error("transfer function evaluated at a pole (|M(s)| = {modulus:.3e})")]
    PoleEvaluation { modulus: f64 },

    #[error("polynomial is not monic (leading coefficient {0})")]
    NotMonic(f64),

    #[error("polynomial is not Hurwitz with margin {margin}")]
    NotHurwitz { margin: f64 },

    #[error("system is not minimal (controllable and observable)")]
    NotMinimal,

    #[error("polynomials are not coprime: {0}")]
    NotCoprime(String),

    #[error("Rouche stability certificate failed: supremum {supremum:.6} >= 1")]
    StabilityMarginFailed { supremum: f64 },

    #[error("degree constraint violated: {0}")]
    DegreeConstraintViolated(String),

    #[error("delayed value requested at t = {t} before history exists")]
    HistoryUnderflow { t: f64 },

    #[error("quasi-polynomial Delta(s) is not certified stable")]
    DeltaNotStable,

    #[error("compensator is not proper: {0}")]
    NonProperCompensator(String),

    #[error("estimated model lost controllability (|Sylvester det| = {det:.3e})")]
    ControllabilityLost { det: f64 },

    #[error("numerical blowup at step {step} (t = {t}): state norm {norm:.3e}")]
    NumericalBlowup { step: usize, t: f64, norm: f64 },

    #[error("reference model is not stable")]
    NotStable,

    #[error("at step {step} (t = {t}): {source}")]
    AtStep {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Strips any step context and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
