use thiserror::Error;

/// Errors raised by domain-type constructors and the single-step blending
/// operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("attribute code is empty")]
    EmptyAttributeCode,
    #[error("duplicate attribute `{0}`")]
    DuplicateAttribute(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("attribute `{0}` missing from quality vector")]
    MissingAttribute(String),
    #[error("non-finite value for `{0}`")]
    NonFinite(String),
    #[error("degradation cap for `{0}` is negative")]
    NegativeCap(String),
    #[error("ash-yield curve needs at least 2 knots, got {0}")]
    TooFewKnots(usize),
    #[error("knot densities must be strictly increasing")]
    DensityNotIncreasing,
    #[error("product ash must be nondecreasing in density")]
    AshDecreasing,
    #[error("yield must be nondecreasing in density")]
    YieldDecreasing,
    #[error("yield {0} outside (0, 1]")]
    YieldOutOfRange(f64),
    #[error("percent value {0} outside [0, 100]")]
    PercentOutOfRange(f64),
    #[error("cut-point {density} outside curve range [{min}, {max}]")]
    CutPointOutOfRange { density: f64, min: f64, max: f64 },
    #[error("ROM `{0}` has no ash-yield curve and cannot be washed")]
    NoWashCurve(String),
    #[error("ROM `{0}` does not allow bypassing the wash plant")]
    BypassNotAllowed(String),
    #[error("registry has no `ash` attribute")]
    NoAshAttribute,
    #[error("blend has zero total tonnage")]
    EmptyBlend,
    #[error("blend components have mismatched attribute counts")]
    RegistryMismatch,
    #[error("blend is off-spec for product `{0}`; it cannot be priced")]
    OffSpec(String),
    #[error("period {period} outside horizon of {horizon}")]
    PeriodOutOfRange { period: usize, horizon: usize },
}

/// Problems binding a plan to a scenario.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("unknown product `{0}`")]
    UnknownProduct(String),
    #[error("unknown ROM `{0}`")]
    UnknownRom(String),
    #[error("period {period} outside horizon of {horizon}")]
    PeriodOutOfRange { period: usize, horizon: usize },
    #[error("duplicate allotment for period {period}, product `{product}`, ROM `{rom}`")]
    DuplicateAllotment { period: usize, product: String, rom: String },
    #[error("duplicate cut-point for ROM `{rom}` in period {period}")]
    DuplicateCutPoint { period: usize, rom: String },
    #[error("ROM `{rom}` is used in period {period} but has no cut-point")]
    MissingCutPoint { period: usize, rom: String },
    #[error("rehandle of {tonnes} t for ROM `{rom}` in period {period} is invalid")]
    InvalidRehandle { period: usize, rom: String, tonnes: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}
