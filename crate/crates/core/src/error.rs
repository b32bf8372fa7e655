use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("t = {t} lies below the domain floor {floor}")]
    Domain { t: f64, floor: f64 },

    #[error("derivative order {0} is not supported (expected 0..=3)")]
    Order(usize),

    #[error("inadmissible quotient: {0}")]
    InadmissibleQuotient(String),

    #[error("point {point:?} is outside the chart domain: {reason}")]
    ChartDomain { point: Vec<f64>, reason: String },

    #[error("base metric is not positive definite at {0:?}")]
    BaseMetric(Vec<f64>),

    #[error("degenerate lifted metric: {inequality} violated (value {value:e}) at t = {t}")]
    DegenerateMetric {
        inequality: &'static str,
        value: f64,
        t: f64,
    },

    #[error("singular {what}: |value| = {value:e}")]
    Singular { what: &'static str, value: f64 },

    #[error("degenerate plane: Gram determinant {0:e}")]
    DegeneratePlane(f64),

    #[error("degenerate decomposition basis: {0}")]
    DegenerateBasis(&'static str),

    #[error("tensor is not in the span of the basis: residual {residual:e} exceeds {bound:e}")]
    NotInSpan { residual: f64, bound: f64 },

    #[error("rank deficient basis: condition number {0:e}")]
    RankDeficient(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}
