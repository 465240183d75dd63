use thiserror::Error;

/// A row that failed validation while reading a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("cannot convert {from} to {to}: incompatible dimensions ({from_dim} vs {to_dim})")]
    DimensionMismatch {
        from: &'static str,
        to: &'static str,
        from_dim: &'static str,
        to_dim: &'static str,
    },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("Matsubara sum did not converge after {terms} terms (partial sum {partial_sum:e})")]
    MatsubaraNotConverged { partial_sum: f64, terms: usize },

    #[error("proximity force approximation invalid: d/R = {ratio:e} >= 0.1")]
    PfaInvalid { ratio: f64 },

    #[error("invalid input file:\n{}", format_rows(.0))]
    InvalidRows(Vec<RowError>),

    #[error("{0} contains no data rows")]
    Empty(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("evaluation failed at d = {d_um} um: {source}")]
    AtPoint {
        d_um: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_rows(rows: &[RowError]) -> String {
    rows.iter()
        .map(|r| format!("  {r}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn at_point(d_um: f64, source: Error) -> Self {
        Error::AtPoint {
            d_um,
            source: Box::new(source),
        }
    }

    /// True for failures of the numerics (non-convergence, breakdown of a
    /// fit) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::MatsubaraNotConverged { .. } | Error::Fit(_) => true,
            Error::AtPoint { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
