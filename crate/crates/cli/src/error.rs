use landau_core::effective_operator::OperatorError;
use landau_core::landau_toeplitz::ToeplitzError;
use landau_core::model::ConfigError;
use landau_core::resonance_search::SearchError;
use landau_core::ssf_breit_wigner::SsfError;
use serde_json::json;
use thiserror::Error;

/// A failed run, split into bad input (exit 1) and numerical failure (exit 2).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("{field}: {message}")]
    Validation { field: String, message: String },
    #[error("{kind}: {message}")]
    Numerical { kind: &'static str, message: String },
}

impl CliError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Validation { field: field.into(), message: message.into() }
    }

    fn numerical(kind: &'static str, message: impl ToString) -> Self {
        Self::Numerical { kind, message: message.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation { .. } => 1,
            Self::Numerical { .. } => 2,
        }
    }

    /// One-line JSON written to stderr.
    pub fn to_json(&self) -> String {
        let v = match self {
            Self::Validation { field, message } => json!({
                "error": "validation",
                "field": field,
                "message": message,
                "exit_code": 1,
            }),
            Self::Numerical { kind, message } => json!({
                "error": "numerical",
                "kind": kind,
                "message": message,
                "exit_code": 2,
            }),
        };
        v.to_string()
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Field { field, message } => Self::validation(format!("config.{field}"), message),
            ConfigError::Parse(m) => Self::validation("config", m),
        }
    }
}

impl From<ToeplitzError> for CliError {
    fn from(e: ToeplitzError) -> Self {
        match e {
            ToeplitzError::LawDomain { .. } | ToeplitzError::InsufficientData => {
                Self::validation("window", e.to_string())
            }
            ToeplitzError::Quadrature { .. } => Self::numerical("quadrature", e),
            ToeplitzError::NotInSector { .. } => Self::numerical("sector", e),
        }
    }
}

impl From<OperatorError> for CliError {
    fn from(e: OperatorError) -> Self {
        match e {
            OperatorError::Channel(c) => Self::numerical("threshold", c),
            OperatorError::Toeplitz(t) => t.into(),
            OperatorError::NoSector { .. } => Self::numerical("sector", e),
            OperatorError::TailNotConverged { .. } => Self::numerical("sector_tail", e),
            OperatorError::NotSignDefinite => Self::validation("config.sign", e.to_string()),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Operator(o) => o.into(),
            SearchError::Region(m) => Self::validation("region", m),
            SearchError::BoundaryZero { .. } => Self::numerical("boundary_zero", e),
            SearchError::NonInteger { .. } => Self::numerical("winding", e),
            SearchError::SectorRange { .. } => Self::numerical("sector_range", e),
        }
    }
}

impl From<SsfError> for CliError {
    fn from(e: SsfError) -> Self {
        match e {
            SsfError::Operator(o) => o.into(),
            SsfError::Search(s) => s.into(),
            SsfError::Domain(m) => Self::validation("window", m),
            SsfError::Unwrap { .. } => Self::numerical("unwrap", e),
            SsfError::UnlocatedResonance { .. } => Self::numerical("unlocated_resonance", e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        let e: CliError = SsfError::Domain("bad".into()).into();
        assert_eq!(e.exit_code(), 1);
        let e: CliError = SearchError::NonInteger { winding: 0.5 }.into();
        assert_eq!(e.exit_code(), 2);
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["kind"], "winding");
    }
}
