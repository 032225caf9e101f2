//! Field, potential and truncation configuration.
//!
//! Potentials are separable and radially symmetric in the transverse plane:
//! `V(x) = J ε U(ρ) g(x₃)`. Units follow ħ = 2m = 1, so the Landau levels
//! sit at `2bj`.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use thiserror::Error;

use crate::quad;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("malformed configuration: {0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

impl ConfigError {
    fn field(field: &str, message: impl Into<String>) -> Self {
        Self::Field {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub b: f64,
    pub q: usize,
}

impl FieldConfig {
    pub fn landau_level(&self, j: usize) -> f64 {
        2.0 * self.b * j as f64
    }

    /// Radius of the chart disk around the reference level.
    pub fn chart_radius(&self) -> f64 {
        (2.0 * self.b).sqrt()
    }
}

/// Sign structure of the potential.
///
/// `Mixed` flips sign across the transverse plane `x₃ = 0`, so
/// `J(x) = sgn(x₃)`; it is the only sign-indefinite shape the separable
/// assembly supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
    Mixed,
}

impl Sign {
    pub fn definite(self) -> Option<f64> {
        match self {
            Sign::Positive => Some(1.0),
            Sign::Negative => Some(-1.0),
            Sign::Mixed => None,
        }
    }

    pub fn at(self, x3: f64) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
            Sign::Mixed => {
                if x3 > 0.0 {
                    1.0
                } else if x3 < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn to_json(self) -> Value {
        match self {
            Sign::Positive => Value::from(1),
            Sign::Negative => Value::from(-1),
            Sign::Mixed => Value::from("mixed"),
        }
    }

    fn from_json(v: &Value) -> Result<Self, ConfigError> {
        let bad = || ConfigError::field("sign", "expected +1, -1 or \"mixed\"");
        match v {
            Value::Number(n) => match n.as_f64() {
                Some(x) if x == 1.0 => Ok(Sign::Positive),
                Some(x) if x == -1.0 => Ok(Sign::Negative),
                _ => Err(bad()),
            },
            Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
                "+1" | "1" | "positive" => Ok(Sign::Positive),
                "-1" | "negative" => Ok(Sign::Negative),
                "mixed" => Ok(Sign::Mixed),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

/// Transverse factor `U(ρ) ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialProfile {
    /// `u₀ ⟨ρ⟩^{-α}` with `⟨ρ⟩ = (1 + ρ²)^{1/2}`.
    PowerLaw { alpha: f64, u0: f64 },
    /// `exp(-μ ρ^{2β})`.
    Gaussian {
        mu: f64,
        #[serde(default = "one")]
        beta: f64,
    },
    /// `C·1{ρ ≤ R}`.
    CompactStep { radius: f64, height: f64 },
}

fn one() -> f64 {
    1.0
}

/// Which eigenvalue-counting law governs `p_q U p_q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayFamily {
    Power { alpha: f64, u0: f64 },
    Exponential { mu: f64, beta: f64 },
    Compact,
}

impl RadialProfile {
    pub fn eval(&self, rho: f64) -> f64 {
        match *self {
            RadialProfile::PowerLaw { alpha, u0 } => u0 * (1.0 + rho * rho).powf(-0.5 * alpha),
            RadialProfile::Gaussian { mu, beta } => {
                if beta == 1.0 {
                    (-mu * rho * rho).exp()
                } else {
                    (-mu * rho.powf(2.0 * beta)).exp()
                }
            }
            RadialProfile::CompactStep { radius, height } => {
                if rho <= radius {
                    height
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            RadialProfile::PowerLaw { u0, .. } => u0,
            RadialProfile::Gaussian { .. } => 1.0,
            RadialProfile::CompactStep { height, .. } => height,
        }
    }

    /// Radii where `U` fails to be smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            RadialProfile::CompactStep { radius, .. } => vec![radius],
            _ => Vec::new(),
        }
    }

    /// `∫_{ℝ²} U d²X`.
    pub fn transverse_mass(&self) -> f64 {
        match *self {
            RadialProfile::PowerLaw { alpha, u0 } => 2.0 * PI * u0 / (alpha - 2.0),
            RadialProfile::Gaussian { mu, beta } => {
                PI * libm::tgamma(1.0 / beta) / (beta * mu.powf(1.0 / beta))
            }
            RadialProfile::CompactStep { radius, height } => PI * radius * radius * height,
        }
    }

    pub fn family(&self) -> DecayFamily {
        match *self {
            RadialProfile::PowerLaw { alpha, u0 } => DecayFamily::Power { alpha, u0 },
            RadialProfile::Gaussian { mu, beta } => DecayFamily::Exponential { mu, beta },
            RadialProfile::CompactStep { .. } => DecayFamily::Compact,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::field(name, "must be a positive finite number"))
            }
        };
        match *self {
            RadialProfile::PowerLaw { alpha, u0 } => {
                if !(alpha.is_finite() && alpha > 2.0) {
                    return Err(ConfigError::field("radial.alpha", "α must exceed 2"));
                }
                positive("radial.u0", u0)
            }
            RadialProfile::Gaussian { mu, beta } => {
                positive("radial.mu", mu)?;
                positive("radial.beta", beta)
            }
            RadialProfile::CompactStep { radius, height } => {
                positive("radial.radius", radius)?;
                positive("radial.height", height)
            }
        }
    }
}

/// Axis factor `g(x₃) ≥ 0`, normalized to `g(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AxisProfile {
    /// `exp(-ν x²)`.
    Gaussian { nu: f64 },
    /// `exp(1 - 1/(1 - (x/L)²))` on `|x| < L`.
    CompactBump { half_width: f64 },
}

impl AxisProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            AxisProfile::Gaussian { nu } => (-nu * x * x).exp(),
            AxisProfile::CompactBump { half_width } => {
                let t = x / half_width;
                if t.abs() < 1.0 {
                    (1.0 - 1.0 / (1.0 - t * t)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫_ℝ g`. Closed form for the Gaussian, quadrature for the bump.
    pub fn mass(&self) -> f64 {
        match *self {
            AxisProfile::Gaussian { nu } => (PI / nu).sqrt(),
            AxisProfile::CompactBump { half_width } => {
                let edges: Vec<f64> = (0..=32)
                    .map(|i| half_width * (-1.0 + i as f64 / 16.0))
                    .collect();
                quad::integrate(&edges, 32, |x| self.eval(x))
            }
        }
    }

    /// Half-width of the interval outside which `g < 1e-16`.
    pub fn default_halfwidth(&self) -> f64 {
        match *self {
            AxisProfile::Gaussian { nu } => (1e16f64.ln() / nu).sqrt(),
            AxisProfile::CompactBump { half_width } => half_width,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let (name, v) = match *self {
            AxisProfile::Gaussian { nu } => ("axis.nu", nu),
            AxisProfile::CompactBump { half_width } => ("axis.half_width", half_width),
        };
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(ConfigError::field(name, "must be a positive finite number"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialProfile {
    pub sign: Sign,
    pub radial: RadialProfile,
    pub axis: AxisProfile,
    pub epsilon: f64,
}

impl PotentialProfile {
    /// `V(ρ, x₃) = J ε U(ρ) g(x₃)`.
    pub fn eval(&self, rho: f64, x3: f64) -> f64 {
        self.sign.at(x3) * self.epsilon * self.radial.eval(rho) * self.axis.eval(x3)
    }

    /// `W(ρ) = ∫|V(ρ, x₃)| dx₃ = ε U(ρ) ∫g`.
    pub fn w_density(&self, rho: f64) -> f64 {
        self.epsilon * self.radial.eval(rho) * self.axis.mass()
    }

    /// `∫_{ℝ³} V`; zero for the mixed sign.
    pub fn integral(&self) -> f64 {
        self.sign.definite().unwrap_or(0.0)
            * self.epsilon
            * self.radial.transverse_mass()
            * self.axis.mass()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub j_max: usize,
    pub l_max: usize,
    pub n_axis: usize,
    pub axis_halfwidth: f64,
    pub det_tail_tol: f64,
}

/// Validated, fully populated configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Config {
    pub field: FieldConfig,
    pub potential: PotentialProfile,
    pub truncation: Truncation,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    b: Option<f64>,
    q: Option<i64>,
    sign: Option<Value>,
    epsilon: Option<f64>,
    radial: Option<RadialProfile>,
    axis: Option<AxisProfile>,
    truncation: Option<RawTruncation>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawTruncation {
    j_max: Option<i64>,
    l_max: Option<i64>,
    n_axis: Option<i64>,
    axis_halfwidth: Option<f64>,
    det_tail_tol: Option<f64>,
}

fn count(field: &str, v: Option<i64>, default: usize) -> Result<usize, ConfigError> {
    match v {
        None => Ok(default),
        Some(x) if x > 0 => Ok(x as usize),
        Some(_) => Err(ConfigError::field(field, "must be a positive integer")),
    }
}

impl Config {
    /// Parses and validates a JSON configuration document.
    pub fn from_json(doc: &str) -> Result<Self, ConfigError> {
        let value: Value =
            serde_json::from_str(doc).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self, ConfigError> {
        let raw: RawConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let field = e.path().to_string();
            let message = e.into_inner().to_string();
            if field == "." {
                ConfigError::Parse(message)
            } else {
                ConfigError::Field { field, message }
            }
        })?;
        let b = raw.b.unwrap_or(1.0);
        if !(b.is_finite() && b > 0.0) {
            return Err(ConfigError::field("b", "magnetic field must be positive"));
        }
        let q = match raw.q.unwrap_or(0) {
            q if q >= 0 => q as usize,
            _ => return Err(ConfigError::field("q", "must be a nonnegative integer")),
        };
        let sign = match &raw.sign {
            None => Sign::Positive,
            Some(v) => Sign::from_json(v)?,
        };
        let epsilon = raw.epsilon.unwrap_or(1.0);
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(ConfigError::field("epsilon", "coupling must be nonnegative"));
        }
        let radial = raw
            .radial
            .ok_or_else(|| ConfigError::field("radial", "missing radial profile"))?;
        radial.validate()?;
        let axis = raw
            .axis
            .ok_or_else(|| ConfigError::field("axis", "missing axis profile"))?;
        axis.validate()?;

        let t = raw.truncation.unwrap_or_default();
        let j_max = count("truncation.j_max", t.j_max, q + 6)?;
        if j_max < q + 2 {
            return Err(ConfigError::field(
                "truncation.j_max",
                format!("must be at least q + 2 = {}", q + 2),
            ));
        }
        let l_max = count("truncation.l_max", t.l_max, 48)?;
        let n_axis = count("truncation.n_axis", t.n_axis, 48)?;
        let axis_halfwidth = t.axis_halfwidth.unwrap_or_else(|| axis.default_halfwidth());
        if !(axis_halfwidth.is_finite() && axis_halfwidth > 0.0) {
            return Err(ConfigError::field("truncation.axis_halfwidth", "must be positive"));
        }
        let det_tail_tol = t.det_tail_tol.unwrap_or(1e-10);
        if !(det_tail_tol.is_finite() && det_tail_tol > 0.0) {
            return Err(ConfigError::field("truncation.det_tail_tol", "must be positive"));
        }
        Ok(Config {
            field: FieldConfig { b, q },
            potential: PotentialProfile {
                sign,
                radial,
                axis,
                epsilon,
            },
            truncation: Truncation {
                j_max,
                l_max,
                n_axis,
                axis_halfwidth,
                det_tail_tol,
            },
        })
    }

    /// Serializes with every default filled in.
    pub fn to_value(&self) -> Value {
        serde_json::json!({
            "b": self.field.b,
            "q": self.field.q,
            "sign": self.potential.sign.to_json(),
            "epsilon": self.potential.epsilon,
            "radial": self.potential.radial,
            "axis": self.potential.axis,
            "truncation": self.truncation,
        })
    }

    pub fn to_json(&self) -> String {
        self.to_value().to_string()
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.potential.epsilon = epsilon;
        self
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn sign_definite(&self) -> Option<f64> {
        self.potential.sign.definite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(extra: &str) -> String {
        format!(
            r#"{{"b": 1, "q": 0, "radial": {{"kind": "power_law", "alpha": 4, "u0": 1}},
                "axis": {{"kind": "gaussian", "nu": 1}}{extra}}}"#
        )
    }

    #[test]
    fn accepts_power_law_with_defaults() {
        let c = Config::from_json(&doc("")).unwrap();
        assert_eq!(c.truncation.j_max, 6);
        assert_eq!(c.truncation.l_max, 48);
        assert_eq!(c.truncation.n_axis, 48);
        assert_eq!(c.truncation.det_tail_tol, 1e-10);
        assert_eq!(c.potential.sign, Sign::Positive);
    }

    #[test]
    fn rejects_slow_decay() {
        let d = r#"{"b": 1, "q": 0, "radial": {"kind": "power_law", "alpha": 1.5, "u0": 1},
                    "axis": {"kind": "gaussian", "nu": 1}}"#;
        let e = Config::from_json(d).unwrap_err();
        assert!(e.to_string().contains("α must exceed 2"), "{e}");
        assert!(e.to_string().starts_with("radial.alpha"));
    }

    #[test]
    fn rejects_negative_field() {
        let d = doc("").replace("\"b\": 1", "\"b\": -1");
        let e = Config::from_json(&d).unwrap_err();
        assert!(matches!(e, ConfigError::Field { ref field, .. } if field == "b"));
    }

    #[test]
    fn rejects_small_level_cutoff_and_zero_counts() {
        let e = Config::from_json(&doc(r#", "truncation": {"j_max": 1}"#)).unwrap_err();
        assert!(e.to_string().starts_with("truncation.j_max"));
        let e = Config::from_json(&doc(r#", "truncation": {"n_axis": 0}"#)).unwrap_err();
        assert!(e.to_string().starts_with("truncation.n_axis"));
    }

    #[test]
    fn round_trip_is_idempotent() {
        let c = Config::from_json(&doc(r#", "sign": "mixed", "epsilon": 0.25"#)).unwrap();
        let again = Config::from_json(&c.to_json()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.to_json(), again.to_json());
        assert_eq!(c.hash(), again.hash());
    }

    #[test]
    fn potential_spot_values() {
        let g = RadialProfile::Gaussian { mu: 1.0, beta: 1.0 };
        assert_eq!(g.eval(0.0), 1.0);
        let step = RadialProfile::CompactStep { radius: 2.0, height: 3.0 };
        assert_eq!(step.eval(2.0 + 1e-12), 0.0);
        assert_eq!(step.eval(2.0), 3.0);
    }

    #[test]
    fn axis_mass_matches_quadrature() {
        let g = AxisProfile::Gaussian { nu: 1.0 };
        let edges: Vec<f64> = (0..=20).map(|i| -10.0 + i as f64).collect();
        let numeric = quad::integrate(&edges, 24, |x| g.eval(x));
        assert!((g.mass() - PI.sqrt()).abs() < 1e-15);
        assert!((g.mass() - numeric).abs() < 1e-13);
        let bump = AxisProfile::CompactBump { half_width: 1.5 };
        let fine: Vec<f64> = (0..=300).map(|i| -1.5 + i as f64 * 0.01).collect();
        assert!((bump.mass() - quad::integrate(&fine, 40, |x| bump.eval(x))).abs() < 1e-10);
    }

    #[test]
    fn transverse_mass_matches_quadrature() {
        for u in [
            RadialProfile::Gaussian { mu: 0.7, beta: 1.0 },
            RadialProfile::Gaussian { mu: 1.3, beta: 0.8 },
            RadialProfile::PowerLaw { alpha: 5.0, u0: 2.0 },
        ] {
            let edges: Vec<f64> = (0..=4000).map(|i| (i as f64 * 0.05).powi(2)).collect();
            let numeric = quad::integrate(&edges, 16, |r| 2.0 * PI * r * u.eval(r));
            assert!((u.transverse_mass() - numeric).abs() < 1e-6 * numeric, "{u:?}");
        }
    }

    #[test]
    fn power_law_tail_constant() {
        let p = PotentialProfile {
            sign: Sign::Positive,
            radial: RadialProfile::PowerLaw { alpha: 4.0, u0: 1.5 },
            axis: AxisProfile::Gaussian { nu: 2.0 },
            epsilon: 0.3,
        };
        let limit = 0.3 * 1.5 * p.axis.mass();
        let rho: f64 = 1e4;
        assert!((p.w_density(rho) * rho.powi(4) / limit - 1.0).abs() < 1e-7);
    }
}
