//! Parsers for the free-form command-line values.

use std::fmt;
use std::str::FromStr;

use landau_core::ssf_breit_wigner::{Cutoff, TestFunction};
use thiserror::Error;

/// Largest sample count a window may request.
pub const MAX_WINDOW_POINTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct SpecError(pub String);

fn numbers(s: &str, expected: usize, shape: &str) -> Result<Vec<f64>, SpecError> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != expected {
        return Err(SpecError(format!("{s:?}: expected {shape}")));
    }
    parts
        .iter()
        .map(|p| match p.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            Ok(_) => Err(SpecError(format!("{s:?}: non-finite value {p:?}"))),
            Err(e) => Err(SpecError(format!("{s:?}: {p:?}: {e}"))),
        })
        .collect()
}

/// `a:b:n`, an interval with a sample count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

impl Window {
    /// Evenly spaced points, endpoints included.
    pub fn linear(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let h = (self.end - self.start) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.end } else { self.start + h * i as f64 })
            .collect()
    }

    /// Geometrically spaced points; needs a positive start.
    pub fn geometric(&self) -> Result<Vec<f64>, SpecError> {
        if !(self.start > 0.0) {
            return Err(SpecError(format!("{self}: geometric spacing needs a positive start")));
        }
        if self.count == 1 {
            return Ok(vec![self.start]);
        }
        let ratio = (self.end / self.start).ln() / (self.count - 1) as f64;
        Ok((0..self.count)
            .map(|i| if i + 1 == self.count { self.end } else { self.start * (ratio * i as f64).exp() })
            .collect())
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.end, self.count)
    }
}

impl FromStr for Window {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (bounds, count) = s
            .rsplit_once(':')
            .ok_or_else(|| SpecError(format!("{s:?}: expected a:b:n")))?;
        let count: usize = count
            .trim()
            .parse()
            .map_err(|e| SpecError(format!("{s:?}: sample count: {e}")))?;
        let v = numbers(bounds, 2, "a:b:n")?;
        let w = Window { start: v[0], end: v[1], count };
        if count == 0 || count > MAX_WINDOW_POINTS {
            return Err(SpecError(format!("{s:?}: sample count must be in 1..={MAX_WINDOW_POINTS}")));
        }
        if count > 1 && !(w.start < w.end) {
            return Err(SpecError(format!("{s:?}: need a < b")));
        }
        Ok(w)
    }
}

/// `gaussian:center:width` or `constant:value`.
pub fn parse_test_function(s: &str) -> Result<TestFunction, SpecError> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    match kind.trim() {
        "gaussian" => {
            let v = numbers(rest, 2, "gaussian:center:width")?;
            if !(v[1] > 0.0) {
                return Err(SpecError(format!("{s:?}: width must be positive")));
            }
            Ok(TestFunction::gaussian(v[0], v[1]))
        }
        "constant" => Ok(TestFunction::constant(numbers(rest, 1, "constant:value")?[0])),
        _ => Err(SpecError(format!("{s:?}: expected gaussian:c:w or constant:c"))),
    }
}

/// `p0:p1:s0:s1`: plateau `[p0, p1]` inside support `(s0, s1)`.
pub fn parse_cutoff(s: &str) -> Result<Cutoff, SpecError> {
    let v = numbers(s, 4, "p0:p1:s0:s1")?;
    if !(v[2] < v[0] && v[0] < v[1] && v[1] < v[3]) {
        return Err(SpecError(format!("{s:?}: need s0 < p0 < p1 < s1")));
    }
    Cutoff::new((v[0], v[1]), (v[2], v[3])).map_err(|e| SpecError(e.to_string()))
}
