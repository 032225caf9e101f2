//! Landau eigenbasis in the symmetric gauge, the projection kernel, sector
//! overlaps of radial multipliers, Toeplitz spectra and their counting laws.
//!
//! Basis convention: `ψ_{j,ℓ}(ρ, θ) = R_{j,ℓ}(ρ) e^{iℓθ} / √(2π)` with `ℓ ≥ -j`,
//! `∫ R² ρ dρ = 1`, and
//! `R = √b √(n!/(n+a)!) t^{a/2} L_n^{(a)}(t) e^{-t/2}`, where `t = bρ²/2`,
//! `a = |ℓ|` and `n = j + min(ℓ, 0)`. With this choice the dyad sum over `ℓ`
//! reproduces the projection kernel exactly, phase included.

use num_complex::Complex64 as C64;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use thiserror::Error;

use crate::model::{DecayFamily, RadialProfile};
use crate::quad;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ToeplitzError {
    #[error("level {level} does not participate in sector {l}")]
    NotInSector { level: usize, l: i64 },
    #[error("radial quadrature in sector {l} did not converge (achieved {achieved:.3e})")]
    Quadrature { l: i64, achieved: f64 },
    #[error("law undefined at s = {s}: {reason}")]
    LawDomain { s: f64, reason: &'static str },
    #[error("fit needs at least 8 positive samples spanning two decades of s")]
    InsufficientData,
}

/// Generalized Laguerre polynomial `L_n^{(a)}(t)` by the three-term recurrence.
pub fn laguerre(n: usize, a: f64, t: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + a - t;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - t) * cur - (kf + a) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

#[derive(Debug, Clone, Copy)]
struct RadialMode {
    n: usize,
    a: usize,
    log_norm: f64,
}

impl RadialMode {
    fn new(j: usize, l: i64, b: f64) -> Result<Self, ToeplitzError> {
        if l < -(j as i64) {
            return Err(ToeplitzError::NotInSector { level: j, l });
        }
        let n = (j as i64 + l.min(0)) as usize;
        let a = l.unsigned_abs() as usize;
        // ln(n!/(n+a)!) = -Σ_{i=n+1}^{n+a} ln i
        let log_ratio: f64 = -((n + 1)..=(n + a)).map(|i| (i as f64).ln()).sum::<f64>();
        Ok(Self {
            n,
            a,
            log_norm: 0.5 * b.ln() + 0.5 * log_ratio,
        })
    }

    fn eval_t(&self, t: f64) -> f64 {
        let lag = laguerre(self.n, self.a as f64, t);
        if t == 0.0 {
            return if self.a == 0 { self.log_norm.exp() * lag } else { 0.0 };
        }
        let log_mag = self.log_norm + 0.5 * self.a as f64 * t.ln() - 0.5 * t;
        log_mag.exp() * lag
    }
}

/// Radial factor `R_{j,ℓ}(ρ)` of the level-`j` eigenfunction in sector `ℓ`.
pub fn landau_eigenfunction(j: usize, l: i64, b: f64, rho: f64) -> Result<f64, ToeplitzError> {
    Ok(RadialMode::new(j, l, b)?.eval_t(0.5 * b * rho * rho))
}

/// Full eigenfunction `ψ_{j,ℓ}` at a Cartesian point of the plane.
pub fn landau_state(j: usize, l: i64, b: f64, x: [f64; 2]) -> Result<C64, ToeplitzError> {
    let rho = x[0].hypot(x[1]);
    let theta = x[1].atan2(x[0]);
    let r = landau_eigenfunction(j, l, b, rho)?;
    Ok(C64::from_polar(r / (2.0 * PI).sqrt(), l as f64 * theta))
}

/// Integral kernel of the projection onto the level-`q` eigenspace.
pub fn projection_kernel(q: usize, b: f64, x: [f64; 2], xp: [f64; 2]) -> C64 {
    let d2 = (x[0] - xp[0]).powi(2) + (x[1] - xp[1]).powi(2);
    let phase = x[0] * xp[1] - xp[0] * x[1];
    let modulus = b / (2.0 * PI) * laguerre(q, 0.0, 0.5 * b * d2) * (-0.25 * b * d2).exp();
    C64::from_polar(1.0, -0.5 * b * phase) * modulus
}

/// Partial dyad sum `Σ_{ℓ=-q}^{l_cut} ψ_{q,ℓ}(X) conj ψ_{q,ℓ}(X′)`.
pub fn basis_kernel(q: usize, b: f64, x: [f64; 2], xp: [f64; 2], l_cut: i64) -> C64 {
    (-(q as i64)..=l_cut)
        .map(|l| {
            let u = landau_state(q, l, b, x).unwrap_or_default();
            let v = landau_state(q, l, b, xp).unwrap_or_default();
            u * v.conj()
        })
        .sum()
}

/// Levels `j ≤ j_max` present in sector `ℓ`.
pub fn sector_levels(l: i64, j_max: usize) -> Vec<usize> {
    let lo = (-l).max(0) as usize;
    (lo..=j_max).collect()
}

/// Symmetric matrix `O^{(ℓ)}_{jj′} = ∫ R_{j,ℓ} U R_{j′,ℓ} ρ dρ` over the
/// retained levels of one sector.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorOverlap {
    pub l: i64,
    pub levels: Vec<usize>,
    matrix: Vec<f64>,
    pub error_estimate: f64,
}

impl SectorOverlap {
    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    /// Entry by position in `levels`.
    pub fn at(&self, a: usize, c: usize) -> f64 {
        self.matrix[a * self.levels.len() + c]
    }

    pub fn position(&self, level: usize) -> Option<usize> {
        self.levels.iter().position(|&j| j == level)
    }

    /// Diagonal entry for a level, zero if absent.
    pub fn diagonal(&self, level: usize) -> f64 {
        self.position(level).map_or(0.0, |a| self.at(a, a))
    }

    pub fn frobenius(&self) -> f64 {
        self.matrix.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.matrix.chunks_exact(self.levels.len().max(1))
    }
}

const PANEL_ORDER: usize = 24;
const OVERLAP_TOL: f64 = 1e-13;

fn t_window(l: i64, levels: &[usize]) -> (f64, f64) {
    let a = l.unsigned_abs() as f64;
    let n_max = levels.iter().map(|&j| j as i64 + l.min(0)).max().unwrap_or(0) as f64;
    let spread = (a + 2.0 * n_max + 1.0).sqrt();
    let lo = (a - 10.0 * spread - 10.0).max(0.0);
    let hi = a + 4.0 * n_max + 14.0 * spread + 40.0;
    (lo, hi)
}

fn overlap_pass(
    modes: &[RadialMode],
    b: f64,
    u: &dyn Fn(f64) -> f64,
    edges: &[f64],
    out: &mut [f64],
) {
    let m = modes.len();
    out.iter_mut().for_each(|x| *x = 0.0);
    let rule = quad::legendre(PANEL_ORDER);
    let mut vals = vec![0.0; m];
    for e in edges.windows(2) {
        for (t, w) in quad::mapped(&rule, e[0], e[1]) {
            let rho = (2.0 * t / b).sqrt();
            let weight = w / b * u(rho);
            if weight == 0.0 {
                continue;
            }
            for (v, mode) in vals.iter_mut().zip(modes) {
                *v = mode.eval_t(t);
            }
            for a in 0..m {
                let wa = weight * vals[a];
                for c in a..m {
                    out[a * m + c] += wa * vals[c];
                }
            }
        }
    }
    for a in 0..m {
        for c in 0..a {
            out[a * m + c] = out[c * m + a];
        }
    }
}

fn panel_edges(lo: f64, hi: f64, breaks: &[f64], panels: usize) -> Vec<f64> {
    let mut cuts = vec![lo, hi];
    cuts.extend(breaks.iter().copied().filter(|&t| t > lo && t < hi));
    cuts.sort_by(f64::total_cmp);
    let span = hi - lo;
    let mut edges = vec![lo];
    for c in cuts.windows(2) {
        let k = ((panels as f64 * (c[1] - c[0]) / span).ceil() as usize).max(1);
        for i in 1..=k {
            edges.push(c[0] + (c[1] - c[0]) * i as f64 / k as f64);
        }
    }
    edges
}

/// Overlap matrix of `U` in sector `ℓ` for the given levels, by composite
/// Gauss–Legendre in `t = bρ²/2` with panel doubling until entries stabilize.
pub fn sector_overlaps(
    l: i64,
    levels: &[usize],
    b: f64,
    u: &RadialProfile,
) -> Result<SectorOverlap, ToeplitzError> {
    sector_overlaps_with(l, levels, b, &|rho| u.eval(rho), &u.breakpoints())
}

/// As [`sector_overlaps`] for an arbitrary bounded radial multiplier with
/// the given discontinuity radii.
pub fn sector_overlaps_with(
    l: i64,
    levels: &[usize],
    b: f64,
    u: &dyn Fn(f64) -> f64,
    break_radii: &[f64],
) -> Result<SectorOverlap, ToeplitzError> {
    let modes = levels
        .iter()
        .map(|&j| RadialMode::new(j, l, b))
        .collect::<Result<Vec<_>, _>>()?;
    let m = modes.len();
    let (lo, hi) = t_window(l, levels);
    let breaks: Vec<f64> = break_radii.iter().map(|r| 0.5 * b * r * r).collect();
    let mut panels = 8;
    let mut prev = vec![0.0; m * m];
    overlap_pass(&modes, b, u, &panel_edges(lo, hi, &breaks, panels), &mut prev);
    let mut cur = vec![0.0; m * m];
    let mut achieved = f64::INFINITY;
    for _ in 0..7 {
        panels *= 2;
        overlap_pass(&modes, b, u, &panel_edges(lo, hi, &breaks, panels), &mut cur);
        let scale = cur.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        achieved = cur
            .iter()
            .zip(&prev)
            .fold(0.0f64, |s, (x, y)| s.max((x - y).abs()));
        if achieved <= OVERLAP_TOL * scale.max(f64::MIN_POSITIVE) {
            return Ok(SectorOverlap {
                l,
                levels: levels.to_vec(),
                matrix: cur,
                error_estimate: achieved,
            });
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Err(ToeplitzError::Quadrature { l, achieved })
}

/// Single entry `O^{(ℓ)}_{jj′}`.
pub fn toeplitz_overlap(
    j: usize,
    jp: usize,
    l: i64,
    b: f64,
    u: &RadialProfile,
) -> Result<f64, ToeplitzError> {
    if j == jp {
        return Ok(sector_overlaps(l, &[j], b, u)?.at(0, 0));
    }
    Ok(sector_overlaps(l, &[j, jp], b, u)?.at(0, 1))
}

/// Eigenvalues of `p_q U p_q`, one per sector, sorted descending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToeplitzSpectrum {
    pub q: usize,
    pub eigenvalues: Vec<(i64, f64)>,
    pub profile_hash: String,
    /// False when `L_max` was hit before the eigenvalues fell below the floor.
    pub floor_reached: bool,
}

impl ToeplitzSpectrum {
    pub fn values(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|e| e.1).collect()
    }

    /// Eigenvalue in a given sector, if computed.
    pub fn in_sector(&self, l: i64) -> Option<f64> {
        self.eigenvalues.iter().find(|e| e.0 == l).map(|e| e.1)
    }

    pub fn scaled(&self, c: f64) -> Vec<f64> {
        self.eigenvalues.iter().map(|e| c * e.1).collect()
    }
}

const SPECTRUM_FLOOR: f64 = 1e-14;

pub fn toeplitz_spectrum(
    q: usize,
    b: f64,
    u: &RadialProfile,
    l_max: usize,
) -> Result<ToeplitzSpectrum, ToeplitzError> {
    let mut eig = Vec::new();
    let mut top = 0.0f64;
    let mut floor_reached = false;
    for l in -(q as i64)..=(l_max as i64) {
        let lam = sector_overlaps(l, &[q], b, u)?.at(0, 0);
        top = top.max(lam);
        eig.push((l, lam));
        if l >= 0 && lam < SPECTRUM_FLOOR * top {
            floor_reached = true;
            break;
        }
    }
    eig.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let mut h = Sha256::new();
    h.update(serde_json::to_string(u).unwrap_or_default());
    h.update(format!("b={b:e};q={q}"));
    let profile_hash = h.finalize().iter().map(|x| format!("{x:02x}")).collect();
    Ok(ToeplitzSpectrum {
        q,
        eigenvalues: eig,
        profile_hash,
        floor_reached,
    })
}

/// Counting quantities at one threshold `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountingSample {
    pub s: f64,
    pub n_plus: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    pub ntilde1: f64,
    pub ntilde2: f64,
    pub law_predicted: Option<f64>,
}

impl CountingSample {
    pub fn from_values(values: &[f64], s: f64) -> Self {
        let mut out = CountingSample {
            s,
            n_plus: 0,
            sigma1: 0.0,
            sigma2: 0.0,
            ntilde1: 0.0,
            ntilde2: 0.0,
            law_predicted: None,
        };
        for &lam in values {
            let x = lam / s;
            if lam > s {
                out.n_plus += 1;
            } else {
                out.ntilde1 += x;
                out.ntilde2 += x * x;
            }
            let damp = 1.0 / (1.0 + x * x).sqrt();
            out.sigma1 += x * damp;
            out.sigma2 += x * x * damp * damp;
        }
        out
    }

    /// `2^{-p/2} ñ_p ≤ σ_p ≤ ñ_p + n₊` for `p = 1, 2`.
    pub fn sandwich_holds(&self) -> bool {
        let slack = 1e-12 * (1.0 + self.n_plus as f64 + self.ntilde1 + self.ntilde2);
        let n = self.n_plus as f64;
        self.ntilde1 / 2f64.sqrt() <= self.sigma1 + slack
            && self.sigma1 <= self.ntilde1 + n + slack
            && self.ntilde2 / 2.0 <= self.sigma2 + slack
            && self.sigma2 <= self.ntilde2 + n + slack
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountingReport {
    pub samples: Vec<CountingSample>,
    pub fit: Option<LawFit>,
}

/// Counting functions of a nonnegative spectrum on a grid of thresholds,
/// optionally paired with the asymptotic law of a decay family.
pub fn counting_functions(
    values: &[f64],
    s_grid: &[f64],
    law: Option<(DecayFamily, f64)>,
) -> CountingReport {
    let samples: Vec<CountingSample> = s_grid
        .iter()
        .map(|&s| {
            let mut c = CountingSample::from_values(values, s);
            if let Some((family, b)) = law {
                c.law_predicted = asymptotic_law(family, b, s).ok();
            }
            c
        })
        .collect();
    let fit = law.and_then(|(family, _)| {
        let pts: Vec<(f64, f64)> = samples.iter().map(|c| (c.s, c.n_plus as f64)).collect();
        fit_counting_exponent(&pts, family).ok()
    });
    CountingReport { samples, fit }
}

/// Leading-order eigenvalue count of `p_q U p_q` above `s`.
pub fn asymptotic_law(family: DecayFamily, b: f64, s: f64) -> Result<f64, ToeplitzError> {
    if !(s > 0.0) {
        return Err(ToeplitzError::LawDomain {
            s,
            reason: "s must be positive",
        });
    }
    let log_domain = || {
        if s >= (-1.0f64).exp() {
            Err(ToeplitzError::LawDomain {
                s,
                reason: "logarithmic laws need s < 1/e",
            })
        } else {
            Ok(s.ln().abs())
        }
    };
    match family {
        DecayFamily::Power { alpha, u0 } => Ok(0.5 * b * u0.powf(2.0 / alpha) * s.powf(-2.0 / alpha)),
        DecayFamily::Exponential { mu, beta } => {
            let ls = log_domain()?;
            if (beta - 1.0).abs() < 1e-12 {
                Ok(ls / (1.0 + 2.0 * mu / b).ln())
            } else if beta < 1.0 {
                Ok(0.5 * b * mu.powf(-1.0 / beta) * ls.powf(1.0 / beta))
            } else {
                Ok(beta / (beta - 1.0) * ls / ls.ln())
            }
        }
        DecayFamily::Compact => {
            let ls = log_domain()?;
            Ok(ls / ls.ln())
        }
    }
}

/// Result of fitting sampled counts to a decay family.
///
/// `slope` is the exponent of the log-log fit: against `ln s` for power
/// decay, against `ln|ln s|` for `β ≤ 1` and against `ln(|ln s|/ln|ln s|)`
/// otherwise. For power decay `prefactor` is `exp(intercept)`. For the
/// logarithmic families it is the coefficient of the exact law shape in a
/// linear fit with offset, which absorbs the O(1) integer rounding of `n₊`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LawFit {
    pub slope: f64,
    pub prefactor: f64,
    pub residual: f64,
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, c)| (a - mx) * (c - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, c)| (c - icpt - slope * a).powi(2))
        .sum();
    (slope, icpt, (rss / n).sqrt())
}

pub fn fit_counting_exponent(
    samples: &[(f64, f64)],
    family: DecayFamily,
) -> Result<LawFit, ToeplitzError> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|&(s, n)| s > 0.0 && n > 0.0)
        .collect();
    if pts.len() < 8 {
        return Err(ToeplitzError::InsufficientData);
    }
    let (smin, smax) = pts
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, c), p| (a.min(p.0), c.max(p.0)));
    if smax / smin < 100.0 * (1.0 - 1e-12) {
        return Err(ToeplitzError::InsufficientData);
    }
    let ln_n: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    match family {
        DecayFamily::Power { .. } => {
            let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
            let (slope, icpt, residual) = linear_fit(&x, &ln_n);
            Ok(LawFit {
                slope,
                prefactor: icpt.exp(),
                residual,
            })
        }
        _ => {
            if smax >= (-1.0f64).exp() {
                return Err(ToeplitzError::LawDomain {
                    s: smax,
                    reason: "logarithmic laws need s < 1/e",
                });
            }
            let log_ratio =
                matches!(family, DecayFamily::Compact) || matches!(family, DecayFamily::Exponential { beta, .. } if beta > 1.0 + 1e-12);
            let shape = |s: f64| -> f64 {
                let ls = s.ln().abs();
                match family {
                    DecayFamily::Exponential { beta, .. } if beta < 1.0 - 1e-12 => ls.powf(1.0 / beta),
                    _ if log_ratio => ls / ls.ln(),
                    _ => ls,
                }
            };
            let base: Vec<f64> = pts
                .iter()
                .map(|p| {
                    let ls = p.0.ln().abs();
                    if log_ratio { (ls / ls.ln()).ln() } else { ls.ln() }
                })
                .collect();
            let (slope, _, residual) = linear_fit(&base, &ln_n);
            let x: Vec<f64> = pts.iter().map(|p| shape(p.0)).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let (prefactor, _, _) = linear_fit(&x, &y);
            Ok(LawFit {
                slope,
                prefactor,
                residual,
            })
        }
    }
}
