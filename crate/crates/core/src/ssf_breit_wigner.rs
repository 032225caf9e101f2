//! Spectral shift function near a Landau level.
//!
//! `ξ₂(λ) = (1/π) Arg det₂(I + T_V(λ + i0))` is tracked per sector along a
//! path that starts at an anchor below the spectrum and passes each Landau
//! level on a small semicircle in the upper half-plane. The trace
//! correction `(1/π) Im ∫ tr ∂_z T_V dz` over the same path turns `ξ₂`
//! into `ξ`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::effective_operator::{Operator, OperatorError};
use crate::landau_toeplitz::CountingSample;
use crate::model::DecayFamily;
use crate::quad::{legendre, mapped};
use crate::resonance_search::{w_spectrum, Region, Resonance, SearchError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SsfError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("{0}")]
    Domain(String),
    #[error("argument unwrap failed in sector {sector} between {from} and {to}")]
    Unwrap { sector: i64, from: C64, to: C64 },
    #[error("residual spike near mu = {mu}: an unlocated resonance is nearby; enlarge the search region")]
    UnlocatedResonance { mu: f64 },
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Distance of `lambda` to the nearest Landau level `2bj`.
fn level_distance(lambda: f64, b: f64) -> f64 {
    let j = (lambda / (2.0 * b)).round().max(0.0);
    (lambda - 2.0 * b * j).abs()
}

/// Anchor below the spectrum where every sector block has Frobenius bound
/// below 1/2, so `det₂` there is real and positive.
pub fn choose_anchor(op: &Operator) -> Result<f64, SsfError> {
    let b = op.config().field.b;
    let mut lam = -2.0 * b;
    if op.epsilon() == 0.0 {
        return Ok(lam);
    }
    let (lo, hi) = op.sector_bounds();
    for _ in 0..60 {
        let res = op.resolvents(op.physical_channels(C64::new(lam, 0.0))?);
        let mut worst = 0.0f64;
        for l in lo..=hi {
            worst = worst.max(op.sector_norm_bound(l, &res)?);
        }
        if worst < 0.5 {
            return Ok(lam);
        }
        lam *= 2.0;
    }
    Err(SsfError::Domain("no anchor with small operator norm found".into()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece {
    Line { from: f64, to: f64 },
    /// Upper semicircle from `center - radius` to `center + radius`.
    Detour { center: f64, radius: f64 },
}

impl Piece {
    fn point(&self, t: f64) -> C64 {
        match *self {
            Piece::Line { from, to } => C64::new(from + (to - from) * t, 0.0),
            Piece::Detour { center, radius } => center + C64::from_polar(radius, PI * (1.0 - t)),
        }
    }

    fn velocity(&self, t: f64) -> C64 {
        match *self {
            Piece::Line { from, to } => C64::new(to - from, 0.0),
            Piece::Detour { radius, .. } => {
                C64::new(0.0, -PI) * C64::from_polar(radius, PI * (1.0 - t))
            }
        }
    }
}

#[derive(Debug, Clone)]
struct RealPath {
    pieces: Vec<Piece>,
    /// Number of pieces traversed when each target is reached.
    ends: Vec<usize>,
}

impl RealPath {
    fn new(anchor: f64, targets: &[f64], b: f64) -> Result<Self, SsfError> {
        let guard = crate::axis_channel::THRESHOLD_GUARD * b;
        let mut pieces = Vec::new();
        let mut ends = Vec::with_capacity(targets.len());
        let mut cur = anchor;
        for &t in targets {
            if !t.is_finite() || t <= cur {
                return Err(SsfError::Domain(format!(
                    "grid must be strictly increasing and above the anchor {anchor}; got {t} after {cur}"
                )));
            }
            if level_distance(t, b) < guard {
                return Err(SsfError::Domain(format!("grid point {t} sits on a Landau level")));
            }
            let first = (cur / (2.0 * b)).floor().max(-1.0) as i64 + 1;
            let mut j = first.max(0);
            while 2.0 * b * (j as f64) < t {
                let c = 2.0 * b * j as f64;
                if c > cur {
                    let rho = 0.5 * (c - cur).min(t - c).min(b);
                    pieces.push(Piece::Line { from: cur, to: c - rho });
                    pieces.push(Piece::Detour { center: c, radius: rho });
                    cur = c + rho;
                }
                j += 1;
            }
            pieces.push(Piece::Line { from: cur, to: t });
            ends.push(pieces.len());
            cur = t;
        }
        Ok(Self { pieces, ends })
    }
}

fn sector_log(op: &Operator, l: i64, z: C64) -> Result<C64, SsfError> {
    let res = op.resolvents(op.physical_channels(z)?);
    Ok(op
        .sector_det2(l, &res)?
        .log()
        .unwrap_or(C64::new(f64::NEG_INFINITY, 0.0)))
}

/// Lowest Landau level present in sector `l`.
fn lowest_level(l: i64) -> usize {
    (-l).max(0) as usize
}

/// Continuous `Arg det₂` of one sector at every target of the path.
fn track_sector(op: &Operator, l: i64, path: &RealPath) -> Result<(Vec<f64>, usize), SsfError> {
    let b = op.config().field.b;
    let closed_below = 2.0 * b * lowest_level(l) as f64;
    let mut arg = 0.0;
    let mut evaluations = 0;
    let mut out = Vec::with_capacity(path.ends.len());
    let mut next_end = 0;
    let mut last: Option<C64> = None;
    for (i, piece) in path.pieces.iter().enumerate() {
        // On the real axis below the sector's first level the block is real
        // symmetric; a sign change of det₂ is a crossing eigenvalue, which
        // moves the boundary-value argument by -π.
        let real = matches!(piece, Piece::Line { to, .. } if *to < closed_below);
        let n0 = match piece {
            Piece::Line { .. } => 1,
            Piece::Detour { .. } => 8,
        };
        let eval = |t: f64| sector_log(op, l, piece.point(t)).map(|v| (t, v));
        // The first sample coincides with the previous piece's last one.
        let mut pts: Vec<(f64, C64)> = (usize::from(last.is_some())..=n0)
            .into_par_iter()
            .map(|i| eval(i as f64 / n0 as f64))
            .collect::<Result<_, _>>()?;
        if let Some(v) = last {
            pts.insert(0, (0.0, v));
        }
        loop {
            let coarse: Vec<usize> = pts
                .windows(2)
                .enumerate()
                .filter(|(_, w)| {
                    if w[1].0 - w[0].0 < 1e-13 {
                        return false;
                    }
                    let d = w[1].1 - w[0].1;
                    let jump = !real && wrap(d.im).abs() > std::f64::consts::FRAC_PI_4;
                    jump || !(d.re.abs() <= 1.0)
                })
                .map(|(i, _)| i)
                .collect();
            if coarse.is_empty() {
                break;
            }
            let mids: Vec<(f64, C64)> = coarse
                .par_iter()
                .map(|&i| eval(0.5 * (pts[i].0 + pts[i + 1].0)))
                .collect::<Result<_, _>>()?;
            pts.extend(mids);
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        evaluations += pts.len();
        last = pts.last().map(|p| p.1);
        for w in pts.windows(2) {
            let d = w[1].1 - w[0].1;
            if real {
                if w[0].1.im.cos().signum() != w[1].1.im.cos().signum() {
                    arg -= PI;
                }
            } else {
                let step = wrap(d.im);
                if step.abs() > std::f64::consts::FRAC_PI_2 || !d.re.is_finite() {
                    return Err(SsfError::Unwrap {
                        sector: l,
                        from: piece.point(w[0].0),
                        to: piece.point(w[1].0),
                    });
                }
                arg += step;
            }
        }
        while next_end < path.ends.len() && path.ends[next_end] == i + 1 {
            out.push(arg);
            next_end += 1;
        }
    }
    Ok((out, evaluations))
}

/// `ξ₂`, the trace correction and `ξ` on an energy grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsfTrace {
    pub lambda: Vec<f64>,
    pub xi2: Vec<f64>,
    /// Empty until [`xi_from_xi2`] runs.
    pub correction: Vec<f64>,
    pub xi: Vec<f64>,
    pub anchor: f64,
    pub sectors: Vec<i64>,
    /// Determinant evaluations spent on argument tracking.
    pub evaluations: usize,
}

/// `ξ₂` on a strictly increasing energy grid.
pub fn xi2_trace(op: &Operator, lambda: &[f64]) -> Result<SsfTrace, SsfError> {
    let anchor = choose_anchor(op)?;
    let b = op.config().field.b;
    let path = RealPath::new(anchor, lambda, b)?;
    let mut total = vec![0.0; lambda.len()];
    let mut sectors = Vec::new();
    let mut evaluations = 0;
    if op.epsilon() != 0.0 {
        let tol = op.config().truncation.det_tail_tol;
        let (lo, hi) = op.sector_bounds();
        let mut quiet = 0;
        for l in lo..=hi {
            let (args, n) = track_sector(op, l, &path)?;
            evaluations += n;
            let size = args.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            for (t, a) in total.iter_mut().zip(&args) {
                *t += a;
            }
            sectors.push(l);
            if l > 0 {
                quiet = if size < tol { quiet + 1 } else { 0 };
                if quiet >= 2 {
                    break;
                }
            }
            if l == hi {
                return Err(OperatorError::TailNotConverged {
                    l_max: op.config().truncation.l_max,
                    partial: C64::new(total.iter().sum(), 0.0),
                    last: size,
                }
                .into());
            }
        }
    }
    Ok(SsfTrace {
        lambda: lambda.to_vec(),
        xi2: total.into_iter().map(|a| a / PI).collect(),
        correction: Vec::new(),
        xi: Vec::new(),
        anchor,
        sectors,
        evaluations,
    })
}

/// Composite Gauss–Legendre panels on a real segment, graded so each panel
/// is at most half its distance to the nearest Landau level.
fn graded_panels(from: f64, to: f64, b: f64, out: &mut Vec<(f64, f64)>) {
    let (a, c) = (from.min(to), from.max(to));
    let mid = 0.5 * (a + c);
    let j = (mid / (2.0 * b)).round().max(0.0);
    let level = 2.0 * b * j;
    let dist = if level < a {
        a - level
    } else if level > c {
        level - c
    } else {
        0.0
    };
    let near = dist.min(level_distance(a, b)).min(level_distance(c, b));
    if c - a <= 0.5 * near.max(1e-300) || c - a < 1e-14 * (1.0 + c.abs()) {
        out.push((from, to));
    } else {
        let m = 0.5 * (from + to);
        graded_panels(from, m, b, out);
        graded_panels(m, to, b, out);
    }
}

/// Adds the trace correction `(1/π) Im ∫ tr ∂_z T_V dz` and `ξ = ξ₂ + correction`.
pub fn xi_from_xi2(op: &Operator, mut trace: SsfTrace) -> Result<SsfTrace, SsfError> {
    let b = op.config().field.b;
    let path = RealPath::new(trace.anchor, &trace.lambda, b)?;
    let rule = legendre(16);
    let mut acc = C64::new(0.0, 0.0);
    let mut correction = Vec::with_capacity(trace.lambda.len());
    let mut next_end = 0;
    if op.epsilon() != 0.0 {
        op.level_masses()?;
    }
    for (i, piece) in path.pieces.iter().enumerate() {
        if op.epsilon() != 0.0 {
            let panels: Vec<(f64, f64)> = match *piece {
                Piece::Line { from, to } => {
                    let mut p = Vec::new();
                    graded_panels(from, to, b, &mut p);
                    let len = to - from;
                    p.into_iter()
                        .map(|(x, y)| ((x - from) / len, (y - from) / len))
                        .collect()
                }
                Piece::Detour { .. } => (0..8).map(|k| (k as f64 / 8.0, (k + 1) as f64 / 8.0)).collect(),
            };
            let parts: Vec<C64> = panels
                .par_iter()
                .map(|&(s0, s1)| {
                    mapped(&rule, s0, s1)
                        .map(|(t, w)| {
                            let z = piece.point(t);
                            let ch = op.physical_channels(z)?;
                            Ok(op.trace_dz_t(&ch)? * piece.velocity(t) * w)
                        })
                        .sum::<Result<C64, SsfError>>()
                })
                .collect::<Result<_, _>>()?;
            acc += parts.into_iter().sum::<C64>();
        }
        while next_end < path.ends.len() && path.ends[next_end] == i + 1 {
            correction.push(acc.im / PI);
            next_end += 1;
        }
    }
    trace.xi = trace.xi2.iter().zip(&correction).map(|(a, c)| a + c).collect();
    trace.correction = correction;
    Ok(trace)
}

pub fn xi_trace(op: &Operator, lambda: &[f64]) -> Result<SsfTrace, SsfError> {
    xi_from_xi2(op, xi2_trace(op, lambda)?)
}

/// `ξ'(μ) = ξ₂'(μ) + (1/π) Im tr ∂_z T_V(μ + i0)`, with `ξ₂'` from a
/// central difference of each sector's argument.
pub fn xi_prime(op: &Operator, mu: f64) -> Result<f64, SsfError> {
    if op.epsilon() == 0.0 {
        return Ok(0.0);
    }
    let b = op.config().field.b;
    let dist = level_distance(mu, b);
    if dist < crate::axis_channel::THRESHOLD_GUARD * b {
        return Err(SsfError::Domain(format!("mu = {mu} sits on a Landau level")));
    }
    let h = (1e-6 * b).min(1e-3 * dist);
    let rp = op.resolvents(op.physical_channels(C64::new(mu + h, 0.0))?);
    let rm = op.resolvents(op.physical_channels(C64::new(mu - h, 0.0))?);
    let tol = op.config().truncation.det_tail_tol;
    let (lo, hi) = op.sector_bounds();
    let mut sum = 0.0;
    let mut quiet = 0;
    for l in lo..=hi {
        let p = op.sector_det2(l, &rp)?.argument();
        let m = op.sector_det2(l, &rm)?.argument();
        let d = wrap(p - m) / (2.0 * h);
        sum += d;
        if l > 0 {
            quiet = if d.abs() < tol { quiet + 1 } else { 0 };
            if quiet >= 2 {
                let corr = op.trace_dz_t_real(mu)?.im;
                return Ok((sum + corr) / PI);
            }
        }
    }
    Err(OperatorError::TailNotConverged {
        l_max: op.config().truncation.l_max,
        partial: C64::new(sum, 0.0),
        last: f64::NAN,
    }
    .into())
}

/// `Φ(λ) = Σ arctan(w_ℓ / 2√λ)` over a spectrum of `p_q W p_q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiValue {
    pub value: f64,
    /// Geometric estimate of the omitted spectral tail.
    pub tail_bound: f64,
}

pub fn phi_lambda(spectrum: &[f64], lambda: f64) -> Result<PhiValue, SsfError> {
    if !(lambda > 0.0) {
        return Err(SsfError::Domain(format!("Φ needs λ > 0, got {lambda}")));
    }
    let s = 2.0 * lambda.sqrt();
    let value = spectrum.iter().map(|w| (w / s).atan()).sum();
    let mut sorted: Vec<f64> = spectrum.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let tail_bound = match sorted.as_slice() {
        [.., a, z] if *z > 0.0 && z < a => {
            let ratio = z / a;
            z / s * ratio / (1.0 - ratio)
        }
        [] => 0.0,
        _ => f64::INFINITY,
    };
    Ok(PhiValue { value, tail_bound })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingularityRow {
    pub lambda: f64,
    pub xi: f64,
    /// `(J/π) Φ(λ)`.
    pub phi_term: f64,
    /// `|ξ − (J/π)Φ| / (Φ^{1/2} + |ln λ|²)`.
    pub deviation: f64,
}

impl SingularityRow {
    pub fn ratio(&self) -> f64 {
        self.xi / self.phi_term
    }
}

/// `ξ(2bq + λ)` against `(J/π)Φ(λ)` for each `λ`.
pub fn singularity_check(op: &Operator, lambdas: &[f64]) -> Result<Vec<SingularityRow>, SsfError> {
    let j = op
        .config()
        .sign_definite()
        .ok_or(OperatorError::NotSignDefinite)?;
    let f = op.config().field;
    let top = 2.0 * f.b;
    if lambdas.iter().any(|&l| !(l > 0.0 && l < 0.8 * top)) {
        return Err(SsfError::Domain("λ must lie in (0, 0.8·2b)".into()));
    }
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[a].total_cmp(&lambdas[b]));
    let grid: Vec<f64> = order.iter().map(|&i| f.landau_level(f.q) + lambdas[i]).collect();
    let trace = xi_trace(op, &grid)?;
    let w = if op.epsilon() == 0.0 { Vec::new() } else { w_spectrum(op)? };
    let mut rows = vec![None; lambdas.len()];
    for (pos, &i) in order.iter().enumerate() {
        let lambda = lambdas[i];
        let phi = phi_lambda(&w, lambda)?.value;
        let xi = trace.xi[pos];
        let phi_term = j * phi / PI;
        let deviation = (xi - phi_term).abs() / (phi.sqrt() + lambda.ln().powi(2));
        rows[i] = Some(SingularityRow { lambda, xi, phi_term, deviation });
    }
    Ok(rows.into_iter().flatten().collect())
}

/// `Σ mult · Im w / (π |μ − w|²)` over non-real resonance energies.
pub fn lorentzian_sum(resonances: &[Resonance], mu: f64) -> f64 {
    resonances
        .iter()
        .filter(|r| !r.is_real())
        .map(|r| r.multiplicity as f64 * r.z.im / (PI * (mu - r.z).norm_sqr()))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BwSample {
    pub mu: f64,
    pub xi_prime: f64,
    pub lorentzian: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BwDecomposition {
    pub window: (f64, f64),
    /// Scale `r = max |μ − 2bq|` over the window.
    pub r: f64,
    pub resonances: Vec<Resonance>,
    pub samples: Vec<BwSample>,
    pub max_residual: f64,
    /// `max |second divided difference|` of the residual.
    pub smoothness: f64,
    /// `|ln r| r^{-1/m⊥} / r`.
    pub bound_scale: f64,
}

impl BwDecomposition {
    fn assemble(window: (f64, f64), r: f64, bound_scale: f64, xi: Vec<(f64, f64)>, resonances: &[Resonance]) -> Self {
        let samples: Vec<BwSample> = xi
            .into_iter()
            .map(|(mu, xi_prime)| {
                let lorentzian = lorentzian_sum(resonances, mu);
                BwSample { mu, xi_prime, lorentzian, residual: xi_prime - lorentzian }
            })
            .collect();
        let max_residual = samples.iter().fold(0.0f64, |m, s| m.max(s.residual.abs()));
        let smoothness = samples
            .windows(3)
            .map(|w| {
                let (h0, h1) = (w[1].mu - w[0].mu, w[2].mu - w[1].mu);
                let d0 = (w[1].residual - w[0].residual) / h0;
                let d1 = (w[2].residual - w[1].residual) / h1;
                (2.0 * (d1 - d0) / (h0 + h1)).abs()
            })
            .fold(0.0, f64::max);
        Self {
            window,
            r,
            resonances: resonances.to_vec(),
            samples,
            max_residual,
            smoothness,
            bound_scale,
        }
    }

    /// Same samples of `ξ'` decomposed against another resonance list.
    pub fn with_resonances(&self, resonances: &[Resonance]) -> Self {
        let xi = self.samples.iter().map(|s| (s.mu, s.xi_prime)).collect();
        Self::assemble(self.window, self.r, self.bound_scale, xi, resonances)
    }

    /// Location of a narrow isolated residual peak, if one dominates.
    pub fn spike(&self) -> Option<f64> {
        let n = self.samples.len();
        if n < 5 {
            return None;
        }
        let mut mags: Vec<f64> = self.samples.iter().map(|s| s.residual.abs()).collect();
        let (imax, peak) = mags
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        mags.sort_by(f64::total_cmp);
        let median = mags[n / 2];
        if peak < 20.0 * median {
            return None;
        }
        let above = |i: usize| self.samples[i].residual.abs() >= 0.5 * peak;
        let mut lo = imax;
        while lo > 0 && above(lo - 1) {
            lo -= 1;
        }
        let mut hi = imax;
        while hi + 1 < n && above(hi + 1) {
            hi += 1;
        }
        let width = self.samples[hi].mu - self.samples[lo].mu;
        let span = self.window.1 - self.window.0;
        (lo > 0 && hi + 1 < n && width < span / 50.0).then(|| self.samples[imax].mu)
    }
}

/// Uniform window grid refined around each resonance's real part and
/// kept `1e-6·(μ₁ − μ₀)` away from real ones.
pub fn window_grid(mu0: f64, mu1: f64, n: usize, resonances: &[Resonance]) -> Vec<f64> {
    let n = n.max(2);
    let margin = 1e-6 * (mu1 - mu0);
    let mut g: Vec<f64> = (0..n)
        .map(|i| mu0 + (mu1 - mu0) * i as f64 / (n - 1) as f64)
        .collect();
    for r in resonances {
        if r.is_real() {
            g.retain(|mu| (mu - r.z.re).abs() > margin);
            continue;
        }
        let width = r.z.im.abs();
        for k in [-8.0, -4.0, -2.0, -1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let mu = r.z.re + k * width;
            if mu > mu0 && mu < mu1 {
                g.push(mu);
            }
        }
    }
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * (1.0 + b.abs()));
    g
}

fn transverse_decay_exponent(op: &Operator) -> f64 {
    match op.config().potential.radial.family() {
        DecayFamily::Power { alpha, .. } => alpha,
        _ => f64::INFINITY,
    }
}

/// Residual of `ξ'` after removing the Lorentzians of `resonances`, sampled
/// on `grid` (absolute energies on one side of `2bq`).
pub fn breit_wigner_residual(
    op: &Operator,
    grid: &[f64],
    resonances: &[Resonance],
) -> Result<BwDecomposition, SsfError> {
    let (&mu0, &mu1) = match (grid.first(), grid.last()) {
        (Some(a), Some(b)) if a < b => (a, b),
        _ => return Err(SsfError::Domain("window needs at least two increasing points".into())),
    };
    let f = op.config().field;
    let level = f.landau_level(f.q);
    if (mu0 - level) * (mu1 - level) <= 0.0 {
        return Err(SsfError::Domain("window must lie on one side of the Landau level".into()));
    }
    let r = (mu0 - level).abs().max((mu1 - level).abs());
    let m_perp = transverse_decay_exponent(op);
    let bound_scale = r.ln().abs() * r.powf(-1.0 / m_perp) / r;
    let xi: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&mu| xi_prime(op, mu).map(|x| (mu, x)))
        .collect::<Result<_, _>>()?;
    Ok(BwDecomposition::assemble((mu0, mu1), r, bound_scale, xi, resonances))
}

/// Like [`breit_wigner_residual`], but fails when the residual still
/// carries an isolated narrow peak.
pub fn breit_wigner_checked(
    op: &Operator,
    grid: &[f64],
    resonances: &[Resonance],
) -> Result<BwDecomposition, SsfError> {
    let d = breit_wigner_residual(op, grid, resonances)?;
    match d.spike() {
        Some(mu) => Err(SsfError::UnlocatedResonance { mu }),
        None => Ok(d),
    }
}

/// Chart region whose image `2bq + k²` covers the energy window with some
/// room below the real axis.
pub fn window_region(op: &Operator, mu0: f64, mu1: f64) -> Result<Region, SsfError> {
    let f = op.config().field;
    let level = f.landau_level(f.q);
    let (a, c) = ((mu0 - level).abs(), (mu1 - level).abs());
    let (r0, r1) = (a.min(c).sqrt() * 0.8, a.max(c).sqrt() * 1.2);
    let r1 = r1.min(f.chart_radius() * (1.0 - 2.0 * crate::resonance_search::CHART_MARGIN));
    let region = if mu0 > level {
        Region::Polar { r0, r1, theta0: -0.6, theta1: 0.15 }
    } else {
        Region::Polar { r0, r1, theta0: PI / 2.0 - 0.15, theta1: PI / 2.0 + 0.6 }
    };
    region.validate(f.chart_radius())?;
    Ok(region)
}

/// Polynomial times Gaussian, `P((z − c)/s) exp(−((z − c)/s)²)`; without a
/// width the Gaussian factor is dropped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestFunction {
    pub center: f64,
    pub width: Option<f64>,
    pub coefficients: Vec<C64>,
}

impl TestFunction {
    pub fn gaussian(center: f64, width: f64) -> Self {
        Self { center, width: Some(width), coefficients: vec![C64::new(1.0, 0.0)] }
    }

    pub fn constant(c: f64) -> Self {
        Self { center: 0.0, width: None, coefficients: vec![C64::new(c, 0.0)] }
    }

    fn scaled(&self, z: C64) -> (C64, f64) {
        let s = self.width.unwrap_or(1.0);
        ((z - self.center) / s, s)
    }

    pub fn eval(&self, z: C64) -> C64 {
        let (u, _) = self.scaled(z);
        let p = self.coefficients.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * u + c);
        match self.width {
            Some(_) => p * (-u * u).exp(),
            None => p,
        }
    }

    pub fn derivative(&self, z: C64) -> C64 {
        let (u, s) = self.scaled(z);
        let p = self.coefficients.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * u + c);
        let dp = self
            .coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(C64::new(0.0, 0.0), |acc, (n, c)| acc * u + c * n as f64);
        let out = match self.width {
            Some(_) => (dp - 2.0 * u * p) * (-u * u).exp(),
            None => dp,
        };
        out / s
    }
}

/// Smooth cutoff equal to 1 on `plateau` and supported in `support`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cutoff {
    pub plateau: (f64, f64),
    pub support: (f64, f64),
}

fn smooth_step(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0);
    }
    let p = (-1.0 / t).exp();
    let m = (-1.0 / (1.0 - t)).exp();
    let s = p / (p + m);
    let ds = p * m * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t))) / ((p + m) * (p + m));
    (s, ds)
}

impl Cutoff {
    pub fn new(plateau: (f64, f64), support: (f64, f64)) -> Result<Self, SsfError> {
        if !(support.0 < plateau.0 && plateau.0 < plateau.1 && plateau.1 < support.1) {
            return Err(SsfError::Domain("cutoff needs support.0 < plateau.0 < plateau.1 < support.1".into()));
        }
        Ok(Self { plateau, support })
    }

    /// `(ψ(x), ψ'(x))`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let (a, b) = self.plateau;
        let (lo, hi) = self.support;
        if x < a {
            let (s, ds) = smooth_step((x - lo) / (a - lo));
            (s, ds / (a - lo))
        } else if x > b {
            let (s, ds) = smooth_step((hi - x) / (hi - b));
            (s, -ds / (hi - b))
        } else {
            (1.0, 0.0)
        }
    }

    fn l1_norm(&self) -> f64 {
        // Each ramp integrates to half its length by symmetry of the step.
        (self.plateau.1 - self.plateau.0)
            + 0.5 * (self.plateau.0 - self.support.0)
            + 0.5 * (self.support.1 - self.plateau.1)
    }

    fn max_slope(&self) -> f64 {
        // The smooth step peaks at t = 1/2 with slope 2.
        2.0 / (self.plateau.0 - self.support.0).min(self.support.1 - self.plateau.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceFormulaCheck {
    /// `−⟨ξ', (ψf)((· − 2bq)/r)⟩`.
    pub lhs: C64,
    /// `Σ f((w − 2bq)/r)` over located resonances in the plateau box.
    pub rhs: C64,
    pub error_bound: f64,
    pub m_psi: f64,
    pub sup_f: f64,
    pub n_q: f64,
    pub resonances_used: usize,
}

/// Trace formula at scale `r` around `2bq`, in the scaled variable
/// `x = (μ − 2bq)/r`. The plateau box `W` has real extent `ψ.plateau` and
/// half-height equal to half the plateau length; `Ω` is built the same way
/// from `ψ.support`.
pub fn trace_formula_check(
    op: &Operator,
    f: &TestFunction,
    psi: &Cutoff,
    r: f64,
    resonances: &[Resonance],
) -> Result<TraceFormulaCheck, SsfError> {
    let field = op.config().field;
    let level = field.landau_level(field.q);
    let (lo, hi) = psi.support;
    if !(r > 0.0) || lo * hi <= 0.0 {
        return Err(SsfError::Domain("support must avoid 0 and r must be positive".into()));
    }
    let w_half = 0.5 * (psi.plateau.1 - psi.plateau.0);
    let o_half = 0.5 * (hi - lo);
    let scaled = |w: C64| (w - level) / r;
    let used: Vec<&Resonance> = resonances
        .iter()
        .filter(|res| {
            let x = scaled(res.z);
            x.re >= psi.plateau.0 && x.re <= psi.plateau.1 && x.im.abs() <= w_half
        })
        .collect();
    let rhs: C64 = used.iter().map(|res| f.eval(scaled(res.z)) * res.multiplicity as f64).sum();

    // −⟨ξ', F⟩ = ⟨ξ, F'⟩; ξ's jumps at real resonances and steep steps at
    // narrow ones become panel breakpoints.
    let mut breaks = vec![lo, psi.plateau.0, psi.plateau.1, hi];
    for res in resonances {
        let x = scaled(res.z);
        for k in [0.0, 1.0, 3.0, 10.0, 30.0] {
            for s in [-1.0, 1.0] {
                let p = x.re + s * k * x.im.abs();
                if p > lo && p < hi {
                    breaks.push(p);
                }
            }
        }
    }
    let max_panel = (hi - lo) / 16.0;
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    let mut edges = vec![breaks[0]];
    for w in breaks.windows(2) {
        let n = ((w[1] - w[0]) / max_panel).ceil().max(1.0) as usize;
        edges.extend((1..=n).map(|i| w[0] + (w[1] - w[0]) * i as f64 / n as f64));
    }
    let rule = legendre(8);
    let nodes: Vec<(f64, f64)> = edges
        .windows(2)
        .flat_map(|e| mapped(&rule, e[0], e[1]).collect::<Vec<_>>())
        .collect();
    let grid: Vec<f64> = nodes.iter().map(|(x, _)| level + r * x).collect();
    let xi = if op.epsilon() == 0.0 {
        vec![0.0; grid.len()]
    } else {
        xi_trace(op, &grid)?.xi
    };
    let lhs: C64 = nodes
        .iter()
        .zip(&xi)
        .map(|(&(x, w), &xi)| {
            let (p, dp) = psi.eval(x);
            let z = C64::new(x, 0.0);
            (f.derivative(z) * p + f.eval(z) * dp) * xi * w
        })
        .sum();

    let mut sup_f = 0.0f64;
    for i in 0..=80 {
        let x = lo + (hi - lo) * i as f64 / 80.0;
        for jy in 0..=40 {
            let y = -o_half * jy as f64 / 40.0;
            let inside_w = x >= psi.plateau.0 && x <= psi.plateau.1 && y.abs() < w_half;
            if !inside_w {
                sup_f = sup_f.max(f.eval(C64::new(x, y)).norm());
            }
        }
    }
    let dist_w = (psi.plateau.0 - lo).min(hi - psi.plateau.1).min(o_half - w_half);
    let area = (hi - lo) * 2.0 * o_half;
    let m_psi = (psi.l1_norm() / dist_w + 2.0 * (2.0 * PI * area).sqrt() * psi.max_slope()) / PI;
    let dist0 = if lo > 0.0 { lo } else { -hi };
    let s1 = 0.5 * dist0.sqrt();
    let n_q = if op.epsilon() == 0.0 {
        0.0
    } else {
        let w = w_spectrum(op)?;
        let bq: Vec<f64> = w.iter().map(|x| 0.5 * x).collect();
        let n_plus = w.iter().filter(|&&x| x > s1 * r.sqrt()).count() as f64;
        let c = CountingSample::from_values(&bq, 0.5 * s1 * r.sqrt());
        n_plus * r.ln().abs() + c.ntilde1 + c.ntilde2
    };
    Ok(TraceFormulaCheck {
        lhs,
        rhs,
        error_bound: m_psi * sup_f * n_q,
        m_psi,
        sup_f,
        n_q,
        resonances_used: used.len(),
    })
}
