//! Zero counting and refinement for the determinant on the `k`-chart.
//!
//! The determinant factors over angular-momentum sectors, so every sector
//! is counted and refined on its own. A sector whose Frobenius norm bound
//! stays below 1/2 on a region boundary has no zeros inside (the bound is
//! subharmonic), which prunes most sectors at small coupling.

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::effective_operator::{Operator, OperatorError, Resolvents};
use crate::landau_toeplitz::toeplitz_spectrum;

/// Relative margin kept from `k = 0` and from the chart edge `|k| = √(2b)`.
pub const CHART_MARGIN: f64 = 1e-3;
const BOUNDARY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("invalid region: {0}")]
    Region(String),
    #[error("boundary passes within the zero floor near k = {k}; inflate or shift the region")]
    BoundaryZero { k: C64 },
    #[error("winding {winding} is not close to an integer")]
    NonInteger { winding: f64 },
    #[error("sector {l} is still active at the sector cutoff")]
    SectorRange { l: i64 },
}

/// A piece of a region boundary, traversed from `t = 0` to `t = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Line { from: C64, to: C64 },
    /// Arc of the circle `|k| = radius` centered at the origin.
    Arc { radius: f64, from: f64, to: f64 },
}

impl Segment {
    pub fn point(&self, t: f64) -> C64 {
        match *self {
            Segment::Line { from, to } => from + (to - from) * t,
            Segment::Arc { radius, from, to } => C64::from_polar(radius, from + (to - from) * t),
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Segment::Line { from, to } => (to - from).norm(),
            Segment::Arc { radius, from, to } => radius * (to - from).abs(),
        }
    }
}

/// Search region on the chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Annulus { r_in: f64, r_out: f64 },
    /// `r0 ≤ |k| ≤ r1`, `θ0 ≤ arg k ≤ θ1`.
    Polar { r0: f64, r1: f64, theta0: f64, theta1: f64 },
    Box { re0: f64, re1: f64, im0: f64, im1: f64 },
}

impl Region {
    /// Checks orientation and that the closure stays inside the punctured
    /// chart disk with the threshold margin.
    pub fn validate(&self, chart_radius: f64) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::Region(m.to_string()));
        let finite = match *self {
            Region::Annulus { r_in, r_out } => [r_in, r_out, 0.0, 0.0],
            Region::Polar { r0, r1, theta0, theta1 } => [r0, r1, theta0, theta1],
            Region::Box { re0, re1, im0, im1 } => [re0, re1, im0, im1],
        };
        if finite.iter().any(|x| !x.is_finite()) {
            return bad("non-finite bound");
        }
        let (lo, hi) = match *self {
            Region::Annulus { r_in, r_out } => {
                if !(r_in < r_out) {
                    return bad("need r_in < r_out");
                }
                (r_in, r_out)
            }
            Region::Polar { r0, r1, theta0, theta1 } => {
                if !(r0 < r1) || !(theta0 < theta1) || theta1 - theta0 > TAU {
                    return bad("need r0 < r1 and 0 < θ1 − θ0 ≤ 2π");
                }
                (r0, r1)
            }
            Region::Box { re0, re1, im0, im1 } => {
                if !(re0 < re1) || !(im0 < im1) {
                    return bad("need re0 < re1 and im0 < im1");
                }
                let nearest = C64::new(0f64.clamp(re0, re1), 0f64.clamp(im0, im1)).norm();
                let far = [re0.abs().max(re1.abs()), im0.abs().max(im1.abs())];
                (nearest, far[0].hypot(far[1]))
            }
        };
        let margin = CHART_MARGIN * chart_radius;
        if lo < margin || hi > chart_radius - margin {
            return Err(SearchError::Region(format!(
                "radial extent [{lo}, {hi}] leaves the chart [{margin}, {}]",
                chart_radius - margin
            )));
        }
        Ok(())
    }

    /// Positively oriented boundary; an annulus has two loops.
    pub fn boundary(&self) -> Vec<Segment> {
        match *self {
            Region::Annulus { r_in, r_out } => vec![
                Segment::Arc { radius: r_out, from: 0.0, to: TAU },
                Segment::Arc { radius: r_in, from: TAU, to: 0.0 },
            ],
            Region::Polar { r0, r1, theta0, theta1 } => {
                let (a, b) = (C64::from_polar(1.0, theta0), C64::from_polar(1.0, theta1));
                vec![
                    Segment::Line { from: a * r0, to: a * r1 },
                    Segment::Arc { radius: r1, from: theta0, to: theta1 },
                    Segment::Line { from: b * r1, to: b * r0 },
                    Segment::Arc { radius: r0, from: theta1, to: theta0 },
                ]
            }
            Region::Box { re0, re1, im0, im1 } => {
                let c = [
                    C64::new(re0, im0),
                    C64::new(re1, im0),
                    C64::new(re1, im1),
                    C64::new(re0, im1),
                ];
                (0..4)
                    .map(|i| Segment::Line { from: c[i], to: c[(i + 1) % 4] })
                    .collect()
            }
        }
    }

    pub fn contains(&self, k: C64) -> bool {
        match *self {
            Region::Annulus { r_in, r_out } => (r_in..=r_out).contains(&k.norm()),
            Region::Polar { r0, r1, theta0, theta1 } => {
                let t = theta0 + (k.arg() - theta0).rem_euclid(TAU);
                (r0..=r1).contains(&k.norm()) && t <= theta1
            }
            Region::Box { re0, re1, im0, im1 } => {
                (re0..=re1).contains(&k.re) && (im0..=im1).contains(&k.im)
            }
        }
    }

    /// Largest linear extent.
    pub fn size(&self) -> f64 {
        match *self {
            Region::Annulus { r_out, .. } => 2.0 * r_out,
            Region::Polar { r0, r1, theta0, theta1 } => (r1 - r0).max(r1 * (theta1 - theta0)),
            Region::Box { re0, re1, im0, im1 } => (re1 - re0).max(im1 - im0),
        }
    }

    /// Four children; `split` is the relative position of the cut.
    pub fn quadrisect(&self, split: f64) -> Vec<Region> {
        match *self {
            Region::Annulus { r_in, r_out } => (0..4)
                .map(|i| {
                    let t = -FRAC_PI_4 + i as f64 * PI / 2.0;
                    Region::Polar { r0: r_in, r1: r_out, theta0: t, theta1: t + PI / 2.0 }
                })
                .collect(),
            Region::Polar { r0, r1, theta0, theta1 } => {
                let rm = r0 * (r1 / r0).powf(split);
                let tm = theta0 + (theta1 - theta0) * (1.0 - split);
                let mut out = Vec::with_capacity(4);
                for (a, b) in [(r0, rm), (rm, r1)] {
                    for (c, d) in [(theta0, tm), (tm, theta1)] {
                        out.push(Region::Polar { r0: a, r1: b, theta0: c, theta1: d });
                    }
                }
                out
            }
            Region::Box { re0, re1, im0, im1 } => {
                let xm = re0 + (re1 - re0) * split;
                let ym = im0 + (im1 - im0) * (1.0 - split);
                let mut out = Vec::with_capacity(4);
                for (a, b) in [(re0, xm), (xm, re1)] {
                    for (c, d) in [(im0, ym), (ym, im1)] {
                        out.push(Region::Box { re0: a, re1: b, im0: c, im1: d });
                    }
                }
                out
            }
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Region::Annulus { r_in, r_out } => write!(f, "annulus:{r_in}:{r_out}"),
            Region::Polar { r0, r1, theta0, theta1 } => {
                write!(f, "sector:{r0}:{r1}:{theta0}:{theta1}")
            }
            Region::Box { re0, re1, im0, im1 } => write!(f, "box:{re0}:{re1}:{im0}:{im1}"),
        }
    }
}

impl FromStr for Region {
    type Err = SearchError;

    /// `annulus:r_in:r_out`, `sector:r0:r1:θ0:θ1` or `box:re0:re1:im0:im1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.trim().split(':');
        let kind = parts.next().unwrap_or_default();
        let nums = parts
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SearchError::Region(format!("{s:?}: {e}")))?;
        let region = match (kind, nums.as_slice()) {
            ("annulus", &[r_in, r_out]) => Region::Annulus { r_in, r_out },
            ("sector" | "polar", &[r0, r1, theta0, theta1]) => {
                Region::Polar { r0, r1, theta0, theta1 }
            }
            ("box", &[re0, re1, im0, im1]) => Region::Box { re0, re1, im0, im1 },
            _ => {
                return Err(SearchError::Region(format!(
                    "{s:?}: expected annulus:a:b, sector:r0:r1:t0:t1 or box:x0:x1:y0:y1"
                )))
            }
        };
        if nums.iter().any(|x| !x.is_finite()) {
            return Err(SearchError::Region(format!("{s:?}: non-finite bound")));
        }
        Ok(region)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    /// Initial samples on a quarter turn or a straight side.
    pub initial_points: usize,
    /// Largest accepted argument increment between neighbouring samples.
    pub max_arg_step: f64,
    /// Cells below this size are not split further.
    pub min_cell: f64,
    pub newton_iterations: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            initial_points: 24,
            max_arg_step: FRAC_PI_4,
            min_cell: 1e-7,
            newton_iterations: 50,
        }
    }
}

/// Samples of `log f` along a closed boundary, in traversal order per
/// segment.
#[derive(Debug, Clone)]
pub struct ContourTrace {
    pub count: i64,
    pub winding: f64,
    pub segments: Vec<Vec<(C64, C64)>>,
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(TAU) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Change of `log f` between neighbouring samples with the argument taken
/// on the principal branch of the ratio.
fn log_step(a: C64, b: C64) -> C64 {
    C64::new(b.re - a.re, wrap(b.im - a.im))
}

impl ContourTrace {
    /// `(1/2πi) ∮ k f'/f dk`, the sum of the enclosed zeros.
    pub fn zero_sum(&self) -> C64 {
        let s: C64 = self
            .segments
            .iter()
            .flat_map(|seg| seg.windows(2))
            .map(|w| (w[0].0 + w[1].0) * 0.5 * log_step(w[0].1, w[1].1))
            .sum();
        s / C64::new(0.0, TAU)
    }

    pub fn median_modulus(&self) -> f64 {
        let mut m: Vec<f64> = self
            .segments
            .iter()
            .flatten()
            .map(|(_, l)| l.re.exp())
            .collect();
        m.sort_by(f64::total_cmp);
        m.get(m.len() / 2).copied().unwrap_or(0.0)
    }
}

fn initial_samples(seg: &Segment, n: usize) -> usize {
    match seg {
        Segment::Line { .. } => n,
        Segment::Arc { from, to, .. } => {
            ((to - from).abs() / (PI / 2.0)).ceil().max(1.0) as usize * n
        }
    }
}

fn trace_segment<F>(seg: &Segment, f: &F, opts: &SearchOptions) -> Result<Vec<(C64, C64)>, SearchError>
where
    F: Fn(C64) -> Result<C64, SearchError> + Sync,
{
    let n = initial_samples(seg, opts.initial_points);
    let eval = |t: f64| -> Result<(f64, C64, C64), SearchError> {
        let k = seg.point(t);
        let l = f(k)?;
        if !(l.re > BOUNDARY_FLOOR.ln()) {
            return Err(SearchError::BoundaryZero { k });
        }
        Ok((t, k, l))
    };
    let mut pts: Vec<(f64, C64, C64)> = (0..=n)
        .into_par_iter()
        .map(|i| eval(i as f64 / n as f64))
        .collect::<Result<_, _>>()?;
    loop {
        let coarse: Vec<usize> = pts
            .windows(2)
            .enumerate()
            .filter(|(_, w)| {
                let d = log_step(w[0].2, w[1].2);
                d.im.abs() > opts.max_arg_step || d.re.abs() > 1.0
            })
            .map(|(i, _)| i)
            .collect();
        if coarse.is_empty() {
            break;
        }
        for &i in &coarse {
            if pts[i + 1].0 - pts[i].0 < 1e-12 {
                return Err(SearchError::BoundaryZero { k: pts[i].1 });
            }
        }
        let mids: Vec<(f64, C64, C64)> = coarse
            .par_iter()
            .map(|&i| eval(0.5 * (pts[i].0 + pts[i + 1].0)))
            .collect::<Result<_, _>>()?;
        pts.extend(mids);
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(pts.into_iter().map(|(_, k, l)| (k, l)).collect())
}

/// Winding number of `f` along `boundary`, given `log f` on any branch.
pub fn count_zeros_contour<F>(
    boundary: &[Segment],
    log_f: F,
    opts: &SearchOptions,
) -> Result<ContourTrace, SearchError>
where
    F: Fn(C64) -> Result<C64, SearchError> + Sync,
{
    let segments = boundary
        .iter()
        .map(|s| trace_segment(s, &log_f, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let total: f64 = segments
        .iter()
        .flat_map(|s| s.windows(2))
        .map(|w| wrap(w[1].1.im - w[0].1.im))
        .sum();
    let winding = total / TAU;
    let count = winding.round();
    if (winding - count).abs() > 0.1 {
        return Err(SearchError::NonInteger { winding });
    }
    Ok(ContourTrace { count: count as i64, winding, segments })
}

/// One refined zero of a scalar function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocatedZero {
    pub k: C64,
    pub multiplicity: u32,
    /// `|f(k)|` over the median of `|f|` on the enclosing cell boundary.
    pub residual: f64,
    pub iterations: usize,
    /// False for unresolved clusters and for Newton failures.
    pub converged: bool,
}

fn newton<F>(log_f: &F, start: C64, region: &Region, iterations: usize) -> Option<(C64, usize)>
where
    F: Fn(C64) -> Result<C64, SearchError>,
{
    let reference = log_f(start).ok()?;
    let val = |k: C64| log_f(k).map(|l| (l - reference).exp());
    let mut k = start;
    let mut prev = f64::INFINITY;
    let reach = region.size();
    for it in 1..=iterations {
        let h = 1e-6 * k.norm();
        let f0 = val(k).ok()?;
        if f0 == C64::new(0.0, 0.0) {
            return Some((k, it));
        }
        let d = (val(k + h).ok()? - val(k - h).ok()?) / (2.0 * h);
        let step = f0 / d;
        if !step.is_finite() {
            return None;
        }
        k -= step;
        if (k - start).norm() > 2.0 * reach {
            return None;
        }
        let s = step.norm();
        if s < 1e-12 * k.norm() || (s < 1e-8 * k.norm() && s >= prev) {
            return Some((k, it));
        }
        prev = s;
    }
    None
}

const SPLITS: [f64; 3] = [0.47, 0.41, 0.55];

fn refine_cell<F>(
    log_f: &F,
    region: Region,
    trace: ContourTrace,
    opts: &SearchOptions,
    out: &mut Vec<LocatedZero>,
) where
    F: Fn(C64) -> Result<C64, SearchError> + Sync,
{
    let count = trace.count;
    if count <= 0 {
        return;
    }
    let centroid = trace.zero_sum() / count as f64;
    let scale = trace.median_modulus();
    if count == 1 {
        if let Some((k, it)) = newton(log_f, centroid, &region, opts.newton_iterations) {
            let slack = 1e-9 * region.size();
            let inside = region.contains(k)
                || region.boundary().iter().any(|s| {
                    (0..=64).any(|i| (s.point(i as f64 / 64.0) - k).norm() < slack)
                });
            if inside {
                let residual = log_f(k).map_or(0.0, |l| l.re.exp()) / scale;
                out.push(LocatedZero { k, multiplicity: 1, residual, iterations: it, converged: true });
                return;
            }
        }
    }
    if region.size() > opts.min_cell {
        for split in SPLITS {
            let children = region.quadrisect(split);
            let traces: Result<Vec<_>, _> = children
                .iter()
                .map(|c| count_zeros_contour(&c.boundary(), log_f, opts))
                .collect();
            if let Ok(traces) = traces {
                if traces.iter().map(|t| t.count).sum::<i64>() == count {
                    for (c, t) in children.into_iter().zip(traces) {
                        refine_cell(log_f, c, t, opts, out);
                    }
                    return;
                }
            }
        }
    }
    let residual = log_f(centroid).map_or(f64::NAN, |l| l.re.exp()) / scale;
    out.push(LocatedZero {
        k: centroid,
        multiplicity: count as u32,
        residual,
        iterations: 0,
        converged: false,
    });
}

/// All zeros of `f` inside `region`, sorted by modulus then phase.
pub fn locate_zeros<F>(
    region: &Region,
    log_f: F,
    opts: &SearchOptions,
) -> Result<Vec<LocatedZero>, SearchError>
where
    F: Fn(C64) -> Result<C64, SearchError> + Sync,
{
    let trace = count_zeros_contour(&region.boundary(), &log_f, opts)?;
    let mut out = Vec::new();
    refine_cell(&log_f, *region, trace, opts, &mut out);
    sort_by_modulus(&mut out, |z| z.k);
    Ok(out)
}

fn sort_by_modulus<T>(v: &mut [T], key: impl Fn(&T) -> C64) {
    v.sort_by(|a, b| {
        let (x, y) = (key(a), key(b));
        x.norm().total_cmp(&y.norm()).then(x.arg().total_cmp(&y.arg()))
    });
}

/// A resonance `z = 2bq + k²` found in one sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Resonance {
    pub k: C64,
    pub z: C64,
    pub sector: i64,
    pub multiplicity: u32,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Resonance {
    /// An eigenvalue rather than a complex resonance: `Im z` at roundoff level.
    pub fn is_real(&self) -> bool {
        self.z.im.abs() <= 1e-10 * self.k.norm_sqr()
    }
}

/// Per-sector winding counts in a region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Census {
    pub per_sector: Vec<(i64, i64)>,
    pub total: i64,
    /// Sectors excluded by the norm bound.
    pub skipped: usize,
}

/// `log det(I + M)` of one sector on the chart. It differs from `log det₂`
/// by `tr M`, which is finite on the punctured chart, so zeros and their
/// multiplicities agree. Dropping the factor matters near `k = 0`: there
/// `tr M ~ 1/k`, so `e^{-tr M}` underflows on the positive imaginary axis
/// and its phase turns fast enough to alias between boundary samples.
pub fn sector_log_det(op: &Operator, l: i64, k: C64) -> Result<C64, SearchError> {
    let res = op.chart_resolvents(k)?;
    let d = op.sector_det2(l, &res)?;
    Ok(d.log_det.unwrap_or(C64::new(f64::NEG_INFINITY, 0.0)))
}

/// Sectors that may hold zeros in `region`: those whose norm bound reaches
/// 1/2 somewhere on a dense boundary sample.
pub fn active_sectors(op: &Operator, region: &Region) -> Result<Vec<i64>, SearchError> {
    if op.epsilon() == 0.0 {
        return Ok(Vec::new());
    }
    let samples: Vec<C64> = region
        .boundary()
        .iter()
        .flat_map(|s| {
            let n = 4 * initial_samples(s, 24);
            (0..=n).map(move |i| s.point(i as f64 / n as f64))
        })
        .collect();
    let norms: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|&k| {
            let res: Resolvents = op.chart_resolvents(k)?;
            Ok((0..res.g.len()).map(|j| res.frobenius(j)).collect())
        })
        .collect::<Result<_, SearchError>>()?;
    let (lo, hi) = op.sector_bounds();
    let mut active = Vec::new();
    for l in lo..=hi {
        let o = op.overlap(l)?;
        let worst = norms
            .iter()
            .map(|g| o.levels.iter().map(|&j| g[j] * g[j]).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if op.epsilon() * o.frobenius() * worst >= 0.5 {
            if l == hi {
                return Err(SearchError::SectorRange { l });
            }
            active.push(l);
        }
    }
    Ok(active)
}

pub fn census(op: &Operator, region: &Region, opts: &SearchOptions) -> Result<Census, SearchError> {
    region.validate(op.config().field.chart_radius())?;
    let active = active_sectors(op, region)?;
    let (lo, hi) = op.sector_bounds();
    let per_sector = active
        .par_iter()
        .map(|&l| {
            count_zeros_contour(&region.boundary(), |k| sector_log_det(op, l, k), opts)
                .map(|t| (l, t.count))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Census {
        total: per_sector.iter().map(|x| x.1).sum(),
        skipped: (hi - lo + 1) as usize - per_sector.len(),
        per_sector,
    })
}

/// Resonances inside `region`, ordered by `|k|` then phase.
pub fn locate_resonances(
    op: &Operator,
    region: &Region,
    opts: &SearchOptions,
) -> Result<Vec<Resonance>, SearchError> {
    region.validate(op.config().field.chart_radius())?;
    let active = active_sectors(op, region)?;
    let f = op.config().field;
    let found = active
        .par_iter()
        .map(|&l| {
            locate_zeros(region, |k| sector_log_det(op, l, k), opts).map(|zs| {
                zs.into_iter()
                    .map(|z| Resonance {
                        k: z.k,
                        z: 2.0 * f.b * f.q as f64 + z.k * z.k,
                        sector: l,
                        multiplicity: z.multiplicity,
                        residual: z.residual,
                        iterations: z.iterations,
                        converged: z.converged,
                    })
                    .collect::<Vec<_>>()
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut all: Vec<Resonance> = found.into_iter().flatten().collect();
    sort_by_modulus(&mut all, |r| r.k);
    Ok(all)
}

/// One dyadic annulus `r < |k| < 2r` with the counting bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnulusRow {
    pub r: f64,
    pub count: i64,
    /// `n₊(r; p_q W p_q)`.
    pub n_plus: usize,
    /// `n₊(r; p_q W p_q) |ln r|`.
    pub bound: f64,
}

impl AnnulusRow {
    pub fn ratio(&self) -> f64 {
        self.count as f64 / self.bound
    }
}

/// Eigenvalues of `p_q W p_q`, `W = ∫|V| dx₃`.
pub fn w_spectrum(op: &Operator) -> Result<Vec<f64>, SearchError> {
    let cfg = op.config();
    let spec = toeplitz_spectrum(
        cfg.field.q,
        cfg.field.b,
        &cfg.potential.radial,
        cfg.truncation.l_max,
    )
    .map_err(OperatorError::from)?;
    Ok(spec.scaled(cfg.potential.epsilon.abs() * cfg.potential.axis.mass()))
}

pub fn annulus_census(
    op: &Operator,
    radii: &[f64],
    opts: &SearchOptions,
) -> Result<Vec<AnnulusRow>, SearchError> {
    let w = w_spectrum(op)?;
    radii
        .iter()
        .map(|&r| {
            let c = census(op, &Region::Annulus { r_in: r, r_out: 2.0 * r }, opts)?;
            let n_plus = w.iter().filter(|&&x| x > r).count();
            Ok(AnnulusRow { r, count: c.total, n_plus, bound: n_plus as f64 * r.ln().abs() })
        })
        .collect()
}

/// Splits resonances by the sector test `−J Im k ≤ |Re k|/δ`: returns
/// (count inside that set, count outside).
pub fn sector_census(
    op: &Operator,
    resonances: &[Resonance],
    delta: f64,
) -> Result<(u32, u32), SearchError> {
    let j = op
        .config()
        .sign_definite()
        .ok_or(OperatorError::NotSignDefinite)?;
    Ok(resonances.iter().fold((0, 0), |(a, b), r| {
        if -j * r.k.im <= r.k.re.abs() / delta {
            (a + r.multiplicity, b)
        } else {
            (a, b + r.multiplicity)
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn product(zeros: Vec<C64>) -> impl Fn(C64) -> Result<C64, SearchError> + Sync {
        move |k| Ok(zeros.iter().map(|z| (k - z).ln()).sum::<C64>() + k)
    }

    #[test]
    fn counts_synthetic_pair() {
        let region = Region::Box { re0: -1.0, re1: 1.0, im0: -1.0, im1: 1.0 };
        let t = count_zeros_contour(
            &region.boundary(),
            product(vec![c(0.3, 0.2), c(-0.5, -0.1)]),
            &SearchOptions::default(),
        )
        .unwrap();
        assert_eq!(t.count, 2);
        assert!((t.zero_sum() - c(-0.2, 0.1)).norm() < 1e-2);
    }

    #[test]
    fn annulus_excludes_inner_disk() {
        let region = Region::Annulus { r_in: 0.2, r_out: 0.6 };
        let f = product(vec![c(0.05, 0.0), c(0.0, -0.4), c(0.3, 0.3)]);
        let t = count_zeros_contour(&region.boundary(), f, &SearchOptions::default()).unwrap();
        assert_eq!(t.count, 2);
    }

    #[test]
    fn locates_five_zeros() {
        let zeros = vec![c(0.1, 0.1), c(-0.3, 0.2), c(0.25, -0.35), c(-0.2, -0.2), c(0.4, 0.05)];
        let region = Region::Box { re0: -0.6, re1: 0.6, im0: -0.6, im1: 0.6 };
        let found = locate_zeros(&region, product(zeros.clone()), &SearchOptions::default()).unwrap();
        assert_eq!(found.len(), 5);
        for z in &zeros {
            assert!(found.iter().any(|f| (f.k - z).norm() < 1e-10 && f.converged));
        }
    }

    #[test]
    fn double_zero_reported_with_multiplicity() {
        let region = Region::Box { re0: -0.5, re1: 0.5, im0: -0.5, im1: 0.5 };
        let f = product(vec![c(0.1, -0.1), c(0.1, -0.1)]);
        let opts = SearchOptions { min_cell: 1e-3, ..Default::default() };
        let found = locate_zeros(&region, f, &opts).unwrap();
        let total: u32 = found.iter().map(|z| z.multiplicity).sum();
        assert_eq!(total, 2);
        assert!(found.iter().all(|z| (z.k - c(0.1, -0.1)).norm() < 1e-3));
    }

    #[test]
    fn region_parsing_and_display() {
        for s in ["annulus:0.05:0.1", "sector:0.1:0.2:-1:0.5", "box:-0.1:0.1:-0.2:-0.05"] {
            let r: Region = s.parse().unwrap();
            assert_eq!(r.to_string().parse::<Region>().unwrap(), r);
        }
        assert!("annulus:0.1".parse::<Region>().is_err());
        assert!("disk:0:1".parse::<Region>().is_err());
        assert!("box:0:1:nan:2".parse::<Region>().is_err());
    }

    #[test]
    fn region_validation() {
        let r = 2f64.sqrt();
        assert!(Region::Annulus { r_in: 0.1, r_out: 0.2 }.validate(r).is_ok());
        assert!(Region::Annulus { r_in: 0.0, r_out: 0.2 }.validate(r).is_err());
        assert!(Region::Annulus { r_in: 0.1, r_out: 1.414 }.validate(r).is_err());
        assert!(Region::Box { re0: -0.1, re1: 0.1, im0: -0.1, im1: 0.1 }.validate(r).is_err());
        assert!(Region::Polar { r0: 0.1, r1: 0.2, theta0: 1.0, theta1: 0.5 }.validate(r).is_err());
    }

    #[test]
    fn quadrisection_covers_parent() {
        let p = Region::Polar { r0: 0.1, r1: 0.4, theta0: -2.0, theta1: -1.0 };
        for split in SPLITS {
            let kids = p.quadrisect(split);
            for i in 0..50 {
                let k = C64::from_polar(0.1 + 0.3 * (i as f64 + 0.5) / 50.0, -2.0 + (i * 7 % 50) as f64 / 50.0);
                assert!(kids.iter().any(|c| c.contains(k)));
            }
        }
    }

    #[test]
    fn zero_coupling_is_empty() {
        let cfg = crate::model::Config::from_json(
            r#"{"epsilon": 0, "radial": {"kind": "gaussian", "mu": 1}, "axis": {"kind": "gaussian", "nu": 1}}"#,
        )
        .unwrap();
        let op = Operator::new(cfg);
        let region = Region::Annulus { r_in: 0.05, r_out: 0.1 };
        let opts = SearchOptions::default();
        assert!(locate_resonances(&op, &region, &opts).unwrap().is_empty());
        assert_eq!(census(&op, &region, &opts).unwrap().total, 0);
        assert_eq!(sector_census(&op, &[], 1.0).unwrap(), (0, 0));
    }
}
