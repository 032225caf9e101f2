//! The axis direction: quadrature grid, per-level channel wavenumbers on the
//! chart `z = 2bq + k²`, and Nyström matrices of `(D² - k_j²)^{-1}`
//! symmetrized by `g^{1/2}`.

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::linalg::CMatrix;
use crate::model::{AxisProfile, Config, Sign};
use crate::quad;

/// Distance (in units of `b`) from a threshold below which evaluation is refused.
pub const THRESHOLD_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("chart coordinate |k| = {modulus} outside the punctured disk of radius {radius}")]
    OutsideChart { modulus: f64, radius: f64 },
    #[error("evaluation {distance:.3e} from the threshold of level {level}")]
    Threshold { level: usize, distance: f64 },
}

const I: C64 = C64::new(0.0, 1.0);

/// Quadrature nodes on `[-L, L]` carrying `v_a = √(w_a g(x_a))` and the
/// sign of the potential at each node.
#[derive(Debug, Clone)]
pub struct AxisGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub halfwidth: f64,
    pub g: Vec<f64>,
    pub v: Vec<f64>,
    pub sign: Vec<f64>,
}

impl AxisGrid {
    pub fn new(axis: &AxisProfile, sign: Sign, n: usize, halfwidth: f64) -> Self {
        let rule = quad::legendre(n);
        let (nodes, weights): (Vec<f64>, Vec<f64>) =
            quad::mapped(&rule, -halfwidth, halfwidth).unzip();
        let g: Vec<f64> = nodes.iter().map(|&x| axis.eval(x)).collect();
        let v = weights.iter().zip(&g).map(|(w, g)| (w * g).sqrt()).collect();
        let sign = nodes.iter().map(|&x| sign.at(x)).collect();
        Self {
            nodes,
            weights,
            halfwidth,
            g,
            v,
            sign,
        }
    }

    pub fn from_config(cfg: &Config) -> Self {
        Self::new(
            &cfg.potential.axis,
            cfg.potential.sign,
            cfg.truncation.n_axis,
            cfg.truncation.axis_halfwidth,
        )
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Discrete `∫g`, i.e. `Σ v_a²`.
    pub fn mass(&self) -> f64 {
        self.v.iter().map(|x| x * x).sum()
    }
}

/// `i √w` with the principal root.
fn i_sqrt(w: C64) -> C64 {
    I * w.sqrt()
}

/// Wavenumber of level `j` at chart coordinate `k` around level `q`.
pub fn channel_wavenumber(j: usize, q: usize, k: C64, b: f64) -> Result<C64, ChannelError> {
    let radius = (2.0 * b).sqrt();
    let modulus = k.norm();
    if !(modulus < radius) {
        return Err(ChannelError::OutsideChart { modulus, radius });
    }
    let shift = 2.0 * b * (j as f64 - q as f64);
    let distance = (k * k - shift).norm();
    if distance < THRESHOLD_GUARD * b {
        return Err(ChannelError::Threshold { level: j, distance });
    }
    Ok(chart_wavenumber(j, q, k, b))
}

fn chart_wavenumber(j: usize, q: usize, k: C64, b: f64) -> C64 {
    use std::cmp::Ordering::*;
    match j.cmp(&q) {
        Equal => k,
        Greater => i_sqrt(2.0 * b * (j - q) as f64 - k * k),
        Less => (k * k + 2.0 * b * (q - j) as f64).sqrt(),
    }
}

/// Square root on the physical sheet: `Im ≥ 0`, with the `+i0` boundary
/// value on the real axis.
pub fn physical_sqrt(w: C64) -> C64 {
    if w.im == 0.0 {
        return if w.re >= 0.0 {
            C64::new(w.re.sqrt(), 0.0)
        } else {
            C64::new(0.0, (-w.re).sqrt())
        };
    }
    let s = w.sqrt();
    if s.im < 0.0 {
        -s
    } else {
        s
    }
}

/// Wavenumbers of all retained levels at one spectral point.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub b: f64,
    /// `k_j` for `j = 0..=j_max`.
    pub wavenumbers: Vec<C64>,
    /// Chart coordinate and reference level, when built from a chart point.
    pub chart: Option<(usize, C64)>,
}

impl ChannelSet {
    pub fn chart(q: usize, k: C64, b: f64, j_max: usize) -> Result<Self, ChannelError> {
        let wavenumbers = (0..=j_max)
            .map(|j| channel_wavenumber(j, q, k, b))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            b,
            wavenumbers,
            chart: Some((q, k)),
        })
    }

    /// Boundary values from the physical sheet at energy `z` (`Im z ≥ 0`).
    pub fn physical(z: C64, b: f64, j_max: usize) -> Result<Self, ChannelError> {
        let wavenumbers = (0..=j_max)
            .map(|j| {
                let w = z - 2.0 * b * j as f64;
                if w.norm() < THRESHOLD_GUARD * b {
                    Err(ChannelError::Threshold {
                        level: j,
                        distance: w.norm(),
                    })
                } else {
                    Ok(physical_sqrt(w))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            b,
            wavenumbers,
            chart: None,
        })
    }

    pub fn levels(&self) -> usize {
        self.wavenumbers.len()
    }

    /// Open channels propagate: real wavenumber on the real axis.
    pub fn is_open(&self, j: usize) -> bool {
        match self.chart {
            Some((q, _)) => j <= q,
            None => self.wavenumbers[j].im == 0.0,
        }
    }

    /// `dk_j/dk` on the chart (`k_j² = k² - 2b(j-q)`).
    pub fn dkj_dk(&self, j: usize) -> Option<C64> {
        self.chart.map(|(_, k)| k / self.wavenumbers[j])
    }
}

/// Outgoing kernel `i e^{ik d} / (2k)`.
pub fn resolvent_kernel(k: C64, d: f64) -> C64 {
    I * (I * k * d).exp() / (2.0 * k)
}

/// `i (e^{ik d} - 1) / (2k)`, analytic at `k = 0`.
pub fn remainder_kernel(k: C64, d: f64) -> C64 {
    let z = k * d;
    if z.norm() < 0.05 {
        // Σ_{n≥1} i^{n+1} k^{n-1} dⁿ / (2 n!)
        let mut term = C64::new(-0.5 * d, 0.0);
        let mut sum = term;
        for n in 2..14 {
            term *= I * z / n as f64;
            sum += term;
        }
        sum
    } else {
        I * ((I * z).exp() - 1.0) / (2.0 * k)
    }
}

/// `G_j[a, a′] = v_a v_{a′} i e^{ik_j|x_a - x_{a′}|} / (2k_j)`.
pub fn resolvent_matrix(kj: C64, grid: &AxisGrid) -> CMatrix {
    let n = grid.len();
    let diag = I / (2.0 * kj);
    CMatrix::from_fn(n, |a, c| {
        let d = (grid.nodes[a] - grid.nodes[c]).abs();
        let vv = grid.v[a] * grid.v[c];
        if a == c {
            diag * vv
        } else {
            resolvent_kernel(kj, d) * vv
        }
    })
}

/// Entrywise `∂G_j/∂k_j`.
pub fn resolvent_dk_matrix(kj: C64, grid: &AxisGrid) -> CMatrix {
    let n = grid.len();
    CMatrix::from_fn(n, |a, c| {
        let d = (grid.nodes[a] - grid.nodes[c]).abs();
        let e = (I * kj * d).exp();
        grid.v[a] * grid.v[c] * (-d * e / (2.0 * kj) - I * e / (2.0 * kj * kj))
    })
}

/// `(i/(2k)) v vᵀ` plus an analytic remainder.
#[derive(Debug, Clone)]
pub struct RankOneSplit {
    pub coefficient: C64,
    pub vector: Vec<f64>,
    pub remainder: CMatrix,
}

impl RankOneSplit {
    pub fn reassemble(&self) -> CMatrix {
        let v = &self.vector;
        CMatrix::from_fn(v.len(), |a, c| {
            self.coefficient * v[a] * v[c] + self.remainder[(a, c)]
        })
    }
}

pub fn split_rank_one(k: C64, grid: &AxisGrid) -> RankOneSplit {
    let n = grid.len();
    let remainder = CMatrix::from_fn(n, |a, c| {
        if a == c {
            C64::new(0.0, 0.0)
        } else {
            let d = (grid.nodes[a] - grid.nodes[c]).abs();
            grid.v[a] * grid.v[c] * remainder_kernel(k, d)
        }
    });
    RankOneSplit {
        coefficient: I / (2.0 * k),
        vector: grid.v.clone(),
        remainder,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AxisProfile;

    fn grid(n: usize) -> AxisGrid {
        let g = AxisProfile::Gaussian { nu: 1.0 };
        AxisGrid::new(&g, Sign::Positive, n, g.default_halfwidth())
    }

    #[test]
    fn grid_integrates_gaussian_moments() {
        let gr = grid(48);
        let m2: f64 = gr.v.iter().zip(&gr.nodes).map(|(v, x)| v * v * x * x).sum();
        assert!((gr.mass() - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        assert!((m2 - 0.5 * std::f64::consts::PI.sqrt()).abs() < 1e-12);
        assert!(gr.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn wavenumber_spot_values() {
        let k = C64::new(0.1, 0.0);
        assert_eq!(channel_wavenumber(0, 0, k, 1.0).unwrap(), k);
        let k1 = channel_wavenumber(1, 0, k, 1.0).unwrap();
        assert!((k1 - C64::new(0.0, 1.99f64.sqrt())).norm() < 1e-15);
        assert!((k1.im - 1.410674).abs() < 1e-6);
        let k0 = channel_wavenumber(0, 1, C64::new(0.0, 0.1), 1.0).unwrap();
        assert!((k0 - C64::new(1.99f64.sqrt(), 0.0)).norm() < 1e-15);
    }

    #[test]
    fn chart_guards() {
        assert!(matches!(
            channel_wavenumber(0, 0, C64::new(1.5, 0.0), 1.0),
            Err(ChannelError::OutsideChart { .. })
        ));
        assert!(matches!(
            channel_wavenumber(0, 0, C64::new(1e-4, 0.0), 1.0),
            Err(ChannelError::Threshold { level: 0, .. })
        ));
    }

    #[test]
    fn closed_channels_decay_on_chart() {
        for (q, k) in [(0, C64::new(0.3, -0.9)), (2, C64::new(-1.0, -0.2)), (1, C64::new(0.01, 1.3))] {
            let ch = ChannelSet::chart(q, k, 1.0, q + 5).unwrap();
            for j in (0..=q + 5).filter(|&j| j != q) {
                assert!(ch.wavenumbers[j].im > 0.0 || (j < q && ch.wavenumbers[j].re > 0.0), "{q} {k} {j}");
            }
        }
    }

    #[test]
    fn chart_agrees_with_physical_sheet_in_first_quadrant() {
        let k = C64::new(0.4, 0.3);
        let q = 2;
        let ch = ChannelSet::chart(q, k, 1.0, 6).unwrap();
        let ph = ChannelSet::physical(4.0 + k * k, 1.0, 6).unwrap();
        for (a, c) in ch.wavenumbers.iter().zip(&ph.wavenumbers) {
            assert!((a - c).norm() < 1e-14);
        }
    }

    #[test]
    fn physical_boundary_values() {
        assert_eq!(physical_sqrt(C64::new(4.0, -0.0)), C64::new(2.0, 0.0));
        assert_eq!(physical_sqrt(C64::new(-4.0, -0.0)), C64::new(0.0, 2.0));
        assert!(physical_sqrt(C64::new(-4.0, -1e-3)).im > 0.0);
    }

    #[test]
    fn branch_continuity_across_real_axis() {
        for j in [0usize, 3] {
            let a = channel_wavenumber(j, 1, C64::new(0.7, 1e-9), 1.0).unwrap();
            let c = channel_wavenumber(j, 1, C64::new(0.7, -1e-9), 1.0).unwrap();
            assert!((a - c).norm() < 1e-8);
            let a = channel_wavenumber(j, 1, C64::new(-0.7, 1e-9), 1.0).unwrap();
            let c = channel_wavenumber(j, 1, C64::new(-0.7, -1e-9), 1.0).unwrap();
            assert!((a - c).norm() < 1e-8);
        }
    }

    #[test]
    fn resolvent_diagonal_and_symmetry() {
        let gr = grid(16);
        let kj = C64::new(0.3, 0.4);
        let g = resolvent_matrix(kj, &gr);
        for a in 0..16 {
            let want = gr.weights[a] * gr.g[a] * I / (2.0 * kj);
            assert!((g[(a, a)] - want).norm() < 1e-15);
            for c in 0..16 {
                assert_eq!(g[(a, c)], g[(c, a)]);
            }
        }
    }

    #[test]
    fn rank_one_split_reassembles() {
        let gr = grid(24);
        for k in [C64::new(0.5, 0.2), C64::new(1e-3, 2e-3), C64::new(-0.2, -0.1)] {
            let s = split_rank_one(k, &gr);
            let g = resolvent_matrix(k, &gr);
            let r = s.reassemble();
            for a in 0..24 {
                assert_eq!(s.remainder[(a, a)], C64::new(0.0, 0.0));
                for c in 0..24 {
                    assert!((r[(a, c)] - g[(a, c)]).norm() < 1e-11 * (1.0 + g[(a, c)].norm()));
                }
            }
        }
    }

    #[test]
    fn remainder_small_k_limit() {
        for d in [0.3, 2.0, 7.5] {
            let tiny = remainder_kernel(C64::new(1e-9, 0.0), d);
            assert!((tiny - C64::new(-0.5 * d, 0.0)).norm() < 1e-9 * d * d);
            // series and closed form agree at the switch point
            let k = C64::new(0.049 / d, 0.0);
            let closed = I * ((I * k * d).exp() - 1.0) / (2.0 * k);
            assert!((remainder_kernel(k, d) - closed).norm() < 1e-13);
        }
    }

    #[test]
    fn derivative_matches_difference() {
        let gr = grid(12);
        let kj = C64::new(0.4, 0.7);
        let h = 1e-6;
        let dp = resolvent_matrix(kj + h, &gr);
        let dm = resolvent_matrix(kj - h, &gr);
        let d = resolvent_dk_matrix(kj, &gr);
        for a in 0..12 {
            for c in 0..12 {
                let fd = (dp[(a, c)] - dm[(a, c)]) / (2.0 * h);
                assert!((fd - d[(a, c)]).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn cauchy_riemann_residual() {
        let gr = grid(16);
        let h = 1e-6;
        for k in [C64::new(0.3, -0.5), C64::new(-0.8, 0.6), C64::new(0.1, 1.1)] {
            for j in 0..4 {
                let f = |k: C64| resolvent_matrix(chart_wavenumber(j, 1, k, 1.0), &gr);
                let (fx, fy) = (f(k + h), f(k - h));
                let (gy1, gy2) = (f(k + I * h), f(k - I * h));
                for a in 0..16 {
                    for c in 0..16 {
                        let dx = (fx[(a, c)] - fy[(a, c)]) / (2.0 * h);
                        let dy = (gy1[(a, c)] - gy2[(a, c)]) / (2.0 * h);
                        // ∂/∂k̄ = (∂x + i∂y)/2
                        assert!(((dx + I * dy) * 0.5).norm() < 1e-6);
                    }
                }
            }
        }
    }
}
