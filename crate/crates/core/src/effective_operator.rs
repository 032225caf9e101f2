//! Sector matrices of the Birman–Schwinger operator
//! `T_V(z) = J|V|^{1/2}(H₀ - z)^{-1}|V|^{1/2}`, their regularized
//! determinants, and the traces feeding the spectral shift function.
//!
//! In sector `ℓ` the cyclic identity `det₂(I + AB) = det₂(I + BA)` turns
//! `T_V` into the block matrix `ε (O^{(ℓ)} ⊗ S) diag(G_j)`, with `S` the node
//! signs of the potential and `G_j` the axis Nyström matrices. The `(q, q)`
//! block carries the singular `(i/2k) v vᵀ` part.

use std::sync::OnceLock;

use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

use crate::axis_channel::{resolvent_matrix, AxisGrid, ChannelError, ChannelSet};
use crate::landau_toeplitz::{sector_levels, sector_overlaps, SectorOverlap, ToeplitzError};
use crate::linalg::{CMatrix, Lu};
use crate::model::Config;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Toeplitz(#[from] ToeplitzError),
    #[error("sector {l} lies outside the retained range")]
    NoSector { l: i64 },
    #[error("sector tail not below tolerance by l = {l_max}; partial sum {partial}, last contribution {last:.3e}")]
    TailNotConverged { l_max: usize, partial: C64, last: f64 },
    #[error("operation requires a sign-definite potential")]
    NotSignDefinite,
}

/// Regularized determinant `det₂(I + A) = det(I + A) e^{-tr A}`, kept as
/// its two logarithmic pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Det2 {
    /// `log det(I + A)` with an arbitrary branch; `None` when `I + A` is singular.
    pub log_det: Option<C64>,
    pub trace: C64,
}

impl Det2 {
    pub fn log(&self) -> Option<C64> {
        self.log_det.map(|l| l - self.trace)
    }

    pub fn log_modulus(&self) -> f64 {
        self.log().map_or(f64::NEG_INFINITY, |l| l.re)
    }

    pub fn argument(&self) -> f64 {
        self.log().map_or(0.0, |l| l.im)
    }

    pub fn value(&self) -> C64 {
        self.log().map_or(C64::new(0.0, 0.0), |l| l.exp())
    }
}

/// `det₂(I + A)` by LU of `I + A`.
pub fn det2(a: &CMatrix) -> Det2 {
    let mut m = a.clone();
    for i in 0..m.dim() {
        m[(i, i)] += 1.0;
    }
    Det2 {
        log_det: Lu::new(m).log_det(),
        trace: a.trace(),
    }
}

/// Axis matrices of every retained level at one spectral point.
#[derive(Debug, Clone)]
pub struct Resolvents {
    pub channels: ChannelSet,
    pub g: Vec<CMatrix>,
    norms: Vec<f64>,
}

impl Resolvents {
    pub fn new(channels: ChannelSet, grid: &AxisGrid) -> Self {
        let g: Vec<CMatrix> = channels
            .wavenumbers
            .iter()
            .map(|&kj| resolvent_matrix(kj, grid))
            .collect();
        let norms = g.iter().map(CMatrix::frobenius).collect();
        Self { channels, g, norms }
    }

    pub fn frobenius(&self, j: usize) -> f64 {
        self.norms[j]
    }
}

/// One angular-momentum block of `T_V`.
#[derive(Debug, Clone)]
pub struct SectorOperator {
    pub l: i64,
    pub levels: Vec<usize>,
    pub matrix: CMatrix,
    /// `½ ε O^{(ℓ)}_{qq} Σ_a v_a²`, when level `q` is present.
    pub bq_eigenvalue: Option<f64>,
}

/// Total `log det₂` summed over sectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetValue {
    pub log_modulus: f64,
    pub argument: f64,
    pub sectors: Vec<(i64, C64)>,
    /// Bound on the neglected and skipped sector contributions.
    pub tail_bound: f64,
}

/// Per-level comparison of `tr ∂_k A` with its closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelTrace {
    pub level: usize,
    pub numeric: C64,
    pub closed_form: C64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceDkA {
    pub per_level: Vec<LevelTrace>,
    pub total: C64,
}

/// Discretized operator for one configuration; sector overlaps are
/// computed on first use and shared afterwards.
#[derive(Debug)]
pub struct Operator {
    cfg: Config,
    grid: AxisGrid,
    overlaps: Vec<OnceLock<Result<SectorOverlap, ToeplitzError>>>,
    masses: OnceLock<Result<Vec<f64>, OperatorError>>,
}

impl Operator {
    pub fn new(cfg: Config) -> Self {
        let grid = AxisGrid::from_config(&cfg);
        let count = cfg.truncation.j_max + cfg.truncation.l_max + 1;
        Self {
            cfg,
            grid,
            overlaps: (0..count).map(|_| OnceLock::new()).collect(),
            masses: OnceLock::new(),
        }
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn grid(&self) -> &AxisGrid {
        &self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.cfg.potential.epsilon
    }

    /// Lowest and highest retained sector.
    pub fn sector_bounds(&self) -> (i64, i64) {
        (
            -(self.cfg.truncation.j_max as i64),
            self.cfg.truncation.l_max as i64,
        )
    }

    pub fn overlap(&self, l: i64) -> Result<&SectorOverlap, OperatorError> {
        let (lo, hi) = self.sector_bounds();
        if l < lo || l > hi {
            return Err(OperatorError::NoSector { l });
        }
        let cell = &self.overlaps[(l - lo) as usize];
        cell.get_or_init(|| {
            let levels = sector_levels(l, self.cfg.truncation.j_max);
            sector_overlaps(l, &levels, self.cfg.field.b, &self.cfg.potential.radial)
        })
        .as_ref()
        .map_err(|e| e.clone().into())
    }

    pub fn chart_channels(&self, k: C64) -> Result<ChannelSet, OperatorError> {
        let f = &self.cfg.field;
        Ok(ChannelSet::chart(f.q, k, f.b, self.cfg.truncation.j_max)?)
    }

    pub fn physical_channels(&self, z: C64) -> Result<ChannelSet, OperatorError> {
        Ok(ChannelSet::physical(
            z,
            self.cfg.field.b,
            self.cfg.truncation.j_max,
        )?)
    }

    pub fn resolvents(&self, channels: ChannelSet) -> Resolvents {
        Resolvents::new(channels, &self.grid)
    }

    pub fn chart_resolvents(&self, k: C64) -> Result<Resolvents, OperatorError> {
        Ok(self.resolvents(self.chart_channels(k)?))
    }

    /// `Σ_a S_a v_a²`, the discrete signed axis mass.
    pub fn signed_axis_mass(&self) -> f64 {
        self.grid
            .v
            .iter()
            .zip(&self.grid.sign)
            .map(|(v, s)| s * v * v)
            .sum()
    }

    pub fn sector_bq_eigenvalue(&self, l: i64) -> Result<Option<f64>, OperatorError> {
        let q = self.cfg.field.q;
        if l < -(q as i64) {
            return Ok(None);
        }
        let o = self.overlap(l)?;
        Ok(Some(0.5 * self.epsilon() * o.diagonal(q) * self.grid.mass()))
    }

    pub fn assemble_sector(
        &self,
        l: i64,
        res: &Resolvents,
    ) -> Result<SectorOperator, OperatorError> {
        let o = self.overlap(l)?;
        let n = self.grid.len();
        let m = o.dim();
        let eps = self.epsilon();
        let mut mat = CMatrix::zeros(m * n);
        for (a, orow) in o.rows().enumerate() {
            for x in 0..n {
                let sx = eps * self.grid.sign[x];
                let row = mat.row_mut(a * n + x);
                for (c, &occ) in orow.iter().enumerate() {
                    let coef = sx * occ;
                    if coef == 0.0 {
                        continue;
                    }
                    let g = res.g[o.levels[c]].row(x);
                    for (dst, src) in row[c * n..(c + 1) * n].iter_mut().zip(g) {
                        *dst = src * coef;
                    }
                }
            }
        }
        Ok(SectorOperator {
            l,
            levels: o.levels.clone(),
            matrix: mat,
            bq_eigenvalue: self.sector_bq_eigenvalue(l)?,
        })
    }

    /// `tr` of the sector block without forming it.
    pub fn sector_trace(&self, l: i64, channels: &ChannelSet) -> Result<C64, OperatorError> {
        let o = self.overlap(l)?;
        let sm = self.signed_axis_mass();
        Ok(o.levels
            .iter()
            .enumerate()
            .map(|(a, &j)| self.epsilon() * o.at(a, a) * sm * I / (2.0 * channels.wavenumbers[j]))
            .sum())
    }

    /// Upper bound on the Frobenius norm of the sector block.
    pub fn sector_norm_bound(&self, l: i64, res: &Resolvents) -> Result<f64, OperatorError> {
        let o = self.overlap(l)?;
        let g2: f64 = o.levels.iter().map(|&j| res.frobenius(j).powi(2)).sum();
        Ok(self.epsilon() * o.frobenius() * g2.sqrt())
    }

    pub fn sector_det2(&self, l: i64, res: &Resolvents) -> Result<Det2, OperatorError> {
        if self.epsilon() == 0.0 {
            return Ok(Det2 {
                log_det: Some(C64::new(0.0, 0.0)),
                trace: C64::new(0.0, 0.0),
            });
        }
        Ok(det2(&self.assemble_sector(l, res)?.matrix))
    }

    /// Sum of sector `log det₂` with the adaptive tail rule: sectors `ℓ ≤ 0`
    /// are always included; beyond, summation stops after two consecutive
    /// contributions below `det_tail_tol`. Sectors whose norm bound already
    /// guarantees a negligible contribution are bounded instead of factored.
    pub fn log_det2_total(&self, res: &Resolvents) -> Result<DetValue, OperatorError> {
        let tol = self.cfg.truncation.det_tail_tol;
        let (lo, hi) = self.sector_bounds();
        let mut total = C64::new(0.0, 0.0);
        let mut sectors = Vec::new();
        let mut tail = 0.0;
        let mut quiet = 0;
        let mut last = f64::INFINITY;
        for l in lo..=hi {
            let nb = self.sector_norm_bound(l, res)?;
            let bound = if nb < 0.5 {
                nb * nb / (2.0 * (1.0 - nb))
            } else {
                f64::INFINITY
            };
            let size = if bound < 1e-3 * tol {
                tail += bound;
                bound
            } else {
                let d = self.sector_det2(l, res)?;
                let v = d.log().unwrap_or(C64::new(f64::NEG_INFINITY, 0.0));
                total += v;
                sectors.push((l, v));
                v.norm()
            };
            last = size;
            if l > 0 {
                quiet = if size < tol { quiet + 1 } else { 0 };
                if quiet >= 2 {
                    // Geometric extrapolation of what remains.
                    tail += size * 2.0;
                    return Ok(DetValue {
                        log_modulus: total.re,
                        argument: total.im,
                        sectors,
                        tail_bound: tail,
                    });
                }
            }
        }
        Err(OperatorError::TailNotConverged {
            l_max: self.cfg.truncation.l_max,
            partial: total,
            last,
        })
    }

    /// `m_j = Σ_ℓ O^{(ℓ)}_{jj}` for every retained level. Summation stops
    /// once two consecutive sectors add less than `det_tail_tol` relative
    /// to the largest mass, so the result does not depend on `ε`.
    pub fn level_masses(&self) -> Result<&[f64], OperatorError> {
        self.masses
            .get_or_init(|| {
                let j_max = self.cfg.truncation.j_max;
                let tol = self.cfg.truncation.det_tail_tol;
                let (lo, hi) = self.sector_bounds();
                let mut m = vec![0.0; j_max + 1];
                let mut quiet = 0;
                let mut last = 0.0;
                for l in lo..=hi {
                    let o = self.overlap(l)?;
                    let mut biggest = 0.0f64;
                    for (a, &j) in o.levels.iter().enumerate() {
                        m[j] += o.at(a, a);
                        biggest = biggest.max(o.at(a, a));
                    }
                    let top = m.iter().cloned().fold(0.0, f64::max);
                    last = biggest / top;
                    if l > 0 {
                        quiet = if last < tol { quiet + 1 } else { 0 };
                        if quiet >= 2 {
                            return Ok(m);
                        }
                    }
                }
                Err(OperatorError::TailNotConverged {
                    l_max: self.cfg.truncation.l_max,
                    partial: C64::new(m.iter().sum(), 0.0),
                    last,
                })
            })
            .as_ref()
            .map(Vec::as_slice)
            .map_err(Clone::clone)
    }

    /// `tr T_V` at a spectral point.
    pub fn trace_t(&self, channels: &ChannelSet) -> Result<C64, OperatorError> {
        let m = self.level_masses()?;
        let c = self.epsilon() * self.signed_axis_mass();
        Ok(m
            .iter()
            .zip(&channels.wavenumbers)
            .map(|(mj, kj)| c * mj * I / (2.0 * kj))
            .sum())
    }

    /// `tr ∂_z T_V`, with `∂_z = (2k_j)^{-1} ∂_{k_j}` on each level.
    pub fn trace_dz_t(&self, channels: &ChannelSet) -> Result<C64, OperatorError> {
        let m = self.level_masses()?;
        let c = self.epsilon() * self.signed_axis_mass();
        Ok(m
            .iter()
            .zip(&channels.wavenumbers)
            .map(|(mj, kj)| c * mj * (-I) / (4.0 * kj * kj * kj))
            .sum())
    }

    /// `tr ∂_z T_V(λ + i0)` on the real axis.
    pub fn trace_dz_t_real(&self, lambda: f64) -> Result<C64, OperatorError> {
        self.trace_dz_t(&self.physical_channels(C64::new(lambda, 0.0))?)
    }

    /// `tr ∂_k A(k)` level by level, with `A = T_V - (iJ/k) B_q`, against
    /// the closed form in `∫V`.
    pub fn trace_dk_a(&self, k: C64) -> Result<TraceDkA, OperatorError> {
        let sign = self.cfg.sign_definite().ok_or(OperatorError::NotSignDefinite)?;
        let ch = self.chart_channels(k)?;
        let m = self.level_masses()?;
        let f = self.cfg.field;
        let b = f.b;
        let integral_v = sign * self.epsilon() * self.cfg.potential.radial.transverse_mass()
            * self.cfg.potential.axis.mass();
        let pref = 2.0 * k * b / (8.0 * std::f64::consts::PI) * integral_v;
        let mut per_level = Vec::new();
        let mut total = C64::new(0.0, 0.0);
        for (j, &mj) in m.iter().enumerate() {
            if j == f.q {
                // The remainder kernel vanishes on the diagonal.
                per_level.push(LevelTrace {
                    level: j,
                    numeric: C64::new(0.0, 0.0),
                    closed_form: C64::new(0.0, 0.0),
                });
                continue;
            }
            let kj = ch.wavenumbers[j];
            let dkj = ch.dkj_dk(j).unwrap_or_default();
            let diag_sum: C64 = self
                .grid
                .v
                .iter()
                .zip(&self.grid.sign)
                .map(|(v, s)| s * v * v * (-I) / (2.0 * kj * kj) * dkj)
                .sum();
            let numeric = self.epsilon() * mj * diag_sum;
            let shift = 2.0 * b * (j as f64 - f.q as f64);
            let closed_form = if j > f.q {
                pref * (shift - k * k).powf(-1.5)
            } else {
                -I * pref * (k * k - shift).powf(-1.5)
            };
            total += numeric;
            per_level.push(LevelTrace {
                level: j,
                numeric,
                closed_form,
            });
        }
        Ok(TraceDkA { per_level, total })
    }

    /// Nonzero eigenvalues of `B_q`, one per sector, sorted descending.
    pub fn bq_spectrum(&self) -> Result<Vec<(i64, f64)>, OperatorError> {
        if self.epsilon() == 0.0 {
            return Ok(Vec::new());
        }
        let q = self.cfg.field.q as i64;
        let mut out = Vec::new();
        let mut top = 0.0f64;
        for l in -q..=self.sector_bounds().1 {
            let v = self.sector_bq_eigenvalue(l)?.unwrap_or(0.0);
            top = top.max(v);
            out.push((l, v));
            if l >= 0 && v < 1e-14 * top {
                break;
            }
        }
        out.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        Ok(out)
    }
}
