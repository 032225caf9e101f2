//! One pipeline per subcommand, each producing in-memory artifacts.

use landau_core::effective_operator::Operator;
use landau_core::landau_toeplitz::{counting_functions, toeplitz_spectrum, CountingReport};
use landau_core::model::{Config, DecayFamily};
use landau_core::resonance_search::{
    annulus_census, census, locate_resonances, w_spectrum, Region, Resonance, SearchOptions,
};
use landau_core::ssf_breit_wigner::{
    breit_wigner_checked, phi_lambda, trace_formula_check, window_grid, window_region, xi_trace,
    Cutoff, TestFunction,
};
use landau_core::C64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::cache::Artifact;
use crate::error::CliError;
use crate::spec::{parse_cutoff, parse_test_function, Window};
use crate::{Command, Common};

const DEFAULT_S_WINDOW: Window = Window { start: 1e-8, end: 1e-2, count: 25 };
/// Boundary samples per segment in the determinant dump.
const DUMP_SAMPLES: usize = 64;

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv(name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Artifact, CliError> {
    let fail = |e: csv::Error| CliError::validation("out", e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(&row).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::validation("out", e.to_string()))?;
    Ok(Artifact { name: name.into(), bytes })
}

fn json_file(name: &str, value: &impl Serialize) -> Artifact {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
    bytes.push(b'\n');
    Artifact { name: name.into(), bytes }
}

fn complex(z: C64) -> Value {
    json!([z.re, z.im])
}

fn resonance_json(r: &Resonance) -> Value {
    json!({
        "re_k": r.k.re,
        "im_k": r.k.im,
        "re_z": r.z.re,
        "im_z": r.z.im,
        "sector": r.sector,
        "multiplicity": r.multiplicity,
        "residual": r.residual,
        "iterations": r.iterations,
        "converged": r.converged,
        "real": r.is_real(),
    })
}

const RESONANCE_HEADER: [&str; 10] =
    ["re_k", "im_k", "re_z", "im_z", "sector", "multiplicity", "residual", "iterations", "converged", "real"];

fn resonance_row(r: &Resonance) -> Vec<String> {
    vec![
        num(r.k.re),
        num(r.k.im),
        num(r.z.re),
        num(r.z.im),
        r.sector.to_string(),
        r.multiplicity.to_string(),
        num(r.residual),
        r.iterations.to_string(),
        r.converged.to_string(),
        r.is_real().to_string(),
    ]
}

/// A validated invocation, ready to run.
pub(crate) struct Job {
    command: Command,
    cfg: Config,
    region: Option<Region>,
    window: Option<Window>,
    trace: Option<(TestFunction, Cutoff, f64)>,
    dump_det: bool,
    /// Canonical parameters; with the config hash they form the cache key.
    pub parameters: Value,
}

fn need<T>(x: Option<T>, field: &str, what: &str) -> Result<T, CliError> {
    x.ok_or_else(|| CliError::validation(field, format!("{what} is required for this subcommand")))
}

impl Job {
    pub fn new(command: &Command, common: &Common, cfg: Config) -> Result<Self, CliError> {
        let region = common
            .region
            .as_deref()
            .map(|s| {
                let r: Region = s.parse()?;
                r.validate(cfg.field.chart_radius())?;
                Ok::<_, CliError>(r)
            })
            .transpose()?;
        let window = common
            .window
            .as_deref()
            .map(|s| s.parse::<Window>().map_err(|e| CliError::validation("window", e.to_string())))
            .transpose()?;
        let mut parameters = json!({
            "region": region.map(|r| r.to_string()),
            "window": window.map(|w| w.to_string()),
            "dump_det": common.dump_det,
        });
        let mut trace = None;
        match command {
            Command::Resonances => {
                need(region, "region", "--region")?;
            }
            Command::Ssf => {
                need(window, "window", "--window")?;
            }
            Command::BwCheck => {
                if need(window, "window", "--window")?.count < 3 {
                    return Err(CliError::validation("window", "need at least 3 samples"));
                }
            }
            Command::TraceFormula(t) => {
                if !(t.scale.is_finite() && t.scale > 0.0) {
                    return Err(CliError::validation("scale", "must be positive"));
                }
                let f = parse_test_function(&t.test_function)
                    .map_err(|e| CliError::validation("test-function", e.to_string()))?;
                let psi = parse_cutoff(&t.cutoff).map_err(|e| CliError::validation("cutoff", e.to_string()))?;
                if region.is_none() && psi.support.0 < 0.0 && psi.support.1 > 0.0 {
                    return Err(CliError::validation(
                        "cutoff",
                        "support straddles the Landau level; pass --region explicitly",
                    ));
                }
                parameters["scale"] = json!(t.scale);
                parameters["test_function"] = json!(t.test_function.trim());
                parameters["cutoff"] = json!(t.cutoff.trim());
                trace = Some((f, psi, t.scale));
            }
            Command::ToeplitzSpectrum | Command::Census | Command::AsymptoticsFit => {}
        }
        if common.dump_det && region.is_none() {
            return Err(CliError::validation("dump-det", "needs --region"));
        }
        Ok(Self {
            command: command.clone(),
            cfg,
            region,
            window,
            trace,
            dump_det: common.dump_det,
            parameters,
        })
    }

    pub fn run(&self) -> Result<Vec<Artifact>, CliError> {
        let op = Operator::new(self.cfg);
        let mut out = match &self.command {
            Command::ToeplitzSpectrum => self.toeplitz()?,
            Command::AsymptoticsFit => self.asymptotics()?,
            Command::Resonances => self.resonances(&op)?,
            Command::Census => self.census(&op)?,
            Command::Ssf => self.ssf(&op)?,
            Command::BwCheck => self.bw_check(&op)?,
            Command::TraceFormula(_) => self.trace_formula(&op)?,
        };
        if self.dump_det {
            out.push(self.det_dump(&op)?);
        }
        Ok(out)
    }

    fn counting(&self) -> Result<(Vec<(i64, f64)>, CountingReport, Value), CliError> {
        let cfg = &self.cfg;
        let spec = toeplitz_spectrum(cfg.field.q, cfg.field.b, &cfg.potential.radial, cfg.truncation.l_max)?;
        let grid = self
            .window
            .unwrap_or(DEFAULT_S_WINDOW)
            .geometric()
            .map_err(|e| CliError::validation("window", e.to_string()))?;
        let report = counting_functions(&spec.values(), &grid, Some((cfg.potential.radial.family(), cfg.field.b)));
        let meta = json!({
            "q": spec.q,
            "profile_hash": spec.profile_hash,
            "floor_reached": spec.floor_reached,
            "eigenvalues": spec.eigenvalues.len(),
        });
        Ok((spec.eigenvalues, report, meta))
    }

    fn counting_csv(report: &CountingReport) -> Result<Artifact, CliError> {
        csv(
            "counting.csv",
            &["s", "n_plus", "sigma1", "sigma2", "ntilde1", "ntilde2", "law_predicted"],
            report.samples.iter().map(|c| {
                vec![
                    num(c.s),
                    c.n_plus.to_string(),
                    num(c.sigma1),
                    num(c.sigma2),
                    num(c.ntilde1),
                    num(c.ntilde2),
                    opt_num(c.law_predicted),
                ]
            }),
        )
    }

    fn toeplitz(&self) -> Result<Vec<Artifact>, CliError> {
        let (eig, report, meta) = self.counting()?;
        let spectrum = csv(
            "spectrum.csv",
            &["rank", "sector", "eigenvalue"],
            eig.iter()
                .enumerate()
                .map(|(i, (l, v))| vec![i.to_string(), l.to_string(), num(*v)]),
        )?;
        Ok(vec![spectrum, Self::counting_csv(&report)?, json_file("spectrum.json", &meta)])
    }

    fn asymptotics(&self) -> Result<Vec<Artifact>, CliError> {
        let (_, report, meta) = self.counting()?;
        let b = self.cfg.field.b;
        let fit = match report.fit {
            Some(f) => f,
            None => {
                let pts: Vec<(f64, f64)> = report.samples.iter().map(|c| (c.s, c.n_plus as f64)).collect();
                landau_core::landau_toeplitz::fit_counting_exponent(&pts, self.cfg.potential.radial.family())?
            }
        };
        let (family, expected_slope, expected_prefactor) = match self.cfg.potential.radial.family() {
            DecayFamily::Power { alpha, u0 } => {
                ("power", -2.0 / alpha, 0.5 * b * u0.powf(2.0 / alpha))
            }
            DecayFamily::Exponential { mu, beta } if (beta - 1.0).abs() < 1e-12 => {
                ("exponential", 1.0, 1.0 / (1.0 + 2.0 * mu / b).ln())
            }
            DecayFamily::Exponential { mu, beta } if beta < 1.0 => {
                ("exponential", 1.0 / beta, 0.5 * b * mu.powf(-1.0 / beta))
            }
            DecayFamily::Exponential { beta, .. } => ("exponential", 1.0, beta / (beta - 1.0)),
            DecayFamily::Compact => ("compact", 1.0, 1.0),
        };
        let summary = json!({
            "family": family,
            "slope": fit.slope,
            "prefactor": fit.prefactor,
            "residual": fit.residual,
            "expected_slope": expected_slope,
            "expected_prefactor": expected_prefactor,
            "spectrum": meta,
        });
        Ok(vec![Self::counting_csv(&report)?, json_file("fit.json", &summary)])
    }

    fn resonances(&self, op: &Operator) -> Result<Vec<Artifact>, CliError> {
        let region = need(self.region, "region", "--region")?;
        let found = locate_resonances(op, &region, &SearchOptions::default())?;
        let doc = json!({
            "region": region.to_string(),
            "resonances": found.iter().map(resonance_json).collect::<Vec<_>>(),
        });
        Ok(vec![
            csv("resonances.csv", &RESONANCE_HEADER, found.iter().map(resonance_row))?,
            json_file("resonances.json", &doc),
        ])
    }

    fn census(&self, op: &Operator) -> Result<Vec<Artifact>, CliError> {
        let opts = SearchOptions::default();
        let mut out = Vec::new();
        if let Some(region) = self.region {
            let c = census(op, &region, &opts)?;
            out.push(csv(
                "census.csv",
                &["sector", "count"],
                c.per_sector.iter().map(|(l, n)| vec![l.to_string(), n.to_string()]),
            )?);
            out.push(json_file(
                "census.json",
                &json!({"region": region.to_string(), "total": c.total, "skipped": c.skipped}),
            ));
        }
        let radii = match self.window {
            Some(w) => w.geometric().map_err(|e| CliError::validation("window", e.to_string()))?,
            None => {
                let top = 0.2 * self.cfg.field.chart_radius();
                (0..4).map(|i| top / f64::from(1u32 << i)).collect()
            }
        };
        let rows = annulus_census(op, &radii, &opts)?;
        out.push(csv(
            "annuli.csv",
            &["r", "count", "n_plus", "bound", "ratio"],
            rows.iter().map(|a| {
                vec![num(a.r), a.count.to_string(), a.n_plus.to_string(), num(a.bound), num(a.ratio())]
            }),
        )?);
        Ok(out)
    }

    fn ssf(&self, op: &Operator) -> Result<Vec<Artifact>, CliError> {
        let grid = need(self.window, "window", "--window")?.linear();
        let trace = xi_trace(op, &grid)?;
        let f = self.cfg.field;
        let level = f.landau_level(f.q);
        let phi = match self.cfg.sign_definite() {
            Some(j) => {
                let w = w_spectrum(op)?;
                grid.iter()
                    .map(|&l| {
                        if l > level {
                            Ok(Some(j / std::f64::consts::PI * phi_lambda(&w, l - level)?.value))
                        } else {
                            Ok(None)
                        }
                    })
                    .collect::<Result<Vec<_>, CliError>>()?
            }
            None => vec![None; grid.len()],
        };
        let rows = (0..grid.len()).map(|i| {
            vec![
                num(trace.lambda[i]),
                num(trace.xi2[i]),
                num(trace.correction[i]),
                num(trace.xi[i]),
                opt_num(phi[i]),
            ]
        });
        let table = csv("ssf.csv", &["lambda", "xi2", "correction", "xi", "phi_term"], rows)?;
        let meta = json!({
            "anchor": trace.anchor,
            "sectors": trace.sectors,
            "evaluations": trace.evaluations,
        });
        Ok(vec![table, json_file("ssf.json", &meta)])
    }

    fn bw_check(&self, op: &Operator) -> Result<Vec<Artifact>, CliError> {
        let w = need(self.window, "window", "--window")?;
        let region = match self.region {
            Some(r) => r,
            None => window_region(op, w.start, w.end)?,
        };
        let found = locate_resonances(op, &region, &SearchOptions::default())?;
        let grid = window_grid(w.start, w.end, w.count, &found);
        let d = breit_wigner_checked(op, &grid, &found)?;
        let ablation: Vec<Value> = found
            .par_iter()
            .enumerate()
            .filter(|(_, r)| !r.is_real() && (w.start..=w.end).contains(&r.z.re))
            .map(|(i, r)| {
                let rest: Vec<Resonance> =
                    found.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, x)| *x).collect();
                let without = d.with_resonances(&rest).max_residual;
                json!({
                    "z": complex(r.z),
                    "max_residual_without": without,
                    "ratio": without / d.max_residual,
                })
            })
            .collect();
        let table = csv(
            "bw.csv",
            &["mu", "xi_prime", "lorentzian", "residual"],
            d.samples
                .iter()
                .map(|s| vec![num(s.mu), num(s.xi_prime), num(s.lorentzian), num(s.residual)]),
        )?;
        let summary = json!({
            "window": [d.window.0, d.window.1],
            "region": region.to_string(),
            "r": d.r,
            "max_residual": d.max_residual,
            "smoothness": d.smoothness,
            "bound_scale": d.bound_scale,
            "resonances": found.iter().map(resonance_json).collect::<Vec<_>>(),
            "ablation": ablation,
        });
        Ok(vec![table, json_file("bw.json", &summary)])
    }

    fn trace_formula(&self, op: &Operator) -> Result<Vec<Artifact>, CliError> {
        let (f, psi, r) = self.trace.clone().expect("trace arguments validated");
        let region = match self.region {
            Some(reg) => reg,
            None => {
                let level = self.cfg.field.landau_level(self.cfg.field.q);
                window_region(op, level + r * psi.support.0, level + r * psi.support.1)?
            }
        };
        let found = locate_resonances(op, &region, &SearchOptions::default())?;
        let t = trace_formula_check(op, &f, &psi, r, &found)?;
        let difference = (t.lhs - t.rhs).norm();
        let doc = json!({
            "region": region.to_string(),
            "lhs": complex(t.lhs),
            "rhs": complex(t.rhs),
            "difference": difference,
            "error_bound": t.error_bound,
            "within_bound": difference <= t.error_bound,
            "m_psi": t.m_psi,
            "sup_f": t.sup_f,
            "n_q": t.n_q,
            "resonances_used": t.resonances_used,
            "resonances": found.iter().map(resonance_json).collect::<Vec<_>>(),
        });
        Ok(vec![json_file("trace_formula.json", &doc)])
    }

    fn det_dump(&self, op: &Operator) -> Result<Artifact, CliError> {
        let region = need(self.region, "region", "--region")?;
        let points: Vec<C64> = region
            .boundary()
            .iter()
            .flat_map(|s| (0..DUMP_SAMPLES).map(move |i| s.point(i as f64 / DUMP_SAMPLES as f64)))
            .collect();
        let values = points
            .par_iter()
            .map(|&k| {
                let res = op.chart_resolvents(k)?;
                Ok((k, op.log_det2_total(&res)?))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        csv(
            "det_path.csv",
            &["re_k", "im_k", "log_abs", "arg", "tail_bound"],
            values.iter().map(|(k, d)| {
                vec![num(k.re), num(k.im), num(d.log_modulus), num(d.argument), num(d.tail_bound)]
            }),
        )
    }
}
