//! Seeded Monte Carlo harness.
//!
//! Scenarios pair a true (F, H) generating distribution with a test
//! procedure. Replications draw from per-replication derived random
//! streams, so results do not depend on execution order or the degree of
//! parallelism. Null calibration compares the empirical statistic
//! distribution with its chi-square reference; power curves track
//! rejection rates over a sample-size grid; the D1 scan locates the first
//! score component with a nonzero expectation under a fixed alternative.
//!
//! The composite data-driven procedure rebuilds its plug-in score system at
//! the estimated nuisance of every replication. To keep that affordable the
//! harness precomputes score tables on a grid of nuisance values spanning
//! the realizable range and interpolates between them; the interpolation is
//! accuracy-checked against a directly built system at compile time, and
//! any replication whose estimate falls outside the covered range falls
//! back to the direct (slow) path.

use rayon::prelude::*;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::families::normal_pdf;
use crate::linalg::SymMat;
use crate::model::ConvolvedModel;
use crate::quadrature::{integrate, integrate_vector, truncate_support, Interval, QuadratureSpec};
use crate::rng::{RngStream, StreamRole};
use crate::scores::{
    build_efficient_scores, build_simple_scores, plugin_scores_at_eta, plugin_scores_example2,
    plugin_scores_example3, sample_variance, ScoreSystem, ScoreTable,
};
use crate::selection::{null_signal_variance, DataDrivenSpec};
use crate::teststat::{chi2_cdf, decide, quadratic_statistic, StatKind, TestReport};

/// A true generating distribution for the signal or the noise.
#[derive(Debug, Clone)]
pub enum Truth {
    Normal { mean: f64, var: f64 },
    Uniform { lo: f64, hi: f64 },
    /// 0.5 N(center - mu, v) + 0.5 N(center + mu, v): symmetric about
    /// `center` with inflated variance mu^2 + v.
    SymmetricBimodal { center: f64, mu: f64, component_var: f64 },
    PointMass { at: f64 },
}

impl Truth {
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match self {
            Truth::Normal { mean, var } => mean + var.sqrt() * rng.standard_normal(),
            Truth::Uniform { lo, hi } => lo + (hi - lo) * rng.uniform(),
            Truth::SymmetricBimodal {
                center,
                mu,
                component_var,
            } => {
                let side = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                center + side * mu + component_var.sqrt() * rng.standard_normal()
            }
            Truth::PointMass { at } => *at,
        }
    }

    /// Lebesgue density, when one exists.
    pub fn density(&self, x: f64) -> Option<f64> {
        match self {
            Truth::Normal { mean, var } => {
                let sd = var.sqrt();
                Some(normal_pdf((x - mean) / sd) / sd)
            }
            Truth::Uniform { lo, hi } => Some(if x >= *lo && x <= *hi {
                1.0 / (hi - lo)
            } else {
                0.0
            }),
            Truth::SymmetricBimodal {
                center,
                mu,
                component_var,
            } => {
                let sd = component_var.sqrt();
                let a = normal_pdf((x - (center - mu)) / sd) / sd;
                let b = normal_pdf((x - (center + mu)) / sd) / sd;
                Some(0.5 * (a + b))
            }
            Truth::PointMass { .. } => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Truth::Normal { mean, .. } => *mean,
            Truth::Uniform { lo, hi } => 0.5 * (lo + hi),
            Truth::SymmetricBimodal { center, .. } => *center,
            Truth::PointMass { at } => *at,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Truth::Normal { var, .. } => *var,
            Truth::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            Truth::SymmetricBimodal {
                mu, component_var, ..
            } => component_var + mu * mu,
            Truth::PointMass { .. } => 0.0,
        }
    }

    pub fn support_hint(&self) -> Interval {
        match self {
            Truth::Normal { mean, var } => {
                let sd = var.sqrt();
                Interval {
                    lo: mean - 9.0 * sd,
                    hi: mean + 9.0 * sd,
                }
            }
            Truth::Uniform { lo, hi } => Interval { lo: *lo, hi: *hi },
            Truth::SymmetricBimodal {
                center,
                mu,
                component_var,
            } => {
                let r = mu + 9.0 * component_var.sqrt();
                Interval {
                    lo: center - r,
                    hi: center + r,
                }
            }
            Truth::PointMass { at } => Interval {
                lo: at - 1.0,
                hi: at + 1.0,
            },
        }
    }
}

/// Built-in alternatives, applied to a base (null) signal truth.
#[derive(Debug, Clone)]
pub enum Alternative {
    Null,
    MeanShift(f64),
    /// Multiply the variance by the factor, keeping the mean.
    VarianceInflation(f64),
    /// Symmetric two-component normal mixture about the base mean; the
    /// component variance defaults to the base variance.
    SymmetricBimodal {
        mu: f64,
        component_var: Option<f64>,
    },
    /// Replace the signal by a uniform with the base mean and the given
    /// half width.
    UniformSignal { half_width: f64 },
}

impl Alternative {
    pub fn apply(&self, base: &Truth) -> Result<Truth> {
        let mean = base.mean();
        let var = base.variance();
        Ok(match self {
            Alternative::Null => base.clone(),
            Alternative::MeanShift(delta) => match base {
                Truth::Normal { mean, var } => Truth::Normal {
                    mean: mean + delta,
                    var: *var,
                },
                Truth::Uniform { lo, hi } => Truth::Uniform {
                    lo: lo + delta,
                    hi: hi + delta,
                },
                Truth::SymmetricBimodal {
                    center,
                    mu,
                    component_var,
                } => Truth::SymmetricBimodal {
                    center: center + delta,
                    mu: *mu,
                    component_var: *component_var,
                },
                Truth::PointMass { at } => Truth::PointMass { at: at + delta },
            },
            Alternative::VarianceInflation(factor) => {
                if !(*factor > 0.0) {
                    return Err(Error::OutOfDomain(
                        "variance inflation factor must be > 0".into(),
                    ));
                }
                match base {
                    Truth::Normal { mean, var } => Truth::Normal {
                        mean: *mean,
                        var: var * factor,
                    },
                    Truth::Uniform { lo, hi } => {
                        let c = 0.5 * (lo + hi);
                        let h = 0.5 * (hi - lo) * factor.sqrt();
                        Truth::Uniform {
                            lo: c - h,
                            hi: c + h,
                        }
                    }
                    other => {
                        return Err(Error::OutOfDomain(format!(
                            "variance inflation not defined for {other:?}"
                        )))
                    }
                }
            }
            Alternative::SymmetricBimodal { mu, component_var } => Truth::SymmetricBimodal {
                center: mean,
                mu: *mu,
                component_var: component_var.unwrap_or(var),
            },
            Alternative::UniformSignal { half_width } => {
                if !(*half_width > 0.0) {
                    return Err(Error::OutOfDomain("half width must be > 0".into()));
                }
                Truth::Uniform {
                    lo: mean - half_width,
                    hi: mean + half_width,
                }
            }
        })
    }
}

/// Which test runs inside the Monte Carlo loop.
#[derive(Clone)]
pub enum Procedure {
    /// Gaussian location example with the sample-variance plug-in (W_1).
    Example2Plugin { theta0: f64, alpha: f64 },
    /// Gaussian scale example with the sample-mean plug-in (W_1 for eta).
    Example3Plugin { eta0: f64, alpha: f64 },
    /// Data-driven U_S with known noise over the model's full dimension.
    SimpleNest {
        model: Arc<ConvolvedModel>,
        dd: DataDrivenSpec,
    },
    /// Data-driven W_S with parametric noise and the variance-matching
    /// nuisance plug-in.
    CompositeNest {
        model: Arc<ConvolvedModel>,
        dd: DataDrivenSpec,
        eta_floor: f64,
    },
}

/// One Monte Carlo scenario: a generating truth, a procedure, and the
/// sampling plan.
#[derive(Clone)]
pub struct ScenarioSpec {
    pub signal_truth: Truth,
    pub noise_truth: Truth,
    pub procedure: Procedure,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
}

/// Outcome of one replication.
#[derive(Debug, Clone)]
pub struct RepOutcome {
    pub statistics: Vec<f64>,
    pub selected_s: usize,
    pub stat_at_s: f64,
    pub p_value: f64,
    pub reject: bool,
    /// True when the replication took the direct (non-tabulated) path.
    pub used_fallback: bool,
}

impl RepOutcome {
    fn from_report(r: &TestReport, used_fallback: bool) -> Self {
        Self {
            statistics: r.statistics.clone(),
            selected_s: r.selected_s,
            stat_at_s: r.stat_at_s,
            p_value: r.p_value,
            reject: r.reject,
            used_fallback,
        }
    }
}

/// Null-calibration summary.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    /// Sorted statistic values (the empirical CDF support).
    pub statistics: Vec<f64>,
    /// Kolmogorov-Smirnov distance to the chi-square reference.
    pub ks_distance: f64,
    pub reference_df: usize,
    /// Rejection frequency at the configured alpha.
    pub empirical_level: f64,
    pub level_se: f64,
    /// Fraction of replications selecting S = 1 (1.0 for fixed-dimension
    /// procedures).
    pub fraction_s_equals_1: f64,
}

/// One cell of a power curve.
#[derive(Debug, Clone)]
pub struct PowerPoint {
    pub n: usize,
    pub rejection_rate: f64,
    pub se: f64,
}

/// Draw the observations of one replication: Y_j = X_j + eps_j with X from
/// the signal truth and eps from the noise truth, on independent derived
/// streams.
pub fn sample_observations(spec: &ScenarioSpec, replication: usize) -> Vec<f64> {
    let mut xs = RngStream::derive(spec.seed, replication as u64, StreamRole::Signal);
    let mut es = RngStream::derive(spec.seed, replication as u64, StreamRole::Noise);
    (0..spec.n)
        .map(|_| spec.signal_truth.sample(&mut xs) + spec.noise_truth.sample(&mut es))
        .collect()
}

/// Score tables on a nuisance grid with polynomial interpolation in
/// u = log(eta^2). Gaussian convolutions are analytic in v = eta^2 with an
/// analyticity radius shrinking like v toward zero; log spacing matches
/// that, so one global Chebyshev grid covers wide nuisance ranges.
struct EtaTables {
    us: Vec<f64>,
    tables: Vec<ScoreTable>,
    sigmas: Vec<SymMat>,
    v_lo: f64,
    v_hi: f64,
    d: usize,
}

const ETA_NODES: usize = 28;
const TABLE_POINTS: usize = 1500;

impl EtaTables {
    /// `v_lo`, `v_hi` bound eta^2.
    fn build(model: &Arc<ConvolvedModel>, theta0: &[f64], v_lo: f64, v_hi: f64) -> Result<Self> {
        if !(v_lo > 0.0 && v_hi > v_lo) {
            return Err(Error::OutOfDomain(format!(
                "eta^2 table range must satisfy 0 < lo < hi, got [{v_lo}, {v_hi}]"
            )));
        }
        // Chebyshev nodes of the first kind on [log v_lo, log v_hi].
        let u_lo = v_lo.ln();
        let u_hi = v_hi.ln();
        let mid = 0.5 * (u_lo + u_hi);
        let half = 0.5 * (u_hi - u_lo);
        let mut us: Vec<f64> = (0..ETA_NODES)
            .map(|i| {
                mid + half
                    * ((2.0 * i as f64 + 1.0) * std::f64::consts::PI / (2.0 * ETA_NODES as f64))
                        .cos()
            })
            .collect();
        us.sort_by(|a, b| a.partial_cmp(b).unwrap());

        let built: Result<Vec<(ScoreTable, SymMat)>> = us
            .par_iter()
            .map(|&u| {
                let sys = build_efficient_scores(model.clone(), theta0, &[(0.5 * u).exp()])?;
                let table = ScoreTable::build(&sys, TABLE_POINTS)?;
                Ok((table, sys.sigma().clone()))
            })
            .collect();
        let built = built?;
        let (tables, sigmas): (Vec<_>, Vec<_>) = built.into_iter().unzip();
        let out = Self {
            us,
            tables,
            sigmas,
            v_lo,
            v_hi,
            d: theta0.len(),
        };
        out.verify(model, theta0)?;
        Ok(out)
    }

    /// Compare interpolated scores against directly built systems at probe
    /// points off the node grid. The gate is relative to each component's
    /// own scale sqrt(Sigma_jj), which is what the normalized statistic
    /// responds to.
    fn verify(&self, model: &Arc<ConvolvedModel>, theta0: &[f64]) -> Result<()> {
        let mut worst = 0.0_f64;
        for frac in [0.13_f64, 0.52, 0.88] {
            let u = self.v_lo.ln() + frac * (self.v_hi.ln() - self.v_lo.ln());
            let eta = (0.5 * u).exp();
            let sys = build_efficient_scores(model.clone(), theta0, &[eta])?;
            let scales: Vec<f64> = (0..self.d)
                .map(|c| sys.sigma().get(c, c).sqrt().max(1e-6))
                .collect();
            let w = sys.observation_window();
            let weights = self.weights(eta);
            let mut interp = vec![0.0; self.d];
            let mut node_buf = vec![0.0; self.d];
            for i in 1..8 {
                let y = w.lo + w.width() * i as f64 / 8.0;
                let direct = sys.l_star(y)?;
                interp.iter_mut().for_each(|v| *v = 0.0);
                let mut miss = false;
                for (i, t) in self.tables.iter().enumerate() {
                    if !t.eval_into(y, &mut node_buf) {
                        miss = true;
                        break;
                    }
                    for c in 0..self.d {
                        interp[c] += weights[i] * node_buf[c];
                    }
                }
                if miss {
                    continue;
                }
                for c in 0..self.d {
                    worst = worst.max((interp[c] - direct[c]).abs() / scales[c]);
                }
            }
        }
        if worst > 2e-3 {
            return Err(Error::Budget(format!(
                "eta interpolation relative error {worst:.2e} exceeds 2e-3; \
                 widen nodes or narrow range"
            )));
        }
        Ok(())
    }

    fn covers(&self, eta: f64) -> bool {
        let v = eta * eta;
        v >= self.v_lo && v <= self.v_hi
    }

    /// Lagrange weights over the u = log(eta^2) nodes.
    fn weights(&self, eta: f64) -> Vec<f64> {
        let u = (eta * eta).ln();
        let m = self.us.len();
        let mut w = vec![0.0; m];
        for a in 0..m {
            let mut num = 1.0;
            let mut den = 1.0;
            for b in 0..m {
                if a != b {
                    num *= u - self.us[b];
                    den *= self.us[a] - self.us[b];
                }
            }
            w[a] = num / den;
        }
        w
    }

    /// Interpolated score rows and Sigma at eta; None when some observation
    /// misses a node table (caller falls back to the direct path).
    fn rows_and_sigma(&self, eta: f64, data: &[f64]) -> Option<(Vec<Vec<f64>>, SymMat)> {
        let weights = self.weights(eta);
        let mut rows = Vec::with_capacity(data.len());
        let mut node_buf = vec![0.0; self.d];
        for &y in data {
            let mut row = vec![0.0; self.d];
            for (i, t) in self.tables.iter().enumerate() {
                if !t.eval_into(y, &mut node_buf) {
                    return None;
                }
                for c in 0..self.d {
                    row[c] += weights[i] * node_buf[c];
                }
            }
            rows.push(row);
        }
        let mut sigma = SymMat::zeros(self.d);
        for i in 0..self.d {
            for j in i..self.d {
                let v = weights
                    .iter()
                    .zip(&self.sigmas)
                    .map(|(w, s)| w * s.get(i, j))
                    .sum();
                sigma.set(i, j, v);
            }
        }
        Some((rows, sigma))
    }
}

enum CompiledProc {
    Example2 {
        theta0: f64,
        alpha: f64,
    },
    Example3 {
        eta0: f64,
        alpha: f64,
    },
    Simple {
        table: ScoreTable,
        system: ScoreSystem,
        dd: DataDrivenSpec,
    },
    Composite {
        model: Arc<ConvolvedModel>,
        tables: EtaTables,
        dd: DataDrivenSpec,
        eta_floor: f64,
        signal_var0: f64,
        theta0: Vec<f64>,
    },
}

fn compile(spec: &ScenarioSpec) -> Result<CompiledProc> {
    match &spec.procedure {
        Procedure::Example2Plugin { theta0, alpha } => Ok(CompiledProc::Example2 {
            theta0: *theta0,
            alpha: *alpha,
        }),
        Procedure::Example3Plugin { eta0, alpha } => Ok(CompiledProc::Example3 {
            eta0: *eta0,
            alpha: *alpha,
        }),
        Procedure::SimpleNest { model, dd } => {
            model.noise().known()?;
            let system = build_simple_scores(model.clone())?;
            let table = ScoreTable::build(&system, TABLE_POINTS)?;
            Ok(CompiledProc::Simple {
                table,
                system,
                dd: dd.clone(),
            })
        }
        Procedure::CompositeNest {
            model,
            dd,
            eta_floor,
        } => {
            model.noise().parametric()?;
            let theta0 = model.theta_null();
            let signal_var0 = null_signal_variance(model)?;
            // Realizable range of eta_hat^2 = max(s^2 - v0, floor^2):
            // centered at the pseudo-true value under the scenario truth,
            // widened by a kurtosis-padded multiple of the s^2 sampling
            // noise. Estimates outside take the direct path.
            let var_y = spec.signal_truth.variance() + spec.noise_truth.variance();
            let center = var_y - signal_var0;
            let sd_s2 = var_y * (2.5 / spec.n as f64).sqrt();
            let floor2 = eta_floor * eta_floor;
            let lo2 = (center - 5.0 * sd_s2).max(floor2);
            let hi2 = (center + 5.0 * sd_s2).max(floor2 * 2.0);
            let tables = EtaTables::build(model, &theta0, lo2, hi2)?;
            Ok(CompiledProc::Composite {
                model: model.clone(),
                tables,
                dd: dd.clone(),
                eta_floor: *eta_floor,
                signal_var0,
                theta0,
            })
        }
    }
}

impl CompiledProc {
    fn run(&self, data: &[f64]) -> Result<RepOutcome> {
        match self {
            CompiledProc::Example2 { theta0, alpha } => {
                let est = plugin_scores_example2(data, *theta0)?;
                let stat = quadratic_statistic(&est.values, &est.l_hat, StatKind::W)?;
                let d = decide(stat.value, 1, *alpha)?;
                Ok(RepOutcome {
                    statistics: vec![stat.value],
                    selected_s: 1,
                    stat_at_s: stat.value,
                    p_value: d.p_value,
                    reject: d.reject,
                    used_fallback: false,
                })
            }
            CompiledProc::Example3 { eta0, alpha } => {
                let est = plugin_scores_example3(data, *eta0, None)?;
                let stat = quadratic_statistic(&est.values, &est.l_hat, StatKind::W)?;
                let d = decide(stat.value, 1, *alpha)?;
                Ok(RepOutcome {
                    statistics: vec![stat.value],
                    selected_s: 1,
                    stat_at_s: stat.value,
                    p_value: d.p_value,
                    reject: d.reject,
                    used_fallback: false,
                })
            }
            CompiledProc::Simple { table, system, dd } => {
                let mut rows = Vec::with_capacity(data.len());
                let mut fallback = false;
                let mut buf = vec![0.0; system.k()];
                let mut lazy_ev = None;
                for &y in data {
                    if table.eval_into(y, &mut buf) {
                        rows.push(buf.clone());
                    } else {
                        // Rare tail observation outside the table window.
                        fallback = true;
                        let ev = match &lazy_ev {
                            Some(e) => e,
                            None => {
                                lazy_ev = Some(system.evaluator()?);
                                lazy_ev.as_ref().unwrap()
                            }
                        };
                        ev.l_star_into(y, &mut buf)?;
                        rows.push(buf.clone());
                    }
                }
                let report =
                    crate::selection::report_from_rows(&rows, system.sigma(), StatKind::U, data.len(), dd)?;
                Ok(RepOutcome::from_report(&report, fallback))
            }
            CompiledProc::Composite {
                model,
                tables,
                dd,
                eta_floor,
                signal_var0,
                theta0,
            } => {
                let s2 = sample_variance(data)?;
                let eta_hat = (s2 - signal_var0).max(eta_floor * eta_floor).sqrt();
                if tables.covers(eta_hat) {
                    if let Some((rows, sigma)) = tables.rows_and_sigma(eta_hat, data) {
                        let report = crate::selection::report_from_rows(
                            &rows,
                            &sigma,
                            StatKind::W,
                            data.len(),
                            dd,
                        )?;
                        return Ok(RepOutcome::from_report(&report, false));
                    }
                }
                // Direct path: build the plug-in system at this eta_hat.
                let sys = build_efficient_scores(model.clone(), theta0, &[eta_hat])?;
                let est = plugin_scores_at_eta(&sys, data)?;
                let report = crate::selection::report_from_rows(
                    &est.values,
                    sys.sigma(),
                    StatKind::W,
                    data.len(),
                    dd,
                )?;
                Ok(RepOutcome::from_report(&report, true))
            }
        }
    }

}

/// Run every replication of a scenario. Replications execute in parallel;
/// outcomes are indexed by replication, so the aggregate is independent of
/// scheduling.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<Vec<RepOutcome>> {
    if spec.n < 2 {
        return Err(Error::DegenerateSample("scenario needs n >= 2".into()));
    }
    if spec.replications < 1 {
        return Err(Error::DegenerateSample("scenario needs replications >= 1".into()));
    }
    let compiled = compile(spec)?;
    (0..spec.replications)
        .into_par_iter()
        .map(|rep| {
            let data = sample_observations(spec, rep);
            compiled.run(&data)
        })
        .collect()
}

/// Kolmogorov-Smirnov distance between a sample and chi-square(df).
pub fn ks_distance_to_chi2(stats: &[f64], df: usize) -> Result<f64> {
    if stats.is_empty() {
        return Err(Error::DegenerateSample("no statistics".into()));
    }
    let mut sorted = stats.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = chi2_cdf(df, x.max(0.0))?;
        let lo = i as f64 / n;
        let hi = (i as f64 + 1.0) / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    Ok(d)
}

/// Run a null scenario and summarize calibration against the chi-square
/// reference. The caller is responsible for the truth actually being the
/// procedure's null model.
pub fn calibrate_null(spec: &ScenarioSpec) -> Result<CalibrationResult> {
    calibration_from_outcomes(&run_scenario(spec)?)
}

/// Summarize already-computed replication outcomes against chi-square(1).
pub fn calibration_from_outcomes(outcomes: &[RepOutcome]) -> Result<CalibrationResult> {
    if outcomes.is_empty() {
        return Err(Error::DegenerateSample("no replication outcomes".into()));
    }
    let mut stats: Vec<f64> = outcomes.iter().map(|o| o.stat_at_s).collect();
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let reference_df = 1;
    let ks = ks_distance_to_chi2(&stats, reference_df)?;
    let r = outcomes.len() as f64;
    let level = outcomes.iter().filter(|o| o.reject).count() as f64 / r;
    let s1 = outcomes.iter().filter(|o| o.selected_s == 1).count() as f64 / r;
    Ok(CalibrationResult {
        statistics: stats,
        ks_distance: ks,
        reference_df,
        empirical_level: level,
        level_se: (level * (1.0 - level) / r).sqrt(),
        fraction_s_equals_1: s1,
    })
}

/// Rejection rate of the configured test over a grid of sample sizes.
pub fn power_curve(spec: &ScenarioSpec, n_grid: &[usize]) -> Result<Vec<PowerPoint>> {
    let mut out = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let cell = ScenarioSpec {
            n,
            ..spec.clone()
        };
        let outcomes = run_scenario(&cell)?;
        let r = outcomes.len() as f64;
        let rate = outcomes.iter().filter(|o| o.reject).count() as f64 / r;
        out.push(PowerPoint {
            n,
            rejection_rate: rate,
            se: (rate * (1.0 - rate) / r).sqrt(),
        });
    }
    Ok(out)
}

/// How the D1 scan computes expectations under the truth.
#[derive(Debug, Clone)]
pub enum ScanMode {
    /// Deterministic: E l*_i by quadrature against the truth density
    /// (requires both truths to have densities). Components whose absolute
    /// expectation exceeds `tolerance` count as detectable.
    Quadrature { tolerance: f64 },
    /// Large-sample Monte Carlo; a component is detectable when its mean
    /// exceeds `se_multiple` standard errors.
    MonteCarlo {
        n: usize,
        seed: u64,
        se_multiple: f64,
    },
}

impl Default for ScanMode {
    fn default() -> Self {
        ScanMode::Quadrature { tolerance: 1e-6 }
    }
}

/// Result of the D1 scan: expectations of the score components under the
/// truth and the first detectable index K (1-based).
#[derive(Debug, Clone)]
pub struct D1ScanResult {
    pub expectations: Vec<f64>,
    pub tolerances: Vec<f64>,
    /// First index with |E| above tolerance, or None (test predicted
    /// inconsistent up to this dimension).
    pub first_detectable: Option<usize>,
    /// The nonzero expectation at K.
    pub c_k: Option<f64>,
}

/// Scan E_{F*H} l*_i for i = 1..k over the given score system.
pub fn d1_scan(
    signal_truth: &Truth,
    noise_truth: &Truth,
    system: &ScoreSystem,
    mode: &ScanMode,
) -> Result<D1ScanResult> {
    let k = system.k();
    let (expectations, tolerances) = match mode {
        ScanMode::Quadrature { tolerance } => {
            let spec = *system.model().spec();
            if signal_truth.density(0.0).is_none() || noise_truth.density(0.0).is_none() {
                return Err(Error::OutOfDomain(
                    "quadrature scan needs truth densities; use MonteCarlo mode".into(),
                ));
            }
            let w_sig = truncate_support(
                |x| signal_truth.density(x).unwrap_or(0.0),
                signal_truth.support_hint(),
                &spec,
            )?;
            let w_noz = truncate_support(
                |e| noise_truth.density(e).unwrap_or(0.0),
                noise_truth.support_hint(),
                &spec,
            )?;
            let y_window = Interval::new(w_sig.lo + w_noz.lo, w_sig.hi + w_noz.hi)?;
            let ev = system.evaluator()?;
            let mut score_buf = vec![0.0; k];
            let outer = QuadratureSpec {
                rel_tol: spec.rel_tol.max(1e-9),
                abs_tol: spec.abs_tol.max(1e-12),
                ..spec
            };
            let e = integrate_vector(
                |y, out: &mut [f64]| {
                    let p = integrate(
                        |x| {
                            signal_truth.density(x).unwrap_or(0.0)
                                * noise_truth.density(y - x).unwrap_or(0.0)
                        },
                        match w_sig.intersect(&w_noz.reflect_about(y)) {
                            Some(w) => w,
                            None => {
                                out.iter_mut().for_each(|v| *v = 0.0);
                                return;
                            }
                        },
                        &spec,
                    )
                    .unwrap_or(f64::NAN);
                    match ev.l_star_into(y, &mut score_buf) {
                        Ok(_) => {
                            for c in 0..k {
                                out[c] = score_buf[c] * p;
                            }
                        }
                        Err(_) => out.iter_mut().for_each(|v| *v = f64::NAN),
                    }
                },
                k,
                y_window,
                &outer,
            )?;
            (e, vec![*tolerance; k])
        }
        ScanMode::MonteCarlo {
            n,
            seed,
            se_multiple,
        } => {
            let mut xs = RngStream::derive(*seed, 0, StreamRole::Signal);
            let mut es = RngStream::derive(*seed, 0, StreamRole::Noise);
            let ev = system.evaluator()?;
            let mut sums = vec![0.0; k];
            let mut sumsq = vec![0.0; k];
            let mut buf = vec![0.0; k];
            for _ in 0..*n {
                let y = signal_truth.sample(&mut xs) + noise_truth.sample(&mut es);
                ev.l_star_into(y, &mut buf)?;
                for c in 0..k {
                    sums[c] += buf[c];
                    sumsq[c] += buf[c] * buf[c];
                }
            }
            let nf = *n as f64;
            let means: Vec<f64> = sums.iter().map(|s| s / nf).collect();
            let tols: Vec<f64> = (0..k)
                .map(|c| {
                    let var = (sumsq[c] / nf - means[c] * means[c]).max(0.0);
                    se_multiple * (var / nf).sqrt()
                })
                .collect();
            (means, tols)
        }
    };

    let first_detectable = expectations
        .iter()
        .zip(&tolerances)
        .position(|(e, t)| e.abs() > *t)
        .map(|i| i + 1);
    let c_k = first_detectable.map(|i| expectations[i - 1]);
    Ok(D1ScanResult {
        expectations,
        tolerances,
        first_detectable,
        c_k,
    })
}
