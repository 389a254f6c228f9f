//! The observable-density layer.
//!
//! q(y; theta) = int f_theta(s) h(y - s) ds for the simple case and
//! g(y; (theta, eta)) = int f_theta(s) h_eta(y - s) ds for the composite
//! one, together with the raw theta- and eta-score functions. Gradients are
//! taken under the integral sign (gradient of the integrand, then
//! quadrature), never as finite differences of q.
//!
//! All integrals run over a finite window: the truncated signal support
//! intersected with the reflected noise support. Observations whose window
//! is empty or whose density falls below the underflow floor get density 0
//! with a false support indicator, and every score is the zero vector there.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::families::{normal_pdf, NoiseFamily, NoiseModel, SignalFamily, TiltedDensity};
use crate::quadrature::{integrate_vector, truncate_support, Interval, QuadratureSpec};

/// Underflow-only floor: the support indicator of the score formulas
/// concerns genuine support boundaries, and for the built-in families only
/// underflow can produce a vanishing density inside a nonempty window.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Per-tail mass cap for the model's component support windows. Far-tail
/// density values are themselves tiny, so the windows must exclude far
/// less than the generic truncation mass to keep q relatively accurate
/// out to the edge of the plotted range.
const MODEL_WINDOW_MASS: f64 = 1e-16;

/// A density value together with its support indicator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityValue {
    pub value: f64,
    /// False when the convolution window is empty or the value underflowed;
    /// scores are zero exactly where this is false.
    pub positive: bool,
}

impl DensityValue {
    fn zero() -> Self {
        Self {
            value: 0.0,
            positive: false,
        }
    }
}

/// Closed-form N(theta, 1 + sigma^2) density: the convolution of N(theta, 1)
/// signal with N(0, sigma^2) noise. Serves as the oracle for the quadrature
/// path on Gaussian models.
pub fn gaussian_convolution_pdf(theta: f64, noise_sigma: f64, y: f64) -> f64 {
    let var = 1.0 + noise_sigma * noise_sigma;
    normal_pdf((y - theta) / var.sqrt()) / var.sqrt()
}

enum SignalCtx<'a> {
    /// N(mu, 1) location family.
    GaussLoc { mu: f64 },
    /// Exponential family pinned at (possibly zero-padded) theta; nested
    /// levels read only their leading gradient components.
    Tilted { tilt: TiltedDensity<'a> },
    /// Anything else goes through the trait object.
    Generic {
        fam: &'a dyn SignalFamily,
        theta: Vec<f64>,
    },
}

impl SignalCtx<'_> {
    fn density(&self, x: f64) -> f64 {
        match self {
            SignalCtx::GaussLoc { mu } => normal_pdf(x - mu),
            SignalCtx::Tilted { tilt, .. } => tilt.density(x),
            SignalCtx::Generic { fam, theta } => fam.density(theta, x).unwrap_or(f64::NAN),
        }
    }

    fn grad_into(&self, x: f64, out: &mut [f64]) {
        match self {
            SignalCtx::GaussLoc { mu } => {
                let z = x - mu;
                out[0] = z * normal_pdf(z);
            }
            SignalCtx::Tilted { tilt, .. } => tilt.grad_into(x, out),
            SignalCtx::Generic { fam, theta } => match fam.grad_theta(theta, x) {
                Ok(g) => out.copy_from_slice(&g[..out.len()]),
                Err(_) => out.iter_mut().for_each(|v| *v = f64::NAN),
            },
        }
    }
}

enum NoiseCtx<'a> {
    Gauss { sigma: f64 },
    Known(&'a dyn crate::families::KnownNoise),
    Param {
        fam: &'a dyn NoiseFamily,
        eta: Vec<f64>,
    },
    /// Gaussian scale family at a fixed eta, with the analytic eta-gradient.
    ParamGauss { sigma: f64 },
}

impl NoiseCtx<'_> {
    fn density(&self, e: f64) -> f64 {
        match self {
            NoiseCtx::Gauss { sigma } | NoiseCtx::ParamGauss { sigma } => {
                normal_pdf(e / sigma) / sigma
            }
            NoiseCtx::Known(h) => h.density(e),
            NoiseCtx::Param { fam, eta } => fam.density(eta, e).unwrap_or(f64::NAN),
        }
    }

    fn grad_into(&self, e: f64, out: &mut [f64]) {
        match self {
            NoiseCtx::ParamGauss { sigma } => {
                let h = normal_pdf(e / sigma) / sigma;
                out[0] = h * (e * e / (sigma * sigma * sigma) - 1.0 / sigma);
            }
            NoiseCtx::Param { fam, eta } => match fam.grad_eta(eta, e) {
                Ok(g) => out.copy_from_slice(&g),
                Err(_) => out.iter_mut().for_each(|v| *v = f64::NAN),
            },
            _ => {}
        }
    }
}

/// Convolution model q / g with score functions.
pub struct ConvolvedModel {
    signal: Arc<dyn SignalFamily>,
    noise: NoiseModel,
    spec: QuadratureSpec,
    signal_windows: RwLock<HashMap<Vec<u64>, Interval>>,
    noise_windows: RwLock<HashMap<Vec<u64>, Interval>>,
}

fn bits_key(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

impl ConvolvedModel {
    pub fn new(
        signal: Arc<dyn SignalFamily>,
        noise: NoiseModel,
        spec: QuadratureSpec,
    ) -> Result<Self> {
        let model = Self {
            signal,
            noise,
            spec,
            signal_windows: RwLock::new(HashMap::new()),
            noise_windows: RwLock::new(HashMap::new()),
        };
        // Warm the windows at the null so later failures surface here.
        let theta0 = model.signal.theta_null();
        model.signal_window(&theta0)?;
        match &model.noise {
            NoiseModel::Known(_) => {
                model.noise_window(None)?;
            }
            NoiseModel::Parametric(h) => {
                model.noise_window(Some(&h.eta_null()))?;
            }
        }
        Ok(model)
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    pub fn signal(&self) -> &Arc<dyn SignalFamily> {
        &self.signal
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn theta_dim(&self) -> usize {
        self.signal.dim()
    }

    pub fn theta_null(&self) -> Vec<f64> {
        self.signal.theta_null()
    }

    fn window_spec(&self) -> QuadratureSpec {
        QuadratureSpec {
            truncation_mass: self.spec.truncation_mass.min(MODEL_WINDOW_MASS),
            ..self.spec
        }
    }

    fn signal_window(&self, theta: &[f64]) -> Result<Interval> {
        let key = bits_key(theta);
        if let Some(w) = self.signal_windows.read().expect("lock").get(&key) {
            return Ok(*w);
        }
        let theta_owned = theta.to_vec();
        let fam = self.signal.clone();
        let w = truncate_support(
            move |x| fam.density(&theta_owned, x).unwrap_or(0.0),
            self.signal.support_hint(),
            &self.window_spec(),
        )?;
        self.signal_windows.write().expect("lock").insert(key, w);
        Ok(w)
    }

    fn noise_window(&self, eta: Option<&[f64]>) -> Result<Interval> {
        let key = eta.map(bits_key).unwrap_or_default();
        if let Some(w) = self.noise_windows.read().expect("lock").get(&key) {
            return Ok(*w);
        }
        let w = match (&self.noise, eta) {
            (NoiseModel::Known(h), None) => {
                let hint = h.support_hint();
                let h = h.clone();
                truncate_support(move |e| h.density(e), hint, &self.window_spec())?
            }
            (NoiseModel::Parametric(h), Some(eta)) => {
                let h = h.clone();
                let eta_owned = eta.to_vec();
                let hint = h.support_hint(eta);
                truncate_support(
                    move |e| h.density(&eta_owned, e).unwrap_or(0.0),
                    hint,
                    &self.window_spec(),
                )?
            }
            (NoiseModel::Known(_), Some(_)) => return Err(Error::NotParametricNoise),
            (NoiseModel::Parametric(_), None) => return Err(Error::KnownNoiseRequired),
        };
        self.noise_windows.write().expect("lock").insert(key, w);
        Ok(w)
    }

    /// Prepared evaluator for repeated density/score calls at one parameter
    /// point. `eta` must be None exactly when the noise is known.
    pub fn prepare(&self, theta: &[f64], eta: Option<&[f64]>) -> Result<ModelEvaluator<'_>> {
        if theta.len() != self.signal.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.signal.dim(),
                got: theta.len(),
            });
        }
        // Validate parameters eagerly so integrand closures cannot hide
        // domain errors behind NaNs.
        let probe = 0.5 * (self.signal.support_hint().lo + self.signal.support_hint().hi);
        self.signal.density(theta, probe)?;

        let sig_ctx = if self.signal.unit_gaussian_location() {
            SignalCtx::GaussLoc { mu: theta[0] }
        } else if let Some((fam, _)) = self.signal.exp_family_parts() {
            let mut padded = vec![0.0; fam.dim()];
            padded[..theta.len()].copy_from_slice(theta);
            SignalCtx::Tilted {
                tilt: fam.at_theta(&padded)?,
            }
        } else {
            SignalCtx::Generic {
                fam: self.signal.as_ref(),
                theta: theta.to_vec(),
            }
        };

        let (noise_ctx, m) = match (&self.noise, eta) {
            (NoiseModel::Known(h), None) => {
                let ctx = match h.gaussian_sigma() {
                    Some(sigma) => NoiseCtx::Gauss { sigma },
                    None => NoiseCtx::Known(h.as_ref()),
                };
                (ctx, 0)
            }
            (NoiseModel::Parametric(h), Some(eta)) => {
                if eta.len() != h.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: h.dim(),
                        got: eta.len(),
                    });
                }
                h.density(eta, 0.0)?;
                let ctx = match h.gaussian_sigma_at(eta) {
                    Some(sigma) => NoiseCtx::ParamGauss { sigma },
                    None => NoiseCtx::Param {
                        fam: h.as_ref(),
                        eta: eta.to_vec(),
                    },
                };
                (ctx, h.dim())
            }
            (NoiseModel::Known(_), Some(_)) => return Err(Error::NotParametricNoise),
            (NoiseModel::Parametric(_), None) => return Err(Error::KnownNoiseRequired),
        };

        Ok(ModelEvaluator {
            spec: self.spec,
            sig_ctx,
            noise_ctx,
            sig_window: self.signal_window(theta)?,
            noise_window: self.noise_window(eta)?,
            k: theta.len(),
            m,
        })
    }

    /// Observable density for the simple (known-noise) case.
    pub fn q_density(&self, theta: &[f64], y: f64) -> Result<DensityValue> {
        self.noise.known()?;
        self.prepare(theta, None)?.density(y)
    }

    /// Observable density for the composite (parametric-noise) case.
    pub fn g_density(&self, theta: &[f64], eta: &[f64], y: f64) -> Result<DensityValue> {
        self.noise.parametric()?;
        self.prepare(theta, Some(eta))?.density(y)
    }

    /// Raw theta-score for the simple case.
    pub fn score_theta(&self, theta: &[f64], y: f64) -> Result<Vec<f64>> {
        self.noise.known()?;
        let ev = self.prepare(theta, None)?;
        let mut out = vec![0.0; ev.k];
        ev.scores_into(y, &mut out, &mut [])?;
        Ok(out)
    }

    /// Raw theta-score at (theta, eta) for the composite case.
    pub fn score_theta_at(&self, theta: &[f64], eta: &[f64], y: f64) -> Result<Vec<f64>> {
        self.noise.parametric()?;
        let ev = self.prepare(theta, Some(eta))?;
        let mut out = vec![0.0; ev.k];
        let mut eta_out = vec![0.0; ev.m];
        ev.scores_into(y, &mut out, &mut eta_out)?;
        Ok(out)
    }

    /// Raw eta-score at (theta, eta).
    pub fn score_eta(&self, theta: &[f64], eta: &[f64], y: f64) -> Result<Vec<f64>> {
        self.noise.parametric()?;
        let ev = self.prepare(theta, Some(eta))?;
        let mut th = vec![0.0; ev.k];
        let mut out = vec![0.0; ev.m];
        ev.scores_into(y, &mut th, &mut out)?;
        Ok(out)
    }

    /// Window carrying the observable density mass: signal window plus
    /// noise window (Minkowski sum of the truncated supports).
    pub fn observation_window(&self, theta: &[f64], eta: Option<&[f64]>) -> Result<Interval> {
        let s = self.signal_window(theta)?;
        let h = self.noise_window(eta)?;
        Interval::new(s.lo + h.lo, s.hi + h.hi)
    }
}

/// Evaluator with parameter contexts and windows resolved once.
pub struct ModelEvaluator<'a> {
    spec: QuadratureSpec,
    sig_ctx: SignalCtx<'a>,
    noise_ctx: NoiseCtx<'a>,
    sig_window: Interval,
    noise_window: Interval,
    k: usize,
    m: usize,
}

impl ModelEvaluator<'_> {
    pub fn theta_dim(&self) -> usize {
        self.k
    }

    pub fn eta_dim(&self) -> usize {
        self.m
    }

    /// Truncated (signal, noise) supports backing the convolution windows.
    pub fn windows(&self) -> (Interval, Interval) {
        (self.sig_window, self.noise_window)
    }

    pub fn noise_density(&self, e: f64) -> f64 {
        self.noise_ctx.density(e)
    }

    pub fn signal_density(&self, x: f64) -> f64 {
        self.sig_ctx.density(x)
    }

    fn window_at(&self, y: f64) -> Option<Interval> {
        self.sig_window
            .intersect(&self.noise_window.reflect_about(y))
    }

    /// Observable density with support indicator.
    pub fn density(&self, y: f64) -> Result<DensityValue> {
        let Some(window) = self.window_at(y) else {
            return Ok(DensityValue::zero());
        };
        // Densities are driven on relative tolerance alone so the far tails
        // come out relatively accurate too; the roundoff floor keeps a zero
        // absolute tolerance reachable.
        let dspec = QuadratureSpec {
            abs_tol: 0.0,
            ..self.spec
        };
        let v = crate::quadrature::integrate(
            |s| self.sig_ctx.density(s) * self.noise_ctx.density(y - s),
            window,
            &dspec,
        )?;
        if v <= DENSITY_FLOOR {
            return Ok(DensityValue::zero());
        }
        Ok(DensityValue {
            value: v,
            positive: true,
        })
    }

    /// Fills the theta-score (and eta-score when the model is composite) at
    /// y, sharing one adaptive pass across numerators and denominator.
    /// Returns the density value; scores are zero when its indicator is
    /// false.
    pub fn scores_into(
        &self,
        y: f64,
        theta_out: &mut [f64],
        eta_out: &mut [f64],
    ) -> Result<DensityValue> {
        if theta_out.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: theta_out.len(),
            });
        }
        if eta_out.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: eta_out.len(),
            });
        }
        theta_out.iter_mut().for_each(|v| *v = 0.0);
        eta_out.iter_mut().for_each(|v| *v = 0.0);

        let Some(window) = self.window_at(y) else {
            return Ok(DensityValue::zero());
        };
        let k = self.k;
        let m = self.m;
        let mut grad_buf = vec![0.0; k.max(1)];
        let mut eta_buf = vec![0.0; m.max(1)];
        // Components: [ dtheta_j f * h (k), f * deta_j h (m), f * h (1) ].
        let raw = integrate_vector(
            |s, out: &mut [f64]| {
                let f = self.sig_ctx.density(s);
                let e = y - s;
                let h = self.noise_ctx.density(e);
                self.sig_ctx.grad_into(s, &mut grad_buf[..k]);
                for j in 0..k {
                    out[j] = grad_buf[j] * h;
                }
                if m > 0 {
                    self.noise_ctx.grad_into(e, &mut eta_buf[..m]);
                    for j in 0..m {
                        out[k + j] = f * eta_buf[j];
                    }
                }
                out[k + m] = f * h;
            },
            k + m + 1,
            window,
            &self.spec,
        )?;
        let denom = raw[k + m];
        if denom <= DENSITY_FLOOR {
            return Ok(DensityValue::zero());
        }
        for j in 0..k {
            theta_out[j] = raw[j] / denom;
        }
        for j in 0..m {
            eta_out[j] = raw[k + j] / denom;
        }
        Ok(DensityValue {
            value: denom,
            positive: true,
        })
    }
}
