//! Parametric signal families and noise models.
//!
//! The signal side provides the Gaussian location family and exponential
//! families `f_theta(x) = f0(x) b(theta) exp(theta . u(x))` with a
//! quadrature-backed normalizer. The nested system used by the selection
//! rule is the centered orthonormal cosine basis `u_j(x) = sqrt(2)
//! cos(j pi F0(x))`, which is orthonormal under f0 whenever F0 is the CDF
//! of f0. The noise side is either a fixed known density or a parametric
//! family with an eta-gradient.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_vector, truncate_support, Interval, QuadratureSpec};

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF via erfc.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Admissible box for exponential-family parameters.
pub const THETA_BOX: f64 = 5.0;

/// A parametric family of signal densities {f_theta}.
pub trait SignalFamily: Send + Sync {
    /// Parameter dimension k.
    fn dim(&self) -> usize;

    /// Starting window for support truncation.
    fn support_hint(&self) -> Interval;

    /// The null parameter value (zero in the simple case).
    fn theta_null(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn density(&self, theta: &[f64], x: f64) -> Result<f64>;

    /// Gradient of the density in theta. The default is central differences
    /// with step 1e-5 * max(1, |theta_j|); families with analytic structure
    /// override it.
    fn grad_theta(&self, theta: &[f64], x: f64) -> Result<Vec<f64>> {
        let k = self.dim();
        check_dim(k, theta)?;
        let mut grad = vec![0.0; k];
        let mut probe = theta.to_vec();
        for j in 0..k {
            let h = 1e-5 * theta[j].abs().max(1.0);
            probe[j] = theta[j] + h;
            let up = self.density(&probe, x)?;
            probe[j] = theta[j] - h;
            let down = self.density(&probe, x)?;
            probe[j] = theta[j];
            grad[j] = (up - down) / (2.0 * h);
        }
        Ok(grad)
    }

    /// Fast-path hook: the backing exponential family and the visible
    /// parameter dimension, when this family is (a level of) one.
    fn exp_family_parts(&self) -> Option<(&ExponentialFamily, usize)> {
        None
    }

    /// Fast-path hook: true for the unit-variance Gaussian location family.
    fn unit_gaussian_location(&self) -> bool {
        false
    }
}

fn check_dim(expected: usize, v: &[f64]) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

/// The {N(theta, 1)} location family of the Gaussian examples.
#[derive(Debug, Clone)]
pub struct GaussianLocation {
    theta0: f64,
}

impl GaussianLocation {
    pub fn new(theta0: f64) -> Self {
        Self { theta0 }
    }
}

impl SignalFamily for GaussianLocation {
    fn dim(&self) -> usize {
        1
    }

    fn support_hint(&self) -> Interval {
        Interval {
            lo: self.theta0 - 8.0,
            hi: self.theta0 + 8.0,
        }
    }

    fn theta_null(&self) -> Vec<f64> {
        vec![self.theta0]
    }

    fn density(&self, theta: &[f64], x: f64) -> Result<f64> {
        check_dim(1, theta)?;
        Ok(normal_pdf(x - theta[0]))
    }

    fn grad_theta(&self, theta: &[f64], x: f64) -> Result<Vec<f64>> {
        check_dim(1, theta)?;
        let z = x - theta[0];
        Ok(vec![z * normal_pdf(z)])
    }

    fn unit_gaussian_location(&self) -> bool {
        true
    }
}

type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

struct TiltCache {
    /// b(theta).
    normalizer: f64,
    /// E_theta u_j under f_theta, j = 1..k.
    basis_means: Vec<f64>,
}

/// Exponential family f_theta = f0 * b(theta) * exp(theta . u) with the
/// normalizer and tilted basis means computed by quadrature and cached per
/// theta. The cache is last-writer-wins: values are deterministic, so
/// concurrent recomputation is benign.
pub struct ExponentialFamily {
    base: DensityFn,
    basis: Vec<DensityFn>,
    window: Interval,
    spec: QuadratureSpec,
    cache: RwLock<HashMap<Vec<u64>, Arc<TiltCache>>>,
}

impl ExponentialFamily {
    /// `base` must be a normalized density; its support is truncated once
    /// here and reused for every normalizer integral.
    pub fn new(
        base: DensityFn,
        support_hint: Interval,
        basis: Vec<DensityFn>,
        spec: QuadratureSpec,
    ) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::OutOfDomain("basis must have at least one function".into()));
        }
        let window = truncate_support(base.as_ref(), support_hint, &spec)?;
        Ok(Self {
            base,
            basis,
            window,
            spec,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn base_window(&self) -> Interval {
        self.window
    }

    pub fn base_value(&self, x: f64) -> f64 {
        (self.base)(x)
    }

    pub fn basis_value(&self, j: usize, x: f64) -> f64 {
        (self.basis[j])(x)
    }

    /// Prefetched evaluation context for hot loops: no cache lookups or
    /// allocations per point.
    pub fn at_theta(&self, theta: &[f64]) -> Result<TiltedDensity<'_>> {
        self.check_admissible(theta)?;
        let cache = self.cached_tilt(theta)?;
        Ok(TiltedDensity {
            fam: self,
            theta: theta.to_vec(),
            normalizer: cache.normalizer,
            basis_means: cache.basis_means.clone(),
        })
    }

    fn check_admissible(&self, theta: &[f64]) -> Result<()> {
        check_dim(self.basis.len(), theta)?;
        for (j, t) in theta.iter().enumerate() {
            if !t.is_finite() || t.abs() > THETA_BOX {
                return Err(Error::OutOfDomain(format!(
                    "theta[{j}] = {t} outside the admissible box |theta| <= {THETA_BOX}"
                )));
            }
        }
        Ok(())
    }

    fn tilt(&self, theta: &[f64], x: f64) -> f64 {
        theta
            .iter()
            .zip(&self.basis)
            .map(|(t, u)| t * u(x))
            .sum()
    }

    fn cached_tilt(&self, theta: &[f64]) -> Result<Arc<TiltCache>> {
        let key: Vec<u64> = theta.iter().map(|t| t.to_bits()).collect();
        if let Some(hit) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let k = self.basis.len();
        let entry = if theta.iter().all(|&t| t == 0.0) {
            // exp(0) = 1 and f0 is normalized, so b(0) = 1 exactly.
            let means = integrate_vector(
                |x, out| {
                    let f0 = (self.base)(x);
                    for j in 0..k {
                        out[j] = f0 * (self.basis[j])(x);
                    }
                },
                k,
                self.window,
                &self.spec,
            )?;
            TiltCache {
                normalizer: 1.0,
                basis_means: means,
            }
        } else {
            // One pass: [ f0 exp(tilt), f0 u_1 exp(tilt), .., f0 u_k exp(tilt) ].
            let raw = integrate_vector(
                |x, out| {
                    let f0 = (self.base)(x);
                    let w = f0 * self.tilt(theta, x).exp();
                    out[0] = w;
                    for j in 0..k {
                        out[j + 1] = w * (self.basis[j])(x);
                    }
                },
                k + 1,
                self.window,
                &self.spec,
            )
            .map_err(|e| Error::Divergent(format!("normalizer integral failed: {e}")))?;
            let mass = raw[0];
            if !mass.is_finite() || mass <= 0.0 {
                return Err(Error::Divergent(format!(
                    "normalizing integral evaluated to {mass}"
                )));
            }
            TiltCache {
                normalizer: 1.0 / mass,
                basis_means: raw[1..].iter().map(|m| m / mass).collect(),
            }
        };
        let entry = Arc::new(entry);
        self.cache
            .write()
            .expect("cache lock")
            .insert(key, entry.clone());
        Ok(entry)
    }

    /// The normalizing factor b(theta).
    pub fn normalizer(&self, theta: &[f64]) -> Result<f64> {
        self.check_admissible(theta)?;
        Ok(self.cached_tilt(theta)?.normalizer)
    }

    /// E_theta u_j for j = 1..k (equals E_0 u at theta = 0).
    pub fn basis_means(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_admissible(theta)?;
        Ok(self.cached_tilt(theta)?.basis_means.clone())
    }
}

impl SignalFamily for ExponentialFamily {
    fn dim(&self) -> usize {
        self.basis.len()
    }

    fn support_hint(&self) -> Interval {
        self.window
    }

    fn density(&self, theta: &[f64], x: f64) -> Result<f64> {
        self.check_admissible(theta)?;
        let cache = self.cached_tilt(theta)?;
        Ok((self.base)(x) * cache.normalizer * self.tilt(theta, x).exp())
    }

    /// d/dtheta_j f_theta = f_theta * (u_j - E_theta u_j).
    fn grad_theta(&self, theta: &[f64], x: f64) -> Result<Vec<f64>> {
        self.check_admissible(theta)?;
        let cache = self.cached_tilt(theta)?;
        let f = (self.base)(x) * cache.normalizer * self.tilt(theta, x).exp();
        Ok(self
            .basis
            .iter()
            .zip(&cache.basis_means)
            .map(|(u, mean)| f * (u(x) - mean))
            .collect())
    }

    fn exp_family_parts(&self) -> Option<(&ExponentialFamily, usize)> {
        Some((self, self.dim()))
    }
}

/// Exponential-family density pinned at one theta, with the normalizer and
/// tilted basis means resolved up front.
pub struct TiltedDensity<'a> {
    fam: &'a ExponentialFamily,
    theta: Vec<f64>,
    normalizer: f64,
    basis_means: Vec<f64>,
}

impl TiltedDensity<'_> {
    pub fn density(&self, x: f64) -> f64 {
        self.fam.base_value(x) * self.normalizer * self.fam.tilt(&self.theta, x).exp()
    }

    /// Writes d/dtheta_j f_theta for j < out.len() (a leading submodel when
    /// out is shorter than the full dimension).
    pub fn grad_into(&self, x: f64, out: &mut [f64]) {
        let f = self.density(x);
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = f * (self.fam.basis_value(j, x) - self.basis_means[j]);
        }
    }
}

/// Nested family Theta_1 subset Theta_2 subset .. built from one full-rank
/// exponential family; every level shares the same code path, so the
/// zero-padding identity between levels is exact.
#[derive(Clone)]
pub struct NestedFamily {
    full: Arc<ExponentialFamily>,
    d: usize,
}

impl NestedFamily {
    pub fn max_dim(&self) -> usize {
        self.d
    }

    pub fn full(&self) -> &Arc<ExponentialFamily> {
        &self.full
    }

    /// The k-dimensional submodel, 1 <= k <= d.
    pub fn level(&self, k: usize) -> Result<NestedLevel> {
        if k < 1 || k > self.d {
            return Err(Error::OutOfDomain(format!(
                "nested level {k} outside 1..={}",
                self.d
            )));
        }
        Ok(NestedLevel {
            full: self.full.clone(),
            k,
        })
    }
}

/// View of the leading-k submodel of a nested family.
#[derive(Clone)]
pub struct NestedLevel {
    full: Arc<ExponentialFamily>,
    k: usize,
}

impl NestedLevel {
    fn pad(&self, theta: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.k, theta)?;
        let mut padded = vec![0.0; self.full.dim()];
        padded[..self.k].copy_from_slice(theta);
        Ok(padded)
    }
}

impl SignalFamily for NestedLevel {
    fn dim(&self) -> usize {
        self.k
    }

    fn support_hint(&self) -> Interval {
        self.full.support_hint()
    }

    fn density(&self, theta: &[f64], x: f64) -> Result<f64> {
        self.full.density(&self.pad(theta)?, x)
    }

    fn grad_theta(&self, theta: &[f64], x: f64) -> Result<Vec<f64>> {
        let mut g = self.full.grad_theta(&self.pad(theta)?, x)?;
        g.truncate(self.k);
        Ok(g)
    }

    fn exp_family_parts(&self) -> Option<(&ExponentialFamily, usize)> {
        Some((&self.full, self.k))
    }
}

/// Build the nested cosine system u_j(x) = sqrt(2) cos(j pi F0(x)), j = 1..d.
///
/// `cdf` must be strictly increasing on the support of `f0`; it is probed on
/// a grid and a violation surfaces as [`Error::BadCdf`]. The basis is
/// centered (E_0 u_j = 0) and orthonormal under f0.
pub fn make_nested_cosine_family(
    f0: DensityFn,
    cdf: DensityFn,
    support_hint: Interval,
    d: usize,
    spec: QuadratureSpec,
) -> Result<NestedFamily> {
    if d < 1 {
        return Err(Error::OutOfDomain("nested family needs d >= 1".into()));
    }
    // Probe strict monotonicity inside the hint.
    let probes = 41;
    let step = support_hint.width() / (probes - 1) as f64;
    let mut prev = cdf(support_hint.lo);
    for i in 1..probes {
        let x = support_hint.lo + step * i as f64;
        let v = cdf(x);
        if !(v > prev) {
            return Err(Error::BadCdf { x });
        }
        prev = v;
    }

    let basis: Vec<DensityFn> = (1..=d)
        .map(|j| {
            let cdf = cdf.clone();
            let jf = j as f64;
            Arc::new(move |x: f64| {
                std::f64::consts::SQRT_2 * (jf * std::f64::consts::PI * cdf(x)).cos()
            }) as DensityFn
        })
        .collect();

    let full = Arc::new(ExponentialFamily::new(f0, support_hint, basis, spec)?);
    Ok(NestedFamily { full, d })
}

/// Cosine nest over the uniform [0, 1] base: F0(x) = x.
pub fn cosine_nest_uniform(d: usize, spec: QuadratureSpec) -> Result<NestedFamily> {
    let f0: DensityFn = Arc::new(|x: f64| if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 });
    let cdf: DensityFn = Arc::new(|x: f64| x.clamp(0.0, 1.0));
    make_nested_cosine_family(f0, cdf, Interval { lo: 0.0, hi: 1.0 }, d, spec)
}

/// Cosine nest over the standard normal base: F0 = Phi.
pub fn cosine_nest_gaussian(d: usize, spec: QuadratureSpec) -> Result<NestedFamily> {
    let f0: DensityFn = Arc::new(normal_pdf);
    let cdf: DensityFn = Arc::new(normal_cdf);
    make_nested_cosine_family(f0, cdf, Interval { lo: -8.0, hi: 8.0 }, d, spec)
}

/// A fixed, known noise density (the simple case).
pub trait KnownNoise: Send + Sync {
    fn density(&self, e: f64) -> f64;
    fn support_hint(&self) -> Interval;

    /// Fast-path hook: Some(sigma) for centered Gaussian noise.
    fn gaussian_sigma(&self) -> Option<f64> {
        None
    }
}

/// A parametric noise family {h_eta} (the composite case).
pub trait NoiseFamily: Send + Sync {
    /// Nuisance dimension m.
    fn dim(&self) -> usize;
    /// Reference nuisance value for diagnostics and defaults.
    fn eta_null(&self) -> Vec<f64>;
    fn density(&self, eta: &[f64], e: f64) -> Result<f64>;
    fn grad_eta(&self, eta: &[f64], e: f64) -> Result<Vec<f64>>;
    fn support_hint(&self, eta: &[f64]) -> Interval;

    /// Fast-path hook: Some(sigma) when h_eta is the centered Gaussian
    /// scale family.
    fn gaussian_sigma_at(&self, _eta: &[f64]) -> Option<f64> {
        None
    }
}

/// Either a known density h or a parametric family {h_eta}.
#[derive(Clone)]
pub enum NoiseModel {
    Known(Arc<dyn KnownNoise>),
    Parametric(Arc<dyn NoiseFamily>),
}

impl NoiseModel {
    pub fn is_parametric(&self) -> bool {
        matches!(self, NoiseModel::Parametric(_))
    }

    pub fn known(&self) -> Result<&Arc<dyn KnownNoise>> {
        match self {
            NoiseModel::Known(h) => Ok(h),
            NoiseModel::Parametric(_) => Err(Error::KnownNoiseRequired),
        }
    }

    pub fn parametric(&self) -> Result<&Arc<dyn NoiseFamily>> {
        match self {
            NoiseModel::Parametric(h) => Ok(h),
            NoiseModel::Known(_) => Err(Error::NotParametricNoise),
        }
    }

    pub fn eta_null(&self) -> Option<Vec<f64>> {
        match self {
            NoiseModel::Known(_) => None,
            NoiseModel::Parametric(h) => Some(h.eta_null()),
        }
    }
}

/// N(0, sigma^2) noise with sigma fixed and known.
#[derive(Debug, Clone)]
pub struct KnownGaussianNoise {
    pub sigma: f64,
}

impl KnownNoise for KnownGaussianNoise {
    fn density(&self, e: f64) -> f64 {
        normal_pdf(e / self.sigma) / self.sigma
    }

    fn support_hint(&self) -> Interval {
        Interval {
            lo: -8.0 * self.sigma,
            hi: 8.0 * self.sigma,
        }
    }

    fn gaussian_sigma(&self) -> Option<f64> {
        Some(self.sigma)
    }
}

/// Uniform noise on [lo, hi] (mean-centered inputs are the caller's business).
#[derive(Debug, Clone)]
pub struct KnownUniformNoise {
    pub lo: f64,
    pub hi: f64,
}

impl KnownNoise for KnownUniformNoise {
    fn density(&self, e: f64) -> f64 {
        if e >= self.lo && e <= self.hi {
            1.0 / (self.hi - self.lo)
        } else {
            0.0
        }
    }

    fn support_hint(&self) -> Interval {
        Interval {
            lo: self.lo,
            hi: self.hi,
        }
    }
}

/// The {N(0, eta^2)} scale family of the Gaussian examples.
#[derive(Debug, Clone)]
pub struct GaussianScaleFamily {
    eta0: f64,
}

impl GaussianScaleFamily {
    pub fn new(eta0: f64) -> Result<Self> {
        if !(eta0 > 0.0) {
            return Err(Error::OutOfDomain(format!("eta0 must be > 0, got {eta0}")));
        }
        Ok(Self { eta0 })
    }
}

impl NoiseFamily for GaussianScaleFamily {
    fn dim(&self) -> usize {
        1
    }

    fn eta_null(&self) -> Vec<f64> {
        vec![self.eta0]
    }

    fn density(&self, eta: &[f64], e: f64) -> Result<f64> {
        check_dim(1, eta)?;
        let s = eta[0];
        if !(s > 0.0) {
            return Err(Error::OutOfDomain(format!("eta must be > 0, got {s}")));
        }
        Ok(normal_pdf(e / s) / s)
    }

    /// d/deta [phi(e/eta)/eta] = h(e) (e^2/eta^3 - 1/eta).
    fn grad_eta(&self, eta: &[f64], e: f64) -> Result<Vec<f64>> {
        let h = self.density(eta, e)?;
        let s = eta[0];
        Ok(vec![h * (e * e / (s * s * s) - 1.0 / s)])
    }

    fn support_hint(&self, eta: &[f64]) -> Interval {
        let s = eta.first().copied().unwrap_or(self.eta0).abs().max(1e-3);
        Interval {
            lo: -8.0 * s,
            hi: 8.0 * s,
        }
    }

    fn gaussian_sigma_at(&self, eta: &[f64]) -> Option<f64> {
        eta.first().copied().filter(|s| *s > 0.0)
    }
}

/// The Gaussian examples' signal family {N(theta, 1)} at null theta0.
pub fn gaussian_location_family(theta0: f64) -> GaussianLocation {
    GaussianLocation::new(theta0)
}

/// The Gaussian examples' noise family {N(0, eta^2)}.
pub fn gaussian_noise_family(eta0: f64) -> Result<NoiseModel> {
    Ok(NoiseModel::Parametric(Arc::new(GaussianScaleFamily::new(
        eta0,
    )?)))
}

/// Known N(0, sigma^2) noise for the simple case.
pub fn known_gaussian_noise(sigma: f64) -> Result<NoiseModel> {
    if !(sigma > 0.0) {
        return Err(Error::OutOfDomain(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(NoiseModel::Known(Arc::new(KnownGaussianNoise { sigma })))
}

/// Numerical diagnostics for a noise model: unit mass, mean zero, finite
/// variance (checked at eta_null for parametric families).
pub fn validate_noise_model(noise: &NoiseModel, spec: &QuadratureSpec) -> Result<()> {
    let (density, hint): (DensityFn, Interval) = match noise {
        NoiseModel::Known(h) => {
            let h = h.clone();
            let hint = h.support_hint();
            (Arc::new(move |e: f64| h.density(e)), hint)
        }
        NoiseModel::Parametric(h) => {
            let eta = h.eta_null();
            let hint = h.support_hint(&eta);
            let h = h.clone();
            (
                Arc::new(move |e: f64| h.density(&eta, e).unwrap_or(f64::NAN)),
                hint,
            )
        }
    };
    let window = truncate_support(density.as_ref(), hint, spec)?;
    let moments = integrate_vector(
        |e, out| {
            let h = density(e);
            out[0] = h;
            out[1] = e * h;
            out[2] = e * e * h;
        },
        3,
        window,
        spec,
    )?;
    if (moments[0] - 1.0).abs() > 1e-6 {
        return Err(Error::OutOfDomain(format!(
            "noise density mass is {:.8}, expected 1",
            moments[0]
        )));
    }
    if moments[1].abs() > 1e-6 {
        return Err(Error::OutOfDomain(format!(
            "noise mean is {:.2e}, expected 0",
            moments[1]
        )));
    }
    if !(moments[2].is_finite() && moments[2] > 0.0) {
        return Err(Error::OutOfDomain(format!(
            "noise variance {} must be positive and finite",
            moments[2]
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn gaussian_location_values() {
        let fam = gaussian_location_family(0.0);
        let d = fam.density(&[0.0], 0.0).unwrap();
        assert!((d - 0.3989422804014327).abs() < 1e-12);
        let g = fam.grad_theta(&[0.0], 1.0).unwrap();
        assert!((g[0] - 0.24197072451914337).abs() < 1e-12);
    }

    #[test]
    fn gaussian_noise_matches_location_at_unit_scale() {
        let noise = gaussian_noise_family(1.0).unwrap();
        let fam = gaussian_location_family(0.0);
        let h = noise.parametric().unwrap();
        for &e in &[-2.0, -0.3, 0.0, 0.7, 3.1] {
            let a = h.density(&[1.0], e).unwrap();
            let b = fam.density(&[0.0], e).unwrap();
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_tilt_shifts_mean() {
        // f0 = N(0,1), u = x: tilting by theta gives N(theta, 1).
        let f0: DensityFn = Arc::new(normal_pdf);
        let u: DensityFn = Arc::new(|x| x);
        let fam = ExponentialFamily::new(
            f0,
            Interval { lo: -8.0, hi: 8.0 },
            vec![u],
            spec(),
        )
        .unwrap();
        let v = fam.density(&[1.0], 0.0).unwrap();
        assert!((v - 0.24197072451914337).abs() < 1e-8, "got {v}");
        assert_eq!(fam.normalizer(&[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn uniform_cosine_normalizer_matches_riemann_oracle() {
        let nest = cosine_nest_uniform(1, spec()).unwrap();
        let fam = nest.full();
        let b = fam.normalizer(&[0.2]).unwrap();
        // Independent fine-grid Riemann midpoint oracle for 1/b.
        let n = 2_000_000;
        let mut acc = 0.0;
        for i in 0..n {
            let t = (i as f64 + 0.5) / n as f64;
            acc += (0.2 * std::f64::consts::SQRT_2 * (std::f64::consts::PI * t).cos()).exp();
        }
        let oracle = 1.0 / (acc / n as f64);
        assert!((b - oracle).abs() < 1e-9, "b {b} oracle {oracle}");
        let v = fam.density(&[0.2], 0.5).unwrap();
        assert!((v - oracle).abs() < 1e-9, "density at the basis zero is b itself");
    }

    #[test]
    fn cosine_basis_centered_and_orthonormal() {
        let nest = cosine_nest_uniform(3, spec()).unwrap();
        let fam = nest.full();
        let means = fam.basis_means(&[0.0, 0.0, 0.0]).unwrap();
        for m in &means {
            assert!(m.abs() < 1e-10, "mean {m}");
        }
        let w = fam.base_window();
        for i in 0..3 {
            for j in 0..3 {
                let v = integrate(
                    |x| {
                        let f0 = if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 };
                        f0 * fam.basis_value(i, x) * fam.basis_value(j, x)
                    },
                    w,
                    &spec(),
                )
                .unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-10, "({i},{j}) = {v}");
            }
        }
    }

    #[test]
    fn nested_zero_padding_identity() {
        let nest = cosine_nest_uniform(2, spec()).unwrap();
        let l1 = nest.level(1).unwrap();
        let l2 = nest.level(2).unwrap();
        for &x in &[0.1, 0.33, 0.5, 0.9] {
            let a = l1.density(&[0.4], x).unwrap();
            let b = l2.density(&[0.4, 0.0], x).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn normal_base_cosine_orthonormal() {
        let nest = cosine_nest_gaussian(3, spec()).unwrap();
        let fam = nest.full();
        let w = fam.base_window();
        for i in 0..3 {
            for j in i..3 {
                let v = integrate(
                    |x| fam.basis_value(i, x) * fam.basis_value(j, x) * normal_pdf(x),
                    w,
                    &spec(),
                )
                .unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-9, "({i},{j}) = {v}");
            }
        }
    }

    #[test]
    fn bad_cdf_is_rejected() {
        let f0: DensityFn = Arc::new(|x: f64| if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 });
        let not_monotone: DensityFn = Arc::new(|x: f64| (3.0 * std::f64::consts::PI * x).sin());
        let r = make_nested_cosine_family(
            f0,
            not_monotone,
            Interval { lo: 0.0, hi: 1.0 },
            2,
            spec(),
        );
        assert!(matches!(r, Err(Error::BadCdf { .. })));
    }

    #[test]
    fn theta_box_is_enforced() {
        let nest = cosine_nest_uniform(1, spec()).unwrap();
        let r = nest.full().density(&[6.0], 0.5);
        assert!(matches!(r, Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn gradient_matches_central_differences_on_probe_grid() {
        // 20-point probe grid in (theta, x), relative tolerance 1e-6.
        let nest = cosine_nest_uniform(2, spec()).unwrap();
        let fam = nest.full();
        let gauss = gaussian_location_family(0.0);
        let mut rng = crate::rng::RngStream::derive(515, 0, crate::rng::StreamRole::Auxiliary);
        let fd_check = |fam: &dyn SignalFamily, theta: &[f64], x: f64| {
            let analytic = fam.grad_theta(theta, x).unwrap();
            let mut probe = theta.to_vec();
            for j in 0..theta.len() {
                let h = 1e-5 * theta[j].abs().max(1.0);
                probe[j] = theta[j] + h;
                let up = fam.density(&probe, x).unwrap();
                probe[j] = theta[j] - h;
                let down = fam.density(&probe, x).unwrap();
                probe[j] = theta[j];
                let fd = (up - down) / (2.0 * h);
                let denom = analytic[j].abs().max(1e-6);
                assert!(
                    ((analytic[j] - fd) / denom).abs() < 1e-6,
                    "theta {theta:?} x {x} component {j}: analytic {} fd {fd}",
                    analytic[j]
                );
            }
        };
        for _ in 0..20 {
            let theta = [rng.uniform() - 0.5, rng.uniform() - 0.5];
            let x = rng.uniform();
            fd_check(fam.as_ref(), &theta, x);
            let loc = [2.0 * rng.uniform() - 1.0];
            let xg = 4.0 * rng.uniform() - 2.0;
            fd_check(&gauss, &loc, xg);
        }
    }

    #[test]
    fn exp_family_mass_is_one_for_random_admissible_theta() {
        let nest = cosine_nest_uniform(3, spec()).unwrap();
        let fam = nest.full();
        let w = fam.base_window();
        let mut rng = crate::rng::RngStream::derive(516, 0, crate::rng::StreamRole::Auxiliary);
        for _ in 0..10 {
            let theta: Vec<f64> = (0..3).map(|_| 2.0 * rng.uniform() - 1.0).collect();
            let mass = integrate(|x| fam.density(&theta, x).unwrap(), w, &spec()).unwrap();
            assert!((mass - 1.0).abs() < 1e-8, "theta {theta:?} mass {mass}");
        }
    }

    #[test]
    fn noise_validation_passes_builtins() {
        validate_noise_model(&known_gaussian_noise(0.5).unwrap(), &spec()).unwrap();
        validate_noise_model(&gaussian_noise_family(1.0).unwrap(), &spec()).unwrap();
    }

    #[test]
    fn overflowing_tilt_reports_divergence() {
        // u(x) = x^3 overflows exp inside the truncated window at theta = 2.
        let f0: DensityFn = Arc::new(normal_pdf);
        let u: DensityFn = Arc::new(|x: f64| x * x * x);
        let fam = ExponentialFamily::new(
            f0,
            Interval { lo: -8.0, hi: 8.0 },
            vec![u],
            spec(),
        )
        .unwrap();
        let r = fam.normalizer(&[2.0]);
        assert!(matches!(r, Err(Error::Divergent(_))), "{r:?}");
    }
}
