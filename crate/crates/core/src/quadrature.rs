//! Deterministic one-dimensional adaptive quadrature.
//!
//! Every convolution, expectation and information integral in the crate goes
//! through this module. The scheme is adaptive bisection with an embedded
//! 10-point Gauss / 21-point Kronrod pair per panel; the panel error is
//! estimated from the difference of the two rules with the usual QUADPACK
//! rescaling. Infinite supports never reach this module: callers truncate
//! densities first via [`truncate_support`].

use crate::error::{Error, Result};

/// A finite integration window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::OutOfDomain(format!(
                "interval endpoints must be finite, got [{lo}, {hi}]"
            )));
        }
        if !(lo < hi) {
            return Err(Error::OutOfDomain(format!(
                "interval must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Intersection, or `None` when the windows do not overlap.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo < hi {
            Some(Interval { lo, hi })
        } else {
            None
        }
    }

    /// Translated and reflected window { y - e : e in self }, used for
    /// convolution integrands evaluated at a fixed observation y.
    pub fn reflect_about(&self, y: f64) -> Interval {
        Interval {
            lo: y - self.hi,
            hi: y - self.lo,
        }
    }
}

/// Tolerances and budgets for the adaptive integrator.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureSpec {
    /// Relative tolerance on the integral value.
    pub rel_tol: f64,
    /// Absolute floor below which no further refinement is requested.
    pub abs_tol: f64,
    /// Maximum number of panel bisections per integral.
    pub max_subdivisions: usize,
    /// Probability mass allowed outside a truncated window, per tail.
    pub truncation_mass: f64,
}

impl QuadratureSpec {
    pub fn new(
        rel_tol: f64,
        abs_tol: f64,
        max_subdivisions: usize,
        truncation_mass: f64,
    ) -> Result<Self> {
        if !(rel_tol > 0.0) {
            return Err(Error::OutOfDomain(format!("rel_tol must be > 0, got {rel_tol}")));
        }
        if !(abs_tol >= 0.0) {
            return Err(Error::OutOfDomain(format!("abs_tol must be >= 0, got {abs_tol}")));
        }
        if max_subdivisions < 1 {
            return Err(Error::OutOfDomain("max_subdivisions must be >= 1".into()));
        }
        if !(truncation_mass > 0.0 && truncation_mass < 1e-6) {
            return Err(Error::OutOfDomain(format!(
                "truncation_mass must lie in (0, 1e-6), got {truncation_mass}"
            )));
        }
        Ok(Self {
            rel_tol,
            abs_tol,
            max_subdivisions,
            truncation_mass,
        })
    }
}

impl Default for QuadratureSpec {
    /// Defaults keep quadrature error far below the Monte Carlo noise of the
    /// simulation harness.
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_subdivisions: 200,
            truncation_mass: 1e-12,
        }
    }
}

// 10-point Gauss / 21-point Kronrod nodes and weights on [-1, 1].
// Standard QUADPACK QK21 constants; nodes are in decreasing order of |x|,
// odd indices are the embedded Gauss points.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// QUADPACK error rescaling: inflates the raw Gauss-Kronrod difference to a
/// conservative estimate and floors it at roundoff level.
fn rescale_error(raw: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut err = raw.abs();
    if res_asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / res_asc).powf(1.5);
        err = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    err
}

/// Error estimates cannot beat accumulated roundoff; tolerances are floored
/// at this multiple of epsilon times the integral of |f|.
const ROUNDOFF_FLOOR: f64 = 55.0 * f64::EPSILON;

struct PanelResult {
    value: f64,
    error: f64,
    res_abs: f64,
}

fn panel_scalar<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<PanelResult> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let eval = |x: f64| -> Result<f64> {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::NonFinite { x });
        }
        Ok(v)
    };

    let fc = eval(center)?;
    let mut res_kronrod = fc * WGK[10];
    let mut res_gauss = 0.0;
    let mut res_abs = res_kronrod.abs();
    let mut fv1 = [0.0_f64; 10];
    let mut fv2 = [0.0_f64; 10];

    for j in 0..10 {
        let x = half * XGK[j];
        let f1 = eval(center - x)?;
        let f2 = eval(center + x)?;
        fv1[j] = f1;
        fv2[j] = f2;
        let sum = f1 + f2;
        res_kronrod += WGK[j] * sum;
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_gauss += WG[j / 2] * sum;
        }
    }

    let mean = res_kronrod * 0.5;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }

    let raw = (res_kronrod - res_gauss) * half;
    Ok(PanelResult {
        value: res_kronrod * half,
        error: rescale_error(raw, res_abs * half.abs(), res_asc * half.abs()),
        res_abs: res_abs * half.abs(),
    })
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    res_abs: f64,
}

/// Narrow integrands inside wide windows can fool a single coarse panel, so
/// every integral starts from a fixed pre-split.
const INITIAL_PANELS: usize = 8;

/// Integrate `f` over a finite window to within
/// `max(abs_tol, rel_tol * |I|)`.
///
/// Errors with [`Error::NonFinite`] if the integrand produces NaN/infinity at
/// a quadrature node and with [`Error::Budget`] if `max_subdivisions`
/// bisections do not reach the tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, window: Interval, spec: &QuadratureSpec) -> Result<f64> {
    let mut panels: Vec<Panel> = Vec::with_capacity(INITIAL_PANELS + spec.max_subdivisions);
    let step = window.width() / INITIAL_PANELS as f64;
    for i in 0..INITIAL_PANELS {
        let a = window.lo + step * i as f64;
        let b = if i + 1 == INITIAL_PANELS {
            window.hi
        } else {
            window.lo + step * (i + 1) as f64
        };
        let r = panel_scalar(&f, a, b)?;
        panels.push(Panel {
            a,
            b,
            value: r.value,
            error: r.error,
            res_abs: r.res_abs,
        });
    }

    let mut splits = 0;
    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let err: f64 = panels.iter().map(|p| p.error).sum();
        let res_abs: f64 = panels.iter().map(|p| p.res_abs).sum();
        let tol = spec
            .abs_tol
            .max(spec.rel_tol * total.abs())
            .max(ROUNDOFF_FLOOR * res_abs);
        if err <= tol {
            return Ok(total);
        }
        if splits >= spec.max_subdivisions {
            return Err(Error::Budget(format!(
                "integrate: error estimate {err:.3e} above tolerance {tol:.3e} after {splits} subdivisions"
            )));
        }

        // Split the worst panel; ties resolve to the lowest index, which
        // keeps the subdivision sequence deterministic.
        let mut worst = 0;
        for (i, p) in panels.iter().enumerate() {
            if p.error > panels[worst].error {
                worst = i;
            }
        }
        let Panel { a, b, .. } = panels[worst];
        let mid = 0.5 * (a + b);
        if !(a < mid && mid < b) {
            // Panel width is at roundoff; nothing more can be resolved.
            return Err(Error::Budget(
                "integrate: panel width underflow before reaching tolerance".into(),
            ));
        }
        let left = panel_scalar(&f, a, mid)?;
        let right = panel_scalar(&f, mid, b)?;
        panels[worst] = Panel {
            a,
            b: mid,
            value: left.value,
            error: left.error,
            res_abs: left.res_abs,
        };
        panels.push(Panel {
            a: mid,
            b,
            value: right.value,
            error: right.error,
            res_abs: right.res_abs,
        });
        splits += 1;
    }
}

struct VecPanel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
    res_abs: Vec<f64>,
}

fn panel_vector<F: FnMut(f64, &mut [f64])>(
    f: &mut F,
    dim: usize,
    a: f64,
    b: f64,
    scratch: &mut [f64],
) -> Result<VecPanel> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    let mut res_abs = vec![0.0; dim];
    // Node values are kept for the res_asc pass: 21 nodes per panel.
    let mut node_vals = vec![0.0; 21 * dim];

    let mut eval = |x: f64, out: &mut [f64]| -> Result<()> {
        f(x, out);
        for v in out.iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { x });
            }
        }
        Ok(())
    };

    eval(center, scratch)?;
    node_vals[20 * dim..].copy_from_slice(scratch);
    for c in 0..dim {
        kron[c] += WGK[10] * scratch[c];
        res_abs[c] += WGK[10] * scratch[c].abs();
    }

    for j in 0..10 {
        let x = half * XGK[j];
        eval(center - x, scratch)?;
        node_vals[2 * j * dim..(2 * j + 1) * dim].copy_from_slice(scratch);
        eval(center + x, scratch)?;
        node_vals[(2 * j + 1) * dim..(2 * j + 2) * dim].copy_from_slice(scratch);
        for c in 0..dim {
            let f1 = node_vals[2 * j * dim + c];
            let f2 = node_vals[(2 * j + 1) * dim + c];
            kron[c] += WGK[j] * (f1 + f2);
            res_abs[c] += WGK[j] * (f1.abs() + f2.abs());
            if j % 2 == 1 {
                gauss[c] += WG[j / 2] * (f1 + f2);
            }
        }
    }

    let mut value = vec![0.0; dim];
    let mut error = vec![0.0; dim];
    let mut res_abs_out = vec![0.0; dim];
    for c in 0..dim {
        let mean = kron[c] * 0.5;
        let mut res_asc = WGK[10] * (node_vals[20 * dim + c] - mean).abs();
        for j in 0..10 {
            res_asc += WGK[j]
                * ((node_vals[2 * j * dim + c] - mean).abs()
                    + (node_vals[(2 * j + 1) * dim + c] - mean).abs());
        }
        let raw = (kron[c] - gauss[c]) * half;
        value[c] = kron[c] * half;
        error[c] = rescale_error(raw, res_abs[c] * half.abs(), res_asc * half.abs());
        res_abs_out[c] = res_abs[c] * half.abs();
    }
    Ok(VecPanel {
        a,
        b,
        value,
        error,
        res_abs: res_abs_out,
    })
}

/// Integrate a vector-valued integrand with a shared adaptive subdivision.
///
/// `f(x, out)` must fill `out` (length `dim`) with the component values at
/// `x`. All components share panel evaluations, which is what makes
/// information-matrix integrals affordable. Each component is driven to its
/// own tolerance `max(abs_tol, rel_tol * |I_c|)`.
pub fn integrate_vector<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    dim: usize,
    window: Interval,
    spec: &QuadratureSpec,
) -> Result<Vec<f64>> {
    if dim == 0 {
        return Ok(Vec::new());
    }
    let mut scratch = vec![0.0; dim];
    let mut panels: Vec<VecPanel> = Vec::with_capacity(INITIAL_PANELS + spec.max_subdivisions);
    let step = window.width() / INITIAL_PANELS as f64;
    for i in 0..INITIAL_PANELS {
        let a = window.lo + step * i as f64;
        let b = if i + 1 == INITIAL_PANELS {
            window.hi
        } else {
            window.lo + step * (i + 1) as f64
        };
        panels.push(panel_vector(&mut f, dim, a, b, &mut scratch)?);
    }

    let mut splits = 0;
    let mut totals = vec![0.0; dim];
    let mut errs = vec![0.0; dim];
    let mut res_abs = vec![0.0; dim];
    let mut tols = vec![0.0; dim];
    loop {
        totals.iter_mut().for_each(|t| *t = 0.0);
        errs.iter_mut().for_each(|e| *e = 0.0);
        res_abs.iter_mut().for_each(|r| *r = 0.0);
        for p in &panels {
            for c in 0..dim {
                totals[c] += p.value[c];
                errs[c] += p.error[c];
                res_abs[c] += p.res_abs[c];
            }
        }
        // Worst component ratio decides convergence and which panel to split.
        let mut worst_ratio = 0.0_f64;
        for c in 0..dim {
            tols[c] = spec
                .abs_tol
                .max(spec.rel_tol * totals[c].abs())
                .max(ROUNDOFF_FLOOR * res_abs[c]);
            worst_ratio = worst_ratio.max(errs[c] / tols[c]);
        }
        if worst_ratio <= 1.0 {
            return Ok(totals);
        }
        if splits >= spec.max_subdivisions {
            return Err(Error::Budget(format!(
                "integrate_vector: worst error/tolerance ratio {worst_ratio:.3e} after {splits} subdivisions"
            )));
        }

        let mut worst_panel = 0;
        let mut worst_err = -1.0;
        for (i, p) in panels.iter().enumerate() {
            let mut e = 0.0_f64;
            for c in 0..dim {
                e = e.max(p.error[c] / tols[c]);
            }
            if e > worst_err {
                worst_err = e;
                worst_panel = i;
            }
        }
        let (a, b) = (panels[worst_panel].a, panels[worst_panel].b);
        let mid = 0.5 * (a + b);
        if !(a < mid && mid < b) {
            return Err(Error::Budget(
                "integrate_vector: panel width underflow before reaching tolerance".into(),
            ));
        }
        panels[worst_panel] = panel_vector(&mut f, dim, a, mid, &mut scratch)?;
        panels.push(panel_vector(&mut f, dim, mid, b, &mut scratch)?);
        splits += 1;
    }
}

const MAX_TAIL_DOUBLINGS: usize = 64;

/// Find a finite window carrying all but `truncation_mass` of a probability
/// density per tail.
///
/// The search expands geometrically outward from `hint` until the captured
/// mass is essentially complete and the outermost shells are empty, then
/// pulls each end back in by bisection. The refinement never moves an
/// endpoint inside the hint, so a hint equal to a compact support is
/// returned unchanged.
pub fn truncate_support<F: Fn(f64) -> f64>(
    density: F,
    hint: Interval,
    spec: &QuadratureSpec,
) -> Result<Interval> {
    let tm = spec.truncation_mass;
    let shell_tol = tm / 8.0;
    // Mass queries must resolve well below the truncation target.
    let spec = &QuadratureSpec {
        abs_tol: spec.abs_tol.min(tm * 1e-3),
        ..*spec
    };

    let mut lo = hint.lo;
    let mut hi = hint.hi;
    let mut step_lo = hint.width().max(1.0);
    let mut step_hi = step_lo;
    let mut captured = integrate(&density, Interval { lo, hi }, spec)?;
    let mut shell_lo = f64::INFINITY;
    let mut shell_hi = f64::INFINITY;

    let mut doublings = 0;
    loop {
        let done_lo = shell_lo < shell_tol;
        let done_hi = shell_hi < shell_tol;
        // 0.999 guards against a hint that misses the bulk of the density
        // entirely (all shells look empty until the mass is found).
        if done_lo && done_hi && captured >= 0.999 {
            break;
        }
        if doublings >= MAX_TAIL_DOUBLINGS {
            return Err(Error::Budget(format!(
                "truncate_support: captured mass {captured:.6} after {doublings} doublings"
            )));
        }
        let expand_both = done_lo && done_hi;
        if !done_lo || expand_both {
            let new_lo = lo - step_lo;
            shell_lo = integrate(&density, Interval { lo: new_lo, hi: lo }, spec)?;
            captured += shell_lo;
            lo = new_lo;
            step_lo *= 2.0;
        }
        if !done_hi || expand_both {
            let new_hi = hi + step_hi;
            shell_hi = integrate(&density, Interval { lo: hi, hi: new_hi }, spec)?;
            captured += shell_hi;
            hi = new_hi;
            step_hi *= 2.0;
        }
        doublings += 1;
    }

    // Pull each end back toward the hint, leaving at most tm/2 outside
    // (the unexplored tail beyond [lo, hi] accounts for the other half).
    let target = tm / 2.0;
    let left = refine_edge(&density, lo, hint.lo, target, spec, true)?;
    let right = refine_edge(&density, hi, hint.hi, target, spec, false)?;
    Interval::new(left, right)
}

/// Bisect for the innermost endpoint whose outside mass stays below `target`.
fn refine_edge<F: Fn(f64) -> f64>(
    density: &F,
    outer: f64,
    inner: f64,
    target: f64,
    spec: &QuadratureSpec,
    left_tail: bool,
) -> Result<f64> {
    let mass = |t: f64| -> Result<f64> {
        let (a, b) = if left_tail { (outer, t) } else { (t, outer) };
        if a >= b {
            return Ok(0.0);
        }
        integrate(density, Interval { lo: a, hi: b }, spec)
    };

    if mass(inner)? <= target {
        return Ok(inner);
    }
    // Invariant: mass(good) <= target < mass(bad), good outside bad.
    let mut good = outer;
    let mut bad = inner;
    for _ in 0..80 {
        let mid = 0.5 * (good + bad);
        if mid == good || mid == bad {
            break;
        }
        if mass(mid)? <= target {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(good)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn normal_pdf(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    proptest! {
        /// Linearity on random polynomial-times-Gaussian integrands.
        #[test]
        fn linearity(
            c in proptest::collection::vec(-3.0..3.0f64, 3),
            d in proptest::collection::vec(-3.0..3.0f64, 3),
            a in -5.0..5.0f64,
            b in -5.0..5.0f64,
        ) {
            let w = Interval::new(-8.0, 8.0).unwrap();
            let s = spec();
            let f = |x: f64| (c[0] + c[1] * x + c[2] * x * x) * normal_pdf(x);
            let g = |x: f64| (d[0] + d[1] * x + d[2] * x * x) * normal_pdf(x);
            let combined = integrate(|x| a * f(x) + b * g(x), w, &s).unwrap();
            let parts = a * integrate(f, w, &s).unwrap() + b * integrate(g, w, &s).unwrap();
            let scale = combined.abs().max(parts.abs()).max(1.0);
            prop_assert!(
                (combined - parts).abs() <= 2.0 * s.rel_tol * scale,
                "combined {combined} vs parts {parts}"
            );
        }
    }

    #[test]
    fn standard_normal_mass() {
        let v = integrate(normal_pdf, Interval::new(-8.0, 8.0).unwrap(), &spec()).unwrap();
        assert!((v - 1.0).abs() < 1e-10, "got {v}");
    }

    #[test]
    fn zero_integrand_is_exact() {
        let v = integrate(|_| 0.0, Interval::new(-3.0, 11.0).unwrap(), &spec()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn odd_integrand_cancels() {
        let v = integrate(
            |x| x * normal_pdf(x),
            Interval::new(-8.0, 8.0).unwrap(),
            &spec(),
        )
        .unwrap();
        assert!(v.abs() < 1e-12, "got {v}");
    }

    #[test]
    fn deterministic_repeat() {
        let w = Interval::new(-5.0, 5.0).unwrap();
        let f = |x: f64| (x.sin() + 1.2).powi(3) * normal_pdf(x);
        let a = integrate(f, w, &spec()).unwrap();
        let b = integrate(f, w, &spec()).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let r = integrate(
            |x| if x > 0.5 { f64::NAN } else { 1.0 },
            Interval::new(0.0, 1.0).unwrap(),
            &spec(),
        );
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn budget_error_on_hard_singularity() {
        let tight = QuadratureSpec::new(1e-14, 1e-16, 4, 1e-12).unwrap();
        let r = integrate(|x: f64| x.abs().sqrt().recip().min(1e12), Interval::new(-1.0, 1.0).unwrap(), &tight);
        assert!(matches!(r, Err(Error::Budget(_))));
    }

    #[test]
    fn vector_matches_scalar() {
        let w = Interval::new(-6.0, 6.0).unwrap();
        let got = integrate_vector(
            |x, out| {
                out[0] = normal_pdf(x);
                out[1] = x * x * normal_pdf(x);
            },
            2,
            w,
            &spec(),
        )
        .unwrap();
        let a = integrate(normal_pdf, w, &spec()).unwrap();
        let b = integrate(|x| x * x * normal_pdf(x), w, &spec()).unwrap();
        assert!((got[0] - a).abs() < 1e-12);
        assert!((got[1] - b).abs() < 1e-10);
    }

    #[test]
    fn truncate_normal_covers_quantile() {
        let w = truncate_support(normal_pdf, Interval::new(-1.0, 1.0).unwrap(), &spec()).unwrap();
        // Phi^{-1}(1e-12) ~ -7.034; the window must cover it without being absurd.
        assert!(w.lo <= -7.03 && w.hi >= 7.03, "window {w:?}");
        assert!(w.lo > -40.0 && w.hi < 40.0, "window {w:?}");
    }

    #[test]
    fn truncate_compact_support_unchanged() {
        let uniform = |x: f64| if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 };
        let w = truncate_support(uniform, Interval::new(0.0, 1.0).unwrap(), &spec()).unwrap();
        assert_eq!(w.lo, 0.0);
        assert_eq!(w.hi, 1.0);
    }

    #[test]
    fn truncate_finds_displaced_mass() {
        let shifted = |x: f64| normal_pdf(x - 100.0);
        let w = truncate_support(shifted, Interval::new(-1.0, 1.0).unwrap(), &spec()).unwrap();
        assert!(w.lo <= 93.0 && w.hi >= 107.0, "window {w:?}");
    }

    #[test]
    fn positivity_floor() {
        let bump = |x: f64| normal_pdf(x) * (x.sin().powi(2));
        let v = integrate(bump, Interval::new(-8.0, 8.0).unwrap(), &spec()).unwrap();
        assert!(v >= -spec().abs_tol);
    }
}
