//! Efficient score systems.
//!
//! Simple case: l*(y) is the raw theta-score at the null and
//! L = {E_0 l* l*^T}^{-1}. Composite case: the theta-score is projected off
//! the nuisance scores, l*(y) = l_theta(y) - I12 I22^{-1} l_eta(y), and
//! L = (I*)^{-1} with I* = I11 - I12 I22^{-1} I21. Plug-in estimated scores
//! replace the unknown nuisance by a sqrt(n)-consistent estimate; the
//! worked Gaussian examples have closed forms, and any composite model can
//! plug an estimated eta into a freshly built system.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::families::SignalFamily;
use crate::linalg::{Mat, SymMat};
use crate::model::{ConvolvedModel, ModelEvaluator};
use crate::quadrature::{integrate_vector, Interval, QuadratureSpec};

/// Outer (in y) integration spec for information matrices. Slightly looser
/// than the convolution spec so the outer adaptivity does not chase the
/// inner quadrature's own error floor.
fn outer_spec(inner: &QuadratureSpec) -> QuadratureSpec {
    QuadratureSpec {
        rel_tol: inner.rel_tol.max(1e-9),
        abs_tol: inner.abs_tol.max(1e-12),
        max_subdivisions: inner.max_subdivisions,
        truncation_mass: inner.truncation_mass,
    }
}

/// The blocks of the joint Fisher information at (theta0, eta0).
/// I21 is I12 transposed by construction.
#[derive(Debug, Clone)]
pub struct InfoBlocks {
    pub i11: SymMat,
    pub i12: Mat,
    pub i22: SymMat,
}

impl InfoBlocks {
    pub fn i21(&self) -> Mat {
        let mut t = Mat::zeros(self.i12.cols(), self.i12.rows());
        for i in 0..self.i12.rows() {
            for j in 0..self.i12.cols() {
                t.set(j, i, self.i12.get(i, j));
            }
        }
        t
    }

    /// The full (k + m) x (k + m) information matrix.
    pub fn full(&self) -> SymMat {
        let k = self.i11.dim();
        let m = self.i22.dim();
        let mut f = SymMat::zeros(k + m);
        for i in 0..k {
            for j in i..k {
                f.set(i, j, self.i11.get(i, j));
            }
        }
        for i in 0..k {
            for j in 0..m {
                f.set(i, k + j, self.i12.get(i, j));
            }
        }
        for i in 0..m {
            for j in i..m {
                f.set(k + i, k + j, self.i22.get(i, j));
            }
        }
        f
    }
}

/// An efficient score system: the score vector function, its information
/// matrix Sigma = E l* l*^T, and the normalizing matrix L = Sigma^{-1}.
pub struct ScoreSystem {
    model: Arc<ConvolvedModel>,
    theta0: Vec<f64>,
    eta0: Option<Vec<f64>>,
    /// I12 * I22^{-1}; present only in the composite case.
    projection: Option<Mat>,
    sigma: SymMat,
    l_matrix: SymMat,
    blocks: Option<InfoBlocks>,
    mean_residuals: Vec<f64>,
    obs_window: Interval,
}

impl ScoreSystem {
    pub fn k(&self) -> usize {
        self.theta0.len()
    }

    pub fn model(&self) -> &Arc<ConvolvedModel> {
        &self.model
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta0
    }

    pub fn eta0(&self) -> Option<&[f64]> {
        self.eta0.as_deref()
    }

    /// E l* l*^T under the null (the efficient information in the composite
    /// case).
    pub fn sigma(&self) -> &SymMat {
        &self.sigma
    }

    /// The normalizing matrix L = Sigma^{-1}.
    pub fn l_matrix(&self) -> &SymMat {
        &self.l_matrix
    }

    pub fn info_blocks(&self) -> Option<&InfoBlocks> {
        self.blocks.as_ref()
    }

    /// Quadrature values of E l* (all should sit at numerical zero).
    pub fn mean_residuals(&self) -> &[f64] {
        &self.mean_residuals
    }

    /// Window carrying the observable density mass.
    pub fn observation_window(&self) -> Interval {
        self.obs_window
    }

    /// Prepared evaluator for repeated l*(y) calls.
    pub fn evaluator(&self) -> Result<ScoreFnEvaluator<'_>> {
        let ev = self
            .model
            .prepare(&self.theta0, self.eta0.as_deref())?;
        Ok(ScoreFnEvaluator {
            ev,
            projection: self.projection.as_ref(),
            k: self.k(),
        })
    }

    /// The efficient score vector at one observation.
    pub fn l_star(&self, y: f64) -> Result<Vec<f64>> {
        let ev = self.evaluator()?;
        let mut out = vec![0.0; self.k()];
        ev.l_star_into(y, &mut out)?;
        Ok(out)
    }

    /// l* evaluated at every observation (one row per Y_j).
    pub fn rows(&self, data: &[f64]) -> Result<Vec<Vec<f64>>> {
        let ev = self.evaluator()?;
        let mut rows = Vec::with_capacity(data.len());
        for &y in data {
            let mut row = vec![0.0; self.k()];
            ev.l_star_into(y, &mut row)?;
            rows.push(row);
        }
        Ok(rows)
    }
}

/// Evaluates the efficient score function with model contexts resolved once.
pub struct ScoreFnEvaluator<'a> {
    ev: ModelEvaluator<'a>,
    projection: Option<&'a Mat>,
    k: usize,
}

impl ScoreFnEvaluator<'_> {
    /// Writes l*(y); returns the observable density with its support
    /// indicator (the score is zero where the indicator is false).
    pub fn l_star_into(&self, y: f64, out: &mut [f64]) -> Result<crate::model::DensityValue> {
        if out.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: out.len(),
            });
        }
        let m = self.ev.eta_dim();
        let mut eta_buf = vec![0.0; m];
        let d = self.ev.scores_into(y, out, &mut eta_buf)?;
        if let Some(p) = self.projection {
            let corr = p.mul_vec(&eta_buf)?;
            for j in 0..self.k {
                out[j] -= corr[j];
            }
        }
        Ok(d)
    }
}

/// Build the simple-case score system at theta = theta_null with known
/// noise: l* is the raw score and L = {E_0 l* l*^T}^{-1}.
pub fn build_simple_scores(model: Arc<ConvolvedModel>) -> Result<ScoreSystem> {
    model.noise().known()?;
    let theta0 = model.theta_null();
    let k = theta0.len();
    let obs_window = model.observation_window(&theta0, None)?;
    let ev = model.prepare(&theta0, None)?;

    // One outer pass: upper triangle of l* l*^T q plus E l* q.
    let tri = k * (k + 1) / 2;
    let dim = tri + k;
    let mut score_buf = vec![0.0; k];
    let raw = integrate_vector(
        |y, out: &mut [f64]| {
            let d = match ev.scores_into(y, &mut score_buf, &mut []) {
                Ok(d) => d,
                Err(_) => {
                    out.iter_mut().for_each(|v| *v = f64::NAN);
                    return;
                }
            };
            let q = d.value;
            let mut idx = 0;
            for i in 0..k {
                for j in i..k {
                    out[idx] = score_buf[i] * score_buf[j] * q;
                    idx += 1;
                }
            }
            for i in 0..k {
                out[tri + i] = score_buf[i] * q;
            }
        },
        dim,
        obs_window,
        &outer_spec(model.spec()),
    )?;

    let sigma = SymMat::from_upper(k, &raw[..tri])?;
    sigma.check_conditioning()?;
    let l_matrix = sigma.inverse()?;
    Ok(ScoreSystem {
        model,
        theta0,
        eta0: None,
        projection: None,
        sigma,
        l_matrix,
        blocks: None,
        mean_residuals: raw[tri..].to_vec(),
        obs_window,
    })
}

fn joint_information(
    model: &ConvolvedModel,
    theta0: &[f64],
    eta0: &[f64],
) -> Result<(InfoBlocks, Vec<f64>, Interval)> {
    model.noise().parametric()?;
    let k = theta0.len();
    let m = eta0.len();
    let obs_window = model.observation_window(theta0, Some(eta0))?;
    let ev = model.prepare(theta0, Some(eta0))?;

    let km = k + m;
    let tri = km * (km + 1) / 2;
    let dim = tri + km;
    let mut joint = vec![0.0; km];
    let mut eta_buf = vec![0.0; m];
    let raw = integrate_vector(
        |y, out: &mut [f64]| {
            let d = match ev.scores_into(y, &mut joint[..k], &mut eta_buf) {
                Ok(d) => d,
                Err(_) => {
                    out.iter_mut().for_each(|v| *v = f64::NAN);
                    return;
                }
            };
            joint[k..].copy_from_slice(&eta_buf);
            let g = d.value;
            let mut idx = 0;
            for i in 0..km {
                for j in i..km {
                    out[idx] = joint[i] * joint[j] * g;
                    idx += 1;
                }
            }
            for i in 0..km {
                out[tri + i] = joint[i] * g;
            }
        },
        dim,
        obs_window,
        &outer_spec(model.spec()),
    )?;

    let full = SymMat::from_upper(km, &raw[..tri])?;
    let mut i11 = SymMat::zeros(k);
    for i in 0..k {
        for j in i..k {
            i11.set(i, j, full.get(i, j));
        }
    }
    let mut i12 = Mat::zeros(k, m);
    for i in 0..k {
        for j in 0..m {
            i12.set(i, j, full.get(i, k + j));
        }
    }
    let mut i22 = SymMat::zeros(m);
    for i in 0..m {
        for j in i..m {
            i22.set(i, j, full.get(k + i, k + j));
        }
    }
    Ok((InfoBlocks { i11, i12, i22 }, raw[tri..].to_vec(), obs_window))
}

/// The joint information in block form at (theta0, eta0).
pub fn information_blocks(
    model: &ConvolvedModel,
    theta0: &[f64],
    eta0: &[f64],
) -> Result<InfoBlocks> {
    let (blocks, _, _) = joint_information(model, theta0, eta0)?;
    blocks.i22.check_conditioning()?;
    Ok(blocks)
}

/// Build the composite-case efficient score system at (theta0, eta0):
/// l* = l_theta - I12 I22^{-1} l_eta and L = (I*)^{-1}.
pub fn build_efficient_scores(
    model: Arc<ConvolvedModel>,
    theta0: &[f64],
    eta0: &[f64],
) -> Result<ScoreSystem> {
    let (blocks, means, obs_window) = joint_information(&model, theta0, eta0)?;
    let k = theta0.len();
    blocks.i22.check_conditioning()?;
    let i22_inv = blocks.i22.inverse()?;
    let projection = blocks.i12.mul_sym(&i22_inv)?;

    // I* = I11 - I12 I22^{-1} I21, assembled from the blocks.
    let cross = blocks.i12.sandwich(&i22_inv)?;
    let mut sigma = SymMat::zeros(k);
    for i in 0..k {
        for j in i..k {
            sigma.set(i, j, blocks.i11.get(i, j) - cross.get(i, j));
        }
    }
    sigma.check_conditioning()?;
    let l_matrix = sigma.inverse()?;

    // E l* = E l_theta - P E l_eta.
    let eta_means = means[k..].to_vec();
    let corr = projection.mul_vec(&eta_means)?;
    let mean_residuals: Vec<f64> = means[..k]
        .iter()
        .zip(&corr)
        .map(|(a, b)| a - b)
        .collect();

    Ok(ScoreSystem {
        model,
        theta0: theta0.to_vec(),
        eta0: Some(eta0.to_vec()),
        projection: Some(projection),
        sigma,
        l_matrix,
        blocks: Some(blocks),
        mean_residuals,
        obs_window,
    })
}

/// Exponential-family fast path for the simple-case score:
/// l*(y) = ((u f0) * h)/(f0 * h)(y) - E_0 u(X), with * the convolution.
///
/// This is an independent route from the generic gradient-based score and
/// serves as its oracle in tests.
pub fn exp_family_score_fast(model: &ConvolvedModel, y: f64) -> Result<Vec<f64>> {
    model.noise().known()?;
    let (fam, k) = model
        .signal()
        .exp_family_parts()
        .ok_or_else(|| Error::OutOfDomain("fast path requires an exponential family".into()))?;
    let theta0 = model.theta_null();
    if theta0.iter().any(|&t| t != 0.0) {
        return Err(Error::OutOfDomain(
            "fast path is defined at theta = 0".into(),
        ));
    }
    let zeros = vec![0.0; fam.dim()];
    let means = fam.basis_means(&zeros)?;
    let ev = model.prepare(&theta0, None)?;
    let (sig_w, noise_w) = ev.windows();
    let Some(window) = sig_w.intersect(&noise_w.reflect_about(y)) else {
        return Ok(vec![0.0; k]);
    };
    let raw = integrate_vector(
        |s, out: &mut [f64]| {
            let f0 = fam.base_value(s);
            let h = ev.noise_density(y - s);
            for j in 0..k {
                out[j] = f0 * fam.basis_value(j, s) * h;
            }
            out[k] = f0 * h;
        },
        k + 1,
        window,
        model.spec(),
    )?;
    let den = raw[k];
    if den <= crate::model::DENSITY_FLOOR {
        return Ok(vec![0.0; k]);
    }
    Ok((0..k).map(|j| raw[j] / den - means[j]).collect())
}

/// Plug-in estimated scores: rows of l* at the data plus the paired
/// estimate of L.
pub struct EstimatedScores {
    /// n x k, one row per observation.
    pub values: Vec<Vec<f64>>,
    /// Estimate of (I*)^{-1} paired with the rows.
    pub l_hat: SymMat,
    /// Which nuisance estimator produced the rows.
    pub provenance: String,
}

impl EstimatedScores {
    fn validate(self) -> Result<Self> {
        for (i, row) in self.values.iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::DegenerateSample(format!(
                    "non-finite score row at observation {i}"
                )));
            }
        }
        self.l_hat.cholesky()?;
        Ok(self)
    }
}

/// Sample variance with divisor n - 1.
pub fn sample_variance(data: &[f64]) -> Result<f64> {
    if data.len() < 2 {
        return Err(Error::DegenerateSample(format!(
            "need at least 2 observations, got {}",
            data.len()
        )));
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    Ok(data.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1.0))
}

/// Example 2 plug-in: l*_j = (Y_j - theta0) / s_n^2 with the sample variance
/// as the nuisance estimate, paired with L_hat = s_n^2.
pub fn plugin_scores_example2(data: &[f64], theta0: f64) -> Result<EstimatedScores> {
    let s2 = sample_variance(data)?;
    if s2 == 0.0 {
        return Err(Error::DegenerateSample("sample variance is zero".into()));
    }
    let values = data.iter().map(|&y| vec![(y - theta0) / s2]).collect();
    let mut l_hat = SymMat::zeros(1);
    l_hat.set(0, 0, s2);
    EstimatedScores {
        values,
        l_hat,
        provenance: format!("example2: sample variance {s2:.6} (divisor n-1)"),
    }
    .validate()
}

/// E (l_eta)^2 for the Gaussian examples: C(eta) = 2 eta^2 / (eta^2 + 1)^2.
pub fn example3_information(eta0: f64) -> f64 {
    2.0 * eta0 * eta0 / (eta0 * eta0 + 1.0).powi(2)
}

/// Example 3 plug-in: l*_j = C1(eta0) (Y_j - theta_hat)^2 - C2(eta0) with
/// C1 = eta0/(eta0^2+1)^2, C2 = eta0/(eta0^2+1); theta_hat defaults to the
/// sample mean. Paired with L_hat = 1/C(eta0).
pub fn plugin_scores_example3(
    data: &[f64],
    eta0: f64,
    theta_hat: Option<f64>,
) -> Result<EstimatedScores> {
    if data.len() < 2 {
        return Err(Error::DegenerateSample(format!(
            "need at least 2 observations, got {}",
            data.len()
        )));
    }
    if !(eta0 > 0.0) {
        return Err(Error::OutOfDomain(format!("eta0 must be > 0, got {eta0}")));
    }
    let theta_hat = theta_hat.unwrap_or_else(|| data.iter().sum::<f64>() / data.len() as f64);
    let v = eta0 * eta0 + 1.0;
    let c1 = eta0 / (v * v);
    let c2 = eta0 / v;
    let values = data
        .iter()
        .map(|&y| vec![c1 * (y - theta_hat) * (y - theta_hat) - c2])
        .collect();
    let mut l_hat = SymMat::zeros(1);
    l_hat.set(0, 0, 1.0 / example3_information(eta0));
    EstimatedScores {
        values,
        l_hat,
        provenance: format!("example3: theta_hat {theta_hat:.6} (sample mean default)"),
    }
    .validate()
}

/// Generic composite plug-in: evaluate the efficient scores of a system
/// built at an estimated eta, paired with that system's L.
pub fn plugin_scores_at_eta(system: &ScoreSystem, data: &[f64]) -> Result<EstimatedScores> {
    let eta = system
        .eta0()
        .ok_or(Error::NotParametricNoise)?
        .to_vec();
    EstimatedScores {
        values: system.rows(data)?,
        l_hat: system.l_matrix().clone(),
        provenance: format!("plug-in eta_hat {eta:?}"),
    }
    .validate()
}

/// Tabulated efficient score function: l* components sampled on a uniform
/// grid over the observation window, evaluated by local cubic (4-point
/// Lagrange) interpolation. Observations outside the window report a miss
/// so the caller can fall back to direct quadrature.
pub struct ScoreTable {
    window: Interval,
    step: f64,
    k: usize,
    /// points x k, row-major.
    values: Vec<f64>,
}

impl ScoreTable {
    pub fn build(system: &ScoreSystem, points: usize) -> Result<ScoreTable> {
        if points < 8 {
            return Err(Error::OutOfDomain("score table needs >= 8 points".into()));
        }
        let window = system.observation_window();
        let k = system.k();
        let mut values = vec![0.0; points * k];
        let ev = system.evaluator()?;
        let step = window.width() / (points - 1) as f64;
        let mut row = vec![0.0; k];
        for i in 0..points {
            let y = window.lo + step * i as f64;
            ev.l_star_into(y, &mut row)?;
            values[i * k..(i + 1) * k].copy_from_slice(&row);
        }
        Ok(ScoreTable {
            window,
            step,
            k,
            values,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn window(&self) -> Interval {
        self.window
    }

    /// Cubic interpolation of l*(y); false when y is outside the table.
    pub fn eval_into(&self, y: f64, out: &mut [f64]) -> bool {
        if y < self.window.lo || y > self.window.hi {
            return false;
        }
        let points = self.values.len() / self.k;
        let t = (y - self.window.lo) / self.step;
        // Four-point stencil centered at the containing cell.
        let i1 = (t.floor() as usize).min(points - 2);
        let i0 = i1.saturating_sub(1);
        let (i0, i1, i2, i3) = if i1 == 0 {
            (0, 1, 2, 3)
        } else if i1 + 2 >= points {
            (points - 4, points - 3, points - 2, points - 1)
        } else {
            (i0, i1, i1 + 1, i1 + 2)
        };
        let x = [i0 as f64, i1 as f64, i2 as f64, i3 as f64];
        let mut w = [0.0; 4];
        for a in 0..4 {
            let mut num = 1.0;
            let mut den = 1.0;
            for b in 0..4 {
                if a != b {
                    num *= t - x[b];
                    den *= x[a] - x[b];
                }
            }
            w[a] = num / den;
        }
        let idx = [i0, i1, i2, i3];
        for c in 0..self.k {
            out[c] = (0..4)
                .map(|a| w[a] * self.values[idx[a] * self.k + c])
                .sum();
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{
        cosine_nest_uniform, gaussian_location_family, gaussian_noise_family,
        known_gaussian_noise,
    };
    use crate::quadrature::QuadratureSpec;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn simple_gaussian_scores_match_closed_form() {
        // f = N(theta, 1), h = N(0, eta^2) known, theta0 = 0:
        // l*(y) = y / (1 + eta^2), L = 1 + eta^2.
        let eta = 0.8;
        let model = Arc::new(
            ConvolvedModel::new(
                Arc::new(gaussian_location_family(0.0)),
                known_gaussian_noise(eta).unwrap(),
                spec(),
            )
            .unwrap(),
        );
        let sys = build_simple_scores(model).unwrap();
        let v = 1.0 + eta * eta;
        for &y in &[-2.0, 0.3, 1.7] {
            let l = sys.l_star(y).unwrap();
            assert!((l[0] - y / v).abs() < 1e-7, "y {y}: {}", l[0]);
        }
        assert!((sys.l_matrix().get(0, 0) - v).abs() < 1e-6);
        assert!(sys.mean_residuals()[0].abs() < 1e-8);
    }

    #[test]
    fn fast_path_matches_generic_path() {
        let nest = cosine_nest_uniform(3, spec()).unwrap();
        let model = Arc::new(
            ConvolvedModel::new(
                Arc::new(nest.level(3).unwrap()),
                known_gaussian_noise(0.5).unwrap(),
                spec(),
            )
            .unwrap(),
        );
        let sys = build_simple_scores(model.clone()).unwrap();
        let mut max_diff = 0.0_f64;
        for i in 0..=50 {
            let y = -1.0 + 3.0 * i as f64 / 50.0;
            let generic = sys.l_star(y).unwrap();
            let fast = exp_family_score_fast(&model, y).unwrap();
            for j in 0..3 {
                max_diff = max_diff.max((generic[j] - fast[j]).abs());
            }
        }
        assert!(max_diff < 1e-6, "max diff {max_diff}");
    }

    #[test]
    fn example2_blocks_and_efficient_scores() {
        let (theta0, eta0) = (0.0, 1.0);
        let model = Arc::new(
            ConvolvedModel::new(
                Arc::new(gaussian_location_family(theta0)),
                gaussian_noise_family(eta0).unwrap(),
                spec(),
            )
            .unwrap(),
        );
        let blocks = information_blocks(&model, &[theta0], &[eta0]).unwrap();
        // Adaptivity: I12 = 0 for the Gaussian pair.
        assert!(blocks.i12.get(0, 0).abs() < 1e-7, "{}", blocks.i12.get(0, 0));
        // I22 = C(eta0) = 0.5 at eta0 = 1 (fourth-moment oracle).
        assert!((blocks.i22.get(0, 0) - 0.5).abs() < 1e-6, "{}", blocks.i22.get(0, 0));
        // I11 = 1/(eta^2+1) = 0.5.
        assert!((blocks.i11.get(0, 0) - 0.5).abs() < 1e-6);

        let sys = build_efficient_scores(model, &[theta0], &[eta0]).unwrap();
        // (I*)^{-1} = eta0^2 + 1 = 2.
        assert!((sys.l_matrix().get(0, 0) - 2.0).abs() < 1e-5, "{}", sys.l_matrix().get(0, 0));
        // With I12 = 0 the efficient score equals the raw theta-score.
        for &y in &[-1.2, 0.4, 2.2] {
            let l = sys.l_star(y).unwrap();
            let expect = (y - theta0) / (eta0 * eta0 + 1.0);
            assert!((l[0] - expect).abs() < 1e-6, "y {y}: {}", l[0]);
        }
        assert!(sys.mean_residuals()[0].abs() < 1e-7);
    }

    #[test]
    fn example3_swapped_roles_efficient_score_is_raw_eta_score() {
        // With eta as the parameter of interest the projection coefficient
        // is I21 I11^{-1}; the Gaussian pair has I21 = 0, so the efficient
        // eta-score equals the raw eta-score pointwise.
        let (theta0, eta0) = (0.0, 1.0);
        let model = Arc::new(
            ConvolvedModel::new(
                Arc::new(gaussian_location_family(theta0)),
                gaussian_noise_family(eta0).unwrap(),
                spec(),
            )
            .unwrap(),
        );
        let blocks = information_blocks(&model, &[theta0], &[eta0]).unwrap();
        let proj = blocks
            .i21()
            .mul_sym(&blocks.i11.inverse().unwrap())
            .unwrap();
        let ev = model.prepare(&[theta0], Some(&[eta0])).unwrap();
        for &y in &[-2.0, -0.5, 0.0, 1.0, 2.5] {
            let mut th = [0.0];
            let mut et = [0.0];
            ev.scores_into(y, &mut th, &mut et).unwrap();
            let correction = proj.mul_vec(&th).unwrap()[0];
            assert!(correction.abs() < 1e-6, "y {y}: correction {correction}");
        }
    }

    #[test]
    fn full_information_matrix_is_psd() {
        let model = Arc::new(
            ConvolvedModel::new(
                Arc::new(gaussian_location_family(0.0)),
                gaussian_noise_family(1.0).unwrap(),
                spec(),
            )
            .unwrap(),
        );
        let blocks = information_blocks(&model, &[0.0], &[1.0]).unwrap();
        let eigs = blocks.full().eigenvalues();
        for e in eigs {
            assert!(e >= -1e-9, "eigenvalue {e}");
        }
    }

    #[test]
    fn orthogonality_of_efficient_score_and_nuisance_score() {
        // int l*(y) l_eta(y) g dy = 0: the defining projection property.
        let (theta0, eta0) = (0.1, 0.7);
        let model = Arc::new(
            ConvolvedModel::new(
                Arc::new(gaussian_location_family(theta0)),
                gaussian_noise_family(eta0).unwrap(),
                spec(),
            )
            .unwrap(),
        );
        let sys = build_efficient_scores(model.clone(), &[theta0], &[eta0]).unwrap();
        let ev = sys.evaluator().unwrap();
        let eta = [eta0];
        let mev = model.prepare(&[theta0], Some(&eta)).unwrap();
        let w = sys.observation_window();
        let cross = crate::quadrature::integrate_vector(
            |y, out: &mut [f64]| {
                let mut lstar = [0.0];
                let d = ev.l_star_into(y, &mut lstar).unwrap();
                let mut th = [0.0];
                let mut et = [0.0];
                mev.scores_into(y, &mut th, &mut et).unwrap();
                out[0] = lstar[0] * et[0] * d.value;
            },
            1,
            w,
            &spec(),
        )
        .unwrap();
        assert!(cross[0].abs() < 1e-6, "cross moment {}", cross[0]);
    }

    #[test]
    fn l_times_sigma_is_identity() {
        let nest = cosine_nest_uniform(3, spec()).unwrap();
        let model = Arc::new(
            ConvolvedModel::new(
                Arc::new(nest.level(3).unwrap()),
                known_gaussian_noise(0.5).unwrap(),
                spec(),
            )
            .unwrap(),
        );
        let sys = build_simple_scores(model).unwrap();
        let l = sys.l_matrix();
        let s = sys.sigma();
        for i in 0..3 {
            for j in 0..3 {
                let mut v = 0.0;
                for t in 0..3 {
                    v += l.get(i, t) * s.get(t, j);
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-7, "({i},{j}) = {v}");
            }
        }
    }

    #[test]
    fn plugin_example2_worked_values() {
        // Y = (theta0-1, theta0+1): s^2 = 2, scores (-0.5, +0.5).
        let est = plugin_scores_example2(&[-1.0, 1.0], 0.0).unwrap();
        assert!((est.values[0][0] + 0.5).abs() < 1e-14);
        assert!((est.values[1][0] - 0.5).abs() < 1e-14);
        assert!((est.l_hat.get(0, 0) - 2.0).abs() < 1e-14);

        // Y = (0,1,2,3,4), theta0 = 0: s^2 = 2.5, sum of scores = 4.
        let est = plugin_scores_example2(&[0.0, 1.0, 2.0, 3.0, 4.0], 0.0).unwrap();
        let total: f64 = est.values.iter().map(|r| r[0]).sum();
        assert!((total - 4.0).abs() < 1e-12);
        assert!((est.l_hat.get(0, 0) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn plugin_example2_degenerate_sample() {
        assert!(matches!(
            plugin_scores_example2(&[3.0, 3.0, 3.0], 0.0),
            Err(Error::DegenerateSample(_))
        ));
        assert!(matches!(
            plugin_scores_example2(&[1.0], 0.0),
            Err(Error::DegenerateSample(_))
        ));
    }

    #[test]
    fn plugin_example3_constants() {
        let est = plugin_scores_example3(&[0.0, 1.0], 1.0, None).unwrap();
        // eta0 = 1: C1 = 0.25, C2 = 0.5, L_hat = 1/C(1) = 2.
        assert!((est.l_hat.get(0, 0) - 2.0).abs() < 1e-14);
        // Constant sample at theta_hat: every score is -C2.
        let est = plugin_scores_example3(&[2.0, 2.0, 2.0], 1.0, None).unwrap();
        for row in &est.values {
            assert!((row[0] + 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn heavy_noise_information_is_flagged_ill_conditioned() {
        // Convolution with sigma = 0.5 noise erases the information in the
        // high cosine directions of the uniform base; at d = 10 the
        // eigenvalue ratio falls below the nonsingularity threshold and
        // the build reports a typed error instead of NaNs.
        let nest = cosine_nest_uniform(10, spec()).unwrap();
        let model = Arc::new(
            ConvolvedModel::new(
                Arc::new(nest.level(10).unwrap()),
                known_gaussian_noise(0.5).unwrap(),
                spec(),
            )
            .unwrap(),
        );
        let r = build_simple_scores(model);
        assert!(
            matches!(r.as_ref().err(), Some(Error::IllConditionedInformation { .. })),
            "expected ill-conditioned information"
        );
    }

    #[test]
    fn sample_variance_is_root_n_consistent() {
        // Median |s_n^2 - Var Y| should fall by roughly sqrt(10) per decade.
        use crate::rng::{RngStream, StreamRole};
        let var_y = 1.25;
        let mut medians = Vec::new();
        for &n in &[100usize, 1000, 10_000] {
            let mut gaps: Vec<f64> = (0..101)
                .map(|rep| {
                    let mut xs = RngStream::derive(99, rep, StreamRole::Signal);
                    let mut es = RngStream::derive(99, rep, StreamRole::Noise);
                    let data: Vec<f64> = (0..n)
                        .map(|_| xs.standard_normal() + 0.5 * es.standard_normal())
                        .collect();
                    (sample_variance(&data).unwrap() - var_y).abs()
                })
                .collect();
            gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            medians.push(gaps[50]);
        }
        for w in medians.windows(2) {
            let ratio = w[1] / w[0];
            // sqrt(10) ~ 3.16; allow generous Monte Carlo slack.
            assert!(
                ratio < 0.6 && ratio > 0.1,
                "decade ratio {ratio} outside the root-n band ({medians:?})"
            );
        }
    }

    #[test]
    fn score_table_matches_direct_evaluation() {
        let nest = cosine_nest_uniform(2, spec()).unwrap();
        let model = Arc::new(
            ConvolvedModel::new(
                Arc::new(nest.level(2).unwrap()),
                known_gaussian_noise(0.5).unwrap(),
                spec(),
            )
            .unwrap(),
        );
        let sys = build_simple_scores(model).unwrap();
        let table = ScoreTable::build(&sys, 1024).unwrap();
        let mut out = [0.0; 2];
        for i in 0..=40 {
            let y = -1.5 + 4.0 * i as f64 / 40.0;
            if !table.eval_into(y, &mut out) {
                continue;
            }
            let direct = sys.l_star(y).unwrap();
            for j in 0..2 {
                assert!(
                    (out[j] - direct[j]).abs() < 1e-6,
                    "y {y} comp {j}: {} vs {}",
                    out[j],
                    direct[j]
                );
            }
        }
        // Outside the window the table reports a miss.
        assert!(!table.eval_into(1e6, &mut out));
    }
}
