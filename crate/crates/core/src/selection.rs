//! Penalties and the data-driven selection rule.
//!
//! S is the smallest k in 1..=d maximizing U_k - pi(k, n). Schwarz's
//! penalty j log n is the default. Akaike's penalty j is accepted because
//! the underlying theory lists it as a possible choice, but it fails the
//! divergence requirement pi(j, n) - pi(1, n) -> infinity, so it carries a
//! warning instead of an error.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::ConvolvedModel;
use crate::scores::{
    build_efficient_scores, build_simple_scores, plugin_scores_at_eta, sample_variance,
    ScoreSystem,
};
use crate::teststat::{decide, nested_statistics, StatKind, TestReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyKind {
    Schwarz,
    Akaike,
    Custom,
}

/// Penalty pi(j, n) attributed to the j-th model at sample size n.
#[derive(Debug, Clone)]
pub struct Penalty {
    kind: PenaltyKind,
    name: String,
    expr: Option<Arc<Expr>>,
    warning: Option<String>,
}

impl Penalty {
    pub fn schwarz() -> Self {
        Self {
            kind: PenaltyKind::Schwarz,
            name: "schwarz".into(),
            expr: None,
            warning: None,
        }
    }

    pub fn akaike() -> Self {
        Self {
            kind: PenaltyKind::Akaike,
            name: "akaike".into(),
            expr: None,
            warning: Some(
                "akaike penalty pi(j,n) = j does not satisfy pi(j,n) - pi(1,n) -> infinity; \
                 the selection rule loses its dimension-collapse guarantee"
                    .into(),
            ),
        }
    }

    /// Restricted arithmetic expression in j and n, e.g. `j*log(n)` or
    /// `0.5*j*sqrt(n)`.
    pub fn custom(src: &str) -> Result<Self> {
        let expr = Arc::new(parse_expr(src)?);
        let mut p = Self {
            kind: PenaltyKind::Custom,
            name: format!("custom:{src}"),
            expr: Some(expr),
            warning: None,
        };
        p.validate(10)?;
        if let Err(e) = p.check_divergence(10) {
            p.warning = Some(format!("{e}"));
        }
        Ok(p)
    }

    /// Parse `schwarz | akaike | custom:<expr>`.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "schwarz" => Ok(Self::schwarz()),
            "akaike" => Ok(Self::akaike()),
            other => {
                if let Some(expr) = other.strip_prefix("custom:") {
                    Self::custom(expr)
                } else {
                    Err(Error::Config(format!(
                        "unknown penalty `{other}` (expected schwarz, akaike, or custom:<expr>)"
                    )))
                }
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    pub fn value(&self, j: usize, n: usize) -> f64 {
        let jf = j as f64;
        let nf = n as f64;
        match self.kind {
            PenaltyKind::Schwarz => jf * nf.ln(),
            PenaltyKind::Akaike => jf,
            PenaltyKind::Custom => self.expr.as_ref().expect("custom expr").eval(jf, nf),
        }
    }

    /// Reject penalties that are non-monotone in j or violate pi(k, n) =
    /// o(n) on the probe grid n in {1e2, .., 1e6}.
    pub fn validate(&self, d: usize) -> Result<()> {
        let probes = [100usize, 1_000, 10_000, 100_000, 1_000_000];
        for &n in &probes {
            for j in 1..d {
                let a = self.value(j, n);
                let b = self.value(j + 1, n);
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(Error::Config(format!(
                        "penalty `{}` is not strictly increasing in j at n = {n}: pi({j}) = {a}, pi({}) = {b}",
                        self.name,
                        j + 1
                    )));
                }
            }
        }
        // o(n): pi(k, n)/n must decay along the geometric grid.
        for j in [1usize, d.max(2)] {
            let mut prev = f64::INFINITY;
            for &n in &probes {
                let r = self.value(j, n) / n as f64;
                if !r.is_finite() || r < 0.0 {
                    return Err(Error::Config(format!(
                        "penalty `{}` is not finite and nonnegative at j = {j}, n = {n}",
                        self.name
                    )));
                }
                if r >= prev * 0.999 {
                    return Err(Error::Config(format!(
                        "penalty `{}` violates pi(k,n) = o(n) on the probe grid at j = {j}, n = {n}",
                        self.name
                    )));
                }
                prev = r;
            }
        }
        Ok(())
    }

    /// Definition-1 divergence check pi(j, n) - pi(1, n) -> infinity,
    /// probed as strict unbounded growth along the geometric grid.
    pub fn check_divergence(&self, d: usize) -> Result<()> {
        let probes = [100usize, 1_000, 10_000, 100_000, 1_000_000];
        for j in 2..=d.max(2) {
            let mut prev = -f64::INFINITY;
            for &n in &probes {
                let delta = self.value(j, n) - self.value(1, n);
                if delta <= prev {
                    return Err(Error::Config(format!(
                        "penalty `{}`: pi({j},n) - pi(1,n) is not growing on the probe grid \
                         (stuck near {delta:.3})",
                        self.name
                    )));
                }
                prev = delta;
            }
        }
        Ok(())
    }
}

// Minimal recursive-descent parser for penalty expressions:
// expr := term (('+'|'-') term)* ; term := unary (('*'|'/') unary)* ;
// unary := '-' unary | atom ; atom := number | 'j' | 'n' | fn '(' expr ')'
// | '(' expr ')' ; fn := log | sqrt.
#[derive(Debug)]
enum Expr {
    Num(f64),
    J,
    N,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Log(Box<Expr>),
    Sqrt(Box<Expr>),
}

impl Expr {
    fn eval(&self, j: f64, n: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::J => j,
            Expr::N => n,
            Expr::Add(a, b) => a.eval(j, n) + b.eval(j, n),
            Expr::Sub(a, b) => a.eval(j, n) - b.eval(j, n),
            Expr::Mul(a, b) => a.eval(j, n) * b.eval(j, n),
            Expr::Div(a, b) => a.eval(j, n) / b.eval(j, n),
            Expr::Neg(a) => -a.eval(j, n),
            Expr::Log(a) => a.eval(j, n).ln(),
            Expr::Sqrt(a) => a.eval(j, n).sqrt(),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

fn parse_expr(src: &str) -> Result<Expr> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(Error::Config(format!(
            "penalty expression: trailing input at byte {}",
            p.pos
        )));
    }
    Ok(e)
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        let Some(c) = self.peek() else {
            return Err(Error::Config("penalty expression: unexpected end".into()));
        };
        if c == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            if self.peek() != Some(b')') {
                return Err(Error::Config("penalty expression: missing )".into()));
            }
            self.pos += 1;
            return Ok(e);
        }
        if c.is_ascii_digit() || c == b'.' {
            let start = self.pos;
            while self.pos < self.src.len()
                && (self.src[self.pos].is_ascii_digit()
                    || self.src[self.pos] == b'.'
                    || self.src[self.pos] == b'e'
                    || self.src[self.pos] == b'E')
            {
                self.pos += 1;
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
            let v: f64 = text
                .parse()
                .map_err(|_| Error::Config(format!("penalty expression: bad number `{text}`")))?;
            return Ok(Expr::Num(v));
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
                self.pos += 1;
            }
            let word = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
            return match word {
                "j" => Ok(Expr::J),
                "n" => Ok(Expr::N),
                "log" | "ln" => {
                    if self.peek() != Some(b'(') {
                        return Err(Error::Config("penalty expression: log needs (".into()));
                    }
                    self.pos += 1;
                    let e = self.expr()?;
                    if self.peek() != Some(b')') {
                        return Err(Error::Config("penalty expression: missing )".into()));
                    }
                    self.pos += 1;
                    Ok(Expr::Log(Box::new(e)))
                }
                "sqrt" => {
                    if self.peek() != Some(b'(') {
                        return Err(Error::Config("penalty expression: sqrt needs (".into()));
                    }
                    self.pos += 1;
                    let e = self.expr()?;
                    if self.peek() != Some(b')') {
                        return Err(Error::Config("penalty expression: missing )".into()));
                    }
                    self.pos += 1;
                    Ok(Expr::Sqrt(Box::new(e)))
                }
                other => Err(Error::Config(format!(
                    "penalty expression: unknown symbol `{other}`"
                ))),
            };
        }
        Err(Error::Config(format!(
            "penalty expression: unexpected byte `{}`",
            c as char
        )))
    }
}

/// The selection rule: the smallest k maximizing stat_k - pi(k, n).
/// Returns a 1-based dimension.
pub fn select(statistics: &[f64], penalty: &Penalty, n: usize) -> usize {
    let mut best_k = 1;
    let mut best = f64::NEG_INFINITY;
    for (i, &stat) in statistics.iter().enumerate() {
        let v = stat - penalty.value(i + 1, n);
        if v > best {
            best = v;
            best_k = i + 1;
        }
    }
    best_k
}

/// How the composite test estimates the nuisance parameter.
#[derive(Debug, Clone)]
pub enum NuisanceEstimator {
    /// eta_hat = sqrt(max(s_n^2 - Var_0(X), eta_floor^2)) for the Gaussian
    /// scale family: variance matching with the null signal variance
    /// (computed by quadrature from the model).
    GaussianMoment { eta_floor: f64 },
    /// Fixed nuisance value (diagnostics).
    Fixed(Vec<f64>),
}

/// Null-signal variance by quadrature, used by the moment estimator.
pub fn null_signal_variance(model: &ConvolvedModel) -> Result<f64> {
    let theta0 = model.theta_null();
    let fam = model.signal().clone();
    let theta = theta0.clone();
    let w = crate::quadrature::truncate_support(
        {
            let fam = fam.clone();
            let theta = theta.clone();
            move |x| fam.density(&theta, x).unwrap_or(0.0)
        },
        model.signal().support_hint(),
        model.spec(),
    )?;
    let m = crate::quadrature::integrate_vector(
        |x, out: &mut [f64]| {
            let f = fam.density(&theta, x).unwrap_or(f64::NAN);
            out[0] = f * x;
            out[1] = f * x * x;
        },
        2,
        w,
        model.spec(),
    )?;
    Ok(m[1] - m[0] * m[0])
}

/// Estimate eta_hat from the data for the composite test.
pub fn estimate_eta(
    model: &ConvolvedModel,
    estimator: &NuisanceEstimator,
    data: &[f64],
) -> Result<Vec<f64>> {
    match estimator {
        NuisanceEstimator::Fixed(eta) => Ok(eta.clone()),
        NuisanceEstimator::GaussianMoment { eta_floor } => {
            let noise = model.noise().parametric()?;
            if noise.dim() != 1 {
                return Err(Error::OutOfDomain(
                    "moment estimator handles one-dimensional noise families".into(),
                ));
            }
            let s2 = sample_variance(data)?;
            let v0 = null_signal_variance(model)?;
            let floor2 = eta_floor * eta_floor;
            Ok(vec![(s2 - v0).max(floor2).sqrt()])
        }
    }
}

/// Configuration for the data-driven test.
#[derive(Debug, Clone)]
pub struct DataDrivenSpec {
    pub penalty: Penalty,
    pub alpha: f64,
    /// Diagnostic mode: refer the selected statistic to chi-square(S)
    /// instead of the asymptotic chi-square(1).
    pub df_at_s: bool,
}

/// Run the data-driven test on the model's full nested dimension.
///
/// Known noise gives the U_S statistic with exact scores; parametric noise
/// gives W_S with plug-in scores at the estimated nuisance. All nested
/// statistics share one d-dimensional score system (leading-block
/// normalizers), which keeps U_k monotone in k.
pub fn data_driven_test(
    data: &[f64],
    model: Arc<ConvolvedModel>,
    nuisance: Option<&NuisanceEstimator>,
    dd: &DataDrivenSpec,
) -> Result<TestReport> {
    if data.is_empty() {
        return Err(Error::DegenerateSample("empty sample".into()));
    }
    let n = data.len();
    let (system, kind): (ScoreSystem, StatKind) = match model.noise() {
        crate::families::NoiseModel::Known(_) => (build_simple_scores(model.clone())?, StatKind::U),
        crate::families::NoiseModel::Parametric(_) => {
            let estimator = nuisance.ok_or_else(|| {
                Error::Config("composite model requires a nuisance estimator".into())
            })?;
            let eta_hat = estimate_eta(&model, estimator, data)?;
            let theta0 = model.theta_null();
            (
                build_efficient_scores(model.clone(), &theta0, &eta_hat)?,
                StatKind::W,
            )
        }
    };

    let rows = match kind {
        StatKind::U => system.rows(data)?,
        StatKind::W => plugin_scores_at_eta(&system, data)?.values,
    };
    report_from_rows(&rows, system.sigma(), kind, n, dd)
}

/// Assemble a report from score rows and the d-dimensional Sigma.
pub fn report_from_rows(
    rows: &[Vec<f64>],
    sigma: &crate::linalg::SymMat,
    kind: StatKind,
    n: usize,
    dd: &DataDrivenSpec,
) -> Result<TestReport> {
    let stats = nested_statistics(rows, sigma, kind)?;
    let values: Vec<f64> = stats.iter().map(|s| s.value).collect();
    let penalized: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(i, v)| v - dd.penalty.value(i + 1, n))
        .collect();
    let s = select(&values, &dd.penalty, n);
    let stat_at_s = values[s - 1];
    let reference_df = if dd.df_at_s { s } else { 1 };
    let decision = decide(stat_at_s, reference_df, dd.alpha)?;
    Ok(TestReport {
        kind,
        statistics: values,
        penalized,
        selected_s: s,
        stat_at_s,
        reference_df,
        p_value: decision.p_value,
        alpha: dd.alpha,
        reject: decision.reject,
    })
}
