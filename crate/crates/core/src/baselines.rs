//! Comparison estimators.
//!
//! * PV1: `argmax_{u ∈ K(s)} ⟨y, X u⟩`, by projected gradient ascent.
//! * PV2: `argmin_{u ∈ K(s)} ½‖y − X u‖₂²`, by projected gradient descent.
//! * ℓ1-penalized logistic regression with an unpenalized intercept, by
//!   accelerated proximal gradient, plus a λ grid and stratified
//!   cross-validation on held-out binomial deviance.
//!
//! Projections onto `K(s) = {‖u‖₂ ≤ 1, ‖u‖₁ ≤ √s}` go through
//! [`dykstra_intersection`].

use rand::seq::SliceRandom;

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg::{distance, dot, mean, spectral_norm_sq, DenseMatrix, RngHandle};
use crate::operators::{dykstra_intersection, BallSpec, SparsityLevel, DYKSTRA_MAX_ITER, DYKSTRA_TOL};

/// Largest |intercept| reported when one class is absent.
pub const INTERCEPT_CLIP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// Inverse Lipschitz constant from a power iteration.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgConfig {
    pub step: StepSize,
    pub tol: f64,
    pub max_iter: usize,
    /// Center each column and scale it to unit sample SD before fitting.
    pub standardize: bool,
}

impl Default for PgConfig {
    fn default() -> Self {
        Self {
            step: StepSize::Auto,
            tol: 1e-6,
            max_iter: 10_000,
            standardize: false,
        }
    }
}

impl PgConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        if let StepSize::Fixed(a) = self.step {
            if !(a > 0.0 && a.is_finite()) {
                return Err(invalid("step", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Column-standardized copy of a design. Constant columns are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub matrix: DenseMatrix,
    /// Original indices of the retained columns.
    pub kept: Vec<usize>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardized {
    /// Embeds coefficients over the kept columns back into `p` entries.
    pub fn scatter(&self, coef: &[f64], p: usize) -> Vec<f64> {
        let mut out = vec![0.0; p];
        for (&j, &c) in self.kept.iter().zip(coef) {
            out[j] = c;
        }
        out
    }
}

pub fn standardize(x: &DenseMatrix) -> Result<Standardized> {
    let n = x.n_rows();
    if n < 2 {
        return Err(Error::InsufficientData("standardizing needs two rows".into()));
    }
    let mut kept = Vec::new();
    let mut means = Vec::new();
    let mut sds = Vec::new();
    for j in 0..x.n_cols() {
        let col = x.column(j);
        let m = mean(&col);
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if sd <= 1e-12 * m.abs().max(1.0) {
            log::warn!("dropping constant column {j}");
            continue;
        }
        kept.push(j);
        means.push(m);
        sds.push(sd);
    }
    let mut values = Vec::with_capacity(n * kept.len());
    for row in x.rows() {
        for (k, &j) in kept.iter().enumerate() {
            values.push((row[j] - means[k]) / sds[k]);
        }
    }
    Ok(Standardized {
        matrix: DenseMatrix::new(n, kept.len(), values)?,
        kept,
        means,
        sds,
    })
}

/// Result of a PV1/PV2 fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PvFit {
    /// Estimate in `K(s)`, one entry per original column (dropped columns are 0).
    /// When standardizing, this is the direction in standardized coordinates.
    pub u: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each iteration: `⟨y, X u⟩` for PV1, `½‖y − X u‖²` for PV2.
    pub objective: Vec<f64>,
}

fn prepare(x: &DenseMatrix, standardize_flag: bool) -> Result<Option<Standardized>> {
    if standardize_flag {
        standardize(x).map(Some)
    } else {
        Ok(None)
    }
}

fn auto_step(x: &DenseMatrix, step: StepSize) -> Result<f64> {
    match step {
        StepSize::Fixed(a) => Ok(a),
        StepSize::Auto => {
            let l = spectral_norm_sq(x, 1e-8, 10_000)?.value;
            Ok(if l > 0.0 { 1.0 / l } else { 1.0 })
        }
    }
}

fn project_k(v: &[f64], balls: BallSpec) -> Result<Vec<f64>> {
    Ok(dykstra_intersection(v, balls, DYKSTRA_TOL, DYKSTRA_MAX_ITER)?.point)
}

/// Projected gradient ascent for PV1 starting from the zero vector.
pub fn fit_pv1(x: &DenseMatrix, y: &[f64], s: SparsityLevel, cfg: &PgConfig) -> Result<PvFit> {
    cfg.validate()?;
    check_len(x.n_rows(), y.len())?;
    if x.n_rows() == 0 || x.n_cols() == 0 {
        return Err(Error::EmptyInput);
    }
    let std = prepare(x, cfg.standardize)?;
    let design = std.as_ref().map_or(x, |s| &s.matrix);
    let balls = BallSpec::approx_sparse(s);
    let alpha = auto_step(design, cfg.step)?;
    let grad = design.t_matvec(y);

    let mut u = vec![0.0; design.n_cols()];
    let mut objective = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let trial: Vec<f64> = u.iter().zip(&grad).map(|(a, g)| a + alpha * g).collect();
        let next = project_k(&trial, balls)?;
        let moved = distance(&next, &u);
        u = next;
        objective.push(dot(&grad, &u));
        if moved < cfg.tol {
            converged = true;
            break;
        }
    }
    let u = match &std {
        Some(s) => s.scatter(&u, x.n_cols()),
        None => u,
    };
    Ok(PvFit {
        u,
        iterations,
        converged,
        objective,
    })
}

/// Projected gradient descent for PV2 starting from the zero vector.
pub fn fit_pv2(x: &DenseMatrix, y: &[f64], s: SparsityLevel, cfg: &PgConfig) -> Result<PvFit> {
    cfg.validate()?;
    check_len(x.n_rows(), y.len())?;
    if x.n_rows() == 0 || x.n_cols() == 0 {
        return Err(Error::EmptyInput);
    }
    let std = prepare(x, cfg.standardize)?;
    let design = std.as_ref().map_or(x, |s| &s.matrix);
    let balls = BallSpec::approx_sparse(s);
    let alpha = auto_step(design, cfg.step)?;

    let half_sq = |u: &[f64]| -> (f64, Vec<f64>) {
        let r: Vec<f64> = design.matvec(u).iter().zip(y).map(|(a, b)| a - b).collect();
        (0.5 * dot(&r, &r), r)
    };
    let mut u = vec![0.0; design.n_cols()];
    let (_, mut resid) = half_sq(&u);
    let mut objective = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let grad = design.t_matvec(&resid);
        let trial: Vec<f64> = u.iter().zip(&grad).map(|(a, g)| a - alpha * g).collect();
        let next = project_k(&trial, balls)?;
        let moved = distance(&next, &u);
        u = next;
        let (obj, r) = half_sq(&u);
        resid = r;
        objective.push(obj);
        if moved < cfg.tol {
            converged = true;
            break;
        }
    }
    let u = match &std {
        Some(s) => s.scatter(&u, x.n_cols()),
        None => u,
    };
    Ok(PvFit {
        u,
        iterations,
        converged,
        objective,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticFit {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.intercept + dot(row, &self.coefficients)
    }
}

fn check_binary(y: &[f64]) -> Result<()> {
    if let Some(index) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(invalid("y", format!("labels must be 0 or 1 (index {index})")));
    }
    Ok(())
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    crate::datagen::expit(t)
}

/// Mean binomial deviance `2/n Σ [log(1 + e^η) − y η]`.
pub fn binomial_deviance(eta: &[f64], y: &[f64]) -> f64 {
    2.0 * eta
        .iter()
        .zip(y)
        .map(|(&e, &yi)| softplus(e) - yi * e)
        .sum::<f64>()
        / eta.len() as f64
}

/// Smallest λ at which all coefficients are zero: `‖Xᵀ(y − ȳ)‖∞ / n`.
pub fn lambda_max(x: &DenseMatrix, y: &[f64]) -> Result<f64> {
    check_len(x.n_rows(), y.len())?;
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ybar = mean(y);
    let centered: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    Ok(x.t_matvec(&centered).iter().fold(0.0f64, |m, g| m.max(g.abs())) / y.len() as f64)
}

/// `count` log-spaced values from `λ_max` down to `λ_max · ratio`.
pub fn lambda_grid(x: &DenseMatrix, y: &[f64], count: usize, ratio: f64) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(invalid("count", "need at least two grid points"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(invalid("ratio", "must lie in (0, 1)"));
    }
    let top = lambda_max(x, y)?;
    if !(top > 0.0) {
        return Err(Error::InsufficientData(
            "λ_max is zero (constant labels or design)".into(),
        ));
    }
    let step = ratio.ln() / (count - 1) as f64;
    Ok((0..count)
        .map(|k| {
            if k == count - 1 {
                top * ratio
            } else {
                top * (step * k as f64).exp()
            }
        })
        .collect())
}

/// Precomputed pieces shared by every λ on a path.
#[derive(Clone, Copy)]
struct LogisticProblem<'a> {
    x: &'a DenseMatrix,
    y: &'a [f64],
    step: f64,
}

impl LogisticProblem<'_> {
    fn new<'a>(x: &'a DenseMatrix, y: &'a [f64], cfg: &PgConfig) -> Result<LogisticProblem<'a>> {
        let step = match cfg.step {
            StepSize::Fixed(a) => a,
            StepSize::Auto => {
                // curvature of the mean log-loss is at most σ_max([X 1])² / (4n)
                let l = spectral_norm_sq(&x.with_ones_column(), 1e-6, 10_000)?.value;
                4.0 * y.len() as f64 / l
            }
        };
        Ok(LogisticProblem { x, y, step })
    }

    /// Gradient of the mean log-loss at `(b, β)`: returns `(∂b, ∂β)`.
    fn gradient(&self, b: f64, beta: &[f64], eta: &mut [f64], resid: &mut [f64], grad: &mut [f64]) -> f64 {
        self.x.matvec_into(beta, eta);
        let n = self.y.len() as f64;
        for i in 0..eta.len() {
            eta[i] += b;
            resid[i] = (sigmoid(eta[i]) - self.y[i]) / n;
        }
        self.x.t_matvec_into(resid, grad);
        resid.iter().sum()
    }

    fn kkt_residual(&self, lambda: f64, gb: f64, beta: &[f64], grad: &[f64]) -> f64 {
        let mut r = gb.abs();
        for (&bj, &gj) in beta.iter().zip(grad) {
            let v = if bj == 0.0 {
                (gj.abs() - lambda).max(0.0)
            } else {
                (gj + lambda * bj.signum()).abs()
            };
            r = r.max(v);
        }
        r
    }

    /// Solves on the columns kept by the sequential strong rule
    /// `|∂_j| ≥ 2λ − λ_prev` (plus the current support), then re-solves with
    /// any column whose full-gradient KKT condition fails.
    fn solve_screened(
        &self,
        lambda: f64,
        prev_lambda: f64,
        b0: f64,
        beta0: &[f64],
        cfg: &PgConfig,
    ) -> LogisticFit {
        let (n, p) = (self.x.n_rows(), self.x.n_cols());
        let mut eta = vec![0.0; n];
        let mut resid = vec![0.0; n];
        let mut grad = vec![0.0; p];
        self.gradient(b0, beta0, &mut eta, &mut resid, &mut grad);
        let cut = 2.0 * lambda - prev_lambda;
        let mut keep: Vec<bool> = (0..p).map(|j| beta0[j] != 0.0 || grad[j].abs() >= cut).collect();

        loop {
            let cols: Vec<usize> = (0..p).filter(|&j| keep[j]).collect();
            let fit = if cols.len() == p {
                self.solve(lambda, b0, beta0, cfg)
            } else {
                let sub = self.x.select_columns(&cols);
                let start: Vec<f64> = cols.iter().map(|&j| beta0[j]).collect();
                let part = LogisticProblem { x: &sub, ..*self }.solve(lambda, b0, &start, cfg);
                let mut coefficients = vec![0.0; p];
                for (&j, &c) in cols.iter().zip(&part.coefficients) {
                    coefficients[j] = c;
                }
                LogisticFit { coefficients, ..part }
            };
            if cols.len() == p {
                return fit;
            }
            self.gradient(fit.intercept, &fit.coefficients, &mut eta, &mut resid, &mut grad);
            let mut violated = false;
            for j in 0..p {
                if !keep[j] && grad[j].abs() > lambda + cfg.tol {
                    keep[j] = true;
                    violated = true;
                }
            }
            if !violated {
                return fit;
            }
        }
    }

    /// FISTA with gradient-based momentum restart, from `(b0, beta0)`.
    fn solve(&self, lambda: f64, b0: f64, beta0: &[f64], cfg: &PgConfig) -> LogisticFit {
        let (n, p) = (self.x.n_rows(), self.x.n_cols());
        let mut eta = vec![0.0; n];
        let mut resid = vec![0.0; n];
        let mut grad = vec![0.0; p];

        let (mut b, mut beta) = (b0, beta0.to_vec());
        let (mut yb, mut ybeta) = (b, beta.clone());
        let mut t = 1.0f64;
        let thresh = self.step * lambda;
        let mut converged = false;
        let mut iterations = 0;

        while iterations < cfg.max_iter {
            iterations += 1;
            let gb = self.gradient(yb, &ybeta, &mut eta, &mut resid, &mut grad);
            let nb = yb - self.step * gb;
            let nbeta: Vec<f64> = ybeta
                .iter()
                .zip(&grad)
                .map(|(v, g)| {
                    let z = v - self.step * g;
                    let excess = z.abs() - thresh;
                    // rounding slack keeps λ = λ_max at the null model
                    if excess <= 1e-12 * thresh {
                        0.0
                    } else {
                        z.signum() * excess
                    }
                })
                .collect();

            // restart when the momentum direction opposes the proximal step
            let mut align = (yb - nb) * (nb - b);
            for j in 0..p {
                align += (ybeta[j] - nbeta[j]) * (nbeta[j] - beta[j]);
            }
            let t_next = if align > 0.0 {
                1.0
            } else {
                0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
            };
            let mom = if align > 0.0 { 0.0 } else { (t - 1.0) / t_next };
            yb = nb + mom * (nb - b);
            for j in 0..p {
                ybeta[j] = nbeta[j] + mom * (nbeta[j] - beta[j]);
            }
            b = nb;
            beta = nbeta;
            t = t_next;

            if iterations % 10 == 0 || iterations == cfg.max_iter {
                let gb = self.gradient(b, &beta, &mut eta, &mut resid, &mut grad);
                if self.kkt_residual(lambda, gb, &beta, &grad) < cfg.tol {
                    converged = true;
                    break;
                }
            }
        }
        LogisticFit {
            intercept: b,
            coefficients: beta,
            lambda,
            iterations,
            converged,
        }
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn degenerate_fit(y: &[f64], p: usize, lambda: f64) -> LogisticFit {
    let intercept = if y[0] == 1.0 {
        INTERCEPT_CLIP
    } else {
        -INTERCEPT_CLIP
    };
    log::warn!("all labels equal; intercept clipped to {intercept}");
    LogisticFit {
        intercept,
        coefficients: vec![0.0; p],
        lambda,
        iterations: 0,
        converged: true,
    }
}

/// Solves the path over `lambdas` (any order, usually decreasing), warm
/// starting each fit from the previous one.
pub fn fit_logistic_path(
    x: &DenseMatrix,
    y: &[f64],
    lambdas: &[f64],
    cfg: &PgConfig,
) -> Result<Vec<LogisticFit>> {
    cfg.validate()?;
    check_len(x.n_rows(), y.len())?;
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_binary(y)?;
    if let Some(&l) = lambdas.iter().find(|l| !(**l >= 0.0)) {
        return Err(invalid("lambda", format!("must be non-negative, got {l}")));
    }
    let p = x.n_cols();
    let ybar = mean(y);
    if ybar == 0.0 || ybar == 1.0 {
        return Ok(lambdas.iter().map(|&l| degenerate_fit(y, p, l)).collect());
    }

    let std = prepare(x, cfg.standardize)?;
    let design = std.as_ref().map_or(x, |s| &s.matrix);
    let problem = LogisticProblem::new(design, y, cfg)?;

    let mut b = logit(ybar);
    let mut beta = vec![0.0; design.n_cols()];
    let mut prev_lambda = lambda_max(design, y)?;
    let mut fits = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let fit = problem.solve_screened(lambda, prev_lambda, b, &beta, cfg);
        prev_lambda = lambda;
        if !fit.converged {
            log::debug!("logistic fit at λ = {lambda} hit max_iter");
        }
        b = fit.intercept;
        beta.clone_from(&fit.coefficients);
        fits.push(match &std {
            Some(s) => unstandardize(fit, s, p),
            None => fit,
        });
    }
    Ok(fits)
}

fn unstandardize(fit: LogisticFit, std: &Standardized, p: usize) -> LogisticFit {
    let scaled: Vec<f64> = fit
        .coefficients
        .iter()
        .zip(&std.sds)
        .map(|(c, sd)| c / sd)
        .collect();
    let shift: f64 = scaled.iter().zip(&std.means).map(|(c, m)| c * m).sum();
    LogisticFit {
        intercept: fit.intercept - shift,
        coefficients: std.scatter(&scaled, p),
        ..fit
    }
}

/// ℓ1-penalized logistic regression at a single λ, started at `β = 0`,
/// intercept `logit(ȳ)`.
pub fn fit_sparse_logistic(x: &DenseMatrix, y: &[f64], lambda: f64, cfg: &PgConfig) -> Result<LogisticFit> {
    Ok(fit_logistic_path(x, y, &[lambda], cfg)?.remove(0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub lambda: f64,
    pub index: usize,
    /// Mean held-out deviance per grid value.
    pub mean_deviance: Vec<f64>,
}

/// Fold labels (0..folds) balanced within each class, shuffled by `rng`.
pub fn stratified_folds(y: &[f64], folds: usize, rng: RngHandle) -> Vec<usize> {
    let mut r = rng.rng();
    let mut pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1.0).collect();
    let mut neg: Vec<usize> = (0..y.len()).filter(|&i| y[i] != 1.0).collect();
    pos.shuffle(&mut r);
    neg.shuffle(&mut r);
    let mut assignment = vec![0; y.len()];
    for (k, &i) in pos.iter().chain(&neg).enumerate() {
        assignment[i] = k % folds;
    }
    assignment
}

/// Picks the λ with the smallest mean held-out binomial deviance over
/// stratified folds. Ties go to the larger λ.
pub fn cross_validate_lambda(
    x: &DenseMatrix,
    y: &[f64],
    folds: usize,
    grid: &[f64],
    cfg: &PgConfig,
    rng: RngHandle,
) -> Result<CvResult> {
    if folds < 2 {
        return Err(invalid("folds", "need at least two folds"));
    }
    if grid.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_len(x.n_rows(), y.len())?;
    check_binary(y)?;
    let assignment = stratified_folds(y, folds, rng);

    // solve the path in decreasing λ for warm starts, then map back
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    let sorted: Vec<f64> = order.iter().map(|&k| grid[k]).collect();

    let mut total = vec![0.0; grid.len()];
    for fold in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| assignment[i] == fold);
        let test_y: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        let train_y: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let has_both = |v: &[f64]| v.contains(&1.0) && v.contains(&0.0);
        if !has_both(&test_y) || !has_both(&train_y) {
            return Err(Error::InsufficientData(format!(
                "fold {fold} lacks one of the classes"
            )));
        }
        let test_x = x.select_rows(&test);
        let train_x = x.select_rows(&train);
        let path = fit_logistic_path(&train_x, &train_y, &sorted, cfg)?;
        for (fit, &k) in path.iter().zip(&order) {
            let eta: Vec<f64> = test_x.rows().map(|r| fit.linear_predictor(r)).collect();
            total[k] += binomial_deviance(&eta, &test_y);
        }
    }
    let mean_deviance: Vec<f64> = total.iter().map(|t| t / folds as f64).collect();

    let mut best = order[0];
    for &k in &order[1..] {
        let (d, db) = (mean_deviance[k], mean_deviance[best]);
        if d < db - 1e-12 * db.abs() {
            best = k;
        }
    }
    Ok(CvResult {
        lambda: grid[best],
        index: best,
        mean_deviance,
    })
}
