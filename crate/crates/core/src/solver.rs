//! Sparse orthogonal descent for the monotone single-index model.
//!
//! Each iteration fits the link by isotonic regression of `Y` on the current
//! scores `X u`, takes a gradient-like step on the residual that is projected
//! orthogonally to `u`, then hard-thresholds to `s` entries and renormalizes:
//!
//! ```text
//! r_t   = iso_{X u_{t-1}}(Y)
//! ũ_t   = u_{t-1} + η · P⊥_{u_{t-1}}( Xᵀ(Y − r_t) / n )
//! u_t   = Ψ_s(ũ_t) / ‖Ψ_s(ũ_t)‖₂
//! ```
//!
//! The starting point is the thresholded, normalized `Xᵀ(Y − Ȳ1)`.

use crate::error::{check_len, invalid, Error, Result};
use crate::isotonic::{fit_link, iso_project, IsoResult, StepLink};
use crate::linalg::{distance, norm2, unit_normalize, DenseMatrix};
use crate::operators::{hard_threshold, project_orthogonal, SparsityLevel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SodSimConfig {
    pub s: SparsityLevel,
    /// Step size η.
    pub eta: f64,
    pub max_iter: usize,
    /// Stop once `‖u_t − u_{t−1}‖₂` drops below this.
    pub param_tol: f64,
    pub record_trajectory: bool,
}

impl SodSimConfig {
    pub const DEFAULT_ETA: f64 = 0.1;
    pub const DEFAULT_MAX_ITER: usize = 1000;
    pub const DEFAULT_PARAM_TOL: f64 = 5e-4;

    pub fn new(s: SparsityLevel) -> Self {
        Self {
            s,
            eta: Self::DEFAULT_ETA,
            max_iter: Self::DEFAULT_MAX_ITER,
            param_tol: Self::DEFAULT_PARAM_TOL,
            record_trajectory: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta", "must be a non-negative finite number"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        if !(self.param_tol > 0.0) {
            return Err(invalid("param_tol", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub iter: usize,
    /// `‖u_t − u_{t−1}‖₂`.
    pub step_change: f64,
    /// `n^{-1/2} ‖Y − iso_{X u_t}(Y)‖₂`.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SodSimFit {
    /// Unit-norm, at most `s`-sparse index estimate.
    pub u_hat: Vec<f64>,
    /// Isotonic link fitted on the final scores `X u_hat`.
    pub link: StepLink,
    pub iterations: usize,
    pub converged: bool,
    /// Isotonic residual loss at `u_hat`.
    pub loss: f64,
    pub trajectory: Option<Vec<TrajectoryPoint>>,
}

/// Starting direction `Ψ_s(Xᵀ(Y − Ȳ1)) / ‖Ψ_s(Xᵀ(Y − Ȳ1))‖₂`.
pub fn initialize(x: &DenseMatrix, y: &[f64], s: SparsityLevel) -> Result<Vec<f64>> {
    check_len(x.n_rows(), y.len())?;
    if y.len() < 2 {
        return Err(Error::InsufficientData("need at least two samples".into()));
    }
    let ybar = crate::linalg::mean(y);
    let centered: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let c = x.t_matvec(&centered);
    unit_normalize(&hard_threshold(&c, s)).map_err(|_| Error::DegenerateInitialization)
}

/// Everything one iteration computes, kept for diagnostics.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// `u_t`.
    pub next: Vec<f64>,
    /// `ũ_t` before thresholding.
    pub pre_threshold: Vec<f64>,
    /// `‖Ψ_s(ũ_t)‖₂`; at least 1 because the step is orthogonal to a unit vector.
    pub thresholded_norm: f64,
    /// Isotonic fit of `Y` on `X u_{t−1}`.
    pub iso: IsoResult,
}

/// One iteration from `u_prev` (unit norm, `s`-sparse).
pub fn step(x: &DenseMatrix, y: &[f64], u_prev: &[f64], cfg: &SodSimConfig) -> Result<StepOutcome> {
    check_len(x.n_rows(), y.len())?;
    check_len(x.n_cols(), u_prev.len())?;
    let n = y.len() as f64;
    let scores = x.matvec(u_prev);
    let iso = iso_project(&scores, y)?;
    let resid: Vec<f64> = y.iter().zip(&iso.fitted).map(|(a, b)| (a - b) / n).collect();
    let grad = x.t_matvec(&resid);
    let ortho = project_orthogonal(u_prev, &grad)?;
    let pre_threshold: Vec<f64> = u_prev.iter().zip(&ortho).map(|(u, g)| u + cfg.eta * g).collect();
    let kept = hard_threshold(&pre_threshold, cfg.s);
    let thresholded_norm = norm2(&kept);
    assert!(
        thresholded_norm > 0.0,
        "thresholded step vanished; the orthogonal step keeps its norm at least 1"
    );
    let next = kept.iter().map(|v| v / thresholded_norm).collect();
    Ok(StepOutcome {
        next,
        pre_threshold,
        thresholded_norm,
        iso,
    })
}

/// Runs the solver from [`initialize`] until the iterate moves less than
/// `param_tol` or `max_iter` steps have been taken.
pub fn fit(x: &DenseMatrix, y: &[f64], cfg: &SodSimConfig) -> Result<SodSimFit> {
    cfg.validate()?;
    if x.n_cols() == 0 {
        return Err(Error::EmptyInput);
    }
    if cfg.s.get() > x.n_cols() {
        return Err(invalid("s", format!("exceeds the dimension p = {}", x.n_cols())));
    }
    let mut u = initialize(x, y, cfg.s)?;
    let root_n = (y.len() as f64).sqrt();
    let mut trajectory = cfg.record_trajectory.then(Vec::new);
    let mut converged = false;
    let mut iterations = 0;
    // change of the iterate produced by the previous step; its loss is only
    // known once the next step has fitted the isotonic regression at it
    let mut pending: Option<(usize, f64)> = None;

    while iterations < cfg.max_iter {
        iterations += 1;
        let out = step(x, y, &u, cfg)?;
        if let (Some(traj), Some((iter, step_change))) = (trajectory.as_mut(), pending) {
            traj.push(TrajectoryPoint {
                iter,
                step_change,
                loss: out.iso.sse(y).sqrt() / root_n,
            });
        }
        let change = distance(&out.next, &u);
        u = out.next;
        pending = Some((iterations, change));
        if change < cfg.param_tol {
            converged = true;
            break;
        }
    }

    let scores = x.matvec(&u);
    let final_iso = iso_project(&scores, y)?;
    let loss = final_iso.sse(y).sqrt() / root_n;
    if let (Some(traj), Some((iter, step_change))) = (trajectory.as_mut(), pending) {
        traj.push(TrajectoryPoint {
            iter,
            step_change,
            loss,
        });
    }
    let link = fit_link(&scores, y)?;
    if !converged {
        log::debug!(
            "solver stopped at max_iter = {} without meeting param_tol",
            cfg.max_iter
        );
    }
    Ok(SodSimFit {
        u_hat: u,
        link,
        iterations,
        converged,
        loss,
        trajectory,
    })
}

/// `n^{-1/2} ‖iso_{X u}(Y) − μ*‖₂`, the error of the fitted conditional mean
/// against the true one (known only in simulations).
pub fn prediction_error(x: &DenseMatrix, y: &[f64], mu_star: &[f64], u: &[f64]) -> Result<f64> {
    check_len(x.n_rows(), y.len())?;
    check_len(y.len(), mu_star.len())?;
    check_len(x.n_cols(), u.len())?;
    let iso = iso_project(&x.matvec(u), y)?;
    Ok(distance(&iso.fitted, mu_star) / (y.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, support_size, RngHandle};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn s(k: usize) -> SparsityLevel {
        SparsityLevel::new(k).unwrap()
    }

    #[test]
    fn initialize_examples() {
        let x = DenseMatrix::identity(3);
        assert_eq!(
            initialize(&x, &[2.0, 2.0, 2.0], s(1)),
            Err(Error::DegenerateInitialization)
        );
        // centered Y = [-10/3, -10/3, 20/3]
        assert_eq!(
            initialize(&x, &[0.0, 0.0, 10.0], s(1)).unwrap(),
            vec![0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn step_with_zero_eta_or_perfect_fit_is_stationary() {
        let x = DenseMatrix::identity(4);
        let u = vec![0.6, 0.8, 0.0, 0.0];
        let mut cfg = SodSimConfig::new(s(2));
        cfg.eta = 0.0;
        let y = [3.0, -1.0, 2.0, 0.5];
        let out = step(&x, &y, &u, &cfg).unwrap();
        assert!(distance(&out.next, &u) < 1e-15);

        // Y monotone in X u: isotonic residual is zero
        cfg.eta = 0.5;
        let y = x.matvec(&u);
        let out = step(&x, &y, &u, &cfg).unwrap();
        assert!(distance(&out.next, &u) < 1e-15);
    }

    #[test]
    fn step_contracts_toward_truth_in_two_dimensions() {
        let mut rng = RngHandle::new(3, 0).rng();
        let n = 200;
        let vals: Vec<f64> = (0..2 * n).map(|_| rng.sample(StandardNormal)).collect();
        let x = DenseMatrix::new(n, 2, vals).unwrap();
        let u_star = unit_normalize(&[1.0, 1.0]).unwrap();
        let y = x.matvec(&u_star);
        let u_prev = unit_normalize(&[1.0, 0.6]).unwrap();
        let mut cfg = SodSimConfig::new(s(2));
        cfg.eta = 0.5;
        let out = step(&x, &y, &u_prev, &cfg).unwrap();
        assert!(distance(&out.next, &u_star) < distance(&u_prev, &u_star));
    }

    #[test]
    fn fit_single_iteration_budget() {
        let x = DenseMatrix::identity(3);
        let mut cfg = SodSimConfig::new(s(2));
        cfg.max_iter = 1;
        cfg.record_trajectory = true;
        let f = fit(&x, &[0.0, 1.0, 5.0], &cfg).unwrap();
        assert_eq!(f.iterations, 1);
        assert_eq!(f.trajectory.unwrap().len(), 1);
        cfg.max_iter = 0;
        assert!(fit(&x, &[0.0, 1.0, 5.0], &cfg).is_err());
    }

    #[test]
    fn fit_rejects_sparsity_above_dimension() {
        let x = DenseMatrix::identity(3);
        assert!(fit(&x, &[0.0, 1.0, 5.0], &SodSimConfig::new(s(4))).is_err());
    }

    #[test]
    fn fit_invariants_on_gaussian_design() {
        let mut rng = RngHandle::new(8, 0).rng();
        let (n, p) = (300, 30);
        let vals: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
        let x = DenseMatrix::new(n, p, vals).unwrap();
        let mut u_star = vec![0.0; p];
        u_star[0] = 0.8;
        u_star[4] = -0.6;
        let y: Vec<f64> = x
            .matvec(&u_star)
            .iter()
            .map(|t| t.powi(3) + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut cfg = SodSimConfig::new(s(5));
        cfg.eta = 0.5;
        cfg.record_trajectory = true;
        let f = fit(&x, &y, &cfg).unwrap();
        assert!((norm2(&f.u_hat) - 1.0).abs() < 1e-9);
        assert!(support_size(&f.u_hat) <= 5);
        assert!(dot(&f.u_hat, &u_star) > 0.95, "{}", dot(&f.u_hat, &u_star));
        let traj = f.trajectory.unwrap();
        assert_eq!(traj.len(), f.iterations);
        assert_eq!(traj.last().unwrap().loss, f.loss);
        assert_eq!(f.link.knots().len(), n);
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = RngHandle::new(12, 0).rng();
        let vals: Vec<f64> = (0..400).map(|_| rng.sample(StandardNormal)).collect();
        let x = DenseMatrix::new(40, 10, vals).unwrap();
        let y: Vec<f64> = x.column(0).iter().map(|t| t.exp()).collect();
        let cfg = SodSimConfig::new(s(3));
        assert_eq!(fit(&x, &y, &cfg).unwrap(), fit(&x, &y, &cfg).unwrap());
    }

    #[test]
    fn prediction_error_examples() {
        let x = DenseMatrix::identity(3);
        let u = [0.0, 0.0, 1.0];
        let y = [1.0, 1.0, 4.0];
        let iso = iso_project(&x.matvec(&u), &y).unwrap().fitted;
        assert_eq!(prediction_error(&x, &y, &iso, &u).unwrap(), 0.0);
        let shifted: Vec<f64> = iso.iter().map(|v| v + 0.7).collect();
        assert!((prediction_error(&x, &y, &shifted, &u).unwrap() - 0.7).abs() < 1e-12);
        assert!(matches!(
            prediction_error(&x, &y, &[0.0], &u),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
