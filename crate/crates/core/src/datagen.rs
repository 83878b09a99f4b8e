//! Synthetic data: AR(1) Gaussian designs with PU labels, and the two
//! square-wave constructions used for the convergence-rate study.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm2, DenseMatrix, RngHandle};

/// Attempts inspected before the rejection sampler may give up.
pub const PROBE_BATCH: u64 = 100_000;
/// Minimum acceptance rate tolerated after [`PROBE_BATCH`] attempts.
pub const MIN_ACCEPTANCE: f64 = 1e-4;

/// Draws one row of `N(0, Σ_ρ)` with `Σ_ρ[i][j] = ρ^|i−j|`.
pub fn sample_ar1_row(p: usize, rho: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut row = Vec::with_capacity(p);
    let scale = (1.0 - rho * rho).sqrt();
    let mut prev = 0.0;
    for j in 0..p {
        let e: f64 = rng.sample(StandardNormal);
        prev = if j == 0 { e } else { rho * prev + scale * e };
        row.push(prev);
    }
    row
}

/// Logistic sigmoid, stable for large `|t|`.
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Triangle wave of period 1 with values in `[0, 1]`, peak 1 at 1/2.
pub fn square_wave(x: f64) -> f64 {
    let frac = x - x.floor();
    2.0 * frac - 4.0 * (frac - 0.5).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    /// Wave amplitude `n^{-1/3}`: unbounded second derivative.
    One,
    /// Wave amplitude `n^{-2/3}`: bounded second derivative.
    Two,
}

impl Example {
    pub fn number(self) -> u8 {
        match self {
            Example::One => 1,
            Example::Two => 2,
        }
    }
}

impl std::str::FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "one" | "One" => Ok(Example::One),
            "2" | "two" | "Two" => Ok(Example::Two),
            _ => Err(invalid("example", format!("expected 1 or 2, got {s:?}"))),
        }
    }
}

/// `x − n^a f(n^{1/3} x) / (2 + ε)` with `a = −1/3` (One) or `−2/3` (Two).
pub fn g_n(example: Example, n: usize, x: f64, epsilon: f64) -> f64 {
    let nf = n as f64;
    let amp = match example {
        Example::One => nf.powf(-1.0 / 3.0),
        Example::Two => nf.powf(-2.0 / 3.0),
    };
    x - amp * square_wave(nf.cbrt() * x) / (2.0 + epsilon)
}

/// A design, its responses, and the hidden truth behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    /// True conditional mean of each response.
    pub mu_star: Vec<f64>,
    pub u_star: Vec<f64>,
    /// Acceptance rate of the positive sampler (PU data only).
    pub prevalence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PuConfig {
    pub p: usize,
    pub n_pos: usize,
    pub n_unl: usize,
    pub rho: f64,
    pub u_star: Vec<f64>,
    pub seed: RngHandle,
}

impl PuConfig {
    /// `ρ = 0.2`, 400 + 400 samples, `u_star = (√2/2, −√2/2, 0, …)`.
    pub fn with_defaults(p: usize, seed: RngHandle) -> Result<Self> {
        if p < 2 {
            return Err(invalid("p", "default u_star needs p ≥ 2"));
        }
        let mut u_star = vec![0.0; p];
        u_star[0] = std::f64::consts::FRAC_1_SQRT_2;
        u_star[1] = -std::f64::consts::FRAC_1_SQRT_2;
        Ok(Self {
            p,
            n_pos: 400,
            n_unl: 400,
            rho: 0.2,
            u_star,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(invalid("p", "must be at least 1"));
        }
        if self.n_pos == 0 || self.n_unl == 0 {
            return Err(invalid("n_pos/n_unl", "both must be at least 1"));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(invalid("rho", format!("must lie in (-1, 1), got {}", self.rho)));
        }
        if self.u_star.len() != self.p {
            return Err(Error::LengthMismatch {
                expected: self.p,
                actual: self.u_star.len(),
            });
        }
        if let Some(index) = self.u_star.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if norm2(&self.u_star) == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(())
    }
}

/// Positive-unlabeled sample: `n_pos` rows drawn from `X | Ỹ = 1` (label 1)
/// followed by `n_unl` rows from the marginal of `X` (label 0), where
/// `P(Ỹ = 1 | X) = expit(Xᵀu_star)`.
///
/// `mu_star[i]` is `P(y = 1 | x_i)` in the pooled sample,
/// `c·h/π / (c·h/π + 1)` with `h = expit(x_iᵀu_star)`, `c = n_pos/n_unl`,
/// and `π` the observed acceptance rate.
pub fn gen_pu_dataset(cfg: &PuConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let mut rng = cfg.seed.rng();
    let mut values = Vec::with_capacity((cfg.n_pos + cfg.n_unl) * cfg.p);

    let attempts = rejection_sample(cfg.n_pos, || {
        let row = sample_ar1_row(cfg.p, cfg.rho, &mut rng);
        let keep = rng.random::<f64>() < expit(dot(&row, &cfg.u_star));
        if keep {
            values.extend_from_slice(&row);
        }
        keep
    })?;
    for _ in 0..cfg.n_unl {
        values.extend(sample_ar1_row(cfg.p, cfg.rho, &mut rng));
    }

    let n = cfg.n_pos + cfg.n_unl;
    let x = DenseMatrix::new(n, cfg.p, values)?;
    let prevalence = cfg.n_pos as f64 / attempts as f64;
    let c = cfg.n_pos as f64 / cfg.n_unl as f64;
    let mu_star = x
        .rows()
        .map(|r| {
            let odds = c * expit(dot(r, &cfg.u_star)) / prevalence;
            odds / (odds + 1.0)
        })
        .collect();
    let mut y = vec![1.0; cfg.n_pos];
    y.resize(n, 0.0);
    Ok(LabeledDataset {
        x,
        y,
        mu_star,
        u_star: cfg.u_star.clone(),
        prevalence: Some(prevalence),
    })
}

/// Calls `attempt` until it has succeeded `target` times; returns the number
/// of calls. Fails once the success rate after [`PROBE_BATCH`] calls is
/// below [`MIN_ACCEPTANCE`].
fn rejection_sample(target: usize, mut attempt: impl FnMut() -> bool) -> Result<u64> {
    let (mut accepted, mut attempts) = (0usize, 0u64);
    while accepted < target {
        attempts += 1;
        if attempt() {
            accepted += 1;
        }
        if attempts >= PROBE_BATCH {
            let rate = accepted as f64 / attempts as f64;
            if rate < MIN_ACCEPTANCE {
                return Err(Error::RejectionStall {
                    rate,
                    attempts: attempts as usize,
                });
            }
        }
    }
    Ok(attempts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundConfig {
    pub example: Example,
    pub n: usize,
    pub epsilon: f64,
    pub sigma: f64,
    pub sd1: f64,
    pub sd2: f64,
    pub seed: RngHandle,
}

impl LowerBoundConfig {
    /// Example One: `σ = 1, sd1 = 0.025, sd2 = 0.4`.
    /// Example Two: `σ = 0.8, sd1 = 0.0014, sd2 = 0.4`. `ε = 0.1` in both.
    pub fn new(example: Example, n: usize, seed: RngHandle) -> Self {
        let (sigma, sd1) = match example {
            Example::One => (1.0, 0.025),
            Example::Two => (0.8, 0.0014),
        };
        Self {
            example,
            n,
            epsilon: 0.1,
            sigma,
            sd1,
            sd2: 0.4,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("n", "must be at least 2"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", "must be non-negative"));
        }
        if !(self.sd1 > 0.0 && self.sd2 > 0.0) {
            return Err(invalid("sd1/sd2", "must be positive"));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("epsilon", "must be positive"));
        }
        Ok(())
    }
}

/// Two-column design built from `t ~ Unif[0,1]`:
/// `X₁ = (√2/sd1)·n^{-1/3} f(n^{1/3} t)`,
/// `X₂ = (√2/sd2)·(t − n^{-1/3} f(n^{1/3} t)) + √2·e` with `e ~ Unif[−½, ½]`,
/// and `Y = g_n(X u_star) + N(0, σ²)`, `u_star = (√2/2, √2/2)`.
///
/// `sigma = 0` gives noiseless responses.
pub fn gen_lowerbound_dataset(cfg: &LowerBoundConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let mut rng = cfg.seed.rng();
    let n = cfg.n;
    let nf = n as f64;
    let amp = nf.powf(-1.0 / 3.0);
    let root2 = std::f64::consts::SQRT_2;
    let u_star = vec![std::f64::consts::FRAC_1_SQRT_2; 2];

    let mut values = Vec::with_capacity(2 * n);
    let mut mu_star = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let t: f64 = rng.random();
        let e: f64 = rng.random::<f64>() - 0.5;
        let wave = amp * square_wave(nf.cbrt() * t);
        let x1 = root2 / cfg.sd1 * wave;
        let x2 = root2 / cfg.sd2 * (t - wave) + root2 * e;
        let mu = g_n(cfg.example, n, u_star[0] * x1 + u_star[1] * x2, cfg.epsilon);
        let z: f64 = rng.sample(StandardNormal);
        values.push(x1);
        values.push(x2);
        mu_star.push(mu);
        y.push(if cfg.sigma == 0.0 { mu } else { mu + cfg.sigma * z });
    }
    Ok(LabeledDataset {
        x: DenseMatrix::new(n, 2, values)?,
        y,
        mu_star,
        u_star,
        prevalence: None,
    })
}
