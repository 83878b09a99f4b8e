//! Monte-Carlo harnesses and the metrics they report.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::baselines::{cross_validate_lambda, fit_logistic_path, lambda_grid, PgConfig};
use crate::datagen::{gen_lowerbound_dataset, gen_pu_dataset, Example, LowerBoundConfig, PuConfig};
use crate::error::{check_len, invalid, Error, Result};
use crate::linalg::{dot, mean, unit_normalize, DenseMatrix, RngHandle};
use crate::operators::SparsityLevel;
use crate::solver::{self, SodSimConfig};

const Z95: f64 = 1.96;

/// Monte-Carlo summary of one estimator in one setting.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    /// Tags such as `("p", "100")`.
    pub setting: Vec<(String, String)>,
    /// Replications that produced an estimate.
    pub reps: usize,
    /// Replications that failed and were excluded.
    pub failed: usize,
    pub bias: f64,
    pub bias_ci: f64,
    pub sd: f64,
    pub sd_ci: f64,
    pub rmse: f64,
    pub rmse_ci: f64,
    pub correlation: f64,
    pub correlation_ci: f64,
    /// `mean ‖û − mean(û)‖²`; `rmse² = bias² + variance`.
    pub variance: f64,
}

impl MetricsRow {
    pub fn tag(&self, key: &str) -> Option<&str> {
        self.setting
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn with_tags(mut self, tags: &[(&str, String)]) -> Self {
        self.setting = tags.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        self
    }
}

/// Sample SD with `M − 1` in the denominator; zero for a single value.
fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn half_width(v: &[f64]) -> f64 {
    Z95 * sample_sd(v) / (v.len() as f64).sqrt()
}

/// Bias, SD, RMSE and correlation of unit-normalized estimates against the
/// unit-normalized truth, with 95% normal-approximation half-widths.
///
/// The RMSE and bias half-widths use the delta method: for RMSE the per-rep
/// squared error, scaled by `1 / (2·rmse)`; for bias the per-rep projection
/// onto the bias direction.
pub fn estimation_metrics(method: &str, estimates: &[Vec<f64>], u_star: &[f64]) -> Result<MetricsRow> {
    if estimates.is_empty() {
        return Err(Error::EmptyEstimateList);
    }
    let truth = unit_normalize(u_star)?;
    let units = estimates
        .iter()
        .map(|e| {
            check_len(truth.len(), e.len())?;
            unit_normalize(e)
        })
        .collect::<Result<Vec<_>>>()?;
    let m = units.len();
    if m == 1 {
        log::warn!("{method}: single replication, spread and intervals are zero");
    }
    let p = truth.len();
    let mut centre = vec![0.0; p];
    for u in &units {
        for (c, v) in centre.iter_mut().zip(u) {
            *c += v / m as f64;
        }
    }
    let offset: Vec<f64> = centre.iter().zip(&truth).map(|(a, b)| a - b).collect();
    let bias = dot(&offset, &offset).sqrt();

    let spread: Vec<f64> = units
        .iter()
        .map(|u| u.iter().zip(&centre).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .collect();
    let dev: Vec<f64> = spread.iter().map(|v| v.sqrt()).collect();
    let sq_err: Vec<f64> = units
        .iter()
        .map(|u| u.iter().zip(&truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .collect();
    let corr: Vec<f64> = units.iter().map(|u| dot(u, &truth)).collect();

    let rmse = mean(&sq_err).sqrt();
    let rmse_ci = if rmse > 0.0 {
        half_width(&sq_err) / (2.0 * rmse)
    } else {
        0.0
    };
    let bias_ci = if bias > 0.0 {
        let dir: Vec<f64> = offset.iter().map(|v| v / bias).collect();
        let proj: Vec<f64> = units.iter().map(|u| dot(u, &dir)).collect();
        half_width(&proj)
    } else if m > 1 {
        Z95 * (spread.iter().sum::<f64>() / (m - 1) as f64 / m as f64).sqrt()
    } else {
        0.0
    };

    Ok(MetricsRow {
        method: method.to_string(),
        setting: Vec::new(),
        reps: m,
        failed: 0,
        bias,
        bias_ci,
        sd: mean(&dev),
        sd_ci: half_width(&dev),
        rmse,
        rmse_ci,
        correlation: mean(&corr),
        correlation_ci: half_width(&corr),
        variance: mean(&spread),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub f1: f64,
    pub brier: f64,
    /// `None` when the labels contain a single class.
    pub auc: Option<f64>,
}

/// Area under the ROC curve by the Mann–Whitney statistic with midranks.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_len(scores.len(), labels.len())?;
    let n_pos = labels.iter().filter(|&&l| l == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // positions i..=j share the midrank
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| labels[k] == 1.0).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Accuracy and F1 at `probs ≥ threshold`, Brier score, and AUC.
/// F1 is 0 when there are no true positives.
pub fn classification_metrics(probs: &[f64], labels: &[f64], threshold: f64) -> Result<ClassMetrics> {
    check_len(probs.len(), labels.len())?;
    if probs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(index) = labels.iter().position(|&l| l != 0.0 && l != 1.0) {
        return Err(invalid("labels", format!("must be 0 or 1 (index {index})")));
    }
    if let Some(index) = probs.iter().position(|p| !(0.0..=1.0).contains(p)) {
        return Err(invalid("probs", format!("must lie in [0, 1] (index {index})")));
    }
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &l) in probs.iter().zip(labels) {
        let predicted = p >= threshold;
        let actual = l == 1.0;
        match (predicted, actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
        if predicted == actual {
            correct += 1;
        }
    }
    let n = probs.len() as f64;
    let f1 = if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    let brier = probs
        .iter()
        .zip(labels)
        .map(|(p, l)| (l - p) * (l - p))
        .sum::<f64>()
        / n;
    let auc = match auc(probs, labels) {
        Ok(a) => Some(a),
        Err(Error::SingleClassAuc) => None,
        Err(e) => return Err(e),
    };
    Ok(ClassMetrics {
        accuracy: correct as f64 / n,
        f1,
        brier,
        auc,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaFit {
    pub theta: f64,
    pub u: [f64; 2],
    /// `‖Y − iso_{X u_θ}(Y)‖₂` at the minimizer.
    pub loss: f64,
}

/// Isotonic residual norm for a score ordering that is kept between calls.
struct OrderedIso<'a> {
    y: &'a [f64],
    order: Vec<usize>,
    blocks: Vec<(usize, f64, usize)>,
}

impl<'a> OrderedIso<'a> {
    fn new(y: &'a [f64]) -> Self {
        Self {
            y,
            order: (0..y.len()).collect(),
            blocks: Vec::new(),
        }
    }

    /// Insertion sort by `(score, index)`: near-linear when the previous
    /// order is almost right.
    fn reorder(&mut self, z: &[f64]) {
        let key = |i: usize| (z[i], i);
        for k in 1..self.order.len() {
            let cur = self.order[k];
            let mut j = k;
            while j > 0 && {
                let (a, ia) = key(self.order[j - 1]);
                let (b, ib) = key(cur);
                a > b || (a == b && ia > ib)
            } {
                self.order[j] = self.order[j - 1];
                j -= 1;
            }
            self.order[j] = cur;
        }
    }

    fn residual_norm(&mut self, z: &[f64]) -> f64 {
        self.reorder(z);
        let (y, order) = (self.y, &self.order);
        // stack of (first position, sum, count); equal scores are pooled first
        self.blocks.clear();
        let mut k = 0;
        while k < order.len() {
            let start = k;
            let mut sum = 0.0;
            while k < order.len() && z[order[k]] == z[order[start]] {
                sum += y[order[k]];
                k += 1;
            }
            let mut block = (start, sum, k - start);
            while let Some(&(s, sm, c)) = self.blocks.last() {
                if sm / c as f64 > block.1 / block.2 as f64 {
                    self.blocks.pop();
                    block = (s, sm + block.1, c + block.2);
                } else {
                    break;
                }
            }
            self.blocks.push(block);
        }
        let mut sse = 0.0;
        for (b, &(start, sum, count)) in self.blocks.iter().enumerate() {
            let level = sum / count as f64;
            let end = self.blocks.get(b + 1).map_or(order.len(), |next| next.0);
            for &i in &order[start..end] {
                sse += (y[i] - level) * (y[i] - level);
            }
        }
        sse.sqrt()
    }
}

/// Minimizes the isotonic residual norm over `u_θ = (cos θ, sin θ)` for
/// `θ = k·increment ∈ [0, π/2]`. Ties go to the smallest θ.
pub fn grid_minimize_theta(x: &DenseMatrix, y: &[f64], increment: f64) -> Result<ThetaFit> {
    if x.n_cols() != 2 {
        return Err(Error::NotTwoColumns(x.n_cols()));
    }
    check_len(x.n_rows(), y.len())?;
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(increment > 0.0 && increment.is_finite()) {
        return Err(invalid("increment", "must be positive"));
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    let steps = (half_pi / increment * (1.0 + 1e-12)).floor() as usize;

    let (c0, c1) = (x.column(0), x.column(1));
    let mut iso = OrderedIso::new(y);
    let mut z = vec![0.0; y.len()];
    let mut best: Option<ThetaFit> = None;
    for k in 0..=steps {
        let theta = if k as f64 * increment > half_pi {
            half_pi
        } else {
            k as f64 * increment
        };
        let u = [theta.cos(), theta.sin()];
        for i in 0..z.len() {
            z[i] = u[0] * c0[i] + u[1] * c1[i];
        }
        let loss = iso.residual_norm(&z);
        if best.as_ref().is_none_or(|b| loss < b.loss) {
            best = Some(ThetaFit { theta, u, loss });
        }
    }
    Ok(best.expect("grid has at least one point"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(ln n, ln rmse)` pairs.
    pub points: Vec<(f64, f64)>,
}

/// Least-squares line through `(ln n, ln rmse)`.
pub fn slope_loglog(ns: &[usize], rmses: &[f64]) -> Result<SlopeFit> {
    check_len(ns.len(), rmses.len())?;
    if let Some(index) = rmses.iter().position(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(invalid("rmses", format!("must be positive (index {index})")));
    }
    let points: Vec<(f64, f64)> = ns
        .iter()
        .zip(rmses)
        .map(|(&n, &r)| ((n as f64).ln(), r.ln()))
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if points.len() < 2 || sxx == 0.0 {
        return Err(Error::UnderdeterminedSlope);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
        points,
    })
}

/// Settings for the PU comparison between SOD-SIM and sparse logistic
/// regression.
#[derive(Debug, Clone, PartialEq)]
pub struct PuStudyConfig {
    pub ps: Vec<usize>,
    pub reps: usize,
    pub n_pos: usize,
    pub n_unl: usize,
    pub rho: f64,
    pub sodsim: SodSimConfig,
    pub logistic: PgConfig,
    pub folds: usize,
    pub lambda_count: usize,
    pub lambda_ratio: f64,
    pub seed: u64,
}

impl Default for PuStudyConfig {
    fn default() -> Self {
        Self {
            ps: vec![100, 400, 800, 1600],
            reps: 100,
            n_pos: 400,
            n_unl: 400,
            rho: 0.2,
            sodsim: SodSimConfig::new(SparsityLevel::new(10).expect("10 ≥ 1")),
            logistic: PgConfig {
                tol: 1e-5,
                ..PgConfig::default()
            },
            folds: 5,
            lambda_count: 100,
            lambda_ratio: 1e-3,
            seed: 0,
        }
    }
}

pub const METHOD_SODSIM: &str = "sodsim";
pub const METHOD_SPARSE_LR: &str = "sparse_lr";

const CV_TAG: u64 = 0x00C0_FFEE;

/// Random streams of replication `rep` in setting `tag`.
pub fn rep_handle(seed: u64, rep: usize, tag: u64) -> RngHandle {
    RngHandle::new(seed, rep as u64).substream(tag)
}

/// One replication: returns the SOD-SIM and sparse logistic estimates.
pub fn pu_replication(cfg: &PuStudyConfig, p: usize, rep: usize) -> (Result<Vec<f64>>, Result<Vec<f64>>) {
    let handle = rep_handle(cfg.seed, rep, p as u64);
    let data = PuConfig::with_defaults(p, handle).and_then(|mut pu| {
        pu.n_pos = cfg.n_pos;
        pu.n_unl = cfg.n_unl;
        pu.rho = cfg.rho;
        gen_pu_dataset(&pu)
    });
    let data = match data {
        Ok(d) => d,
        Err(e) => return (Err(e.clone()), Err(e)),
    };
    let sod = solver::fit(&data.x, &data.y, &cfg.sodsim).map(|f| f.u_hat);
    let lr = (|| {
        let grid = lambda_grid(&data.x, &data.y, cfg.lambda_count, cfg.lambda_ratio)?;
        let cv = cross_validate_lambda(
            &data.x,
            &data.y,
            cfg.folds,
            &grid,
            &cfg.logistic,
            handle.substream(CV_TAG),
        )?;
        let path = fit_logistic_path(&data.x, &data.y, &grid[..=cv.index], &cfg.logistic)?;
        Ok(path.last().expect("non-empty path").coefficients.clone())
    })();
    (sod, lr)
}

fn summarize(
    method: &str,
    outcomes: Vec<Result<Vec<f64>>>,
    u_star: &[f64],
    tags: &[(&str, String)],
) -> Result<MetricsRow> {
    let mut estimates = Vec::with_capacity(outcomes.len());
    let mut failed = 0;
    for (rep, o) in outcomes.into_iter().enumerate() {
        match o.and_then(|e| unit_normalize(&e)) {
            Ok(e) => estimates.push(e),
            Err(e) => {
                log::warn!("{method} {tags:?} rep {rep} excluded: {e}");
                failed += 1;
            }
        }
    }
    let mut row = estimation_metrics(method, &estimates, u_star)?.with_tags(tags);
    row.failed = failed;
    Ok(row)
}

/// Runs every replication for every `p`; two rows (SOD-SIM, sparse
/// logistic) per `p`. Replications run on the current rayon pool and are
/// aggregated in replication order.
pub fn run_pu_comparison(cfg: &PuStudyConfig) -> Result<Vec<MetricsRow>> {
    if cfg.reps == 0 {
        return Err(invalid("reps", "must be at least 1"));
    }
    cfg.sodsim.validate()?;
    let mut rows = Vec::new();
    for &p in &cfg.ps {
        let outcomes: Vec<_> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| pu_replication(cfg, p, rep))
            .collect();
        let u_star = PuConfig::with_defaults(p, RngHandle::new(0, 0))?.u_star;
        let (sod, lr): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
        let tags = [("p", p.to_string())];
        rows.push(summarize(METHOD_SODSIM, sod, &u_star, &tags)?);
        rows.push(summarize(METHOD_SPARSE_LR, lr, &u_star, &tags)?);
    }
    Ok(rows)
}

/// Settings for the θ-grid convergence-rate study.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundStudyConfig {
    pub example: Example,
    pub ns: Vec<usize>,
    pub reps: usize,
    pub increment: f64,
    pub epsilon: f64,
    pub sigma: f64,
    pub sd1: f64,
    pub sd2: f64,
    pub seed: u64,
}

impl LowerBoundStudyConfig {
    pub fn new(example: Example) -> Self {
        let base = LowerBoundConfig::new(example, 2, RngHandle::new(0, 0));
        Self {
            example,
            ns: vec![100, 150, 200, 300, 400, 600, 800, 1200],
            reps: 100,
            increment: 0.001,
            epsilon: base.epsilon,
            sigma: base.sigma,
            sd1: base.sd1,
            sd2: base.sd2,
            seed: 0,
        }
    }

    fn dataset_config(&self, n: usize, rep: usize) -> LowerBoundConfig {
        let tag = (u64::from(self.example.number()) << 32) | n as u64;
        LowerBoundConfig {
            example: self.example,
            n,
            epsilon: self.epsilon,
            sigma: self.sigma,
            sd1: self.sd1,
            sd2: self.sd2,
            seed: rep_handle(self.seed, rep, tag),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundStudy {
    /// One row per `n`, tagged with `example` and `n`.
    pub rows: Vec<MetricsRow>,
    pub slope: SlopeFit,
}

pub const METHOD_GLOBAL: &str = "global";

/// Global θ-grid estimates for every `n` and replication, then the log-log
/// slope of RMSE against `n`.
pub fn run_lowerbound_study(cfg: &LowerBoundStudyConfig) -> Result<LowerBoundStudy> {
    if cfg.reps == 0 {
        return Err(invalid("reps", "must be at least 1"));
    }
    let distinct = {
        let mut v = cfg.ns.clone();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    if distinct < 2 {
        return Err(Error::UnderdeterminedSlope);
    }
    let mut rows = Vec::new();
    for &n in &cfg.ns {
        let outcomes: Vec<Result<Vec<f64>>> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| {
                let data = gen_lowerbound_dataset(&cfg.dataset_config(n, rep))?;
                Ok(grid_minimize_theta(&data.x, &data.y, cfg.increment)?.u.to_vec())
            })
            .collect();
        let u_star = [std::f64::consts::FRAC_1_SQRT_2; 2];
        let tags = [
            ("example", cfg.example.number().to_string()),
            ("n", n.to_string()),
        ];
        rows.push(summarize(METHOD_GLOBAL, outcomes, &u_star, &tags)?);
    }
    let rmses: Vec<f64> = rows.iter().map(|r| r.rmse).collect();
    let slope = slope_loglog(&cfg.ns, &rmses)?;
    Ok(LowerBoundStudy { rows, slope })
}

/// Fixed-width scientific notation, 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_pu_csv<W: Write>(rows: &[MetricsRow], mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "method,p,reps,bias,bias_ci,sd,rmse,rmse_ci,correlation,correlation_ci"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.tag("p").unwrap_or(""),
            r.reps,
            fmt_num(r.bias),
            fmt_num(r.bias_ci),
            fmt_num(r.sd),
            fmt_num(r.rmse),
            fmt_num(r.rmse_ci),
            fmt_num(r.correlation),
            fmt_num(r.correlation_ci),
        )?;
    }
    Ok(())
}

pub fn write_lowerbound_csv<W: Write>(rows: &[MetricsRow], mut out: W) -> io::Result<()> {
    writeln!(out, "example,n,reps,rmse,rmse_ci")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.tag("example").unwrap_or(""),
            r.tag("n").unwrap_or(""),
            r.reps,
            fmt_num(r.rmse),
            fmt_num(r.rmse_ci),
        )?;
    }
    Ok(())
}

pub fn write_slope_csv<W: Write>(fits: &[(Example, SlopeFit)], mut out: W) -> io::Result<()> {
    writeln!(out, "example,slope,intercept,r_squared")?;
    for (ex, f) in fits {
        writeln!(
            out,
            "{},{},{},{}",
            ex.number(),
            fmt_num(f.slope),
            fmt_num(f.intercept),
            fmt_num(f.r_squared),
        )?;
    }
    Ok(())
}
