//! Isotonic regression: weighted PAVA, projection onto the cone of vectors
//! non-decreasing in a score ordering, and monotone link fitting.

use crate::error::{check_len, Error, Result};

/// Weighted least-squares projection of `v` onto the non-decreasing cone,
/// by the stack-based pool-adjacent-violators algorithm. Linear time.
pub fn pava(v: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_len(v.len(), w.len())?;
    if let Some(index) = w.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::NonPositiveWeight {
            index,
            value: w[index],
        });
    }
    let blocks = pool(v, w);
    let mut out = Vec::with_capacity(v.len());
    for b in &blocks {
        out.extend(std::iter::repeat_n(b.level, b.len));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct Pooled {
    level: f64,
    weight: f64,
    len: usize,
}

fn pool(v: &[f64], w: &[f64]) -> Vec<Pooled> {
    let mut stack: Vec<Pooled> = Vec::with_capacity(v.len());
    for (&level, &weight) in v.iter().zip(w) {
        let mut cur = Pooled {
            level,
            weight,
            len: 1,
        };
        while let Some(prev) = stack.last() {
            if prev.level <= cur.level {
                break;
            }
            let total = prev.weight + cur.weight;
            cur = Pooled {
                level: (prev.level * prev.weight + cur.level * cur.weight) / total,
                weight: total,
                len: prev.len + cur.len,
            };
            stack.pop();
        }
        stack.push(cur);
    }
    stack
}

/// A maximal run of constant fitted value over the score-sorted order.
/// `start..end` indexes positions in [`IsoResult::order`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsoBlock {
    pub start: usize,
    pub end: usize,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsoResult {
    /// Fitted values in the original sample order.
    pub fitted: Vec<f64>,
    /// Sample indices sorted by score (ties in original index order).
    pub order: Vec<usize>,
    pub blocks: Vec<IsoBlock>,
}

impl IsoResult {
    /// `‖v − fitted‖₂²`.
    pub fn sse(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.fitted).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

/// Indices sorted by key, plus the boundaries of runs of equal keys.
fn tie_groups(z: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));
    let mut bounds = Vec::with_capacity(z.len() + 1);
    bounds.push(0);
    for k in 1..order.len() {
        if z[order[k]] != z[order[k - 1]] {
            bounds.push(k);
        }
    }
    bounds.push(order.len());
    (order, bounds)
}

/// Isotonic regression of `v` onto the ordering of `z`: the minimizer of
/// `‖v − w‖₂` subject to `w_i ≤ w_j` whenever `z_i ≤ z_j`.
///
/// Equal scores constrain their fitted values to be equal, so tie groups are
/// averaged into one weighted observation before pooling.
pub fn iso_project(z: &[f64], v: &[f64]) -> Result<IsoResult> {
    if z.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_len(z.len(), v.len())?;
    let (order, bounds) = tie_groups(z);

    let n_groups = bounds.len() - 1;
    let mut means = Vec::with_capacity(n_groups);
    let mut weights = Vec::with_capacity(n_groups);
    for g in bounds.windows(2) {
        let sum: f64 = order[g[0]..g[1]].iter().map(|&i| v[i]).sum();
        let count = (g[1] - g[0]) as f64;
        means.push(sum / count);
        weights.push(count);
    }

    let pooled = pool(&means, &weights);
    let mut fitted = vec![0.0; v.len()];
    let mut blocks = Vec::with_capacity(pooled.len());
    let mut group = 0;
    for b in pooled {
        let start = bounds[group];
        group += b.len;
        let end = bounds[group];
        for &i in &order[start..end] {
            fitted[i] = b.level;
        }
        blocks.push(IsoBlock {
            start,
            end,
            level: b.level,
        });
    }
    Ok(IsoResult {
        fitted,
        order,
        blocks,
    })
}

/// Monotone step estimate of a link function: one level per distinct score.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLink {
    knots: Vec<f64>,
    levels: Vec<f64>,
}

impl StepLink {
    /// Checks that knots strictly increase, levels do not decrease, and both
    /// are nonempty with equal length.
    pub fn new(knots: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::EmptyInput);
        }
        check_len(knots.len(), levels.len())?;
        if let Some(index) = knots.iter().chain(&levels).position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if knots.windows(2).any(|k| k[0] >= k[1]) {
            return Err(crate::error::invalid("knots", "must be strictly increasing"));
        }
        if levels.windows(2).any(|l| l[0] > l[1]) {
            return Err(crate::error::invalid("levels", "must be non-decreasing"));
        }
        Ok(Self { knots, levels })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Linear interpolation between neighbouring knots, held constant
    /// outside `[knots[0], knots[last]]`.
    pub fn predict(&self, score: f64) -> f64 {
        let k = &self.knots;
        let last = k.len() - 1;
        if score <= k[0] {
            return self.levels[0];
        }
        if score >= k[last] {
            return self.levels[last];
        }
        // first knot strictly greater than score; 1 ≤ hi ≤ last here
        let hi = k.partition_point(|&x| x <= score);
        let lo = hi - 1;
        let t = (score - k[lo]) / (k[hi] - k[lo]);
        self.levels[lo] + t * (self.levels[hi] - self.levels[lo])
    }
}

/// Fits a [`StepLink`] to `(score, y)` pairs by isotonic regression.
pub fn fit_link(scores: &[f64], y: &[f64]) -> Result<StepLink> {
    let iso = iso_project(scores, y)?;
    let mut knots = Vec::new();
    let mut levels = Vec::new();
    for &i in &iso.order {
        let s = scores[i];
        if knots.last() != Some(&s) {
            knots.push(s);
            levels.push(iso.fitted[i]);
        }
    }
    StepLink::new(knots, levels)
}

pub fn predict_link(link: &StepLink, score: f64) -> f64 {
    link.predict(score)
}
