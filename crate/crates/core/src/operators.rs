//! Sparse and convex-set operators.
//!
//! `hard_threshold` and `project_orthogonal` drive the single-index solver;
//! the ball projections and their Dykstra intersection back the projected
//! gradient baselines over `K(s) = {‖x‖₂ ≤ 1, ‖x‖₁ ≤ √s}`.

use crate::error::{invalid, Error, Result};
use crate::linalg::{distance, dot, norm1, norm2};

/// Working or true sparsity `s ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SparsityLevel(usize);

impl SparsityLevel {
    pub fn new(s: usize) -> Result<Self> {
        if s == 0 {
            return Err(invalid("s", "sparsity level must be at least 1"));
        }
        Ok(Self(s))
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }
}

/// Radii of the two balls whose intersection is projected onto.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallSpec {
    pub l2_radius: f64,
    pub l1_radius: f64,
}

impl BallSpec {
    pub fn new(l2_radius: f64, l1_radius: f64) -> Result<Self> {
        if !(l2_radius > 0.0 && l2_radius.is_finite()) {
            return Err(invalid("l2_radius", "must be positive"));
        }
        if !(l1_radius > 0.0 && l1_radius.is_finite()) {
            return Err(invalid("l1_radius", "must be positive"));
        }
        Ok(Self { l2_radius, l1_radius })
    }

    /// The approximately-sparse set `K(s)`: unit ℓ2 ball cut by the ℓ1 ball of radius `√s`.
    pub fn approx_sparse(s: SparsityLevel) -> Self {
        Self {
            l2_radius: 1.0,
            l1_radius: (s.get() as f64).sqrt(),
        }
    }

    pub fn contains(&self, v: &[f64], slack: f64) -> bool {
        norm2(v) <= self.l2_radius + slack && norm1(v) <= self.l1_radius + slack
    }
}

/// Keeps the `s` largest-magnitude entries and zeros the rest. Among equal
/// magnitudes the lower index wins.
pub fn hard_threshold(v: &[f64], s: SparsityLevel) -> Vec<f64> {
    let s = s.get();
    if s >= v.len() {
        return v.to_vec();
    }
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.select_nth_unstable_by(s - 1, |&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    let mut out = vec![0.0; v.len()];
    for &i in &idx[..s] {
        out[i] = v[i];
    }
    out
}

/// `g − ⟨g, u⟩ u` for a unit vector `u`.
pub fn project_orthogonal(u: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    crate::error::check_len(u.len(), g.len())?;
    let norm = norm2(u);
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::NonUnitInput { norm });
    }
    let c = dot(g, u);
    Ok(g.iter().zip(u).map(|(gi, ui)| gi - c * ui).collect())
}

pub fn project_l2_ball(v: &[f64], r: f64) -> Vec<f64> {
    let norm = norm2(v);
    if norm <= r {
        v.to_vec()
    } else {
        let scale = r / norm;
        v.iter().map(|x| x * scale).collect()
    }
}

/// Euclidean projection onto `{‖x‖₁ ≤ r}`: soft-thresholding at the level
/// found by sorting magnitudes. `O(n log n)`.
pub fn project_l1_ball(v: &[f64], r: f64) -> Vec<f64> {
    if norm1(v) <= r {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - r) / (j + 1) as f64;
        if m > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    v.iter()
        .map(|&x| x.signum() * (x.abs() - theta).max(0.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DykstraResult {
    pub point: Vec<f64>,
    pub iterations: usize,
    /// False if `max_iter` ran out; `point` is then the last iterate.
    pub converged: bool,
}

pub const DYKSTRA_TOL: f64 = 1e-8;
pub const DYKSTRA_MAX_ITER: usize = 10_000;

/// Projection onto the intersection of an ℓ1 and an ℓ2 ball by Dykstra's
/// alternating projections with correction terms.
///
/// Stops when one full sweep (`x → P_l1 → P_l2`) moves the iterate less than
/// `tol` in total, which also freezes both correction terms. The returned point is
/// the final iterate pushed through `P_l2 ∘ P_l1` once more, which changes it
/// by at most the remaining ℓ1 violation and makes it exactly feasible
/// (shrinking toward the origin cannot leave the ℓ1 ball).
pub fn dykstra_intersection(v: &[f64], balls: BallSpec, tol: f64, max_iter: usize) -> Result<DykstraResult> {
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    if balls.contains(v, 0.0) {
        return Ok(DykstraResult {
            point: v.to_vec(),
            iterations: 0,
            converged: true,
        });
    }
    let n = v.len();
    let mut x = v.to_vec();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut buf = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        for i in 0..n {
            buf[i] = x[i] + p[i];
        }
        let y = project_l1_ball(&buf, balls.l1_radius);
        for i in 0..n {
            p[i] = buf[i] - y[i];
            buf[i] = y[i] + q[i];
        }
        let next = project_l2_ball(&buf, balls.l2_radius);
        for i in 0..n {
            q[i] = buf[i] - next[i];
        }
        // p and q change by x − y and y − next; both must vanish, since x
        // alone can sit still for many sweeps while the corrections build up
        let d1 = distance(&x, &y);
        let d2 = distance(&y, &next);
        x = next;
        if (d1 * d1 + d2 * d2).sqrt() < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("Dykstra projection hit max_iter = {max_iter}");
    }
    let point = project_l2_ball(&project_l1_ball(&x, balls.l1_radius), balls.l2_radius);
    Ok(DykstraResult {
        point,
        iterations,
        converged,
    })
}
