//! Dense containers, the seeded randomness contract, and small vector kernels.
//!
//! Everything is `f64` and row-major. Vectors are plain slices; the matrix
//! type exists because the estimators only ever need `X v`, `X^T r`, and row
//! subsets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, invalid, Error, Result};

/// Dense row-major matrix; one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    /// Wraps row-major `values`. Fails on a length mismatch or a non-finite entry.
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        check_len(n_rows * n_cols, values.len())?;
        if let Some(index) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for row in rows {
            check_len(n_cols, row.as_ref().len())?;
            values.extend_from_slice(row.as_ref());
        }
        Self::new(rows.len(), n_cols, values)
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            values: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    /// `X v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        self.matvec_into(v, &mut out);
        out
    }

    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.n_cols);
        assert_eq!(out.len(), self.n_rows);
        for (o, row) in out.iter_mut().zip(self.rows()) {
            *o = dot(row, v);
        }
    }

    /// `X^T r`.
    pub fn t_matvec(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        self.t_matvec_into(r, &mut out);
        out
    }

    pub fn t_matvec_into(&self, r: &[f64], out: &mut [f64]) {
        assert_eq!(r.len(), self.n_rows);
        assert_eq!(out.len(), self.n_cols);
        out.fill(0.0);
        for (&ri, row) in r.iter().zip(self.rows()) {
            if ri != 0.0 {
                axpy(ri, row, out);
            }
        }
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            n_rows: indices.len(),
            n_cols: self.n_cols,
            values,
        }
    }

    /// New matrix holding the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.n_rows * columns.len());
        for row in self.rows() {
            values.extend(columns.iter().map(|&j| row[j]));
        }
        Self {
            n_rows: self.n_rows,
            n_cols: columns.len(),
            values,
        }
    }

    /// Appends a column of ones (used for unpenalized intercepts).
    pub fn with_ones_column(&self) -> Self {
        let mut values = Vec::with_capacity(self.n_rows * (self.n_cols + 1));
        for row in self.rows() {
            values.extend_from_slice(row);
            values.push(1.0);
        }
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols + 1,
            values,
        }
    }
}

/// Seeded, replayable random stream.
///
/// The generator is ChaCha8 keyed by `seed` with the cipher's 64-bit stream
/// selector set to `stream_id`, so distinct stream ids give independent
/// streams under one seed. Replication `r` of a Monte-Carlo study uses
/// `stream_id = r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngHandle {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngHandle {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Handle for an auxiliary purpose (fold assignment, etc.) within the
    /// same replication. Keeps `stream_id` and remixes the seed with `tag`.
    pub fn substream(&self, tag: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0x5EED))),
            stream_id: self.stream_id,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four independent partial sums so the loop vectorizes
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    let mut acc = [0.0f64; 4];
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Number of nonzero entries.
pub fn support_size(v: &[f64]) -> usize {
    v.iter().filter(|x| **x != 0.0).count()
}

/// `v / ‖v‖₂`.
pub fn unit_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = norm2(v);
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Outcome of a power iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralNorm {
    /// Estimate of the largest eigenvalue of `X^T X`, i.e. `σ_max(X)²`.
    pub value: f64,
    pub iterations: usize,
    /// False when `max_iter` ran out before the relative change fell below `tol`;
    /// `value` is then the last iterate.
    pub converged: bool,
}

/// `σ_max(X)²` by power iteration on `X^T X`.
pub fn spectral_norm_sq(x: &DenseMatrix, tol: f64, max_iter: usize) -> Result<SpectralNorm> {
    if x.n_rows() == 0 || x.n_cols() == 0 {
        return Err(Error::EmptyInput);
    }
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let p = x.n_cols();
    // deterministic start with no special alignment to coordinate axes
    let mut v: Vec<f64> = (0..p)
        .map(|j| 1.0 + ((j as f64 + 1.0) * 0.618_033_988_749_895).fract())
        .collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut xv = vec![0.0; x.n_rows()];
    let mut w = vec![0.0; p];
    let mut value = 0.0;
    for it in 1..=max_iter {
        x.matvec_into(&v, &mut xv);
        let rayleigh = dot(&xv, &xv);
        x.t_matvec_into(&xv, &mut w);
        let nw = norm2(&w);
        if nw == 0.0 {
            // v lies in the null space; X^T X has no larger eigenvalue along this path
            return Ok(SpectralNorm {
                value: rayleigh,
                iterations: it,
                converged: true,
            });
        }
        let change = (rayleigh - value).abs();
        value = rayleigh;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        if it > 1 && change <= tol * value {
            return Ok(SpectralNorm {
                value,
                iterations: it,
                converged: true,
            });
        }
    }
    log::warn!("power iteration did not converge in {max_iter} iterations");
    Ok(SpectralNorm {
        value,
        iterations: max_iter,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn unit_normalize_examples() {
        assert_eq!(unit_normalize(&[3.0, 4.0]).unwrap(), vec![0.6, 0.8]);
        assert_eq!(unit_normalize(&[1.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(unit_normalize(&[0.0, 0.0]), Err(Error::ZeroVector));
    }

    #[test]
    fn unit_normalize_is_idempotent() {
        let mut rng = RngHandle::new(1, 0).rng();
        for _ in 0..1000 {
            let v: Vec<f64> = (0..7).map(|_| rng.random_range(-5.0..5.0)).collect();
            let once = unit_normalize(&v).unwrap();
            let twice = unit_normalize(&once).unwrap();
            assert!((norm2(&once) - 1.0).abs() < 1e-12);
            assert!(distance(&once, &twice) < 1e-12);
        }
    }

    #[test]
    fn matrix_rejects_bad_input() {
        assert!(matches!(
            DenseMatrix::new(2, 2, vec![1.0; 3]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            DenseMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn matvec_and_transpose() {
        let x = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        assert_eq!(x.matvec(&[1.0, -1.0]), vec![-1.0, -1.0, -1.0]);
        assert_eq!(x.t_matvec(&[1.0, 0.0, 1.0]), vec![6.0, 8.0]);
        assert_eq!(x.select_rows(&[2, 0]).row(0), &[5.0, 6.0]);
        assert_eq!(x.select_columns(&[1]).column(0), vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn spectral_norm_trivial_cases() {
        let s = spectral_norm_sq(&DenseMatrix::identity(3), 1e-12, 100).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12 && s.converged);
        let d = DenseMatrix::from_rows(&[[2.0, 0.0], [0.0, 1.0]]).unwrap();
        let s = spectral_norm_sq(&d, 1e-14, 1000).unwrap();
        assert!((s.value - 4.0).abs() < 1e-10, "{}", s.value);
    }

    /// Largest root of the characteristic polynomial of a symmetric 3×3
    /// matrix, via the trigonometric closed form.
    fn largest_eigenvalue_3x3(a: [[f64; 3]; 3]) -> f64 {
        let c2 = -(a[0][0] + a[1][1] + a[2][2]);
        let c1 = a[0][0] * a[1][1] + a[0][0] * a[2][2] + a[1][1] * a[2][2]
            - a[0][1] * a[1][0]
            - a[0][2] * a[2][0]
            - a[1][2] * a[2][1];
        let c0 = -(a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]));
        // depressed cubic t^3 + pt + q with lambda = t - c2/3
        let p = c1 - c2 * c2 / 3.0;
        let q = 2.0 * c2.powi(3) / 27.0 - c2 * c1 / 3.0 + c0;
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - c2 / 3.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn spectral_norm_matches_characteristic_polynomial() {
        let mut rng = RngHandle::new(7, 3).rng();
        for _ in 0..20 {
            let vals: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = DenseMatrix::new(5, 3, vals).unwrap();
            let mut gram = [[0.0; 3]; 3];
            for (i, row) in gram.iter_mut().enumerate() {
                for (j, g) in row.iter_mut().enumerate() {
                    *g = dot(&x.column(i), &x.column(j));
                }
            }
            let oracle = largest_eigenvalue_3x3(gram);
            let est = spectral_norm_sq(&x, 1e-13, 100_000).unwrap();
            assert!(
                (est.value - oracle).abs() < 1e-6 * oracle,
                "{} vs {}",
                est.value,
                oracle
            );
        }
    }

    #[test]
    fn spectral_norm_flags_exhaustion() {
        let x = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.999]]).unwrap();
        let s = spectral_norm_sq(&x, 1e-15, 2).unwrap();
        assert!(!s.converged);
        assert_eq!(s.iterations, 2);
    }

    #[test]
    fn rng_streams_replay_and_differ() {
        let a: Vec<u64> = {
            let mut r = RngHandle::new(42, 3).rng();
            (0..8).map(|_| r.random()).collect()
        };
        let b: Vec<u64> = {
            let mut r = RngHandle::new(42, 3).rng();
            (0..8).map(|_| r.random()).collect()
        };
        let c: Vec<u64> = {
            let mut r = RngHandle::new(42, 4).rng();
            (0..8).map(|_| r.random()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(RngHandle::new(42, 3).substream(1), RngHandle::new(42, 3));
    }
}
