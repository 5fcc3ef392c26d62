//! Dense row-major linear algebra and seeded random streams.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative pivot tolerance used by [`cholesky`].
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Dense real matrix stored in row-major order.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Mat::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(rows * cols, data.len()));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix from row slices; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dims(cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn column_vector(values: &[f64]) -> Self {
        Mat {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return Err(Error::dims(
                format!("{} rows", self.cols),
                format!("{} rows", other.rows),
            ));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(k), out_row);
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`, the natural product for row-major storage.
    pub fn matmul_t(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.cols {
            return Err(Error::dims(
                format!("{} cols", self.cols),
                format!("{} cols", other.cols),
            ));
        }
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Mat) -> Result<Mat> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Mat, f: impl Fn(f64, f64) -> f64) -> Result<Mat> {
        if self.shape() != other.shape() {
            return Err(Error::dims(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, factor: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Concatenates columns: `[self, other]`.
    pub fn hstack(&self, other: &Mat) -> Result<Mat> {
        if self.rows != other.rows {
            return Err(Error::dims(self.rows, other.rows));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Mat {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Concatenates rows: `[self; other]`.
    pub fn vstack(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.cols {
            return Err(Error::dims(self.cols, other.cols));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Mat {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn select_columns(&self, cols: &[usize]) -> Mat {
        Mat::from_fn(self.rows, cols.len(), |r, c| self[(r, cols[c])])
    }

    pub fn select_rows(&self, rows: &[usize]) -> Mat {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Mat {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        (0..self.rows).all(|i| {
            (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= rel_tol * scale)
        })
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators let the compiler vectorize without reassociation flags.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let k = 4 * i;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        sum += a[k] * b[k];
    }
    sum
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn cholesky_impl(a: &Mat, strict_zero: bool) -> Result<Mat> {
    if !a.is_square() {
        return Err(Error::dims("square matrix", format!("{:?}", a.shape())));
    }
    let n = a.rows();
    let max_diag = a.diag().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = if strict_zero {
        0.0
    } else {
        PIVOT_TOLERANCE * max_diag
    };
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let pivot = a[(j, j)] - dot(&l.row(j)[..j], &l.row(j)[..j]);
        if !(pivot > tol) {
            return Err(Error::NotPositiveDefinite { index: j, pivot });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Lower-triangular `L` with `L·Lᵀ = a`.
///
/// Fails with [`Error::NotPositiveDefinite`] when a pivot drops to
/// `1e-12 × max diagonal` or below.
pub fn cholesky(a: &Mat) -> Result<Mat> {
    cholesky_impl(a, false)
}

/// Cholesky factor of a positive semi-definite matrix.
///
/// Pivots within `tol × max diagonal` of zero produce a zero column instead of
/// an error; clearly negative pivots still fail.
pub fn cholesky_psd(a: &Mat, tol: f64) -> Result<Mat> {
    if !a.is_square() {
        return Err(Error::dims("square matrix", format!("{:?}", a.shape())));
    }
    let n = a.rows();
    let max_diag = a.diag().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let eps = tol * max_diag.max(f64::MIN_POSITIVE);
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let pivot = a[(j, j)] - dot(&l.row(j)[..j], &l.row(j)[..j]);
        if pivot < -eps || pivot.is_nan() {
            return Err(Error::NotPositiveDefinite { index: j, pivot });
        }
        if pivot <= eps {
            continue;
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L·Lᵀ·x = b` given the lower factor `L`.
pub fn cholesky_solve(l: &Mat, b: &Mat) -> Result<Mat> {
    let n = l.rows();
    if b.rows() != n {
        return Err(Error::dims(format!("{n} rows"), format!("{} rows", b.rows())));
    }
    let mut x = b.clone();
    for c in 0..b.cols() {
        // forward: L·u = b
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        // backward: Lᵀ·x = u
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// Solves `a·x = b` for symmetric positive definite `a`.
pub fn spd_solve(a: &Mat, b: &Mat) -> Result<Mat> {
    if b.rows() != a.rows() {
        return Err(Error::dims(
            format!("{} rows", a.rows()),
            format!("{} rows", b.rows()),
        ));
    }
    let l = cholesky(a)?;
    cholesky_solve(&l, b)
}

pub fn spd_inverse(a: &Mat) -> Result<Mat> {
    spd_solve(a, &Mat::identity(a.rows()))
}

const EIGEN_MAX_ITER: usize = 300;

/// Smallest eigenvalue of a symmetric matrix.
///
/// Bisection on `λ` between Gershgorin bounds: `a − λI` admits a strict
/// Cholesky factorization exactly when `λ < λ_min`.
pub fn min_eigenvalue(a: &Mat) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::dims("square matrix", format!("{:?}", a.shape())));
    }
    let n = a.rows();
    if n == 0 {
        return Err(Error::dims("non-empty matrix", "0x0"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..n {
        let radius: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
        lo = lo.min(a[(i, i)] - radius);
        hi = hi.min(a[(i, i)]);
    }
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    let shifted = |lambda: f64| {
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] -= lambda;
        }
        cholesky_impl(&m, true).is_ok()
    };
    // `lo` may itself be exactly λ_min; nudge it until the shifted matrix factorizes.
    let mut step = 1e-14 * scale;
    let mut iterations = 0;
    while !shifted(lo) {
        lo -= step;
        step *= 2.0;
        iterations += 1;
        if iterations > EIGEN_MAX_ITER {
            return Err(Error::NonConvergence { iterations });
        }
    }
    if shifted(hi) {
        // Only possible for 1x1 matrices or rounding at hi == λ_min.
        return Ok(hi);
    }
    for it in 0..EIGEN_MAX_ITER {
        if hi - lo <= 1e-13 * scale.max(hi.abs()) {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if shifted(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations = it;
    }
    Err(Error::NonConvergence {
        iterations: iterations + 1,
    })
}

/// AR(1) correlation matrix `Σ_jk = ρ^|j−k|`.
pub fn ar1_covariance(p: usize, rho: f64) -> Mat {
    Mat::from_fn(p, p, |j, k| rho.powi((j as i32 - k as i32).abs()))
}

/// Column means and sample standard deviations (n − 1 denominator).
pub fn column_moments(x: &Mat) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows() as f64;
    let mut mean = vec![0.0; x.cols()];
    for r in 0..x.rows() {
        axpy(1.0, x.row(r), &mut mean);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; x.cols()];
    for r in 0..x.rows() {
        for (c, v) in x.row(r).iter().enumerate() {
            let d = v - mean[c];
            var[c] += d * d;
        }
    }
    let denom = (n - 1.0).max(1.0);
    let sd = var.into_iter().map(|v| (v / denom).sqrt()).collect();
    (mean, sd)
}

/// Sample covariance matrix of the columns of `x`.
pub fn covariance(x: &Mat) -> Mat {
    let (mean, _) = column_moments(x);
    let p = x.cols();
    let mut cov = Mat::zeros(p, p);
    let mut centered = vec![0.0; p];
    for r in 0..x.rows() {
        for (c, v) in x.row(r).iter().enumerate() {
            centered[c] = v - mean[c];
        }
        for i in 0..p {
            let ci = centered[i];
            axpy(ci, &centered[..=i], &mut cov.row_mut(i)[..=i]);
        }
    }
    let denom = (x.rows() as f64 - 1.0).max(1.0);
    for i in 0..p {
        for j in 0..=i {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

/// Per-column affine standardization fitted on one matrix and reusable on others.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Constant columns get unit scale so they map to zero.
    pub fn fit(x: &Mat) -> Self {
        let (mean, sd) = column_moments(x);
        let scale = sd
            .into_iter()
            .map(|s| if s > 0.0 && s.is_finite() { s } else { 1.0 })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn transform(&self, x: &Mat) -> Result<Mat> {
        if x.cols() != self.mean.len() {
            return Err(Error::dims(self.mean.len(), x.cols()));
        }
        Ok(Mat::from_fn(x.rows(), x.cols(), |r, c| {
            (x[(r, c)] - self.mean[c]) / self.scale[c]
        }))
    }

    pub fn inverse_transform(&self, x: &Mat) -> Result<Mat> {
        if x.cols() != self.mean.len() {
            return Err(Error::dims(self.mean.len(), x.cols()));
        }
        Ok(Mat::from_fn(x.rows(), x.cols(), |r, c| {
            x[(r, c)] * self.scale[c] + self.mean[c]
        }))
    }
}

/// Mean and sample standard deviation of a vector, with unit scale for constant input.
pub fn vector_moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let sd = var.sqrt();
    (mean, if sd > 0.0 && sd.is_finite() { sd } else { 1.0 })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 keyed with the seed and using the stream id as the
/// ChaCha stream selector, so distinct ids never share keystream.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream keyed by this stream's identity and `label`; does not
    /// consume draws from `self`.
    pub fn derive(&self, label: u64) -> RngStream {
        let key = splitmix64(self.seed ^ splitmix64(self.stream_id.wrapping_add(0x5851_F42D)));
        RngStream::new(splitmix64(key ^ label.wrapping_mul(0xD6E8_FEB8_6659_FD93)), label)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n`, sorted ascending.
    pub fn choose_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut all: Vec<usize> = (0..n).collect();
        // partial Fisher-Yates
        for i in 0..k.min(n) {
            let j = i + self.below(n - i);
            all.swap(i, j);
        }
        let mut chosen = all[..k.min(n)].to_vec();
        chosen.sort_unstable();
        chosen
    }
}

/// `rows × cols` matrix of i.i.d. standard normal draws.
pub fn sample_standard_normal(rng: &mut RngStream, rows: usize, cols: usize) -> Mat {
    let data = (0..rows * cols).map(|_| rng.standard_normal()).collect();
    Mat { rows, cols, data }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &Mat, b: &Mat, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn cholesky_identity() {
        assert_eq!(cholesky(&Mat::identity(3)).unwrap(), Mat::identity(3));
    }

    #[test]
    fn cholesky_two_by_two() {
        let a = Mat::from_rows(&[[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        let expected = Mat::from_rows(&[[2.0, 0.0], [1.0, 2f64.sqrt()]]).unwrap();
        assert_close(&l, &expected, 1e-15);
        // L·Lᵀ by hand: [[4, 2], [2, 1 + 2]]
        assert_close(&l.matmul_t(&l).unwrap(), &a, 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Mat::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&a), Err(Error::NotPositiveDefinite { index: 1, .. })));
    }

    #[test]
    fn cholesky_psd_handles_rank_deficiency() {
        let a = Mat::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(cholesky(&a).is_err());
        let l = cholesky_psd(&a, 1e-10).unwrap();
        assert_close(&l.matmul_t(&l).unwrap(), &a, 1e-14);
    }

    #[test]
    fn spd_solve_examples() {
        let b = Mat::column_vector(&[5.0, 7.0]);
        assert_close(&spd_solve(&Mat::identity(2), &b).unwrap(), &b, 0.0);

        let a = Mat::from_rows(&[[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let x = Mat::column_vector(&[1.0, 2.0]);
        let rhs = a.matmul(&x).unwrap();
        assert_close(&spd_solve(&a, &rhs).unwrap(), &x, 1e-14);

        let d = Mat::from_diag(&[2.0, 2.0]);
        let sol = spd_solve(&d, &Mat::column_vector(&[4.0, 6.0])).unwrap();
        assert_close(&sol, &Mat::column_vector(&[2.0, 3.0]), 1e-15);
    }

    #[test]
    fn spd_solve_dimension_mismatch() {
        let err = spd_solve(&Mat::identity(2), &Mat::zeros(3, 1)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn min_eigenvalue_examples() {
        assert!((min_eigenvalue(&Mat::identity(4)).unwrap() - 1.0).abs() < 1e-12);
        let a = Mat::from_rows(&[[1.0, 0.5], [0.5, 1.0]]).unwrap();
        assert!((min_eigenvalue(&a).unwrap() - 0.5).abs() < 1e-8 * 0.5);
        let d = Mat::from_diag(&[3.0, 7.0, 0.25]);
        assert!((min_eigenvalue(&d).unwrap() - 0.25).abs() < 1e-8 * 0.25);
    }

    #[test]
    fn min_eigenvalue_of_indefinite_matrix() {
        let a = Mat::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!((min_eigenvalue(&a).unwrap() + 1.0).abs() < 1e-8);
    }

    #[test]
    fn standard_normal_is_deterministic() {
        let a = sample_standard_normal(&mut RngStream::new(7, 3), 4, 5);
        let b = sample_standard_normal(&mut RngStream::new(7, 3), 4, 5);
        assert_eq!(a, b);
        let c = sample_standard_normal(&mut RngStream::new(7, 4), 4, 5);
        assert_ne!(a, c);
    }

    #[test]
    fn standard_normal_moments() {
        let n = 100_000;
        let m = sample_standard_normal(&mut RngStream::new(11, 0), n, 1);
        let (mean, sd) = vector_moments(m.as_slice());
        assert!(mean.abs() <= 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((sd * sd - 1.0).abs() <= 0.02, "var {}", sd * sd);
    }

    #[test]
    fn derived_streams_are_stable_and_distinct() {
        let root = RngStream::new(1, 2);
        let mut a = root.derive(5);
        let mut b = root.derive(5);
        let mut c = root.derive(6);
        let xa: Vec<f64> = (0..8).map(|_| a.uniform()).collect();
        let xb: Vec<f64> = (0..8).map(|_| b.uniform()).collect();
        let xc: Vec<f64> = (0..8).map(|_| c.uniform()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn covariance_matches_definition() {
        let x = Mat::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 7.0]]).unwrap();
        let c = covariance(&x);
        assert!((c[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((c[(0, 1)] - 2.5).abs() < 1e-14);
        assert!((c[(1, 1)] - 6.333333333333333).abs() < 1e-12);
    }
}
