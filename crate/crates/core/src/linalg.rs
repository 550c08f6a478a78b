//! Dense complex linear algebra used by the estimators and the equalizer.
//!
//! Matrices are row-major `Complex64` with no structure flags; the sizes in
//! play (a few hundred by a couple thousand) do not justify anything fancier.
//! Hermitian positive definite systems go through an in-place Cholesky
//! factorization, which is all the solvers need.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Columns `range.start..range.end` as a new dense matrix.
    pub fn column_block(&self, start: usize, end: usize) -> CMat {
        assert!(start <= end && end <= self.cols);
        let mut out = CMat::zeros(self.rows, end - start);
        for r in 0..self.rows {
            let src = &self.row(r)[start..end];
            out.data[r * (end - start)..(r + 1) * (end - start)].copy_from_slice(src);
        }
        out
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot_unconj(self.row(r), x)).collect()
    }

    /// `y = A^H x` (adjoint product), accumulated row-wise so access stays
    /// contiguous.
    pub fn adjoint_matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.rows);
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            if xr.re == 0.0 && xr.im == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a.conj() * xr;
            }
        }
        out
    }

    /// `A^H A` (Hermitian, `cols x cols`), built from rank-1 row updates.
    pub fn gram(&self) -> CMat {
        let n = self.cols;
        let mut g = CMat::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let ai = row[i].conj();
                if ai.re == 0.0 && ai.im == 0.0 {
                    continue;
                }
                let grow = &mut g.data[i * n..(i + 1) * n];
                for (j, aj) in row.iter().enumerate().skip(i) {
                    grow[j] += ai * aj;
                }
            }
        }
        g.mirror_upper_to_lower();
        g
    }

    /// `A A^H` (Hermitian, `rows x rows`); entry `(i, j)` is
    /// `<row_j, row_i>` with the conjugate on `row_j`.
    pub fn outer_gram(&self) -> CMat {
        let m = self.rows;
        let mut g = CMat::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                g.data[i * m + j] = dot_conj(self.row(j), self.row(i));
            }
        }
        g.mirror_upper_to_lower();
        g
    }

    fn mirror_upper_to_lower(&mut self) {
        let n = self.cols;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = self.data[i * n + j].conj();
                self.data[j * n + i] = v;
            }
        }
    }

    /// Largest absolute entry-wise difference to `other`.
    pub fn max_abs_diff(&self, other: &CMat) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// `sum_i conj(a_i) b_i`.
#[inline]
pub fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        acc += x.conj() * y;
    }
    acc
}

/// `sum_i a_i b_i` (no conjugation).
#[inline]
pub fn dot_unconj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn norm2_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

pub fn axpy(out: &mut [Complex64], alpha: Complex64, x: &[Complex64]) {
    for (o, xi) in out.iter_mut().zip(x) {
        *o += alpha * xi;
    }
}

/// Cholesky factor `L` (lower triangular) of a Hermitian positive definite
/// matrix, stored dense.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: CMat,
}

impl Cholesky {
    /// Factor `a = L L^H`. Fails with `IllConditioned` if a pivot collapses.
    pub fn new(a: &CMat) -> Result<Self> {
        assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let mut l = a.clone();
        for j in 0..n {
            // pivot = a_jj - ||L[j, 0..j]||^2
            let ljj_sqr: f64 = l.row(j)[..j].iter().map(|z| z.norm_sqr()).sum();
            let pivot = l.get(j, j).re - ljj_sqr;
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(Error::IllConditioned {
                    condition: f64::INFINITY,
                });
            }
            let ljj = pivot.sqrt();
            l.set(j, j, Complex64::new(ljj, 0.0));
            if j + 1 < n {
                let (head, tail) = l.data.split_at_mut((j + 1) * n);
                let lrow_j = &head[j * n..j * n + j];
                for i in (j + 1)..n {
                    let irow = &mut tail[(i - j - 1) * n..(i - j - 1) * n + n];
                    let mut s = irow[j];
                    // s -= <L[i,0..j], L[j,0..j]> with conjugation on the j row
                    for (lik, ljk) in irow[..j].iter().zip(lrow_j) {
                        s -= lik * ljk.conj();
                    }
                    irow[j] = s / ljj;
                }
            }
        }
        // zero strict upper triangle so the factor is self-describing
        for i in 0..n {
            for j in (i + 1)..n {
                l.set(i, j, Complex64::new(0.0, 0.0));
            }
        }
        Ok(Self { l })
    }

    /// Factor `a + jitter*I`, escalating the jitter until the pivot holds.
    /// Returns the factor and the jitter actually applied.
    pub fn new_with_jitter(a: &CMat) -> (Self, f64) {
        if let Ok(c) = Self::new(a) {
            return (c, 0.0);
        }
        let n = a.rows;
        let scale: f64 = (0..n).map(|i| a.get(i, i).re.abs()).sum::<f64>() / n as f64;
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let mut jitter = scale * 1e-12;
        loop {
            let mut aj = a.clone();
            for i in 0..n {
                let d = aj.get(i, i);
                aj.set(i, i, d + Complex64::new(jitter, 0.0));
            }
            if let Ok(c) = Self::new(&aj) {
                return (c, jitter);
            }
            jitter *= 100.0;
            if jitter > scale * 1e6 {
                // fully degenerate input; a huge ridge still yields a usable factor
                let mut aj = CMat::zeros(n, n);
                for i in 0..n {
                    aj.set(i, i, Complex64::new(scale.max(1.0), 0.0));
                }
                return (Self::new(&aj).expect("diagonal factor"), scale.max(1.0));
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    /// Solve `L z = b` in place.
    pub fn forward(&self, b: &mut [Complex64]) {
        let n = self.dim();
        for i in 0..n {
            let row = self.l.row(i);
            let mut s = b[i];
            for (lk, bk) in row[..i].iter().zip(b.iter()) {
                s -= lk * bk;
            }
            b[i] = s / row[i];
        }
    }

    /// Solve `L^H z = b` in place.
    pub fn backward(&self, b: &mut [Complex64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l.get(k, i).conj() * b[k];
            }
            b[i] = s / self.l.get(i, i);
        }
    }

    /// Solve `A x = b` where `A = L L^H`.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut x = b.to_vec();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }

    /// Diagonal of `A^{-1}`, via squared column norms of `L^{-1}`.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        let n = self.dim();
        // invert L column by column: L * col_i(Linv) = e_i
        let mut diag = vec![0.0; n];
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            for c in col.iter_mut() {
                *c = Complex64::new(0.0, 0.0);
            }
            col[i] = Complex64::new(1.0, 0.0);
            for r in i..n {
                let row = self.l.row(r);
                let mut s = col[r];
                for k in i..r {
                    s -= row[k] * col[k];
                }
                col[r] = s / row[r];
            }
            diag[i] = col[i..].iter().map(|z| z.norm_sqr()).sum();
        }
        diag
    }

    /// `log det(A) = 2 * sum log L_ii`.
    pub fn log_det(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.l.get(i, i).re.ln())
            .sum::<f64>()
            * 2.0
    }

    /// Smallest diagonal ratio, a cheap conditioning proxy for the factor.
    pub fn diag_ratio(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..self.dim() {
            let d = self.l.get(i, i).re;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if lo > 0.0 {
            (hi / lo).powi(2)
        } else {
            f64::INFINITY
        }
    }
}

/// Spectral condition number estimate of a Hermitian positive (semi)definite
/// matrix: power iteration for the largest eigenvalue, inverse iteration
/// through a Cholesky factor for the smallest.
pub fn condition_hermitian(a: &CMat, iters: usize) -> f64 {
    let n = a.rows();
    if n == 0 {
        return 1.0;
    }
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(1.0 + (i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()))
        .collect();
    let mut lam_max = 0.0;
    for _ in 0..iters {
        let w = a.matvec(&v);
        let nw = norm2(&w);
        if nw == 0.0 {
            return f64::INFINITY;
        }
        lam_max = nw;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
    }
    let chol = match Cholesky::new(a) {
        Ok(c) => c,
        Err(_) => return f64::INFINITY,
    };
    let mut u: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new((i as f64 * 0.31).cos(), 1.0 - (i as f64 * 0.17).sin()))
        .collect();
    let mut inv_lam = 0.0;
    for _ in 0..iters {
        let w = chol.solve(&u);
        let nw = norm2(&w);
        if nw == 0.0 {
            return f64::INFINITY;
        }
        inv_lam = nw;
        for (ui, wi) in u.iter_mut().zip(&w) {
            *ui = wi / nw;
        }
    }
    let lam_min = 1.0 / inv_lam;
    if lam_min <= 0.0 {
        f64::INFINITY
    } else {
        lam_max / lam_min
    }
}

/// Least-squares solve restricted to a column subset: minimizes
/// `||y - A[:, cols] c||_2` through the normal equations. Returns the
/// coefficients in `cols` order.
pub fn restricted_ls(a: &CMat, cols: &[usize], y: &[Complex64]) -> Result<Vec<Complex64>> {
    let s = cols.len();
    if s == 0 {
        return Ok(Vec::new());
    }
    let sub: Vec<Vec<Complex64>> = cols.iter().map(|&c| a.column(c)).collect();
    let mut gram = CMat::zeros(s, s);
    for i in 0..s {
        for j in i..s {
            gram.set(i, j, dot_conj(&sub[i], &sub[j]));
        }
    }
    gram.mirror_upper_to_lower();
    let rhs: Vec<Complex64> = sub.iter().map(|col| dot_conj(col, y)).collect();
    let (chol, _jitter) = Cholesky::new_with_jitter(&gram);
    Ok(chol.solve(&rhs))
}
