//! Dense complex linear algebra: products through `matrixmultiply`, a
//! blocked partial-pivoting LU, and a few small helpers.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, Dim, Matrix, RawStorage, RawStorageMut};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<Complex64>;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// c = alpha·a·b + beta·c on arbitrary strided storage.
pub fn gemm<R1, C1, S1, R2, C2, S2, R3, C3, S3>(
    alpha: C64,
    a: &Matrix<C64, R1, C1, S1>,
    b: &Matrix<C64, R2, C2, S2>,
    beta: C64,
    c: &mut Matrix<C64, R3, C3, S3>,
) where
    R1: Dim,
    C1: Dim,
    S1: RawStorage<C64, R1, C1>,
    R2: Dim,
    C2: Dim,
    S2: RawStorage<C64, R2, C2>,
    R3: Dim,
    C3: Dim,
    S3: RawStorageMut<C64, R3, C3>,
{
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!(c.shape(), (m, n), "output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == ZERO {
            c.fill(ZERO);
        } else {
            for z in c.iter_mut() {
                *z *= beta;
            }
        }
        return;
    }
    let (ars, acs) = a.strides();
    let (brs, bcs) = b.strides();
    let (crs, ccs) = c.strides();
    // SAFETY: Complex64 is repr(C) {re, im}, layout-compatible with [f64; 2];
    // pointers and strides come from live nalgebra storages of the asserted shapes.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [alpha.re, alpha.im],
            a.as_ptr() as *const [f64; 2],
            ars as isize,
            acs as isize,
            b.as_ptr() as *const [f64; 2],
            brs as isize,
            bcs as isize,
            [beta.re, beta.im],
            c.as_mut_ptr() as *mut [f64; 2],
            crs as isize,
            ccs as isize,
        );
    }
}

/// a·b
pub fn matmul<R1, C1, S1, R2, C2, S2>(
    a: &Matrix<C64, R1, C1, S1>,
    b: &Matrix<C64, R2, C2, S2>,
) -> CMat
where
    R1: Dim,
    C1: Dim,
    S1: RawStorage<C64, R1, C1>,
    R2: Dim,
    C2: Dim,
    S2: RawStorage<C64, R2, C2>,
{
    let mut c = CMat::zeros(a.nrows(), b.ncols());
    gemm(ONE, a, b, ZERO, &mut c);
    c
}

/// Plain (non-conjugating) transpose.
pub fn transpose(a: &CMat) -> CMat {
    a.transpose()
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn norm1(a: &CMat) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Rows `rows` of `a`, in the given order.
pub fn select_rows(a: &CMat, rows: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

pub fn select_cols(a: &CMat, cols: &[usize]) -> CMat {
    let mut out = CMat::zeros(a.nrows(), cols.len());
    for (k, &c) in cols.iter().enumerate() {
        out.column_mut(k).copy_from(&a.column(c));
    }
    out
}

/// Vertical concatenation.
pub fn vstack(blocks: &[&CMat]) -> CMat {
    let ncols = blocks.first().map_or(0, |b| b.ncols());
    let nrows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(nrows, ncols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), ncols, "vstack column mismatch");
        out.rows_mut(r, b.nrows()).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Horizontal concatenation.
pub fn hstack(blocks: &[&CMat]) -> CMat {
    let nrows = blocks.first().map_or(0, |b| b.nrows());
    let ncols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(nrows, ncols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), nrows, "hstack row mismatch");
        out.columns_mut(c, b.ncols()).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// LU factors with row pivoting, P·A = L·U, L unit lower.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: CMat,
    piv: Vec<usize>,
}

const PANEL: usize = 48;

impl Lu {
    pub fn factor(mut a: CMat, context: &str) -> Result<Lu> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!(
                "LU of non-square {}x{} matrix",
                n,
                a.ncols()
            )));
        }
        let mut piv = vec![0usize; n];
        let mut j0 = 0;
        while j0 < n {
            let nb = PANEL.min(n - j0);
            for k in j0..j0 + nb {
                let mut p = k;
                let mut best = a[(k, k)].norm();
                for i in k + 1..n {
                    let v = a[(i, k)].norm();
                    if v > best {
                        best = v;
                        p = i;
                    }
                }
                piv[k] = p;
                if best == 0.0 || !best.is_finite() {
                    return Err(Error::Singular {
                        context: context.to_string(),
                        condition: f64::INFINITY,
                    });
                }
                if p != k {
                    a.swap_rows(k, p);
                }
                let inv = ONE / a[(k, k)];
                {
                    let mut col = a.column_mut(k);
                    for i in k + 1..n {
                        col[i] *= inv;
                    }
                }
                for c in k + 1..j0 + nb {
                    let akc = a[(k, c)];
                    if akc != ZERO {
                        let (lcol, mut tcol) = a.columns_range_pair_mut(k, c);
                        for i in k + 1..n {
                            tcol[i] -= lcol[i] * akc;
                        }
                    }
                }
            }
            let j1 = j0 + nb;
            if j1 < n {
                // U12 = L11^{-1} A12
                for c in j1..n {
                    for k in j0..j1 {
                        let akc = a[(k, c)];
                        if akc != ZERO {
                            for i in k + 1..j1 {
                                let l = a[(i, k)];
                                a[(i, c)] -= l * akc;
                            }
                        }
                    }
                }
                // A22 -= L21 U12
                let l21 = a.view((j1, j0), (n - j1, nb)).clone_owned();
                let u12 = a.view((j0, j1), (nb, n - j1)).clone_owned();
                let mut a22 = a.view_mut((j1, j1), (n - j1, n - j1));
                gemm(-ONE, &l21, &u12, ONE, &mut a22);
            }
            j0 = j1;
        }
        let lu = Lu { lu: a, piv };
        let (mn, mx) = lu.pivot_range();
        if !(mn > 1e-15 * mx) {
            return Err(Error::Singular {
                context: context.to_string(),
                condition: mx / mn.max(f64::MIN_POSITIVE),
            });
        }
        Ok(lu)
    }

    fn pivot_range(&self) -> (f64, f64) {
        let n = self.lu.nrows();
        let mut mn = f64::INFINITY;
        let mut mx: f64 = 0.0;
        for i in 0..n {
            let v = self.lu[(i, i)].norm();
            mn = mn.min(v);
            mx = mx.max(v);
        }
        if n == 0 {
            (1.0, 1.0)
        } else {
            (mn, mx)
        }
    }

    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    /// Solve A·X = B in place.
    pub fn solve_in_place(&self, b: &mut DMatrixViewMut<C64>) {
        let n = self.dim();
        assert_eq!(b.nrows(), n, "right-hand side rows mismatch");
        for k in 0..n {
            if self.piv[k] != k {
                b.swap_rows(k, self.piv[k]);
            }
        }
        for mut col in b.column_iter_mut() {
            for k in 0..n {
                let v = col[k];
                if v != ZERO {
                    let l = self.lu.column(k);
                    for i in k + 1..n {
                        col[i] -= l[i] * v;
                    }
                }
            }
            for k in (0..n).rev() {
                let v = col[k] / self.lu[(k, k)];
                col[k] = v;
                if v != ZERO {
                    let u = self.lu.column(k);
                    for i in 0..k {
                        col[i] -= u[i] * v;
                    }
                }
            }
        }
    }

    pub fn solve(&self, b: &CMat) -> CMat {
        let mut x = b.clone();
        self.solve_in_place(&mut x.as_view_mut());
        x
    }

    pub fn inverse(&self) -> CMat {
        self.solve(&CMat::identity(self.dim(), self.dim()))
    }
}

/// Inverse through LU; reports a singular matrix with a condition estimate.
pub fn inverse(a: &CMat, context: &str) -> Result<CMat> {
    if a.nrows() == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    let lu = Lu::factor(a.clone(), context)?;
    let inv = lu.inverse();
    let cond = norm1(a) * norm1(&inv);
    if !cond.is_finite() || cond > 1e15 {
        return Err(Error::Singular {
            context: context.to_string(),
            condition: cond,
        });
    }
    Ok(inv)
}

/// Solve A·X = B.
pub fn solve(a: &CMat, b: &CMat, context: &str) -> Result<CMat> {
    if a.nrows() == 0 {
        return Ok(CMat::zeros(0, b.ncols()));
    }
    Ok(Lu::factor(a.clone(), context)?.solve(b))
}

/// 1-norm condition number through an explicit inverse (small matrices).
pub fn condition_estimate(a: &CMat) -> f64 {
    match Lu::factor(a.clone(), "condition") {
        Ok(lu) => norm1(a) * norm1(&lu.inverse()),
        Err(_) => f64::INFINITY,
    }
}

pub fn view(a: &CMat) -> DMatrixView<'_, C64> {
    a.as_view()
}

/// Matrix filled column by column in parallel from an entry function.
pub fn par_from_fn<F>(nrows: usize, ncols: usize, f: F) -> CMat
where
    F: Fn(usize, usize) -> C64 + Sync,
{
    use rayon::prelude::*;
    let mut data = vec![ZERO; nrows * ncols];
    if nrows > 0 {
        data.par_chunks_mut(nrows).enumerate().for_each(|(j, col)| {
            for (i, z) in col.iter_mut().enumerate() {
                *z = f(i, j);
            }
        });
    }
    CMat::from_vec(nrows, ncols, data)
}
