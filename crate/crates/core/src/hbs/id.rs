//! Interpolative decompositions from a column-pivoted Householder QR.

use rayon::prelude::*;

use crate::linalg::{CMat, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
/// Column counts above which the QR sweeps are split across threads.
const PAR_COLUMNS: usize = 512;

/// Row interpolative decomposition M ≈ P·M(J, :).
#[derive(Clone, Debug)]
pub struct IdFactorization {
    /// Interpolation matrix P, rows × rank, with P(J, :) = I.
    pub interp: CMat,
    /// Row order chosen by the pivoting; the first `rank` entries form J.
    pub perm: Vec<usize>,
    pub rank: usize,
}

impl IdFactorization {
    /// Skeleton rows J in pivot order.
    pub fn skeleton(&self) -> &[usize] {
        &self.perm[..self.rank]
    }
}

/// Column interpolative decomposition M ≈ M(:, J)·T.
#[derive(Clone, Debug)]
pub struct ColumnId {
    /// rank × cols, with T(:, J) = I.
    pub interp: CMat,
    pub perm: Vec<usize>,
    pub rank: usize,
}

impl ColumnId {
    pub fn skeleton(&self) -> &[usize] {
        &self.perm[..self.rank]
    }
}

/// Row ID of `m` at relative tolerance `tol`, meant for tol in (1e-14, 1e-2).
///
/// The truncation stops once the Frobenius norm of the unselected residual
/// drops below tol·|R₀₀|, which bounds ‖M − P·M(J,:)‖₂ ≤ tol·‖M‖₂.
/// A full-rank input yields rank = min(rows, cols).
pub fn id_decompose(m: &CMat, tol: f64) -> IdFactorization {
    let col = column_id(&m.transpose(), tol);
    IdFactorization {
        interp: col.interp.transpose(),
        perm: col.perm,
        rank: col.rank,
    }
}

/// Column ID, the transpose form of [`id_decompose`]. Pivots on the largest
/// remaining column norm, lowest index on ties, with norms recomputed at
/// every step.
pub fn column_id(m: &CMat, tol: f64) -> ColumnId {
    let (rows, cols) = m.shape();
    let mut a: Vec<C64> = m.as_slice().to_vec();
    let mut perm: Vec<usize> = (0..cols).collect();
    let kmax = rows.min(cols);
    let mut norms = vec![0.0f64; cols];
    let mut rank = 0;
    let mut r00 = 0.0;

    for k in 0..kmax {
        column_norms(&a, rows, k, &mut norms[k..], k);
        let remaining: f64 = norms[k..].iter().sum();
        let mut p = k;
        for j in k + 1..cols {
            if norms[j] > norms[p] {
                p = j;
            }
        }
        if k == 0 {
            r00 = norms[p].sqrt();
        }
        if norms[p] == 0.0 || remaining.sqrt() <= tol * r00 {
            break;
        }
        if p != k {
            for i in 0..rows {
                a.swap(k * rows + i, p * rows + i);
            }
            perm.swap(k, p);
            norms.swap(k, p);
        }
        householder_step(&mut a, rows, cols, k);
        rank = k + 1;
    }

    let interp = interpolation_matrix(&a, rows, cols, rank, &perm);
    ColumnId { interp, perm, rank }
}

fn column_norms(a: &[C64], rows: usize, first_col: usize, out: &mut [f64], from_row: usize) {
    let body = &a[first_col * rows..];
    let f = |(col, n): (&[C64], &mut f64)| *n = col[from_row..].iter().map(|z| z.norm_sqr()).sum();
    if out.len() > PAR_COLUMNS {
        body.par_chunks(rows).zip(out.par_iter_mut()).for_each(f);
    } else {
        body.chunks(rows).zip(out.iter_mut()).for_each(f);
    }
}

/// Reflect column k onto α·e_k and apply the reflector to columns k+1..
fn householder_step(a: &mut [C64], rows: usize, cols: usize, k: usize) {
    let (head, tail) = a.split_at_mut((k + 1) * rows);
    let col = &mut head[k * rows..];
    let x0 = col[k];
    let xnorm = col[k..].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let phase = if x0.norm() > 0.0 {
        x0 / x0.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let alpha = -phase * xnorm;
    let mut v: Vec<C64> = col[k..].to_vec();
    v[0] -= alpha;
    let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    col[k] = alpha;
    for z in &mut col[k + 1..] {
        *z = ZERO;
    }
    if vnorm2 == 0.0 || k + 1 >= cols {
        return;
    }
    let scale = 2.0 / vnorm2;
    let reflect = |c: &mut [C64]| {
        let seg = &mut c[k..];
        let s: C64 = v
            .iter()
            .zip(seg.iter())
            .map(|(vi, ai)| vi.conj() * ai)
            .sum::<C64>()
            * scale;
        for (ai, vi) in seg.iter_mut().zip(&v) {
            *ai -= vi * s;
        }
    };
    if cols - k - 1 > PAR_COLUMNS {
        tail.par_chunks_mut(rows).for_each(reflect);
    } else {
        tail.chunks_mut(rows).for_each(reflect);
    }
}

/// T with T(:, perm[..rank]) = I and T(:, perm[rank..]) = R11⁻¹R12.
fn interpolation_matrix(a: &[C64], rows: usize, cols: usize, rank: usize, perm: &[usize]) -> CMat {
    let mut t = CMat::zeros(rank, cols);
    for i in 0..rank {
        t[(i, perm[i])] = C64::new(1.0, 0.0);
    }
    let fill = |j: usize| -> Vec<C64> {
        let col = &a[j * rows..j * rows + rank];
        let mut x = col.to_vec();
        for i in (0..rank).rev() {
            let mut s = x[i];
            for l in i + 1..rank {
                s -= a[l * rows + i] * x[l];
            }
            x[i] = s / a[i * rows + i];
        }
        x
    };
    let solved: Vec<Vec<C64>> = if cols - rank > PAR_COLUMNS {
        (rank..cols).into_par_iter().map(fill).collect()
    } else {
        (rank..cols).map(fill).collect()
    };
    for (off, x) in solved.into_iter().enumerate() {
        let dest = perm[rank + off];
        for i in 0..rank {
            t[(i, dest)] = x[i];
        }
    }
    t
}
