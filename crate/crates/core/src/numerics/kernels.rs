//! Row-major matrix kernels used by the tensor type and the network layers.
//!
//! Every output entry is accumulated in ascending order of the contracted
//! index, independently of how rows are distributed over threads, so results
//! are bitwise reproducible for any pool size.

use rayon::prelude::*;

/// Below this many multiply-adds the kernels stay on the calling thread.
const PAR_THRESHOLD: usize = 1 << 16;

/// `out[m×n] = a[m×k] · b[k×n]`.
///
/// With `skip_zeros`, terms whose left factor is exactly zero are skipped;
/// the result can then differ from the plain product only in the sign of a
/// zero entry.
pub fn gemm_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64], skip_zeros: bool) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(out.len(), m * n);
    let row = |(i, out_row): (usize, &mut [f64])| {
        out_row.fill(0.0);
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if skip_zeros && a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &b_pj) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * b_pj;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD && n > 0 {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else if n > 0 {
        out.chunks_mut(n).enumerate().for_each(row);
    }
}

/// `out[m×n] = a[r×m]ᵀ · b[r×n]`, summing over the shared row index.
pub fn gemm_tn(a: &[f64], b: &[f64], r: usize, m: usize, n: usize, out: &mut [f64], skip_zeros: bool) {
    assert_eq!(a.len(), r * m);
    assert_eq!(b.len(), r * n);
    assert_eq!(out.len(), m * n);
    let row = |(i, out_row): (usize, &mut [f64])| {
        out_row.fill(0.0);
        for s in 0..r {
            let a_si = a[s * m + i];
            if skip_zeros && a_si == 0.0 {
                continue;
            }
            let b_row = &b[s * n..(s + 1) * n];
            for (o, &v) in out_row.iter_mut().zip(b_row) {
                *o += a_si * v;
            }
        }
    };
    if r * m * n >= PAR_THRESHOLD && n > 0 {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else if n > 0 {
        out.chunks_mut(n).enumerate().for_each(row);
    }
}

/// `out[m×n] = a[m×k] · b[n×k]ᵀ`.
pub fn gemm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), n * k);
    assert_eq!(out.len(), m * n);
    let row = |(i, out_row): (usize, &mut [f64])| {
        let a_row = &a[i * k..(i + 1) * k];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (x, y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            *o = acc;
        }
    };
    if m * k * n >= PAR_THRESHOLD && n > 0 {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else if n > 0 {
        out.chunks_mut(n).enumerate().for_each(row);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fill(len: usize, seed: u64) -> Vec<f64> {
        (0..len)
            .map(|i| (((i as u64 + 1) * (seed * 2 + 1) % 97) as f64 - 48.0) / 17.0)
            .collect()
    }

    #[test]
    fn transposed_variants_agree_with_explicit_transpose() {
        let (r, m, n) = (6, 4, 5);
        let a = fill(r * m, 3);
        let b = fill(r * n, 5);
        let mut at = vec![0.0; m * r];
        for s in 0..r {
            for i in 0..m {
                at[i * r + s] = a[s * m + i];
            }
        }
        let mut tn = vec![0.0; m * n];
        let mut nn = vec![0.0; m * n];
        gemm_tn(&a, &b, r, m, n, &mut tn, false);
        gemm_nn(&at, &b, m, r, n, &mut nn, false);
        assert_eq!(tn, nn);

        let c = fill(n * r, 7);
        let mut ct = vec![0.0; r * n];
        for j in 0..n {
            for s in 0..r {
                ct[s * n + j] = c[j * r + s];
            }
        }
        let mut nt = vec![0.0; m * n];
        gemm_nt(&at, &c, m, r, n, &mut nt);
        gemm_nn(&at, &ct, m, r, n, &mut nn, false);
        assert_eq!(nt, nn);
    }

    #[test]
    fn zero_skipping_preserves_values() {
        let (m, k, n) = (3, 8, 4);
        let mut a = fill(m * k, 2);
        for v in a.iter_mut().step_by(3) {
            *v = 0.0;
        }
        let b = fill(k * n, 9);
        let mut plain = vec![0.0; m * n];
        let mut skipped = vec![0.0; m * n];
        gemm_nn(&a, &b, m, k, n, &mut plain, false);
        gemm_nn(&a, &b, m, k, n, &mut skipped, true);
        assert_eq!(plain, skipped);
    }
}
