//! Small matrix-multiply kernels used by the conv and dense layers.
//!
//! All kernels accumulate into `c` (callers zero it first when needed) and
//! run a fixed loop order, so results are bit-reproducible run to run.

use super::tensor::Real;

/// `c[m,n] += a[m,k] * b[k,n]`, all row-major.
pub fn gemm_nn<F: Real>(m: usize, n: usize, k: usize, a: &[F], b: &[F], c: &mut [F]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av == F::zero() {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c[m,n] += a[k,m]^T * b[k,n]`, all row-major.
pub fn gemm_tn<F: Real>(m: usize, n: usize, k: usize, a: &[F], b: &[F], c: &mut [F]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for kk in 0..k {
        let arow = &a[kk * m..(kk + 1) * m];
        let brow = &b[kk * n..(kk + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == F::zero() {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `out[n,m] = in[m,n]^T`, row-major.
pub fn transpose<F: Real>(m: usize, n: usize, input: &[F], out: &mut [F]) {
    debug_assert_eq!(input.len(), m * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let row = &input[i * n..(i + 1) * n];
        for (j, &v) in row.iter().enumerate() {
            out[j * m + i] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_nn(m: usize, n: usize, k: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for kk in 0..k {
                    c[i * n + j] += a[i * k + kk] * b[kk * n + j];
                }
            }
        }
        c
    }

    fn ramp(len: usize, scale: f64) -> Vec<f64> {
        (0..len).map(|i| ((i * 7 + 3) % 13) as f64 * scale - 2.0).collect()
    }

    #[test]
    fn nn_matches_naive() {
        let (m, n, k) = (5, 7, 11);
        let a = ramp(m * k, 0.5);
        let b = ramp(k * n, 0.25);
        let mut c = vec![0.0; m * n];
        gemm_nn(m, n, k, &a, &b, &mut c);
        let expect = naive_nn(m, n, k, &a, &b);
        assert_eq!(c, expect);
    }

    #[test]
    fn tn_matches_naive_on_transposed_a() {
        let (m, n, k) = (4, 6, 9);
        let at = ramp(k * m, 0.5); // stored k x m
        let b = ramp(k * n, 0.25);
        let mut c = vec![0.0; m * n];
        gemm_tn(m, n, k, &at, &b, &mut c);
        // naive with a[i*k+kk] = at[kk*m+i]
        let mut a = vec![0.0; m * k];
        transpose(k, m, &at, &mut a);
        let expect = naive_nn(m, n, k, &a, &b);
        assert_eq!(c, expect);
    }

    #[test]
    fn transpose_involution() {
        let (m, n) = (3, 8);
        let a = ramp(m * n, 1.0);
        let mut t = vec![0.0; m * n];
        let mut back = vec![0.0; m * n];
        transpose(m, n, &a, &mut t);
        transpose(n, m, &t, &mut back);
        assert_eq!(a, back);
    }
}
