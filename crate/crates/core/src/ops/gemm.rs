//! Row-parallel SGEMM used behind the convolution and linear kernels.
//!
//! Every output element accumulates its `k` products in ascending order no
//! matter how rows are scheduled, so results do not depend on thread count.

use rayon::prelude::*;

const COL_BLOCK: usize = 256;
const ROW_PANEL: usize = 4;
const PAR_MIN_WORK: usize = 1 << 15;

/// `c = a · b` with `a: [m, k]`, `b: [k, n]`, `c: [m, n]`, all row-major.
pub fn gemm(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if n == 0 {
        return;
    }
    // rows are processed in panels of ROW_PANEL so each loaded `b` value feeds several outputs
    let panel = |(pi, c_pan): (usize, &mut [f32])| {
        let i0 = pi * ROW_PANEL;
        let rows = c_pan.len() / n;
        c_pan.fill(0.0);
        for j0 in (0..n).step_by(COL_BLOCK) {
            let j1 = (j0 + COL_BLOCK).min(n);
            if rows == ROW_PANEL {
                let (r0, rest) = c_pan.split_at_mut(n);
                let (r1, rest) = rest.split_at_mut(n);
                let (r2, r3) = rest.split_at_mut(n);
                let (c0, c1, c2, c3) = (&mut r0[j0..j1], &mut r1[j0..j1], &mut r2[j0..j1], &mut r3[j0..j1]);
                for p in 0..k {
                    let a0 = a[i0 * k + p];
                    let a1 = a[(i0 + 1) * k + p];
                    let a2 = a[(i0 + 2) * k + p];
                    let a3 = a[(i0 + 3) * k + p];
                    let b_blk = &b[p * n + j0..p * n + j1];
                    for ((((x0, x1), x2), x3), &bv) in c0
                        .iter_mut()
                        .zip(c1.iter_mut())
                        .zip(c2.iter_mut())
                        .zip(c3.iter_mut())
                        .zip(b_blk)
                    {
                        *x0 += a0 * bv;
                        *x1 += a1 * bv;
                        *x2 += a2 * bv;
                        *x3 += a3 * bv;
                    }
                }
            } else {
                for r in 0..rows {
                    let a_row = &a[(i0 + r) * k..(i0 + r + 1) * k];
                    let c_blk = &mut c_pan[r * n + j0..r * n + j1];
                    for (p, &av) in a_row.iter().enumerate() {
                        let b_blk = &b[p * n + j0..p * n + j1];
                        for (cv, &bv) in c_blk.iter_mut().zip(b_blk) {
                            *cv += av * bv;
                        }
                    }
                }
            }
        }
    };
    if m * k * n >= PAR_MIN_WORK {
        c.par_chunks_mut(ROW_PANEL * n).enumerate().for_each(panel);
    } else {
        c.chunks_mut(ROW_PANEL * n).enumerate().for_each(panel);
    }
}

/// `c = a · bᵀ` with `a: [m, k]`, `b: [n, k]`.
pub fn gemm_bt(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(b.len(), n * k);
    let mut bt = vec![0.0f32; k * n];
    for (j, row) in b.chunks_exact(k.max(1)).enumerate().take(n) {
        for (p, &v) in row.iter().enumerate() {
            bt[p * n + j] = v;
        }
    }
    gemm(a, &bt, c, m, k, n);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0f64; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] as f64 * b[p * n + j] as f64;
                }
            }
        }
        c
    }

    #[test]
    fn matches_naive_product() {
        for &(m, k, n) in &[(1, 1, 1), (3, 5, 7), (17, 33, 600), (64, 9, 1030)] {
            let a: Vec<f32> = (0..m * k).map(|i| ((i * 7 % 13) as f32 - 6.0) / 5.0).collect();
            let b: Vec<f32> = (0..k * n).map(|i| ((i * 5 % 11) as f32 - 5.0) / 3.0).collect();
            let mut c = vec![0.0; m * n];
            gemm(&a, &b, &mut c, m, k, n);
            let want = naive(&a, &b, m, k, n);
            for (x, y) in c.iter().zip(&want) {
                assert!((*x as f64 - y).abs() < 1e-4 * (1.0 + y.abs()));
            }
            // same product through the transposed-b path
            let mut bt = vec![0.0; k * n];
            for p in 0..k {
                for j in 0..n {
                    bt[j * k + p] = b[p * n + j];
                }
            }
            let mut c2 = vec![0.0; m * n];
            gemm_bt(&a, &bt, &mut c2, m, k, n);
            for (x, y) in c2.iter().zip(&want) {
                assert!((*x as f64 - y).abs() < 1e-4 * (1.0 + y.abs()));
            }
        }
    }
}
