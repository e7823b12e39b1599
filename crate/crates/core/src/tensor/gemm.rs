//! Row-major matrix products with a fixed accumulation order.
//!
//! Each output element is accumulated as `c + a[0]b[0] + a[1]b[1] + ...` in
//! strict index order, whatever the unrolling or row partitioning. Splitting
//! the rows of `c` across threads therefore never changes a single bit.

use rayon::prelude::*;

use super::Scalar;

/// Below this many multiply-adds the product runs on the calling thread.
const PAR_THRESHOLD: usize = 1 << 20;

/// `c[m×n] = a[m×k] · b[k×n]`, or `c += a · b` when `accumulate` is set.
pub fn matmul<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "lhs size");
    assert_eq!(b.len(), k * n, "rhs size");
    assert_eq!(c.len(), m * n, "output size");
    if m == 0 || n == 0 {
        return;
    }
    let work = m * n * k;
    if work >= PAR_THRESHOLD && rayon::current_num_threads() > 1 {
        let rows_per_chunk = m.div_ceil(rayon::current_num_threads() * 2).max(1);
        c.par_chunks_mut(rows_per_chunk * n)
            .enumerate()
            .for_each(|(chunk, c_rows)| {
                let row0 = chunk * rows_per_chunk;
                rows_kernel(row0, k, n, a, b, c_rows, accumulate);
            });
    } else {
        rows_kernel(0, k, n, a, b, c, accumulate);
    }
}

fn rows_kernel<T: Scalar>(
    row0: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: &[T],
    c_rows: &mut [T],
    accumulate: bool,
) {
    let zero = T::zero();
    for (r, crow) in c_rows.chunks_exact_mut(n).enumerate() {
        if !accumulate {
            crow.fill(zero);
        }
        let arow = &a[(row0 + r) * k..(row0 + r + 1) * k];
        let mut p = 0;
        while p + 4 <= k {
            let (a0, a1, a2, a3) = (arow[p], arow[p + 1], arow[p + 2], arow[p + 3]);
            if !(a0 == zero && a1 == zero && a2 == zero && a3 == zero) {
                let b0 = &b[p * n..(p + 1) * n];
                let b1 = &b[(p + 1) * n..(p + 2) * n];
                let b2 = &b[(p + 2) * n..(p + 3) * n];
                let b3 = &b[(p + 3) * n..(p + 4) * n];
                for ((((cj, &x0), &x1), &x2), &x3) in
                    crow.iter_mut().zip(b0).zip(b1).zip(b2).zip(b3)
                {
                    *cj = *cj + a0 * x0 + a1 * x1 + a2 * x2 + a3 * x3;
                }
            }
            p += 4;
        }
        while p < k {
            let ap = arow[p];
            if ap != zero {
                for (cj, &x) in crow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                    *cj = *cj + ap * x;
                }
            }
            p += 1;
        }
    }
}

/// Transpose of a row-major `rows × cols` matrix.
pub fn transpose<T: Scalar>(rows: usize, cols: usize, src: &[T]) -> Vec<T> {
    assert_eq!(src.len(), rows * cols);
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for (c, &v) in src[r * cols..(r + 1) * cols].iter().enumerate() {
            out[c * rows + r] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn matches_naive_triple_loop_bitwise() {
        let (m, k, n) = (7, 11, 5);
        let a: Vec<f64> = (0..m * k)
            .map(|i| ((i * 37 % 17) as f64 - 8.0) / 3.0)
            .collect();
        let b: Vec<f64> = (0..k * n)
            .map(|i| ((i * 13 % 11) as f64 - 5.0) / 7.0)
            .collect();
        let mut c = vec![0.0; m * n];
        matmul(m, k, n, &a, &b, &mut c, false);
        // Same summation order as the naive loop, so equality is exact.
        assert_eq!(c, naive(m, k, n, &a, &b));
    }

    #[test]
    fn accumulate_adds_to_existing() {
        let a = [1.0f32, 2.0];
        let b = [3.0f32, 4.0];
        let mut c = [10.0f32];
        matmul(1, 2, 1, &a, &b, &mut c, true);
        assert_eq!(c, [21.0]);
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let (m, k, n) = (64, 96, 200);
        let a: Vec<f32> = (0..m * k)
            .map(|i| ((i * 7919 % 1000) as f32 - 500.0) * 1e-3)
            .collect();
        let b: Vec<f32> = (0..k * n)
            .map(|i| ((i * 104_729 % 997) as f32 - 498.0) * 1e-3)
            .collect();
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let mut c = vec![0.0f32; m * n];
                matmul(m, k, n, &a, &b, &mut c, false);
                c
            })
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn transpose_round_trip() {
        let v: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let t = transpose(3, 4, &v);
        assert_eq!(t[1], 4.0);
        assert_eq!(transpose(4, 3, &t), v);
    }
}
