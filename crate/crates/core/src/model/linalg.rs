//! Dense kernels shared by the cached forward pass.
//!
//! Every output element is accumulated over the inner dimension in ascending
//! order starting from zero, so a row's result never depends on which other
//! rows share the call. Batch composition therefore cannot change numerics.

use crate::scalar::Scalar;

const ROW_CHUNK: usize = 16;
pub(crate) const NORM_EPS: f64 = 1e-5;

/// `a[n×k] · w[k×m]`, row-major. Each weight row is streamed once per chunk of
/// `ROW_CHUNK` activation rows.
pub fn matmul<T: Scalar>(a: &[T], n: usize, k: usize, w: &[T], m: usize) -> Vec<T> {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(w.len(), k * m);
    let mut out = vec![T::zero(); n * m];
    for (chunk_idx, out_chunk) in out.chunks_mut(ROW_CHUNK * m).enumerate() {
        let row0 = chunk_idx * ROW_CHUNK;
        let rows = out_chunk.len() / m;
        for kk in 0..k {
            let w_row = &w[kk * m..(kk + 1) * m];
            for r in 0..rows {
                let coeff = a[(row0 + r) * k + kk];
                let dst = &mut out_chunk[r * m..(r + 1) * m];
                for (d, &wv) in dst.iter_mut().zip(w_row) {
                    *d += coeff * wv;
                }
            }
        }
    }
    out
}

/// Root-mean-square normalisation without a learned gain.
pub fn rms_norm<T: Scalar>(row: &[T]) -> Vec<T> {
    let mut sq = T::zero();
    for &x in row {
        sq += x * x;
    }
    let denom = (sq / T::from_count(row.len()) + T::from_f64_lossy(NORM_EPS)).sqrt();
    row.iter().map(|&x| x / denom).collect()
}

pub fn rms_norm_rows<T: Scalar>(x: &[T], width: usize) -> Vec<T> {
    x.chunks(width).flat_map(rms_norm).collect()
}

pub fn silu<T: Scalar>(x: T) -> T {
    x / (T::one() + (-x).exp())
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_naive_triple_loop() {
        let (n, k, m) = (37, 5, 3);
        let a: Vec<f64> = (0..n * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let w: Vec<f64> = (0..k * m).map(|i| (i as f64 * 0.11).cos()).collect();
        let got = matmul(&a, n, k, &w, m);
        for i in 0..n {
            for j in 0..m {
                let mut acc = 0.0;
                for kk in 0..k {
                    acc += a[i * k + kk] * w[kk * m + j];
                }
                assert_eq!(got[i * m + j], acc);
            }
        }
    }

    #[test]
    fn matmul_rows_independent_of_batch() {
        let (k, m) = (8, 6);
        let a: Vec<f32> = (0..40 * k).map(|i| (i as f32 * 0.7).sin()).collect();
        let w: Vec<f32> = (0..k * m).map(|i| (i as f32 * 0.3).cos()).collect();
        let all = matmul(&a, 40, k, &w, m);
        for i in [0usize, 15, 16, 39] {
            let one = matmul(&a[i * k..(i + 1) * k], 1, k, &w, m);
            assert_eq!(&all[i * m..(i + 1) * m], &one[..]);
        }
    }

    #[test]
    fn rms_norm_has_unit_rms() {
        let y = rms_norm(&[3.0f64, -4.0, 0.0, 5.0]);
        let rms = (y.iter().map(|v| v * v).sum::<f64>() / 4.0).sqrt();
        assert!((rms - 1.0).abs() < 1e-5);
    }
}
