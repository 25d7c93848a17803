//! Real embedding `X ↦ [[Re X, −Im X], [Im X, Re X]]` of complex Hermitian matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub fn embed_hermitian(x: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut w = DMatrix::zeros(2 * n, 2 * n);
    for c in 0..n {
        for r in 0..n {
            let z = x[(r, c)];
            w[(r, c)] = z.re;
            w[(r + n, c + n)] = z.re;
            w[(r + n, c)] = z.im;
            w[(r, c + n)] = -z.im;
        }
    }
    w
}

/// Inverse of [`embed_hermitian`]; for a general real `2n × 2n` matrix it returns the
/// complex matrix whose embedding is the orthogonal projection onto embedded matrices.
pub fn extract_hermitian(w: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = w.nrows() / 2;
    DMatrix::from_fn(n, n, |r, c| {
        Complex64::new(
            0.5 * (w[(r, c)] + w[(r + n, c + n)]),
            0.5 * (w[(r + n, c)] - w[(r, c + n)]),
        )
    })
}
