//! Dense complex helpers routed through real matrix products.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

fn split(a: &CMat) -> (DMatrix<f64>, DMatrix<f64>) {
    (a.map(|z| z.re), a.map(|z| z.im))
}

/// `A B` via four real products, which use the blocked real kernel.
pub fn cmul(a: &CMat, b: &CMat) -> CMat {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    re.zip_map(&im, Complex64::new)
}

/// `A Aᴴ`.
pub fn gram(a: &CMat) -> CMat {
    let (ar, ai) = split(a);
    let re = &ar * ar.transpose() + &ai * ai.transpose();
    let im = &ai * ar.transpose() - &ar * ai.transpose();
    re.zip_map(&im, Complex64::new)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(h: &CMat) -> f64 {
    h.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_match_naive() {
        let a = CMat::from_fn(4, 3, |r, c| Complex64::new(r as f64 - c as f64, 0.5 * (r * c) as f64));
        let b = CMat::from_fn(3, 5, |r, c| Complex64::new((r + c) as f64, 1.0 - c as f64));
        assert!((cmul(&a, &b) - &a * &b).norm() < 1e-12);
        assert!((gram(&a) - &a * a.adjoint()).norm() < 1e-12);
    }
}
