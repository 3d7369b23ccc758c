#![allow(dead_code)]

use qsise_core::linalg::numerical_rank;
use qsise_core::{Matrix, SystemModel, Vector};
use rand::Rng;

pub fn section_v() -> SystemModel {
    SystemModel::checked(
        Matrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 0.7]),
        Matrix::from_row_slice(2, 1, &[2.0, 1.0]),
        Matrix::from_row_slice(1, 2, &[1.0, 1.5]),
        Matrix::identity(2, 2) * 0.1,
        Matrix::from_element(1, 1, 0.1),
        Vector::from_row_slice(&[2.0, 1.0]),
        Matrix::identity(2, 2) * 0.5,
    )
    .unwrap()
}

pub fn random_spd<R: Rng>(rng: &mut R, dim: usize, floor: f64) -> Matrix {
    let a = Matrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + Matrix::identity(dim, dim) * floor
}

/// Random model with spectral norm of `A` at most 0.95 and `rank(CG) = m`.
/// Square `CG` also requires the invariant zeros (eigenvalues of
/// `(I - G (CG)^-1 C) A`) inside 0.95, otherwise the filters diverge.
pub fn random_stable_model<R: Rng>(rng: &mut R) -> SystemModel {
    loop {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=n);
        let p = rng.gen_range(m..=3);
        let a = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let norm = a.clone().svd(false, false).singular_values.max();
        let a = if norm > 0.95 { a * (0.95 / norm) } else { a };
        let g = Matrix::from_fn(n, m, |_, _| rng.gen_range(-2.0..2.0));
        let c = Matrix::from_fn(p, n, |_, _| rng.gen_range(-2.0..2.0));
        let cg = &c * &g;
        if numerical_rank(&cg) < m || cg.clone().svd(false, false).singular_values.min() < 0.1 {
            continue;
        }
        if p == m {
            let inv = cg.clone().try_inverse().unwrap();
            let zeros = (Matrix::identity(n, n) - &g * inv * &c) * &a;
            if zeros
                .complex_eigenvalues()
                .iter()
                .any(|z| libm::hypot(z.re, z.im) > 0.95)
            {
                continue;
            }
        }
        let q = random_spd(rng, n, 0.05) * 0.2;
        let r = random_spd(rng, p, 0.05) * 0.2;
        let mu = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let p1 = random_spd(rng, n, 0.1);
        return SystemModel::checked(a, g, c, q, r, mu, p1).unwrap();
    }
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
