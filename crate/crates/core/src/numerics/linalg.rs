//! Symmetric positive-definite factorization, log-determinant and solves.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeededRng};
use crate::Scalar;

/// Lower-triangular Cholesky factor `A = L L^T`.
pub struct Cholesky<F> {
    l: Matrix<F>,
}

fn symmetry_tolerance<F: Scalar>() -> F {
    // 1e-8 for f64 per the contract; wider types scale with their epsilon.
    F::from_f64(1e-8).max(F::epsilon() * F::from_f64(100.0))
}

fn check_symmetric<F: Scalar>(a: &Matrix<F>) -> Result<()> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::ShapeMismatch {
            op: "cholesky",
            details: format!("matrix is {}x{}, not square", a.rows(), a.cols()),
        });
    }
    let scale = F::one().max(a.max_abs());
    let tol = symmetry_tolerance::<F>() * scale;
    let mut max_asym = F::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            max_asym = max_asym.max((a.get(i, j) - a.get(j, i)).abs());
        }
    }
    if max_asym > tol {
        return Err(Error::NotSymmetric {
            max_asym: max_asym.to_f64(),
        });
    }
    Ok(())
}

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// Fails with [`Error::NotPositiveDefinite`] as soon as a pivot is
/// non-positive, and with [`Error::NotSymmetric`] if the input exceeds the
/// symmetry tolerance.
pub fn cholesky<F: Scalar>(a: &Matrix<F>) -> Result<Cholesky<F>> {
    check_symmetric(a)?;
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if d <= F::zero() {
            return Err(Error::NotPositiveDefinite {
                index: j,
                pivot: d.to_f64(),
            });
        }
        let djj = d.sqrt();
        l.set(j, j, djj);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / djj);
        }
    }
    Ok(Cholesky { l })
}

impl<F: Scalar> Cholesky<F> {
    /// `log2 det A = 2 * sum(log2 L_ii)`, accumulated in natural log and
    /// converted once.
    pub fn logdet_bits(&self) -> F {
        let n = self.l.rows();
        let mut acc = F::zero();
        for i in 0..n {
            acc += self.l.get(i, i).ln();
        }
        (acc + acc) / F::LN_2()
    }

    /// Solves `A X = B` by forward/back substitution against the factor.
    pub fn solve(&self, b: &Matrix<F>) -> Result<Matrix<F>> {
        let n = self.l.rows();
        if b.rows() != n {
            return Err(Error::ShapeMismatch {
                op: "solve_psd",
                details: format!("A is {}x{} but B has {} rows", n, n, b.rows()),
            });
        }
        let mut x = b.clone();
        let m = x.cols();
        // L y = b
        for i in 0..n {
            for k in 0..i {
                let lik = self.l.get(i, k);
                if lik == F::zero() {
                    continue;
                }
                for c in 0..m {
                    let v = x.get(i, c) - lik * x.get(k, c);
                    x.set(i, c, v);
                }
            }
            let d = self.l.get(i, i);
            for c in 0..m {
                x.set(i, c, x.get(i, c) / d);
            }
        }
        // L^T x = y
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let lki = self.l.get(k, i);
                if lki == F::zero() {
                    continue;
                }
                for c in 0..m {
                    let v = x.get(i, c) - lki * x.get(k, c);
                    x.set(i, c, v);
                }
            }
            let d = self.l.get(i, i);
            for c in 0..m {
                x.set(i, c, x.get(i, c) / d);
            }
        }
        Ok(x)
    }
}

/// `log2 det A` for symmetric positive-definite `A`, via the factor pivots.
pub fn logdet_psd<F: Scalar>(a: &Matrix<F>) -> Result<F> {
    Ok(cholesky(a)?.logdet_bits())
}

/// Solves `A X = B` for symmetric positive-definite `A`.
pub fn solve_psd<F: Scalar>(a: &Matrix<F>, b: &Matrix<F>) -> Result<Matrix<F>> {
    cholesky(a)?.solve(b)
}

/// Uniformly random rotation from the QR of a Gaussian matrix, with the sign
/// convention `R_ii > 0` so the result is unique given the Gaussian draw.
///
/// Orthogonality holds to 1e-10: Gram-Schmidt with one re-orthogonalization
/// pass.
pub fn orthogonal_random<F: Scalar>(d: usize, rng: &mut SeededRng) -> Matrix<F> {
    assert!(d >= 1);
    let g: Matrix<F> = Matrix::random_gaussian(d, d, rng);
    orthonormalize_cols(&g)
}

/// Orthonormalizes the columns of a full-column-rank matrix (modified
/// Gram-Schmidt, two passes), fixing signs so each pivot is positive.
pub(crate) fn orthonormalize_cols<F: Scalar>(g: &Matrix<F>) -> Matrix<F> {
    let (rows, cols) = (g.rows(), g.cols());
    assert!(cols <= rows);
    let mut q: Vec<Vec<F>> = (0..cols).map(|c| g.col(c)).collect();
    for j in 0..cols {
        for _pass in 0..2 {
            for k in 0..j {
                let proj = dot(&q[j], &q[k]);
                for r in 0..rows {
                    let v = q[j][r] - proj * q[k][r];
                    q[j][r] = v;
                }
            }
        }
        let mut norm = dot(&q[j], &q[j]).sqrt();
        assert!(norm > F::zero(), "rank-deficient input to orthonormalize");
        // Sign fix: make the pivot (diagonal of R) positive.
        let pivot = dot(&g.col(j), &q[j]);
        if pivot < F::zero() {
            norm = -norm;
        }
        for r in 0..rows {
            q[j][r] = q[j][r] / norm;
        }
    }
    let mut out = Matrix::zeros(rows, cols);
    for (c, col) in q.iter().enumerate() {
        out.set_col(c, col);
    }
    out
}

#[inline]
fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force determinant by cofactor expansion; independent oracle for
    /// dimensions up to 8.
    fn det_cofactor(a: &Matrix<f64>) -> f64 {
        let n = a.rows();
        assert_eq!(n, a.cols());
        if n == 1 {
            return a.get(0, 0);
        }
        let mut det = 0.0;
        let mut sign = 1.0;
        for j in 0..n {
            let mut minor = Matrix::zeros(n - 1, n - 1);
            for r in 1..n {
                let mut cc = 0;
                for c in 0..n {
                    if c == j {
                        continue;
                    }
                    minor.set(r - 1, cc, a.get(r, c));
                    cc += 1;
                }
            }
            det += sign * a.get(0, j) * det_cofactor(&minor);
            sign = -sign;
        }
        det
    }

    fn random_spd(n: usize, seed: u64) -> Matrix<f64> {
        let mut rng = SeededRng::new(seed);
        let z = Matrix::<f64>::random_gaussian(n, 2 * n, &mut rng);
        let mut a = z.aat().scale(1.0 / (2.0 * n as f64));
        a.add_scaled_identity(1.0);
        a
    }

    #[test]
    fn logdet_identity_is_zero() {
        let a = Matrix::<f64>::identity(4);
        assert_eq!(logdet_psd(&a).unwrap(), 0.0);
    }

    #[test]
    fn logdet_diagonal() {
        let a = Matrix::<f64>::from_vec(2, 2, vec![2.0, 0.0, 0.0, 2.0]).unwrap();
        assert!((logdet_psd(&a).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn logdet_matches_cofactor_oracle() {
        let mut rng = SeededRng::new(17);
        let z = Matrix::<f64>::random_gaussian(8, 16, &mut rng);
        let alpha = 0.37;
        let mut a = z.aat().scale(alpha);
        a.add_scaled_identity(1.0);
        let expect = det_cofactor(&a).log2();
        let got = logdet_psd(&a).unwrap();
        assert!((got - expect).abs() < 1e-8, "got {got}, want {expect}");
    }

    #[test]
    fn non_symmetric_rejected() {
        let a = Matrix::<f64>::from_vec(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(matches!(logdet_psd(&a), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn indefinite_rejected() {
        let a = Matrix::<f64>::from_vec(2, 2, vec![1.0, 0.0, 0.0, -1.0]).unwrap();
        assert!(matches!(
            logdet_psd(&a),
            Err(Error::NotPositiveDefinite { index: 1, .. })
        ));
    }

    #[test]
    fn solve_identity_returns_rhs() {
        let a = Matrix::<f64>::identity(3);
        let mut rng = SeededRng::new(2);
        let b = Matrix::<f64>::random_gaussian(3, 4, &mut rng);
        let x = solve_psd(&a, &b).unwrap();
        assert!(x.sub(&b).max_abs() < 1e-14);
    }

    #[test]
    fn solve_diagonal() {
        let a = Matrix::<f64>::from_vec(2, 2, vec![2.0, 0.0, 0.0, 4.0]).unwrap();
        let b = Matrix::<f64>::from_vec(2, 1, vec![2.0, 4.0]).unwrap();
        let x = solve_psd(&a, &b).unwrap();
        assert!((x.get(0, 0) - 1.0).abs() < 1e-14);
        assert!((x.get(1, 0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn solve_residual_bound() {
        let a = random_spd(6, 23);
        let mut rng = SeededRng::new(24);
        let b = Matrix::<f64>::random_gaussian(6, 3, &mut rng);
        let x = solve_psd(&a, &b).unwrap();
        let resid = a.matmul(&x).sub(&b).frob_norm() / b.frob_norm();
        assert!(resid <= 1e-10, "residual {resid}");
    }

    #[test]
    fn solve_shape_mismatch() {
        let a = Matrix::<f64>::identity(3);
        let b = Matrix::<f64>::zeros(4, 1);
        assert!(matches!(solve_psd(&a, &b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn logdet_of_inverse_cancels() {
        for n in [2usize, 5, 9, 16] {
            let a = random_spd(n, 100 + n as u64);
            let inv = solve_psd(&a, &Matrix::identity(n)).unwrap();
            // Symmetrize the numerically-inverted matrix before factorizing.
            let inv = inv.add(&inv.transpose()).scale(0.5);
            let s = logdet_psd(&a).unwrap() + logdet_psd(&inv).unwrap();
            assert!(s.abs() < 1e-8, "n={n}: {s}");
        }
    }

    #[test]
    fn weinstein_aronszajn_identity() {
        for (rows, cols, seed) in [(8usize, 16usize, 31u64), (16, 8, 32), (5, 5, 33)] {
            let mut rng = SeededRng::new(seed);
            let z = Matrix::<f64>::random_gaussian(rows, cols, &mut rng);
            let alpha = 0.85;
            let mut big = z.aat().scale(alpha);
            big.add_scaled_identity(1.0);
            let mut small = z.ata().scale(alpha);
            small.add_scaled_identity(1.0);
            let a = logdet_psd(&big).unwrap();
            let b = logdet_psd(&small).unwrap();
            assert!((a - b).abs() < 1e-8, "{rows}x{cols}: {a} vs {b}");
        }
    }

    #[test]
    fn orthogonal_random_d1_is_sign() {
        let mut rng = SeededRng::new(9);
        let q = orthogonal_random::<f64>(1, &mut rng);
        assert!((q.get(0, 0).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_random_is_orthogonal() {
        let mut rng = SeededRng::new(10);
        let q = orthogonal_random::<f64>(4, &mut rng);
        let mut qtq = q.ata();
        qtq.add_scaled_identity(-1.0);
        assert!(qtq.max_abs() <= 1e-10);
    }

    #[test]
    fn orthogonal_random_deterministic() {
        let mut r1 = SeededRng::new(77);
        let mut r2 = SeededRng::new(77);
        let q1 = orthogonal_random::<f64>(6, &mut r1);
        let q2 = orthogonal_random::<f64>(6, &mut r2);
        assert_eq!(q1, q2);
    }
}
