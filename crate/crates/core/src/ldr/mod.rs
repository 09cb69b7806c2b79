//! Coding-rate objective: whole-batch rate, class-wise rate, their gap, and
//! analytical gradients.
//!
//! All rates are in bits (log base 2). Internals accumulate natural logs and
//! convert once at the boundary. For a latent batch `Z` (one sample per
//! column) the whole-batch rate is
//!
//! ```text
//! R(Z) = 1/2 log2 det(I + (d / (eps^2 N)) Z Z^T)
//! ```
//!
//! and the class-wise rate sums the same functional over the class column
//! groups, weighted by class size. The training loss is the negated gap
//! `-(R - R_c)`.

mod partition;

pub use partition::Partition;

use crate::error::{Error, Result};
use crate::numerics::{solve_psd, Matrix};
use crate::Scalar;

/// Which dimension multiplies the precision term in the rate.
///
/// `LatentDim` uses the row count of `Z`; `InputDim` pins an explicit value
/// for runs that want the input-dimension scaling instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleDimMode {
    LatentDim,
    InputDim(usize),
}

/// Configuration of the rate functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdrConfig {
    /// Squared quantization precision of the rate-distortion surrogate.
    pub eps_sq: f64,
    pub scale_dim: ScaleDimMode,
    /// Whether latent columns are expected to be unit-normalized before the
    /// rate is evaluated (enforced upstream by the side branch).
    pub normalize_columns: bool,
}

impl Default for LdrConfig {
    fn default() -> Self {
        LdrConfig {
            eps_sq: 0.5,
            scale_dim: ScaleDimMode::LatentDim,
            normalize_columns: true,
        }
    }
}

impl LdrConfig {
    fn dim_factor(&self, latent_rows: usize) -> usize {
        match self.scale_dim {
            ScaleDimMode::LatentDim => latent_rows,
            ScaleDimMode::InputDim(d) => d,
        }
    }
}

/// `1/2 log2 det(I + alpha G)` evaluated on whichever Gram side of `Z` is
/// smaller; the two sides agree by the Weinstein-Aronszajn identity.
fn half_logdet_gram<F: Scalar>(z: &Matrix<F>, alpha: f64) -> Result<F> {
    let side = if z.rows() <= z.cols() { z.aat() } else { z.ata() };
    let mut gram = side.scale(F::from_f64(alpha));
    gram.add_scaled_identity(F::one());
    let ld = crate::numerics::logdet_psd(&gram)?;
    Ok(ld * F::from_f64(0.5))
}

/// Whole-batch coding rate `R(Z)` in bits.
pub fn coding_rate<F: Scalar>(z: &Matrix<F>, cfg: &LdrConfig) -> Result<F> {
    let d = cfg.dim_factor(z.rows());
    let alpha = d as f64 / (cfg.eps_sq * z.cols() as f64);
    half_logdet_gram(z, alpha)
}

/// Class-wise coding rate `R_c(Z, partition)` in bits.
///
/// Classes absent from the batch contribute nothing. Per-class terms are
/// accumulated in ascending class order so the summation is deterministic.
pub fn class_rate<F: Scalar>(z: &Matrix<F>, part: &Partition, cfg: &LdrConfig) -> Result<F> {
    if part.len() != z.cols() {
        return Err(Error::PartitionMismatch(format!(
            "partition covers {} columns but Z has {}",
            part.len(),
            z.cols()
        )));
    }
    let d = cfg.dim_factor(z.rows());
    let n = z.cols() as f64;
    let mut total = F::zero();
    for j in part.present_classes() {
        let cols = part.class_columns(j);
        let tr = cols.len() as f64;
        let zj = z.gather_cols(&cols);
        let alpha_j = d as f64 / (cfg.eps_sq * tr);
        let weight = F::from_f64(tr / n);
        total += weight * half_logdet_gram(&zj, alpha_j)?;
    }
    Ok(total)
}

/// Rate reduction `delta R = R(Z) - R_c(Z, partition)`, in bits.
///
/// The training loss is `-delta R`; the reduction itself is nonnegative for
/// every well-formed input.
pub fn delta_r<F: Scalar>(z: &Matrix<F>, part: &Partition, cfg: &LdrConfig) -> Result<F> {
    Ok(coding_rate(z, cfg)? - class_rate(z, part, cfg)?)
}

/// Self-supervised rate loss: `-delta R` under an artificial self-labeled
/// partition built by batch augmentation. Shares the gradient path with
/// [`delta_r_grad`].
pub fn ldr_ssl_loss<F: Scalar>(z: &Matrix<F>, self_part: &Partition, cfg: &LdrConfig) -> Result<F> {
    Ok(-delta_r(z, self_part, cfg)?)
}

/// `(I + alpha Z Z^T)^{-1} Z`, solved on whichever side is smaller.
///
/// The push-through identity `(I + alpha Z Z^T)^{-1} Z = Z (I + alpha Z^T Z)^{-1}`
/// licenses the column-side solve when the batch is narrow.
fn resolvent_apply<F: Scalar>(z: &Matrix<F>, alpha: f64) -> Result<Matrix<F>> {
    let alpha_f = F::from_f64(alpha);
    if z.rows() <= z.cols() {
        let mut m = z.aat().scale(alpha_f);
        m.add_scaled_identity(F::one());
        solve_psd(&m, z)
    } else {
        let mut m = z.ata().scale(alpha_f);
        m.add_scaled_identity(F::one());
        Ok(solve_psd(&m, &z.transpose())?.transpose())
    }
}

/// Gradient of `delta_r` with respect to `Z`, in bits.
///
/// Uses the closed forms obtained from `d log det(X) / dX = X^{-T}`:
/// the whole-batch term is `(alpha / ln 2) (I + alpha Z Z^T)^{-1} Z`, and each
/// class term carries the same leading coefficient because
/// `tr(Pi_j) * alpha_j = d / eps^2` independently of the class size.
pub fn delta_r_grad<F: Scalar>(z: &Matrix<F>, part: &Partition, cfg: &LdrConfig) -> Result<Matrix<F>> {
    if part.len() != z.cols() {
        return Err(Error::PartitionMismatch(format!(
            "partition covers {} columns but Z has {}",
            part.len(),
            z.cols()
        )));
    }
    let d = cfg.dim_factor(z.rows());
    let n = z.cols() as f64;
    let alpha = d as f64 / (cfg.eps_sq * n);
    let coeff = F::from_f64(alpha / std::f64::consts::LN_2);

    let grad_r = resolvent_apply(z, alpha)?.scale(coeff);

    let mut grad_rc = Matrix::zeros(z.rows(), z.cols());
    for j in part.present_classes() {
        let cols = part.class_columns(j);
        let alpha_j = d as f64 / (cfg.eps_sq * cols.len() as f64);
        let wj = resolvent_apply(&z.gather_cols(&cols), alpha_j)?.scale(coeff);
        grad_rc.scatter_cols(&cols, &wj);
    }
    Ok(grad_r.sub(&grad_rc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{orthogonal_random, SeededRng};

    fn cfg() -> LdrConfig {
        LdrConfig::default()
    }

    /// Reference class rate that materializes each selector as a dense
    /// diagonal matrix and works through full matrix products. Test oracle
    /// only; independent of the gather-based production path.
    fn class_rate_dense_pi(z: &Matrix<f64>, part: &Partition, cfg: &LdrConfig) -> f64 {
        let n = z.cols();
        let d = match cfg.scale_dim {
            ScaleDimMode::LatentDim => z.rows(),
            ScaleDimMode::InputDim(v) => v,
        };
        let mut total = 0.0;
        for j in 0..part.k() {
            let tr = part.labels().iter().filter(|&&l| l == j).count() as f64;
            if tr == 0.0 {
                continue;
            }
            let mut pi = Matrix::zeros(n, n);
            for (i, &l) in part.labels().iter().enumerate() {
                if l == j {
                    pi.set(i, i, 1.0);
                }
            }
            let alpha_j = d as f64 / (cfg.eps_sq * tr);
            let zpz = z.matmul(&pi).matmul(&z.transpose());
            let mut m = zpz.scale(alpha_j);
            m.add_scaled_identity(1.0);
            total += tr / (2.0 * n as f64) * crate::numerics::logdet_psd(&m).unwrap();
        }
        total
    }

    fn near_zero_matrix(rows: usize, cols: usize) -> Matrix<f64> {
        // Exactly zero is fine for the rate value; the log det of I is 0.
        Matrix::zeros(rows, cols)
    }

    #[test]
    fn coding_rate_of_zero_is_zero() {
        let z = near_zero_matrix(5, 9);
        assert_eq!(coding_rate(&z, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn coding_rate_scalar_formula() {
        let z = Matrix::<f64>::from_vec(1, 1, vec![1.0]).unwrap();
        let c = LdrConfig {
            eps_sq: 1.0,
            ..cfg()
        };
        // d = 1, N = 1: 1/2 log2(1 + 1) = 0.5
        assert!((coding_rate(&z, &c).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn coding_rate_orthogonal_invariance() {
        let mut rng = SeededRng::new(41);
        let z = Matrix::<f64>::random_gaussian(8, 32, &mut rng);
        let q = orthogonal_random::<f64>(8, &mut rng);
        let r1 = coding_rate(&z, &cfg()).unwrap();
        let r2 = coding_rate(&q.matmul(&z), &cfg()).unwrap();
        assert!((r1 - r2).abs() < 1e-8);
    }

    #[test]
    fn coding_rate_monotone_in_scale() {
        let mut rng = SeededRng::new(42);
        for t in 0..10 {
            let z = Matrix::<f64>::random_gaussian(4, 12, &mut rng);
            let r1 = coding_rate(&z, &cfg()).unwrap();
            let r2 = coding_rate(&z.scale(1.5 + 0.1 * t as f64), &cfg()).unwrap();
            assert!(r2 > r1);
        }
    }

    #[test]
    fn class_rate_single_class_equals_coding_rate() {
        let mut rng = SeededRng::new(43);
        let z = Matrix::<f64>::random_gaussian(6, 10, &mut rng);
        let part = Partition::new(vec![0; 10], 1).unwrap();
        let a = class_rate(&z, &part, &cfg()).unwrap();
        let b = coding_rate(&z, &cfg()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn class_rate_zero_input() {
        let z = near_zero_matrix(4, 6);
        let part = Partition::new(vec![0, 1, 0, 1, 0, 1], 2).unwrap();
        assert_eq!(class_rate(&z, &part, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn class_rate_matches_per_class_submatrix_oracle() {
        // Two classes on orthogonal coordinate subspaces; the class-rate must
        // equal the weighted sum of whole-batch rates of the submatrices.
        let mut rng = SeededRng::new(44);
        let mut z = Matrix::zeros(6, 9);
        let mut labels = Vec::new();
        for c in 0..9 {
            let class = if c < 4 { 0 } else { 1 };
            labels.push(class);
            let rows = if class == 0 { 0..3 } else { 3..6 };
            for r in rows {
                z.set(r, c, rng.standard_normal());
            }
        }
        let part = Partition::new(labels, 2).unwrap();
        let got = class_rate(&z, &part, &cfg()).unwrap();

        let n = z.cols() as f64;
        let mut want = 0.0;
        for j in 0..2 {
            let colsj = part.class_columns(j);
            let zj = z.gather_cols(&colsj);
            // coding_rate on the submatrix uses N = tr_j, so the class term
            // is tr_j/N times it.
            want += colsj.len() as f64 / n * coding_rate(&zj, &cfg()).unwrap();
        }
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn class_rate_matches_dense_pi_oracle() {
        let mut rng = SeededRng::new(45);
        let z = Matrix::<f64>::random_gaussian(5, 12, &mut rng);
        let labels: Vec<usize> = (0..12).map(|_| rng.next_index(3)).collect();
        let part = Partition::new(labels, 3).unwrap();
        let got = class_rate(&z, &part, &cfg()).unwrap();
        let want = class_rate_dense_pi(&z, &part, &cfg());
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn class_rate_partition_length_mismatch() {
        let z = Matrix::<f64>::zeros(2, 3);
        let part = Partition::new(vec![0, 1], 2).unwrap();
        assert!(matches!(
            class_rate(&z, &part, &cfg()),
            Err(Error::PartitionMismatch(_))
        ));
    }

    #[test]
    fn delta_r_trivial_cases() {
        let mut rng = SeededRng::new(46);
        let z = Matrix::<f64>::random_gaussian(4, 8, &mut rng);
        let one_class = Partition::new(vec![0; 8], 1).unwrap();
        assert!(delta_r(&z, &one_class, &cfg()).unwrap().abs() < 1e-12);

        let z0 = near_zero_matrix(4, 8);
        let part = Partition::new(vec![0, 1, 0, 1, 0, 1, 0, 1], 2).unwrap();
        assert_eq!(delta_r(&z0, &part, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn delta_r_nonnegative_over_seeded_trials() {
        for seed in 0..100u64 {
            let mut rng = SeededRng::new(seed);
            let rows = 2 + rng.next_index(6);
            let cols = 4 + rng.next_index(20);
            let k = 1 + rng.next_index(4);
            let z = Matrix::<f64>::random_gaussian(rows, cols, &mut rng);
            let labels: Vec<usize> = (0..cols).map(|_| rng.next_index(k)).collect();
            let part = Partition::new(labels, k).unwrap();
            let dr = delta_r(&z, &part, &cfg()).unwrap();
            assert!(dr >= -1e-9, "seed {seed}: delta_r = {dr}");
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = SeededRng::new(47);
        let z = Matrix::<f64>::random_gaussian(5, 10, &mut rng);
        let labels: Vec<usize> = (0..10).map(|_| rng.next_index(3)).collect();
        let part = Partition::new(labels.clone(), 3).unwrap();

        let mut perm: Vec<usize> = (0..10).collect();
        rng.shuffle(&mut perm);
        let zp = z.gather_cols(&perm);
        let lp: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let pp = Partition::new(lp, 3).unwrap();

        let r = (coding_rate(&z, &cfg()).unwrap() - coding_rate(&zp, &cfg()).unwrap()).abs();
        let rc = (class_rate(&z, &part, &cfg()).unwrap() - class_rate(&zp, &pp, &cfg()).unwrap()).abs();
        assert!(r < 1e-10);
        assert!(rc < 1e-10);
    }

    fn finite_difference_grad(
        z: &Matrix<f64>,
        part: &Partition,
        cfg: &LdrConfig,
        step: f64,
    ) -> Matrix<f64> {
        let mut g = Matrix::zeros(z.rows(), z.cols());
        for r in 0..z.rows() {
            for c in 0..z.cols() {
                let mut zp = z.clone();
                zp.set(r, c, z.get(r, c) + step);
                let mut zm = z.clone();
                zm.set(r, c, z.get(r, c) - step);
                let fp = delta_r(&zp, part, cfg).unwrap();
                let fm = delta_r(&zm, part, cfg).unwrap();
                g.set(r, c, (fp - fm) / (2.0 * step));
            }
        }
        g
    }

    #[test]
    fn grad_zero_at_zero() {
        let z = Matrix::<f64>::zeros(4, 8);
        let part = Partition::new(vec![0, 1, 2, 3, 0, 1, 2, 3], 4).unwrap();
        let g = delta_r_grad(&z, &part, &cfg()).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn grad_zero_for_single_class() {
        let mut rng = SeededRng::new(48);
        let z = Matrix::<f64>::random_gaussian(4, 9, &mut rng);
        let part = Partition::new(vec![0; 9], 1).unwrap();
        let g = delta_r_grad(&z, &part, &cfg()).unwrap();
        assert!(g.max_abs() < 1e-10);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = SeededRng::new(49);
        let z = Matrix::<f64>::random_gaussian(8, 16, &mut rng);
        let labels: Vec<usize> = (0..16).map(|_| rng.next_index(4)).collect();
        let part = Partition::new(labels, 4).unwrap();
        let g = delta_r_grad(&z, &part, &cfg()).unwrap();
        let fd = finite_difference_grad(&z, &part, &cfg(), 1e-5);
        let rel = g.sub(&fd).max_abs() / fd.max_abs().max(1e-12);
        assert!(rel <= 1e-5, "relative error {rel}");
    }

    #[test]
    fn grad_matches_fd_in_input_dim_mode() {
        let c = LdrConfig {
            scale_dim: ScaleDimMode::InputDim(32),
            eps_sq: 0.5,
            normalize_columns: false,
        };
        let mut rng = SeededRng::new(50);
        let z = Matrix::<f64>::random_gaussian(6, 12, &mut rng);
        let labels: Vec<usize> = (0..12).map(|_| rng.next_index(3)).collect();
        let part = Partition::new(labels, 3).unwrap();
        let g = delta_r_grad(&z, &part, &c).unwrap();
        let fd = finite_difference_grad(&z, &part, &c, 1e-5);
        let rel = g.sub(&fd).max_abs() / fd.max_abs().max(1e-12);
        assert!(rel <= 1e-5, "relative error {rel}");
    }

    #[test]
    fn ssl_loss_is_negated_delta_r() {
        let mut rng = SeededRng::new(51);
        let z = Matrix::<f64>::random_gaussian(4, 8, &mut rng);
        let singles = Partition::singletons(8);
        let a = ldr_ssl_loss(&z, &singles, &cfg()).unwrap();
        let b = -delta_r(&z, &singles, &cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ssl_loss_identical_copies_rank_one_classes() {
        // Two identical copies per self-class: delegation to delta_r on the
        // same partition must agree exactly.
        let mut rng = SeededRng::new(52);
        let base = Matrix::<f64>::random_gaussian(5, 4, &mut rng);
        let mut z = Matrix::zeros(5, 8);
        let mut labels = Vec::new();
        for j in 0..4 {
            for copy in 0..2 {
                z.set_col(j * 2 + copy, &base.col(j));
                labels.push(j);
            }
        }
        let part = Partition::new(labels, 4).unwrap();
        let loss = ldr_ssl_loss(&z, &part, &cfg()).unwrap();
        let dr = delta_r(&z, &part, &cfg()).unwrap();
        assert_eq!(loss, -dr);
        assert!(dr >= -1e-9);
    }
}
