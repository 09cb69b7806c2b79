//! Entropy-proportional latent quantization and the lossless latent codec.
//!
//! Per-entry step sizes are proportional to the entry's modeled entropy on
//! the training set: `q_i = s * H_i` with a global scale `s` selecting the
//! rate point. Entries are modeled as Gaussians; `H_i` is the differential
//! entropy of the fit, floored so steps stay positive for near-constant
//! entries. Quantized latents serialize through a range coder driven by the
//! same profile, so edge and server only ever exchange the profile once.

mod profile_io;
mod range;
mod stream;

pub use profile_io::{load_profile, profile_bytes, save_profile};
pub use range::{RangeDecoder, RangeEncoder, PROB_TOTAL};
pub use stream::{decode_stream, encode_stream, model_cross_entropy_bits, LatentBitstream, STREAM_MAGIC, STREAM_VERSION};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::Scalar;

/// How the per-entry step size derives from the per-entry entropy.
///
/// `InverseEntropy` is an ablation variant with no correctness claim
/// attached; the proportional rule is the one the bench reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    #[default]
    EntropyProportional,
    InverseEntropy,
}

impl StepRule {
    pub fn name(self) -> &'static str {
        match self {
            StepRule::EntropyProportional => "proportional",
            StepRule::InverseEntropy => "inverse",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "proportional" => Ok(StepRule::EntropyProportional),
            "inverse" => Ok(StepRule::InverseEntropy),
            other => Err(Error::ConfigError(format!("unknown step rule {other:?}"))),
        }
    }
}

pub const DEFAULT_ENTROPY_FLOOR: f64 = 0.1;

/// Per-entry Gaussian statistics of the training latents plus everything the
/// quantizer and the entropy coder derive from them. Computed on training
/// data only; immutable once fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationProfile {
    d_y: usize,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    entropy_bits: Vec<f64>,
    scale: f64,
    steps: Vec<f64>,
    mask: Vec<bool>,
    h_min: f64,
    step_rule: StepRule,
}

/// `0.5 * log2(2 pi e sigma^2)`: differential entropy of a Gaussian, bits.
fn gaussian_entropy_bits(sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return f64::NEG_INFINITY;
    }
    0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * sigma * sigma).log2()
}

fn row_mean_std<F: Scalar>(m: &Matrix<F>, row: usize) -> (f64, f64) {
    let n = m.cols();
    let vals: Vec<f64> = m.row(row).iter().map(|&v| Scalar::to_f64(v)).collect();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

impl QuantizationProfile {
    pub fn d_y(&self) -> usize {
        self.d_y
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    pub fn step_rule(&self) -> StepRule {
        self.step_rule
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Floored per-entry entropies, bits.
    pub fn entropy_bits(&self) -> &[f64] {
        &self.entropy_bits
    }

    /// Per-entry step sizes; positive for every entry.
    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &keep)| keep)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn kept_count(&self) -> usize {
        self.mask.iter().filter(|&&k| k).count()
    }

    /// Same statistics, new global scale: recomputes the steps only.
    pub fn with_scale(&self, scale: f64) -> Result<QuantizationProfile> {
        if scale <= 0.0 {
            return Err(Error::ConfigError("scale must be positive".into()));
        }
        let mut out = self.clone();
        out.scale = scale;
        out.steps = derive_steps(&out.entropy_bits, scale, out.step_rule);
        Ok(out)
    }

    /// Packed kept-entry bitmap, LSB-first, as appears in stream headers.
    pub fn mask_bitmap(&self) -> Vec<u8> {
        let mut bytes = vec![0u8; self.d_y.div_ceil(8)];
        for (i, &keep) in self.mask.iter().enumerate() {
            if keep {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        bytes
    }
}

fn derive_steps(entropy_bits: &[f64], scale: f64, rule: StepRule) -> Vec<f64> {
    entropy_bits
        .iter()
        .map(|&h| match rule {
            StepRule::EntropyProportional => scale * h,
            StepRule::InverseEntropy => scale / h,
        })
        .collect()
}

/// Fits per-entry Gaussians on training latents and derives the step sizes.
/// `mask` defaults to all-kept.
pub fn fit_profile<F: Scalar>(
    y_train: &Matrix<F>,
    scale: f64,
    mask: Option<Vec<bool>>,
) -> Result<QuantizationProfile> {
    fit_profile_with(y_train, scale, mask, StepRule::EntropyProportional, DEFAULT_ENTROPY_FLOOR)
}

pub fn fit_profile_with<F: Scalar>(
    y_train: &Matrix<F>,
    scale: f64,
    mask: Option<Vec<bool>>,
    step_rule: StepRule,
    h_min: f64,
) -> Result<QuantizationProfile> {
    if y_train.cols() < 2 {
        return Err(Error::DegenerateInput(format!(
            "need at least 2 training samples, got {}",
            y_train.cols()
        )));
    }
    if scale <= 0.0 {
        return Err(Error::ConfigError("scale must be positive".into()));
    }
    if h_min <= 0.0 {
        return Err(Error::ConfigError("entropy floor must be positive".into()));
    }
    let d_y = y_train.rows();
    let mask = mask.unwrap_or_else(|| vec![true; d_y]);
    if mask.len() != d_y {
        return Err(Error::ProfileMismatch(format!(
            "mask covers {} entries, latents have {}",
            mask.len(),
            d_y
        )));
    }
    if !mask.iter().any(|&k| k) {
        return Err(Error::MaskEmpty);
    }
    let mut mu = Vec::with_capacity(d_y);
    let mut sigma = Vec::with_capacity(d_y);
    let mut entropy_bits = Vec::with_capacity(d_y);
    for r in 0..d_y {
        let (m, s) = row_mean_std(y_train, r);
        mu.push(m);
        sigma.push(s);
        entropy_bits.push(gaussian_entropy_bits(s).max(h_min));
    }
    let steps = derive_steps(&entropy_bits, scale, step_rule);
    Ok(QuantizationProfile { d_y, mu, sigma, entropy_bits, scale, steps, mask, h_min, step_rule })
}

/// Quantizes one latent vector to integers over the kept entries, in index
/// order: `round_half_away_from_zero((y_i - mu_i) / q_i)`. Masked entries are
/// dropped.
pub fn quantize<F: Scalar>(y: &[F], prof: &QuantizationProfile) -> Result<Vec<i32>> {
    if y.len() != prof.d_y {
        return Err(Error::ProfileMismatch(format!(
            "vector has {} entries, profile expects {}",
            y.len(),
            prof.d_y
        )));
    }
    let mut out = Vec::with_capacity(prof.kept_count());
    for i in 0..prof.d_y {
        if !prof.mask[i] {
            continue;
        }
        // f64::round rounds half away from zero.
        let t = ((y[i].to_f64() - prof.mu[i]) / prof.steps[i]).round();
        out.push(t.clamp(i32::MIN as f64, i32::MAX as f64) as i32);
    }
    Ok(out)
}

/// Reconstructs a full-length latent vector: kept entries as `v_i * q_i +
/// mu_i`, masked entries filled with their training mean.
pub fn dequantize<F: Scalar>(v: &[i32], prof: &QuantizationProfile) -> Result<Vec<F>> {
    if v.len() != prof.kept_count() {
        return Err(Error::ProfileMismatch(format!(
            "{} coefficients for {} kept entries",
            v.len(),
            prof.kept_count()
        )));
    }
    let mut out = Vec::with_capacity(prof.d_y);
    let mut next = 0usize;
    for i in 0..prof.d_y {
        if prof.mask[i] {
            out.push(F::from_f64(v[next] as f64 * prof.steps[i] + prof.mu[i]));
            next += 1;
        } else {
            out.push(F::from_f64(prof.mu[i]));
        }
    }
    Ok(out)
}

/// Modeled and empirical entropies of the quantized latents on held-out data.
#[derive(Debug, Clone)]
pub struct EntropyReport {
    /// Headline number: sum over kept entries of the clipped high-rate
    /// Gaussian approximation `max(0, 0.5 log2(2 pi e sigma_hat^2 / q^2))`.
    pub model_bits_total: f64,
    pub per_entry_model_bits: Vec<f64>,
    /// Cross-check: per-entry Shannon entropy of the empirical histogram of
    /// quantized values.
    pub per_entry_histogram_bits: Vec<f64>,
    pub histogram_bits_total: f64,
}

/// Evaluates the total entropy of the quantized latents on a held-out set,
/// under the per-entry Gaussian model, with an empirical-histogram
/// cross-check.
pub fn total_entropy<F: Scalar>(y_test: &Matrix<F>, prof: &QuantizationProfile) -> Result<EntropyReport> {
    if y_test.rows() != prof.d_y {
        return Err(Error::ProfileMismatch(format!(
            "latents have {} rows, profile expects {}",
            y_test.rows(),
            prof.d_y
        )));
    }
    if y_test.cols() < 2 {
        return Err(Error::DegenerateInput("need at least 2 evaluation samples".into()));
    }
    let n = y_test.cols();
    let mut per_model = vec![0.0; prof.d_y];
    let mut per_hist = vec![0.0; prof.d_y];
    for i in 0..prof.d_y {
        if !prof.mask[i] {
            continue;
        }
        let (_, sigma_hat) = row_mean_std(y_test, i);
        let q = prof.steps[i];
        per_model[i] = (gaussian_entropy_bits(sigma_hat) - q.log2()).max(0.0);

        let mut counts: std::collections::BTreeMap<i64, usize> = std::collections::BTreeMap::new();
        for c in 0..n {
            let v = ((y_test.get(i, c).to_f64() - prof.mu[i]) / q).round() as i64;
            *counts.entry(v).or_insert(0) += 1;
        }
        let mut h = 0.0;
        for &count in counts.values() {
            let p = count as f64 / n as f64;
            h -= p * p.log2();
        }
        per_hist[i] = h;
    }
    Ok(EntropyReport {
        model_bits_total: per_model.iter().sum(),
        histogram_bits_total: per_hist.iter().sum(),
        per_entry_model_bits: per_model,
        per_entry_histogram_bits: per_hist,
    })
}

/// Truncation mask update: keep a leading fraction or an explicit index set.
#[derive(Debug, Clone)]
pub enum MaskSpec<'a> {
    /// Keeps the first `round(fraction * d_y)` entries (at least one); the
    /// trailing entries are truncated.
    KeepFirstFraction(f64),
    KeepIndices(&'a [usize]),
}

/// Returns a profile with an updated truncation mask; statistics and steps
/// are unchanged.
pub fn apply_mask(prof: &QuantizationProfile, spec: MaskSpec<'_>) -> Result<QuantizationProfile> {
    let mut mask = vec![false; prof.d_y];
    match spec {
        MaskSpec::KeepFirstFraction(f) => {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::ConfigError("keep fraction must lie in [0, 1]".into()));
            }
            let count = ((f * prof.d_y as f64).round() as usize).min(prof.d_y);
            if count == 0 {
                return Err(Error::MaskEmpty);
            }
            for m in mask.iter_mut().take(count) {
                *m = true;
            }
        }
        MaskSpec::KeepIndices(idx) => {
            if idx.is_empty() {
                return Err(Error::MaskEmpty);
            }
            for &i in idx {
                if i >= prof.d_y {
                    return Err(Error::ProfileMismatch(format!(
                        "kept index {} out of range for {} entries",
                        i, prof.d_y
                    )));
                }
                mask[i] = true;
            }
        }
    }
    let mut out = prof.clone();
    out.mask = mask;
    Ok(out)
}
