//! Rate-accuracy sweeps, distortion robustness and the latent-std table.

use super::{ChannelSpec, DatasetHandle, ModelTag, RateAccuracyPoint};
use crate::augment::{distort_eval_set, AugmentSpec};
use crate::codec::{fit_profile_with, total_entropy, StepRule, DEFAULT_ENTROPY_FLOOR};
use crate::error::{Error, Result};
use crate::nn::{encode, streams, ModelParams};
use crate::numerics::{Matrix, SeededRng};
use crate::Scalar;

/// Profile-fitting knobs shared by every sweep point.
#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub step_rule: StepRule,
    pub h_min: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { step_rule: StepRule::EntropyProportional, h_min: DEFAULT_ENTROPY_FLOOR }
    }
}

/// One rate-accuracy point per (model, scale). Profiles are fitted on the
/// training latents once per model and rescaled per grid point; entropy is
/// evaluated on the test latents; accuracy runs through the channel. Points
/// come back sorted by (model tag, s).
pub fn sweep_rate_accuracy<F: Scalar>(
    models: &[(ModelTag, &ModelParams<F>)],
    dataset: &DatasetHandle<F>,
    s_grid: &[f64],
    channel: &ChannelSpec,
    opts: SweepOptions,
) -> Result<Vec<RateAccuracyPoint>> {
    sweep_against_test(models, dataset, None, s_grid, channel, opts)
}

fn sweep_against_test<F: Scalar>(
    models: &[(ModelTag, &ModelParams<F>)],
    dataset: &DatasetHandle<F>,
    test_override: Option<&Matrix<F>>,
    s_grid: &[f64],
    channel: &ChannelSpec,
    opts: SweepOptions,
) -> Result<Vec<RateAccuracyPoint>> {
    if s_grid.is_empty() {
        return Err(Error::ConfigError("empty scale grid".into()));
    }
    if s_grid.iter().any(|&s| s <= 0.0) {
        return Err(Error::ConfigError("scales must be positive".into()));
    }
    let test = dataset.test_view()?;
    let test_x = test_override.unwrap_or(test.x);
    let mut points = Vec::with_capacity(models.len() * s_grid.len());
    let mut sorted_models: Vec<&(ModelTag, &ModelParams<F>)> = models.iter().collect();
    sorted_models.sort_by_key(|(tag, _)| *tag);

    for (tag, params) in sorted_models {
        let y_train = encode(*params, &dataset.train.x)?;
        let y_test = encode(*params, test_x)?;
        let base = fit_profile_with(&y_train, 1.0, None, opts.step_rule, opts.h_min)?;
        let mut sorted_grid = s_grid.to_vec();
        sorted_grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for &s in &sorted_grid {
            let prof = base.with_scale(s)?;
            let entropy = total_entropy(&y_test, &prof)?;
            let outcome = super::split_inference(params, &prof, channel, test_x)?;
            points.push(RateAccuracyPoint {
                model: *tag,
                dataset: dataset.name.clone(),
                d_y: params.d_y,
                s,
                total_entropy_bits: entropy.model_bits_total,
                mean_bits_per_sample: outcome.mean_bits(),
                accuracy: outcome.accuracy(test.labels),
                drops: outcome.drops,
            });
        }
    }
    Ok(points)
}

/// Same sweep with the test set passed through one random transform per
/// sample first. With an identity-only collection this reproduces
/// [`sweep_rate_accuracy`] exactly.
pub fn eval_distortion_robustness<F: Scalar>(
    models: &[(ModelTag, &ModelParams<F>)],
    dataset: &DatasetHandle<F>,
    spec: &AugmentSpec,
    s_grid: &[f64],
    channel: &ChannelSpec,
    opts: SweepOptions,
) -> Result<Vec<RateAccuracyPoint>> {
    let test = dataset.test_view()?;
    let rng = SeededRng::new(spec.seed).derive(streams::EVAL);
    let distorted = distort_eval_set(test.x, spec, &rng)?;
    sweep_against_test(models, dataset, Some(&distorted), s_grid, channel, opts)
}

/// Piecewise-linear accuracy at a target entropy, clamped to the curve ends.
/// Points must belong to one model; they are sorted by entropy internally.
pub fn accuracy_at_entropy(points: &[RateAccuracyPoint], target: f64) -> Option<f64> {
    if points.is_empty() {
        return None;
    }
    let mut curve: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.total_entropy_bits, p.accuracy))
        .collect();
    curve.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if target <= curve[0].0 {
        return Some(curve[0].1);
    }
    if target >= curve[curve.len() - 1].0 {
        return Some(curve[curve.len() - 1].1);
    }
    for w in curve.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if (x0..=x1).contains(&target) {
            if x1 == x0 {
                return Some(y0.max(y1));
            }
            let t = (target - x0) / (x1 - x0);
            return Some(y0 + t * (y1 - y0));
        }
    }
    None
}

/// One row of the latent-std table.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStd {
    /// Position after sorting by std, descending (0 = largest).
    pub rank: usize,
    /// Original bottleneck entry index.
    pub entry: usize,
    pub std: f64,
}

/// Per-entry standard deviation of the bottleneck latents on the test set,
/// sorted descending. Supports the latent-variation analysis plots.
pub fn latent_std_report<F: Scalar>(
    params: &ModelParams<F>,
    dataset: &DatasetHandle<F>,
) -> Result<Vec<LatentStd>> {
    let test = dataset.test_view()?;
    let y = encode(params, test.x)?;
    let n = y.cols();
    if n < 2 {
        return Err(Error::DegenerateInput("need at least 2 test samples".into()));
    }
    let mut stds: Vec<(usize, f64)> = (0..y.rows())
        .map(|r| {
            let vals: Vec<f64> = y.row(r).iter().map(|&v| crate::Scalar::to_f64(v)).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (r, var.sqrt())
        })
        .collect();
    stds.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(stds
        .into_iter()
        .enumerate()
        .map(|(rank, (entry, std))| LatentStd { rank, entry, std })
        .collect())
}
