//! Edge -> bitstream -> channel -> server inference path.

use super::{ChannelSpec, DropPolicy};
use crate::codec::{decode_stream, dequantize, encode_stream, quantize, QuantizationProfile};
use crate::error::Result;
use crate::nn::{classify, encode, ModelParams};
use crate::numerics::Matrix;
use crate::trainer::argmax_columns;
use crate::Scalar;

/// Per-sample results of a split-inference run.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    /// Predicted class per sample; `None` for samples the channel dropped.
    pub predictions: Vec<Option<usize>>,
    /// Whole-stream size (header + payload) per sample, bits.
    pub bits_per_sample: Vec<u64>,
    /// Dropped samples (over budget under the reject policy).
    pub drops: usize,
    /// Samples whose stream exceeded the budget, regardless of policy.
    pub over_budget: usize,
}

impl SplitOutcome {
    pub fn mean_bits(&self) -> f64 {
        if self.bits_per_sample.is_empty() {
            return 0.0;
        }
        self.bits_per_sample.iter().sum::<u64>() as f64 / self.bits_per_sample.len() as f64
    }

    /// Accuracy against ground truth; dropped samples count as wrong.
    pub fn accuracy(&self, labels: &[usize]) -> f64 {
        assert_eq!(labels.len(), self.predictions.len());
        let correct = self
            .predictions
            .iter()
            .zip(labels)
            .filter(|(p, l)| **p == Some(**l))
            .count();
        correct as f64 / labels.len().max(1) as f64
    }
}

/// Runs every sample through encode -> quantize -> bitstream -> (budget
/// check) -> decode -> dequantize -> classify. The bitstream is bit-faithful,
/// so delivered predictions equal the in-process pipeline's; the only effect
/// of the channel is dropping over-budget samples under the reject policy.
pub fn split_inference<F: Scalar>(
    params: &ModelParams<F>,
    prof: &QuantizationProfile,
    channel: &ChannelSpec,
    x: &Matrix<F>,
) -> Result<SplitOutcome> {
    let y = encode(params, x)?;
    let n = x.cols();
    let mut predictions = vec![None; n];
    let mut bits_per_sample = Vec::with_capacity(n);
    let mut drops = 0usize;
    let mut over_budget = 0usize;
    let mut delivered_cols: Vec<usize> = Vec::with_capacity(n);
    let mut delivered_latents: Vec<Vec<F>> = Vec::with_capacity(n);

    for j in 0..n {
        let v = quantize(&y.col(j), prof)?;
        let stream = encode_stream(&v, prof)?;
        let bits = stream.len_bits();
        bits_per_sample.push(bits);
        let exceeded = channel
            .bit_budget_per_sample
            .map(|budget| bits > budget)
            .unwrap_or(false);
        if exceeded {
            over_budget += 1;
            if channel.drop_policy == DropPolicy::Reject {
                drops += 1;
                continue;
            }
        }
        // Server side: reconstruct strictly from the received bytes.
        let received = decode_stream(&stream, prof)?;
        let y_hat: Vec<F> = dequantize(&received, prof)?;
        delivered_cols.push(j);
        delivered_latents.push(y_hat);
    }

    if !delivered_cols.is_empty() {
        let mut y_hat = Matrix::zeros(params.d_y, delivered_cols.len());
        for (c, lat) in delivered_latents.iter().enumerate() {
            y_hat.set_col(c, lat);
        }
        let logits = classify(params, &y_hat)?;
        let preds = argmax_columns(&logits);
        for (c, &j) in delivered_cols.iter().enumerate() {
            predictions[j] = Some(preds[c]);
        }
    }

    Ok(SplitOutcome { predictions, bits_per_sample, drops, over_budget })
}

/// Reference pipeline without the bitstream: quantize, dequantize, classify
/// in process. Used to verify channel transparency.
pub fn local_pipeline_predictions<F: Scalar>(
    params: &ModelParams<F>,
    prof: &QuantizationProfile,
    x: &Matrix<F>,
) -> Result<Vec<usize>> {
    let y = encode(params, x)?;
    let mut y_hat = Matrix::zeros(params.d_y, x.cols());
    for j in 0..x.cols() {
        let v = quantize(&y.col(j), prof)?;
        let back: Vec<F> = dequantize(&v, prof)?;
        y_hat.set_col(j, &back);
    }
    let logits = classify(params, &y_hat)?;
    Ok(argmax_columns(&logits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::make_gaussian_mixture;
    use crate::codec::fit_profile;
    use crate::trainer::TrainConfig;

    fn setup() -> (ModelParams<f64>, QuantizationProfile, Matrix<f64>, Vec<usize>) {
        let ds = make_gaussian_mixture::<f64>(3, 8, 40, 3.0, 5).unwrap();
        let cfg = TrainConfig {
            enc_hidden: vec![16],
            dec_hidden: vec![8],
            ..TrainConfig::default_vector(5)
        };
        let mut params = cfg.build_model(8, 3, 4);
        let mut report = Default::default();
        crate::trainer::train_ce(&mut params, ds.train_view(), None, 5, 0.05, &cfg, "ce", &mut report)
            .unwrap();
        let y_train = encode(&params, &ds.train.x).unwrap();
        let prof = fit_profile(&y_train, 0.5, None).unwrap();
        let test = ds.test.unwrap();
        (params, prof, test.x, test.labels)
    }

    #[test]
    fn unlimited_budget_never_drops() {
        let (params, prof, x, _) = setup();
        let out = split_inference(&params, &prof, &ChannelSpec::unlimited(), &x).unwrap();
        assert_eq!(out.drops, 0);
        assert_eq!(out.over_budget, 0);
        assert!(out.predictions.iter().all(|p| p.is_some()));
    }

    #[test]
    fn budget_below_header_drops_everything() {
        let (params, prof, x, _) = setup();
        let channel = ChannelSpec::with_budget(8); // 1 byte: below any header
        let out = split_inference(&params, &prof, &channel, &x).unwrap();
        assert_eq!(out.drops, x.cols());
        assert!(out.predictions.iter().all(|p| p.is_none()));
    }

    #[test]
    fn report_only_policy_delivers_over_budget_samples() {
        let (params, prof, x, _) = setup();
        let channel = ChannelSpec {
            bit_budget_per_sample: Some(8),
            drop_policy: DropPolicy::ReportOnly,
        };
        let out = split_inference(&params, &prof, &channel, &x).unwrap();
        assert_eq!(out.drops, 0);
        assert_eq!(out.over_budget, x.cols());
        assert!(out.predictions.iter().all(|p| p.is_some()));
    }

    #[test]
    fn channel_is_bit_transparent() {
        let (params, prof, x, _) = setup();
        let out = split_inference(&params, &prof, &ChannelSpec::unlimited(), &x).unwrap();
        let local = local_pipeline_predictions(&params, &prof, &x).unwrap();
        let through: Vec<usize> = out.predictions.iter().map(|p| p.unwrap()).collect();
        assert_eq!(through, local);
    }

    #[test]
    fn accuracy_counts_drops_as_wrong() {
        let (params, prof, x, labels) = setup();
        let out = split_inference(&params, &prof, &ChannelSpec::with_budget(8), &x).unwrap();
        assert_eq!(out.accuracy(&labels), 0.0);
    }
}
