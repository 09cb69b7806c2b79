//! Standard model recipes the bench compares.
//!
//! The cross-entropy-trained baseline comes first; the other two start from
//! a clone of it: one alternating encoder/decoder round for the middle
//! model, the full three-step schedule for the last.

use super::{DatasetHandle, ModelTag};
use crate::error::Result;
use crate::nn::ModelParams;
use crate::trainer::{duphil_round, three_step_train, train_ce, EncoderLoss, TrainConfig, TrainReport};
use crate::Scalar;

/// The three models a sweep compares, each with its training report.
pub struct BenchModels<F = f64> {
    pub ce_t: ModelParams<F>,
    pub duphil: ModelParams<F>,
    pub ldr_ft: ModelParams<F>,
    pub ce_t_report: TrainReport,
    pub duphil_report: TrainReport,
    pub ldr_ft_report: TrainReport,
}

impl<F: Scalar> BenchModels<F> {
    pub fn tagged(&self) -> Vec<(ModelTag, &ModelParams<F>)> {
        vec![
            (ModelTag::CeT, &self.ce_t),
            (ModelTag::DuPhil, &self.duphil),
            (ModelTag::LdrFt, &self.ldr_ft),
        ]
    }
}

/// Trains the three-model comparison set on one dataset at bottleneck width
/// `d_y`. `epochs_base` is the budget of the cross-entropy baseline that the
/// other two models start from.
pub fn train_bench_models<F: Scalar>(
    dataset: &DatasetHandle<F>,
    d_y: usize,
    epochs_base: usize,
    cfg: &TrainConfig,
) -> Result<BenchModels<F>> {
    cfg.validate()?;
    let train = dataset.train_view();
    let test = dataset.test_view()?;

    let mut ce_t: ModelParams<F> = cfg.build_model(dataset.d_in, dataset.k, d_y);
    let mut ce_t_report = TrainReport { config_echo: cfg.echo(), ..Default::default() };
    train_ce(&mut ce_t, train, Some(test), epochs_base, cfg.lr_12, cfg, "ce", &mut ce_t_report)?;
    ce_t_report.final_train_accuracy = crate::trainer::evaluate_accuracy(&ce_t, train)?;
    ce_t_report.final_test_accuracy = crate::trainer::evaluate_accuracy(&ce_t, test)?;
    ce_t_report.model_checksum = crate::nn::model_checksum(&ce_t);

    let mut duphil = ce_t.clone();
    let mut duphil_report = TrainReport { config_echo: cfg.echo(), ..Default::default() };
    duphil_round(&mut duphil, train, Some(test), EncoderLoss::Ldr, cfg, &mut duphil_report)?;
    duphil_report.final_train_accuracy = crate::trainer::evaluate_accuracy(&duphil, train)?;
    duphil_report.final_test_accuracy = crate::trainer::evaluate_accuracy(&duphil, test)?;
    duphil_report.model_checksum = crate::nn::model_checksum(&duphil);

    let mut ldr_ft = ce_t.clone();
    let ldr_ft_report = three_step_train(&mut ldr_ft, train, test, cfg)?;

    Ok(BenchModels { ce_t, duphil, ldr_ft, ce_t_report, duphil_report, ldr_ft_report })
}
