//! Hierarchical training: alternating encoder/decoder rounds, the three-step
//! schedule, latent-dimension screening and truncation fine-tuning.
//!
//! One round alternates two phases. Phase A freezes the decoder and trains
//! encoder plus side branch against the negated rate reduction, under either
//! the ground-truth partition or the self-labeled partition of augmented
//! batches. Phase B freezes the encoder and trains the decoder under
//! cross-entropy. The three-step schedule runs the supervised round, the
//! self-supervised round, then end-to-end cross-entropy at a smaller learning
//! rate with the side branch kept frozen.

use crate::augment::{expand_batch, AugmentSpec};
use crate::error::{Error, Result};
use crate::ldr::{LdrConfig, Partition};
use crate::nn::{
    backward, classify, encode, forward, model_checksum, sgd_step, streams, BackwardAux, LossTap,
    ModelParams, OptimizerState, TensorGroup,
};
use crate::numerics::{Matrix, SeededRng};
use crate::Scalar;
use std::time::Instant;

/// Borrowed view of a labeled dataset split; columns are samples.
#[derive(Clone, Copy)]
pub struct DataView<'a, F> {
    pub x: &'a Matrix<F>,
    pub labels: &'a [usize],
}

impl<'a, F: Scalar> DataView<'a, F> {
    pub fn new(x: &'a Matrix<F>, labels: &'a [usize]) -> Self {
        assert_eq!(x.cols(), labels.len());
        DataView { x, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Encoder-phase loss selector for one alternating round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderLoss {
    /// Negated rate reduction under the ground-truth partition.
    Ldr,
    /// Negated rate reduction under the self-labeled augmented partition.
    LdrSsl,
}

/// Fine-tuning flavor after truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinetuneMode {
    /// Full three-step schedule at reduced epochs.
    LdrFt,
    /// Cross-entropy only, matched total epoch budget.
    CeFt,
}

/// Training hyperparameters for the full schedule.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub e1_enc: usize,
    pub e1_dec: usize,
    pub e2_enc: usize,
    pub e2_dec: usize,
    pub e3: usize,
    pub lr_12: f64,
    pub lr_3: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub ldr: LdrConfig,
    pub augment: AugmentSpec,
    pub seed: u64,
    pub screening_dims: Vec<usize>,
    pub screening_epochs: usize,
    pub enc_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
    /// Side-branch output width; defaults to the bottleneck width.
    pub side_dim: Option<usize>,
    /// Whether the side branch trains during encoder phases. With a frozen
    /// identity head the rate gradient lands entirely on the encoder, which
    /// is what shapes the transmitted latent at small scale.
    pub train_side: bool,
}

impl TrainConfig {
    /// Defaults for synthetic vector benchmarks.
    pub fn default_vector(seed: u64) -> Self {
        TrainConfig {
            e1_enc: 10,
            e1_dec: 10,
            e2_enc: 10,
            e2_dec: 10,
            e3: 20,
            lr_12: 0.05,
            lr_3: 0.005,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 64,
            ldr: LdrConfig::default(),
            augment: AugmentSpec::vector_default(seed),
            seed,
            screening_dims: vec![4, 8, 32],
            screening_epochs: 8,
            enc_hidden: vec![256],
            dec_hidden: vec![128],
            side_dim: None,
            train_side: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr_3 >= self.lr_12 {
            return Err(Error::ConfigError(format!(
                "lr_3 ({}) must be smaller than lr_12 ({})",
                self.lr_3, self.lr_12
            )));
        }
        if self.lr_3 <= 0.0 || self.lr_12 <= 0.0 {
            return Err(Error::ConfigError("learning rates must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::ConfigError("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::ConfigError("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Halved per-phase epochs for post-truncation fine-tuning; nonzero
    /// phases keep at least one epoch.
    pub fn reduced_for_finetune(&self) -> TrainConfig {
        let half = |e: usize| if e == 0 { 0 } else { (e + 1) / 2 };
        TrainConfig {
            e1_enc: half(self.e1_enc),
            e1_dec: half(self.e1_dec),
            e2_enc: half(self.e2_enc),
            e2_dec: half(self.e2_dec),
            e3: half(self.e3),
            ..self.clone()
        }
    }

    /// Flat key=value echo of every hyperparameter, fixed order.
    pub fn echo(&self) -> String {
        let kinds: Vec<String> = self.augment.kinds.iter().map(|k| k.name()).collect();
        let scale_dim = match self.ldr.scale_dim {
            crate::ldr::ScaleDimMode::LatentDim => "latent".to_string(),
            crate::ldr::ScaleDimMode::InputDim(d) => format!("input:{d}"),
        };
        let mut s = String::new();
        s.push_str(&format!("e1_enc={}\n", self.e1_enc));
        s.push_str(&format!("e1_dec={}\n", self.e1_dec));
        s.push_str(&format!("e2_enc={}\n", self.e2_enc));
        s.push_str(&format!("e2_dec={}\n", self.e2_dec));
        s.push_str(&format!("e3={}\n", self.e3));
        s.push_str(&format!("lr_12={}\n", self.lr_12));
        s.push_str(&format!("lr_3={}\n", self.lr_3));
        s.push_str(&format!("momentum={}\n", self.momentum));
        s.push_str(&format!("weight_decay={}\n", self.weight_decay));
        s.push_str(&format!("batch_size={}\n", self.batch_size));
        s.push_str(&format!("eps_sq={}\n", self.ldr.eps_sq));
        s.push_str(&format!("scale_dim={scale_dim}\n"));
        s.push_str(&format!("normalize_columns={}\n", self.ldr.normalize_columns));
        s.push_str(&format!("augment_kinds={}\n", kinds.join(",")));
        s.push_str(&format!("n_augment={}\n", self.augment.n));
        s.push_str(&format!("augment_seed={}\n", self.augment.seed));
        s.push_str(&format!("seed={}\n", self.seed));
        s.push_str(&format!(
            "screening_dims={}\n",
            self.screening_dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
        ));
        s.push_str(&format!("screening_epochs={}\n", self.screening_epochs));
        s.push_str(&format!(
            "enc_hidden={}\n",
            self.enc_hidden.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
        ));
        s.push_str(&format!(
            "dec_hidden={}\n",
            self.dec_hidden.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
        ));
        s.push_str(&format!(
            "side_dim={}\n",
            self.side_dim.map(|d| d.to_string()).unwrap_or_else(|| "auto".into())
        ));
        s.push_str(&format!("train_side={}\n", self.train_side));
        s
    }

    /// Model with this config's architecture for a given data shape.
    pub fn build_model<F: Scalar>(&self, d_in: usize, k: usize, d_y: usize) -> ModelParams<F> {
        ModelParams::new(
            d_in,
            &self.enc_hidden,
            d_y,
            &self.dec_hidden,
            k,
            self.side_dim.unwrap_or(d_y),
            self.ldr,
            self.seed,
        )
    }
}

/// One loss-curve sample: a finished epoch of one phase.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub phase: String,
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Loss curves, final accuracies and run provenance.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    pub final_train_accuracy: f64,
    pub final_test_accuracy: f64,
    pub wall_clock_secs: f64,
    pub config_echo: String,
    pub model_checksum: String,
}

impl TrainReport {
    /// `epoch,phase,loss,accuracy` rows. Deterministic bytes for a
    /// deterministic run; wall-clock stays out of the CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,phase,loss,accuracy\n");
        for r in &self.records {
            s.push_str(&format!("{},{},{:.6},{:.6}\n", r.epoch, r.phase, r.loss, r.accuracy));
        }
        s
    }
}

/// Argmax class prediction per column.
pub fn predict<F: Scalar>(params: &ModelParams<F>, x: &Matrix<F>) -> Result<Vec<usize>> {
    let y = encode(params, x)?;
    let logits = classify(params, &y)?;
    Ok(argmax_columns(&logits))
}

pub fn argmax_columns<F: Scalar>(logits: &Matrix<F>) -> Vec<usize> {
    (0..logits.cols())
        .map(|c| {
            let mut best = 0;
            let mut best_v = logits.get(0, c);
            for r in 1..logits.rows() {
                let v = logits.get(r, c);
                if v > best_v {
                    best_v = v;
                    best = r;
                }
            }
            best
        })
        .collect()
}

/// Fraction of correctly classified columns.
pub fn evaluate_accuracy<F: Scalar>(params: &ModelParams<F>, data: DataView<'_, F>) -> Result<f64> {
    let preds = predict(params, data.x)?;
    let correct = preds.iter().zip(data.labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / data.len() as f64)
}

enum PhaseKind {
    EncoderLdr { ssl: bool },
    Ce,
}

/// Runs one training phase. Freeze masks must already be set by the caller;
/// the RNG stream id makes identical phases reproduce identical batch orders
/// regardless of what ran before.
#[allow(clippy::too_many_arguments)]
fn run_phase<F: Scalar>(
    params: &mut ModelParams<F>,
    train: DataView<'_, F>,
    eval: Option<DataView<'_, F>>,
    kind: PhaseKind,
    phase_name: &str,
    epochs: usize,
    lr: f64,
    cfg: &TrainConfig,
    stream: u64,
    report: &mut TrainReport,
) -> Result<()> {
    if epochs == 0 {
        return Ok(());
    }
    let mut opt: OptimizerState<F> = OptimizerState::new(lr, cfg.momentum, cfg.weight_decay);
    let mut rng = SeededRng::new(cfg.seed).derive(stream);
    let aug_base = SeededRng::new(cfg.augment.seed).derive(streams::AUGMENT);
    let n = train.len();
    let mut batch_counter: u64 = 0;

    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;

        for chunk in order.chunks(cfg.batch_size) {
            let xb = train.x.gather_cols(chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            batch_counter += 1;

            let loss = match kind {
                PhaseKind::Ce => {
                    let part = Partition::new(yb, params.k)?;
                    let pass = forward(params, &xb, LossTap::CeAtDecoder)?;
                    let (loss, grads) = backward(params, &pass, BackwardAux::Ce { labels: &part })?;
                    sgd_step(params, &grads, &mut opt);
                    loss.to_f64()
                }
                PhaseKind::EncoderLdr { ssl: false } => {
                    let part = Partition::new(yb, params.k)?;
                    let pass = forward(params, &xb, LossTap::LdrAtSide)?;
                    let (loss, grads) =
                        backward(params, &pass, BackwardAux::Ldr { part: &part, cfg: &cfg.ldr })?;
                    sgd_step(params, &grads, &mut opt);
                    loss.to_f64()
                }
                PhaseKind::EncoderLdr { ssl: true } => {
                    // Expand then sub-sample back to batch_size columns to
                    // bound memory. The subsample keeps whole self-classes
                    // (augmented copies must co-occur for the class-rate term
                    // to see them). Ground-truth labels are never consumed.
                    let aug_rng = aug_base.derive(batch_counter);
                    let expanded = expand_batch(&xb, &cfg.augment, &aug_rng)?;
                    let (xs, self_labels) = if expanded.xa.cols() > cfg.batch_size {
                        let mut sub_rng = aug_rng.derive(u64::MAX);
                        let n_aug = cfg.augment.n;
                        let keep_classes =
                            sub_rng.sample_indices(chunk.len(), cfg.batch_size.div_ceil(n_aug));
                        let mut keep: Vec<usize> = keep_classes
                            .iter()
                            .flat_map(|&c| c * n_aug..(c + 1) * n_aug)
                            .collect();
                        keep.truncate(cfg.batch_size);
                        let labels: Vec<usize> =
                            keep.iter().map(|&i| expanded.part.labels()[i]).collect();
                        (expanded.xa.gather_cols(&keep), labels)
                    } else {
                        (expanded.xa.clone(), expanded.part.labels().to_vec())
                    };
                    let part = Partition::new(self_labels, expanded.part.k())?;
                    let pass = forward(params, &xs, LossTap::LdrAtSide)?;
                    let (loss, grads) =
                        backward(params, &pass, BackwardAux::Ldr { part: &part, cfg: &cfg.ldr })?;
                    sgd_step(params, &grads, &mut opt);
                    loss.to_f64()
                }
            };
            loss_sum += loss;
            batches += 1;
        }

        let accuracy = match eval {
            Some(e) => evaluate_accuracy(params, e)?,
            None => evaluate_accuracy(params, train)?,
        };
        report.records.push(EpochRecord {
            phase: phase_name.to_string(),
            epoch: epoch + 1,
            loss: loss_sum / batches.max(1) as f64,
            accuracy,
        });
    }
    Ok(())
}

/// One alternating round: encoder phase under the selected rate loss with the
/// decoder frozen, then decoder phase under cross-entropy with the encoder
/// frozen. Zero epochs on both phases is a no-op.
pub fn duphil_round<F: Scalar>(
    params: &mut ModelParams<F>,
    train: DataView<'_, F>,
    eval: Option<DataView<'_, F>>,
    enc_loss: EncoderLoss,
    cfg: &TrainConfig,
    report: &mut TrainReport,
) -> Result<()> {
    cfg.validate()?;
    let (e_enc, e_dec, enc_stream, dec_stream, enc_name, dec_name) = match enc_loss {
        EncoderLoss::Ldr => (
            cfg.e1_enc,
            cfg.e1_dec,
            streams::STEP1_ENC,
            streams::STEP1_DEC,
            "step1-enc",
            "step1-dec",
        ),
        EncoderLoss::LdrSsl => (
            cfg.e2_enc,
            cfg.e2_dec,
            streams::STEP2_ENC,
            streams::STEP2_DEC,
            "step2-enc",
            "step2-dec",
        ),
    };

    if e_enc > 0 {
        params.unfreeze_all();
        params.freeze_group(TensorGroup::Decoder, true);
        if !cfg.train_side {
            params.freeze_group(TensorGroup::Side, true);
        }
        run_phase(
            params,
            train,
            eval,
            PhaseKind::EncoderLdr { ssl: enc_loss == EncoderLoss::LdrSsl },
            enc_name,
            e_enc,
            cfg.lr_12,
            cfg,
            enc_stream,
            report,
        )?;
    }
    if e_dec > 0 {
        params.unfreeze_all();
        params.freeze_group(TensorGroup::Encoder, true);
        params.freeze_group(TensorGroup::Side, true);
        run_phase(params, train, eval, PhaseKind::Ce, dec_name, e_dec, cfg.lr_12, cfg, dec_stream, report)?;
    }
    Ok(())
}

/// Plain end-to-end cross-entropy training with the side branch frozen.
/// This is both the baseline trainer and the third step of the schedule.
pub fn train_ce<F: Scalar>(
    params: &mut ModelParams<F>,
    train: DataView<'_, F>,
    eval: Option<DataView<'_, F>>,
    epochs: usize,
    lr: f64,
    cfg: &TrainConfig,
    phase_name: &str,
    report: &mut TrainReport,
) -> Result<()> {
    if epochs == 0 {
        return Ok(());
    }
    params.unfreeze_all();
    params.freeze_group(TensorGroup::Side, true);
    run_phase(params, train, eval, PhaseKind::Ce, phase_name, epochs, lr, cfg, streams::CE, report)
}

/// The full three-step schedule. Returns the report with loss curves, final
/// accuracies, wall clock, config echo and model checksum.
pub fn three_step_train<F: Scalar>(
    params: &mut ModelParams<F>,
    train: DataView<'_, F>,
    test: DataView<'_, F>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut report = TrainReport { config_echo: cfg.echo(), ..Default::default() };

    duphil_round(params, train, Some(test), EncoderLoss::Ldr, cfg, &mut report)?;
    duphil_round(params, train, Some(test), EncoderLoss::LdrSsl, cfg, &mut report)?;
    train_ce(params, train, Some(test), cfg.e3, cfg.lr_3, cfg, "step3", &mut report)?;

    report.final_train_accuracy = evaluate_accuracy(params, train)?;
    report.final_test_accuracy = evaluate_accuracy(params, test)?;
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    report.model_checksum = model_checksum(params);
    Ok(report)
}

/// Screens candidate bottleneck widths with a short cross-entropy-only run
/// per candidate (same seed each time), returning the winner and the
/// accuracy table. Ties break toward the smaller width.
pub fn screen_latent_dims<F: Scalar>(
    train: DataView<'_, F>,
    test: DataView<'_, F>,
    d_in: usize,
    k: usize,
    cfg: &TrainConfig,
) -> Result<(usize, Vec<(usize, f64)>)> {
    if cfg.screening_dims.is_empty() {
        return Err(Error::ConfigError("screening_dims is empty".into()));
    }
    cfg.validate()?;
    let mut dims = cfg.screening_dims.clone();
    dims.sort_unstable();
    let mut table = Vec::with_capacity(dims.len());
    let mut best: Option<(usize, f64)> = None;
    for &d_y in &dims {
        let mut params: ModelParams<F> = cfg.build_model(d_in, k, d_y);
        let mut report = TrainReport::default();
        train_ce(&mut params, train, Some(test), cfg.screening_epochs, cfg.lr_12, cfg, "screen", &mut report)?;
        let acc = evaluate_accuracy(&params, test)?;
        table.push((d_y, acc));
        // Strictly-greater keeps the smallest width on ties.
        if best.map(|(_, a)| acc > a).unwrap_or(true) {
            best = Some((d_y, acc));
        }
    }
    Ok((best.unwrap().0, table))
}

/// Structurally removes masked bottleneck units: encoder output rows, and the
/// matching input columns of decoder and side branch. The model's latent
/// width becomes the kept count.
pub fn truncate_bottleneck<F: Scalar>(params: &ModelParams<F>, keep: &[bool]) -> Result<ModelParams<F>> {
    if keep.len() != params.d_y {
        return Err(Error::ShapeMismatch {
            op: "truncate_bottleneck",
            details: format!("mask covers {} units, bottleneck has {}", keep.len(), params.d_y),
        });
    }
    let kept: Vec<usize> = keep
        .iter()
        .enumerate()
        .filter(|(_, &k)| k)
        .map(|(i, _)| i)
        .collect();
    if kept.is_empty() {
        return Err(Error::MaskEmpty);
    }
    let mut out = params.clone();
    let last = out.encoder.len() - 1;
    let enc_last = &mut out.encoder[last];
    enc_last.w = enc_last.w.gather_rows(&kept);
    enc_last.b = enc_last.b.gather_rows(&kept);
    enc_last.spec.out_dim = kept.len();

    if let Some(first) = out.decoder.first_mut() {
        first.w = first.w.gather_cols(&kept);
        first.spec.in_dim = kept.len();
    }
    out.side.w = out.side.w.gather_cols(&kept);
    out.d_y = kept.len();
    out.unfreeze_all();
    Ok(out)
}

/// Convenience mask keeping the first `count` bottleneck entries; the
/// "drop the trailing half" mode is `keep_first(d_y, d_y / 2)`.
pub fn keep_first_mask(d_y: usize, count: usize) -> Vec<bool> {
    (0..d_y).map(|i| i < count).collect()
}

/// Truncates the bottleneck then fine-tunes. `LdrFt` reruns the three-step
/// schedule at halved epochs; `CeFt` spends the same total epoch budget on
/// cross-entropy alone at the step-3 learning rate.
pub fn truncate_and_finetune<F: Scalar>(
    params: &ModelParams<F>,
    keep: &[bool],
    mode: FinetuneMode,
    train: DataView<'_, F>,
    test: DataView<'_, F>,
    cfg: &TrainConfig,
) -> Result<(ModelParams<F>, TrainReport)> {
    let mut truncated = truncate_bottleneck(params, keep)?;
    let reduced = cfg.reduced_for_finetune();
    match mode {
        FinetuneMode::LdrFt => {
            let report = three_step_train(&mut truncated, train, test, &reduced)?;
            Ok((truncated, report))
        }
        FinetuneMode::CeFt => {
            let budget = reduced.e1_enc + reduced.e1_dec + reduced.e2_enc + reduced.e2_dec + reduced.e3;
            let start = Instant::now();
            let mut report = TrainReport { config_echo: reduced.echo(), ..Default::default() };
            train_ce(&mut truncated, train, Some(test), budget, reduced.lr_3, &reduced, "ce-ft", &mut report)?;
            report.final_train_accuracy = evaluate_accuracy(&truncated, train)?;
            report.final_test_accuracy = evaluate_accuracy(&truncated, test)?;
            report.wall_clock_secs = start.elapsed().as_secs_f64();
            report.model_checksum = model_checksum(&truncated);
            Ok((truncated, report))
        }
    }
}
