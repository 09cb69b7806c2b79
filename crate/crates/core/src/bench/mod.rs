//! Split-inference bench: datasets, channel simulation, sweeps, plots, CSV.

mod channel;
mod config;
mod csvio;
mod dataset;
mod plot;
mod recipe;
mod sweep;

pub use channel::{local_pipeline_predictions, split_inference, SplitOutcome};
pub use config::{BenchConfig, DatasetKind, TrainMethod};
pub use csvio::{parse_std_csv, parse_sweep_csv, std_csv, sweep_csv};
pub use dataset::{load_cifar_binary, load_idx, make_gaussian_mixture, make_low_rank_mixture, make_nuisance_mixture};
pub use plot::{emit_plot, plot_svg, std_profile_svg};
pub use recipe::{train_bench_models, BenchModels};
pub use sweep::{
    accuracy_at_entropy, eval_distortion_robustness, latent_std_report, sweep_rate_accuracy,
    LatentStd, SweepOptions,
};

use crate::augment::ImageGeometry;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::trainer::DataView;
use crate::Scalar;

/// Simulated transport constraint between encoder and classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelSpec {
    /// Whole-stream budget per sample, bits; `None` is unlimited. A useful
    /// finite budget is at least the stream header size.
    pub bit_budget_per_sample: Option<u64>,
    pub drop_policy: DropPolicy,
}

impl ChannelSpec {
    pub fn unlimited() -> Self {
        ChannelSpec { bit_budget_per_sample: None, drop_policy: DropPolicy::Reject }
    }

    pub fn with_budget(bits: u64) -> Self {
        ChannelSpec { bit_budget_per_sample: Some(bits), drop_policy: DropPolicy::Reject }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropPolicy {
    /// Over-budget samples are dropped (no prediction).
    Reject,
    /// Over-budget samples are delivered but counted.
    ReportOnly,
}

impl DropPolicy {
    pub fn name(self) -> &'static str {
        match self {
            DropPolicy::Reject => "reject",
            DropPolicy::ReportOnly => "report_only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "reject" => Ok(DropPolicy::Reject),
            "report_only" => Ok(DropPolicy::ReportOnly),
            other => Err(Error::ConfigError(format!("unknown drop policy {other:?}"))),
        }
    }
}

/// Which training recipe produced a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ModelTag {
    CeT,
    DuPhil,
    LdrFt,
}

impl ModelTag {
    pub fn name(self) -> &'static str {
        match self {
            ModelTag::CeT => "CE-T",
            ModelTag::DuPhil => "DuPHiL",
            ModelTag::LdrFt => "LDR-FT",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "CE-T" => Ok(ModelTag::CeT),
            "DuPHiL" => Ok(ModelTag::DuPhil),
            "LDR-FT" => Ok(ModelTag::LdrFt),
            other => Err(Error::FormatError(format!("unknown model tag {other:?}"))),
        }
    }
}

impl std::fmt::Display for ModelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One point of a rate-accuracy sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RateAccuracyPoint {
    pub model: ModelTag,
    pub dataset: String,
    pub d_y: usize,
    pub s: f64,
    pub total_entropy_bits: f64,
    pub mean_bits_per_sample: f64,
    pub accuracy: f64,
    pub drops: usize,
}

/// A labeled data split; columns are samples.
#[derive(Debug, Clone)]
pub struct LabeledSplit<F = f64> {
    pub x: Matrix<F>,
    pub labels: Vec<usize>,
}

impl<F: Scalar> LabeledSplit<F> {
    pub fn view(&self) -> DataView<'_, F> {
        DataView::new(&self.x, &self.labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A dataset with provenance. Loader-built handles may carry a single split;
/// synthetic handles always carry disjoint train/test splits.
#[derive(Debug, Clone)]
pub struct DatasetHandle<F = f64> {
    pub name: String,
    pub d_in: usize,
    pub k: usize,
    pub train: LabeledSplit<F>,
    pub test: Option<LabeledSplit<F>>,
    pub provenance: String,
    pub geometry: Option<ImageGeometry>,
}

impl<F: Scalar> DatasetHandle<F> {
    pub fn train_view(&self) -> DataView<'_, F> {
        self.train.view()
    }

    pub fn test_view(&self) -> Result<DataView<'_, F>> {
        self.test
            .as_ref()
            .map(|t| t.view())
            .ok_or_else(|| Error::ConfigError(format!("dataset {} has no test split", self.name)))
    }

    /// Adopts another handle's train split as this handle's test split.
    pub fn with_test_from(mut self, other: DatasetHandle<F>) -> Result<DatasetHandle<F>> {
        if other.d_in != self.d_in {
            return Err(Error::ShapeMismatch {
                op: "with_test_from",
                details: format!("d_in {} vs {}", self.d_in, other.d_in),
            });
        }
        self.k = self.k.max(other.k);
        self.test = Some(other.train);
        Ok(self)
    }
}
