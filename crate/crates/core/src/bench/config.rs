//! Flat key=value experiment configuration with CLI override support.

use super::{DatasetHandle, DropPolicy};
use crate::augment::{AugmentSpec, TransformKind};
use crate::codec::StepRule;
use crate::error::{Error, Result};
use crate::ldr::{LdrConfig, ScaleDimMode};
use crate::trainer::TrainConfig;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Gauss,
    GaussNuis,
    LowRank,
    Idx,
    Cifar,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Gauss => "gauss",
            DatasetKind::GaussNuis => "gaussnuis",
            DatasetKind::LowRank => "lowrank",
            DatasetKind::Idx => "idx",
            DatasetKind::Cifar => "cifar",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gauss" => Ok(DatasetKind::Gauss),
            "gaussnuis" => Ok(DatasetKind::GaussNuis),
            "lowrank" => Ok(DatasetKind::LowRank),
            "idx" => Ok(DatasetKind::Idx),
            "cifar" => Ok(DatasetKind::Cifar),
            other => Err(Error::ConfigError(format!("unknown dataset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMethod {
    Ce,
    DuPhil,
    LdrFt,
}

impl TrainMethod {
    pub fn name(self) -> &'static str {
        match self {
            TrainMethod::Ce => "ce",
            TrainMethod::DuPhil => "duphil",
            TrainMethod::LdrFt => "ldr-ft",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(TrainMethod::Ce),
            "duphil" => Ok(TrainMethod::DuPhil),
            "ldr-ft" => Ok(TrainMethod::LdrFt),
            other => Err(Error::ConfigError(format!("unknown method {other:?}"))),
        }
    }
}

/// Everything a bench run needs, with desk-scale defaults. Parsed from a flat
/// `key=value` text file; individual keys can then be overridden by flags.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub dataset: DatasetKind,
    pub k: usize,
    pub d_in: usize,
    pub n_per_class: usize,
    pub separation: f64,
    pub intrinsic_dim: usize,
    pub nuisance_dim: usize,
    pub nuisance_sigma: f64,
    pub idx_train_images: Option<PathBuf>,
    pub idx_train_labels: Option<PathBuf>,
    pub idx_test_images: Option<PathBuf>,
    pub idx_test_labels: Option<PathBuf>,
    pub cifar_train: Option<PathBuf>,
    pub cifar_test: Option<PathBuf>,
    pub take_n_train: usize,
    pub take_n_test: usize,

    pub seed: u64,
    pub d_y: usize,
    pub method: TrainMethod,
    pub epochs_base: usize,
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
    pub enc_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
    pub side_dim: Option<usize>,
    pub eps_sq: f64,
    pub scale_dim_input: bool,
    pub normalize_columns: bool,
    pub augment_kinds: Vec<TransformKind>,
    pub n_augment: usize,
    pub augment_seed: Option<u64>,
    pub screening_dims: Vec<usize>,
    pub screening_epochs: usize,
    pub train_side: bool,

    pub s_grid: Vec<f64>,
    pub budget: Option<u64>,
    pub drop_policy: DropPolicy,
    pub h_min: f64,
    pub step_rule: StepRule,
    pub keep_fraction: f64,
    pub out_dir: PathBuf,
    pub model_in: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            dataset: DatasetKind::GaussNuis,
            k: 3,
            d_in: 32,
            n_per_class: 400,
            separation: 3.5,
            intrinsic_dim: 8,
            nuisance_dim: 16,
            nuisance_sigma: 4.0,
            idx_train_images: None,
            idx_train_labels: None,
            idx_test_images: None,
            idx_test_labels: None,
            cifar_train: None,
            cifar_test: None,
            take_n_train: 2000,
            take_n_test: 1000,
            seed: 7,
            d_y: 16,
            method: TrainMethod::LdrFt,
            epochs_base: 30,
            e1_enc: 20,
            e1_dec: 10,
            e2_enc: 10,
            e2_dec: 5,
            e3: 20,
            lr_12: 0.01,
            lr_3: 0.001,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 64,
            enc_hidden: vec![128],
            dec_hidden: vec![64],
            side_dim: None,
            eps_sq: 4.0,
            scale_dim_input: false,
            normalize_columns: true,
            augment_kinds: vec![
                TransformKind::Identity,
                TransformKind::TailJitter { count: 16, sigma: 4.0 },
                TransformKind::GaussianNoise { sigma: 0.3 },
            ],
            n_augment: 16,
            augment_seed: None,
            screening_dims: vec![4, 8, 32],
            screening_epochs: 8,
            train_side: false,
            s_grid: grid_points(0.25, 4.0, 0.25),
            budget: None,
            drop_policy: DropPolicy::Reject,
            h_min: 0.1,
            step_rule: StepRule::EntropyProportional,
            keep_fraction: 0.5,
            out_dir: PathBuf::from("out"),
            model_in: None,
        }
    }
}

/// Inclusive arithmetic grid `a, a+step, ..., <= b` (with an epsilon at the
/// upper end so `a:b:step` covers `b` when it lands on the grid).
pub fn grid_points(a: f64, b: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0 && b >= a);
    let mut out = Vec::new();
    let mut i = 0usize;
    loop {
        let v = a + step * i as f64;
        if v > b + 1e-9 {
            break;
        }
        out.push(v);
        i += 1;
    }
    out
}

/// Parses `a:b:step`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::ConfigError(format!("grid {text:?} is not a:b:step")));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|_| Error::ConfigError(format!("bad grid number {p:?}"))))
        .collect::<Result<_>>()?;
    if nums[2] <= 0.0 || nums[1] < nums[0] || nums[0] <= 0.0 {
        return Err(Error::ConfigError(format!("degenerate grid {text:?}")));
    }
    Ok(grid_points(nums[0], nums[1], nums[2]))
}

fn parse_list<T: std::str::FromStr>(v: &str, what: &str) -> Result<Vec<T>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| Error::ConfigError(format!("bad {what} entry {p:?}")))
        })
        .collect()
}

impl BenchConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = BenchConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::ConfigError(format!("line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Sets one key. Unknown keys are errors so typos surface immediately.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::ConfigError(format!("bad value for {what}: {value:?}"));
        match key {
            "dataset" => self.dataset = DatasetKind::parse(value)?,
            "k" => self.k = value.parse().map_err(|_| bad(key))?,
            "d_in" => self.d_in = value.parse().map_err(|_| bad(key))?,
            "n_per_class" => self.n_per_class = value.parse().map_err(|_| bad(key))?,
            "separation" => self.separation = value.parse().map_err(|_| bad(key))?,
            "intrinsic_dim" => self.intrinsic_dim = value.parse().map_err(|_| bad(key))?,
            "nuisance_dim" => self.nuisance_dim = value.parse().map_err(|_| bad(key))?,
            "nuisance_sigma" => self.nuisance_sigma = value.parse().map_err(|_| bad(key))?,
            "idx_train_images" => self.idx_train_images = Some(PathBuf::from(value)),
            "idx_train_labels" => self.idx_train_labels = Some(PathBuf::from(value)),
            "idx_test_images" => self.idx_test_images = Some(PathBuf::from(value)),
            "idx_test_labels" => self.idx_test_labels = Some(PathBuf::from(value)),
            "cifar_train" => self.cifar_train = Some(PathBuf::from(value)),
            "cifar_test" => self.cifar_test = Some(PathBuf::from(value)),
            "take_n_train" => self.take_n_train = value.parse().map_err(|_| bad(key))?,
            "take_n_test" => self.take_n_test = value.parse().map_err(|_| bad(key))?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key))?,
            "d_y" | "dy" => self.d_y = value.parse().map_err(|_| bad(key))?,
            "method" => self.method = TrainMethod::parse(value)?,
            "epochs_base" => self.epochs_base = value.parse().map_err(|_| bad(key))?,
            "e1_enc" => self.e1_enc = value.parse().map_err(|_| bad(key))?,
            "e1_dec" => self.e1_dec = value.parse().map_err(|_| bad(key))?,
            "e2_enc" => self.e2_enc = value.parse().map_err(|_| bad(key))?,
            "e2_dec" => self.e2_dec = value.parse().map_err(|_| bad(key))?,
            "e3" => self.e3 = value.parse().map_err(|_| bad(key))?,
            "lr_12" => self.lr_12 = value.parse().map_err(|_| bad(key))?,
            "lr_3" => self.lr_3 = value.parse().map_err(|_| bad(key))?,
            "momentum" => self.momentum = value.parse().map_err(|_| bad(key))?,
            "weight_decay" => self.weight_decay = value.parse().map_err(|_| bad(key))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad(key))?,
            "enc_hidden" => self.enc_hidden = parse_list(value, key)?,
            "dec_hidden" => self.dec_hidden = parse_list(value, key)?,
            "side_dim" => {
                self.side_dim = if value == "auto" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad(key))?)
                }
            }
            "eps_sq" => self.eps_sq = value.parse().map_err(|_| bad(key))?,
            "scale_dim" => {
                self.scale_dim_input = match value {
                    "latent" => false,
                    "input" => true,
                    _ => return Err(bad(key)),
                }
            }
            "normalize_columns" => self.normalize_columns = value.parse().map_err(|_| bad(key))?,
            "augment_kinds" => {
                self.augment_kinds = value
                    .split(',')
                    .map(|p| TransformKind::parse(p.trim()))
                    .collect::<Result<_>>()?
            }
            "n_augment" => self.n_augment = value.parse().map_err(|_| bad(key))?,
            "augment_seed" => self.augment_seed = Some(value.parse().map_err(|_| bad(key))?),
            "screening_dims" => self.screening_dims = parse_list(value, key)?,
            "screening_epochs" => self.screening_epochs = value.parse().map_err(|_| bad(key))?,
            "train_side" => self.train_side = value.parse().map_err(|_| bad(key))?,
            "s_grid" => self.s_grid = parse_grid(value)?,
            "budget" => {
                self.budget = if value == "unlimited" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad(key))?)
                }
            }
            "drop_policy" => self.drop_policy = DropPolicy::parse(value)?,
            "h_min" => self.h_min = value.parse().map_err(|_| bad(key))?,
            "step_rule" => self.step_rule = StepRule::parse(value)?,
            "keep_fraction" => self.keep_fraction = value.parse().map_err(|_| bad(key))?,
            "out" | "out_dir" => self.out_dir = PathBuf::from(value),
            "model_in" => self.model_in = Some(PathBuf::from(value)),
            other => return Err(Error::ConfigError(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn ldr_config(&self) -> LdrConfig {
        LdrConfig {
            eps_sq: self.eps_sq,
            scale_dim: if self.scale_dim_input {
                ScaleDimMode::InputDim(self.d_in)
            } else {
                ScaleDimMode::LatentDim
            },
            normalize_columns: self.normalize_columns,
        }
    }

    pub fn augment_spec(&self, geometry: Option<crate::augment::ImageGeometry>) -> AugmentSpec {
        AugmentSpec {
            kinds: self.augment_kinds.clone(),
            n: self.n_augment,
            seed: self.augment_seed.unwrap_or(self.seed),
            geometry,
        }
    }

    pub fn train_config(&self, geometry: Option<crate::augment::ImageGeometry>) -> TrainConfig {
        TrainConfig {
            e1_enc: self.e1_enc,
            e1_dec: self.e1_dec,
            e2_enc: self.e2_enc,
            e2_dec: self.e2_dec,
            e3: self.e3,
            lr_12: self.lr_12,
            lr_3: self.lr_3,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            ldr: self.ldr_config(),
            augment: self.augment_spec(geometry),
            seed: self.seed,
            screening_dims: self.screening_dims.clone(),
            screening_epochs: self.screening_epochs,
            enc_hidden: self.enc_hidden.clone(),
            dec_hidden: self.dec_hidden.clone(),
            side_dim: self.side_dim,
            train_side: self.train_side,
        }
    }

    /// Builds the configured dataset.
    pub fn build_dataset(&self) -> Result<DatasetHandle<f64>> {
        match self.dataset {
            DatasetKind::Gauss => {
                super::make_gaussian_mixture(self.k, self.d_in, self.n_per_class, self.separation, self.seed)
            }
            DatasetKind::GaussNuis => super::make_nuisance_mixture(
                self.k,
                self.d_in,
                self.nuisance_dim,
                self.n_per_class,
                self.separation,
                self.nuisance_sigma,
                self.seed,
            ),
            DatasetKind::LowRank => super::make_low_rank_mixture(
                self.k,
                self.d_in,
                self.intrinsic_dim,
                self.n_per_class,
                self.separation,
                self.seed,
            ),
            DatasetKind::Idx => {
                let (ti, tl) = match (&self.idx_train_images, &self.idx_train_labels) {
                    (Some(i), Some(l)) => (i, l),
                    _ => {
                        return Err(Error::ConfigError(
                            "idx dataset needs idx_train_images and idx_train_labels".into(),
                        ))
                    }
                };
                let train = super::load_idx(ti, tl)?;
                match (&self.idx_test_images, &self.idx_test_labels) {
                    (Some(i), Some(l)) => train.with_test_from(super::load_idx(i, l)?),
                    _ => Ok(train),
                }
            }
            DatasetKind::Cifar => {
                let path = self
                    .cifar_train
                    .as_ref()
                    .ok_or_else(|| Error::ConfigError("cifar dataset needs cifar_train".into()))?;
                let train = super::load_cifar_binary(path, self.take_n_train)?;
                match &self.cifar_test {
                    Some(p) => train.with_test_from(super::load_cifar_binary(p, self.take_n_test)?),
                    None => Ok(train),
                }
            }
        }
    }

    /// Deterministic echo of the effective configuration, fixed key order.
    pub fn echo(&self) -> String {
        let path_or_none = |p: &Option<PathBuf>| {
            p.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into())
        };
        let kinds: Vec<String> = self.augment_kinds.iter().map(|k| k.name()).collect();
        let list = |v: &[usize]| v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",");
        let grid = self
            .s_grid
            .iter()
            .map(|s| format!("{s}"))
            .collect::<Vec<_>>()
            .join(",");
        let mut s = String::new();
        s.push_str(&format!("dataset={}\n", self.dataset.name()));
        s.push_str(&format!("k={}\n", self.k));
        s.push_str(&format!("d_in={}\n", self.d_in));
        s.push_str(&format!("n_per_class={}\n", self.n_per_class));
        s.push_str(&format!("separation={}\n", self.separation));
        s.push_str(&format!("intrinsic_dim={}\n", self.intrinsic_dim));
        s.push_str(&format!("nuisance_dim={}\n", self.nuisance_dim));
        s.push_str(&format!("nuisance_sigma={}\n", self.nuisance_sigma));
        s.push_str(&format!("idx_train_images={}\n", path_or_none(&self.idx_train_images)));
        s.push_str(&format!("idx_train_labels={}\n", path_or_none(&self.idx_train_labels)));
        s.push_str(&format!("idx_test_images={}\n", path_or_none(&self.idx_test_images)));
        s.push_str(&format!("idx_test_labels={}\n", path_or_none(&self.idx_test_labels)));
        s.push_str(&format!("cifar_train={}\n", path_or_none(&self.cifar_train)));
        s.push_str(&format!("cifar_test={}\n", path_or_none(&self.cifar_test)));
        s.push_str(&format!("take_n_train={}\n", self.take_n_train));
        s.push_str(&format!("take_n_test={}\n", self.take_n_test));
        s.push_str(&format!("seed={}\n", self.seed));
        s.push_str(&format!("d_y={}\n", self.d_y));
        s.push_str(&format!("method={}\n", self.method.name()));
        s.push_str(&format!("epochs_base={}\n", self.epochs_base));
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
        s.push_str(&format!("enc_hidden={}\n", list(&self.enc_hidden)));
        s.push_str(&format!("dec_hidden={}\n", list(&self.dec_hidden)));
        s.push_str(&format!(
            "side_dim={}\n",
            self.side_dim.map(|d| d.to_string()).unwrap_or_else(|| "auto".into())
        ));
        s.push_str(&format!("eps_sq={}\n", self.eps_sq));
        s.push_str(&format!("scale_dim={}\n", if self.scale_dim_input { "input" } else { "latent" }));
        s.push_str(&format!("normalize_columns={}\n", self.normalize_columns));
        s.push_str(&format!("augment_kinds={}\n", kinds.join(",")));
        s.push_str(&format!("n_augment={}\n", self.n_augment));
        s.push_str(&format!(
            "augment_seed={}\n",
            self.augment_seed.map(|v| v.to_string()).unwrap_or_else(|| "auto".into())
        ));
        s.push_str(&format!("screening_dims={}\n", list(&self.screening_dims)));
        s.push_str(&format!("screening_epochs={}\n", self.screening_epochs));
        s.push_str(&format!("train_side={}\n", self.train_side));
        s.push_str(&format!("s_grid={grid}\n"));
        s.push_str(&format!(
            "budget={}\n",
            self.budget.map(|v| v.to_string()).unwrap_or_else(|| "unlimited".into())
        ));
        s.push_str(&format!("drop_policy={}\n", self.drop_policy.name()));
        s.push_str(&format!("h_min={}\n", self.h_min));
        s.push_str(&format!("step_rule={}\n", self.step_rule.name()));
        s.push_str(&format!("keep_fraction={}\n", self.keep_fraction));
        s.push_str(&format!("out={}\n", self.out_dir.display()));
        s.push_str(&format!("model_in={}\n", path_or_none(&self.model_in)));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0.5:2.0:0.5").unwrap(), vec![0.5, 1.0, 1.5, 2.0]);
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("2:1:0.5").is_err());
        assert!(parse_grid("0:1:0.5").is_err());
    }

    #[test]
    fn file_parsing_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.cfg");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# comment").unwrap();
        writeln!(f, "dataset=lowrank").unwrap();
        writeln!(f, "k=12").unwrap();
        writeln!(f, "s_grid=0.1:0.3:0.1").unwrap();
        writeln!(f, "budget=unlimited").unwrap();
        writeln!(f, "augment_kinds=identity,noise0.3,signflip").unwrap();
        drop(f);
        let mut cfg = BenchConfig::from_file(&path).unwrap();
        assert_eq!(cfg.dataset, DatasetKind::LowRank);
        assert_eq!(cfg.k, 12);
        assert_eq!(cfg.s_grid.len(), 3);
        assert_eq!(cfg.budget, None);
        assert_eq!(cfg.augment_kinds.len(), 3);

        cfg.set("seed", "99").unwrap();
        assert_eq!(cfg.seed, 99);
        assert!(cfg.set("nonsense_key", "1").is_err());
    }

    #[test]
    fn echo_is_reparseable() {
        let cfg = BenchConfig::default();
        let echo = cfg.echo();
        // Every echoed line must be a known key (skipping auto/none markers
        // that encode absent options).
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("echo.cfg");
        let filtered: String = echo
            .lines()
            .filter(|l| {
                !l.ends_with("=none") && !l.ends_with("=auto") && !l.starts_with("s_grid=")
            })
            .map(|l| format!("{l}\n"))
            .collect();
        std::fs::write(&path, filtered).unwrap();
        let re = BenchConfig::from_file(&path).unwrap();
        assert_eq!(re.seed, cfg.seed);
        assert_eq!(re.d_y, cfg.d_y);
        assert_eq!(re.dataset, cfg.dataset);
    }

    #[test]
    fn build_synthetic_datasets() {
        let mut cfg = BenchConfig { n_per_class: 10, ..BenchConfig::default() };
        let ds = cfg.build_dataset().unwrap();
        assert_eq!(ds.k, 3);
        assert_eq!(ds.train.len(), 30);
        assert!(ds.test.is_some());

        cfg.dataset = DatasetKind::LowRank;
        cfg.k = 6;
        let ds = cfg.build_dataset().unwrap();
        assert_eq!(ds.k, 6);
    }
}
