//! CLI bench: screen, train, truncate, sweep, distort, stdreport, plot.
//!
//! Every verb reads one flat key=value config (flags override individual
//! keys), writes its outputs under the configured directory, and drops a
//! `runinfo.txt` with the effective config, the seed and the content hash of
//! every model it produced. Identical config and seed produce byte-identical
//! CSV, SVG and model files.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};

use ldr_core::bench::{
    emit_plot, eval_distortion_robustness, latent_std_report, parse_sweep_csv, plot_svg,
    split_inference, std_csv, std_profile_svg, sweep_csv, sweep_rate_accuracy, train_bench_models,
    BenchConfig, ChannelSpec, DatasetHandle, ModelTag, SweepOptions, TrainMethod,
};
use ldr_core::nn::{load_model, model_checksum, save_model, ModelParams};
use ldr_core::trainer::{
    duphil_round, evaluate_accuracy, keep_first_mask, screen_latent_dims, three_step_train,
    train_ce, truncate_and_finetune, EncoderLoss, FinetuneMode, TrainReport,
};

#[derive(Parser, Debug)]
#[command(name = "ldr-bench", version, about = "Rate-limited split-inference bench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Flat key=value config file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Overrides the dataset kind: gauss|lowrank|idx|cifar.
    #[arg(long, global = true)]
    pub dataset: Option<String>,

    /// Overrides the bottleneck width.
    #[arg(long, global = true)]
    pub dy: Option<usize>,

    /// Overrides the scale grid, a:b:step.
    #[arg(long = "s-grid", global = true)]
    pub s_grid: Option<String>,

    /// Overrides the per-sample bit budget (integer or "unlimited").
    #[arg(long, global = true)]
    pub budget: Option<String>,

    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Short CE-only runs over candidate bottleneck widths; picks the best.
    Screen,
    /// Trains the configured method (ce, duphil, ldr-ft) and saves the model.
    Train,
    /// Truncates the bottleneck of a base model and fine-tunes both ways.
    Truncate,
    /// Rate-accuracy sweep of CE-T, DuPHiL and LDR-FT over the scale grid.
    Sweep,
    /// Sweep against a randomly distorted test set.
    Distort,
    /// Per-entry latent standard deviations of a trained model.
    Stdreport,
    /// Re-plots an existing sweep CSV.
    Plot {
        /// Sweep CSV produced by `sweep` or `distort`.
        #[arg(long)]
        input: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => BenchConfig::from_file(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => BenchConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(ds) = &cli.dataset {
        cfg.set("dataset", ds)?;
    }
    if let Some(dy) = cli.dy {
        cfg.set("dy", &dy.to_string())?;
    }
    if let Some(grid) = &cli.s_grid {
        cfg.set("s_grid", grid)?;
    }
    if let Some(budget) = &cli.budget {
        cfg.set("budget", budget)?;
    }
    if let Some(out) = &cli.out {
        cfg.set("out", &out.display().to_string())?;
    }

    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;

    match cli.command {
        Command::Screen => cmd_screen(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Truncate => cmd_truncate(&cfg),
        Command::Sweep => cmd_sweep(&cfg, false),
        Command::Distort => cmd_sweep(&cfg, true),
        Command::Stdreport => cmd_stdreport(&cfg),
        Command::Plot { input } => cmd_plot(&cfg, &input),
    }
}

fn write_runinfo(cfg: &BenchConfig, checksums: &[(String, String)]) -> Result<()> {
    let mut text = String::from("# effective configuration\n");
    text.push_str(&cfg.echo());
    for (name, sum) in checksums {
        text.push_str(&format!("model_checksum_{name}={sum}\n"));
    }
    std::fs::write(cfg.out_dir.join("runinfo.txt"), text)?;
    Ok(())
}

fn channel(cfg: &BenchConfig) -> ChannelSpec {
    ChannelSpec { bit_budget_per_sample: cfg.budget, drop_policy: cfg.drop_policy }
}

fn sweep_options(cfg: &BenchConfig) -> SweepOptions {
    SweepOptions { step_rule: cfg.step_rule, h_min: cfg.h_min }
}

/// Trains the single model the config's `method` asks for. The rate-guided
/// variants start from a CE-pretrained baseline.
fn train_single(cfg: &BenchConfig, ds: &DatasetHandle<f64>) -> Result<(ModelParams<f64>, TrainReport)> {
    let tc = cfg.train_config(ds.geometry);
    let train = ds.train_view();
    let test = ds.test_view()?;
    let mut params: ModelParams<f64> = tc.build_model(ds.d_in, ds.k, cfg.d_y);
    let mut report = TrainReport { config_echo: tc.echo(), ..Default::default() };
    train_ce(&mut params, train, Some(test), cfg.epochs_base, tc.lr_12, &tc, "ce", &mut report)?;
    match cfg.method {
        TrainMethod::Ce => {}
        TrainMethod::DuPhil => {
            duphil_round(&mut params, train, Some(test), EncoderLoss::Ldr, &tc, &mut report)?
        }
        TrainMethod::LdrFt => {
            let r3 = three_step_train(&mut params, train, test, &tc)?;
            report.records.extend(r3.records);
        }
    }
    report.final_train_accuracy = evaluate_accuracy(&params, train)?;
    report.final_test_accuracy = evaluate_accuracy(&params, test)?;
    report.model_checksum = model_checksum(&params);
    Ok((params, report))
}

fn base_model(cfg: &BenchConfig, ds: &DatasetHandle<f64>) -> Result<ModelParams<f64>> {
    match &cfg.model_in {
        Some(path) => load_model(path).with_context(|| format!("loading {}", path.display())),
        None => Ok(train_single(cfg, ds)?.0),
    }
}

fn cmd_screen(cfg: &BenchConfig) -> Result<()> {
    let ds = cfg.build_dataset()?;
    let tc = cfg.train_config(ds.geometry);
    let (chosen, table) =
        screen_latent_dims::<f64>(ds.train_view(), ds.test_view()?, ds.d_in, ds.k, &tc)?;
    let mut csv = String::from("d_y,accuracy,chosen\n");
    for (d_y, acc) in &table {
        csv.push_str(&format!("{},{:.6},{}\n", d_y, acc, u8::from(*d_y == chosen)));
    }
    std::fs::write(cfg.out_dir.join("screen.csv"), &csv)?;
    write_runinfo(cfg, &[])?;
    println!("screen: chose d_y = {chosen}");
    for (d_y, acc) in &table {
        println!("  d_y {d_y:>4}: accuracy {acc:.4}");
    }
    Ok(())
}

fn cmd_train(cfg: &BenchConfig) -> Result<()> {
    let ds = cfg.build_dataset()?;
    let (params, report) = train_single(cfg, &ds)?;
    let name = cfg.method.name();
    let model_path = cfg.out_dir.join(format!("model-{name}.ldrm"));
    save_model(&params, &model_path)?;
    std::fs::write(cfg.out_dir.join(format!("train-{name}.csv")), report.to_csv())?;
    write_runinfo(cfg, &[(name.replace('-', "_"), report.model_checksum.clone())])?;
    println!(
        "train[{name}]: train acc {:.4}, test acc {:.4}, model {}",
        report.final_train_accuracy,
        report.final_test_accuracy,
        model_path.display()
    );
    Ok(())
}

fn cmd_truncate(cfg: &BenchConfig) -> Result<()> {
    let ds = cfg.build_dataset()?;
    let tc = cfg.train_config(ds.geometry);
    let base = base_model(cfg, &ds)?;
    let keep_count = ((cfg.keep_fraction * base.d_y as f64).round() as usize).clamp(1, base.d_y);
    let mask = keep_first_mask(base.d_y, keep_count);
    let train = ds.train_view();
    let test = ds.test_view()?;

    let mut csv = String::from("mode,d_y,test_accuracy\n");
    let mut sums = Vec::new();
    for (mode, name) in [(FinetuneMode::LdrFt, "ldr-ft"), (FinetuneMode::CeFt, "ce-ft")] {
        let (model, report) = truncate_and_finetune(&base, &mask, mode, train, test, &tc)?;
        let path = cfg.out_dir.join(format!("truncated-{name}.ldrm"));
        save_model(&model, &path)?;
        std::fs::write(cfg.out_dir.join(format!("truncate-{name}.csv")), report.to_csv())?;
        csv.push_str(&format!("{},{},{:.6}\n", name, model.d_y, report.final_test_accuracy));
        sums.push((format!("truncated_{}", name.replace('-', "_")), report.model_checksum.clone()));
        println!(
            "truncate[{name}]: kept {} of {} entries, test acc {:.4}",
            keep_count, base.d_y, report.final_test_accuracy
        );
    }
    std::fs::write(cfg.out_dir.join("truncate.csv"), csv)?;
    write_runinfo(cfg, &sums)?;
    Ok(())
}

fn cmd_sweep(cfg: &BenchConfig, distorted: bool) -> Result<()> {
    let ds = cfg.build_dataset()?;
    let tc = cfg.train_config(ds.geometry);
    let models = train_bench_models(&ds, cfg.d_y, cfg.epochs_base, &tc)?;
    let points = if distorted {
        let spec = cfg.augment_spec(ds.geometry);
        eval_distortion_robustness(&models.tagged(), &ds, &spec, &cfg.s_grid, &channel(cfg), sweep_options(cfg))?
    } else {
        sweep_rate_accuracy(&models.tagged(), &ds, &cfg.s_grid, &channel(cfg), sweep_options(cfg))?
    };
    let stem = if distorted { "distort" } else { "sweep" };
    std::fs::write(cfg.out_dir.join(format!("{stem}.csv")), sweep_csv(&points))?;
    emit_plot(&points, &cfg.out_dir.join(format!("{stem}.svg")))?;

    let mut sums = Vec::new();
    for (tag, params) in models.tagged() {
        let name = tag.name().to_lowercase().replace('-', "_");
        save_model(params, &cfg.out_dir.join(format!("model-{}.ldrm", tag.name().to_lowercase())))?;
        sums.push((name, model_checksum(params)));
    }
    write_runinfo(cfg, &sums)?;

    for tag in [ModelTag::CeT, ModelTag::DuPhil, ModelTag::LdrFt] {
        let best = points
            .iter()
            .filter(|p| p.model == tag)
            .map(|p| p.accuracy)
            .fold(f64::NAN, f64::max);
        println!("{stem}[{tag}]: {} points, best accuracy {best:.4}", cfg.s_grid.len());
    }
    Ok(())
}

fn cmd_stdreport(cfg: &BenchConfig) -> Result<()> {
    let ds = cfg.build_dataset()?;
    let model = base_model(cfg, &ds)?;
    let table = latent_std_report(&model, &ds)?;
    std::fs::write(cfg.out_dir.join("latent_std.csv"), std_csv(&table))?;
    std::fs::write(cfg.out_dir.join("latent_std.svg"), std_profile_svg(&table))?;
    write_runinfo(cfg, &[("stdreport".into(), model_checksum(&model))])?;
    println!(
        "stdreport: {} entries, max std {:.4}",
        table.len(),
        table.first().map(|r| r.std).unwrap_or(0.0)
    );
    Ok(())
}

fn cmd_plot(cfg: &BenchConfig, input: &Path) -> Result<()> {
    let text = std::fs::read_to_string(input)
        .with_context(|| format!("reading {}", input.display()))?;
    let points = parse_sweep_csv(&text)?;
    if points.is_empty() {
        bail!("no points in {}", input.display());
    }
    let out = cfg.out_dir.join("plot.svg");
    std::fs::write(&out, plot_svg(&points))?;
    println!("plot: {} points -> {}", points.len(), out.display());
    Ok(())
}

/// Smoke check used by the channel-budget demo and tests: runs the encoder
/// side against a budgeted channel and reports drops.
pub fn demo_budget_probe(cfg: &BenchConfig) -> Result<(usize, usize)> {
    let ds = cfg.build_dataset()?;
    let (params, _) = train_single(cfg, &ds)?;
    let y_train = ldr_core::nn::encode(&params, &ds.train.x)?;
    let prof = ldr_core::codec::fit_profile_with(
        &y_train,
        cfg.s_grid.first().copied().unwrap_or(1.0),
        None,
        cfg.step_rule,
        cfg.h_min,
    )?;
    let test = ds.test_view()?;
    let out = split_inference(&params, &prof, &channel(cfg), test.x)?;
    Ok((out.drops, out.predictions.len()))
}
