//! Acceptance: two runs of any CLI verb with identical config and seed
//! produce byte-identical CSV and model files (SVGs and runinfo included).

use ldr_bench::{run, Cli, Command};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

fn quick_config(dir: &Path) -> PathBuf {
    let path = dir.join("bench.cfg");
    std::fs::write(
        &path,
        "dataset=gaussnuis\n\
         k=3\n\
         d_in=16\n\
         nuisance_dim=8\n\
         nuisance_sigma=3.0\n\
         n_per_class=40\n\
         separation=3.5\n\
         d_y=8\n\
         epochs_base=4\n\
         e1_enc=2\n\
         e1_dec=2\n\
         e2_enc=2\n\
         e2_dec=2\n\
         e3=3\n\
         lr_12=0.01\n\
         lr_3=0.001\n\
         enc_hidden=32\n\
         dec_hidden=16\n\
         batch_size=32\n\
         n_augment=4\n\
         augment_kinds=identity,tailjitter8/3,noise0.3\n\
         screening_dims=4,8\n\
         screening_epochs=2\n\
         s_grid=0.5:1.5:0.5\n\
         seed=21\n",
    )
    .unwrap();
    path
}

fn run_verb(make: impl Fn() -> Command, config: &Path, out: &Path) {
    run(Cli {
        command: make(),
        config: Some(config.to_path_buf()),
        seed: None,
        dataset: None,
        dy: None,
        s_grid: None,
        budget: None,
        out: Some(out.to_path_buf()),
    })
    .unwrap();
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name().into_string().unwrap();
        let mut bytes = std::fs::read(entry.path()).unwrap();
        if name == "runinfo.txt" {
            // The config echo names the output directory itself, which is
            // the one legitimately run-specific line.
            let text = String::from_utf8(bytes).unwrap();
            bytes = text
                .lines()
                .filter(|l| !l.starts_with("out="))
                .collect::<Vec<_>>()
                .join("\n")
                .into_bytes();
        }
        map.insert(name, bytes);
    }
    map
}

fn assert_identical_outputs(make: impl Fn() -> Command, label: &str) {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_config(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run_verb(&make, &config, &out_a);
    run_verb(&make, &config, &out_b);
    let a = dir_contents(&out_a);
    let b = dir_contents(&out_b);
    assert_eq!(
        a.keys().collect::<Vec<_>>(),
        b.keys().collect::<Vec<_>>(),
        "{label}: file sets differ"
    );
    assert!(!a.is_empty(), "{label}: no outputs written");
    for (name, bytes) in &a {
        assert_eq!(bytes, &b[name], "{label}: {name} differs between runs");
    }
    println!("[PASS] determinism[{label}]: {} files byte-identical", a.len());
}

#[test]
fn criterion_determinism_sweep() {
    assert_identical_outputs(|| Command::Sweep, "sweep");
}

#[test]
fn criterion_determinism_train() {
    assert_identical_outputs(|| Command::Train, "train");
}

#[test]
fn criterion_determinism_screen() {
    assert_identical_outputs(|| Command::Screen, "screen");
}

#[test]
fn criterion_determinism_truncate() {
    assert_identical_outputs(|| Command::Truncate, "truncate");
}

#[test]
fn criterion_determinism_distort_and_stdreport() {
    assert_identical_outputs(|| Command::Distort, "distort");
    assert_identical_outputs(|| Command::Stdreport, "stdreport");
}

#[test]
fn plot_verb_round_trips_sweep_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_config(dir.path());
    let out = dir.path().join("sweep");
    run_verb(|| Command::Sweep, &config, &out);
    let plot_out = dir.path().join("plot");
    run(Cli {
        command: Command::Plot { input: out.join("sweep.csv") },
        config: Some(config.clone()),
        seed: None,
        dataset: None,
        dy: None,
        s_grid: None,
        budget: None,
        out: Some(plot_out.clone()),
    })
    .unwrap();
    // The verb parses the emitted CSV (6-decimal floats) and renders one
    // polyline per model tag.
    let svg = std::fs::read_to_string(plot_out.join("plot.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.ends_with("</svg>\n"));
    assert_eq!(svg.matches("<polyline").count(), 3);
}
