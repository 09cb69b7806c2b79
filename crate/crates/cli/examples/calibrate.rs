// Scratch calibration harness: measures the criterion-6/7/8/9 quantities
// over many seeds for candidate bench settings.

use ldr_core::augment::{AugmentSpec, TransformKind};
use ldr_core::bench::{
    make_gaussian_mixture, make_low_rank_mixture, split_inference, train_bench_models,
    ChannelSpec, DatasetHandle,
};
use ldr_core::codec::{fit_profile, total_entropy, QuantizationProfile};
use ldr_core::nn::encode;
use ldr_core::nn::ModelParams;
use ldr_core::trainer::{
    keep_first_mask, screen_latent_dims, truncate_and_finetune, DataView, FinetuneMode, TrainConfig,
};

fn acc_at_scale(
    params: &ModelParams<f64>,
    base: &QuantizationProfile,
    s: f64,
    x: &ldr_core::Matrix,
    labels: &[usize],
) -> f64 {
    let prof = base.with_scale(s).unwrap();
    let out = split_inference(params, &prof, &ChannelSpec::unlimited(), x).unwrap();
    out.accuracy(labels)
}

fn entropy_at(base: &QuantizationProfile, y_test: &ldr_core::Matrix, s: f64) -> f64 {
    total_entropy(y_test, &base.with_scale(s).unwrap()).unwrap().model_bits_total
}

fn scale_for_entropy(base: &QuantizationProfile, y_test: &ldr_core::Matrix, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.1f64, 512.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if entropy_at(base, y_test, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct Variant {
    name: &'static str,
    e_enc: usize,
    e_dec: usize,
    e3: usize,
    eps_sq: f64,
    noise: f64,
    n_per_class: usize,
    d_y: usize,
    sep: f64,
}

fn main() {
    let seeds: Vec<u64> = vec![11, 12, 13, 14, 15, 16, 17];
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("drop");

    if which == "screen" {
        for sep in [4.0, 5.0, 6.0] {
            println!("== screening, sep {sep}");
            for &seed in &seeds {
                let ds = make_low_rank_mixture::<f64>(12, 32, 8, 60, sep, seed).unwrap();
                let cfg = TrainConfig {
                    lr_12: 0.01,
                    lr_3: 0.001,
                    screening_dims: vec![4, 8, 32],
                    screening_epochs: 8,
                    enc_hidden: vec![128],
                    dec_hidden: vec![64],
                    ..TrainConfig::default_vector(seed)
                };
                let (chosen, table) =
                    screen_latent_dims::<f64>(ds.train_view(), ds.test_view().unwrap(), ds.d_in, ds.k, &cfg)
                        .unwrap();
                let t: Vec<String> = table.iter().map(|(d, a)| format!("{d}:{a:.3}")).collect();
                println!("  seed {seed}: chose {chosen}  [{}]", t.join(" "));
            }
        }
        return;
    }

    let variants = [
        Variant { name: "V1 enc30 eps.5 noise1 n400", e_enc: 30, e_dec: 10, e3: 20, eps_sq: 0.5, noise: 1.0, n_per_class: 400, d_y: 16, sep: 3.5 },
        Variant { name: "V2 enc30 eps.1 noise1 n400", e_enc: 30, e_dec: 10, e3: 20, eps_sq: 0.1, noise: 1.0, n_per_class: 400, d_y: 16, sep: 3.5 },
        Variant { name: "V3 enc30 eps.1 noise1 e3=10", e_enc: 30, e_dec: 10, e3: 10, eps_sq: 0.1, noise: 1.0, n_per_class: 400, d_y: 16, sep: 3.5 },
    ];

    for v in &variants {
        println!("== {}", v.name);
        let mut ldr_wins = 0;
        let mut trunc_wins = 0;
        let mut dist_wins = 0;
        let mut clean_ok = 0;
        for &seed in &seeds {
            let ds = make_gaussian_mixture::<f64>(3, 32, v.n_per_class, v.sep, seed).unwrap();
            let augment = AugmentSpec {
                kinds: vec![
                    TransformKind::Identity,
                    TransformKind::GaussianNoise { sigma: v.noise },
                    TransformKind::SignFlipPair,
                ],
                n: 4,
                seed,
                geometry: None,
            };
            let mut ldr = ldr_core::ldr::LdrConfig::default();
            ldr.eps_sq = v.eps_sq;
            let cfg = TrainConfig {
                lr_12: 0.01,
                lr_3: 0.001,
                e1_enc: v.e_enc,
                e1_dec: v.e_dec,
                e2_enc: v.e_enc,
                e2_dec: v.e_dec,
                e3: v.e3,
                ldr,
                augment,
                enc_hidden: vec![128],
                dec_hidden: vec![64],
                ..TrainConfig::default_vector(seed)
            };
            let models = train_bench_models(&ds, v.d_y, 30, &cfg).unwrap();
            let test = ds.test.as_ref().unwrap();

            // criterion 6: drop at 20% of the s=0.1 entropy
            let mut drops = Vec::new();
            for params in [&models.ce_t, &models.ldr_ft] {
                let y_train = encode(params, &ds.train.x).unwrap();
                let y_test = encode(params, &test.x).unwrap();
                let base = fit_profile(&y_train, 1.0, None).unwrap();
                let e0 = entropy_at(&base, &y_test, 0.1);
                let a0 = acc_at_scale(params, &base, 0.1, &test.x, &test.labels);
                let s20 = scale_for_entropy(&base, &y_test, 0.2 * e0);
                let a20 = acc_at_scale(params, &base, s20, &test.x, &test.labels);
                drops.push((a0, a0 - a20));
            }
            let ok = drops[1].1 < drops[0].1;
            ldr_wins += ok as usize;
            clean_ok += (drops[1].0 >= 0.95) as usize;
            println!(
                "  seed {seed}: CE a0={:.4} drop={:+.4} | LDR a0={:.4} drop={:+.4}  {}",
                drops[0].0, drops[0].1, drops[1].0, drops[1].1,
                if ok { "LDR-better" } else { "CE-better !" }
            );
            if std::env::var("SHOW_STD").is_ok() {
                for (tag, params) in [("CE-T", &models.ce_t), ("LDR-FT", &models.ldr_ft)] {
                    let table = ldr_core::bench::latent_std_report(params, &ds).unwrap();
                    let stds: Vec<String> = table.iter().map(|r| format!("{:.2}", r.std)).collect();
                    println!("    std[{tag}]: {}", stds.join(" "));
                }
            }

            // criterion 7: truncation (keep-half), matched entropy
            let mask = keep_first_mask(v.d_y, v.d_y / 2);
            let train_v = ds.train_view();
            let test_v = DataView::new(&test.x, &test.labels);
            let (m_ldr, _) =
                truncate_and_finetune(&models.ce_t, &mask, FinetuneMode::LdrFt, train_v, test_v, &cfg).unwrap();
            let (m_ce, _) =
                truncate_and_finetune(&models.ce_t, &mask, FinetuneMode::CeFt, train_v, test_v, &cfg).unwrap();
            let mut accs = Vec::new();
            for m in [&m_ldr, &m_ce] {
                let y_train = encode(m, &ds.train.x).unwrap();
                let y_test = encode(m, &test.x).unwrap();
                let base = fit_profile(&y_train, 1.0, None).unwrap();
                let e0 = entropy_at(&base, &y_test, 0.1);
                let s50 = scale_for_entropy(&base, &y_test, 0.5 * e0);
                accs.push(acc_at_scale(m, &base, s50, &test.x, &test.labels));
            }
            let tok = accs[0] >= accs[1];
            trunc_wins += tok as usize;
            println!(
                "    trunc: LDR-FT {:.4} vs CE-FT {:.4}  {}",
                accs[0], accs[1], if tok { "ok" } else { "CE-better !" }
            );

            // criterion 8: distortion at matched (50% E0) entropy
            let rng = ldr_core::SeededRng::new(1000 + seed).derive(8);
            let distorted = ldr_core::augment::distort_eval_set(&test.x, &cfg.augment, &rng).unwrap();
            let mut daccs = Vec::new();
            for params in [&models.ldr_ft, &models.ce_t] {
                let y_train = encode(params, &ds.train.x).unwrap();
                let y_test = encode(params, &distorted).unwrap();
                let base = fit_profile(&y_train, 1.0, None).unwrap();
                let e0 = entropy_at(&base, &y_test, 0.1);
                let s50 = scale_for_entropy(&base, &y_test, 0.5 * e0);
                daccs.push(acc_at_scale(params, &base, s50, &distorted, &test.labels));
            }
            let dok = daccs[0] >= daccs[1];
            dist_wins += dok as usize;
            println!(
                "    distort: LDR-FT {:.4} vs CE-T {:.4}  {}",
                daccs[0], daccs[1], if dok { "ok" } else { "CE-better !" }
            );
        }
        println!(
            "  => clean>=95: {clean_ok}/{n} | drop wins {ldr_wins}/{n} | trunc wins {trunc_wins}/{n} | distort wins {dist_wins}/{n}",
            n = seeds.len()
        );
    }
}
