// Invariance and robustness probes for the nuisance-mixture desk benchmark.

use ldr_core::augment::{apply_transform, distort_eval_set, AugmentSpec, TransformKind};
use ldr_core::bench::{make_nuisance_mixture, split_inference, train_bench_models, ChannelSpec};
use ldr_core::codec::{fit_profile, total_entropy, QuantizationProfile};
use ldr_core::nn::{encode, ModelParams};
use ldr_core::trainer::{keep_first_mask, truncate_and_finetune, DataView, FinetuneMode, TrainConfig};
use ldr_core::{Matrix, SeededRng};

fn entropy_at(base: &QuantizationProfile, y: &Matrix, s: f64) -> f64 {
    total_entropy(y, &base.with_scale(s).unwrap()).unwrap().model_bits_total
}

fn scale_for_entropy(base: &QuantizationProfile, y: &Matrix, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.05f64, 2048.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if entropy_at(base, y, mid) > target { lo = mid } else { hi = mid }
    }
    0.5 * (lo + hi)
}

fn acc(params: &ModelParams<f64>, base: &QuantizationProfile, s: f64, x: &Matrix, labels: &[usize]) -> f64 {
    let prof = base.with_scale(s).unwrap();
    split_inference(params, &prof, &ChannelSpec::unlimited(), x).unwrap().accuracy(labels)
}

fn invariance_ratio(params: &ModelParams<f64>, x: &Matrix, spec: &AugmentSpec, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let y = encode(params, x).unwrap();
    let n = x.cols().min(128);
    let (mut within, mut count) = (0.0, 0usize);
    for j in 0..n {
        let col = x.col(j);
        for kind in &spec.kinds {
            if *kind == TransformKind::Identity { continue; }
            let t = apply_transform(&col, *kind, None, &mut rng).unwrap();
            let mut tx = Matrix::zeros(x.rows(), 1);
            tx.set_col(0, &t);
            let yt = encode(params, &tx).unwrap();
            let d: f64 = (0..y.rows()).map(|r| (y.get(r, j) - yt.get(r, 0)).powi(2)).sum();
            within += d.sqrt();
            count += 1;
        }
    }
    let (mut between, mut bcount) = (0.0, 0usize);
    for j in 0..n.saturating_sub(1) {
        let d: f64 = (0..y.rows()).map(|r| (y.get(r, j) - y.get(r, j + 1)).powi(2)).sum();
        between += d.sqrt();
        bcount += 1;
    }
    (within / count as f64) / (between / bcount as f64)
}

fn main() {
    let nuisance_dim = 16usize;
    for (e1e, e1d, e2e, e2d, naug, epssq, dyv, nsig) in [(20usize,10usize,10usize,5usize,16usize,4.0f64,16usize,3.0f64), (20,10,10,5,16,4.0,16,4.0), (30,10,15,5,16,4.0,16,4.0)] {
        let dy = dyv;
        let nuisance_sigma = nsig;
        println!("== e1=({e1e},{e1d}) e2=({e2e},{e2d}) n={naug} eps_sq={epssq}, d_y={dy} nsig={nuisance_sigma}");
        let (mut w6, mut w7, mut w8, mut wc) = (0, 0, 0, 0);
        for seed in [11u64, 12, 13, 14, 15] {
            let ds = make_nuisance_mixture::<f64>(3, 32, nuisance_dim, 400, 3.5, nuisance_sigma, seed).unwrap();
            let augment = AugmentSpec {
                kinds: vec![
                    TransformKind::Identity,
                    TransformKind::TailJitter { count: nuisance_dim, sigma: nuisance_sigma },
                    TransformKind::GaussianNoise { sigma: 0.3 },
                ],
                n: naug,
                seed,
                geometry: None,
            };
            let mut ldrc = ldr_core::ldr::LdrConfig::default();
            ldrc.eps_sq = epssq;
            let cfg = TrainConfig {
                lr_12: 0.01,
                lr_3: 0.001,
                ldr: ldrc,
                e1_enc: e1e,
                e1_dec: e1d,
                e2_enc: e2e,
                e2_dec: e2d,
                augment: augment.clone(),
                enc_hidden: vec![128],
                dec_hidden: vec![64],
                ..TrainConfig::default_vector(seed)
            };
            let models = train_bench_models(&ds, dy, 30, &cfg).unwrap();
            let test = ds.test.as_ref().unwrap();

            let inv_ce = invariance_ratio(&models.ce_t, &test.x, &augment, 5);
            let inv_ldr = invariance_ratio(&models.ldr_ft, &test.x, &augment, 5);

            // criterion 6 (also probe DuPHiL = step-1-only)
            let mut res = Vec::new();
            for params in [&models.ce_t, &models.ldr_ft, &models.duphil] {
                let y_train = encode(params, &ds.train.x).unwrap();
                let y_test = encode(params, &test.x).unwrap();
                let base = fit_profile(&y_train, 1.0, None).unwrap();
                let e0 = entropy_at(&base, &y_test, 0.1);
                let a0 = acc(params, &base, 0.1, &test.x, &test.labels);
                let s20 = scale_for_entropy(&base, &y_test, 0.2 * e0);
                let a20 = acc(params, &base, s20, &test.x, &test.labels);
                res.push((a0, a0 - a20, e0));
            }
            let ok6 = res[1].1 < res[0].1;
            w6 += ok6 as usize;
            wc += (res[1].0 >= 0.95) as usize;
            let inv_dup = invariance_ratio(&models.duphil, &test.x, &augment, 5);
            println!(
                "  seed {seed}: inv CE {inv_ce:.3} DUP {inv_dup:.3} LDR {inv_ldr:.3} | E0 CE {:.0} DUP {:.0} LDR {:.0} | CE a0={:.4} d={:+.4} | DUP a0={:.4} d={:+.4} | LDR a0={:.4} d={:+.4} {}",
                res[0].2, res[2].2, res[1].2, res[0].0, res[0].1, res[2].0, res[2].1, res[1].0, res[1].1, if ok6 { "LDR" } else { "CE !" }
            );
            if std::env::var("SHOW_STD").is_ok() {
                for (tag, params) in [("CE-T  ", &models.ce_t), ("DuPHiL", &models.duphil), ("LDR-FT", &models.ldr_ft)] {
                    let table = ldr_core::bench::latent_std_report(params, &ds).unwrap();
                    let stds: Vec<String> = table.iter().map(|r| format!("{:.2}", r.std)).collect();
                    println!("    std[{tag}]: {}", stds.join(" "));
                }
            }

            // criterion 7: truncation keep-half, matched 50% entropy
            let mask = keep_first_mask(dy, dy / 2);
            let train_v = ds.train_view();
            let test_v = DataView::new(&test.x, &test.labels);
            let (m_ldr, _) = truncate_and_finetune(&models.ce_t, &mask, FinetuneMode::LdrFt, train_v, test_v, &cfg).unwrap();
            let (m_ce, _) = truncate_and_finetune(&models.ce_t, &mask, FinetuneMode::CeFt, train_v, test_v, &cfg).unwrap();
            let mut taccs = Vec::new();
            for m in [&m_ldr, &m_ce] {
                let y_train = encode(m, &ds.train.x).unwrap();
                let y_test = encode(m, &test.x).unwrap();
                let base = fit_profile(&y_train, 1.0, None).unwrap();
                let e0 = entropy_at(&base, &y_test, 0.1);
                let s50 = scale_for_entropy(&base, &y_test, 0.5 * e0);
                taccs.push(acc(m, &base, s50, &test.x, &test.labels));
            }
            let ok7 = taccs[0] >= taccs[1];
            w7 += ok7 as usize;

            // criterion 8: distortion from the same collection
            let rng = SeededRng::new(1000 + seed).derive(8);
            let distorted = distort_eval_set(&test.x, &augment, &rng).unwrap();
            let mut daccs = Vec::new();
            for params in [&models.ldr_ft, &models.ce_t] {
                let y_train = encode(params, &ds.train.x).unwrap();
                let y_test = encode(params, &distorted).unwrap();
                let base = fit_profile(&y_train, 1.0, None).unwrap();
                let e0 = entropy_at(&base, &y_test, 0.1);
                let s50 = scale_for_entropy(&base, &y_test, 0.5 * e0);
                daccs.push(acc(params, &base, s50, &distorted, &test.labels));
            }
            let ok8 = daccs[0] >= daccs[1];
            w8 += ok8 as usize;
            println!(
                "    trunc LDR {:.4} vs CE {:.4} {} | distort LDR {:.4} vs CE {:.4} {}",
                taccs[0], taccs[1], if ok7 { "ok" } else { "!" },
                daccs[0], daccs[1], if ok8 { "ok" } else { "!" }
            );
        }
        println!("  => clean {wc}/5 | drop {w6}/5 | trunc {w7}/5 | distort {w8}/5");
    }
}
