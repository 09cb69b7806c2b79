use ldr_core::bench::{make_gaussian_mixture, make_nuisance_mixture, split_inference, train_bench_models, ChannelSpec};
use ldr_core::codec::fit_profile;
use ldr_core::nn::encode;
use ldr_core::trainer::{evaluate_accuracy, three_step_train, TrainConfig};
use ldr_core::augment::{AugmentSpec, TransformKind};

fn bench_cfg(seed: u64) -> TrainConfig {
    let mut ldrc = ldr_core::ldr::LdrConfig::default();
    ldrc.eps_sq = 4.0;
    TrainConfig {
        lr_12: 0.01,
        lr_3: 0.001,
        e1_enc: 20, e1_dec: 10, e2_enc: 10, e2_dec: 5, e3: 20,
        ldr: ldrc,
        augment: AugmentSpec {
            kinds: vec![
                TransformKind::Identity,
                TransformKind::TailJitter { count: 16, sigma: 4.0 },
                TransformKind::GaussianNoise { sigma: 0.3 },
            ],
            n: 16,
            seed,
            geometry: None,
        },
        enc_hidden: vec![128],
        dec_hidden: vec![64],
        ..TrainConfig::default_vector(seed)
    }
}

fn main() {
    // From-scratch three-step on plain 600/300 mixture at separation 4.0.
    for seed in [11u64, 12, 13] {
        let ds = make_gaussian_mixture::<f64>(3, 32, 200, 4.0, seed).unwrap();
        let cfg = TrainConfig {
            e1_enc: 10, e1_dec: 10, e2_enc: 10, e2_dec: 10, e3: 20,
            ..bench_cfg(seed)
        };
        let mut params = cfg.build_model(ds.d_in, ds.k, 16);
        let report = three_step_train(&mut params, ds.train_view(), ds.test_view().unwrap(), &cfg).unwrap();
        println!("scratch seed {seed}: acc {:.4}", report.final_test_accuracy);
    }
    // s -> 0 convergence on the default nuisance benchmark models.
    for seed in [11u64, 12, 13] {
        let ds = make_nuisance_mixture::<f64>(3, 32, 16, 400, 3.5, 4.0, seed).unwrap();
        let cfg = bench_cfg(seed);
        let models = train_bench_models(&ds, 16, 30, &cfg).unwrap();
        let test = ds.test.as_ref().unwrap();
        for (tag, m) in [("CE-T", &models.ce_t), ("LDR-FT", &models.ldr_ft)] {
            let y_train = encode(m, &ds.train.x).unwrap();
            let prof = fit_profile(&y_train, 0.01, None).unwrap();
            let out = split_inference(m, &prof, &ChannelSpec::unlimited(), &test.x).unwrap();
            let raw = evaluate_accuracy(m, ds.test_view().unwrap()).unwrap();
            println!(
                "s->0 seed {seed} {tag}: raw {raw:.4} s=.01 {:.4} diff {:.5}",
                out.accuracy(&test.labels),
                (raw - out.accuracy(&test.labels)).abs()
            );
        }
    }
}
