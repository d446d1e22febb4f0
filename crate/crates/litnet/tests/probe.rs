use litnet::image_io::Image;
use litnet::loss::LossConfig;
use litnet::metrics::psnr;
use litnet::model::{LitNet, ModelConfig};
use litnet::synth::{synth_pairs, DegradationParams};
use litnet::train::{train, DataSource, TrainConfig};

fn mean_train_psnr(model: &LitNet<f32>, pairs: &[(Image, Image)]) -> f64 {
    let mut acc = 0.0;
    for (deg, clean) in pairs {
        let out = model.infer(&deg.to_tensor()).unwrap();
        let img = Image::from_tensor(&out).unwrap();
        acc += psnr(&img, clean, 1.0).unwrap();
    }
    acc / pairs.len() as f64
}

fn env_num<T: std::str::FromStr>(k: &str, d: T) -> T {
    std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
}

#[test]
fn probe() {
    let steps: u64 = env_num("P_STEPS", 100);
    let base: usize = env_num("P_BASE", 8);
    let fc: usize = env_num("P_FC", 16);
    let seed: u64 = env_num("P_SEED", 7);
    let params = DegradationParams {
        blur_sigma: env_num("P_BLUR", 1.0),
        noise_sigma: env_num("P_NOISE", 0.02),
        ..DegradationParams::default()
    };
    let pairs = synth_pairs(8, 64, 64, seed, &params).unwrap();

    let mut base_psnr = 0.0;
    for (d, c) in &pairs {
        base_psnr += psnr(d, c, 1.0).unwrap();
    }
    eprintln!("baseline degraded-vs-clean: {:.2} dB", base_psnr / 8.0);

    let mcfg = ModelConfig { base_width: base, fc_width: fc, ..ModelConfig::default() };
    let model_probe: LitNet<f32> = LitNet::new(mcfg, seed).unwrap();
    eprintln!("params: {}", model_probe.count_params());

    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("final.litn");
    let t0 = std::time::Instant::now();
    let stage: u64 = env_num("P_STAGE", 100);
    let mut done = 0;
    while done < steps {
        done = (done + stage).min(steps);
        let tcfg = TrainConfig {
            lr: 2e-4,
            batch_size: 5,
            max_steps: done,
            seed,
            resume: (done > stage).then(|| ck.clone()),
            data: DataSource::Synthetic { count: 8, width: 64, height: 64, params },
            ..TrainConfig::default()
        };
        train(&tcfg, &mcfg, &LossConfig::default(), Some(dir.path()), &mut std::io::sink())
            .unwrap();
        let model: LitNet<f32> =
            litnet::checkpoint::load_checkpoint::<f32>(&ck).unwrap().build_model().unwrap();
        let p = mean_train_psnr(&model, &pairs);
        eprintln!("base {base} fc {fc} step {done}: {p:.2} dB ({:.0}s)", t0.elapsed().as_secs_f64());
    }

    // Diagnostic A: train-mode forward over the full batch — does the gap
    // between batch statistics and the EMA running stats cost PSNR?
    let model: LitNet<f32> =
        litnet::checkpoint::load_checkpoint::<f32>(&ck).unwrap().build_model().unwrap();
    let n = pairs.len();
    let batch = litnet::Tensor::from_fn(vec![n, 3, 64, 64], |i| {
        let per = 3 * 64 * 64;
        let (img, rest) = (i / per, i % per);
        let t = pairs[img].0.to_tensor::<f32>();
        t.data()[rest]
    });
    let y = model.forward(&batch, litnet::nn::Mode::Train, None).unwrap();
    let mut acc = 0.0;
    for (i, (_, clean)) in pairs.iter().enumerate() {
        let per = 3 * 64 * 64;
        let img = Image::from_tensor(
            &litnet::Tensor::from_vec(
                vec![1, 3, 64, 64],
                y.data()[i * per..(i + 1) * per].to_vec(),
            )
            .unwrap(),
        )
        .unwrap();
        acc += psnr(&img, clean, 1.0).unwrap();
    }
    eprintln!("train-mode full-batch PSNR: {:.2} dB", acc / n as f64);

    // Diagnostic B: 100 extra steps at lr/10 — is the plateau Adam jitter?
    let tcfg = TrainConfig {
        lr: 2e-5,
        batch_size: 5,
        max_steps: steps + 100,
        seed,
        resume: Some(ck.clone()),
        data: DataSource::Synthetic { count: 8, width: 64, height: 64, params },
        ..TrainConfig::default()
    };
    train(&tcfg, &mcfg, &LossConfig::default(), Some(dir.path()), &mut std::io::sink()).unwrap();
    let model: LitNet<f32> =
        litnet::checkpoint::load_checkpoint::<f32>(&ck).unwrap().build_model().unwrap();
    eprintln!("after +100 steps at lr 2e-5: {:.2} dB", mean_train_psnr(&model, &pairs));
}
