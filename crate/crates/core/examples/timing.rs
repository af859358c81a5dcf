// scratch: GAN dynamics probe
use std::time::Instant;
use diffgan_core::bundle::DetectMode;
use diffgan_core::config::ExperimentConfig;
use diffgan_core::data::AnomalyKind;
use diffgan_core::experiment::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(12);
    let bpe: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(16);

    let mut config = ExperimentConfig::desk();
    config.gan.lr_g = lr;
    config.gan.lr_d = lr;
    config.gan.epochs = epochs;
    config.gan.batches_per_epoch = bpe;

    let dataset = generate_dataset::<f32>(&config, AnomalyKind::GlobalPoint, 17).unwrap();
    let stage = train_denoiser_stage(&config, &dataset, 17).unwrap();
    println!("denoiser final loss {:.4}", stage.history.last().unwrap().loss);

    let t1 = Instant::now();
    let gan = train_gan_stage(&config, &dataset, &stage, 17).unwrap();
    println!("gan {} epochs x {} batches in {:?}", epochs, bpe, t1.elapsed());
    for h in &gan.history {
        println!("  epoch {:2}: d_adv {:+.4} g_adv {:+.4} recon {:.5} mean_step {:5.1} p_gw {:.3} p_z {:.3}",
            h.epoch, h.d_adv, h.g_adv, h.recon, h.mean_step, h.mean_p_gw, h.mean_p_z);
    }
    for m in [5usize, 20, 50, 80] {
        let row = evaluate_mode(&gan.bundle, &dataset, DetectMode::DiffusionFixed(m), 17).unwrap();
        println!("diffusion-{m}: F1 {:.4} best {:.4}", row.f1, row.best_f1);
    }
    let row = evaluate_mode(&gan.bundle, &dataset, DetectMode::DiffGan, 17).unwrap();
    println!("diffgan: F1 {:.4} best {:.4}", row.f1, row.best_f1);
}
