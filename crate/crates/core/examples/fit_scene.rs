//! Fits the small preset to a synthetic 64x64 scene and prints progress.
//!
//! cargo run --release -p coli-core --example fit_scene -- [epochs] [lr] [batch]

use coli_core::inr_net::Arch;
use coli_core::pixel_io::split_patches;
use coli_core::testimage;
use coli_core::trainer::{evaluate, train, TrainConfig};

fn main() -> coli_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let lr = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5e-3);
    let batch = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(4);

    let img = testimage::scene(64, 64, 1, 0.0);
    let grid = split_patches(&img, 16, 16)?;
    let cfg = Arch::Small.config(16, 1)?;
    let t_cfg = TrainConfig { epochs, lr, batch_patches: batch, ..TrainConfig::default() };
    let start = std::time::Instant::now();
    let (w, hist) = train(&grid, &cfg, &t_cfg, None)?;
    for r in hist.records.iter().filter(|r| r.epoch % (epochs / 10).max(1) == 0) {
        println!("epoch {:5} loss {:.3e} psnr {:.2}", r.epoch, r.loss, r.psnr_db);
    }
    let report = evaluate(&w, &cfg, &grid)?;
    println!("{} params, {:.1}s, final {}", w.total_params(), start.elapsed().as_secs_f64(), report.to_json());
    Ok(())
}
