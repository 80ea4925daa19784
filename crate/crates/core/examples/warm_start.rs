//! Cold versus warm-started training on a pair of similar scenes.
//!
//! cargo run --release -p coli-core --example warm_start -- [budget] [variant] [donor_epochs]

use coli_core::inr_net::Arch;
use coli_core::pixel_io::split_patches;
use coli_core::testimage;
use coli_core::trainer::{train, TrainConfig};

fn main() -> coli_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let budget: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(600);
    let variant: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let donor_epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(budget);

    let cfg = Arch::Small.config(16, 1)?;
    let donor = split_patches(&testimage::scene(64, 64, 1, 0.0), 16, 16)?;
    let target = split_patches(&testimage::scene(64, 64, 1, variant), 16, 16)?;

    let (donor_w, _) =
        train(&donor, &cfg, &TrainConfig { epochs: donor_epochs, seed: 1, ..TrainConfig::default() }, None)?;
    let cold_cfg = TrainConfig { epochs: budget, seed: 2, ..TrainConfig::default() };
    let (_, cold) = train(&target, &cfg, &cold_cfg, None)?;
    let goal = cold.last().expect("non-empty history").psnr_db;
    let warm_cfg = TrainConfig { target_psnr: Some(goal), ..cold_cfg };
    let (_, warm) = train(&target, &cfg, &warm_cfg, Some(&donor_w))?;
    let reached = warm.epochs_to_reach(goal);
    println!(
        "cold {budget} epochs -> {goal:.2} dB; warm start epoch 1 {:.2} dB, reaches it at {reached:?} ({:.0}% of budget)",
        warm.records[0].psnr_db,
        100.0 * reached.unwrap_or(budget) as f64 / budget as f64
    );
    Ok(())
}
