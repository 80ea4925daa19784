//! Trains the small preset for several epoch budgets and reports the PSNR
//! before and after weight coding at each index width.
//!
//! cargo run --release -p coli-core --example codec_sweep -- [epochs...]

use coli_core::hypercodec::{compress, decompress, CodecConfig};
use coli_core::inr_net::Arch;
use coli_core::pixel_io::split_patches;
use coli_core::testimage;
use coli_core::trainer::{evaluate, train, TrainConfig};

fn main() -> coli_core::Result<()> {
    let budgets: Vec<usize> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let budgets = if budgets.is_empty() { vec![300, 1000, 2000] } else { budgets };

    let img = testimage::scene(64, 64, 1, 0.0);
    let grid = split_patches(&img, 16, 16)?;
    let cfg = Arch::Small.config(16, 1)?;
    for epochs in budgets {
        let t_cfg = TrainConfig { epochs, ..TrainConfig::default() };
        let (w, _) = train(&grid, &cfg, &t_cfg, None)?;
        let raw = evaluate(&w, &cfg, &grid)?.psnr_db;
        print!("epochs {epochs:5} raw {raw:6.2}");
        for k_bits in [8, 12, 16] {
            let codec = CodecConfig { k_bits, ..CodecConfig::default() };
            let a = compress(&w, &codec)?;
            let hc = evaluate(&decompress(&a)?, &cfg, &grid)?.psnr_db;
            print!("  k{k_bits} {hc:6.2} ({} B)", a.encoded_len());
        }
        println!();
    }
    Ok(())
}
