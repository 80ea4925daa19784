//! Comparison table over post-training compressors applied to one trained
//! model: raw weights, the trajectory codec, pruning, low rank, INT8, and
//! the two stacked variants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{apply, dequant_int8, lowrank_weights, prune_l1, ptq_int8, sparse_len, Method};
use crate::container::{encode_file, ColiFile, ImageMeta, Payload};
use crate::error::{Error, Result};
use crate::hypercodec::{compress_with, decompress, CodecConfig, TrajectoryIndex};
use crate::inr_net::{NetConfig, Weights};
use crate::pixel_io::{stitch, Image, PatchGrid};
use crate::quality_metrics::{bpp, MetricsReport};
use crate::trainer::reconstruct;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "HC")]
    Hc,
    #[serde(rename = "P")]
    Prune,
    #[serde(rename = "LR")]
    LowRank,
    #[serde(rename = "Q")]
    Int8,
    #[serde(rename = "P+HC")]
    PruneHc,
    #[serde(rename = "LR+HC")]
    LowRankHc,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::None,
        Variant::Hc,
        Variant::Prune,
        Variant::LowRank,
        Variant::Int8,
        Variant::PruneHc,
        Variant::LowRankHc,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::None => "none",
            Variant::Hc => "HC",
            Variant::Prune => "P",
            Variant::LowRank => "LR",
            Variant::Int8 => "Q",
            Variant::PruneHc => "P+HC",
            Variant::LowRankHc => "LR+HC",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub prune_ratio: f64,
    pub rank_fraction: f64,
    pub codec: CodecConfig,
    /// Worker threads for evaluating variants; 0 uses the current pool.
    pub jobs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { prune_ratio: 0.3, rank_fraction: 0.5, codec: CodecConfig::default(), jobs: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub variant: Variant,
    pub payload_bytes: u64,
    pub bpp: f64,
    /// Size if the variant's weights were stored densely as f32.
    pub dense_bpp: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
}

pub const CSV_HEADER: &str = "variant,payload_bytes,bpp,dense_bpp,psnr_db,ssim,ms_ssim";

impl BenchRow {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.variant.label(),
            self.payload_bytes,
            self.bpp,
            self.dense_bpp,
            self.psnr_db,
            self.ssim,
            self.ms_ssim
        )
    }
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn to_json(rows: &[BenchRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize")
}

/// Evaluates every variant on `weights`, in [`Variant::ALL`] order.
pub fn run(grid: &PatchGrid, net: &NetConfig, weights: &Weights, cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    run_variants(grid, net, weights, cfg, &Variant::ALL)
}

pub fn run_variants(
    grid: &PatchGrid,
    net: &NetConfig,
    weights: &Weights,
    cfg: &BenchConfig,
    variants: &[Variant],
) -> Result<Vec<BenchRow>> {
    cfg.codec.validate()?;
    weights.check(net)?;
    let ctx = Context {
        grid,
        net,
        weights,
        cfg,
        reference: stitch(grid)?,
        meta: ImageMeta::of_grid(grid),
        index: TrajectoryIndex::new(&cfg.codec),
    };
    let work = || variants.par_iter().map(|&v| ctx.row(v)).collect::<Result<Vec<_>>>();
    if cfg.jobs == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work)
    }
}

struct Context<'a> {
    grid: &'a PatchGrid,
    net: &'a NetConfig,
    weights: &'a Weights,
    cfg: &'a BenchConfig,
    reference: Image,
    meta: ImageMeta,
    index: TrajectoryIndex,
}

impl Context<'_> {
    fn container_len(&self, payload: Payload) -> Result<usize> {
        let file = ColiFile { meta: self.meta, net: self.net.clone(), payload };
        Ok(encode_file(&file)?.len())
    }

    fn hyper(&self, w: &Weights) -> Result<(Weights, usize)> {
        let a = compress_with(w, &self.cfg.codec, &self.index)?;
        let decoded = decompress(&a)?;
        Ok((decoded, self.container_len(Payload::Hyper(a))?))
    }

    fn row(&self, variant: Variant) -> Result<BenchRow> {
        let raw_len = self.container_len(Payload::RawWeights(self.weights.clone()))?;
        let overhead = raw_len - self.weights.to_bytes()?.len();
        let prune = Method::Prune { ratio: self.cfg.prune_ratio };
        let (decoded, bytes) = match variant {
            Variant::None => (self.weights.clone(), raw_len),
            Variant::Hc => self.hyper(self.weights)?,
            Variant::Prune => {
                let w = prune_l1(self.weights, self.cfg.prune_ratio)?;
                let len = overhead + sparse_len(&w);
                (w, len)
            }
            Variant::LowRank => {
                let (w, len) = lowrank_weights(self.weights, self.cfg.rank_fraction)?;
                (w, overhead + len)
            }
            Variant::Int8 => {
                let q = ptq_int8(self.weights)?;
                (dequant_int8(&q)?, overhead + q.encoded_len())
            }
            Variant::PruneHc => self.hyper(&apply(self.weights, prune)?)?,
            Variant::LowRankHc => self.hyper(&lowrank_weights(self.weights, self.cfg.rank_fraction)?.0)?,
        };
        let recon = reconstruct(&decoded, self.net, self.grid)?;
        let report = MetricsReport::measure(&self.reference, &recon, bytes as u64)?;
        Ok(BenchRow {
            variant,
            payload_bytes: bytes as u64,
            bpp: report.bpp,
            dense_bpp: bpp(raw_len as u64, self.meta.width, self.meta.height),
            psnr_db: report.psnr_db,
            ssim: report.ssim,
            ms_ssim: report.ms_ssim,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inr_net::{init_weights, Arch};
    use crate::pixel_io::split_patches;
    use crate::testimage;

    fn setup() -> (PatchGrid, NetConfig, Weights) {
        let img = testimage::scene(32, 32, 1, 0.0);
        let grid = split_patches(&img, 16, 16).unwrap();
        let net = Arch::Small.config(16, 1).unwrap();
        let w = init_weights(&net, 1).unwrap();
        (grid, net, w)
    }

    #[test]
    fn rows_come_back_in_fixed_order() {
        let (grid, net, w) = setup();
        let cfg = BenchConfig { jobs: 3, ..BenchConfig::default() };
        let rows = run(&grid, &net, &w, &cfg).unwrap();
        let labels: Vec<_> = rows.iter().map(|r| r.variant.label()).collect();
        assert_eq!(labels, ["none", "HC", "P", "LR", "Q", "P+HC", "LR+HC"]);
        let again = run(&grid, &net, &w, &BenchConfig { jobs: 1, ..cfg }).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn bpp_follows_payload_bytes() {
        let (grid, net, w) = setup();
        let rows = run(&grid, &net, &w, &BenchConfig::default()).unwrap();
        for r in &rows {
            assert_eq!(r.bpp, bpp(r.payload_bytes, 32, 32));
        }
        let by = |v: Variant| rows.iter().find(|r| r.variant == v).unwrap();
        assert_eq!(by(Variant::Hc).payload_bytes, by(Variant::PruneHc).payload_bytes);
        assert!(by(Variant::Hc).bpp < by(Variant::None).bpp / 3.3);
        assert!(by(Variant::Int8).bpp < by(Variant::None).bpp);
        assert_eq!(by(Variant::None).dense_bpp, by(Variant::None).bpp);
    }

    #[test]
    fn three_value_groups_undercut_int8() {
        let (grid, net, w) = setup();
        let codec = CodecConfig { group_size: 3, ..CodecConfig::default() };
        let cfg = BenchConfig { codec, ..BenchConfig::default() };
        let rows = run_variants(&grid, &net, &w, &cfg, &[Variant::Hc, Variant::Int8]).unwrap();
        assert!(rows[0].bpp < rows[1].bpp);
    }

    #[test]
    fn csv_and_json() {
        let (grid, net, w) = setup();
        let rows = run_variants(&grid, &net, &w, &BenchConfig::default(), &[Variant::None, Variant::PruneHc]).unwrap();
        let csv = to_csv(&rows);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[2].starts_with("P+HC,"));
        let parsed: Vec<BenchRow> = serde_json::from_str(&to_json(&rows)).unwrap();
        assert_eq!(parsed, rows);
        assert!(to_json(&rows).contains("\"P+HC\""));
    }
}
