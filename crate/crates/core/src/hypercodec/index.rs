//! Exact nearest-trajectory-point lookup.
//!
//! All `K` trajectory points are bucketed into a uniform grid over
//! `[0, 1]^G`. A query scans Chebyshev shells of cells outward from its own
//! cell and stops once the next shell cannot hold a point closer than the
//! best found. The result is identical to the exhaustive scan in
//! [`search_theta`](super::search_theta), ties included.

use super::{distance, trajectory, CodecConfig, ErrorNorm};

/// Grids are only used up to this group size; beyond it shells grow too
/// fast and a flat scan is cheaper.
const MAX_GRID_DIMS: usize = 3;

/// Absorbs rounding in cell assignment when bounding shell distances.
const SHELL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct TrajectoryIndex {
    group_size: usize,
    k_bits: u32,
    norm: ErrorNorm,
    cells: usize,
    /// `points[k * G + n]` is coordinate `n` of trajectory index `k`.
    points: Vec<f64>,
    /// CSR layout: indices of cell `c` are `order[starts[c]..starts[c + 1]]`,
    /// ascending.
    starts: Vec<u32>,
    order: Vec<u32>,
}

impl TrajectoryIndex {
    pub fn new(cfg: &CodecConfig) -> Self {
        let g = cfg.group_size;
        let k_count = cfg.k_max() as usize + 1;
        let cells =
            if g <= MAX_GRID_DIMS { ((k_count as f64).powf(1.0 / g as f64).floor() as usize).max(1) } else { 1 };
        let mut points = Vec::with_capacity(k_count * g);
        for k in 0..k_count as u32 {
            points.extend((1..=g).map(|n| trajectory(k, n)));
        }
        let n_cells = cells.pow(g as u32);
        let cell_ids: Vec<usize> = points.chunks_exact(g).map(|p| cell_id(p, cells)).collect();
        let mut starts = vec![0u32; n_cells + 1];
        for &c in &cell_ids {
            starts[c + 1] += 1;
        }
        for c in 0..n_cells {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut order = vec![0u32; k_count];
        for (k, &c) in cell_ids.iter().enumerate() {
            order[fill[c] as usize] = k as u32;
            fill[c] += 1;
        }
        Self { group_size: g, k_bits: cfg.k_bits, norm: cfg.error_norm, cells, points, starts, order }
    }

    pub fn matches(&self, cfg: &CodecConfig) -> bool {
        self.group_size == cfg.group_size && self.k_bits == cfg.k_bits && self.norm == cfg.error_norm
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    /// Nearest trajectory index to `group` and its error; smallest index on
    /// ties.
    pub fn search(&self, group: &[f64]) -> (u32, f64) {
        let g = self.group_size;
        assert_eq!(group.len(), g, "group length does not match the index");
        let home: Vec<usize> = group.iter().map(|&v| axis_cell(v, self.cells)).collect();
        let mut best = (f64::INFINITY, u32::MAX);
        let mut lo = vec![0usize; g];
        let mut hi = vec![0usize; g];
        let mut cur = vec![0usize; g];
        for r in 0..self.cells {
            if r >= 1 && (r - 1) as f64 / self.cells as f64 > best.0 + SHELL_SLACK {
                break;
            }
            for d in 0..g {
                lo[d] = home[d].saturating_sub(r);
                hi[d] = (home[d] + r).min(self.cells - 1);
            }
            cur.copy_from_slice(&lo);
            loop {
                let on_shell = cur.iter().zip(&home).any(|(&c, &h)| c.abs_diff(h) == r);
                if on_shell {
                    self.scan_cell(&cur, group, &mut best);
                }
                if !advance(&mut cur, &lo, &hi) {
                    break;
                }
            }
        }
        (best.1, best.0)
    }

    fn scan_cell(&self, cell: &[usize], group: &[f64], best: &mut (f64, u32)) {
        let c = cell.iter().fold(0, |acc, &x| acc * self.cells + x);
        let g = self.group_size;
        for &k in &self.order[self.starts[c] as usize..self.starts[c + 1] as usize] {
            let point = &self.points[k as usize * g..(k as usize + 1) * g];
            let err = distance(group, point, self.norm);
            if err < best.0 || (err == best.0 && k < best.1) {
                *best = (err, k);
            }
        }
    }
}

#[inline]
fn axis_cell(v: f64, cells: usize) -> usize {
    ((v * cells as f64).floor().max(0.0) as usize).min(cells - 1)
}

fn cell_id(point: &[f64], cells: usize) -> usize {
    point.iter().fold(0, |acc, &v| acc * cells + axis_cell(v, cells))
}

/// Odometer step over the box `lo..=hi`; false once exhausted.
fn advance(cur: &mut [usize], lo: &[usize], hi: &[usize]) -> bool {
    for d in (0..cur.len()).rev() {
        if cur[d] < hi[d] {
            cur[d] += 1;
            return true;
        }
        cur[d] = lo[d];
    }
    false
}
