//! Reference post-training compressors: magnitude pruning, symmetric INT8
//! quantization, truncated SVD, and k-means vector quantization, plus
//! stacking any of them in front of the trajectory codec.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypercodec::{compress, CodecConfig, HyperArtifact};
use crate::inr_net::{Param, Tensor, Weights};

/// Bytes of a tensor header in the shared weights layout: name length,
/// name, rank, dims.
fn tensor_header_len(name: &str, rank: usize) -> usize {
    2 + name.len() + 1 + 4 * rank
}

/// Zeroes the `floor(ratio * len)` smallest-magnitude entries of every
/// tensor. Among equal magnitudes the lower index is pruned first.
pub fn prune_l1(w: &Weights, ratio: f64) -> Result<Weights> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::Config(format!("pruning ratio {ratio} outside [0, 1)")));
    }
    Ok(w.map_tensors(|_, t| {
        let n_prune = (ratio * t.len() as f64).floor() as usize;
        let mut order: Vec<usize> = (0..t.len()).collect();
        let v = t.values();
        order.sort_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(a.cmp(&b)));
        let mut out = v.to_vec();
        for &i in &order[..n_prune] {
            out[i] = 0.0;
        }
        Tensor::new(t.shape().to_vec(), out).expect("shape unchanged")
    }))
}

/// Size of `w` stored sparsely: per tensor a header, a presence bitmap and
/// the nonzero values as f32, after a u32 tensor count.
pub fn sparse_len(w: &Weights) -> usize {
    4 + w
        .params()
        .iter()
        .map(|p| {
            let t = &p.tensor;
            let nonzero = t.values().iter().filter(|v| **v != 0.0).count();
            tensor_header_len(&p.name, t.shape().len()) + t.len().div_ceil(8) + 4 * nonzero
        })
        .sum::<usize>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub scale: f32,
    pub values: Vec<i8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Int8Weights {
    pub tensors: Vec<QuantizedTensor>,
}

impl Int8Weights {
    /// Stored size: u32 tensor count, then per tensor a header, the f32
    /// scale and one byte per value.
    pub fn encoded_len(&self) -> usize {
        4 + self.tensors.iter().map(|t| tensor_header_len(&t.name, t.shape.len()) + 4 + t.values.len()).sum::<usize>()
    }
}

/// Per-tensor symmetric quantization: `scale = max|w| / 127`,
/// `q = round(w / scale)` in `-127..=127`. All-zero tensors get scale 1.
pub fn ptq_int8(w: &Weights) -> Result<Int8Weights> {
    if !w.is_finite() {
        return Err(Error::NonFinite("weights passed to INT8 quantization".into()));
    }
    let tensors = w
        .params()
        .par_iter()
        .map(|p| {
            let v = p.tensor.values();
            let max_abs = v.iter().fold(0f32, |m, x| m.max(x.abs()));
            let scale = if max_abs == 0.0 { 1.0 } else { max_abs / 127.0 };
            let values = v.iter().map(|&x| (x / scale).round().clamp(-127.0, 127.0) as i8).collect();
            QuantizedTensor { name: p.name.clone(), shape: p.tensor.shape().to_vec(), scale, values }
        })
        .collect();
    Ok(Int8Weights { tensors })
}

pub fn dequant_int8(q: &Int8Weights) -> Result<Weights> {
    let params = q
        .tensors
        .iter()
        .map(|t| {
            let values = t.values.iter().map(|&v| v as f32 * t.scale).collect();
            Ok(Param { name: t.name.clone(), tensor: Tensor::new(t.shape.clone(), values)? })
        })
        .collect::<Result<_>>()?;
    Ok(Weights::new(params))
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() || rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("{rows}x{cols} matrix from {} values", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.get(r, c);
            }
        }
        Self { rows: self.cols, cols: self.rows, data }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Thin SVD `A = U diag(sigma) V^T`, singular values descending. `u` is
/// `rows x p`, `v` is `cols x p`, both column-major, with
/// `p = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub rows: usize,
    pub cols: usize,
    pub u: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub v: Vec<Vec<f64>>,
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided Jacobi SVD.
pub fn svd(a: &Matrix) -> Svd {
    if a.rows < a.cols {
        let t = svd(&a.transpose());
        return Svd { rows: a.rows, cols: a.cols, u: t.v, sigma: t.sigma, v: t.u };
    }
    let (m, n) = (a.rows, a.cols);
    let mut cols: Vec<Vec<f64>> = (0..n).map(|c| (0..m).map(|r| a.get(r, c)).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n).map(|c| (0..n).map(|r| if r == c { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|x| x * x).sum();
                let beta: f64 = cols[q].iter().map(|x| x * x).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(f64, usize)> =
        cols.iter().enumerate().map(|(j, c)| (c.iter().map(|x| x * x).sum::<f64>().sqrt(), j)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let sigma = order.iter().map(|o| o.0).collect();
    let u = order.iter().map(|&(s, j)| cols[j].iter().map(|x| if s > 0.0 { x / s } else { 0.0 }).collect()).collect();
    let v = order.iter().map(|&(_, j)| v[j].clone()).collect();
    Svd { rows: m, cols: n, u, sigma, v }
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    for (x, y) in head[p].iter_mut().zip(tail[0].iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Rank-`r` truncation of an SVD.
#[derive(Debug, Clone)]
pub struct LowRank {
    pub rows: usize,
    pub cols: usize,
    pub u: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub v: Vec<Vec<f64>>,
}

impl LowRank {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut data = vec![0.0; self.rows * self.cols];
        for ((u, &s), v) in self.u.iter().zip(&self.sigma).zip(&self.v) {
            for (r, &ur) in u.iter().enumerate() {
                let row = &mut data[r * self.cols..(r + 1) * self.cols];
                for (d, &vc) in row.iter_mut().zip(v) {
                    *d += s * ur * vc;
                }
            }
        }
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    /// Values needed to store the factors.
    pub fn stored_values(&self) -> usize {
        self.rank() * (self.rows + self.cols + 1)
    }
}

pub fn lowrank_svd(a: &Matrix, rank: usize) -> Result<LowRank> {
    let full = a.rows.min(a.cols);
    if rank == 0 || rank > full {
        return Err(Error::Config(format!("rank {rank} outside 1..={full}")));
    }
    let s = svd(a);
    Ok(LowRank {
        rows: a.rows,
        cols: a.cols,
        u: s.u[..rank].to_vec(),
        sigma: s.sigma[..rank].to_vec(),
        v: s.v[..rank].to_vec(),
    })
}

/// Weights with every matrix-like tensor (rank >= 2, viewed as
/// `shape[0] x rest`) replaced by its rank-`ceil(fraction * min dim)`
/// approximation, and the byte size of storing it. Tensors whose factors
/// would not be smaller than the dense tensor stay dense.
pub fn lowrank_weights(w: &Weights, rank_fraction: f64) -> Result<(Weights, usize)> {
    if !(rank_fraction > 0.0 && rank_fraction <= 1.0) {
        return Err(Error::Config(format!("rank fraction {rank_fraction} outside (0, 1]")));
    }
    let results = w
        .params()
        .par_iter()
        .map(|p| {
            let t = &p.tensor;
            let header = tensor_header_len(&p.name, t.shape().len()) + 1;
            if t.shape().len() < 2 {
                return Ok((t.clone(), header + 4 * t.len()));
            }
            let rows = t.shape()[0];
            let cols = t.len() / rows;
            let rank = ((rank_fraction * rows.min(cols) as f64).ceil() as usize).clamp(1, rows.min(cols));
            let m = Matrix::new(rows, cols, t.values().iter().map(|&v| v as f64).collect())?;
            let lr = lowrank_svd(&m, rank)?;
            if lr.stored_values() >= t.len() {
                return Ok((t.clone(), header + 4 * t.len()));
            }
            let values = lr.reconstruct().data.iter().map(|&v| v as f32).collect();
            Ok((Tensor::new(t.shape().to_vec(), values)?, header + 4 + 4 * lr.stored_values()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut bytes = 4;
    let params = w
        .params()
        .iter()
        .zip(results)
        .map(|(p, (tensor, len))| {
            bytes += len;
            Param { name: p.name.clone(), tensor }
        })
        .collect();
    Ok((Weights::new(params), bytes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub dim: usize,
    pub codewords: Vec<Vec<f64>>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }
}

const KMEANS_MAX_ITERS: usize = 100;
const KMEANS_TOL: f64 = 1e-6;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// 0-based nearest codeword, smallest on ties.
fn nearest(z: &[f64], codewords: &[Vec<f64>]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, c) in codewords.iter().enumerate() {
        let d = sq_dist(z, c);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// k-means with k-means++ seeding.
pub fn vq_train(vectors: &[Vec<f64>], k: usize, seed: u64) -> Result<Codebook> {
    let Some(first) = vectors.first() else {
        return Err(Error::Config("no vectors to train a codebook on".into()));
    };
    let dim = first.len();
    if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Shape("training vectors must share a nonzero dimension".into()));
    }
    if k == 0 || k > vectors.len() {
        return Err(Error::Config(format!("codebook size {k} outside 1..={}", vectors.len())));
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("training vector".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![vectors[rng.random_range(0..vectors.len())].clone()];
    let mut d2: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..vectors.len())
        };
        centers.push(vectors[pick].clone());
        for (d, v) in d2.iter_mut().zip(vectors) {
            *d = d.min(sq_dist(v, &centers[centers.len() - 1]));
        }
    }
    for _ in 0..KMEANS_MAX_ITERS {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for v in vectors {
            let c = nearest(v, &centers);
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(v) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for ((center, sum), &count) in centers.iter_mut().zip(sums).zip(&counts) {
            if count == 0 {
                continue;
            }
            let updated: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
            shift = shift.max(sq_dist(center, &updated).sqrt());
            *center = updated;
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    Ok(Codebook { dim, codewords: centers })
}

/// 1-based index of the codeword nearest to `z` in Euclidean distance.
pub fn vq_encode(z: &[f64], cb: &Codebook) -> Result<usize> {
    if z.len() != cb.dim {
        return Err(Error::Shape(format!("vector of length {} for codebook of dim {}", z.len(), cb.dim)));
    }
    if cb.is_empty() {
        return Err(Error::Config("empty codebook".into()));
    }
    Ok(nearest(z, &cb.codewords) + 1)
}

pub fn vq_decode(index: usize, cb: &Codebook) -> Result<&[f64]> {
    index
        .checked_sub(1)
        .and_then(|i| cb.codewords.get(i))
        .map(Vec::as_slice)
        .ok_or_else(|| Error::Config(format!("codeword index {index} outside 1..={}", cb.len())))
}

/// Compressor applied before the trajectory codec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "method")]
pub enum Method {
    Identity,
    Prune { ratio: f64 },
    LowRank { rank_fraction: f64 },
    Int8,
}

pub fn apply(w: &Weights, method: Method) -> Result<Weights> {
    match method {
        Method::Identity => Ok(w.clone()),
        Method::Prune { ratio } => prune_l1(w, ratio),
        Method::LowRank { rank_fraction } => lowrank_weights(w, rank_fraction).map(|(w, _)| w),
        Method::Int8 => dequant_int8(&ptq_int8(w)?),
    }
}

/// `first`, then the trajectory codec on its output.
pub fn stack(w: &Weights, first: Method, then_hc: &CodecConfig) -> Result<HyperArtifact> {
    compress(&apply(w, first)?, then_hc)
}
