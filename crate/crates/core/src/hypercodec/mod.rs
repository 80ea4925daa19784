//! Trajectory coding of network weights.
//!
//! Each layer is affinely mapped into `[lo, hi]`, cut into groups of `G`
//! values, and every group is replaced by one integer `k` whose point on the
//! trajectory `(frac(k a_1), .., frac(k a_G))`, with `a_n = 1 / (pi + n)`,
//! is closest to the group. Groups with a wide spread are first pulled
//! toward the range midpoint by one of four scaling classes. Decoding is a
//! closed-form evaluation per group.

mod format;
mod index;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use format::estimate_len;
pub use index::TrajectoryIndex;

use crate::error::{Error, Result};
use crate::inr_net::{Param, Tensor, Weights};

pub const CLASS_COUNT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorNorm {
    #[default]
    Linf,
    L2,
}

impl ErrorNorm {
    pub fn tag(self) -> u8 {
        match self {
            ErrorNorm::Linf => 0,
            ErrorNorm::L2 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(ErrorNorm::Linf),
            1 => Ok(ErrorNorm::L2),
            t => Err(Error::Malformed(format!("unknown error norm tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub group_size: usize,
    /// Width of the stored index; `k` ranges over `0..2^k_bits`.
    pub k_bits: u32,
    pub target_range: (f32, f32),
    pub class_factors: [f32; CLASS_COUNT],
    pub error_norm: ErrorNorm,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            group_size: 2,
            k_bits: 16,
            target_range: (0.05, 0.95),
            class_factors: [1.0, 0.5, 0.25, 0.125],
            error_norm: ErrorNorm::Linf,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.group_size) {
            return Err(Error::Config(format!("group size {} outside 1..=8", self.group_size)));
        }
        if ![8, 12, 16].contains(&self.k_bits) {
            return Err(Error::Config(format!("k_bits {} not one of 8, 12, 16", self.k_bits)));
        }
        let (lo, hi) = self.target_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::Config(format!("target range [{lo}, {hi}] not inside [0, 1]")));
        }
        if self.class_factors.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::Config(format!("class factors {:?} must be positive", self.class_factors)));
        }
        Ok(())
    }

    pub fn k_max(&self) -> u32 {
        (1u32 << self.k_bits) - 1
    }

    /// Bits per stored group: the index plus a 2-bit class.
    pub fn record_bits(&self) -> usize {
        self.k_bits as usize + 2
    }

    fn lo(&self) -> f64 {
        self.target_range.0 as f64
    }

    fn hi(&self) -> f64 {
        self.target_range.1 as f64
    }

    fn span(&self) -> f64 {
        self.hi() - self.lo()
    }

    fn factor(&self, class_id: u8) -> f64 {
        self.class_factors[class_id as usize] as f64
    }
}

/// Fractional part `z - floor(z)`, always in `[0, 1)`.
pub fn tau(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::NonFinite(format!("tau of {z}")));
    }
    Ok(frac(z).min(BELOW_ONE))
}

const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[inline]
fn frac(z: f64) -> f64 {
    z - z.floor()
}

/// Trajectory direction `a_n = 1 / (pi + n)` for 1-based position `n`.
pub fn basis(n: usize) -> f64 {
    1.0 / (PI + n as f64)
}

/// Point `n` (1-based) of the trajectory at index `k`.
#[inline]
pub fn trajectory(k: u32, n: usize) -> f64 {
    frac(k as f64 * basis(n))
}

/// A layer mapped into the codec's target range.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    pub min: f32,
    pub max: f32,
    /// All inputs equal; `values` are then all `lo` and carry no information.
    pub constant: bool,
}

pub fn normalize_layer(values: &[f32], cfg: &CodecConfig) -> Result<Normalized> {
    if values.is_empty() {
        return Err(Error::Shape("cannot normalize an empty layer".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("weight {v}")));
    }
    let min = values.iter().copied().fold(f32::INFINITY, f32::min);
    let max = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let constant = min == max;
    let (lo, span) = (cfg.lo(), cfg.span());
    let values = if constant {
        vec![lo; values.len()]
    } else {
        let scale = span / (max as f64 - min as f64);
        values.iter().map(|&w| (lo + (w as f64 - min as f64) * scale).clamp(lo, cfg.hi())).collect()
    };
    Ok(Normalized { values, min, max, constant })
}

pub fn denormalize(v: f64, min: f32, max: f32, cfg: &CodecConfig) -> f32 {
    if min == max {
        return min;
    }
    (min as f64 + (v - cfg.lo()) * (max as f64 - min as f64) / cfg.span()) as f32
}

/// Smallest class whose factor brings the group's largest deviation from
/// its mean within a quarter of the target range; class 0 if none does.
pub fn select_class(group: &[f64], cfg: &CodecConfig) -> u8 {
    let mean = group.iter().sum::<f64>() / group.len() as f64;
    let spread = group.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let limit = cfg.span() / 4.0 * (1.0 + 1e-12);
    (0..CLASS_COUNT as u8).find(|&s| spread * cfg.factor(s) <= limit).unwrap_or(0)
}

/// Pulls `v` toward 0.5 by the class factor.
#[inline]
pub fn shrink(v: f64, factor: f64) -> f64 {
    0.5 + (v - 0.5) * factor
}

/// Inverse of [`shrink`].
#[inline]
pub fn expand(v: f64, factor: f64) -> f64 {
    0.5 + (v - 0.5) / factor
}

/// Distance between `values` and the trajectory point given as `point`.
#[inline]
pub(crate) fn distance(values: &[f64], point: &[f64], norm: ErrorNorm) -> f64 {
    let diffs = values.iter().zip(point).map(|(v, p)| (v - p).abs());
    match norm {
        ErrorNorm::Linf => diffs.fold(0.0, f64::max),
        ErrorNorm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
    }
}

/// Error of index `k` against `group` under `norm`.
pub fn group_error(group: &[f64], k: u32, norm: ErrorNorm) -> f64 {
    let point: Vec<f64> = (1..=group.len()).map(|n| trajectory(k, n)).collect();
    distance(group, &point, norm)
}

/// Exhaustive scan over every `k` in `0..=k_max`. Returns the first index
/// reaching the minimal error, and that error.
pub fn search_theta(group: &[f64], cfg: &CodecConfig) -> (u32, f64) {
    let mut point = vec![0.0; group.len()];
    let mut best = (0, f64::INFINITY);
    for k in 0..=cfg.k_max() {
        for (n, p) in point.iter_mut().enumerate() {
            *p = trajectory(k, n + 1);
        }
        let err = distance(group, &point, cfg.error_norm);
        if err < best.1 {
            best = (k, err);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupRecord {
    pub k: u32,
    pub class_id: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub min: f32,
    pub max: f32,
    pub constant: bool,
    pub groups: Vec<GroupRecord>,
    /// Trailing `len % G` values, verbatim.
    pub tail: Vec<f32>,
}

impl LayerRecord {
    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperArtifact {
    pub config: CodecConfig,
    pub total_params: u64,
    pub layers: Vec<LayerRecord>,
}

/// Encodes one normalized group. Returns the record and its achieved
/// error in the shrunk domain.
pub fn encode_group(group: &[f64], cfg: &CodecConfig, index: &TrajectoryIndex) -> (GroupRecord, f64) {
    let class_id = select_class(group, cfg);
    let factor = cfg.factor(class_id);
    let shrunk: Vec<f64> = group.iter().map(|&v| shrink(v, factor)).collect();
    let (k, err) = index.search(&shrunk);
    (GroupRecord { k, class_id }, err)
}

/// Encodes one tensor. Also returns the per-group errors in the shrunk
/// domain, in group order.
pub fn encode_layer(
    name: &str,
    tensor: &Tensor<f32>,
    cfg: &CodecConfig,
    index: &TrajectoryIndex,
) -> Result<(LayerRecord, Vec<f64>)> {
    let g = cfg.group_size;
    let norm = normalize_layer(tensor.values(), cfg)?;
    let mut record = LayerRecord {
        name: name.to_string(),
        shape: tensor.shape().to_vec(),
        min: norm.min,
        max: norm.max,
        constant: norm.constant,
        groups: Vec::new(),
        tail: Vec::new(),
    };
    if norm.constant {
        return Ok((record, Vec::new()));
    }
    let (groups, errors): (Vec<_>, Vec<_>) =
        norm.values.par_chunks_exact(g).map(|group| encode_group(group, cfg, index)).unzip();
    record.groups = groups;
    let full = tensor.len() - tensor.len() % g;
    record.tail = tensor.values()[full..].to_vec();
    Ok((record, errors))
}

pub fn compress(w: &Weights, cfg: &CodecConfig) -> Result<HyperArtifact> {
    cfg.validate()?;
    let index = TrajectoryIndex::new(cfg);
    compress_with(w, cfg, &index)
}

/// [`compress`] reusing a prebuilt index.
pub fn compress_with(w: &Weights, cfg: &CodecConfig, index: &TrajectoryIndex) -> Result<HyperArtifact> {
    cfg.validate()?;
    if !index.matches(cfg) {
        return Err(Error::Config("trajectory index built for a different codec config".into()));
    }
    let layers = w
        .params()
        .iter()
        .map(|p| encode_layer(&p.name, &p.tensor, cfg, index).map(|(r, _)| r))
        .collect::<Result<_>>()?;
    Ok(HyperArtifact { config: cfg.clone(), total_params: w.total_params() as u64, layers })
}

/// Values of one layer, decoded.
pub fn decode_layer(layer: &LayerRecord, cfg: &CodecConfig) -> Result<Vec<f32>> {
    let len = layer.element_count();
    if layer.constant {
        return Ok(vec![layer.min; len]);
    }
    let g = cfg.group_size;
    if layer.groups.len() != len / g || layer.tail.len() != len % g {
        return Err(Error::Malformed(format!(
            "layer {}: {} groups and {} tail values for {len} elements",
            layer.name,
            layer.groups.len(),
            layer.tail.len()
        )));
    }
    let mut out = Vec::with_capacity(len);
    for rec in &layer.groups {
        if rec.k > cfg.k_max() || rec.class_id as usize >= CLASS_COUNT {
            return Err(Error::Malformed(format!("layer {}: record {rec:?} out of range", layer.name)));
        }
        let factor = cfg.factor(rec.class_id);
        out.extend((1..=g).map(|n| {
            let v = expand(trajectory(rec.k, n), factor);
            denormalize(v, layer.min, layer.max, cfg)
        }));
    }
    out.extend_from_slice(&layer.tail);
    Ok(out)
}

pub fn decompress(a: &HyperArtifact) -> Result<Weights> {
    a.config.validate()?;
    let params = a
        .layers
        .par_iter()
        .map(|layer| {
            let values = decode_layer(layer, &a.config)?;
            Ok(Param { name: layer.name.clone(), tensor: Tensor::new(layer.shape.clone(), values)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let w = Weights::new(params);
    if w.total_params() as u64 != a.total_params {
        return Err(Error::Malformed(format!(
            "artifact declares {} parameters, layers hold {}",
            a.total_params,
            w.total_params()
        )));
    }
    Ok(w)
}

/// Largest per-weight deviation a group can have after decoding, given its
/// shrunk-domain error.
pub fn weight_error_bound(err: f64, layer: &LayerRecord, class_id: u8, cfg: &CodecConfig) -> f64 {
    err * (layer.max as f64 - layer.min as f64) / (cfg.span() * cfg.factor(class_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg_bits(k_bits: u32) -> CodecConfig {
        CodecConfig { k_bits, ..CodecConfig::default() }
    }

    fn tensor(shape: Vec<usize>, values: Vec<f32>) -> Tensor<f32> {
        Tensor::new(shape, values).unwrap()
    }

    fn random_weights(seed: u64, shapes: &[(&str, Vec<usize>)]) -> Weights {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Weights::new(
            shapes
                .iter()
                .map(|(name, shape)| {
                    let n = shape.iter().product();
                    let values = (0..n).map(|_| rng.random_range(-0.8f32..0.8)).collect();
                    Param { name: name.to_string(), tensor: tensor(shape.clone(), values) }
                })
                .collect(),
        )
    }

    #[test]
    fn tau_is_fractional_part() {
        assert_eq!(tau(1.25).unwrap(), 0.25);
        assert_eq!(tau(3.0).unwrap(), 0.0);
        for k in 0..1000 {
            assert_eq!(tau(k as f64).unwrap(), 0.0);
        }
        assert!(tau(-1e-300).unwrap() < 1.0);
        assert!(matches!(tau(f64::NAN), Err(Error::NonFinite(_))));
        assert!(tau(f64::INFINITY).is_err());
    }

    #[test]
    fn basis_values() {
        assert!((basis(1) - 0.241_453_007_005_223_87).abs() < 1e-15);
        assert!((basis(2) - 0.194_492_264_824_171_37).abs() < 1e-15);
        assert!((1..9).all(|n| basis(n + 1) < basis(n)));
    }

    #[test]
    fn normalize_maps_endpoints_and_midpoint() {
        let cfg = CodecConfig::default();
        let n = normalize_layer(&[-1.0, 0.0, 1.0], &cfg).unwrap();
        let want = [0.05, 0.5, 0.95];
        for (v, w) in n.values.iter().zip(want) {
            assert!((v - w).abs() < 1e-7, "{v} vs {w}");
        }
        assert_eq!((n.min, n.max, n.constant), (-1.0, 1.0, false));
        for (&v, w) in n.values.iter().zip([-1.0f32, 0.0, 1.0]) {
            assert_eq!(denormalize(v, n.min, n.max, &cfg), w);
        }
    }

    #[test]
    fn constant_layer_has_no_groups() {
        let cfg = CodecConfig::default();
        let n = normalize_layer(&[0.7, 0.7], &cfg).unwrap();
        assert!(n.constant);
        let index = TrajectoryIndex::new(&cfg);
        let (rec, errs) = encode_layer("c", &tensor(vec![2], vec![0.7, 0.7]), &cfg, &index).unwrap();
        assert!(rec.constant && rec.groups.is_empty() && rec.tail.is_empty() && errs.is_empty());
        assert_eq!(decode_layer(&rec, &cfg).unwrap(), vec![0.7, 0.7]);
    }

    #[test]
    fn normalize_rejects_bad_input() {
        let cfg = CodecConfig::default();
        assert!(matches!(normalize_layer(&[], &cfg), Err(Error::Shape(_))));
        assert!(matches!(normalize_layer(&[1.0, f32::NAN], &cfg), Err(Error::NonFinite(_))));
    }

    #[test]
    fn class_rule() {
        let cfg = CodecConfig::default();
        assert_eq!(select_class(&[0.3, 0.3], &cfg), 0);
        assert_eq!(select_class(&[0.4, 0.6], &cfg), 0);
        // Full-range pair: spread 0.45 needs factor 1/2 to reach 0.225.
        assert_eq!(select_class(&[cfg.lo(), cfg.hi()], &cfg), 1);
        // Spread beyond what any factor covers falls back to class 0.
        let tight = CodecConfig { target_range: (0.45, 0.55), ..cfg };
        assert_eq!(select_class(&[0.0, 1.0], &tight), 0);
        assert_eq!(select_class(&[0.3, 0.7], &tight), 3);
    }

    #[test]
    fn shrink_then_expand_is_identity() {
        for &f in &[1.0, 0.5, 0.25, 0.125] {
            for &v in &[0.0, 0.05, 0.3, 0.5, 0.95, 1.0] {
                assert!((expand(shrink(v, f), f) - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn search_finds_zero_group() {
        let (k, err) = search_theta(&[0.0, 0.0], &CodecConfig::default());
        assert_eq!((k, err), (0, 0.0));
    }

    #[test]
    fn search_recovers_trajectory_point() {
        let cfg = CodecConfig::default();
        let group = [tau(7.0 * basis(1)).unwrap(), tau(7.0 * basis(2)).unwrap()];
        assert_eq!(search_theta(&group, &cfg), (7, 0.0));
        assert_eq!(TrajectoryIndex::new(&cfg).search(&group), (7, 0.0));
    }

    #[test]
    fn random_groups_are_close() {
        let cfg = CodecConfig::default();
        let index = TrajectoryIndex::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let g = [rng.random::<f64>(), rng.random::<f64>()];
            let (_, err) = index.search(&g);
            worst = worst.max(err);
        }
        assert!(worst <= 0.02, "worst error {worst}");
    }

    #[test]
    fn error_shrinks_with_more_index_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let groups: Vec<[f64; 2]> = (0..300).map(|_| [rng.random(), rng.random()]).collect();
        let mean = |bits| {
            let index = TrajectoryIndex::new(&cfg_bits(bits));
            groups.iter().map(|g| index.search(g).1).sum::<f64>() / groups.len() as f64
        };
        let (m8, m12, m16) = (mean(8), mean(12), mean(16));
        assert!(m16 < m12 && m12 < m8, "{m8} {m12} {m16}");
    }

    #[test]
    fn round_trip_respects_error_bound() {
        let cfg = CodecConfig::default();
        let index = TrajectoryIndex::new(&cfg);
        let w = random_weights(3, &[("a", vec![7, 5]), ("b", vec![9])]);
        for p in w.params() {
            let (rec, errs) = encode_layer(&p.name, &p.tensor, &cfg, &index).unwrap();
            let out = decode_layer(&rec, &cfg).unwrap();
            let g = cfg.group_size;
            for (i, (&orig, &dec)) in p.tensor.values().iter().zip(&out).enumerate() {
                let gi = i / g;
                if gi < rec.groups.len() {
                    let bound = weight_error_bound(errs[gi], &rec, rec.groups[gi].class_id, &cfg);
                    let slack = 1e-6 * (rec.max - rec.min) as f64;
                    assert!(((orig - dec) as f64).abs() <= bound + slack, "{i}: {orig} {dec} {bound}");
                } else {
                    assert_eq!(orig, dec);
                }
            }
        }
    }

    #[test]
    fn compress_round_trip_is_deterministic() {
        let cfg = CodecConfig::default();
        let w = random_weights(9, &[("fc0.weight", vec![16, 4]), ("fc0.bias", vec![16]), ("odd", vec![3, 3])]);
        let a = compress(&w, &cfg).unwrap();
        assert_eq!(a.total_params, 89);
        assert_eq!(a.layers[2].groups.len(), 4);
        assert_eq!(a.layers[2].tail, vec![w.params()[2].tensor.values()[8]]);
        let d1 = decompress(&a).unwrap();
        let d2 = decompress(&a).unwrap();
        assert_eq!(d1, d2);
        for (p, q) in w.params().iter().zip(d1.params()) {
            assert_eq!(p.name, q.name);
            assert_eq!(p.tensor.shape(), q.tensor.shape());
        }
    }

    #[test]
    fn constant_model_stores_headers_only() {
        let w = Weights::new(vec![
            Param { name: "a".into(), tensor: tensor(vec![4, 4], vec![0.25; 16]) },
            Param { name: "b".into(), tensor: tensor(vec![3], vec![0.0; 3]) },
        ]);
        let a = compress(&w, &CodecConfig::default()).unwrap();
        assert!(a.layers.iter().all(|l| l.constant && l.groups.is_empty() && l.tail.is_empty()));
        assert_eq!(decompress(&a).unwrap(), w);
    }

    #[test]
    fn config_validation() {
        assert!(CodecConfig::default().validate().is_ok());
        for bad in [
            CodecConfig { group_size: 0, ..CodecConfig::default() },
            CodecConfig { group_size: 9, ..CodecConfig::default() },
            CodecConfig { k_bits: 10, ..CodecConfig::default() },
            CodecConfig { target_range: (0.5, 0.5), ..CodecConfig::default() },
            CodecConfig { target_range: (-0.1, 0.5), ..CodecConfig::default() },
            CodecConfig { class_factors: [1.0, 0.0, 0.5, 0.5], ..CodecConfig::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn decode_rejects_inconsistent_records() {
        let cfg = CodecConfig::default();
        let rec = LayerRecord {
            name: "x".into(),
            shape: vec![5],
            min: 0.0,
            max: 1.0,
            constant: false,
            groups: vec![GroupRecord { k: 1, class_id: 0 }],
            tail: vec![0.0],
        };
        assert!(matches!(decode_layer(&rec, &cfg), Err(Error::Malformed(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn index_matches_exhaustive_scan(
            a in 0.0f64..=1.0, b in 0.0f64..=1.0, bits in prop::sample::select(vec![8u32, 12, 16]),
        ) {
            let cfg = cfg_bits(bits);
            let index = TrajectoryIndex::new(&cfg);
            prop_assert_eq!(index.search(&[a, b]), search_theta(&[a, b], &cfg));
        }

        #[test]
        fn index_matches_scan_other_group_sizes(
            vals in prop::collection::vec(0.0f64..=1.0, 1..=4),
            l2 in any::<bool>(),
        ) {
            let cfg = CodecConfig {
                group_size: vals.len(),
                k_bits: 12,
                error_norm: if l2 { ErrorNorm::L2 } else { ErrorNorm::Linf },
                ..CodecConfig::default()
            };
            let index = TrajectoryIndex::new(&cfg);
            prop_assert_eq!(index.search(&vals), search_theta(&vals, &cfg));
        }

        #[test]
        fn more_bits_never_hurt(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let e = |bits| search_theta(&[a, b], &cfg_bits(bits)).1;
            prop_assert!(e(16) <= e(12));
            prop_assert!(e(12) <= e(8));
        }

        #[test]
        fn groups_are_independent(seed in any::<u64>(), n_groups in 2usize..12, tail in 0usize..2) {
            let cfg = CodecConfig::default();
            let index = TrajectoryIndex::new(&cfg);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let len = n_groups * 2 + tail;
            let values: Vec<f32> = (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let mut perm: Vec<usize> = (0..n_groups).collect();
            perm.reverse();
            perm.rotate_left(seed as usize % n_groups);
            let mut permuted = Vec::with_capacity(len);
            for &g in &perm {
                permuted.extend_from_slice(&values[2 * g..2 * g + 2]);
            }
            permuted.extend_from_slice(&values[2 * n_groups..]);
            let (r1, _) = encode_layer("x", &tensor(vec![len], values), &cfg, &index).unwrap();
            let (r2, _) = encode_layer("x", &tensor(vec![len], permuted), &cfg, &index).unwrap();
            let expected: Vec<GroupRecord> = perm.iter().map(|&g| r1.groups[g]).collect();
            prop_assert_eq!(r2.groups, expected);
        }
    }
}
