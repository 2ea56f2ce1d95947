//! Pan-tilt regression forest.
//!
//! Each tree maps a patch descriptor to a ray. Split nodes test a single
//! descriptor dimension against a threshold; leaves keep the mean
//! descriptor and mean ray of the training samples that reached them. At
//! query time a leaf prediction is kept only if the query lies within the
//! forest's feature-distance threshold of the leaf mean descriptor.

use std::io::Write;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Vector2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::PtzParams;
use crate::ray::{pixel_to_ray_exact, Ray};
use crate::rng;

const MAGIC: &[u8; 4] = b"PTFR";
const FORMAT_VERSION: u32 = 1;

/// Fixed-length patch descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Descriptor(Vec<f64>);

impl Descriptor {
    pub fn new(values: Vec<f64>) -> Result<Self, ForestError> {
        if values.is_empty() {
            return Err(ForestError::EmptyDescriptor);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ForestError::NonFiniteDescriptor);
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Squared Euclidean distance.
    pub fn distance_squared(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub descriptor: Descriptor,
    pub ray: Ray,
}

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("descriptor is empty")]
    EmptyDescriptor,
    #[error("descriptor contains non-finite values")]
    NonFiniteDescriptor,
    #[error("need at least {required} training samples, got {got}")]
    TooFewSamples { required: usize, got: usize },
    #[error("descriptor dimension {got} does not match {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid forest configuration: {0}")]
    InvalidConfig(String),
    #[error("forest stream is empty")]
    EmptyStream,
    #[error("not a forest stream (bad magic)")]
    BadMagic,
    #[error("unsupported forest format version {0}")]
    UnsupportedVersion(u32),
    #[error("forest stream is truncated")]
    Truncated,
    #[error("corrupt forest stream: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Training parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub tree_count: usize,
    pub max_depth: usize,
    /// Nodes with fewer samples become leaves.
    pub min_samples: usize,
    pub candidates_per_node: usize,
    pub bootstrap: bool,
    pub seed: u64,
    /// Fixed gating threshold; calibrated from held-out samples when `None`.
    pub feature_distance_threshold: Option<f64>,
    /// Percentile of held-out leaf distances used for calibration.
    pub threshold_percentile: f64,
    /// A held-out prediction counts as correct below this angular error.
    pub calibration_tolerance_deg: f64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            tree_count: 5,
            max_depth: 20,
            min_samples: 5,
            candidates_per_node: 64,
            bootstrap: true,
            seed: 0,
            feature_distance_threshold: None,
            threshold_percentile: 0.9,
            calibration_tolerance_deg: 0.5,
        }
    }
}

impl ForestConfig {
    fn validate(&self) -> Result<(), ForestError> {
        let bad = |m: &str| Err(ForestError::InvalidConfig(m.to_string()));
        if self.tree_count == 0 {
            return bad("tree_count must be at least 1");
        }
        if self.min_samples == 0 {
            return bad("min_samples must be at least 1");
        }
        if self.candidates_per_node == 0 {
            return bad("candidates_per_node must be at least 1");
        }
        if !(self.threshold_percentile > 0.0 && self.threshold_percentile <= 1.0) {
            return bad("threshold_percentile must be in (0, 1]");
        }
        if let Some(t) = self.feature_distance_threshold {
            if !(t.is_finite() && t > 0.0) {
                return bad("feature_distance_threshold must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub mean_descriptor: Vec<f64>,
    pub mean_ray: Ray,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(Leaf),
}

/// One regression tree stored as a flat node array with the root at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PanTiltTree {
    nodes: Vec<Node>,
}

impl PanTiltTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Index of the leaf reached by `d`.
    pub fn leaf_index(&self, d: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if d[*feature] < *threshold { *left } else { *right };
                }
                Node::Leaf(_) => return i,
            }
        }
    }

    pub fn leaf(&self, d: &[f64]) -> &Leaf {
        match &self.nodes[self.leaf_index(d)] {
            Node::Leaf(l) => l,
            Node::Split { .. } => unreachable!("leaf_index stops at leaves"),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// One tree's vote for a query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreePrediction {
    pub tree: usize,
    pub ray: Ray,
    /// Squared distance between the query and the leaf mean descriptor.
    pub feature_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanTiltForest {
    trees: Vec<PanTiltTree>,
    dimension: usize,
    feature_distance_threshold: f64,
    config: ForestConfig,
}

/// Sum of squared deviations of rays from their mean, from running sums.
fn sse(n: f64, sum: Vector2<f64>, sum_sq: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        (sum_sq - sum.norm_squared() / n).max(0.0)
    }
}

/// Variance-reduction gain of splitting `samples[idx]` on `feature < threshold`,
/// computed by brute force from the partition.
pub fn split_gain(samples: &[TrainingSample], idx: &[usize], feature: usize, threshold: f64) -> f64 {
    let stats = |ids: &mut dyn Iterator<Item = &usize>| {
        let mut n = 0.0;
        let mut sum = Vector2::zeros();
        let mut sq = 0.0;
        for &i in ids {
            let r = samples[i].ray.as_vector();
            n += 1.0;
            sum += r;
            sq += r.norm_squared();
        }
        sse(n, sum, sq)
    };
    let parent = stats(&mut idx.iter());
    let left = stats(&mut idx.iter().filter(|&&i| samples[i].descriptor.0[feature] < threshold));
    let right = stats(&mut idx.iter().filter(|&&i| samples[i].descriptor.0[feature] >= threshold));
    parent - left - right
}

struct TreeBuilder<'a, R: Rng> {
    samples: &'a [TrainingSample],
    config: &'a ForestConfig,
    dimension: usize,
    rng: R,
    nodes: Vec<Node>,
}

impl<R: Rng> TreeBuilder<'_, R> {
    fn make_leaf(&self, idx: &[usize]) -> Node {
        let n = idx.len() as f64;
        let mut mean = vec![0.0; self.dimension];
        let mut ray = Vector2::zeros();
        for &i in idx {
            for (m, v) in mean.iter_mut().zip(&self.samples[i].descriptor.0) {
                *m += v;
            }
            ray += self.samples[i].ray.as_vector();
        }
        mean.iter_mut().for_each(|m| *m /= n);
        ray /= n;
        Node::Leaf(Leaf {
            mean_descriptor: mean,
            mean_ray: Ray::new(ray.x, ray.y),
            sample_count: idx.len(),
        })
    }

    /// Best of the sampled candidate splits, as `(feature, threshold, gain)`.
    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64, f64)> {
        let mut total = Vector2::zeros();
        let mut total_sq = 0.0;
        for &i in idx {
            let r = self.samples[i].ray.as_vector();
            total += r;
            total_sq += r.norm_squared();
        }
        let n = idx.len() as f64;
        let parent = sse(n, total, total_sq);
        if parent <= 0.0 {
            return None;
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for _ in 0..self.config.candidates_per_node {
            let feature = self.rng.random_range(0..self.dimension);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in idx {
                let v = self.samples[i].descriptor.0[feature];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if lo >= hi {
                continue;
            }
            let threshold = self.rng.random_range(lo..hi);
            let mut nl = 0.0;
            let mut sl = Vector2::zeros();
            let mut ql = 0.0;
            for &i in idx {
                if self.samples[i].descriptor.0[feature] < threshold {
                    let r = self.samples[i].ray.as_vector();
                    nl += 1.0;
                    sl += r;
                    ql += r.norm_squared();
                }
            }
            if nl == 0.0 || nl == n {
                continue;
            }
            let gain = parent - sse(nl, sl, ql) - sse(n - nl, total - sl, total_sq - ql);
            if best.is_none_or(|b| gain > b.2) {
                best = Some((feature, threshold, gain));
            }
        }
        best.filter(|b| b.2 > 1e-12 * parent.max(1.0))
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf(Leaf {
            mean_descriptor: Vec::new(),
            mean_ray: Ray::new(0.0, 0.0),
            sample_count: 0,
        }));
        let split = if depth >= self.config.max_depth || idx.len() < self.config.min_samples {
            None
        } else {
            self.best_split(&idx)
        };
        self.nodes[slot] = match split {
            None => self.make_leaf(&idx),
            Some((feature, threshold, _)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx
                    .iter()
                    .partition(|&&i| self.samples[i].descriptor.0[feature] < threshold);
                let left = self.build(l, depth + 1);
                let right = self.build(r, depth + 1);
                Node::Split { feature, threshold, left, right }
            }
        };
        slot
    }
}

/// Trains a forest. Trees are built in parallel, each from its own RNG
/// stream, so the result depends only on the samples and the config.
pub fn train_forest(samples: &[TrainingSample], config: &ForestConfig) -> Result<PanTiltForest, ForestError> {
    config.validate()?;
    if samples.len() < config.min_samples.max(1) {
        return Err(ForestError::TooFewSamples {
            required: config.min_samples.max(1),
            got: samples.len(),
        });
    }
    let dimension = samples[0].descriptor.len();
    if let Some(s) = samples.iter().find(|s| s.descriptor.len() != dimension) {
        return Err(ForestError::DimensionMismatch {
            expected: dimension,
            got: s.descriptor.len(),
        });
    }
    let n = samples.len();
    let built: Vec<(PanTiltTree, Vec<bool>)> = (0..config.tree_count)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(config.seed, &[t as u64]);
            let mut in_bag = vec![!config.bootstrap; n];
            let idx: Vec<usize> = if config.bootstrap {
                (0..n)
                    .map(|_| {
                        let i = rng.random_range(0..n);
                        in_bag[i] = true;
                        i
                    })
                    .collect()
            } else {
                (0..n).collect()
            };
            let mut builder = TreeBuilder {
                samples,
                config,
                dimension,
                rng,
                nodes: Vec::new(),
            };
            builder.build(idx, 0);
            (PanTiltTree { nodes: builder.nodes }, in_bag)
        })
        .collect();

    let threshold = match config.feature_distance_threshold {
        Some(t) => t,
        None => calibrate_threshold(samples, &built, config),
    };
    Ok(PanTiltForest {
        trees: built.into_iter().map(|(t, _)| t).collect(),
        dimension,
        feature_distance_threshold: threshold,
        config: *config,
    })
}

/// Percentile of leaf distances of held-out samples whose leaf ray is
/// correct. Falls back to in-bag samples when nothing is held out.
fn calibrate_threshold(samples: &[TrainingSample], built: &[(PanTiltTree, Vec<bool>)], config: &ForestConfig) -> f64 {
    let collect = |held_out: bool| {
        let mut d = Vec::new();
        for (tree, in_bag) in built {
            for (s, &inb) in samples.iter().zip(in_bag) {
                if held_out && inb {
                    continue;
                }
                let leaf = tree.leaf(&s.descriptor.0);
                if leaf.mean_ray.angle_to(&s.ray) < config.calibration_tolerance_deg {
                    d.push(s.descriptor.distance_squared(&leaf.mean_descriptor));
                }
            }
        }
        d
    };
    let mut d = collect(true);
    if d.is_empty() {
        d = collect(false);
    }
    d.sort_by(f64::total_cmp);
    let value = if d.is_empty() {
        0.0
    } else {
        let k = ((config.threshold_percentile * d.len() as f64).ceil() as usize).clamp(1, d.len()) - 1;
        d[k]
    };
    if value > 0.0 {
        value
    } else {
        // every calibration sample hit its leaf mean exactly
        d.iter().copied().find(|v| *v > 0.0).unwrap_or(f64::EPSILON)
    }
}

impl PanTiltForest {
    pub fn trees(&self) -> &[PanTiltTree] {
        &self.trees
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn feature_distance_threshold(&self) -> f64 {
        self.feature_distance_threshold
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self, ForestError> {
        if !(threshold.is_finite() && threshold > 0.0) {
            return Err(ForestError::InvalidConfig("threshold must be positive".into()));
        }
        self.feature_distance_threshold = threshold;
        Ok(self)
    }

    fn check_dimension(&self, d: &Descriptor) -> Result<(), ForestError> {
        if d.len() != self.dimension {
            return Err(ForestError::DimensionMismatch {
                expected: self.dimension,
                got: d.len(),
            });
        }
        Ok(())
    }

    /// One prediction per tree, without gating.
    pub fn predict_all(&self, d: &Descriptor) -> Result<Vec<TreePrediction>, ForestError> {
        self.check_dimension(d)?;
        Ok(self
            .trees
            .iter()
            .enumerate()
            .map(|(tree, t)| {
                let leaf = t.leaf(&d.0);
                TreePrediction {
                    tree,
                    ray: leaf.mean_ray,
                    feature_distance: d.distance_squared(&leaf.mean_descriptor),
                }
            })
            .collect())
    }

    /// Per-tree predictions whose feature distance is within the threshold.
    pub fn predict_ray(&self, d: &Descriptor) -> Result<Vec<TreePrediction>, ForestError> {
        self.predict_with_threshold(d, self.feature_distance_threshold)
    }

    pub fn predict_with_threshold(&self, d: &Descriptor, threshold: f64) -> Result<Vec<TreePrediction>, ForestError> {
        let mut all = self.predict_all(d)?;
        all.retain(|p| p.feature_distance <= threshold);
        Ok(all)
    }

    /// Writes the little-endian binary form.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        let c = &self.config;
        w.write_u32::<LittleEndian>(c.tree_count as u32)?;
        w.write_u32::<LittleEndian>(c.max_depth as u32)?;
        w.write_u32::<LittleEndian>(c.min_samples as u32)?;
        w.write_u32::<LittleEndian>(c.candidates_per_node as u32)?;
        w.write_u8(c.bootstrap as u8)?;
        w.write_u64::<LittleEndian>(c.seed)?;
        w.write_f64::<LittleEndian>(c.threshold_percentile)?;
        w.write_f64::<LittleEndian>(c.calibration_tolerance_deg)?;
        w.write_f64::<LittleEndian>(self.feature_distance_threshold)?;
        w.write_u32::<LittleEndian>(self.dimension as u32)?;
        w.write_u32::<LittleEndian>(self.trees.len() as u32)?;
        for tree in &self.trees {
            w.write_u32::<LittleEndian>(tree.nodes.len() as u32)?;
            for node in &tree.nodes {
                match node {
                    Node::Split { feature, threshold, left, right } => {
                        w.write_u8(0)?;
                        w.write_u32::<LittleEndian>(*feature as u32)?;
                        w.write_f64::<LittleEndian>(*threshold)?;
                        w.write_u32::<LittleEndian>(*left as u32)?;
                        w.write_u32::<LittleEndian>(*right as u32)?;
                    }
                    Node::Leaf(l) => {
                        w.write_u8(1)?;
                        w.write_u64::<LittleEndian>(l.sample_count as u64)?;
                        w.write_f64::<LittleEndian>(l.mean_ray.pan)?;
                        w.write_f64::<LittleEndian>(l.mean_ray.tilt)?;
                        for v in &l.mean_descriptor {
                            w.write_f64::<LittleEndian>(*v)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ForestError> {
        if bytes.is_empty() {
            return Err(ForestError::EmptyStream);
        }
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(if bytes.len() < 4 && MAGIC.starts_with(bytes) {
                ForestError::Truncated
            } else {
                ForestError::BadMagic
            });
        }
        let mut r = &bytes[4..];
        let forest = read_body(&mut r)?;
        if !r.is_empty() {
            return Err(ForestError::Corrupt(format!("{} trailing bytes", r.len())));
        }
        Ok(forest)
    }

    pub fn save(&self, path: &Path) -> Result<(), ForestError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| ForestError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ForestError> {
        let bytes = std::fs::read(path).map_err(|e| ForestError::Io(e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}

fn truncated(e: std::io::Error) -> ForestError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        ForestError::Truncated
    } else {
        ForestError::Io(e.to_string())
    }
}

fn read_body(r: &mut &[u8]) -> Result<PanTiltForest, ForestError> {
    let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != FORMAT_VERSION {
        return Err(ForestError::UnsupportedVersion(version));
    }
    let u32_ = |r: &mut &[u8]| r.read_u32::<LittleEndian>().map(|v| v as usize).map_err(truncated);
    let f64_ = |r: &mut &[u8]| r.read_f64::<LittleEndian>().map_err(truncated);
    let config = ForestConfig {
        tree_count: u32_(r)?,
        max_depth: u32_(r)?,
        min_samples: u32_(r)?,
        candidates_per_node: u32_(r)?,
        bootstrap: match r.read_u8().map_err(truncated)? {
            0 => false,
            1 => true,
            b => return Err(ForestError::Corrupt(format!("bootstrap flag {b}"))),
        },
        seed: r.read_u64::<LittleEndian>().map_err(truncated)?,
        threshold_percentile: f64_(r)?,
        calibration_tolerance_deg: f64_(r)?,
        feature_distance_threshold: None,
    };
    let threshold = f64_(r)?;
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(ForestError::Corrupt(format!("threshold {threshold}")));
    }
    let dimension = u32_(r)?;
    if dimension == 0 {
        return Err(ForestError::Corrupt("zero descriptor dimension".into()));
    }
    let tree_count = u32_(r)?;
    if tree_count == 0 {
        return Err(ForestError::Corrupt("no trees".into()));
    }
    let mut trees = Vec::with_capacity(tree_count.min(1024));
    for t in 0..tree_count {
        let node_count = u32_(r)?;
        if node_count == 0 {
            return Err(ForestError::Corrupt(format!("tree {t} has no nodes")));
        }
        let mut nodes = Vec::with_capacity(node_count.min(1 << 20));
        for i in 0..node_count {
            let node = match r.read_u8().map_err(truncated)? {
                0 => {
                    let feature = u32_(r)?;
                    let threshold = f64_(r)?;
                    let left = u32_(r)?;
                    let right = u32_(r)?;
                    if feature >= dimension {
                        return Err(ForestError::Corrupt(format!("feature {feature} out of range")));
                    }
                    // children always follow their parent, which rules out cycles
                    if left <= i || right <= i || left >= node_count || right >= node_count {
                        return Err(ForestError::Corrupt(format!("bad child index at node {i}")));
                    }
                    if !threshold.is_finite() {
                        return Err(ForestError::Corrupt("non-finite threshold".into()));
                    }
                    Node::Split { feature, threshold, left, right }
                }
                1 => {
                    let sample_count = r.read_u64::<LittleEndian>().map_err(truncated)? as usize;
                    let pan = f64_(r)?;
                    let tilt = f64_(r)?;
                    let mut mean = Vec::with_capacity(dimension);
                    for _ in 0..dimension {
                        mean.push(f64_(r)?);
                    }
                    Node::Leaf(Leaf {
                        mean_descriptor: mean,
                        mean_ray: Ray::new(pan, tilt),
                        sample_count,
                    })
                }
                tag => return Err(ForestError::Corrupt(format!("unknown node tag {tag}"))),
            };
            nodes.push(node);
        }
        trees.push(PanTiltTree { nodes });
    }
    Ok(PanTiltForest {
        trees,
        dimension,
        feature_distance_threshold: threshold,
        config: ForestConfig {
            feature_distance_threshold: Some(threshold),
            ..config
        },
    })
}

/// Labels keypoints of a calibrated reference image with their rays.
pub fn label_keypoints(
    ptz: &PtzParams,
    principal_point: &Vector2<f64>,
    keypoints: &[(Vector2<f64>, Descriptor)],
) -> Vec<TrainingSample> {
    keypoints
        .iter()
        .map(|(p, d)| TrainingSample {
            descriptor: d.clone(),
            ray: pixel_to_ray_exact(ptz, principal_point, p),
        })
        .collect()
}
