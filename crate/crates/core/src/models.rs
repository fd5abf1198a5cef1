//! Trained model components: exact-search KNN for gestures, a CART
//! regression tree for normalized force, force-normalization constants,
//! and the serializable pipeline bundle.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::preprocess::{percentile_interpolated, MvcReference, PreprocessConfig};
use crate::reduction::{PcaModel, Scaler};
use crate::types::{ChannelId, GestureLabel};

pub const MODEL_SCHEMA_VERSION: &str = "1";

/// Model hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub knn_k: usize,
    pub min_leaf: usize,
    /// Causal low-pass applied to the regressor output stream.
    pub output_filter_hz: f64,
    /// Number of channels the trained model keeps (top of the mRMR ranking).
    pub channels: usize,
    /// Scope on which force-normalization constants are fitted.
    pub force_norm_scope: ForceNormScope,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            knn_k: 10,
            min_leaf: 10,
            output_filter_hz: 1.0,
            channels: 3,
            force_norm_scope: ForceNormScope::Fold,
        }
    }
}

/// How widely force-normalization constants are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForceNormScope {
    /// One set of constants per training fold (no test-fold leakage).
    Fold,
    /// Per-subject constants, fitted on that subject's training sequences.
    Subject,
    /// One set of constants over the whole dataset. Leaks across folds;
    /// kept only for comparison runs.
    Global,
}

// ---------------------------------------------------------------------------
// KNN gesture classifier
// ---------------------------------------------------------------------------

/// Exact k-nearest-neighbor classifier over reduced feature vectors.
///
/// Tie rules, in order: majority vote among the k nearest; tied classes
/// resolve by smaller summed neighbor distance; then by lower class index.
/// Equidistant neighbors rank by lower training-row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub dim: usize,
    /// Training vectors, row-major.
    pub points: Vec<f64>,
    /// Class index per training row.
    pub labels: Vec<u8>,
}

impl KnnModel {
    pub fn fit(rows: &[Vec<f64>], labels: &[GestureLabel], k: usize) -> Result<KnnModel> {
        if k == 0 {
            return Err(Error::Config("knn k must be >= 1".into()));
        }
        if rows.len() < k {
            return Err(Error::Insufficient(format!(
                "knn needs >= k = {k} training rows, got {}",
                rows.len()
            )));
        }
        if rows.len() != labels.len() {
            return Err(Error::Dimension {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        let dim = rows[0].len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Model("ragged or empty KNN training matrix".into()));
        }
        let mut points = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            points.extend_from_slice(r);
        }
        Ok(KnnModel {
            k,
            dim,
            points,
            labels: labels.iter().map(|l| l.index() as u8).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn predict(&self, x: &[f64]) -> Result<GestureLabel> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        let n = self.len();
        let mut dists: Vec<(f64, u32)> = Vec::with_capacity(n);
        for i in 0..n {
            let row = &self.points[i * self.dim..(i + 1) * self.dim];
            let d2: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            dists.push((d2, i as u32));
        }
        let k = self.k.min(n);
        let cmp = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < n {
            dists.select_nth_unstable_by(k - 1, cmp);
        }
        let neighbors = &mut dists[..k];
        neighbors.sort_unstable_by(cmp);

        let mut votes = [0usize; 6];
        let mut dist_sum = [0.0f64; 6];
        for &(d2, idx) in neighbors.iter() {
            let class = self.labels[idx as usize] as usize;
            votes[class] += 1;
            dist_sum[class] += d2.sqrt();
        }
        let best_votes = *votes.iter().max().expect("six classes");
        let mut winner = None::<usize>;
        for class in 0..6 {
            if votes[class] != best_votes {
                continue;
            }
            winner = match winner {
                None => Some(class),
                Some(cur) => {
                    if dist_sum[class] < dist_sum[cur] {
                        Some(class)
                    } else {
                        Some(cur) // equal sums keep the lower class index
                    }
                }
            };
        }
        Ok(GestureLabel::from_index(winner.expect("nonempty vote")).expect("class in range"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.len() {
            return Err(Error::Model(format!(
                "knn k = {} outside 1..={}",
                self.k,
                self.len()
            )));
        }
        if self.points.len() != self.len() * self.dim || self.dim == 0 {
            return Err(Error::Model("knn matrix shape mismatch".into()));
        }
        if self.labels.iter().any(|l| *l > 5) {
            return Err(Error::Model("knn label index out of range".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// CART regression tree
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        value: f64,
        count: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Greedy variance-reduction regression tree stored as a node arena
/// (index 0 is the root).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub min_leaf: usize,
    pub dim: usize,
    pub nodes: Vec<TreeNode>,
}

const MIN_SSE_REDUCTION: f64 = 1e-12;

struct BestSplit {
    feature: usize,
    threshold: f64,
    reduction: f64,
}

impl RegressionTree {
    /// Fits by exhaustive midpoint split search: at every node the
    /// (feature, threshold) pair maximizing the SSE reduction wins, with
    /// ties broken toward the lower feature index and lower threshold.
    /// Growth stops when the best reduction drops below 1e-12 or a child
    /// would fall under `min_leaf` rows.
    pub fn fit(rows: &[Vec<f64>], targets: &[f64], min_leaf: usize) -> Result<RegressionTree> {
        if rows.is_empty() {
            return Err(Error::Insufficient("regression tree needs >= 1 row".into()));
        }
        if rows.len() != targets.len() {
            return Err(Error::Dimension {
                expected: rows.len(),
                got: targets.len(),
            });
        }
        if min_leaf == 0 {
            return Err(Error::Config("min_leaf must be >= 1".into()));
        }
        let dim = rows[0].len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Model("ragged or empty tree training matrix".into()));
        }

        let mut tree = RegressionTree {
            min_leaf,
            dim,
            nodes: Vec::new(),
        };
        let all: Vec<usize> = (0..rows.len()).collect();
        tree.nodes.push(TreeNode::Leaf {
            value: 0.0,
            count: 0,
        }); // placeholder root
        let mut stack = vec![(0usize, all)];
        while let Some((node_id, idx)) = stack.pop() {
            let n = idx.len();
            let mean = idx.iter().map(|&i| targets[i]).sum::<f64>() / n as f64;
            let split = if n >= 2 * min_leaf {
                best_split(rows, targets, &idx, min_leaf)
            } else {
                None
            };
            match split {
                Some(s) if s.reduction > MIN_SSE_REDUCTION => {
                    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
                        .iter()
                        .partition(|&&i| rows[i][s.feature] <= s.threshold);
                    let left_id = tree.nodes.len();
                    tree.nodes.push(TreeNode::Leaf {
                        value: 0.0,
                        count: 0,
                    });
                    let right_id = tree.nodes.len();
                    tree.nodes.push(TreeNode::Leaf {
                        value: 0.0,
                        count: 0,
                    });
                    tree.nodes[node_id] = TreeNode::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left: left_id,
                        right: right_id,
                    };
                    stack.push((left_id, left_idx));
                    stack.push((right_id, right_idx));
                }
                _ => {
                    tree.nodes[node_id] = TreeNode::Leaf {
                        value: mean,
                        count: n,
                    };
                }
            }
        }
        Ok(tree)
    }

    /// Routes by thresholds (`value <= threshold` goes left) to a leaf mean.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { value, .. } => return Ok(*value),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn leaves(&self) -> Vec<(f64, usize)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Leaf { value, count } => Some((*value, *count)),
                _ => None,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Model("tree has no nodes".into()));
        }
        for node in &self.nodes {
            match node {
                TreeNode::Leaf { value, count } => {
                    if !value.is_finite() {
                        return Err(Error::Model("non-finite leaf value".into()));
                    }
                    if *count < self.min_leaf {
                        return Err(Error::Model(format!(
                            "leaf count {count} below min_leaf {}",
                            self.min_leaf
                        )));
                    }
                }
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= self.dim {
                        return Err(Error::Model(format!(
                            "split feature {feature} outside 0..{}",
                            self.dim
                        )));
                    }
                    if !threshold.is_finite() {
                        return Err(Error::Model("non-finite split threshold".into()));
                    }
                    if *left >= self.nodes.len() || *right >= self.nodes.len() {
                        return Err(Error::Model("tree child index out of range".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Exhaustive split search over midpoints of consecutive distinct sorted
/// values. The SSE reduction of a split is `nL*nR/n * (meanL - meanR)^2`.
fn best_split(
    rows: &[Vec<f64>],
    targets: &[f64],
    idx: &[usize],
    min_leaf: usize,
) -> Option<BestSplit> {
    let n = idx.len();
    let dim = rows[idx[0]].len();
    let total: f64 = idx.iter().map(|&i| targets[i]).sum();

    let mut best: Option<BestSplit> = None;
    let mut order: Vec<usize> = idx.to_vec();
    for feature in 0..dim {
        order.sort_unstable_by(|&a, &b| rows[a][feature].total_cmp(&rows[b][feature]));
        let mut left_sum = 0.0;
        for pos in 1..n {
            left_sum += targets[order[pos - 1]];
            if pos < min_leaf || n - pos < min_leaf {
                continue;
            }
            let lo = rows[order[pos - 1]][feature];
            let hi = rows[order[pos]][feature];
            if !(hi > lo) {
                continue;
            }
            let nl = pos as f64;
            let nr = (n - pos) as f64;
            let mean_l = left_sum / nl;
            let mean_r = (total - left_sum) / nr;
            let reduction = nl * nr / (nl + nr) * (mean_l - mean_r) * (mean_l - mean_r);
            // Strict > keeps the lowest feature index and threshold on ties.
            if best.as_ref().map_or(true, |b| reduction > b.reduction) {
                best = Some(BestSplit {
                    feature,
                    threshold: 0.5 * (lo + hi),
                    reduction,
                });
            }
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Force normalization
// ---------------------------------------------------------------------------

const FORCE_SCALE_FLOOR: f64 = 1e-9;
const FORCE_SCALE_PERCENTILE: f64 = 95.0;

/// Offset/scale normalization for force targets: subtract the minimum
/// observed force, divide by the 95th percentile of the shifted values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceNorm {
    pub offset: f64,
    pub scale: f64,
}

impl ForceNorm {
    pub fn fit(forces: &[f64]) -> Result<ForceNorm> {
        if forces.is_empty() {
            return Err(Error::Insufficient(
                "force normalization needs >= 1 sample".into(),
            ));
        }
        let offset = forces.iter().cloned().fold(f64::INFINITY, f64::min);
        let shifted: Vec<f64> = forces.iter().map(|f| f - offset).collect();
        let scale = percentile_interpolated(&shifted, FORCE_SCALE_PERCENTILE);
        Ok(ForceNorm {
            offset,
            scale: scale.max(FORCE_SCALE_FLOOR),
        })
    }

    pub fn apply(&self, force: f64) -> f64 {
        (force - self.offset) / self.scale
    }

    pub fn apply_series(&self, forces: &[f64]) -> Vec<f64> {
        forces.iter().map(|f| self.apply(*f)).collect()
    }

    pub fn invert(&self, normalized: f64) -> f64 {
        normalized * self.scale + self.offset
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale > 0.0 && self.offset.is_finite() {
            Ok(())
        } else {
            Err(Error::Model("force norm scale must be > 0".into()))
        }
    }
}

// ---------------------------------------------------------------------------
// Pipeline bundle
// ---------------------------------------------------------------------------

/// Everything needed to run inference on a raw frame stream, as one
/// versioned document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineModel {
    pub schema_version: String,
    /// Selected channels, in mRMR selection order.
    pub channels: Vec<ChannelId>,
    pub preprocess: PreprocessConfig,
    pub mvc: MvcReference,
    pub features: FeatureConfig,
    pub scaler: Scaler,
    pub pca: PcaModel,
    pub knn: KnnModel,
    pub tree: RegressionTree,
    pub force_norm: ForceNorm,
    /// Cutoff of the causal filter applied to the force prediction stream.
    pub output_filter_hz: f64,
    /// Working EMG rate the model was trained at.
    pub sample_rate_hz: f64,
}

impl PipelineModel {
    /// Cross-checks every internal dimension; called on load.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: MODEL_SCHEMA_VERSION.to_string(),
                found: self.schema_version.clone(),
            });
        }
        if self.channels.is_empty() || self.channels != self.features.channels {
            return Err(Error::Model(
                "channel subset does not match feature configuration".into(),
            ));
        }
        self.features.validate()?;
        self.preprocess.validate(self.sample_rate_hz)?;
        self.mvc.validate()?;
        self.scaler.validate()?;
        self.pca.validate()?;
        self.knn.validate()?;
        self.tree.validate()?;
        self.force_norm.validate()?;
        if self.scaler.dim() != self.features.feature_len() {
            return Err(Error::Model(format!(
                "scaler dimension {} does not match feature length {}",
                self.scaler.dim(),
                self.features.feature_len()
            )));
        }
        if self.pca.input_dim() != self.scaler.dim() {
            return Err(Error::Model(format!(
                "PCA input dimension {} does not match scaler dimension {}",
                self.pca.input_dim(),
                self.scaler.dim()
            )));
        }
        if self.knn.dim != self.pca.retained {
            return Err(Error::Model(format!(
                "knn dimension {} does not match retained PCA components {}",
                self.knn.dim, self.pca.retained
            )));
        }
        if self.tree.dim != self.pca.retained {
            return Err(Error::Model(format!(
                "tree dimension {} does not match retained PCA components {}",
                self.tree.dim, self.pca.retained
            )));
        }
        if !(self.output_filter_hz > 0.0) {
            return Err(Error::Model("output filter cutoff must be > 0".into()));
        }
        Ok(())
    }

    /// Reduced feature vector -> (gesture, raw tree output).
    pub fn predict_reduced(&self, reduced: &[f64]) -> Result<(GestureLabel, f64)> {
        Ok((self.knn.predict(reduced)?, self.tree.predict(reduced)?))
    }
}

/// Writes the bundle as a single JSON document.
pub fn save_model(m: &PipelineModel, path: &Path) -> Result<()> {
    m.validate()?;
    let json = serde_json::to_string(m)
        .map_err(|e| Error::Model(format!("model serialization failed: {e}")))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Loads and fully validates a bundle; a corrupt file never yields a
/// partial model.
pub fn load_model(path: &Path) -> Result<PipelineModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: PipelineModel = serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: path.display().to_string(),
        line: e.line(),
        msg: format!("model bundle: {e}"),
    })?;
    m.validate()?;
    Ok(m)
}
