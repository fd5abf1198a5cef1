//! Leakage-safe 5-fold cross-validation, metrics (accuracy, confusion,
//! RMSE, MdAPE) and the channel-count trade-off sweep.
//!
//! Folds split whole sequences; every training-fold statistic (MVC
//! references, mRMR ranking, scaler, PCA, force constants) is fitted on
//! training sequences only.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ForceNorm, ForceNormScope};
use crate::pipeline::{predict_sequence_with, FoldContext, PipelineConfig, WindowPrediction};
use crate::resample::align_force;
use crate::selection::MrmrTarget;
use crate::types::{ChannelId, Dataset, GestureLabel, Sequence};

/// Evaluation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub folds: usize,
    pub seed: u64,
    /// Truth magnitude below which a sample is excluded from MdAPE,
    /// normalized force units.
    pub mdape_eps: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 5,
            seed: 42,
            mdape_eps: 0.05,
        }
    }
}

/// Assignment of whole sequences to folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Sequence indices held out by each fold.
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let held: &[usize] = &self.folds[fold];
        let total: usize = self.folds.iter().map(|f| f.len()).sum();
        (0..total).filter(|i| !held.contains(i)).collect()
    }
}

/// Splits whole sequences into `k` folds, stratified by task label where
/// counts allow. Deterministic given the seed.
pub fn kfold_by_sequence(d: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 {
        return Err(Error::Config("fold count must be >= 1".into()));
    }
    if d.sequences.len() < k {
        return Err(Error::Insufficient(format!(
            "{} sequences cannot fill {k} folds",
            d.sequences.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut cursor = 0usize;
    for label in GestureLabel::ALL {
        let mut group: Vec<usize> = d
            .sequences
            .iter()
            .enumerate()
            .filter(|(_, s)| s.task == label)
            .map(|(i, _)| i)
            .collect();
        group.shuffle(&mut rng);
        for idx in group {
            folds[cursor % k].push(idx);
            cursor += 1;
        }
    }
    Ok(FoldPlan { k, seed, folds })
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

pub fn accuracy(pred: &[GestureLabel], truth: &[GestureLabel]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Insufficient("accuracy of zero predictions".into()));
    }
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / pred.len() as f64)
}

/// 6x6 confusion counts; rows are truth, columns predictions.
pub fn confusion_matrix(pred: &[GestureLabel], truth: &[GestureLabel]) -> [[usize; 6]; 6] {
    let mut m = [[0usize; 6]; 6];
    for (p, t) in pred.iter().zip(truth) {
        m[t.index()][p.index()] += 1;
    }
    m
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Insufficient("rmse of zero predictions".into()));
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Median absolute percentage error over samples with `|truth| >= eps`.
/// Returns `None` when no sample qualifies (all-rest ground truth).
pub fn mdape(pred: &[f64], truth: &[f64], eps: f64) -> Result<Option<f64>> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if !(eps > 0.0) {
        return Err(Error::Config("mdape eps must be > 0".into()));
    }
    let mut ape: Vec<f64> = pred
        .iter()
        .zip(truth)
        .filter(|(_, t)| t.abs() >= eps)
        .map(|(p, t)| 100.0 * (p - t).abs() / t.abs())
        .collect();
    if ape.is_empty() {
        return Ok(None);
    }
    ape.sort_by(|a, b| a.total_cmp(b));
    let n = ape.len();
    let median = if n % 2 == 1 {
        ape[n / 2]
    } else {
        0.5 * (ape[n / 2 - 1] + ape[n / 2])
    };
    Ok(Some(median))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Window-cadence predictions for one held-out sequence.
#[derive(Debug, Clone)]
pub struct SequenceTrace {
    pub id: String,
    pub fold: usize,
    pub predictions: Vec<WindowPrediction>,
}

/// Plot-ready CSV: one row per window of every held-out sequence.
pub fn traces_to_csv(traces: &[SequenceTrace]) -> String {
    let mut out =
        String::from("sequence,fold,t_s,truth_label,pred_label,truth_force_norm,pred_force_norm\n");
    for tr in traces {
        for p in &tr.predictions {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                tr.id,
                tr.fold,
                crate::io::fmt_sig9(p.t),
                p.truth_label,
                p.pred_label,
                crate::io::fmt_sig9(p.truth_force),
                crate::io::fmt_sig9(p.pred_force)
            ));
        }
    }
    out
}

/// Gesture-recognition cross-validation results.
#[derive(Debug, Clone)]
pub struct GrReport {
    pub per_fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// Pooled over all folds; rows = truth, columns = prediction.
    pub confusion: [[usize; 6]; 6],
    pub channels_per_fold: Vec<Vec<ChannelId>>,
    pub pca_retained_per_fold: Vec<usize>,
    pub traces: Vec<SequenceTrace>,
}

impl GrReport {
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("truth\\pred");
        for l in GestureLabel::ALL {
            out.push(',');
            out.push_str(l.as_str());
        }
        out.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            out.push_str(GestureLabel::from_index(i).unwrap().as_str());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str("gesture recognition, 5-fold cross-validation\n");
        for (i, acc) in self.per_fold_accuracy.iter().enumerate() {
            out.push_str(&format!(
                "  fold {i}: accuracy {:.4}  channels {:?}  pca components {}\n",
                acc,
                self.channels_per_fold[i]
                    .iter()
                    .map(|c| c.get())
                    .collect::<Vec<_>>(),
                self.pca_retained_per_fold[i]
            ));
        }
        out.push_str(&format!(
            "  mean accuracy {:.4} +/- {:.4}\n",
            self.mean_accuracy, self.std_accuracy
        ));
        out
    }
}

/// Force-estimation cross-validation results.
#[derive(Debug, Clone)]
pub struct FeReport {
    /// RMSE in normalized force units, per fold.
    pub per_fold_rmse: Vec<f64>,
    /// MdAPE percent per fold; `None` marks a fold with no valid samples.
    pub per_fold_mdape: Vec<Option<f64>>,
    pub mean_rmse: f64,
    /// Mean over folds that produced a value.
    pub mean_mdape: Option<f64>,
    pub channels_per_fold: Vec<Vec<ChannelId>>,
    pub pca_retained_per_fold: Vec<usize>,
    pub traces: Vec<SequenceTrace>,
}

impl FeReport {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str("force estimation, 5-fold cross-validation\n");
        for i in 0..self.per_fold_rmse.len() {
            let mdape = match self.per_fold_mdape[i] {
                Some(v) => format!("{v:.2}%"),
                None => "n/a".to_string(),
            };
            out.push_str(&format!(
                "  fold {i}: rmse {:.4}  mdape {}  channels {:?}\n",
                self.per_fold_rmse[i],
                mdape,
                self.channels_per_fold[i]
                    .iter()
                    .map(|c| c.get())
                    .collect::<Vec<_>>()
            ));
        }
        let mdape = match self.mean_mdape {
            Some(v) => format!("{v:.2}%"),
            None => "n/a".to_string(),
        };
        out.push_str(&format!(
            "  mean rmse {:.4}  mean mdape {mdape}\n",
            self.mean_rmse
        ));
        out
    }
}

/// Global-scope force constants (fitted over the whole dataset; leaks by
/// design and is only offered for comparison runs).
fn global_force_norm(d: &Dataset) -> Result<ForceNorm> {
    let mut all = Vec::new();
    for s in &d.sequences {
        all.extend(align_force(s)?);
    }
    ForceNorm::fit(&all)
}

fn force_override_for(d: &Dataset, cfg: &PipelineConfig) -> Result<Option<ForceNorm>> {
    Ok(match cfg.model.force_norm_scope {
        ForceNormScope::Global => Some(global_force_norm(d)?),
        _ => None,
    })
}

/// Per-fold full refits scored on held-out sequences, gesture target.
pub fn evaluate_gr(d: &Dataset, cfg: &PipelineConfig, plan: &FoldPlan) -> Result<GrReport> {
    evaluate_gr_at(d, cfg, plan, cfg.model.channels)
}

fn evaluate_gr_at(
    d: &Dataset,
    cfg: &PipelineConfig,
    plan: &FoldPlan,
    channel_count: usize,
) -> Result<GrReport> {
    let force_override = force_override_for(d, cfg)?;
    let mut report = GrReport {
        per_fold_accuracy: Vec::new(),
        mean_accuracy: 0.0,
        std_accuracy: 0.0,
        confusion: [[0; 6]; 6],
        channels_per_fold: Vec::new(),
        pca_retained_per_fold: Vec::new(),
        traces: Vec::new(),
    };
    for fold in 0..plan.k {
        let train: Vec<&Sequence> = plan
            .train_indices(fold)
            .into_iter()
            .map(|i| &d.sequences[i])
            .collect();
        let ctx = FoldContext::prepare(&train, cfg, force_override.clone())?;
        let ranking = ctx.rank(MrmrTarget::Gesture)?;
        let fitted = ctx.fit_with_ranking(&ranking, channel_count)?;

        let mut pred = Vec::new();
        let mut truth = Vec::new();
        for &i in &plan.folds[fold] {
            let s = &d.sequences[i];
            let preds = predict_sequence_with(
                &fitted.model,
                s,
                fitted.mvc_for(s),
                fitted.force_norm_for(s),
            )?;
            for p in &preds {
                pred.push(p.pred_label);
                truth.push(p.truth_label);
            }
            report.traces.push(SequenceTrace {
                id: s.id.clone(),
                fold,
                predictions: preds,
            });
        }
        report.per_fold_accuracy.push(accuracy(&pred, &truth)?);
        let cm = confusion_matrix(&pred, &truth);
        for (acc_row, row) in report.confusion.iter_mut().zip(&cm) {
            for (a, v) in acc_row.iter_mut().zip(row) {
                *a += v;
            }
        }
        report.channels_per_fold.push(fitted.model.channels.clone());
        report.pca_retained_per_fold.push(fitted.pca_retained);
    }
    let (mean, std) = mean_std(&report.per_fold_accuracy);
    report.mean_accuracy = mean;
    report.std_accuracy = std;
    Ok(report)
}

/// Per-fold full refits scored on held-out sequences, force target.
/// Predictions pass through the causal 1 Hz output filter before scoring.
pub fn evaluate_fe(
    d: &Dataset,
    cfg: &PipelineConfig,
    plan: &FoldPlan,
    eval: &EvalConfig,
) -> Result<FeReport> {
    evaluate_fe_at(d, cfg, plan, eval, cfg.model.channels)
}

fn evaluate_fe_at(
    d: &Dataset,
    cfg: &PipelineConfig,
    plan: &FoldPlan,
    eval: &EvalConfig,
    channel_count: usize,
) -> Result<FeReport> {
    let force_override = force_override_for(d, cfg)?;
    let mut report = FeReport {
        per_fold_rmse: Vec::new(),
        per_fold_mdape: Vec::new(),
        mean_rmse: 0.0,
        mean_mdape: None,
        channels_per_fold: Vec::new(),
        pca_retained_per_fold: Vec::new(),
        traces: Vec::new(),
    };
    for fold in 0..plan.k {
        let train: Vec<&Sequence> = plan
            .train_indices(fold)
            .into_iter()
            .map(|i| &d.sequences[i])
            .collect();
        let ctx = FoldContext::prepare(&train, cfg, force_override.clone())?;
        let ranking = ctx.rank(MrmrTarget::Force)?;
        let fitted = ctx.fit_with_ranking(&ranking, channel_count)?;

        let mut pred = Vec::new();
        let mut truth = Vec::new();
        for &i in &plan.folds[fold] {
            let s = &d.sequences[i];
            let preds = predict_sequence_with(
                &fitted.model,
                s,
                fitted.mvc_for(s),
                fitted.force_norm_for(s),
            )?;
            for p in &preds {
                pred.push(p.pred_force);
                truth.push(p.truth_force);
            }
            report.traces.push(SequenceTrace {
                id: s.id.clone(),
                fold,
                predictions: preds,
            });
        }
        report.per_fold_rmse.push(rmse(&pred, &truth)?);
        report
            .per_fold_mdape
            .push(mdape(&pred, &truth, eval.mdape_eps)?);
        report.channels_per_fold.push(fitted.model.channels.clone());
        report.pca_retained_per_fold.push(fitted.pca_retained);
    }
    report.mean_rmse = report.per_fold_rmse.iter().sum::<f64>() / plan.k as f64;
    let valid: Vec<f64> = report.per_fold_mdape.iter().flatten().cloned().collect();
    report.mean_mdape = if valid.is_empty() {
        None
    } else {
        Some(valid.iter().sum::<f64>() / valid.len() as f64)
    };
    Ok(report)
}

/// One point of the channel-count trade-off curves.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub channels: usize,
    pub gr_accuracy_mean: f64,
    pub gr_accuracy_std: f64,
    pub fe_rmse_mean: f64,
    pub fe_mdape_mean: Option<f64>,
}

/// Accuracy and MdAPE as a function of the selected channel count.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
}

/// Reference trends reported for the original (private) recordings; kept
/// as annotation columns, never asserted on synthetic data.
fn gr_reference(channels: usize) -> &'static str {
    match channels {
        1 => "50",
        2 => "70",
        3 => "85",
        _ => ">90",
    }
}

fn fe_reference(channels: usize) -> &'static str {
    match channels {
        1 => "22",
        2 => "13",
        3 => "9",
        _ => "<5",
    }
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "channels,gr_accuracy_mean,gr_accuracy_std,gr_reference_pct,\
             fe_mdape_mean_pct,fe_rmse_mean,fe_reference_pct\n",
        );
        for p in &self.points {
            let mdape = match p.fe_mdape_mean {
                Some(v) => crate::io::fmt_sig9(v),
                None => "n/a".to_string(),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                p.channels,
                crate::io::fmt_sig9(p.gr_accuracy_mean),
                crate::io::fmt_sig9(p.gr_accuracy_std),
                gr_reference(p.channels),
                mdape,
                crate::io::fmt_sig9(p.fe_rmse_mean),
                fe_reference(p.channels)
            ));
        }
        out
    }
}

/// Evaluates every channel count in `counts` for both heads.
///
/// `gr_data` is the gesture-task subset and `fe_data` the full set; each
/// fold computes its mRMR rankings once and reuses them for every count.
pub fn channel_sweep(
    gr_data: &Dataset,
    fe_data: &Dataset,
    cfg: &PipelineConfig,
    eval: &EvalConfig,
    counts: &[usize],
) -> Result<SweepReport> {
    let gr_plan = kfold_by_sequence(gr_data, eval.folds, eval.seed)?;
    let fe_plan = kfold_by_sequence(fe_data, eval.folds, eval.seed)?;
    let gr_override = force_override_for(gr_data, cfg)?;
    let fe_override = force_override_for(fe_data, cfg)?;

    // accuracy[fold][count], etc.
    let mut gr_acc = vec![Vec::new(); counts.len()];
    let mut fe_rmse_all = vec![Vec::new(); counts.len()];
    let mut fe_mdape_all: Vec<Vec<Option<f64>>> = vec![Vec::new(); counts.len()];

    for fold in 0..gr_plan.k {
        let train: Vec<&Sequence> = gr_plan
            .train_indices(fold)
            .into_iter()
            .map(|i| &gr_data.sequences[i])
            .collect();
        let ctx = FoldContext::prepare(&train, cfg, gr_override.clone())?;
        let ranking = ctx.rank(MrmrTarget::Gesture)?;
        for (ci, &count) in counts.iter().enumerate() {
            let fitted = ctx.fit_with_ranking(&ranking, count)?;
            let mut pred = Vec::new();
            let mut truth = Vec::new();
            for &i in &gr_plan.folds[fold] {
                let s = &gr_data.sequences[i];
                let preds = predict_sequence_with(
                    &fitted.model,
                    s,
                    fitted.mvc_for(s),
                    fitted.force_norm_for(s),
                )?;
                for p in &preds {
                    pred.push(p.pred_label);
                    truth.push(p.truth_label);
                }
            }
            gr_acc[ci].push(accuracy(&pred, &truth)?);
        }
    }

    for fold in 0..fe_plan.k {
        let train: Vec<&Sequence> = fe_plan
            .train_indices(fold)
            .into_iter()
            .map(|i| &fe_data.sequences[i])
            .collect();
        let ctx = FoldContext::prepare(&train, cfg, fe_override.clone())?;
        let ranking = ctx.rank(MrmrTarget::Force)?;
        for (ci, &count) in counts.iter().enumerate() {
            let fitted = ctx.fit_with_ranking(&ranking, count)?;
            let mut pred = Vec::new();
            let mut truth = Vec::new();
            for &i in &fe_plan.folds[fold] {
                let s = &fe_data.sequences[i];
                let preds = predict_sequence_with(
                    &fitted.model,
                    s,
                    fitted.mvc_for(s),
                    fitted.force_norm_for(s),
                )?;
                for p in &preds {
                    pred.push(p.pred_force);
                    truth.push(p.truth_force);
                }
            }
            fe_rmse_all[ci].push(rmse(&pred, &truth)?);
            fe_mdape_all[ci].push(mdape(&pred, &truth, eval.mdape_eps)?);
        }
    }

    let points = counts
        .iter()
        .enumerate()
        .map(|(ci, &count)| {
            let (mean, std) = mean_std(&gr_acc[ci]);
            let valid: Vec<f64> = fe_mdape_all[ci].iter().flatten().cloned().collect();
            SweepPoint {
                channels: count,
                gr_accuracy_mean: mean,
                gr_accuracy_std: std,
                fe_rmse_mean: fe_rmse_all[ci].iter().sum::<f64>() / fe_rmse_all[ci].len() as f64,
                fe_mdape_mean: if valid.is_empty() {
                    None
                } else {
                    Some(valid.iter().sum::<f64>() / valid.len() as f64)
                },
            }
        })
        .collect();
    Ok(SweepReport { points })
}
