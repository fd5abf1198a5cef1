//! End-to-end training and batch inference: preprocessing, channel
//! selection, feature expansion, reduction and model fitting behind one
//! call, plus the window-cadence batch predictor the streaming engine is
//! checked against.
//!
//! [`FoldContext`] exposes the stages separately so cross-validation sweeps
//! can preprocess and rank once per fold and refit only the downstream
//! stages per channel count.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_features, make_windows, FeatureConfig, FeatureMatrix};
use crate::models::{
    ForceNorm, ForceNormScope, KnnModel, ModelConfig, PipelineModel, RegressionTree,
    MODEL_SCHEMA_VERSION,
};
use crate::preprocess::{
    mvc_reference_pooled, preprocess_sequence, CausalLowpass, MvcReference, PreprocessConfig,
    ProcessedSequence,
};
use crate::reduction::{PcaModel, ReductionConfig, Scaler};
use crate::resample::align_force;
use crate::selection::{mrmr_rank, select_channels, ChannelRanking, MrmrTarget, SelectionConfig};
use crate::types::{ChannelId, GestureLabel, Hand, Sequence};

/// All stage parameters in one place; the defaults mirror the reference
/// pipeline (5 Hz envelope filter, 95th-percentile MVC, 200 ms windows,
/// AR order 4, 95% PCA variance, 10-NN, min leaf 10, 1 Hz output filter).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub features: FeatureConfig,
    pub selection: SelectionConfig,
    pub reduction: ReductionConfig,
    pub model: ModelConfig,
}

/// Key used to group sequences recorded from one forearm.
pub type GroupKey = (String, Hand);

/// A trained pipeline plus the per-group fit artifacts that evaluation
/// needs to preprocess held-out sequences consistently.
#[derive(Debug, Clone)]
pub struct FittedPipeline {
    pub model: PipelineModel,
    /// Ranking that picked the model's channel subset.
    pub ranking: ChannelRanking,
    /// Per-forearm MVC references fitted on the training sequences.
    pub group_mvc: BTreeMap<GroupKey, MvcReference>,
    /// Per-subject force constants (populated under `Subject` scope).
    pub subject_force_norms: BTreeMap<String, ForceNorm>,
    /// Retained PCA component count.
    pub pca_retained: usize,
    /// Window-level training accuracy of the KNN head.
    pub train_accuracy: f64,
}

impl FittedPipeline {
    /// MVC reference for a sequence: its forearm's training reference when
    /// available, otherwise the model's pooled reference.
    pub fn mvc_for(&self, s: &Sequence) -> &MvcReference {
        self.group_mvc
            .get(&(s.subject_id.clone(), s.hand))
            .unwrap_or(&self.model.mvc)
    }

    /// Force constants for a sequence under the configured scope.
    pub fn force_norm_for(&self, s: &Sequence) -> &ForceNorm {
        self.subject_force_norms
            .get(&s.subject_id)
            .unwrap_or(&self.model.force_norm)
    }
}

fn group_key(s: &Sequence) -> GroupKey {
    (s.subject_id.clone(), s.hand)
}

/// Training-side state that does not depend on the channel subset:
/// preprocessed sequences and normalization constants.
pub struct FoldContext {
    cfg: PipelineConfig,
    sample_rate_hz: f64,
    processed: Vec<ProcessedSequence>,
    group_mvc: BTreeMap<GroupKey, MvcReference>,
    pooled_mvc: MvcReference,
    pooled_norm: ForceNorm,
    subject_force_norms: BTreeMap<String, ForceNorm>,
}

impl FoldContext {
    /// Preprocesses the training sequences and fits every normalization
    /// constant (per-forearm MVC references, force constants under the
    /// configured scope). `force_norm_override` substitutes externally
    /// fitted force constants.
    pub fn prepare(
        sequences: &[&Sequence],
        cfg: &PipelineConfig,
        force_norm_override: Option<ForceNorm>,
    ) -> Result<FoldContext> {
        if sequences.is_empty() {
            return Err(Error::Insufficient(
                "cannot fit a pipeline on zero sequences".into(),
            ));
        }
        let sample_rate_hz = sequences[0].sample_rate_hz;
        for s in sequences {
            if (s.sample_rate_hz - sample_rate_hz).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "mixed sample rates: {} vs {}",
                    s.sample_rate_hz, sample_rate_hz
                )));
            }
        }
        cfg.preprocess.validate(sample_rate_hz)?;

        let mut groups: BTreeMap<GroupKey, Vec<&Sequence>> = BTreeMap::new();
        for s in sequences {
            groups.entry(group_key(s)).or_default().push(s);
        }
        let mut group_mvc = BTreeMap::new();
        for (key, seqs) in &groups {
            group_mvc.insert(key.clone(), mvc_reference_pooled(seqs, &cfg.preprocess)?);
        }
        let pooled_mvc = mvc_reference_pooled(sequences, &cfg.preprocess)?;

        let pooled_norm = match &force_norm_override {
            Some(n) => n.clone(),
            None => {
                let mut all = Vec::new();
                for s in sequences {
                    all.extend(align_force(s)?);
                }
                ForceNorm::fit(&all)?
            }
        };
        let mut subject_force_norms = BTreeMap::new();
        if force_norm_override.is_none() && cfg.model.force_norm_scope == ForceNormScope::Subject {
            let mut by_subject: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for s in sequences {
                by_subject
                    .entry(s.subject_id.clone())
                    .or_default()
                    .extend(align_force(s)?);
            }
            for (subject, forces) in by_subject {
                subject_force_norms.insert(subject, ForceNorm::fit(&forces)?);
            }
        }

        let mut processed = Vec::with_capacity(sequences.len());
        for s in sequences {
            let mvc = &group_mvc[&group_key(s)];
            let fnorm = subject_force_norms
                .get(&s.subject_id)
                .unwrap_or(&pooled_norm);
            processed.push(preprocess_sequence(
                s,
                &cfg.preprocess,
                Some(mvc),
                Some(fnorm),
            )?);
        }

        Ok(FoldContext {
            cfg: cfg.clone(),
            sample_rate_hz,
            processed,
            group_mvc,
            pooled_mvc,
            pooled_norm,
            subject_force_norms,
        })
    }

    /// mRMR ranking of the eight channels against the given target.
    ///
    /// The gesture target pools gesture-task sequences only: step-force
    /// recordings label their whole staircase as one class and would swamp
    /// the per-sample label distribution. The force target pools
    /// everything.
    pub fn rank(&self, target: MrmrTarget) -> Result<ChannelRanking> {
        let refs: Vec<&ProcessedSequence> = match target {
            MrmrTarget::Gesture => self
                .processed
                .iter()
                .filter(|ps| !ps.id.ends_with("_step"))
                .collect(),
            MrmrTarget::Force => self.processed.iter().collect(),
        };
        if refs.is_empty() {
            return Err(Error::Insufficient(
                "no sequences available for the requested ranking target".into(),
            ));
        }
        mrmr_rank(&refs, target, &self.cfg.selection)
    }

    /// The preprocessed training sequences.
    pub fn processed(&self) -> &[ProcessedSequence] {
        &self.processed
    }

    /// Fits the windowing, reduction and model stages on a fixed channel
    /// subset taken from `ranking`.
    pub fn fit_with_ranking(
        &self,
        ranking: &ChannelRanking,
        channel_count: usize,
    ) -> Result<FittedPipeline> {
        let channels = select_channels(ranking, channel_count)?;
        let features = FeatureConfig {
            channels: channels.clone(),
            ..self.cfg.features.clone()
        };

        let mut matrix: Option<FeatureMatrix> = None;
        for ps in &self.processed {
            let windows = make_windows(ps, &features)?;
            let fm = extract_features(&windows, &features)?;
            match matrix.as_mut() {
                Some(m) => m.append(fm),
                None => matrix = Some(fm),
            }
        }
        let matrix = matrix.expect("nonempty sequence list");

        let scaler = Scaler::fit(&matrix.rows)?;
        let standardized = scaler.apply(&matrix.rows)?;
        let pca = PcaModel::fit(&standardized, self.cfg.reduction.variance_target)?;
        let reduced = pca.transform(&standardized)?;
        let knn = KnnModel::fit(&reduced, &matrix.labels, self.cfg.model.knn_k)?;
        let tree = RegressionTree::fit(&reduced, &matrix.force_targets, self.cfg.model.min_leaf)?;

        let mut correct = 0usize;
        for (row, truth) in reduced.iter().zip(&matrix.labels) {
            if knn.predict(row)? == *truth {
                correct += 1;
            }
        }
        let train_accuracy = correct as f64 / reduced.len() as f64;

        let pca_retained = pca.retained;
        let model = PipelineModel {
            schema_version: MODEL_SCHEMA_VERSION.to_string(),
            channels,
            preprocess: self.cfg.preprocess.clone(),
            mvc: self.pooled_mvc.clone(),
            features,
            scaler,
            pca,
            knn,
            tree,
            force_norm: self.pooled_norm.clone(),
            output_filter_hz: self.cfg.model.output_filter_hz,
            sample_rate_hz: self.sample_rate_hz,
        };
        model.validate()?;
        let window_rate = self.sample_rate_hz / model.features.stride as f64;
        if model.output_filter_hz >= window_rate / 2.0 {
            return Err(Error::Config(format!(
                "output filter cutoff {} Hz not below half the window rate {} Hz",
                model.output_filter_hz, window_rate
            )));
        }

        Ok(FittedPipeline {
            model,
            ranking: ranking.clone(),
            group_mvc: self.group_mvc.clone(),
            subject_force_norms: self.subject_force_norms.clone(),
            pca_retained,
            train_accuracy,
        })
    }
}

/// Trains the full pipeline on the given sequences.
///
/// `target` selects which mRMR ranking drives the channel subset (gesture
/// for recognition-centric models, force for estimation studies; they
/// agree on well-behaved data).
pub fn fit_pipeline(
    sequences: &[&Sequence],
    cfg: &PipelineConfig,
    target: MrmrTarget,
    force_norm_override: Option<ForceNorm>,
) -> Result<FittedPipeline> {
    let ctx = FoldContext::prepare(sequences, cfg, force_norm_override)?;
    let ranking = ctx.rank(target)?;
    ctx.fit_with_ranking(&ranking, cfg.model.channels)
}

/// One window-cadence prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPrediction {
    pub t: f64,
    pub truth_label: GestureLabel,
    pub pred_label: GestureLabel,
    pub truth_force: f64,
    /// Tree output after the causal output filter, normalized units.
    pub pred_force: f64,
}

/// Batch inference over one sequence with explicit normalization constants
/// (evaluation passes training-fold constants; deployment uses the model's).
pub fn predict_sequence_with(
    model: &PipelineModel,
    s: &Sequence,
    mvc: &MvcReference,
    force_norm: &ForceNorm,
) -> Result<Vec<WindowPrediction>> {
    let ps = preprocess_sequence(s, &model.preprocess, Some(mvc), Some(force_norm))?;
    let windows = make_windows(&ps, &model.features)?;
    let fm = extract_features(&windows, &model.features)?;

    let window_rate = model.sample_rate_hz / model.features.stride as f64;
    let mut out_filter = CausalLowpass::new(model.output_filter_hz, window_rate, 2)?;

    let mut out = Vec::with_capacity(fm.n_rows());
    for i in 0..fm.n_rows() {
        let reduced = model
            .pca
            .transform_row(&model.scaler.apply_row(&fm.rows[i])?)?;
        let (label, raw_force) = model.predict_reduced(&reduced)?;
        out.push(WindowPrediction {
            t: fm.t_end[i],
            truth_label: fm.labels[i],
            pred_label: label,
            truth_force: fm.force_targets[i],
            pred_force: out_filter.push(raw_force),
        });
    }
    Ok(out)
}

/// Batch inference using the constants stored in the bundle.
pub fn predict_sequence(model: &PipelineModel, s: &Sequence) -> Result<Vec<WindowPrediction>> {
    predict_sequence_with(model, s, &model.mvc, &model.force_norm)
}

/// Channels that are candidates for a model, in id order.
pub fn all_channels() -> Vec<ChannelId> {
    ChannelId::all().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_dataset, SynthSpec};

    fn small_spec() -> SynthSpec {
        SynthSpec {
            subjects: 2,
            hands_per_subject: 2,
            rest_s: (1.2, 1.4),
            hold_s: (1.5, 1.8),
            ramp_s: 0.5,
            step_hold_s: (0.6, 0.8),
            ..Default::default()
        }
    }

    #[test]
    fn fit_produces_consistent_model() {
        let d = generate_dataset(&small_spec()).unwrap();
        let seqs: Vec<&Sequence> = d.sequences.iter().collect();
        let cfg = PipelineConfig::default();
        let fitted = fit_pipeline(&seqs, &cfg, MrmrTarget::Gesture, None).unwrap();

        fitted.model.validate().unwrap();
        assert_eq!(fitted.model.channels.len(), cfg.model.channels);
        assert_eq!(fitted.group_mvc.len(), 4); // 2 subjects x 2 hands
        assert!(
            fitted.train_accuracy > 0.5,
            "training accuracy {}",
            fitted.train_accuracy
        );
    }

    #[test]
    fn planted_channels_rank_on_top_even_on_small_data() {
        let d = generate_dataset(&small_spec()).unwrap();
        let seqs: Vec<&Sequence> = d.sequences.iter().collect();
        let fitted =
            fit_pipeline(&seqs, &PipelineConfig::default(), MrmrTarget::Gesture, None).unwrap();
        let mut top: Vec<u8> = fitted.ranking.order[..3].iter().map(|c| c.get()).collect();
        top.sort();
        assert_eq!(top, vec![2, 5, 8], "ranking {:?}", fitted.ranking.order);
    }

    #[test]
    fn fitting_twice_gives_identical_models() {
        let d = generate_dataset(&small_spec()).unwrap();
        let seqs: Vec<&Sequence> = d.sequences.iter().collect();
        let cfg = PipelineConfig::default();
        let a = fit_pipeline(&seqs, &cfg, MrmrTarget::Gesture, None).unwrap();
        let b = fit_pipeline(&seqs, &cfg, MrmrTarget::Gesture, None).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn batch_prediction_runs_on_held_out_sequence() {
        let d = generate_dataset(&small_spec()).unwrap();
        let train: Vec<&Sequence> = d.sequences.iter().skip(1).collect();
        let test = &d.sequences[0];
        let fitted = fit_pipeline(
            &train,
            &PipelineConfig::default(),
            MrmrTarget::Gesture,
            None,
        )
        .unwrap();
        let preds = predict_sequence_with(
            &fitted.model,
            test,
            fitted.mvc_for(test),
            fitted.force_norm_for(test),
        )
        .unwrap();
        assert!(!preds.is_empty());
        for p in &preds {
            assert!(p.pred_force.is_finite());
        }
    }

    #[test]
    fn requested_channel_count_is_honored() {
        let d = generate_dataset(&small_spec()).unwrap();
        let seqs: Vec<&Sequence> = d.sequences.iter().collect();
        let mut cfg = PipelineConfig::default();
        cfg.model.channels = 8;
        let fitted = fit_pipeline(&seqs, &cfg, MrmrTarget::Force, None).unwrap();
        let mut chans = fitted.model.channels.clone();
        chans.sort();
        assert_eq!(chans, ChannelId::all().to_vec());
    }

    #[test]
    fn sweep_reuses_one_context_per_fold() {
        let d = generate_dataset(&small_spec()).unwrap();
        let seqs: Vec<&Sequence> = d.sequences.iter().collect();
        let cfg = PipelineConfig::default();
        let ctx = FoldContext::prepare(&seqs, &cfg, None).unwrap();
        let ranking = ctx.rank(MrmrTarget::Gesture).unwrap();
        let m1 = ctx.fit_with_ranking(&ranking, 1).unwrap();
        let m3 = ctx.fit_with_ranking(&ranking, 3).unwrap();
        assert_eq!(m1.model.channels.len(), 1);
        assert_eq!(m3.model.channels.len(), 3);
        assert_eq!(m1.model.channels[0], ranking.order[0]);
    }

    #[test]
    fn subject_scope_fits_per_subject_force_constants() {
        let d = generate_dataset(&small_spec()).unwrap();
        let seqs: Vec<&Sequence> = d.sequences.iter().collect();
        let mut cfg = PipelineConfig::default();
        cfg.model.force_norm_scope = crate::models::ForceNormScope::Subject;
        let fitted = fit_pipeline(&seqs, &cfg, MrmrTarget::Gesture, None).unwrap();
        assert_eq!(fitted.subject_force_norms.len(), 2);
        for s in &d.sequences {
            let norm = fitted.force_norm_for(s);
            assert_eq!(norm, &fitted.subject_force_norms[&s.subject_id]);
        }
        // Subjects see different force ranges, so the constants differ.
        let norms: Vec<&crate::models::ForceNorm> = fitted.subject_force_norms.values().collect();
        assert_ne!(norms[0], norms[1]);
    }
}
