//! Raw EMG to normalized activation envelopes: rectify, causal low-pass,
//! MVC-percentile normalization. Both the batch path and the streaming
//! engine run the same filter structures sample by sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ForceNorm;
use crate::resample::align_force;
use crate::types::{GestureLabel, Hand, Sequence, NUM_CHANNELS};

/// Envelope extraction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub lowpass_cutoff_hz: f64,
    /// Butterworth order, 2 or 4.
    pub filter_order: usize,
    /// Percentile of the rectified-and-filtered signal used as the MVC
    /// normalization reference.
    pub mvc_percentile: f64,
    /// Normalized envelopes are clipped at this value.
    pub clip_max: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            lowpass_cutoff_hz: 5.0,
            filter_order: 2,
            mvc_percentile: 95.0,
            clip_max: 2.0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if !(self.lowpass_cutoff_hz > 0.0 && self.lowpass_cutoff_hz < sample_rate_hz / 2.0) {
            return Err(Error::Config(format!(
                "lowpass cutoff {} Hz outside (0, {}) at fs = {} Hz",
                self.lowpass_cutoff_hz,
                sample_rate_hz / 2.0,
                sample_rate_hz
            )));
        }
        if self.filter_order != 2 && self.filter_order != 4 {
            return Err(Error::Config(format!(
                "filter order must be 2 or 4, got {}",
                self.filter_order
            )));
        }
        if !(self.mvc_percentile > 0.0 && self.mvc_percentile <= 100.0) {
            return Err(Error::Config(format!(
                "mvc percentile must be in (0, 100], got {}",
                self.mvc_percentile
            )));
        }
        if !(self.clip_max > 0.0) {
            return Err(Error::Config("clip_max must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-channel MVC normalization scales, in raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvcReference {
    pub scale: [f64; NUM_CHANNELS],
}

impl MvcReference {
    pub fn validate(&self) -> Result<()> {
        if self.scale.iter().all(|s| *s > 0.0) {
            Ok(())
        } else {
            Err(Error::Model("MVC scales must all be > 0".into()))
        }
    }
}

/// A sequence converted to normalized envelopes, with the force track
/// resampled onto the EMG clock and per-sample gesture labels resolved.
#[derive(Debug, Clone)]
pub struct ProcessedSequence {
    pub id: String,
    pub subject_id: String,
    pub hand: Hand,
    pub task: GestureLabel,
    pub sample_rate_hz: f64,
    pub t: Vec<f64>,
    /// One envelope series per channel; values in `[0, clip_max]`.
    pub env: Vec<Vec<f64>>,
    /// Aligned force in newtons.
    pub force_raw: Vec<f64>,
    /// Aligned force in normalized units.
    pub force_norm: Vec<f64>,
    /// Gesture label at each sample.
    pub labels: Vec<GestureLabel>,
}

impl ProcessedSequence {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Causal IIR low-pass
// ---------------------------------------------------------------------------

/// One second-order section (transposed direct form II).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    s1: f64,
    s2: f64,
}

impl Biquad {
    /// Low-pass section with the given quality factor, unity DC gain.
    fn lowpass(cutoff_hz: f64, fs_hz: f64, q: f64) -> Biquad {
        let w0 = 2.0 * std::f64::consts::PI * cutoff_hz / fs_hz;
        let alpha = w0.sin() / (2.0 * q);
        let cosw = w0.cos();
        let a0 = 1.0 + alpha;
        Biquad {
            b0: (1.0 - cosw) / 2.0 / a0,
            b1: (1.0 - cosw) / a0,
            b2: (1.0 - cosw) / 2.0 / a0,
            a1: -2.0 * cosw / a0,
            a2: (1.0 - alpha) / a0,
            s1: 0.0,
            s2: 0.0,
        }
    }

    /// Puts the section in the steady state it would reach under a constant
    /// input `x0` (so a constant stream passes through unchanged).
    fn init_steady(&mut self, x0: f64) {
        self.s2 = (self.b2 - self.a2) * x0;
        self.s1 = (self.b1 - self.a1) * x0 + self.s2;
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.s1;
        self.s1 = self.b1 * x - self.a1 * y + self.s2;
        self.s2 = self.b2 * x - self.a2 * y;
        y
    }
}

/// Causal Butterworth low-pass as a cascade of second-order sections.
///
/// The state is initialized to the steady state of the first pushed sample,
/// so constant inputs produce no startup transient. One instance filters one
/// stream; it is not shareable across streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalLowpass {
    sections: Vec<Biquad>,
    primed: bool,
}

impl CausalLowpass {
    pub fn new(cutoff_hz: f64, fs_hz: f64, order: usize) -> Result<CausalLowpass> {
        if !(cutoff_hz > 0.0 && cutoff_hz < fs_hz / 2.0) {
            return Err(Error::Config(format!(
                "cutoff {cutoff_hz} Hz outside (0, {}) at fs = {fs_hz} Hz",
                fs_hz / 2.0
            )));
        }
        // Butterworth pole quality factors: Q_k = 1 / (2 cos theta_k) with
        // theta_k = (2k + 1) * pi / (2n).
        let qs: Vec<f64> = match order {
            2 => vec![std::f64::consts::FRAC_1_SQRT_2],
            4 => {
                let n = 4.0;
                (0..2)
                    .map(|k| {
                        let theta = (2.0 * k as f64 + 1.0) * std::f64::consts::PI / (2.0 * n);
                        1.0 / (2.0 * theta.cos())
                    })
                    .collect()
            }
            _ => {
                return Err(Error::Config(format!(
                    "filter order must be 2 or 4, got {order}"
                )))
            }
        };
        Ok(CausalLowpass {
            sections: qs
                .into_iter()
                .map(|q| Biquad::lowpass(cutoff_hz, fs_hz, q))
                .collect(),
            primed: false,
        })
    }

    /// Feeds one sample and returns the filtered value.
    pub fn push(&mut self, x: f64) -> f64 {
        if !self.primed {
            for s in self.sections.iter_mut() {
                // Unity DC gain per section, so every section settles at x.
                s.init_steady(x);
            }
            self.primed = true;
        }
        let mut v = x;
        for s in self.sections.iter_mut() {
            v = s.tick(v);
        }
        v
    }

    pub fn reset(&mut self) {
        for s in self.sections.iter_mut() {
            s.s1 = 0.0;
            s.s2 = 0.0;
        }
        self.primed = false;
    }
}

/// Full-wave rectification.
pub fn rectify(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.abs()).collect()
}

/// Causal Butterworth low-pass over a whole series; see [`CausalLowpass`].
pub fn lowpass_causal(x: &[f64], cutoff_hz: f64, fs_hz: f64, order: usize) -> Result<Vec<f64>> {
    let mut filt = CausalLowpass::new(cutoff_hz, fs_hz, order)?;
    Ok(x.iter().map(|&v| filt.push(v)).collect())
}

/// Percentile by linear interpolation between order statistics.
/// `values` need not be sorted; `p` in (0, 100].
pub fn percentile_interpolated(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty series");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

const MVC_FLOOR: f64 = 1e-9;
const MIN_MVC_FRAMES: usize = 100;

/// Per-channel MVC scale: the configured percentile of the
/// rectified-and-filtered signal over the whole sequence.
pub fn mvc_reference(s: &Sequence, cfg: &PreprocessConfig) -> Result<MvcReference> {
    cfg.validate(s.sample_rate_hz)?;
    if s.emg.len() < MIN_MVC_FRAMES {
        return Err(Error::Insufficient(format!(
            "sequence {} has {} frames, need >= {MIN_MVC_FRAMES} for an MVC reference",
            s.id,
            s.emg.len()
        )));
    }
    let mut scale = [0.0; NUM_CHANNELS];
    for (ch, out) in scale.iter_mut().enumerate() {
        let raw: Vec<f64> = s.emg.iter().map(|f| f.values[ch]).collect();
        let env = lowpass_causal(
            &rectify(&raw),
            cfg.lowpass_cutoff_hz,
            s.sample_rate_hz,
            cfg.filter_order,
        )?;
        let p = percentile_interpolated(&env, cfg.mvc_percentile);
        *out = if p <= MVC_FLOOR { MVC_FLOOR } else { p };
    }
    Ok(MvcReference { scale })
}

/// MVC scale pooled over several sequences of one forearm: the percentile
/// is taken over the concatenated rectified-and-filtered samples, so the
/// reference reflects the strongest task recorded for each channel and the
/// same constants apply to every task of that forearm.
pub fn mvc_reference_pooled(seqs: &[&Sequence], cfg: &PreprocessConfig) -> Result<MvcReference> {
    let total: usize = seqs.iter().map(|s| s.emg.len()).sum();
    if total < MIN_MVC_FRAMES {
        return Err(Error::Insufficient(format!(
            "pooled MVC reference needs >= {MIN_MVC_FRAMES} frames, got {total}"
        )));
    }
    let mut scale = [0.0; NUM_CHANNELS];
    for (ch, out) in scale.iter_mut().enumerate() {
        let mut pooled = Vec::with_capacity(total);
        for s in seqs {
            cfg.validate(s.sample_rate_hz)?;
            let raw: Vec<f64> = s.emg.iter().map(|f| f.values[ch]).collect();
            pooled.extend(lowpass_causal(
                &rectify(&raw),
                cfg.lowpass_cutoff_hz,
                s.sample_rate_hz,
                cfg.filter_order,
            )?);
        }
        let p = percentile_interpolated(&pooled, cfg.mvc_percentile);
        *out = if p <= MVC_FLOOR { MVC_FLOOR } else { p };
    }
    Ok(MvcReference { scale })
}

/// Scales by the reference and clips at `clip_max`.
pub fn normalize(x: &[f64], reference: f64, clip_max: f64) -> Vec<f64> {
    x.iter().map(|v| (v / reference).min(clip_max)).collect()
}

/// Runs the fixed per-channel chain — rectify, causal low-pass, MVC
/// normalization — and aligns/normalizes the force track.
///
/// When `mvc` is absent the reference is computed from this sequence; when
/// `force_norm` is absent the constants are fitted from this sequence's
/// aligned force.
pub fn preprocess_sequence(
    s: &Sequence,
    cfg: &PreprocessConfig,
    mvc: Option<&MvcReference>,
    force_norm: Option<&ForceNorm>,
) -> Result<ProcessedSequence> {
    cfg.validate(s.sample_rate_hz)?;
    let reference = match mvc {
        Some(r) => {
            r.validate()?;
            r.clone()
        }
        None => mvc_reference(s, cfg)?,
    };

    let mut env = Vec::with_capacity(NUM_CHANNELS);
    for ch in 0..NUM_CHANNELS {
        let raw: Vec<f64> = s.emg.iter().map(|f| f.values[ch]).collect();
        let filtered = lowpass_causal(
            &rectify(&raw),
            cfg.lowpass_cutoff_hz,
            s.sample_rate_hz,
            cfg.filter_order,
        )?;
        // Filter undershoot can dip below zero; envelopes are non-negative.
        let clamped: Vec<f64> = filtered.iter().map(|v| v.max(0.0)).collect();
        env.push(normalize(&clamped, reference.scale[ch], cfg.clip_max));
    }

    let force_raw = align_force(s)?;
    let fnorm = match force_norm {
        Some(n) => n.clone(),
        None => ForceNorm::fit(&force_raw)?,
    };
    let force_norm_series = fnorm.apply_series(&force_raw);

    Ok(ProcessedSequence {
        id: s.id.clone(),
        subject_id: s.subject_id.clone(),
        hand: s.hand,
        task: s.task,
        sample_rate_hz: s.sample_rate_hz,
        t: s.emg.iter().map(|f| f.t).collect(),
        env,
        force_raw,
        force_norm: force_norm_series,
        labels: s.emg.iter().map(|f| s.label_at(f.t)).collect(),
    })
}
