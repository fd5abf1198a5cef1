//! Sliding-window feature expansion: per-channel time-domain statistics
//! plus autoregressive coefficients, and cross-channel spatial statistics.
//!
//! Feature ordering is fixed and serialized with the model: for each
//! selected channel (in subset order) `[MAV, RMS, VAR, STD, MAX, MIN, WL,
//! AR1..ARp]`, followed by the spatial block `[MAV, RMS, VAR, STD, MAX,
//! MIN]` when enabled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::ProcessedSequence;
use crate::types::{ChannelId, GestureLabel};

/// Windowing and expansion parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    /// Window length N in samples (200 ms at 100 Hz by default).
    pub window_len: usize,
    /// Hop between consecutive windows, in samples.
    pub stride: usize,
    /// Autoregressive model order p.
    pub ar_order: usize,
    /// Whether the cross-channel spatial block is appended.
    pub include_spatial: bool,
    /// Selected channels, in selection order.
    pub channels: Vec<ChannelId>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window_len: 20,
            stride: 5,
            ar_order: 4,
            include_spatial: true,
            channels: ChannelId::all().to_vec(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len < self.ar_order + 2 {
            return Err(Error::Config(format!(
                "window_len {} must be >= ar_order + 2 = {}",
                self.window_len,
                self.ar_order + 2
            )));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be >= 1".into()));
        }
        if self.channels.is_empty() || self.channels.len() > 8 {
            return Err(Error::Config(format!(
                "channel subset size {} outside 1..=8",
                self.channels.len()
            )));
        }
        let mut seen = [false; 8];
        for ch in &self.channels {
            if seen[ch.index0()] {
                return Err(Error::Config(format!("duplicate channel {ch} in subset")));
            }
            seen[ch.index0()] = true;
        }
        Ok(())
    }

    /// Number of features per row.
    pub fn feature_len(&self) -> usize {
        self.channels.len() * (7 + self.ar_order) + if self.include_spatial { 6 } else { 0 }
    }

    /// Column names matching the row layout.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.feature_len());
        for ch in &self.channels {
            for stat in ["mav", "rms", "var", "std", "max", "min", "wl"] {
                names.push(format!("ch{ch}_{stat}"));
            }
            for k in 1..=self.ar_order {
                names.push(format!("ch{ch}_ar{k}"));
            }
        }
        if self.include_spatial {
            for stat in ["mav", "rms", "var", "std", "max", "min"] {
                names.push(format!("spatial_{stat}"));
            }
        }
        names
    }
}

/// One full analysis window over the selected channels.
#[derive(Debug, Clone)]
pub struct Window {
    /// Envelope block, `channels.len()` rows of `window_len` samples.
    pub block: Vec<Vec<f64>>,
    /// Timestamp of the window's last sample.
    pub t_end: f64,
    /// Gesture at the last sample (causal labeling).
    pub label: GestureLabel,
    /// Mean aligned normalized force over the window.
    pub force_target: f64,
}

/// Windowed feature rows with their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<GestureLabel>,
    pub force_targets: Vec<f64>,
    pub t_end: Vec<f64>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn append(&mut self, mut other: FeatureMatrix) {
        debug_assert_eq!(self.names, other.names);
        self.rows.append(&mut other.rows);
        self.labels.append(&mut other.labels);
        self.force_targets.append(&mut other.force_targets);
        self.t_end.append(&mut other.t_end);
    }

    /// CSV export for inspection: timestamp, targets, then feature columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s,label,force_norm");
        for name in &self.names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for i in 0..self.rows.len() {
            out.push_str(&crate::io::fmt_sig9(self.t_end[i]));
            out.push(',');
            out.push_str(self.labels[i].as_str());
            out.push(',');
            out.push_str(&crate::io::fmt_sig9(self.force_targets[i]));
            for v in &self.rows[i] {
                out.push(',');
                out.push_str(&crate::io::fmt_sig9(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Cuts full windows out of a processed sequence. Windows end at samples
/// `N-1, N-1+stride, ...`; no padding is used.
pub fn make_windows(ps: &ProcessedSequence, cfg: &FeatureConfig) -> Result<Vec<Window>> {
    cfg.validate()?;
    let n = cfg.window_len;
    let len = ps.len();
    if len < n {
        return Err(Error::Insufficient(format!(
            "sequence {} has {len} samples, shorter than window {n}",
            ps.id
        )));
    }
    let count = (len - n) / cfg.stride + 1;
    let mut windows = Vec::with_capacity(count);
    for w in 0..count {
        let end = n - 1 + w * cfg.stride;
        let start = end + 1 - n;
        let block: Vec<Vec<f64>> = cfg
            .channels
            .iter()
            .map(|ch| ps.env[ch.index0()][start..=end].to_vec())
            .collect();
        let force_target = ps.force_norm[start..=end].iter().sum::<f64>() / n as f64;
        windows.push(Window {
            block,
            t_end: ps.t[end],
            label: ps.labels[end],
            force_target,
        });
    }
    Ok(windows)
}

/// Time-domain statistics plus Burg AR coefficients for one channel's
/// window: `[MAV, RMS, VAR, STD, MAX, MIN, WL, AR1..ARp]`.
pub fn time_features(x: &[f64], ar_order: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n < ar_order + 2 {
        return Err(Error::Insufficient(format!(
            "need >= {} samples for AR order {ar_order}, got {n}",
            ar_order + 2
        )));
    }
    let nf = n as f64;
    let mav = x.iter().map(|v| v.abs()).sum::<f64>() / nf;
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / nf).sqrt();
    let mean = x.iter().sum::<f64>() / nf;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    let std = var.sqrt();
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let wl = x.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>();

    let mut out = Vec::with_capacity(7 + ar_order);
    out.extend_from_slice(&[mav, rms, var, std, max, min, wl]);
    out.extend(burg_ar(x, ar_order)?);
    Ok(out)
}

/// Burg-method AR coefficients in prediction form:
/// `x[n] ~ sum_k coeff[k] * x[n-k-1]`.
///
/// Windows with population variance below 1e-12 return all zeros.
pub fn burg_ar(x: &[f64], order: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n < order + 2 {
        return Err(Error::Insufficient(format!(
            "need >= {} samples for AR order {order}, got {n}",
            order + 2
        )));
    }
    if order == 0 {
        return Ok(Vec::new());
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var < 1e-12 {
        return Ok(vec![0.0; order]);
    }

    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut fwd = x.to_vec();
    let mut bwd = x.to_vec();
    for m in 1..=order {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in m..n {
            num += fwd[i] * bwd[i - 1];
            den += fwd[i] * fwd[i] + bwd[i - 1] * bwd[i - 1];
        }
        let k = if den <= f64::MIN_POSITIVE {
            0.0
        } else {
            -2.0 * num / den
        };
        let prev = a.clone();
        for j in 1..=m {
            a[j] = prev[j] + k * prev[m - j];
        }
        for i in (m..n).rev() {
            let fi = fwd[i];
            let bi = bwd[i - 1];
            fwd[i] = fi + k * bi;
            bwd[i] = bi + k * fi;
        }
    }
    Ok(a[1..].iter().map(|v| -v).collect())
}

/// Cross-channel statistics: `{MAV, RMS, VAR, STD, MAX, MIN}` computed
/// across the K channels at each sample time, averaged over the window.
pub fn spatial_features(block: &[Vec<f64>]) -> [f64; 6] {
    let k = block.len();
    let n = block[0].len();
    debug_assert!(k >= 1);
    let kf = k as f64;
    let mut acc = [0.0f64; 6];
    for i in 0..n {
        let mut sum_abs = 0.0;
        let mut sum_sq = 0.0;
        let mut sum = 0.0;
        let mut mx = f64::NEG_INFINITY;
        let mut mn = f64::INFINITY;
        for ch in block {
            let v = ch[i];
            sum_abs += v.abs();
            sum_sq += v * v;
            sum += v;
            mx = mx.max(v);
            mn = mn.min(v);
        }
        let mean = sum / kf;
        let var = sum_sq / kf - mean * mean;
        let var = var.max(0.0);
        acc[0] += sum_abs / kf;
        acc[1] += (sum_sq / kf).sqrt();
        acc[2] += var;
        acc[3] += var.sqrt();
        acc[4] += mx;
        acc[5] += mn;
    }
    let nf = n as f64;
    for v in acc.iter_mut() {
        *v /= nf;
    }
    acc
}

/// Expands every window into one fixed-order feature row.
pub fn extract_features(windows: &[Window], cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::Insufficient(
            "no windows to extract features from".into(),
        ));
    }
    let names = cfg.feature_names();
    let mut rows = Vec::with_capacity(windows.len());
    let mut labels = Vec::with_capacity(windows.len());
    let mut force_targets = Vec::with_capacity(windows.len());
    let mut t_end = Vec::with_capacity(windows.len());

    for w in windows {
        let mut row = Vec::with_capacity(names.len());
        for ch in &w.block {
            row.extend(time_features(ch, cfg.ar_order)?);
        }
        if cfg.include_spatial {
            row.extend_from_slice(&spatial_features(&w.block));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant {
                id: "<features>".into(),
                msg: format!("non-finite feature in window ending at t={}", w.t_end),
            });
        }
        rows.push(row);
        labels.push(w.label);
        force_targets.push(w.force_target);
        t_end.push(w.t_end);
    }

    Ok(FeatureMatrix {
        names,
        rows,
        labels,
        force_targets,
        t_end,
    })
}
