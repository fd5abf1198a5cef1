//! mRMR channel ranking: mutual information between per-sample channel
//! envelopes and the target (gesture class or binned force), combined with
//! the greedy difference criterion (relevance minus mean redundancy).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::ProcessedSequence;
use crate::types::{ChannelId, NUM_CHANNELS};

/// Estimator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    /// Equal-frequency bins for channel envelopes.
    pub channel_bins: usize,
    /// Equal-width bins over [0, 1] for the normalized force target.
    pub force_bins: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            channel_bins: 16,
            force_bins: 10,
        }
    }
}

/// What the ranking is computed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MrmrTarget {
    /// Per-sample gesture labels.
    Gesture,
    /// Normalized force, binned equal-width over [0, 1].
    Force,
}

/// A real series reduced to integer symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedSeries {
    pub symbols: Vec<u32>,
    /// Bin edges; symbol = number of edges <= value.
    pub edges: Vec<f64>,
}

/// Equal-frequency binning on order statistics. Tied values never split
/// across a bin boundary: edges sit at midpoints between distinct values.
pub fn discretize_ef(x: &[f64], bins: usize) -> Result<DiscretizedSeries> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!(
            "need >= 2 bins, got {bins}"
        )));
    }
    if x.len() < bins {
        return Err(Error::Insufficient(format!(
            "series length {} shorter than bin count {bins}",
            x.len()
        )));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();

    // Positions where the sorted value changes; an edge may only sit at one
    // of these breakpoints.
    let breakpoints: Vec<usize> = (1..n).filter(|&i| sorted[i] > sorted[i - 1]).collect();

    let mut edges: Vec<f64> = Vec::new();
    for j in 1..bins {
        let target = j as f64 * n as f64 / bins as f64;
        // Nearest breakpoint to the target rank (lower index on ties).
        let best = breakpoints
            .iter()
            .min_by(|&&a, &&b| {
                let da = (a as f64 - target).abs();
                let db = (b as f64 - target).abs();
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .copied();
        if let Some(i) = best {
            let edge = 0.5 * (sorted[i - 1] + sorted[i]);
            if edges.last().map_or(true, |&last| edge > last) {
                edges.push(edge);
            }
        }
    }

    let symbols = x
        .iter()
        .map(|&v| edges.iter().take_while(|&&e| v >= e).count() as u32)
        .collect();
    Ok(DiscretizedSeries { symbols, edges })
}

/// Equal-width binning over `[lo, hi]`; values outside clamp to the end bins.
pub fn discretize_ew(x: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<u32> {
    debug_assert!(bins >= 1 && hi > lo);
    let width = (hi - lo) / bins as f64;
    x.iter()
        .map(|&v| {
            let b = ((v - lo) / width).floor();
            (b.clamp(0.0, bins as f64 - 1.0)) as u32
        })
        .collect()
}

/// Plug-in mutual information estimate in bits, with `0 log 0 = 0`.
pub fn mutual_information(a: &[u32], b: &[u32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Insufficient(
            "mutual information of empty series".into(),
        ));
    }
    let ka = *a.iter().max().unwrap() as usize + 1;
    let kb = *b.iter().max().unwrap() as usize + 1;
    let mut joint = vec![0u64; ka * kb];
    let mut pa = vec![0u64; ka];
    let mut pb = vec![0u64; kb];
    for (&x, &y) in a.iter().zip(b) {
        joint[x as usize * kb + y as usize] += 1;
        pa[x as usize] += 1;
        pb[y as usize] += 1;
    }
    let n = a.len() as f64;
    let mut mi = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            let c = joint[x * kb + y];
            if c == 0 {
                continue;
            }
            let pxy = c as f64 / n;
            let px = pa[x] as f64 / n;
            let py = pb[y] as f64 / n;
            mi += pxy * (pxy / (px * py)).log2();
        }
    }
    // Plug-in MI is non-negative up to rounding.
    Ok(mi.max(0.0))
}

/// Shannon entropy in bits of a discrete series.
pub fn entropy(a: &[u32]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let k = *a.iter().max().unwrap() as usize + 1;
    let mut counts = vec![0u64; k];
    for &x in a {
        counts[x as usize] += 1;
    }
    let n = a.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Ordered channel ranking with the greedy objective recorded at each pick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRanking {
    /// Channels in selection order.
    pub order: Vec<ChannelId>,
    /// mRMR objective at the moment each channel was picked.
    pub objectives: Vec<f64>,
    /// Min-shifted, sum-normalized objectives (non-negative, sum 1).
    pub scores: Vec<f64>,
    pub target: MrmrTarget,
}

impl ChannelRanking {
    /// CSV export: channel,rank,objective,score.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("channel,rank,objective,score\n");
        for (rank, ((ch, obj), score)) in self
            .order
            .iter()
            .zip(&self.objectives)
            .zip(&self.scores)
            .enumerate()
        {
            out.push_str(&format!(
                "{},{},{},{}\n",
                ch,
                rank + 1,
                crate::io::fmt_sig9(*obj),
                crate::io::fmt_sig9(*score)
            ));
        }
        out
    }
}

const MIN_MRMR_SAMPLES: usize = 1000;

/// Greedy mRMR (difference scheme) over the eight channels.
///
/// Envelope samples are pooled across sequences and discretized with
/// equal-frequency bins; the first pick maximizes relevance `I(ch; y)`,
/// later picks maximize `I(ch; y) - mean_{s in S} I(ch; s)`. Ties break
/// toward the lower channel id.
pub fn mrmr_rank(
    sequences: &[&ProcessedSequence],
    target: MrmrTarget,
    cfg: &SelectionConfig,
) -> Result<ChannelRanking> {
    if cfg.channel_bins < 2 {
        return Err(Error::Config("channel_bins must be >= 2".into()));
    }
    if cfg.force_bins < 2 {
        return Err(Error::Config("force_bins must be >= 2".into()));
    }
    let total: usize = sequences.iter().map(|ps| ps.len()).sum();
    if total < MIN_MRMR_SAMPLES {
        return Err(Error::Insufficient(format!(
            "mRMR needs >= {MIN_MRMR_SAMPLES} pooled samples, got {total}"
        )));
    }

    // Pool and discretize per channel.
    let mut channel_syms: Vec<Vec<u32>> = Vec::with_capacity(NUM_CHANNELS);
    for ch in 0..NUM_CHANNELS {
        let mut pooled = Vec::with_capacity(total);
        for ps in sequences {
            pooled.extend_from_slice(&ps.env[ch]);
        }
        channel_syms.push(discretize_ef(&pooled, cfg.channel_bins)?.symbols);
    }

    // Discretize the target.
    let target_syms: Vec<u32> = match target {
        MrmrTarget::Gesture => {
            let mut pooled = Vec::with_capacity(total);
            for ps in sequences {
                pooled.extend(ps.labels.iter().map(|l| l.index() as u32));
            }
            pooled
        }
        MrmrTarget::Force => {
            let mut pooled = Vec::with_capacity(total);
            for ps in sequences {
                pooled.extend_from_slice(&ps.force_norm);
            }
            discretize_ew(&pooled, cfg.force_bins, 0.0, 1.0)
        }
    };

    // Relevance of every channel, and pairwise redundancy cache.
    let mut relevance = [0.0f64; NUM_CHANNELS];
    for ch in 0..NUM_CHANNELS {
        relevance[ch] = mutual_information(&channel_syms[ch], &target_syms)?;
    }
    let mut pairwise = [[f64::NAN; NUM_CHANNELS]; NUM_CHANNELS];

    let mut remaining: Vec<usize> = (0..NUM_CHANNELS).collect();
    let mut order = Vec::with_capacity(NUM_CHANNELS);
    let mut objectives = Vec::with_capacity(NUM_CHANNELS);
    let mut selected: Vec<usize> = Vec::new();

    while !remaining.is_empty() {
        let mut best_idx = 0;
        let mut best_obj = f64::NEG_INFINITY;
        for (pos, &ch) in remaining.iter().enumerate() {
            let mut redundancy = 0.0;
            for &s in &selected {
                let (lo, hi) = (ch.min(s), ch.max(s));
                if pairwise[lo][hi].is_nan() {
                    pairwise[lo][hi] = mutual_information(&channel_syms[lo], &channel_syms[hi])?;
                }
                redundancy += pairwise[lo][hi];
            }
            let obj = if selected.is_empty() {
                relevance[ch]
            } else {
                relevance[ch] - redundancy / selected.len() as f64
            };
            // Strict > keeps the lower channel id on ties.
            if obj > best_obj {
                best_obj = obj;
                best_idx = pos;
            }
        }
        let ch = remaining.remove(best_idx);
        selected.push(ch);
        order.push(ChannelId::new(ch as u8 + 1).expect("index in range"));
        objectives.push(best_obj);
    }

    // Shift by the minimum, then normalize to sum 1.
    let min_obj = objectives.iter().cloned().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = objectives.iter().map(|o| o - min_obj).collect();
    let sum: f64 = shifted.iter().sum();
    let scores = if sum > 1e-300 {
        shifted.iter().map(|s| s / sum).collect()
    } else {
        vec![1.0 / NUM_CHANNELS as f64; NUM_CHANNELS]
    };

    Ok(ChannelRanking {
        order,
        objectives,
        scores,
        target,
    })
}

/// First `k` channels in selection order.
pub fn select_channels(r: &ChannelRanking, k: usize) -> Result<Vec<ChannelId>> {
    if k == 0 || k > r.order.len() {
        return Err(Error::InvalidArgument(format!(
            "channel count {k} outside 1..={}",
            r.order.len()
        )));
    }
    Ok(r.order[..k].to_vec())
}
