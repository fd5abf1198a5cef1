//! Rate reduction for raw EMG and alignment of force samples onto the EMG
//! clock.

use crate::error::{Error, Result};
use crate::types::{EmgFrame, Sequence, NUM_CHANNELS};

/// Reduces the EMG rate by an integer factor using per-block means.
///
/// Each consecutive block of `factor` frames collapses to one frame whose
/// values are the per-channel block means and whose timestamp is the mean
/// of the block timestamps. A trailing partial block is dropped.
pub fn downsample_emg(s: &Sequence, factor: usize) -> Result<Sequence> {
    if factor == 0 {
        return Err(Error::InvalidArgument(
            "downsample factor must be >= 1".into(),
        ));
    }
    if factor == 1 {
        return Ok(s.clone());
    }
    if s.emg.len() < factor {
        return Err(Error::Insufficient(format!(
            "sequence {} has {} frames, fewer than factor {}",
            s.id,
            s.emg.len(),
            factor
        )));
    }

    let blocks = s.emg.len() / factor;
    let mut emg = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let chunk = &s.emg[b * factor..(b + 1) * factor];
        let inv = 1.0 / factor as f64;
        let t = chunk.iter().map(|f| f.t).sum::<f64>() * inv;
        let mut values = [0.0; NUM_CHANNELS];
        for f in chunk {
            for (acc, v) in values.iter_mut().zip(&f.values) {
                *acc += v;
            }
        }
        for v in values.iter_mut() {
            *v *= inv;
        }
        emg.push(EmgFrame { t, values });
    }

    Ok(Sequence {
        sample_rate_hz: s.sample_rate_hz / factor as f64,
        emg,
        ..s.clone()
    })
}

/// Resamples the force track onto the EMG timestamps by linear
/// interpolation, clamping to the first/last force value outside the
/// recorded force span.
pub fn align_force(s: &Sequence) -> Result<Vec<f64>> {
    if s.force.is_empty() {
        return Err(Error::Insufficient(format!(
            "sequence {} has no force samples to align",
            s.id
        )));
    }
    let force = &s.force;
    let mut out = Vec::with_capacity(s.emg.len());
    // Force timestamps are strictly increasing, so a forward cursor works.
    let mut hi = 0usize;
    for frame in &s.emg {
        let t = frame.t;
        if t <= force[0].t {
            out.push(force[0].force);
            continue;
        }
        if t >= force[force.len() - 1].t {
            out.push(force[force.len() - 1].force);
            continue;
        }
        while force[hi].t < t {
            hi += 1;
        }
        let (a, b) = (&force[hi - 1], &force[hi]);
        let w = (t - a.t) / (b.t - a.t);
        out.push(a.force + w * (b.force - a.force));
    }
    Ok(out)
}
