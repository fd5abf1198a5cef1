//! Causal per-frame inference engine and the high-level control mapping
//! from (gesture, force) to actuator commands.
//!
//! The engine mirrors the batch pipeline exactly: the same causal filters,
//! the same window boundaries, the same feature code. Outputs appear once
//! the window buffer is full, then every `stride` frames.

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{spatial_features, time_features};
use crate::models::PipelineModel;
use crate::preprocess::CausalLowpass;
use crate::types::{EmgFrame, GestureLabel, NUM_CHANNELS};

/// Exoskeleton degree of freedom to drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Motor {
    /// Flexion/extension axis.
    FlexExt,
    /// Radial/ulnar deviation axis.
    RadUln,
    /// Grasp actuator.
    Grasp,
    /// No actuation.
    None,
}

impl Motor {
    pub fn as_str(self) -> &'static str {
        match self {
            Motor::FlexExt => "FlexExt",
            Motor::RadUln => "RadUln",
            Motor::Grasp => "Grasp",
            Motor::None => "None",
        }
    }
}

impl std::fmt::Display for Motor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One actuation decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorCommand {
    pub motor: Motor,
    /// +1, -1 or 0.
    pub direction: i8,
    /// Assist intensity in [0, 1].
    pub intensity: f64,
}

/// One emitted control frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub t: f64,
    pub gesture: GestureLabel,
    /// Regressor output after the causal 1 Hz filter, normalized units.
    pub force_norm: f64,
    pub command: ActuatorCommand,
}

/// Gesture to motor/direction table; intensity is the filtered force
/// clamped to [0, 1]. Rest always maps to no actuation.
pub fn map_control(gesture: GestureLabel, force_norm: f64) -> ActuatorCommand {
    let (motor, direction) = match gesture {
        GestureLabel::Rest => (Motor::None, 0),
        GestureLabel::Wf => (Motor::FlexExt, 1),
        GestureLabel::We => (Motor::FlexExt, -1),
        GestureLabel::Wrd => (Motor::RadUln, 1),
        GestureLabel::Wud => (Motor::RadUln, -1),
        GestureLabel::Hc => (Motor::Grasp, 1),
    };
    let intensity = if motor == Motor::None {
        0.0
    } else {
        force_norm.clamp(0.0, 1.0)
    };
    ActuatorCommand {
        motor,
        direction,
        intensity,
    }
}

/// Per-push wall-clock statistics against the 100 Hz frame budget.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub frames: usize,
    pub min_ms: f64,
    pub median_ms: f64,
    pub p99_ms: f64,
    pub budget_ms: f64,
    pub within_budget: bool,
}

impl LatencyReport {
    pub fn summary(&self) -> String {
        format!(
            "latency over {} pushes: min {:.4} ms, median {:.4} ms, p99 {:.4} ms (budget {:.1} ms: {})",
            self.frames,
            self.min_ms,
            self.median_ms,
            self.p99_ms,
            self.budget_ms,
            if self.within_budget { "ok" } else { "exceeded" }
        )
    }
}

/// Streaming inference state. One engine owns one stream; it is not
/// shareable across streams.
pub struct StreamEngine {
    model: PipelineModel,
    /// One envelope filter per selected channel.
    filters: Vec<CausalLowpass>,
    /// Last `window_len` preprocessed samples per selected channel.
    ring: Vec<VecDeque<f64>>,
    out_filter: CausalLowpass,
    frames_seen: usize,
    push_nanos: Vec<u64>,
    scratch: Vec<Vec<f64>>,
}

const LATENCY_BUDGET_MS: f64 = 10.0;
const MIN_LATENCY_FRAMES: usize = 100;

impl StreamEngine {
    pub fn new(model: PipelineModel) -> Result<StreamEngine> {
        model.validate()?;
        let n_channels = model.channels.len();
        let filters = (0..n_channels)
            .map(|_| {
                CausalLowpass::new(
                    model.preprocess.lowpass_cutoff_hz,
                    model.sample_rate_hz,
                    model.preprocess.filter_order,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let window_rate = model.sample_rate_hz / model.features.stride as f64;
        let out_filter = CausalLowpass::new(model.output_filter_hz, window_rate, 2)?;
        let window_len = model.features.window_len;
        Ok(StreamEngine {
            filters,
            ring: vec![VecDeque::with_capacity(window_len); n_channels],
            out_filter,
            frames_seen: 0,
            push_nanos: Vec::new(),
            scratch: vec![Vec::with_capacity(window_len); n_channels],
            model,
        })
    }

    pub fn model(&self) -> &PipelineModel {
        &self.model
    }

    /// Feeds one frame; returns a control output on emission ticks once the
    /// window buffer is full. Uses only past samples.
    pub fn push(&mut self, frame: &EmgFrame) -> Result<Option<ControlOutput>> {
        self.push_values(frame.t, &frame.values)
    }

    /// Slice-based entry point for wire formats; `values` must carry all 8
    /// channels.
    pub fn push_values(&mut self, t: f64, values: &[f64]) -> Result<Option<ControlOutput>> {
        if values.len() != NUM_CHANNELS {
            return Err(Error::Dimension {
                expected: NUM_CHANNELS,
                got: values.len(),
            });
        }
        let start = Instant::now();
        let out = self.advance(t, values)?;
        self.push_nanos.push(start.elapsed().as_nanos() as u64);
        Ok(out)
    }

    fn advance(&mut self, t: f64, values: &[f64]) -> Result<Option<ControlOutput>> {
        let window_len = self.model.features.window_len;
        for (i, ch) in self.model.channels.iter().enumerate() {
            let rectified = values[ch.index0()].abs();
            let filtered = self.filters[i].push(rectified).max(0.0);
            let env =
                (filtered / self.model.mvc.scale[ch.index0()]).min(self.model.preprocess.clip_max);
            if self.ring[i].len() == window_len {
                self.ring[i].pop_front();
            }
            self.ring[i].push_back(env);
        }
        self.frames_seen += 1;

        if self.frames_seen < window_len {
            return Ok(None);
        }
        if (self.frames_seen - window_len) % self.model.features.stride != 0 {
            return Ok(None);
        }

        // Same feature code as the batch path, over the buffered window.
        for (buf, ring) in self.scratch.iter_mut().zip(&self.ring) {
            buf.clear();
            buf.extend(ring.iter().copied());
        }
        let ar_order = self.model.features.ar_order;
        let mut row = Vec::with_capacity(self.model.features.feature_len());
        for buf in &self.scratch {
            row.extend(time_features(buf, ar_order)?);
        }
        if self.model.features.include_spatial {
            row.extend_from_slice(&spatial_features(&self.scratch));
        }

        let reduced = self
            .model
            .pca
            .transform_row(&self.model.scaler.apply_row(&row)?)?;
        let (gesture, raw_force) = self.model.predict_reduced(&reduced)?;
        let force_norm = self.out_filter.push(raw_force);

        Ok(Some(ControlOutput {
            t,
            gesture,
            force_norm,
            command: map_control(gesture, force_norm),
        }))
    }

    /// Wall-clock statistics over every push so far.
    pub fn latency_report(&self) -> Result<LatencyReport> {
        if self.push_nanos.len() < MIN_LATENCY_FRAMES {
            return Err(Error::Insufficient(format!(
                "latency report needs >= {MIN_LATENCY_FRAMES} pushes, got {}",
                self.push_nanos.len()
            )));
        }
        let mut sorted = self.push_nanos.clone();
        sorted.sort_unstable();
        let n = sorted.len();
        let pick = |q: f64| -> f64 {
            let idx = ((n as f64 * q).ceil() as usize).clamp(1, n) - 1;
            sorted[idx] as f64 / 1e6
        };
        let p99 = pick(0.99);
        Ok(LatencyReport {
            frames: n,
            min_ms: sorted[0] as f64 / 1e6,
            median_ms: pick(0.50),
            p99_ms: p99,
            budget_ms: LATENCY_BUDGET_MS,
            within_budget: p99 < LATENCY_BUDGET_MS,
        })
    }
}

/// Output CSV header for control rows.
pub const CONTROL_CSV_HEADER: &str = "t_s,gesture,force_norm,motor,direction,intensity";

/// One control output as a CSV row matching [`CONTROL_CSV_HEADER`].
pub fn control_csv_row(o: &ControlOutput) -> String {
    format!(
        "{},{},{},{},{},{}",
        crate::io::fmt_sig9(o.t),
        o.gesture,
        crate::io::fmt_sig9(o.force_norm),
        o.command.motor,
        o.command.direction,
        crate::io::fmt_sig9(o.command.intensity)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{fit_pipeline, predict_sequence, PipelineConfig};
    use crate::selection::MrmrTarget;
    use crate::synthgen::{generate_dataset, SynthSpec};
    use crate::types::Sequence;

    #[test]
    fn rest_maps_to_no_actuation_regardless_of_force() {
        let cmd = map_control(GestureLabel::Rest, 0.7);
        assert_eq!(cmd.motor, Motor::None);
        assert_eq!(cmd.direction, 0);
        assert_eq!(cmd.intensity, 0.0);
    }

    #[test]
    fn gesture_motor_table() {
        let wf = map_control(GestureLabel::Wf, 0.5);
        assert_eq!(
            (wf.motor, wf.direction, wf.intensity),
            (Motor::FlexExt, 1, 0.5)
        );
        let we = map_control(GestureLabel::We, 0.25);
        assert_eq!((we.motor, we.direction), (Motor::FlexExt, -1));
        let wrd = map_control(GestureLabel::Wrd, 0.1);
        assert_eq!((wrd.motor, wrd.direction), (Motor::RadUln, 1));
        let wud = map_control(GestureLabel::Wud, 0.1);
        assert_eq!((wud.motor, wud.direction), (Motor::RadUln, -1));
    }

    #[test]
    fn intensity_clamps_to_unit_range() {
        let cmd = map_control(GestureLabel::Hc, 1.4);
        assert_eq!((cmd.motor, cmd.direction), (Motor::Grasp, 1));
        assert_eq!(cmd.intensity, 1.0);
        let neg = map_control(GestureLabel::Wf, -0.3);
        assert_eq!(neg.intensity, 0.0);
    }

    fn tiny_model() -> (crate::models::PipelineModel, Vec<Sequence>) {
        let spec = SynthSpec {
            subjects: 1,
            hands_per_subject: 1,
            rest_s: (1.0, 1.0),
            hold_s: (1.2, 1.2),
            ramp_s: 0.4,
            step_hold_s: (0.5, 0.5),
            ..Default::default()
        };
        let d = generate_dataset(&spec).unwrap();
        let seqs: Vec<&Sequence> = d.sequences.iter().collect();
        let fitted =
            fit_pipeline(&seqs, &PipelineConfig::default(), MrmrTarget::Gesture, None).unwrap();
        (fitted.model, d.sequences)
    }

    #[test]
    fn warmup_produces_no_output() {
        let (model, seqs) = tiny_model();
        let window_len = model.features.window_len;
        let mut engine = StreamEngine::new(model).unwrap();
        for (i, frame) in seqs[0].emg.iter().take(window_len - 1).enumerate() {
            assert!(
                engine.push(frame).unwrap().is_none(),
                "unexpected output at warm-up frame {i}"
            );
        }
        let out = engine.push(&seqs[0].emg[window_len - 1]).unwrap();
        assert!(out.is_some(), "first full window must emit");
    }

    #[test]
    fn stream_equals_batch_predictions() {
        let (model, seqs) = tiny_model();
        for s in seqs.iter().take(2) {
            let batch = predict_sequence(&model, s).unwrap();
            let mut engine = StreamEngine::new(model.clone()).unwrap();
            let mut streamed = Vec::new();
            for frame in &s.emg {
                if let Some(out) = engine.push(frame).unwrap() {
                    streamed.push(out);
                }
            }
            assert_eq!(batch.len(), streamed.len(), "emission count for {}", s.id);
            for (b, o) in batch.iter().zip(&streamed) {
                assert_eq!(b.t, o.t);
                assert_eq!(b.pred_label, o.gesture);
                assert!(
                    (b.pred_force - o.force_norm).abs() <= 1e-9,
                    "force {} vs {}",
                    b.pred_force,
                    o.force_norm
                );
            }
        }
    }

    #[test]
    fn prefix_of_input_yields_prefix_of_outputs() {
        let (model, seqs) = tiny_model();
        let s = &seqs[1];
        let mut full_engine = StreamEngine::new(model.clone()).unwrap();
        let full: Vec<ControlOutput> = s
            .emg
            .iter()
            .filter_map(|f| full_engine.push(f).unwrap())
            .collect();

        let cut = s.emg.len() / 2;
        let mut prefix_engine = StreamEngine::new(model).unwrap();
        let prefix: Vec<ControlOutput> = s.emg[..cut]
            .iter()
            .filter_map(|f| prefix_engine.push(f).unwrap())
            .collect();
        assert_eq!(prefix.as_slice(), &full[..prefix.len()]);
    }

    #[test]
    fn identical_streams_give_identical_outputs() {
        let (model, seqs) = tiny_model();
        let run = |m: crate::models::PipelineModel| -> Vec<ControlOutput> {
            let mut e = StreamEngine::new(m).unwrap();
            seqs[2]
                .emg
                .iter()
                .filter_map(|f| e.push(f).unwrap())
                .collect()
        };
        assert_eq!(run(model.clone()), run(model));
    }

    #[test]
    fn wrong_channel_count_is_rejected() {
        let (model, _) = tiny_model();
        let mut engine = StreamEngine::new(model).unwrap();
        assert!(engine.push_values(0.0, &[0.0; 7]).is_err());
    }

    #[test]
    fn latency_report_needs_enough_frames() {
        let (model, seqs) = tiny_model();
        let mut engine = StreamEngine::new(model).unwrap();
        for f in seqs[0].emg.iter().take(10) {
            engine.push(f).unwrap();
        }
        assert!(engine.latency_report().is_err());
        for f in seqs[0].emg.iter().skip(10).take(200) {
            engine.push(f).unwrap();
        }
        let report = engine.latency_report().unwrap();
        assert!(report.median_ms <= report.p99_ms);
        assert!(report.min_ms <= report.median_ms);
    }

    #[test]
    fn all_zero_stream_rests_with_no_actuation() {
        let (model, _) = tiny_model();
        let window_len = model.features.window_len;
        let mut engine = StreamEngine::new(model).unwrap();
        let mut outputs = Vec::new();
        for i in 0..(window_len + 100) {
            let frame = EmgFrame {
                t: i as f64 * 0.01,
                values: [0.0; NUM_CHANNELS],
            };
            if let Some(out) = engine.push(&frame).unwrap() {
                outputs.push(out);
            }
        }
        assert!(!outputs.is_empty());
        for out in &outputs {
            assert_eq!(out.gesture, GestureLabel::Rest);
            assert_eq!(out.command.motor, Motor::None);
            assert_eq!(out.command.intensity, 0.0);
            assert!(out.force_norm.abs() < 0.1, "force {}", out.force_norm);
        }
    }
}
