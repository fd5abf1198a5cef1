//! Deterministic synthetic EMG/force session generator.
//!
//! Each recording follows the isometric protocol: rest, ramp into the
//! gesture, hold near maximal effort, ramp out, rest. The carrier is
//! zero-mean noise (a random-sign sequence at the working rate plus an
//! additive Gaussian floor) amplitude-modulated by the activation envelope,
//! so rectification and low-pass filtering recover the envelope. Channels
//! 2, 5 and 8 carry independent activation patterns; every other channel is
//! a weaker mixture of those three, which makes {2, 5, 8} the jointly most
//! informative set by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resample::downsample_emg;
use crate::types::{
    Dataset, EmgFrame, ForceSample, GestureLabel, Hand, LabelInterval, Sequence, NUM_CHANNELS,
};

/// Generator parameters. The defaults reproduce the reference protocol:
/// 6 subjects x 2 hands x 5 gestures = 60 gesture sequences, plus one
/// step-force task per subject-hand for 72 in total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub subjects: usize,
    /// 1 = right hand only, 2 = both hands.
    pub hands_per_subject: usize,
    pub seed: u64,
    /// Acquisition rate; sequences are emitted after block-mean reduction
    /// to `working_rate_hz`.
    pub source_rate_hz: f64,
    pub working_rate_hz: f64,
    pub force_rate_hz: f64,
    /// Relative activation in [0, 1]: rows follow the gesture order
    /// (Rest, WF, WE, WRD, WUD, HC), columns are channels 1..8.
    pub activation_template: [[f64; NUM_CHANNELS]; 6],
    /// Raw-unit carrier amplitude per channel at full activation.
    pub mvc_amplitude: [f64; NUM_CHANNELS],
    /// Additive zero-mean Gaussian floor, raw units.
    pub noise_std: f64,
    /// Ring-neighbor electrode bleed in [0, 1).
    pub crosstalk: f64,
    /// Rest phase duration range, seconds.
    pub rest_s: (f64, f64),
    /// Hold phase duration range, seconds.
    pub hold_s: (f64, f64),
    /// Ramp duration, seconds.
    pub ramp_s: f64,
    /// Hold effort level range (fraction of MVC); drawn independently per
    /// source per sequence, so channels do not co-vary across sequences.
    pub plateau_range: (f64, f64),
    /// Std of the slow multiplicative coactivation jitter per source.
    pub coactivation_jitter_std: f64,
    /// Correlation time of the coactivation jitter, seconds.
    pub coactivation_jitter_tau_s: f64,
    /// Per-channel weights on the three latent sources; rows are
    /// normalized before use. Drives which sources a channel co-varies
    /// with (the default mirrors the template mixture structure).
    pub source_mix: [[f64; 3]; NUM_CHANNELS],
    /// Per-subject amplitude gain range.
    pub subject_gain_range: (f64, f64),
    /// Peak force per task in newtons (gesture order).
    pub task_max_force_n: [f64; 6],
    /// Gaussian noise on the gesture-task force track, newtons.
    pub force_noise_std_n: f64,
    /// Step task: number of force levels including 0 N.
    pub step_levels: usize,
    /// Step task: force increment per level, newtons.
    pub step_increment_n: f64,
    /// Step task: per-level hold duration range, seconds.
    pub step_hold_s: (f64, f64),
    /// Whether `generate_dataset` appends the step-force tasks.
    pub include_step_tasks: bool,
}

/// Base activation patterns over (Rest, WF, WE, WRD, WUD, HC) for the three
/// source channels; all other channels mix these. Each source alone merges
/// two gesture pairs (level collisions), so no single channel separates all
/// classes and only the trio resolves them.
const P2: [f64; 6] = [0.0, 0.10, 0.85, 0.45, 0.10, 0.45];
const P5: [f64; 6] = [0.0, 0.85, 0.10, 0.45, 0.10, 0.45];
const P8: [f64; 6] = [0.0, 0.45, 0.45, 0.10, 0.85, 0.85];

/// Per-channel weights on the three source patterns (columns: p2, p5, p8).
/// Channels 2, 5, 8 are the sources themselves; every derived channel is an
/// attenuated near-pure copy of one source (minor weights kept under 0.05).
/// Two properties hang on this: a near-pure copy inherits its source's
/// level collisions, so it never resolves more classes than the source,
/// and larger minor weights would flatten the per-gesture gain spread and
/// turn the channel into a gesture-invariant effort meter that outranks
/// the sources for the force target.
const SOURCE_MIX: [[f64; 3]; NUM_CHANNELS] = [
    [0.02, 0.00, 0.35], // ch1: ECU, FCU copy
    [1.00, 0.00, 0.00], // ch2: ED (source)
    [0.35, 0.02, 0.02], // ch3: ECRL, ED copy
    [0.04, 0.01, 0.03], // ch4: brachioradialis, weak bystander
    [0.00, 1.00, 0.00], // ch5: FCR (source)
    [0.02, 0.35, 0.02], // ch6: PL, FCR copy
    [0.00, 0.02, 0.33], // ch7: FDS, FCU copy
    [0.00, 0.00, 1.00], // ch8: FCU (source)
];

fn default_template() -> [[f64; NUM_CHANNELS]; 6] {
    let mut t = [[0.0; NUM_CHANNELS]; 6];
    for g in 0..6 {
        for ch in 0..NUM_CHANNELS {
            let w = SOURCE_MIX[ch];
            t[g][ch] = w[0] * P2[g] + w[1] * P5[g] + w[2] * P8[g];
        }
    }
    t
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            subjects: 6,
            hands_per_subject: 2,
            seed: 42,
            source_rate_hz: 200.0,
            working_rate_hz: 100.0,
            force_rate_hz: 20.0,
            activation_template: default_template(),
            mvc_amplitude: [35.0; NUM_CHANNELS],
            noise_std: 3.0,
            crosstalk: 0.06,
            rest_s: (5.0, 6.0),
            hold_s: (5.0, 6.0),
            ramp_s: 0.8,
            plateau_range: (0.85, 1.0),
            coactivation_jitter_std: 0.05,
            coactivation_jitter_tau_s: 0.4,
            source_mix: SOURCE_MIX,
            subject_gain_range: (0.85, 1.15),
            task_max_force_n: [0.0, 60.0, 55.0, 45.0, 50.0, 110.0],
            force_noise_std_n: 1.0,
            step_levels: 11,
            step_increment_n: 10.0,
            step_hold_s: (5.0, 6.0),
            include_step_tasks: true,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 {
            return Err(Error::Config("subjects must be >= 1".into()));
        }
        if !(1..=2).contains(&self.hands_per_subject) {
            return Err(Error::Config("hands_per_subject must be 1 or 2".into()));
        }
        if !(self.source_rate_hz > 0.0 && self.working_rate_hz > 0.0) {
            return Err(Error::Config("sample rates must be > 0".into()));
        }
        let factor = self.source_rate_hz / self.working_rate_hz;
        if factor < 1.0 || (factor - factor.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "source rate {} must be an integer multiple of working rate {}",
                self.source_rate_hz, self.working_rate_hz
            )));
        }
        if !(self.force_rate_hz > 0.0) {
            return Err(Error::Config("force_rate_hz must be > 0".into()));
        }
        for (lo, hi) in [self.rest_s, self.hold_s, self.step_hold_s] {
            if !(lo > 0.0 && hi >= lo) {
                return Err(Error::Config(format!(
                    "invalid duration range ({lo}, {hi})"
                )));
            }
        }
        if !(self.ramp_s > 0.0) {
            return Err(Error::Config("ramp_s must be > 0".into()));
        }
        if !(self.coactivation_jitter_std >= 0.0) {
            return Err(Error::Config("coactivation_jitter_std must be >= 0".into()));
        }
        if !(self.coactivation_jitter_tau_s > 0.0) {
            return Err(Error::Config(
                "coactivation_jitter_tau_s must be > 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.crosstalk) {
            return Err(Error::Config("crosstalk must be in [0, 1)".into()));
        }
        if self.activation_template[0].iter().any(|v| v.abs() > 1e-6) {
            return Err(Error::Config("rest row of the template must be ~0".into()));
        }
        for row in &self.activation_template {
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Config("template values must lie in [0, 1]".into()));
            }
        }
        if self.step_levels < 2 {
            return Err(Error::Config("step task needs >= 2 levels".into()));
        }
        Ok(())
    }

    fn hands(&self) -> Vec<Hand> {
        if self.hands_per_subject == 2 {
            vec![Hand::Left, Hand::Right]
        } else {
            vec![Hand::Right]
        }
    }

    fn downsample_factor(&self) -> usize {
        (self.source_rate_hz / self.working_rate_hz).round() as usize
    }
}

/// Stable mixing of seed components (splitmix64 absorption).
fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= z ^ (z >> 31);
        h = h.rotate_left(27).wrapping_mul(5).wrapping_add(0x52DC_E729);
    }
    h
}

fn hand_code(hand: Hand) -> u64 {
    match hand {
        Hand::Left => 0,
        Hand::Right => 1,
    }
}

fn hand_tag(hand: Hand) -> &'static str {
    match hand {
        Hand::Left => "L",
        Hand::Right => "R",
    }
}

/// Per-subject amplitude gain, stable across that subject's sequences.
fn subject_gain(spec: &SynthSpec, subject: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[spec.seed, 0xA11CE, subject as u64]));
    rng.random_range(spec.subject_gain_range.0..=spec.subject_gain_range.1)
}

fn uniform_in(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..=range.1)
    } else {
        range.0
    }
}

/// Synthesizes the raw multichannel EMG for one task, applies ring
/// crosstalk, then reduces to the working rate. Returns the sequence and
/// the per-source hold levels drawn for it.
///
/// Channel activation is `levels[ch] * effort(t) * mod_ch(t)` where the
/// modulation blends the channel's latent sources, each carrying its own
/// per-sequence hold level and slow coactivation jitter. Sources therefore
/// do not co-vary across sequences, while mixture channels stay correlated
/// with the sources they are built from.
#[allow(clippy::too_many_arguments)]
fn synthesize_emg(
    spec: &SynthSpec,
    rng: &mut ChaCha8Rng,
    gain: f64,
    effort: &dyn Fn(f64) -> f64, // overall effort in [0, 1]
    levels: &[f64; NUM_CHANNELS],
    duration_s: f64,
    id: &str,
    subject_id: &str,
    hand: Hand,
    task: GestureLabel,
) -> Result<(Sequence, [f64; 3])> {
    let n_source = (duration_s * spec.source_rate_hz).round() as usize;
    let factor = spec.downsample_factor();

    // Per-source hold levels for this sequence.
    let mut hold_level = [0.0f64; 3];
    for v in hold_level.iter_mut() {
        *v = uniform_in(rng, spec.plateau_range);
    }

    // Slow multiplicative jitter per source: stationary AR(1) at the
    // source rate.
    let rho = (-1.0 / (spec.coactivation_jitter_tau_s * spec.source_rate_hz)).exp();
    let drive = spec.coactivation_jitter_std * (1.0 - rho * rho).sqrt();
    let mut jitter = vec![[0.0f64; 3]; n_source];
    let mut state = [0.0f64; 3];
    for row in jitter.iter_mut() {
        for (s, out) in state.iter_mut().zip(row.iter_mut()) {
            let xi: f64 = StandardNormal.sample(rng);
            *s = rho * *s + drive * xi;
            *out = *s;
        }
    }

    // Normalized source weights per channel.
    let mut weights = [[0.0f64; 3]; NUM_CHANNELS];
    for (w, row) in weights.iter_mut().zip(&spec.source_mix) {
        let sum: f64 = row.iter().sum();
        *w = if sum > 1e-12 {
            [row[0] / sum, row[1] / sum, row[2] / sum]
        } else {
            [1.0 / 3.0; 3]
        };
    }

    let mut raw = vec![[0.0f64; NUM_CHANNELS]; n_source];
    // Carrier signs held constant over each working-rate tick so the
    // block-mean reduction cannot cancel the modulated component.
    let mut signs = [1.0f64; NUM_CHANNELS];
    for (k, frame) in raw.iter_mut().enumerate() {
        if k % factor == 0 {
            for s in signs.iter_mut() {
                *s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            }
        }
        let t = k as f64 / spec.source_rate_hz;
        let e = effort(t).clamp(0.0, 1.0);
        for ch in 0..NUM_CHANNELS {
            let w = weights[ch];
            let m = (w[0] * hold_level[0] * (1.0 + jitter[k][0])
                + w[1] * hold_level[1] * (1.0 + jitter[k][1])
                + w[2] * hold_level[2] * (1.0 + jitter[k][2]))
                .max(0.0);
            let act = levels[ch] * e * m;
            let noise: f64 = StandardNormal.sample(rng);
            frame[ch] = spec.mvc_amplitude[ch] * gain * act * signs[ch] + spec.noise_std * noise;
        }
    }

    // Ring crosstalk between adjacent electrodes.
    let kappa = spec.crosstalk;
    let mixed: Vec<EmgFrame> = raw
        .iter()
        .enumerate()
        .map(|(k, frame)| {
            let mut values = [0.0; NUM_CHANNELS];
            for ch in 0..NUM_CHANNELS {
                let prev = frame[(ch + NUM_CHANNELS - 1) % NUM_CHANNELS];
                let next = frame[(ch + 1) % NUM_CHANNELS];
                values[ch] = (1.0 - kappa) * frame[ch] + kappa / 2.0 * (prev + next);
            }
            EmgFrame {
                t: k as f64 / spec.source_rate_hz,
                values,
            }
        })
        .collect();

    let source_seq = Sequence {
        id: id.to_string(),
        subject_id: subject_id.to_string(),
        hand,
        task,
        sample_rate_hz: spec.source_rate_hz,
        emg: mixed,
        force: vec![ForceSample { t: 0.0, force: 0.0 }], // replaced by caller
        labels: vec![],
    };
    Ok((downsample_emg(&source_seq, factor)?, hold_level))
}

/// One scripted gesture recording: rest, ramp, hold near MVC, ramp out,
/// rest. Fully deterministic given (seed, subject, hand, task).
pub fn generate_sequence(
    spec: &SynthSpec,
    subject: usize,
    hand: Hand,
    task: GestureLabel,
) -> Result<Sequence> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
        spec.seed,
        1,
        subject as u64,
        hand_code(hand),
        task.index() as u64,
    ]));

    let pre_rest = uniform_in(&mut rng, spec.rest_s);
    let hold = uniform_in(&mut rng, spec.hold_s);
    let post_rest = uniform_in(&mut rng, spec.rest_s);
    let ramp = spec.ramp_s;

    let t_ramp_up = pre_rest;
    let t_hold = t_ramp_up + ramp;
    let t_ramp_down = t_hold + hold;
    let t_relaxed = t_ramp_down + ramp;
    let duration = t_relaxed + post_rest;

    let effort = move |t: f64| -> f64 {
        if t < t_ramp_up || t >= t_relaxed {
            0.0
        } else if t < t_hold {
            (t - t_ramp_up) / ramp
        } else if t < t_ramp_down {
            1.0
        } else {
            1.0 - (t - t_ramp_down) / ramp
        }
    };

    let gain = subject_gain(spec, subject);
    let template = spec.activation_template[task.index()];
    let subject_id = format!("s{subject:02}");
    let id = format!("s{subject:02}_{}_{}", hand_tag(hand), task.as_str());

    let (mut seq, hold_level) = synthesize_emg(
        spec,
        &mut rng,
        gain,
        &effort,
        &template,
        duration,
        &id,
        &subject_id,
        hand,
        task,
    )?;

    // Force track proportional to the exerted effort (mean source hold
    // level), scaled to the task's peak force.
    let max_force = spec.task_max_force_n[task.index()];
    let exerted = (hold_level[0] + hold_level[1] + hold_level[2]) / 3.0;
    let n_force = (duration * spec.force_rate_hz).ceil() as usize;
    seq.force = (0..n_force)
        .map(|k| {
            let t = k as f64 / spec.force_rate_hz;
            let noise: f64 = StandardNormal.sample(&mut rng);
            let f = effort(t) * exerted * max_force + spec.force_noise_std_n * noise;
            ForceSample {
                t,
                force: f.max(0.0),
            }
        })
        .collect();

    seq.labels = if task == GestureLabel::Rest {
        vec![]
    } else {
        vec![LabelInterval {
            t_start: t_ramp_up,
            t_end: t_relaxed,
            label: task,
        }]
    };

    seq.validate()?;
    Ok(seq)
}

/// The grasp step-force task: the grip force rises from 0 N in fixed
/// increments, holding each level for a few seconds. EMG amplitude tracks
/// the commanded force; the contraction interval (force > 0) is labeled HC.
pub fn generate_step_task(spec: &SynthSpec, subject: usize, hand: Hand) -> Result<Sequence> {
    spec.validate()?;
    let mut rng =
        ChaCha8Rng::seed_from_u64(mix_seed(&[spec.seed, 2, subject as u64, hand_code(hand)]));

    let lead = 3.0;
    let tail = 3.0;
    let mut level_edges = Vec::with_capacity(spec.step_levels + 1);
    let mut t = lead;
    level_edges.push(t);
    for _ in 0..spec.step_levels {
        t += uniform_in(&mut rng, spec.step_hold_s);
        level_edges.push(t);
    }
    let duration = t + tail;
    let max_force = (spec.step_levels - 1) as f64 * spec.step_increment_n;

    let edges = level_edges.clone();
    let increments = spec.step_increment_n;
    let step_force = move |t: f64| -> f64 {
        if t < edges[0] || t >= edges[edges.len() - 1] {
            return 0.0;
        }
        let level = edges.iter().take_while(|&&e| e <= t).count() - 1;
        level as f64 * increments
    };

    let gain = subject_gain(spec, subject);
    let template = spec.activation_template[GestureLabel::Hc.index()];
    let subject_id = format!("s{subject:02}");
    let id = format!("s{subject:02}_{}_step", hand_tag(hand));

    let force_fn = step_force.clone();
    let effort = move |t: f64| force_fn(t) / max_force;
    let (mut seq, _) = synthesize_emg(
        spec,
        &mut rng,
        gain,
        &effort,
        &template,
        duration,
        &id,
        &subject_id,
        hand,
        GestureLabel::Hc,
    )?;

    let n_force = (duration * spec.force_rate_hz).ceil() as usize;
    seq.force = (0..n_force)
        .map(|k| {
            let t = k as f64 / spec.force_rate_hz;
            ForceSample {
                t,
                force: step_force(t),
            }
        })
        .collect();

    // Contraction interval: first nonzero level through the end of the
    // staircase.
    seq.labels = vec![LabelInterval {
        t_start: level_edges[1],
        t_end: level_edges[spec.step_levels],
        label: GestureLabel::Hc,
    }];

    seq.validate()?;
    Ok(seq)
}

/// The full session set: every (subject, hand, gesture) recording, then one
/// step-force task per (subject, hand) when enabled.
pub fn generate_dataset(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut sequences = Vec::new();
    for subject in 1..=spec.subjects {
        for hand in spec.hands() {
            for task in GestureLabel::GESTURES {
                sequences.push(generate_sequence(spec, subject, hand, task)?);
            }
        }
    }
    if spec.include_step_tasks {
        for subject in 1..=spec.subjects {
            for hand in spec.hands() {
                sequences.push(generate_step_task(spec, subject, hand)?);
            }
        }
    }
    let d = Dataset::new(sequences);
    d.validate()?;
    Ok(d)
}
