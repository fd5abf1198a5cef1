//! Domain types: gesture labels, channels, frames, sequences, datasets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of EMG channels on the armband.
pub const NUM_CHANNELS: usize = 8;

/// Wrist gesture classes. `Rest` is the background class assigned to any
/// timestamp not covered by a label interval.
///
/// The declaration order is load-bearing: it defines the class index used
/// for confusion matrices and the final tie-break in KNN voting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GestureLabel {
    #[serde(rename = "REST")]
    Rest,
    #[serde(rename = "WF")]
    Wf,
    #[serde(rename = "WE")]
    We,
    #[serde(rename = "WRD")]
    Wrd,
    #[serde(rename = "WUD")]
    Wud,
    #[serde(rename = "HC")]
    Hc,
}

impl GestureLabel {
    pub const ALL: [GestureLabel; 6] = [
        GestureLabel::Rest,
        GestureLabel::Wf,
        GestureLabel::We,
        GestureLabel::Wrd,
        GestureLabel::Wud,
        GestureLabel::Hc,
    ];

    /// The five scripted gestures (everything except `Rest`).
    pub const GESTURES: [GestureLabel; 5] = [
        GestureLabel::Wf,
        GestureLabel::We,
        GestureLabel::Wrd,
        GestureLabel::Wud,
        GestureLabel::Hc,
    ];

    /// Class index in declaration order (Rest = 0 .. Hc = 5).
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<GestureLabel> {
        GestureLabel::ALL.get(i).copied()
    }

    /// Wire name used in CSV/JSON files.
    pub fn as_str(self) -> &'static str {
        match self {
            GestureLabel::Rest => "REST",
            GestureLabel::Wf => "WF",
            GestureLabel::We => "WE",
            GestureLabel::Wrd => "WRD",
            GestureLabel::Wud => "WUD",
            GestureLabel::Hc => "HC",
        }
    }

    pub fn parse(s: &str) -> Result<GestureLabel> {
        GestureLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown gesture label {s:?}")))
    }
}

impl std::fmt::Display for GestureLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which forearm a sequence was recorded from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub fn as_str(self) -> &'static str {
        match self {
            Hand::Left => "Left",
            Hand::Right => "Right",
        }
    }

    pub fn parse(s: &str) -> Result<Hand> {
        match s {
            "Left" => Ok(Hand::Left),
            "Right" => Ok(Hand::Right),
            _ => Err(Error::InvalidArgument(format!("unknown hand {s:?}"))),
        }
    }
}

impl std::fmt::Display for Hand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One-based EMG channel identifier, always in `1..=8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ChannelId(u8);

impl<'de> Deserialize<'de> for ChannelId {
    fn deserialize<D>(deserializer: D) -> std::result::Result<ChannelId, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let id = u8::deserialize(deserializer)?;
        ChannelId::new(id).map_err(serde::de::Error::custom)
    }
}

impl ChannelId {
    pub fn new(id: u8) -> Result<ChannelId> {
        if (1..=NUM_CHANNELS as u8).contains(&id) {
            Ok(ChannelId(id))
        } else {
            Err(Error::InvalidArgument(format!(
                "channel id {id} outside 1..=8"
            )))
        }
    }

    /// All eight channels in order.
    pub fn all() -> [ChannelId; NUM_CHANNELS] {
        [
            ChannelId(1),
            ChannelId(2),
            ChannelId(3),
            ChannelId(4),
            ChannelId(5),
            ChannelId(6),
            ChannelId(7),
            ChannelId(8),
        ]
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based index into per-channel arrays.
    pub fn index0(self) -> usize {
        self.0 as usize - 1
    }
}

impl std::fmt::Display for ChannelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Total mapping from channel id to the muscle it sits over.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMap {
    names: [String; NUM_CHANNELS],
}

impl ChannelMap {
    pub fn new(names: [String; NUM_CHANNELS]) -> ChannelMap {
        ChannelMap { names }
    }

    pub fn name(&self, ch: ChannelId) -> &str {
        &self.names[ch.index0()]
    }

    pub fn names(&self) -> &[String; NUM_CHANNELS] {
        &self.names
    }
}

impl Default for ChannelMap {
    /// Armband placement used throughout: the key muscles for wrist intent
    /// sit under channels 2 (Extensor Digitorum), 5 (Flexor Carpi Radialis)
    /// and 8 (Flexor Carpi Ulnaris).
    fn default() -> ChannelMap {
        ChannelMap::new([
            "Extensor Carpi Ulnaris".to_string(),
            "Extensor Digitorum".to_string(),
            "Extensor Carpi Radialis Longus/Brevis".to_string(),
            "Brachioradialis".to_string(),
            "Flexor Carpi Radialis".to_string(),
            "Palmaris Longus".to_string(),
            "Flexor Digitorum Superficialis".to_string(),
            "Flexor Carpi Ulnaris".to_string(),
        ])
    }
}

/// A single multi-channel EMG sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmgFrame {
    /// Timestamp in seconds, strictly increasing within a sequence.
    pub t: f64,
    /// Raw activation readings, nominal range [-128, 127].
    pub values: [f64; NUM_CHANNELS],
}

/// One dynamometer reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceSample {
    pub t: f64,
    /// Force in newtons, non-negative.
    pub force: f64,
}

/// A half-open-in-spirit `[t_start, t_end]` span carrying a gesture label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelInterval {
    pub t_start: f64,
    pub t_end: f64,
    pub label: GestureLabel,
}

impl LabelInterval {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start && t <= self.t_end
    }
}

/// One recorded task: timed EMG frames, timed force samples and label
/// intervals, plus subject metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    /// Stable identifier used in manifests and error messages. Step-force
    /// recordings carry the `_step` suffix by convention.
    pub id: String,
    pub subject_id: String,
    pub hand: Hand,
    /// The scripted gesture for this task.
    pub task: GestureLabel,
    pub sample_rate_hz: f64,
    pub emg: Vec<EmgFrame>,
    pub force: Vec<ForceSample>,
    pub labels: Vec<LabelInterval>,
}

impl Sequence {
    /// Gesture label in effect at time `t`; timestamps outside every
    /// interval are implicitly `Rest`.
    pub fn label_at(&self, t: f64) -> GestureLabel {
        self.labels
            .iter()
            .find(|iv| iv.contains(t))
            .map(|iv| iv.label)
            .unwrap_or(GestureLabel::Rest)
    }

    /// Whether this is a step-force protocol recording (identified by the
    /// manifest id convention).
    pub fn is_step_task(&self) -> bool {
        self.id.ends_with("_step")
    }

    /// Checks every structural invariant, naming this sequence in errors.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invariant(&self.id, msg));

        if !(self.sample_rate_hz > 0.0) {
            return fail(format!(
                "sample_rate_hz must be > 0, got {}",
                self.sample_rate_hz
            ));
        }
        for (i, w) in self.emg.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return fail(format!(
                    "EMG timestamps not strictly increasing at frame {} ({} -> {})",
                    i + 1,
                    w[0].t,
                    w[1].t
                ));
            }
        }
        for f in &self.emg {
            if !f.t.is_finite() || f.values.iter().any(|v| !v.is_finite()) {
                return fail(format!("non-finite EMG data at t={}", f.t));
            }
        }
        for (i, w) in self.force.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return fail(format!(
                    "force timestamps not strictly increasing at sample {}",
                    i + 1
                ));
            }
        }
        for s in &self.force {
            if !s.force.is_finite() || s.force < 0.0 {
                return fail(format!(
                    "force must be finite and >= 0, got {} at t={}",
                    s.force, s.t
                ));
            }
        }
        for iv in &self.labels {
            if !(iv.t_start < iv.t_end) {
                return fail(format!(
                    "label interval must have t_start < t_end, got [{}, {}]",
                    iv.t_start, iv.t_end
                ));
            }
        }
        let mut sorted: Vec<&LabelInterval> = self.labels.iter().collect();
        sorted.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        for w in sorted.windows(2) {
            if w[1].t_start <= w[0].t_end {
                return fail(format!(
                    "label intervals overlap: [{}, {}] and [{}, {}]",
                    w[0].t_start, w[0].t_end, w[1].t_start, w[1].t_end
                ));
            }
        }
        Ok(())
    }
}

/// A collection of sequences sharing the 8-channel layout, together with
/// the manifest metadata that travels with it on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema_version: String,
    pub channel_map: ChannelMap,
    pub sequences: Vec<Sequence>,
}

impl Dataset {
    pub fn new(sequences: Vec<Sequence>) -> Dataset {
        Dataset {
            schema_version: crate::io::SCHEMA_VERSION.to_string(),
            channel_map: ChannelMap::default(),
            sequences,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sequences.is_empty() {
            return Err(Error::invariant("<dataset>", "dataset has no sequences"));
        }
        for s in &self.sequences {
            s.validate()?;
        }
        Ok(())
    }

    /// The gesture-task subset (step-force recordings excluded); this is
    /// the portion used for gesture recognition.
    pub fn gesture_subset(&self) -> Dataset {
        Dataset {
            schema_version: self.schema_version.clone(),
            channel_map: self.channel_map.clone(),
            sequences: self
                .sequences
                .iter()
                .filter(|s| !s.is_step_task())
                .cloned()
                .collect(),
        }
    }

    pub fn total_frames(&self) -> usize {
        self.sequences.iter().map(|s| s.emg.len()).sum()
    }
}
