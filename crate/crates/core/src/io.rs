//! Dataset persistence: a JSON manifest referencing per-sequence CSV files.
//!
//! Layout written by [`save_dataset`]:
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/<id>_emg.csv      t_s,ch1,...,ch8
//! <dir>/<id>_force.csv    t_s,force_n
//! <dir>/<id>_labels.csv   t_start_s,t_end_s,label
//! ```
//!
//! All reals are printed with 9 significant digits; re-saving a loaded
//! dataset reproduces the files byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    ChannelMap, Dataset, EmgFrame, ForceSample, GestureLabel, Hand, LabelInterval, Sequence,
    NUM_CHANNELS,
};

pub const SCHEMA_VERSION: &str = "1";

const EMG_HEADER: &str = "t_s,ch1,ch2,ch3,ch4,ch5,ch6,ch7,ch8";
const FORCE_HEADER: &str = "t_s,force_n";
const LABELS_HEADER: &str = "t_start_s,t_end_s,label";

/// Formats a real with 9 significant digits. The format is stable:
/// parsing the output and re-formatting reproduces the same string.
pub fn fmt_sig9(x: f64) -> String {
    format!("{:.8e}", x)
}

/// True when two reals agree at 9 significant digits (i.e. they print
/// identically under [`fmt_sig9`]).
pub fn eq_sig9(a: f64, b: f64) -> bool {
    fmt_sig9(a) == fmt_sig9(b)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    schema_version: String,
    channel_map: BTreeMap<String, String>,
    sequences: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    id: String,
    subject: String,
    hand: String,
    task: String,
    sample_rate_hz: f64,
    emg_csv: String,
    force_csv: String,
    labels_csv: String,
}

fn channel_map_to_wire(map: &ChannelMap) -> BTreeMap<String, String> {
    map.names()
        .iter()
        .enumerate()
        .map(|(i, name)| ((i + 1).to_string(), name.clone()))
        .collect()
}

fn channel_map_from_wire(wire: &BTreeMap<String, String>) -> Result<ChannelMap> {
    let mut names: [String; NUM_CHANNELS] = Default::default();
    if wire.len() != NUM_CHANNELS {
        return Err(Error::Model(format!(
            "channel_map must cover all {NUM_CHANNELS} channels, found {}",
            wire.len()
        )));
    }
    for (key, name) in wire {
        let id: usize = key
            .parse()
            .map_err(|_| Error::Model(format!("channel_map key {key:?} is not a channel id")))?;
        if !(1..=NUM_CHANNELS).contains(&id) {
            return Err(Error::Model(format!("channel_map key {id} outside 1..=8")));
        }
        names[id - 1] = name.clone();
    }
    Ok(ChannelMap::new(names))
}

/// Writes the dataset into `dir` and returns the manifest path.
///
/// The dataset is validated first; nothing is written when any invariant
/// fails.
pub fn save_dataset(d: &Dataset, dir: &Path) -> Result<PathBuf> {
    d.validate()?;

    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut entries = Vec::with_capacity(d.sequences.len());
    for s in &d.sequences {
        let emg_csv = format!("{}_emg.csv", s.id);
        let force_csv = format!("{}_force.csv", s.id);
        let labels_csv = format!("{}_labels.csv", s.id);

        write_emg_csv(&dir.join(&emg_csv), &s.emg)?;
        write_force_csv(&dir.join(&force_csv), &s.force)?;
        write_labels_csv(&dir.join(&labels_csv), &s.labels)?;

        entries.push(ManifestEntry {
            id: s.id.clone(),
            subject: s.subject_id.clone(),
            hand: s.hand.as_str().to_string(),
            task: s.task.as_str().to_string(),
            sample_rate_hz: s.sample_rate_hz,
            emg_csv,
            force_csv,
            labels_csv,
        });
    }

    let doc = ManifestDoc {
        schema_version: d.schema_version.clone(),
        channel_map: channel_map_to_wire(&d.channel_map),
        sequences: entries,
    };
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Model(format!("manifest serialization failed: {e}")))?;
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Loads a dataset from its manifest, validating every invariant.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let doc: ManifestDoc = serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: manifest_path.display().to_string(),
        line: e.line(),
        msg: format!("manifest: {e}"),
    })?;

    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            expected: SCHEMA_VERSION.to_string(),
            found: doc.schema_version,
        });
    }
    let channel_map = channel_map_from_wire(&doc.channel_map)?;

    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut sequences = Vec::with_capacity(doc.sequences.len());
    for entry in &doc.sequences {
        let seq = load_sequence(base, entry).map_err(|e| annotate_sequence_error(e, &entry.id))?;
        seq.validate()?;
        sequences.push(seq);
    }

    let d = Dataset {
        schema_version: doc.schema_version,
        channel_map,
        sequences,
    };
    d.validate()?;
    Ok(d)
}

fn annotate_sequence_error(e: Error, id: &str) -> Error {
    match e {
        Error::Parse { file, line, msg } => Error::Parse {
            file,
            line,
            msg: format!("sequence {id}: {msg}"),
        },
        other => other,
    }
}

fn load_sequence(base: &Path, entry: &ManifestEntry) -> Result<Sequence> {
    Ok(Sequence {
        id: entry.id.clone(),
        subject_id: entry.subject.clone(),
        hand: Hand::parse(&entry.hand)?,
        task: GestureLabel::parse(&entry.task)?,
        sample_rate_hz: entry.sample_rate_hz,
        emg: read_emg_csv(&base.join(&entry.emg_csv))?,
        force: read_force_csv(&base.join(&entry.force_csv))?,
        labels: read_labels_csv(&base.join(&entry.labels_csv))?,
    })
}

fn write_emg_csv(path: &Path, frames: &[EmgFrame]) -> Result<()> {
    let mut out = String::with_capacity(frames.len() * 120 + 64);
    out.push_str(EMG_HEADER);
    out.push('\n');
    for f in frames {
        out.push_str(&fmt_sig9(f.t));
        for v in &f.values {
            out.push(',');
            out.push_str(&fmt_sig9(*v));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_force_csv(path: &Path, samples: &[ForceSample]) -> Result<()> {
    let mut out = String::with_capacity(samples.len() * 30 + 32);
    out.push_str(FORCE_HEADER);
    out.push('\n');
    for s in samples {
        out.push_str(&fmt_sig9(s.t));
        out.push(',');
        out.push_str(&fmt_sig9(s.force));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_labels_csv(path: &Path, labels: &[LabelInterval]) -> Result<()> {
    let mut out = String::new();
    out.push_str(LABELS_HEADER);
    out.push('\n');
    for iv in labels {
        out.push_str(&fmt_sig9(iv.t_start));
        out.push(',');
        out.push_str(&fmt_sig9(iv.t_end));
        out.push(',');
        out.push_str(iv.label.as_str());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a CSV, checking the expected header, and hands each data line to
/// `parse_row` together with its 1-based line number.
fn read_csv_rows<T>(
    path: &Path,
    expected_header: &str,
    mut parse_row: impl FnMut(&str, usize) -> Result<T>,
) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let mut lines = text.lines().enumerate();

    match lines.next() {
        Some((_, header)) if header == expected_header => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                file,
                line: 1,
                msg: format!("expected header {expected_header:?}, found {header:?}"),
            })
        }
        None => {
            return Err(Error::Parse {
                file,
                line: 1,
                msg: "empty file".to_string(),
            })
        }
    }

    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        rows.push(parse_row(line, i + 1)?);
    }
    Ok(rows)
}

fn parse_f64(field: &str, file: &str, line: usize, what: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        file: file.to_string(),
        line,
        msg: format!("cannot parse {what} from {field:?}"),
    })
}

fn read_emg_csv(path: &Path) -> Result<Vec<EmgFrame>> {
    let file = path.display().to_string();
    read_csv_rows(path, EMG_HEADER, |line, lineno| {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != NUM_CHANNELS + 1 {
            return Err(Error::Parse {
                file: file.clone(),
                line: lineno,
                msg: format!(
                    "wrong channel count: expected {NUM_CHANNELS} channels, found {}",
                    fields.len().saturating_sub(1)
                ),
            });
        }
        let t = parse_f64(fields[0], &file, lineno, "timestamp")?;
        let mut values = [0.0; NUM_CHANNELS];
        for (i, v) in values.iter_mut().enumerate() {
            *v = parse_f64(fields[i + 1], &file, lineno, "channel value")?;
        }
        Ok(EmgFrame { t, values })
    })
}

fn read_force_csv(path: &Path) -> Result<Vec<ForceSample>> {
    let file = path.display().to_string();
    read_csv_rows(path, FORCE_HEADER, |line, lineno| {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                file: file.clone(),
                line: lineno,
                msg: format!("expected 2 fields, found {}", fields.len()),
            });
        }
        Ok(ForceSample {
            t: parse_f64(fields[0], &file, lineno, "timestamp")?,
            force: parse_f64(fields[1], &file, lineno, "force")?,
        })
    })
}

fn read_labels_csv(path: &Path) -> Result<Vec<LabelInterval>> {
    let file = path.display().to_string();
    read_csv_rows(path, LABELS_HEADER, |line, lineno| {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                file: file.clone(),
                line: lineno,
                msg: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let label = GestureLabel::parse(fields[2].trim()).map_err(|e| Error::Parse {
            file: file.clone(),
            line: lineno,
            msg: e.to_string(),
        })?;
        Ok(LabelInterval {
            t_start: parse_f64(fields[0], &file, lineno, "t_start")?,
            t_end: parse_f64(fields[1], &file, lineno, "t_end")?,
            label,
        })
    })
}
