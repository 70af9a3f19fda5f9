//! Labeled feature datasets: CSV storage, session sidecars, stratified
//! splitting and a synthetic generator built from per-class reference rows.

use std::fs::OpenOptions;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaze::{GazeClass, NUM_CLASSES};
use crate::ocular::{OcularFeatureVector, NUM_FEATURES};

pub const CSV_HEADER: [&str; NUM_FEATURES + 1] =
    ["aspect_ratio", "min_r", "max_r", "displacement", "min_d", "max_d", "class"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub features: OcularFeatureVector,
    pub label: GazeClass,
}

impl LabeledInstance {
    pub fn new(features: OcularFeatureVector, label: GazeClass) -> Self {
        Self { features, label }
    }
}

pub fn features_and_labels(instances: &[LabeledInstance]) -> (Vec<[f64; NUM_FEATURES]>, Vec<GazeClass>) {
    instances.iter().map(|i| (i.features.to_array(), i.label)).unzip()
}

/// Nine significant digits, then the shortest decimal that reads back to the same value.
pub fn format_value(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        "0".to_string()
    } else {
        rounded.to_string()
    }
}

fn write_rows<W: Write>(out: W, instances: &[LabeledInstance], header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    if header {
        w.write_record(CSV_HEADER).map_err(csv_err)?;
    }
    for inst in instances {
        let mut record: Vec<String> = inst.features.to_array().iter().map(|&v| format_value(v)).collect();
        record.push(inst.label.label().to_string());
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_bytes(instances: &[LabeledInstance]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_rows(&mut buf, instances, true).expect("writing to memory");
    buf
}

pub fn write_csv(path: impl AsRef<Path>, instances: &[LabeledInstance]) -> Result<()> {
    std::fs::write(path, to_csv_bytes(instances))?;
    Ok(())
}

/// Parses dataset CSV; rows are numbered from 1, not counting the header.
pub fn from_csv_reader<R: Read>(input: R) -> Result<Vec<LabeledInstance>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().map_err(|e| Error::DatasetParse { row: 0, message: e.to_string() })?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::DatasetParse {
            row: 0,
            message: format!("header {:?} does not match {:?}", header.iter().collect::<Vec<_>>(), CSV_HEADER),
        });
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::DatasetParse { row, message: e.to_string() })?;
        if record.len() != CSV_HEADER.len() {
            return Err(Error::DatasetParse { row, message: format!("{} fields, expected {}", record.len(), CSV_HEADER.len()) });
        }
        let mut values = [0.0; NUM_FEATURES];
        for (j, v) in values.iter_mut().enumerate() {
            *v = record[j]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::DatasetParse { row, message: format!("{}: '{}' is not a finite number", CSV_HEADER[j], &record[j]) })?;
        }
        let label = record[NUM_FEATURES]
            .parse::<u8>()
            .ok()
            .and_then(|l| GazeClass::new(l).ok())
            .ok_or_else(|| Error::DatasetParse { row, message: format!("class '{}' outside 1..9", &record[NUM_FEATURES]) })?;
        let features = OcularFeatureVector::from_array(values);
        if !features.is_consistent() {
            return Err(Error::DatasetParse { row, message: "rolling extrema do not bound the feature values".into() });
        }
        out.push(LabeledInstance { features, label });
    }
    Ok(out)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<LabeledInstance>> {
    from_csv_reader(std::fs::File::open(path)?)
}

/// Recording metadata kept next to the CSV, one entry per appended session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetadata {
    pub session_id: String,
    pub subject: String,
    pub frame_rate: f64,
    /// First data row (1-based) written by this session.
    pub first_row: usize,
    pub rows: usize,
    /// Capture time of each row, milliseconds since the session start.
    pub timestamps_ms: Vec<u64>,
}

pub fn sidecar_path(csv_path: impl AsRef<Path>) -> PathBuf {
    let mut name = csv_path.as_ref().as_os_str().to_owned();
    name.push(".sessions.json");
    PathBuf::from(name)
}

pub fn read_sessions(csv_path: impl AsRef<Path>) -> Result<Vec<SessionMetadata>> {
    let path = sidecar_path(csv_path);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::DatasetParse { row: 0, message: format!("{}: {e}", path.display()) })
}

/// Appends one recorded session to the CSV (creating it with a header if needed)
/// and records its metadata in the sidecar. `first_row` and `rows` are filled in here.
pub fn append_session(
    csv_path: impl AsRef<Path>,
    instances: &[LabeledInstance],
    timestamps_ms: &[u64],
    session_id: &str,
    subject: &str,
    frame_rate: f64,
) -> Result<SessionMetadata> {
    let csv_path = csv_path.as_ref();
    if timestamps_ms.len() != instances.len() {
        return Err(Error::Parameter(format!("{} timestamps for {} instances", timestamps_ms.len(), instances.len())));
    }
    let existing = if csv_path.exists() { read_csv(csv_path)?.len() } else { 0 };
    let fresh = !csv_path.exists() || std::fs::metadata(csv_path)?.len() == 0;
    let file = OpenOptions::new().create(true).append(true).open(csv_path)?;
    write_rows(file, instances, fresh)?;

    let meta = SessionMetadata {
        session_id: session_id.to_string(),
        subject: subject.to_string(),
        frame_rate,
        first_row: existing + 1,
        rows: instances.len(),
        timestamps_ms: timestamps_ms.to_vec(),
    };
    let mut sessions = read_sessions(csv_path)?;
    sessions.push(meta.clone());
    let text = serde_json::to_string_pretty(&sessions).expect("metadata serializes");
    std::fs::write(sidecar_path(csv_path), text + "\n")?;
    Ok(meta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub balanced: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.9, seed: 0, balanced: false }
    }
}

/// Per-class support needed before a balanced split is attempted.
pub const MIN_BALANCED_SUPPORT: usize = 10;

/// Row indices of each side, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle within each class, then a per-class cut of `round(n_c * (1 - fraction))`
/// test rows. With `balanced`, every present class contributes the smallest such count
/// and its surplus goes to training.
pub fn split_indices(labels: &[GazeClass], spec: &SplitSpec) -> Result<SplitIndices> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Parameter(format!("train fraction {} outside (0, 1)", spec.train_fraction)));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, c) in labels.iter().enumerate() {
        by_class[c.index()].push(i);
    }
    if spec.balanced {
        let short: Vec<u8> = GazeClass::all()
            .filter(|c| (1..MIN_BALANCED_SUPPORT).contains(&by_class[c.index()].len()))
            .map(|c| c.label())
            .collect();
        if !short.is_empty() {
            return Err(Error::Split { classes: short, required: MIN_BALANCED_SUPPORT });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let test_share = 1.0 - spec.train_fraction;
    let mut quotas: Vec<usize> = by_class.iter().map(|idx| (idx.len() as f64 * test_share).round() as usize).collect();
    if spec.balanced {
        let floor = by_class.iter().zip(&quotas).filter(|(idx, _)| !idx.is_empty()).map(|(_, &q)| q).min().unwrap_or(0);
        quotas.iter_mut().for_each(|q| *q = (*q).min(floor));
    }
    let mut train = Vec::with_capacity(labels.len());
    let mut test = Vec::new();
    for (idx, quota) in by_class.iter_mut().zip(quotas) {
        idx.shuffle(&mut rng);
        test.extend_from_slice(&idx[..quota]);
        train.extend_from_slice(&idx[quota..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

pub fn split(instances: &[LabeledInstance], spec: &SplitSpec) -> Result<(Vec<LabeledInstance>, Vec<LabeledInstance>)> {
    let labels: Vec<GazeClass> = instances.iter().map(|i| i.label).collect();
    let SplitIndices { train, test } = split_indices(&labels, spec)?;
    Ok((train.iter().map(|&i| instances[i]).collect(), test.iter().map(|&i| instances[i]).collect()))
}

/// Reference feature rows for classes 1..=9 in column order.
pub const REFERENCE_ROWS: [[f64; NUM_FEATURES]; NUM_CLASSES] = [
    [0.36, 0.277538696, 0.430383655, 3.08, -2.0, 11.0],
    [0.35, 0.316103573, 0.462965465, 2.76, -7.0, 10.0],
    [0.36, 0.312934426, 0.436084602, -1.62, -8.0, 7.0],
    [0.31, 0.276095344, 0.391149739, -2.82, -8.0, 7.0],
    [0.27, 0.243460121, 0.338916135, -5.2, -10.0, 1.0],
    [0.27, 0.221078406, 0.296966443, 0.68, -5.0, 3.0],
    [0.26, 0.217213378, 0.297732295, 9.68, 1.0, 13.0],
    [0.28, 0.24662586, 0.348253656, 8.74, -5.0, 12.0],
    [0.32, 0.248078475, 0.398217235, 1.1, -7.0, 9.0],
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthNoise {
    pub ear: f64,
    pub displacement: f64,
}

impl Default for SynthNoise {
    fn default() -> Self {
        Self { ear: 0.02, displacement: 1.5 }
    }
}

impl SynthNoise {
    pub fn scaled(factor: f64) -> Self {
        let d = Self::default();
        Self { ear: d.ear * factor, displacement: d.displacement * factor }
    }
}

/// `per_class` instances of each class, class-major. Values and extrema are Gaussian
/// around the reference row; extrema are then widened to bound the drawn value.
pub fn synthesize(per_class: usize, noise: SynthNoise, seed: u64) -> Result<Vec<LabeledInstance>> {
    let valid = |s: f64| s.is_finite() && s >= 0.0;
    if !valid(noise.ear) || !valid(noise.displacement) {
        return Err(Error::Parameter(format!("noise {noise:?} must be finite and non-negative")));
    }
    let ear_noise = Normal::new(0.0, noise.ear).expect("validated stdev");
    let disp_noise = Normal::new(0.0, noise.displacement).expect("validated stdev");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * NUM_CLASSES);
    for (class, row) in GazeClass::all().zip(REFERENCE_ROWS) {
        for _ in 0..per_class {
            let r = row[0] + ear_noise.sample(&mut rng);
            let min_r = (row[1] + ear_noise.sample(&mut rng)).min(r);
            let max_r = (row[2] + ear_noise.sample(&mut rng)).max(r);
            let d = row[3] + disp_noise.sample(&mut rng);
            let min_d = (row[4] + disp_noise.sample(&mut rng)).min(d);
            let max_d = (row[5] + disp_noise.sample(&mut rng)).max(d);
            let features = OcularFeatureVector { aspect_ratio: r, min_r, max_r, displacement: d, min_d, max_d };
            out.push(LabeledInstance { features, label: class });
        }
    }
    Ok(out)
}
