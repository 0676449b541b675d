//! Manifest CSV and 16-bit WAV persistence.

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{AudioClip, Gender, SpeakerRecord, UtteranceKind};
use crate::error::{Error, Result};
use crate::serial::write_atomic;
use crate::severity::Severity;

const HEADER: [&str; 12] = [
    "speaker_id", "age", "gender", "label", "path_A", "path_E", "path_I", "path_O", "path_U", "path_KA",
    "path_PA", "path_TA",
];

/// One manifest line with audio paths resolved against the manifest directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    /// 1-based data row (the header is row 0).
    pub row: usize,
    pub speaker_id: String,
    pub age_years: u32,
    pub gender: Gender,
    pub severity: Option<Severity>,
    pub paths: BTreeMap<UtteranceKind, PathBuf>,
}

fn field_error(row: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Manifest {
        row,
        field: field.to_owned(),
        message: message.into(),
    }
}

fn parse_row(row: usize, rec: &csv::StringRecord, base: &Path) -> Result<ManifestRow> {
    if rec.len() != HEADER.len() {
        return Err(field_error(
            row,
            "*",
            format!("expected {} columns, found {}", HEADER.len(), rec.len()),
        ));
    }
    let speaker_id = rec[0].trim().to_owned();
    if speaker_id.is_empty() {
        return Err(field_error(row, "speaker_id", "empty"));
    }
    let age_years: u32 = rec[1]
        .trim()
        .parse()
        .ok()
        .filter(|&a| a > 0)
        .ok_or_else(|| field_error(row, "age", format!("`{}` is not a positive integer", &rec[1])))?;
    let gender: Gender = rec[2]
        .parse()
        .map_err(|e: Error| field_error(row, "gender", e.to_string()))?;
    let label = rec[3].trim();
    let severity = if label.is_empty() {
        None
    } else {
        let v: i64 = label
            .parse()
            .map_err(|_| field_error(row, "label", format!("`{label}` is not an integer")))?;
        Some(Severity::try_from_i64(v).map_err(|e| field_error(row, "label", e.to_string()))?)
    };
    let mut paths = BTreeMap::new();
    for (i, kind) in UtteranceKind::RECORDED.iter().enumerate() {
        let raw = rec[4 + i].trim();
        if raw.is_empty() {
            return Err(field_error(row, HEADER[4 + i], "empty path"));
        }
        paths.insert(*kind, base.join(raw));
    }
    Ok(ManifestRow {
        row,
        speaker_id,
        age_years,
        gender,
        severity,
        paths,
    })
}

/// Parses the manifest without touching any audio.
pub fn read_manifest_rows(path: &Path) -> Result<Vec<ManifestRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| field_error(0, "*", e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != HEADER {
        return Err(field_error(0, "*", format!("header must be `{}`", HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| field_error(i + 1, "*", e.to_string()))?;
        rows.push(parse_row(i + 1, &rec, &base)?);
    }
    Ok(rows)
}

pub fn load_manifest(path: &Path) -> Result<Vec<SpeakerRecord>> {
    let rows = read_manifest_rows(path)?;
    rows.par_iter()
        .map(|row| {
            let mut utterances = BTreeMap::new();
            for (kind, p) in &row.paths {
                let clip = read_wav(p).map_err(|e| {
                    field_error(row.row, &format!("path_{kind}"), e.to_string())
                })?;
                utterances.insert(*kind, clip);
            }
            SpeakerRecord::new(row.speaker_id.clone(), row.age_years, row.gender, row.severity, utterances)
                .map_err(|e| field_error(row.row, "speaker_id", e.to_string()))
        })
        .collect()
}

pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let audio_err = |message: String| Error::Audio {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => audio_err(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(audio_err(format!("{} channels; only mono is supported", spec.channels)));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 2f64.powi(i32::from(bits) - 1);
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<std::result::Result<_, _>>()
        }
        (fmt, bits) => return Err(audio_err(format!("unsupported encoding {fmt:?} {bits}-bit"))),
    }
    .map_err(|e| audio_err(e.to_string()))?;
    AudioClip::new(samples, spec.sample_rate).map_err(|e| audio_err(e.to_string()))
}

/// 16-bit PCM mono; samples are clipped to [-1, 1].
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let audio_err = |e: hound::Error| Error::Audio {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut writer = hound::WavWriter::new(&mut buf, spec).map_err(audio_err)?;
        for &s in clip.samples() {
            let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
            writer.write_sample(q).map_err(audio_err)?;
        }
        writer.finalize().map_err(audio_err)?;
    }
    write_atomic(path, buf.get_ref())
}

/// Writes `audio/<speaker>_<kind>.wav` files and `manifest.csv` under `dir`,
/// returning the manifest path.
pub fn save_corpus(records: &[SpeakerRecord], dir: &Path) -> Result<PathBuf> {
    let audio_dir = dir.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    records
        .par_iter()
        .flat_map(|r| r.utterances().map(move |(k, c)| (r, k, c)).collect::<Vec<_>>())
        .try_for_each(|(r, kind, clip)| {
            write_wav(&audio_dir.join(format!("{}_{}.wav", r.speaker_id, kind)), clip)
        })?;

    let mut writer = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidParameter(format!("manifest encoding: {e}"));
    writer.write_record(HEADER).map_err(csv_err)?;
    for r in records {
        let mut fields = vec![
            r.speaker_id.clone(),
            r.age_years.to_string(),
            r.gender.code().to_owned(),
            r.severity.map(|s| s.to_string()).unwrap_or_default(),
        ];
        fields.extend(
            UtteranceKind::RECORDED
                .iter()
                .map(|k| format!("audio/{}_{}.wav", r.speaker_id, k)),
        );
        writer.write_record(&fields).map_err(csv_err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::InvalidParameter(format!("manifest encoding: {e}")))?;
    let manifest = dir.join("manifest.csv");
    write_atomic(&manifest, &bytes)?;
    Ok(manifest)
}
