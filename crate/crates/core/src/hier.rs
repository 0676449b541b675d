//! Two-stage hierarchical severity classifier.
//!
//! Stage 1 is a set of binary boosted models, each trained on one
//! demographic subgroup and one pair of class groups, using 12 acoustic
//! features (F1..F5 and seven glottal statistics) from one utterance plus
//! the encoded age and gender. Stage 2 is a forest over the stage-1
//! probabilities plus age and gender.
//!
//! Stage 2 is trained on stage-1 probabilities for the training speakers
//! themselves, so it sees stage-1 models at their most confident; with small
//! corpora this overstates stage-1 reliability.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::{debug, warn};
use rayon::prelude::*;

use crate::boost::{train_forest, train_gbm, ForestModel, ForestParams, GbmModel, GbmParams};
use crate::corpus::{AudioClip, Gender, SpeakerRecord, UtteranceKind};
use crate::error::{Error, Result};
use crate::formant::{self, N_FORMANTS};
use crate::fusion::{ClassDistribution, FusionMode, TiePolicy, VoteOutcome};
use crate::glottal::{self, GlottalParams, N_GLOTTAL_PARAMS};
use crate::seed::sub_seed;
use crate::serial::{self, ByteReader, ByteWriter};
use crate::severity::Severity;

pub const N_ACOUSTIC_FEATURES: usize = N_FORMANTS + N_GLOTTAL_PARAMS;
pub const N_SPEAKER_FEATURES: usize = N_ACOUSTIC_FEATURES + 2;
pub const FEMALE_CODE: f64 = 0.9;
pub const MALE_CODE: f64 = 0.1;
pub const AGE_SPLIT_YEARS: u32 = 60;
pub const STAGE_ONE_LEARNING_RATE: f64 = 0.01;

const SECTION_CONFIG: u32 = u32::from_le_bytes(*b"HCFG");
const SECTION_OPTIONS: u32 = u32::from_le_bytes(*b"HOPT");

pub fn encode_age(age_years: u32) -> f64 {
    (f64::from(age_years) / 100.0).clamp(0.0, 1.0)
}

pub fn encode_gender(gender: Gender) -> f64 {
    match gender {
        Gender::Female => FEMALE_CODE,
        Gender::Male => MALE_CODE,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SubgroupKey {
    Female,
    MaleUnder60,
    MaleOver60,
    All,
}

impl SubgroupKey {
    pub fn contains(self, gender: Gender, age_years: u32) -> bool {
        match self {
            SubgroupKey::Female => gender == Gender::Female,
            SubgroupKey::MaleUnder60 => gender == Gender::Male && age_years < AGE_SPLIT_YEARS,
            SubgroupKey::MaleOver60 => gender == Gender::Male && age_years >= AGE_SPLIT_YEARS,
            SubgroupKey::All => true,
        }
    }

    pub fn includes(self, record: &SpeakerRecord) -> bool {
        self.contains(record.gender, record.age_years)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SubgroupKey::Female => "F",
            SubgroupKey::MaleUnder60 => "M<60",
            SubgroupKey::MaleOver60 => "M>=60",
            SubgroupKey::All => "All",
        }
    }
}

impl fmt::Display for SubgroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SubgroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "F" => Ok(SubgroupKey::Female),
            "M<60" => Ok(SubgroupKey::MaleUnder60),
            "M>=60" => Ok(SubgroupKey::MaleOver60),
            "All" => Ok(SubgroupKey::All),
            other => Err(Error::InvalidParameter(format!(
                "unknown subgroup `{other}` (expected F, M<60, M>=60 or All)"
            ))),
        }
    }
}

/// Portion of an utterance a stage-1 model looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Segment {
    Full,
    /// The first 20 s (the whole clip when shorter).
    Initial20s,
    /// The 10 s starting at 20 s, clamped to the clip end.
    Later10s,
}

impl Segment {
    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Full => "full",
            Segment::Initial20s => "initial20s",
            Segment::Later10s => "later10s",
        }
    }

    /// The segment and whether it fell back to the full clip because the
    /// clip ends before the segment starts.
    pub fn apply(self, clip: &AudioClip) -> Result<(AudioClip, bool)> {
        let fs = f64::from(clip.sample_rate_hz());
        let (start_s, len_s) = match self {
            Segment::Full => return Ok((clip.clone(), false)),
            Segment::Initial20s => (0.0, 20.0),
            Segment::Later10s => (20.0, 10.0),
        };
        let start = (start_s * fs).round() as usize;
        let end = ((start_s + len_s) * fs).round() as usize;
        if start >= clip.len() {
            return Ok((clip.clone(), true));
        }
        Ok((clip.slice(start, end.min(clip.len()))?, false))
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Segment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(Segment::Full),
            "initial20s" => Ok(Segment::Initial20s),
            "later10s" => Ok(Segment::Later10s),
            other => Err(Error::InvalidParameter(format!(
                "unknown segment `{other}` (expected full, initial20s or later10s)"
            ))),
        }
    }
}

/// One stage-1 binary model: target is 1 for `positive` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOneSpec {
    pub model_id: u8,
    pub subgroup: SubgroupKey,
    pub positive: Vec<Severity>,
    pub negative: Vec<Severity>,
    pub sound: UtteranceKind,
    pub n_estimators: usize,
    pub frame_len_ms: f64,
    pub segment: Segment,
}

fn classes(labels: &[u8]) -> Vec<Severity> {
    labels.iter().map(|&l| Severity::from_index(usize::from(l) - 1)).collect()
}

fn class_digits(set: &[Severity]) -> String {
    set.iter().map(|s| s.to_string()).collect()
}

fn parse_class_digits(s: &str) -> Result<Vec<Severity>> {
    let mut out: Vec<Severity> = s
        .trim()
        .chars()
        .map(|c| {
            c.to_digit(10)
                .ok_or_else(|| Error::InvalidParameter(format!("`{c}` is not a class digit")))
                .and_then(|d| Severity::try_from_i64(i64::from(d)))
        })
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

impl StageOneSpec {
    pub fn involves(&self, label: Severity) -> bool {
        self.positive.contains(&label) || self.negative.contains(&label)
    }

    /// Short form such as `3 vs 45`.
    pub fn split_label(&self) -> String {
        format!("{} vs {}", class_digits(&self.positive), class_digits(&self.negative))
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(format!("model {}: {m}", self.model_id)));
        if self.positive.is_empty() || self.negative.is_empty() {
            return bad("both class groups must be non-empty".into());
        }
        if self.positive.iter().any(|c| self.negative.contains(c)) {
            return bad(format!("class groups overlap in `{}`", self.split_label()));
        }
        if self.n_estimators == 0 {
            return bad("n_estimators must be positive".into());
        }
        if !(self.frame_len_ms > 0.0 && self.frame_len_ms.is_finite()) {
            return bad(format!("frame length {} ms is not positive", self.frame_len_ms));
        }
        Ok(())
    }
}

/// The eight stage-1 models used by default.
pub fn default_hierarchy_config() -> Vec<StageOneSpec> {
    use Segment::*;
    use SubgroupKey::*;
    use UtteranceKind as K;
    let row = |model_id, subgroup, pos: &[u8], neg: &[u8], sound, n_estimators, frame_len_ms, segment| StageOneSpec {
        model_id,
        subgroup,
        positive: classes(pos),
        negative: classes(neg),
        sound,
        n_estimators,
        frame_len_ms,
        segment,
    };
    vec![
        row(1, Female, &[3], &[4, 5], K::A, 200, 100.0, Full),
        row(2, Female, &[4], &[5], K::KA, 100, 100.0, Initial20s),
        row(3, MaleUnder60, &[3], &[4, 5], K::U, 100, 50.0, Later10s),
        row(4, MaleUnder60, &[4], &[5], K::O, 100, 500.0, Full),
        row(5, MaleOver60, &[3], &[4, 5], K::E, 200, 100.0, Initial20s),
        row(6, MaleOver60, &[4], &[5], K::I, 100, 100.0, Initial20s),
        row(7, All, &[1], &[2], K::I, 100, 50.0, Full),
        row(8, All, &[1], &[2], K::U, 100, 50.0, Full),
    ]
}

pub fn validate_config(config: &[StageOneSpec]) -> Result<()> {
    if config.is_empty() {
        return Err(Error::EmptyInput("hierarchy config"));
    }
    let mut ids = BTreeSet::new();
    for spec in config {
        spec.validate()?;
        if !ids.insert(spec.model_id) {
            return Err(Error::InvalidParameter(format!("duplicate model id {}", spec.model_id)));
        }
    }
    Ok(())
}

const CONFIG_HEADER: [&str; 8] = [
    "model_id",
    "subgroup",
    "positive",
    "negative",
    "sound",
    "n_estimators",
    "frame_ms",
    "segment",
];

/// CSV with one row per stage-1 model; class groups are digit strings
/// (`45` means classes 4 and 5). Lines starting with `#` are ignored.
pub fn config_to_csv(config: &[StageOneSpec]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CONFIG_HEADER).expect("in-memory write");
    for s in config {
        w.write_record([
            s.model_id.to_string(),
            s.subgroup.to_string(),
            class_digits(&s.positive),
            class_digits(&s.negative),
            s.sound.to_string(),
            s.n_estimators.to_string(),
            s.frame_len_ms.to_string(),
            s.segment.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV of UTF-8 fields")
}

pub fn config_from_csv(text: &str) -> Result<Vec<StageOneSpec>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Config {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != CONFIG_HEADER {
        return Err(Error::Config {
            line: 1,
            message: format!("header must be `{}`", CONFIG_HEADER.join(",")),
        });
    }
    let mut config = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| Error::Config {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let wrap = |e: Error| Error::Config {
            line,
            message: e.to_string(),
        };
        let field = |i: usize| record.get(i).unwrap_or_default();
        let number = |i: usize| -> Result<f64> {
            field(i).parse::<f64>().map_err(|_| Error::Config {
                line,
                message: format!("`{}` is not a number in column {}", field(i), CONFIG_HEADER[i]),
            })
        };
        let model_id = number(0)?;
        let n_estimators = number(5)?;
        if model_id.fract() != 0.0 || !(1.0..=255.0).contains(&model_id) || n_estimators.fract() != 0.0 || n_estimators < 1.0 {
            return Err(Error::Config {
                line,
                message: "model_id and n_estimators must be positive integers".into(),
            });
        }
        let spec = StageOneSpec {
            model_id: model_id as u8,
            subgroup: field(1).parse().map_err(wrap)?,
            positive: parse_class_digits(field(2)).map_err(wrap)?,
            negative: parse_class_digits(field(3)).map_err(wrap)?,
            sound: field(4).parse().map_err(wrap)?,
            n_estimators: n_estimators as usize,
            frame_len_ms: number(6)?,
            segment: field(7).parse().map_err(wrap)?,
        };
        spec.validate().map_err(wrap)?;
        config.push(spec);
    }
    validate_config(&config)?;
    Ok(config)
}

pub fn read_config(path: &Path) -> Result<Vec<StageOneSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    config_from_csv(&text)
}

pub fn write_config(path: &Path, config: &[StageOneSpec]) -> Result<()> {
    serial::write_atomic(path, config_to_csv(config).as_bytes())
}

/// The 12 acoustic features of one (segmented) utterance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcousticFeatures {
    pub formants_hz: [f64; N_FORMANTS],
    pub glottal: GlottalParams,
    /// Formant estimation failed and the formant fields are zero.
    pub formants_missing: bool,
}

impl AcousticFeatures {
    pub const NAMES: [&'static str; N_ACOUSTIC_FEATURES] = [
        "f1_hz",
        "f2_hz",
        "f3_hz",
        "f4_hz",
        "f5_hz",
        GlottalParams::NAMES[0],
        GlottalParams::NAMES[1],
        GlottalParams::NAMES[2],
        GlottalParams::NAMES[3],
        GlottalParams::NAMES[4],
        GlottalParams::NAMES[5],
        GlottalParams::NAMES[6],
    ];

    pub fn to_array(&self) -> [f64; N_ACOUSTIC_FEATURES] {
        let mut out = [0.0; N_ACOUSTIC_FEATURES];
        out[..N_FORMANTS].copy_from_slice(&self.formants_hz);
        out[N_FORMANTS..].copy_from_slice(&self.glottal.to_array());
        out
    }
}

/// Formants use `frame_len_ms` analysis frames; the glottal statistics are
/// whole-clip measurements.
pub fn acoustic_features(clip: &AudioClip, frame_len_ms: f64) -> Result<AcousticFeatures> {
    let (formants_hz, formants_missing) = match formant::estimate_formants(clip, frame_len_ms) {
        Ok(set) => (set.f_hz, false),
        Err(e @ (Error::PartialFormants { .. } | Error::ClipTooShort { .. })) => {
            warn!("formant estimation failed ({e}); using zeros");
            ([0.0; N_FORMANTS], true)
        }
        Err(e) => return Err(e),
    };
    let gci = glottal::detect_gci(clip);
    Ok(AcousticFeatures {
        formants_hz,
        glottal: glottal::extract_glottal_params(&gci, clip),
        formants_missing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeakerFeatureVector {
    pub acoustic: AcousticFeatures,
    pub age_norm: f64,
    pub gender_code: f64,
    /// The requested segment did not exist and the full clip was used.
    pub segment_fell_back: bool,
}

impl SpeakerFeatureVector {
    pub fn to_array(&self) -> [f64; N_SPEAKER_FEATURES] {
        let mut out = [0.0; N_SPEAKER_FEATURES];
        out[..N_ACOUSTIC_FEATURES].copy_from_slice(&self.acoustic.to_array());
        out[N_ACOUSTIC_FEATURES] = self.age_norm;
        out[N_ACOUSTIC_FEATURES + 1] = self.gender_code;
        out
    }
}

pub fn build_feature_vector(record: &SpeakerRecord, spec: &StageOneSpec) -> Result<SpeakerFeatureVector> {
    let clip = record.clip_for(spec.sound)?;
    let (segment, fell_back) = spec.segment.apply(&clip)?;
    if fell_back {
        warn!(
            "speaker {}: {} clip of {:.2} s has no {} segment; using the full clip",
            record.speaker_id,
            spec.sound,
            clip.duration_s(),
            spec.segment
        );
    }
    let acoustic = acoustic_features(&segment, spec.frame_len_ms).map_err(|e| Error::for_speaker(&record.speaker_id, e))?;
    Ok(SpeakerFeatureVector {
        acoustic,
        age_norm: encode_age(record.age_years),
        gender_code: encode_gender(record.gender),
        segment_fell_back: fell_back,
    })
}

type FeatureKey = (UtteranceKind, u64, Segment);

fn feature_key(spec: &StageOneSpec) -> FeatureKey {
    (spec.sound, spec.frame_len_ms.to_bits(), spec.segment)
}

/// Feature rows for every spec, computing each distinct
/// (sound, frame length, segment) combination once.
fn speaker_rows(record: &SpeakerRecord, config: &[StageOneSpec]) -> Result<Vec<[f64; N_SPEAKER_FEATURES]>> {
    let mut cache: BTreeMap<FeatureKey, [f64; N_SPEAKER_FEATURES]> = BTreeMap::new();
    config
        .iter()
        .map(|spec| {
            let key = feature_key(spec);
            if let Some(row) = cache.get(&key) {
                return Ok(*row);
            }
            let row = build_feature_vector(record, spec)?.to_array();
            cache.insert(key, row);
            Ok(row)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierarchyOptions {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub stage_two: ForestParams,
    /// Feed every stage-1 probability to stage 2, even for speakers outside
    /// the model's subgroup. When false those entries are 0.5.
    pub evaluate_out_of_group: bool,
    pub tie_policy: TiePolicy,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        HierarchyOptions {
            learning_rate: STAGE_ONE_LEARNING_RATE,
            max_depth: 3,
            stage_two: ForestParams::default(),
            evaluate_out_of_group: true,
            tie_policy: TiePolicy::Severe,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyModel {
    pub config: Vec<StageOneSpec>,
    pub stage1: Vec<GbmModel>,
    pub stage2: ForestModel,
    pub evaluate_out_of_group: bool,
    pub tie_policy: TiePolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOneSummary {
    pub model_id: u8,
    pub n_train: usize,
    pub n_positive: usize,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub stage1: Vec<StageOneSummary>,
    pub stage2_train_accuracy: f64,
    pub n_speakers: usize,
}

impl fmt::Display for TrainingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model  n_train  n_pos  train_acc")?;
        for s in &self.stage1 {
            writeln!(f, "{:>5}  {:>7}  {:>5}  {:>9.4}", s.model_id, s.n_train, s.n_positive, s.train_accuracy)?;
        }
        write!(f, "stage 2: {} speakers, train_acc {:.4}", self.n_speakers, self.stage2_train_accuracy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyPrediction {
    pub label: Severity,
    pub votes: VoteOutcome,
    /// Mean leaf class frequencies over the stage-2 trees.
    pub distribution: ClassDistribution,
    /// One probability per configured stage-1 model, in config order.
    pub stage1: Vec<f64>,
    pub stage2_input: Vec<f64>,
}

fn stage_two_input(
    config: &[StageOneSpec],
    stage1: &[GbmModel],
    rows: &[[f64; N_SPEAKER_FEATURES]],
    record: &SpeakerRecord,
    evaluate_out_of_group: bool,
) -> Result<Vec<f64>> {
    let mut input = Vec::with_capacity(config.len() + 2);
    for ((spec, model), row) in config.iter().zip(stage1).zip(rows) {
        if evaluate_out_of_group || spec.subgroup.includes(record) {
            input.push(model.predict_proba(row)?);
        } else {
            input.push(0.5);
        }
    }
    input.push(encode_age(record.age_years));
    input.push(encode_gender(record.gender));
    Ok(input)
}

fn labelled(records: &[SpeakerRecord]) -> Result<Vec<Severity>> {
    let labels = records
        .iter()
        .map(|r| {
            r.severity.ok_or_else(|| {
                Error::for_speaker(&r.speaker_id, Error::InvalidParameter("training speaker has no label".into()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for class in Severity::ALL {
        if !labels.contains(&class) {
            return Err(Error::MissingClass(class.get()));
        }
    }
    Ok(labels)
}

pub fn train_hierarchy(
    records: &[SpeakerRecord],
    config: &[StageOneSpec],
    options: &HierarchyOptions,
    seed: u64,
) -> Result<HierarchyModel> {
    train_hierarchy_report(records, config, options, seed).map(|(m, _)| m)
}

pub fn train_hierarchy_report(
    records: &[SpeakerRecord],
    config: &[StageOneSpec],
    options: &HierarchyOptions,
    seed: u64,
) -> Result<(HierarchyModel, TrainingReport)> {
    validate_config(config)?;
    let labels = labelled(records)?;

    // Subsets are checked before any audio is analysed.
    let subsets: Vec<Vec<usize>> = config
        .iter()
        .map(|spec| {
            let subset: Vec<usize> = (0..records.len())
                .filter(|&i| spec.subgroup.includes(&records[i]) && spec.involves(labels[i]))
                .collect();
            if subset.is_empty() {
                return Err(Error::EmptyTrainingSubset { model_id: spec.model_id });
            }
            let n_pos = subset.iter().filter(|&&i| spec.positive.contains(&labels[i])).count();
            if n_pos == 0 || n_pos == subset.len() {
                return Err(Error::DegenerateTrainingSubset { model_id: spec.model_id });
            }
            Ok(subset)
        })
        .collect::<Result<_>>()?;

    let rows: Vec<Vec<[f64; N_SPEAKER_FEATURES]>> = records
        .par_iter()
        .map(|r| speaker_rows(r, config))
        .collect::<Result<_>>()?;
    debug!("extracted stage-1 features for {} speakers", records.len());

    let fitted: Vec<(GbmModel, StageOneSummary)> = config
        .par_iter()
        .zip(&subsets)
        .enumerate()
        .map(|(m, (spec, subset))| {
            let x: Vec<Vec<f64>> = subset.iter().map(|&i| rows[i][m].to_vec()).collect();
            let y: Vec<bool> = subset.iter().map(|&i| spec.positive.contains(&labels[i])).collect();
            let n_pos = y.iter().filter(|&&v| v).count();
            let n = y.len() as f64;
            let (w_pos, w_neg) = (n / (2.0 * n_pos as f64), n / (2.0 * (y.len() - n_pos) as f64));
            let w: Vec<f64> = y.iter().map(|&v| if v { w_pos } else { w_neg }).collect();
            let params = GbmParams {
                n_estimators: spec.n_estimators,
                learning_rate: options.learning_rate,
                max_depth: options.max_depth,
            };
            let model = train_gbm(&x, &y, &w, &params).map_err(|e| Error::InvalidParameter(format!("model {}: {e}", spec.model_id)))?;
            let correct = x
                .iter()
                .zip(&y)
                .filter(|(row, &t)| model.predict_proba(row).map(|p| (p >= 0.5) == t).unwrap_or(false))
                .count();
            let summary = StageOneSummary {
                model_id: spec.model_id,
                n_train: y.len(),
                n_positive: n_pos,
                train_accuracy: correct as f64 / n,
            };
            Ok((model, summary))
        })
        .collect::<Result<_>>()?;
    let (stage1, summaries): (Vec<GbmModel>, Vec<StageOneSummary>) = fitted.into_iter().unzip();

    let stage2_x: Vec<Vec<f64>> = records
        .iter()
        .zip(&rows)
        .map(|(r, rows)| stage_two_input(config, &stage1, rows, r, options.evaluate_out_of_group))
        .collect::<Result<_>>()?;
    let stage2 = train_forest(&stage2_x, &labels, &options.stage_two, sub_seed(seed, "stage2"))?;
    let correct = stage2_x
        .iter()
        .zip(&labels)
        .filter(|(x, l)| stage2.predict(x, options.tie_policy).map(|v| v.winner == **l).unwrap_or(false))
        .count();

    let model = HierarchyModel {
        config: config.to_vec(),
        stage1,
        stage2,
        evaluate_out_of_group: options.evaluate_out_of_group,
        tie_policy: options.tie_policy,
    };
    let report = TrainingReport {
        stage1: summaries,
        stage2_train_accuracy: correct as f64 / records.len() as f64,
        n_speakers: records.len(),
    };
    Ok((model, report))
}

pub fn predict_hierarchy(model: &HierarchyModel, record: &SpeakerRecord) -> Result<HierarchyPrediction> {
    predict_hierarchy_with(model, record, FusionMode::Majority, model.tie_policy)
}

/// `Majority` takes the plurality of the stage-2 trees; `Soft` takes the
/// argmax of their averaged leaf distributions.
pub fn predict_hierarchy_with(
    model: &HierarchyModel,
    record: &SpeakerRecord,
    mode: FusionMode,
    policy: TiePolicy,
) -> Result<HierarchyPrediction> {
    let rows = speaker_rows(record, &model.config)?;
    let input = stage_two_input(&model.config, &model.stage1, &rows, record, model.evaluate_out_of_group)?;
    let votes = model.stage2.predict(&input, policy)?;
    let distribution = model.stage2.predict_distribution(&input)?;
    let label = match mode {
        FusionMode::Majority => votes.winner,
        FusionMode::Soft => distribution.argmax(policy),
    };
    Ok(HierarchyPrediction {
        label,
        votes,
        distribution,
        stage1: input[..model.config.len()].to_vec(),
        stage2_input: input,
    })
}

/// Predictions for many speakers, computed in parallel, in input order.
pub fn predict_many(
    model: &HierarchyModel,
    records: &[SpeakerRecord],
    mode: FusionMode,
    policy: TiePolicy,
) -> Result<Vec<HierarchyPrediction>> {
    records
        .par_iter()
        .map(|r| predict_hierarchy_with(model, r, mode, policy))
        .collect()
}

impl HierarchyModel {
    pub fn stage_two_dimension(&self) -> usize {
        self.config.len() + 2
    }

    /// Header, the config as CSV text, options, one section per stage-1
    /// model, then the forest.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header();
        w.section(SECTION_CONFIG, |w| w.str(&config_to_csv(&self.config)));
        w.section(SECTION_OPTIONS, |w| {
            w.u8(u8::from(self.evaluate_out_of_group));
            w.u8(match self.tie_policy {
                TiePolicy::Severe => 0,
                TiePolicy::LeastSevere => 1,
            });
        });
        for m in &self.stage1 {
            m.write(&mut w);
        }
        self.stage2.write(&mut w);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::with_header(bytes)?;
        let mut cfg = r.section(SECTION_CONFIG)?;
        let config = config_from_csv(&cfg.str()?).map_err(|e| Error::ModelFormat(format!("embedded config: {e}")))?;
        cfg.finish()?;
        let mut opt = r.section(SECTION_OPTIONS)?;
        let evaluate_out_of_group = match opt.u8()? {
            0 => false,
            1 => true,
            v => return Err(Error::ModelFormat(format!("bad out-of-group flag {v}"))),
        };
        let tie_policy = match opt.u8()? {
            0 => TiePolicy::Severe,
            1 => TiePolicy::LeastSevere,
            v => return Err(Error::ModelFormat(format!("bad tie policy {v}"))),
        };
        opt.finish()?;
        let stage1 = config
            .iter()
            .map(|_| {
                let m = GbmModel::read(&mut r)?;
                if m.n_features != N_SPEAKER_FEATURES {
                    return Err(Error::ModelFormat(format!("stage-1 model has {} inputs", m.n_features)));
                }
                Ok(m)
            })
            .collect::<Result<Vec<_>>>()?;
        let stage2 = ForestModel::read(&mut r)?;
        r.finish()?;
        if stage2.n_features != config.len() + 2 {
            return Err(Error::ModelFormat(format!(
                "stage-2 forest expects {} inputs, config implies {}",
                stage2.n_features,
                config.len() + 2
            )));
        }
        Ok(HierarchyModel {
            config,
            stage1,
            stage2,
            evaluate_out_of_group,
            tie_policy,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        serial::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
