//! Speaker records, manifests, WAV IO and the synthetic corpus.

mod manifest;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

pub use manifest::{load_manifest, read_manifest_rows, read_wav, save_corpus, write_wav, ManifestRow};
pub use synth::{synthesize_corpus, synthesize_utterance, SeverityProfile, SynthesisProfile};

use crate::error::{Error, Result};
use crate::severity::{Severity, N_CLASSES};

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::EmptyInput("audio clip"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("sample {i} is not finite")));
        }
        Ok(AudioClip {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    /// Sub-clip over `start..end` (sample indices, clamped to the clip).
    pub fn slice(&self, start: usize, end: usize) -> Result<AudioClip> {
        let end = end.min(self.samples.len());
        if start >= end {
            return Err(Error::ClipTooShort {
                samples: self.samples.len(),
                needed: start + 1,
            });
        }
        AudioClip::new(self.samples[start..end].to_vec(), self.sample_rate_hz)
    }

    pub fn scaled(&self, gain: f64) -> Result<AudioClip> {
        AudioClip::new(self.samples.iter().map(|v| v * gain).collect(), self.sample_rate_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UtteranceKind {
    A,
    E,
    I,
    O,
    U,
    KA,
    PA,
    TA,
    Combined,
}

impl UtteranceKind {
    /// The eight recorded utterances, in manifest column order.
    pub const RECORDED: [UtteranceKind; 8] = [
        UtteranceKind::A,
        UtteranceKind::E,
        UtteranceKind::I,
        UtteranceKind::O,
        UtteranceKind::U,
        UtteranceKind::KA,
        UtteranceKind::PA,
        UtteranceKind::TA,
    ];

    /// Concatenation order for the combined utterance.
    pub const COMBINED_ORDER: [UtteranceKind; 8] = [
        UtteranceKind::A,
        UtteranceKind::E,
        UtteranceKind::I,
        UtteranceKind::O,
        UtteranceKind::U,
        UtteranceKind::KA,
        UtteranceKind::TA,
        UtteranceKind::PA,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UtteranceKind::A => "A",
            UtteranceKind::E => "E",
            UtteranceKind::I => "I",
            UtteranceKind::O => "O",
            UtteranceKind::U => "U",
            UtteranceKind::KA => "KA",
            UtteranceKind::PA => "PA",
            UtteranceKind::TA => "TA",
            UtteranceKind::Combined => "C+",
        }
    }

    pub fn is_vowel(self) -> bool {
        matches!(
            self,
            UtteranceKind::A | UtteranceKind::E | UtteranceKind::I | UtteranceKind::O | UtteranceKind::U
        )
    }
}

impl fmt::Display for UtteranceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UtteranceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s.trim().to_ascii_uppercase().as_str() {
            "A" => UtteranceKind::A,
            "E" => UtteranceKind::E,
            "I" => UtteranceKind::I,
            "O" => UtteranceKind::O,
            "U" => UtteranceKind::U,
            "KA" => UtteranceKind::KA,
            "PA" => UtteranceKind::PA,
            "TA" => UtteranceKind::TA,
            "C+" | "COMBINED" => UtteranceKind::Combined,
            other => return Err(Error::InvalidParameter(format!("unknown utterance kind `{other}`"))),
        };
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn code(self) -> &'static str {
        match self {
            Gender::Female => "F",
            Gender::Male => "M",
        }
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "F" | "f" => Ok(Gender::Female),
            "M" | "m" => Ok(Gender::Male),
            other => Err(Error::InvalidParameter(format!("gender must be F or M, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerRecord {
    pub speaker_id: String,
    pub age_years: u32,
    pub gender: Gender,
    pub severity: Option<Severity>,
    utterances: BTreeMap<UtteranceKind, AudioClip>,
}

impl SpeakerRecord {
    pub fn new(
        speaker_id: impl Into<String>,
        age_years: u32,
        gender: Gender,
        severity: Option<Severity>,
        utterances: BTreeMap<UtteranceKind, AudioClip>,
    ) -> Result<Self> {
        let speaker_id = speaker_id.into();
        if age_years == 0 {
            return Err(Error::InvalidParameter(format!("speaker {speaker_id}: age must be positive")));
        }
        for kind in UtteranceKind::RECORDED {
            if !utterances.contains_key(&kind) {
                return Err(Error::MissingUtterance {
                    speaker: speaker_id,
                    kind: kind.to_string(),
                });
            }
        }
        if utterances.contains_key(&UtteranceKind::Combined) {
            return Err(Error::InvalidParameter(format!(
                "speaker {speaker_id}: the combined utterance is derived, not stored"
            )));
        }
        Ok(SpeakerRecord {
            speaker_id,
            age_years,
            gender,
            severity,
            utterances,
        })
    }

    pub fn utterance(&self, kind: UtteranceKind) -> Result<&AudioClip> {
        self.utterances.get(&kind).ok_or_else(|| Error::MissingUtterance {
            speaker: self.speaker_id.clone(),
            kind: kind.to_string(),
        })
    }

    pub fn utterances(&self) -> impl Iterator<Item = (UtteranceKind, &AudioClip)> {
        self.utterances.iter().map(|(k, v)| (*k, v))
    }

    /// The utterance, or the concatenation of all eight for `Combined`.
    pub fn clip_for(&self, kind: UtteranceKind) -> Result<AudioClip> {
        match kind {
            UtteranceKind::Combined => concat_utterances(self, &UtteranceKind::COMBINED_ORDER),
            k => self.utterance(k).cloned(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    weights: [f64; N_CLASSES],
}

impl ClassWeights {
    pub fn get(&self, class: Severity) -> f64 {
        self.weights[class.index()]
    }

    pub fn as_array(&self) -> [f64; N_CLASSES] {
        self.weights
    }
}

/// `weight_c = N / (5 * n_c)`.
pub fn compute_class_weights(labels: &[Severity]) -> Result<ClassWeights> {
    let mut counts = [0usize; N_CLASSES];
    for l in labels {
        counts[l.index()] += 1;
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::MissingClass(Severity::from_index(missing).get()));
    }
    let total = labels.len() as f64;
    let mut weights = [0.0; N_CLASSES];
    for (w, &c) in weights.iter_mut().zip(&counts) {
        *w = total / (N_CLASSES as f64 * c as f64);
    }
    Ok(ClassWeights { weights })
}

pub fn concat_utterances(record: &SpeakerRecord, order: &[UtteranceKind]) -> Result<AudioClip> {
    let mut samples = Vec::new();
    let mut rate = None;
    for &kind in order {
        let clip = record.utterance(kind)?;
        match rate {
            None => rate = Some(clip.sample_rate_hz()),
            Some(r) if r != clip.sample_rate_hz() => {
                return Err(Error::SampleRateMismatch(r, clip.sample_rate_hz()))
            }
            Some(_) => {}
        }
        samples.extend_from_slice(clip.samples());
    }
    let rate = rate.ok_or(Error::EmptyInput("utterance order"))?;
    AudioClip::new(samples, rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record_with(rate_for: impl Fn(UtteranceKind) -> u32) -> SpeakerRecord {
        let utterances = UtteranceKind::RECORDED
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let clip = AudioClip::new(vec![i as f64 / 10.0; 8000], rate_for(k)).unwrap();
                (k, clip)
            })
            .collect();
        SpeakerRecord::new("s1", 40, Gender::Male, None, utterances).unwrap()
    }

    fn labels(counts: [usize; 5]) -> Vec<Severity> {
        counts
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| std::iter::repeat(Severity::from_index(i)).take(c))
            .collect()
    }

    #[test]
    fn clip_validation() {
        assert!(AudioClip::new(vec![], 8000).is_err());
        assert!(AudioClip::new(vec![0.0, f64::NAN], 8000).is_err());
        assert!(AudioClip::new(vec![0.0], 0).is_err());
        let c = AudioClip::new(vec![0.0, 1.0, 2.0, 3.0], 4).unwrap();
        assert_eq!(c.slice(1, 10).unwrap().samples(), &[1.0, 2.0, 3.0]);
        assert!(c.slice(4, 10).is_err());
    }

    #[test]
    fn table_one_weights() {
        let w = compute_class_weights(&labels([4, 22, 45, 62, 86])).unwrap();
        assert!((w.get(Severity::new(1).unwrap()) - 10.95).abs() < 1e-12);
        let w = w.as_array();
        assert!(w.windows(2).all(|p| p[0] > p[1]));
    }

    #[test]
    fn balanced_weights_are_one() {
        for n in [1, 10] {
            let w = compute_class_weights(&labels([n; 5])).unwrap();
            assert!(w.as_array().iter().all(|&v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn absent_class_is_named() {
        let err = compute_class_weights(&labels([3, 0, 2, 2, 2])).unwrap_err();
        assert!(matches!(err, Error::MissingClass(2)));
    }

    #[test]
    fn concatenation() {
        let r = record_with(|_| 8000);
        let c = concat_utterances(&r, &UtteranceKind::COMBINED_ORDER).unwrap();
        assert_eq!(c.len(), 64000);
        assert_eq!(&c.samples()[..8000], r.utterance(UtteranceKind::A).unwrap().samples());
        // TA precedes PA in the combined order.
        assert_eq!(c.samples()[6 * 8000], r.utterance(UtteranceKind::TA).unwrap().samples()[0]);
        let single = concat_utterances(&r, &[UtteranceKind::A]).unwrap();
        assert_eq!(&single, r.utterance(UtteranceKind::A).unwrap());
    }

    #[test]
    fn concatenation_rejects_mixed_rates() {
        let r = record_with(|k| if k == UtteranceKind::O { 16000 } else { 8000 });
        assert!(matches!(
            concat_utterances(&r, &UtteranceKind::COMBINED_ORDER),
            Err(Error::SampleRateMismatch(8000, 16000))
        ));
    }

    #[test]
    fn record_requires_all_utterances() {
        let mut utterances = BTreeMap::new();
        utterances.insert(UtteranceKind::A, AudioClip::new(vec![0.0; 10], 8000).unwrap());
        assert!(matches!(
            SpeakerRecord::new("x", 30, Gender::Female, None, utterances),
            Err(Error::MissingUtterance { .. })
        ));
    }

    #[test]
    fn kind_parsing_round_trips() {
        for k in UtteranceKind::RECORDED {
            assert_eq!(k.as_str().parse::<UtteranceKind>().unwrap(), k);
        }
        assert!("Z".parse::<UtteranceKind>().is_err());
    }

    proptest! {
        #[test]
        fn weight_times_count_is_constant(counts in prop::array::uniform5(1usize..50)) {
            let w = compute_class_weights(&labels(counts)).unwrap();
            let products: Vec<f64> = counts.iter().zip(w.as_array()).map(|(&c, w)| c as f64 * w).collect();
            for p in &products {
                prop_assert!((p - products[0]).abs() < 1e-9);
            }
        }
    }
}
