//! Source-filter speech synthesis with known excitation instants.
//!
//! An impulse train (with per-period timing and amplitude perturbation)
//! passes through a one-pole glottal tilt and a cascade of five second-order
//! resonators. Syllable utterances gate the voiced signal on and off and add a
//! short noise burst before each vowel onset.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{AudioClip, Gender, SpeakerRecord, UtteranceKind};
use crate::error::{Error, Result};
use crate::seed::sub_seed;
use crate::severity::{Severity, N_CLASSES};

/// Sample rate of generated corpora.
pub const CORPUS_SAMPLE_RATE_HZ: u32 = 10_000;
pub const CORPUS_UTTERANCE_S: f64 = 2.0;

/// One-pole glottal spectral tilt applied to the impulse train.
const TILT_POLE: f64 = 0.97;
const PEAK_LEVEL: f64 = 0.9;
const DEFAULT_BANDWIDTHS: [f64; 5] = [90.0, 100.0, 130.0, 150.0, 170.0];

pub const FORMANTS_A: [f64; 5] = [700.0, 1220.0, 2600.0, 3200.0, 3700.0];
pub const FORMANTS_E: [f64; 5] = [500.0, 1800.0, 2500.0, 3300.0, 3800.0];
pub const FORMANTS_I: [f64; 5] = [300.0, 2300.0, 3000.0, 3500.0, 4000.0];
pub const FORMANTS_O: [f64; 5] = [500.0, 900.0, 2400.0, 3200.0, 3700.0];
pub const FORMANTS_U: [f64; 5] = [350.0, 800.0, 2400.0, 3200.0, 3700.0];

pub fn vowel_formants(kind: UtteranceKind) -> [f64; 5] {
    match kind {
        UtteranceKind::E => FORMANTS_E,
        UtteranceKind::I => FORMANTS_I,
        UtteranceKind::O => FORMANTS_O,
        UtteranceKind::U => FORMANTS_U,
        _ => FORMANTS_A,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Articulation {
    Sustained,
    /// Voiced segments of `voiced_ms` repeating at `rate_hz`, each preceded
    /// by a `burst_ms` noise burst.
    Syllables { rate_hz: f64, voiced_ms: f64, burst_ms: f64 },
}

impl Articulation {
    pub const SYLLABLE_TRAIN: Articulation = Articulation::Syllables {
        rate_hz: 5.0,
        voiced_ms: 100.0,
        burst_ms: 15.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisProfile {
    pub f0_hz: f64,
    pub jitter_pct: f64,
    pub shimmer_pct: f64,
    /// Per-period relative standard deviation of every formant frequency.
    pub formant_instability_pct: f64,
    pub formants_hz: [f64; 5],
    pub formant_bandwidths_hz: [f64; 5],
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub articulation: Articulation,
}

impl SynthesisProfile {
    /// Clean one-second sustained vowel.
    pub fn vowel(formants_hz: [f64; 5], f0_hz: f64, sample_rate_hz: u32) -> Self {
        SynthesisProfile {
            f0_hz,
            jitter_pct: 0.0,
            shimmer_pct: 0.0,
            formant_instability_pct: 0.0,
            formants_hz,
            formant_bandwidths_hz: DEFAULT_BANDWIDTHS,
            duration_s: 1.0,
            sample_rate_hz,
            articulation: Articulation::Sustained,
        }
    }

    pub fn vowel_a(f0_hz: f64, sample_rate_hz: u32) -> Self {
        Self::vowel(FORMANTS_A, f0_hz, sample_rate_hz)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.sample_rate_hz == 0 {
            return bad("sample rate must be positive".into());
        }
        let nyquist = f64::from(self.sample_rate_hz) / 2.0;
        if !(60.0..=400.0).contains(&self.f0_hz) {
            return bad(format!("f0 {} Hz outside [60, 400]", self.f0_hz));
        }
        if !(self.jitter_pct >= 0.0 && self.shimmer_pct >= 0.0 && self.formant_instability_pct >= 0.0) {
            return bad("perturbation percentages must be non-negative".into());
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration {} s must be positive", self.duration_s));
        }
        if !self.formants_hz.windows(2).all(|w| w[0] < w[1]) || self.formants_hz[0] <= 0.0 {
            return bad(format!("formants {:?} must be positive and strictly ascending", self.formants_hz));
        }
        if self.formants_hz[4] >= nyquist {
            return bad(format!("formant {} Hz is at or above Nyquist ({nyquist} Hz)", self.formants_hz[4]));
        }
        if self.formant_bandwidths_hz.iter().any(|&b| !(b > 0.0)) {
            return bad("formant bandwidths must be positive".into());
        }
        if let Articulation::Syllables { rate_hz, voiced_ms, burst_ms } = self.articulation {
            let cycle_ms = 1000.0 / rate_hz;
            if !(rate_hz > 0.0 && voiced_ms > 0.0 && burst_ms >= 0.0 && burst_ms + 5.0 + voiced_ms < cycle_ms) {
                return bad("syllable timing does not fit in one cycle".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Synthesized {
    pub clip: AudioClip,
    /// Excitation impulse sample indices (voiced segments only).
    pub impulse_positions: Vec<usize>,
    /// Excitation amplitudes aligned with `impulse_positions`.
    pub impulse_amplitudes: Vec<f64>,
}

impl Synthesized {
    pub fn impulse_periods(&self) -> Vec<f64> {
        self.impulse_positions
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64)
            .collect()
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z.clamp(-3.0, 3.0)
}

#[derive(Clone, Copy)]
struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
}

impl Resonator {
    fn new(freq: f64, bandwidth: f64, fs: f64) -> Self {
        let r = (-PI * bandwidth / fs).exp();
        let theta = 2.0 * PI * freq / fs;
        let a1 = 2.0 * r * theta.cos();
        let a2 = -r * r;
        Resonator {
            a1,
            a2,
            gain: 1.0 - a1 - a2,
        }
    }
}

/// 0..1 voicing envelope for syllable trains, with 5 ms raised-cosine ramps.
fn syllable_gate(n: usize, fs: f64, rate_hz: f64, voiced_ms: f64, burst_ms: f64) -> (Vec<f64>, Vec<bool>) {
    let cycle = fs / rate_hz;
    let onset = (burst_ms + 5.0) * fs / 1000.0;
    let voiced = voiced_ms * fs / 1000.0;
    let burst = burst_ms * fs / 1000.0;
    let ramp = 0.005 * fs;
    let mut gate = vec![0.0; n];
    let mut in_burst = vec![false; n];
    for (i, g) in gate.iter_mut().enumerate() {
        let t = i as f64 % cycle;
        in_burst[i] = t < burst;
        let v = t - onset;
        *g = if v < 0.0 || v >= voiced {
            0.0
        } else if v < ramp {
            0.5 - 0.5 * (PI * v / ramp).cos()
        } else if v > voiced - ramp {
            0.5 - 0.5 * (PI * (voiced - v) / ramp).cos()
        } else {
            1.0
        };
    }
    (gate, in_burst)
}

pub fn synthesize_utterance(profile: &SynthesisProfile, seed: u64) -> Result<Synthesized> {
    profile.validate()?;
    let fs = f64::from(profile.sample_rate_hz);
    let n = (profile.duration_s * fs).round() as usize;
    if n == 0 {
        return Err(Error::InvalidParameter("duration shorter than one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nyquist = fs / 2.0;
    let base_period = (fs / profile.f0_hz).round();
    let jitter = profile.jitter_pct / 100.0;
    let shimmer = profile.shimmer_pct / 100.0;
    let instability = profile.formant_instability_pct / 100.0;

    // Excitation schedule and per-period resonator settings.
    let mut positions = Vec::new();
    let mut amplitudes = Vec::new();
    let mut banks = Vec::new();
    let mut t = 0.0f64;
    loop {
        let pos = t.round() as usize;
        if pos >= n {
            break;
        }
        positions.push(pos);
        amplitudes.push((1.0 + shimmer * gaussian(&mut rng)).max(0.05));
        let mut freqs = profile.formants_hz;
        if instability > 0.0 {
            for f in freqs.iter_mut() {
                *f = (*f * (1.0 + instability * gaussian(&mut rng))).min(0.98 * nyquist);
            }
        }
        let bank: Vec<Resonator> = freqs
            .iter()
            .zip(&profile.formant_bandwidths_hz)
            .map(|(&f, &b)| Resonator::new(f, b, fs))
            .collect();
        banks.push(bank);
        let period = base_period * (1.0 + jitter * gaussian(&mut rng));
        t += period.clamp(0.5 * base_period, 1.5 * base_period);
    }

    let mut excitation = vec![0.0; n];
    for (&p, &a) in positions.iter().zip(&amplitudes) {
        excitation[p] = a;
    }
    let mut signal = vec![0.0; n];
    let mut tilt = 0.0;
    let mut state = [[0.0f64; 2]; 5];
    let mut period_idx = 0;
    for i in 0..n {
        while period_idx + 1 < positions.len() && positions[period_idx + 1] <= i {
            period_idx += 1;
        }
        tilt = excitation[i] + TILT_POLE * tilt;
        let mut x = tilt;
        for (res, st) in banks[period_idx].iter().zip(state.iter_mut()) {
            let y = res.gain * x + res.a1 * st[0] + res.a2 * st[1];
            st[1] = st[0];
            st[0] = y;
            x = y;
        }
        signal[i] = x;
    }
    let peak = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        signal.iter_mut().for_each(|v| *v *= PEAK_LEVEL / peak);
    }

    if let Articulation::Syllables { rate_hz, voiced_ms, burst_ms } = profile.articulation {
        let (gate, in_burst) = syllable_gate(n, fs, rate_hz, voiced_ms, burst_ms);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "burst"));
        let mut hp_prev = 0.0;
        for i in 0..n {
            signal[i] *= gate[i];
            if in_burst[i] {
                let w: f64 = noise_rng.gen_range(-1.0..1.0);
                // First difference gives the burst a plosive-like high tilt.
                signal[i] += 0.15 * (w - hp_prev);
                hp_prev = w;
            }
        }
        let (kept_pos, kept_amp): (Vec<usize>, Vec<f64>) = positions
            .iter()
            .zip(&amplitudes)
            .filter(|(&p, _)| gate[p] >= 0.5)
            .map(|(&p, &a)| (p, a))
            .unzip();
        positions = kept_pos;
        amplitudes = kept_amp;
    }

    Ok(Synthesized {
        clip: AudioClip::new(signal, profile.sample_rate_hz)?,
        impulse_positions: positions,
        impulse_amplitudes: amplitudes,
    })
}

/// Generator parameters for one severity class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeverityProfile {
    pub jitter_pct: f64,
    pub shimmer_pct: f64,
    pub formant_instability_pct: f64,
    /// Multiplier on the speaker's base F0.
    pub pitch_factor: f64,
}

impl SeverityProfile {
    pub fn for_class(class: Severity) -> Self {
        const JITTER: [f64; N_CLASSES] = [4.0, 2.5, 1.5, 0.8, 0.3];
        const SHIMMER: [f64; N_CLASSES] = [10.0, 7.0, 4.0, 2.0, 1.0];
        const INSTABILITY: [f64; N_CLASSES] = [4.0, 3.0, 2.0, 1.0, 0.5];
        // Classes 2 and 4 are lowered in pitch so that the 4-vs-5 stage-1
        // models also separate class 2 from class 3.
        const PITCH: [f64; N_CLASSES] = [0.85, 0.85, 1.0, 0.85, 1.0];
        let i = class.index();
        SeverityProfile {
            jitter_pct: JITTER[i],
            shimmer_pct: SHIMMER[i],
            formant_instability_pct: INSTABILITY[i],
            pitch_factor: PITCH[i],
        }
    }
}

/// A generated speaker together with the ground truth behind each clip.
#[derive(Debug, Clone)]
pub struct SyntheticSpeaker {
    pub record: SpeakerRecord,
    pub profiles: BTreeMap<UtteranceKind, SynthesisProfile>,
    pub impulse_positions: BTreeMap<UtteranceKind, Vec<usize>>,
}

fn synthesize_speaker(class: Severity, index_in_class: usize, global: usize, seed: u64) -> Result<SyntheticSpeaker> {
    let speaker_seed = sub_seed(seed, &format!("speaker/{global}"));
    let mut rng = ChaCha8Rng::seed_from_u64(speaker_seed);
    let gender = if index_in_class % 2 == 0 { Gender::Female } else { Gender::Male };
    let age_years = match gender {
        Gender::Female => rng.gen_range(30..=80),
        Gender::Male if (index_in_class / 2) % 2 == 0 => rng.gen_range(35..=59),
        Gender::Male => rng.gen_range(60..=80),
    };
    let base_f0 = match gender {
        Gender::Female => rng.gen_range(195.0..215.0),
        Gender::Male => rng.gen_range(108.0..122.0),
    };
    let tract: f64 = rng.gen_range(0.97..1.03);
    let sev = SeverityProfile::for_class(class);

    let mut utterances = BTreeMap::new();
    let mut profiles = BTreeMap::new();
    let mut impulses = BTreeMap::new();
    for kind in UtteranceKind::RECORDED {
        let formants = vowel_formants(kind).map(|f| f * tract);
        let profile = SynthesisProfile {
            f0_hz: base_f0 * sev.pitch_factor,
            jitter_pct: sev.jitter_pct,
            shimmer_pct: sev.shimmer_pct,
            formant_instability_pct: sev.formant_instability_pct,
            formants_hz: formants,
            formant_bandwidths_hz: DEFAULT_BANDWIDTHS,
            duration_s: CORPUS_UTTERANCE_S,
            sample_rate_hz: CORPUS_SAMPLE_RATE_HZ,
            articulation: if kind.is_vowel() {
                Articulation::Sustained
            } else {
                Articulation::SYLLABLE_TRAIN
            },
        };
        let syn = synthesize_utterance(&profile, sub_seed(speaker_seed, kind.as_str()))?;
        utterances.insert(kind, syn.clip);
        impulses.insert(kind, syn.impulse_positions);
        profiles.insert(kind, profile);
    }
    let record = SpeakerRecord::new(format!("S{global:04}"), age_years, gender, Some(class), utterances)?;
    Ok(SyntheticSpeaker {
        record,
        profiles,
        impulse_positions: impulses,
    })
}

/// `5 * n_per_class` speakers ordered by class (1 first). Within a class,
/// speakers alternate female/male and male speakers alternate between the
/// under-60 and over-60 groups.
pub fn synthesize_corpus_detailed(n_per_class: usize, seed: u64) -> Result<Vec<SyntheticSpeaker>> {
    if n_per_class == 0 {
        return Err(Error::InvalidParameter("n_per_class must be at least 1".into()));
    }
    (0..N_CLASSES * n_per_class)
        .into_par_iter()
        .map(|global| {
            let class = Severity::from_index(global / n_per_class);
            synthesize_speaker(class, global % n_per_class, global, seed)
        })
        .collect()
}

pub fn synthesize_corpus(n_per_class: usize, seed: u64) -> Result<Vec<SpeakerRecord>> {
    Ok(synthesize_corpus_detailed(n_per_class, seed)?
        .into_iter()
        .map(|s| s.record)
        .collect())
}
