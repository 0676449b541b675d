//! Glottal closure instants via a mean-based signal and LPC residual, and
//! the seven pulse statistics computed from them.
//!
//! Each minimum-to-maximum cycle of the mean-based signal brackets one
//! closure. Where the closure sits inside the cycle depends on the glottal
//! source, so the expected relative position is calibrated per utterance
//! from the strongest residual peaks, and each cycle is searched within
//! +-0.35 cycle lengths of it.

use crate::corpus::AudioClip;
use crate::dsp::{self, pitch, Window};

const MIN_CLIP_S: f64 = 0.1;
const RESIDUAL_FRAME_S: f64 = 0.025;
const RESIDUAL_HOP_S: f64 = 0.005;
const MBS_WINDOW_PERIODS: f64 = 1.75;
const TREND_WINDOW_PERIODS: f64 = 2.0;
pub const MIN_PERIOD_MS: f64 = 2.5;
pub const MAX_PERIOD_MS: f64 = 16.7;
const VOICED_FRAME_MS: f64 = 20.0;
/// Accepted gaps relative to the median in-range gap.
const RELATIVE_GATE: (f64, f64) = (0.6, 1.5);
/// Residual peaks above this fraction of the largest one calibrate where
/// closures fall within a mean-based-signal cycle.
const STRONG_PEAK: f64 = 0.4;
/// Half-width of the search window around that position, in cycle lengths.
const SEARCH_HALF_WIDTH: f64 = 0.35;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GciSequence {
    pub instants: Vec<usize>,
    /// Residual peak magnitude at each instant.
    pub pulse_amplitudes: Vec<f64>,
    /// 0 when the clip is unvoiced.
    pub mean_pitch_hz: f64,
}

impl GciSequence {
    pub fn len(&self) -> usize {
        self.instants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instants.is_empty()
    }
}

pub const N_GLOTTAL_PARAMS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GlottalParams {
    pub mean_period_ms: f64,
    pub period_std_ms: f64,
    pub jitter_local_pct: f64,
    pub shimmer_local_pct: f64,
    pub mean_pulse_amplitude: f64,
    pub pulse_amplitude_std: f64,
    pub voiced_fraction: f64,
}

impl GlottalParams {
    pub const NAMES: [&'static str; N_GLOTTAL_PARAMS] = [
        "mean_period_ms",
        "period_std_ms",
        "jitter_local_pct",
        "shimmer_local_pct",
        "mean_pulse_amplitude",
        "pulse_amplitude_std",
        "voiced_fraction",
    ];

    pub fn to_array(&self) -> [f64; N_GLOTTAL_PARAMS] {
        [
            self.mean_period_ms,
            self.period_std_ms,
            self.jitter_local_pct,
            self.shimmer_local_pct,
            self.mean_pulse_amplitude,
            self.pulse_amplitude_std,
            self.voiced_fraction,
        ]
    }
}

/// LPC prediction residual with coefficients refreshed every 5 ms from a
/// 25 ms Hann-windowed frame centred on each block.
pub fn lpc_residual(x: &[f64], sample_rate_hz: u32) -> Vec<f64> {
    let fs = f64::from(sample_rate_hz);
    let order = 2 + (sample_rate_hz / 1000) as usize;
    let frame_len = ((RESIDUAL_FRAME_S * fs).round() as usize).max(order + 1);
    let hop = ((RESIDUAL_HOP_S * fs).round() as usize).max(1);
    let window = Window::Hann.coefficients(frame_len);
    let mut residual = vec![0.0; x.len()];
    if x.len() < frame_len {
        return residual;
    }
    let mut block = 0;
    while block < x.len() {
        let end = (block + hop).min(x.len());
        let center = block + hop / 2;
        let start = center.saturating_sub(frame_len / 2).min(x.len() - frame_len);
        let frame: Vec<f64> = x[start..start + frame_len]
            .iter()
            .zip(&window)
            .map(|(v, w)| v * w)
            .collect();
        if let Ok(model) = dsp::lpc(&frame, order) {
            for (n, r) in residual.iter_mut().enumerate().take(end).skip(block) {
                *r = model.residual_at(x, n);
            }
        }
        block = end;
    }
    residual
}

fn skewness(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    if m2 <= 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Centred moving average of `len` samples (shortened at the edges).
fn moving_average(x: &[f64], len: usize) -> Vec<f64> {
    let half = len / 2;
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Blackman-weighted local mean over 1.75 pitch periods, with the slower
/// trend (two-period moving average) removed so it oscillates around zero.
pub fn mean_based_signal(x: &[f64], period_samples: f64) -> Vec<f64> {
    let mut len = (MBS_WINDOW_PERIODS * period_samples).round() as usize;
    if len % 2 == 0 {
        len += 1;
    }
    let w = Window::Blackman.coefficients(len);
    let norm: f64 = w.iter().sum();
    let half = len / 2;
    let n = x.len();
    let smoothed: Vec<f64> = (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (j, wj) in w.iter().enumerate() {
                let idx = i as isize + j as isize - half as isize;
                if idx >= 0 && (idx as usize) < n {
                    acc += wj * x[idx as usize];
                }
            }
            acc / norm
        })
        .collect();
    let trend_len = ((TREND_WINDOW_PERIODS * period_samples).round() as usize).max(1);
    let trend = moving_average(&smoothed, trend_len);
    smoothed.iter().zip(&trend).map(|(s, t)| s - t).collect()
}

/// (minimum, following maximum) index pairs of the mean-based signal.
fn mbs_cycles(mbs: &[f64]) -> Vec<(usize, usize)> {
    let n = mbs.len();
    let mut extrema: Vec<(usize, bool)> = Vec::new();
    for i in 1..n.saturating_sub(1) {
        if mbs[i] < mbs[i - 1] && mbs[i] <= mbs[i + 1] && mbs[i] < 0.0 {
            extrema.push((i, false));
        } else if mbs[i] > mbs[i - 1] && mbs[i] >= mbs[i + 1] && mbs[i] > 0.0 {
            extrema.push((i, true));
        }
    }
    extrema
        .windows(2)
        .filter(|w| !w[0].1 && w[1].1)
        .map(|w| (w[0].0, w[1].0))
        .collect()
}

/// Median position of strong residual peaks within their enclosing
/// minimum-to-maximum cycle, as a fraction of the cycle length. Falls back
/// to the start of the cycle when no strong peak is voiced.
fn median_relative_position(residual: &[f64], cycles: &[(usize, usize)], track: &pitch::VoicingTrack) -> f64 {
    let strongest = residual
        .iter()
        .enumerate()
        .filter(|(i, _)| track.is_voiced_at(*i))
        .fold(0.0f64, |m, (_, v)| m.max(-v));
    if strongest <= 0.0 {
        return SEARCH_HALF_WIDTH;
    }
    let mut rel = Vec::new();
    for (i, v) in residual.iter().enumerate() {
        if -v <= STRONG_PEAK * strongest || !track.is_voiced_at(i) {
            continue;
        }
        let k = cycles.partition_point(|c| c.0 <= i);
        let nearest = [k.checked_sub(1), (k < cycles.len()).then_some(k)]
            .into_iter()
            .flatten()
            .min_by_key(|&j| cycles[j].0.abs_diff(i))
            .expect("cycles is non-empty");
        let (lo, hi) = cycles[nearest];
        rel.push((i as f64 - lo as f64) / (hi - lo) as f64);
    }
    pitch::median(rel).unwrap_or(SEARCH_HALF_WIDTH)
}

pub fn detect_gci(clip: &AudioClip) -> GciSequence {
    let fs = clip.sample_rate_hz();
    let x = clip.samples();
    if clip.duration_s() < MIN_CLIP_S || x.iter().all(|&v| v == 0.0) {
        return GciSequence::default();
    }
    let Ok(track) = pitch::voicing_track(x, fs, pitch::DEFAULT_F_MIN, pitch::DEFAULT_F_MAX) else {
        return GciSequence::default();
    };
    let Some(f0) = pitch::median(track.voiced_f0s()) else {
        return GciSequence::default();
    };
    let period = f64::from(fs) / f0;

    let mut residual = lpc_residual(x, fs);
    let polarity = if skewness(&residual) > 0.0 { -1.0 } else { 1.0 };
    residual.iter_mut().for_each(|r| *r *= polarity);
    let signed: Vec<f64> = x.iter().map(|v| v * polarity).collect();
    let mbs = mean_based_signal(&signed, period);

    let cycles = mbs_cycles(&mbs);
    if cycles.is_empty() {
        return GciSequence::default();
    }
    let ratio = median_relative_position(&residual, &cycles, &track);

    let min_gap = (f64::from(fs) / pitch::DEFAULT_F_MAX).floor() as usize;
    let mut instants: Vec<usize> = Vec::new();
    let mut amplitudes: Vec<f64> = Vec::new();
    for &(lo, hi) in &cycles {
        let span = (hi - lo) as f64;
        let start = (lo as f64 + (ratio - SEARCH_HALF_WIDTH) * span).round().max(0.0) as usize;
        let stop = ((lo as f64 + (ratio + SEARCH_HALF_WIDTH) * span).round() as usize).min(residual.len() - 1);
        if start > stop {
            continue;
        }
        let (offset, &value) = residual[start..=stop]
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty interval");
        let gci = start + offset;
        if value >= 0.0 || !track.is_voiced_at(gci) {
            continue;
        }
        match instants.last() {
            Some(&last) if gci <= last => continue,
            // Neighbouring windows can land on the same pulse; keep the stronger.
            Some(&last) if gci - last < min_gap => {
                if -value > *amplitudes.last().unwrap() {
                    *instants.last_mut().unwrap() = gci;
                    *amplitudes.last_mut().unwrap() = -value;
                }
            }
            _ => {
                instants.push(gci);
                amplitudes.push(-value);
            }
        }
    }
    GciSequence {
        instants,
        pulse_amplitudes: amplitudes,
        mean_pitch_hz: f0,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Statistics over inter-instant gaps inside the 60-400 Hz range and within
/// 0.6-1.5 times the median gap. Jitter and shimmer use only adjacent pairs
/// of accepted gaps.
pub fn extract_glottal_params(gci: &GciSequence, clip: &AudioClip) -> GlottalParams {
    if gci.is_empty() {
        return GlottalParams::default();
    }
    let fs = f64::from(clip.sample_rate_hz());
    let to_ms = 1000.0 / fs;
    let raw: Vec<f64> = gci.instants.windows(2).map(|w| (w[1] - w[0]) as f64 * to_ms).collect();
    // A missed closure shows up as a doubled gap; it is not a glottal cycle.
    let typical = pitch::median(
        raw.iter()
            .copied()
            .filter(|ms| (MIN_PERIOD_MS..=MAX_PERIOD_MS).contains(ms))
            .collect(),
    )
    .unwrap_or(0.0);
    let gaps: Vec<Option<f64>> = raw
        .iter()
        .map(|&ms| {
            let in_range = (MIN_PERIOD_MS..=MAX_PERIOD_MS).contains(&ms);
            let regular = ms >= RELATIVE_GATE.0 * typical && ms <= RELATIVE_GATE.1 * typical;
            (in_range && regular).then_some(ms)
        })
        .collect();
    let periods: Vec<f64> = gaps.iter().flatten().copied().collect();

    let mut out = GlottalParams::default();
    if !periods.is_empty() {
        out.mean_period_ms = mean(&periods);
        out.period_std_ms = std(&periods);
        let diffs: Vec<f64> = gaps
            .windows(2)
            .filter_map(|w| Some((w[1]? - w[0]?).abs()))
            .collect();
        if !diffs.is_empty() {
            out.jitter_local_pct = 100.0 * mean(&diffs) / out.mean_period_ms;
        }
        let amps = &gci.pulse_amplitudes;
        let amp_diffs: Vec<f64> = gaps
            .iter()
            .enumerate()
            .filter(|(_, g)| g.is_some())
            .map(|(i, _)| (amps[i + 1] - amps[i]).abs())
            .collect();
        let paired: Vec<f64> = gaps
            .iter()
            .enumerate()
            .filter(|(_, g)| g.is_some())
            .flat_map(|(i, _)| [amps[i], amps[i + 1]])
            .collect();
        let amp_mean = mean(&paired);
        if amp_mean > 0.0 {
            out.shimmer_local_pct = 100.0 * mean(&amp_diffs) / amp_mean;
        }
    }
    out.mean_pulse_amplitude = mean(&gci.pulse_amplitudes);
    out.pulse_amplitude_std = std(&gci.pulse_amplitudes);

    let frame = (VOICED_FRAME_MS / to_ms).round().max(1.0) as usize;
    let n_frames = clip.len().div_ceil(frame);
    let mut hit = vec![false; n_frames];
    for &i in &gci.instants {
        if let Some(h) = hit.get_mut(i / frame) {
            *h = true;
        }
    }
    out.voiced_fraction = hit.iter().filter(|&&h| h).count() as f64 / n_frames as f64;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{synthesize_utterance, SynthesisProfile};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn matched_fraction(truth: &[usize], found: &[usize], tol: usize) -> f64 {
        let hits = truth
            .iter()
            .filter(|&&t| {
                let k = found.partition_point(|&f| f + tol < t);
                k < found.len() && found[k] <= t + tol
            })
            .count();
        hits as f64 / truth.len() as f64
    }

    #[test]
    fn locates_jitter_free_impulses() {
        for (f0, fs) in [(100.0, 8000), (120.0, 10_000), (180.0, 16_000)] {
            let p = SynthesisProfile::vowel_a(f0, fs);
            let syn = synthesize_utterance(&p, 3).unwrap();
            let gci = detect_gci(&syn.clip);
            let tol = (0.25e-3 * fs as f64).floor() as usize;
            // The voicing analysis window cannot cover the first and last
            // few periods.
            let inner: Vec<usize> = syn
                .impulse_positions
                .iter()
                .copied()
                .filter(|&t| t > fs as usize / 20 && t + fs as usize / 20 < syn.clip.len())
                .collect();
            let frac = matched_fraction(&inner, &gci.instants, tol);
            assert!(frac >= 0.95, "f0 {f0} fs {fs}: {frac}");
            assert!((gci.mean_pitch_hz - f0).abs() < 3.0);
        }
    }

    #[test]
    fn white_noise_yields_few_instants() {
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..16000)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    0.2 * v
                })
                .collect();
            let gci = detect_gci(&AudioClip::new(x, 8000).unwrap());
            assert!(gci.len() < 10, "{}", gci.len());
        }
    }

    #[test]
    fn silence_and_short_clips_are_empty() {
        assert!(detect_gci(&AudioClip::new(vec![0.0; 8000], 8000).unwrap()).is_empty());
        let p = SynthesisProfile::vowel_a(120.0, 8000);
        let syn = synthesize_utterance(&p, 0).unwrap();
        assert!(detect_gci(&syn.clip.slice(0, 700).unwrap()).is_empty());
    }

    #[test]
    fn scale_invariance() {
        let mut p = SynthesisProfile::vowel_a(130.0, 10_000);
        p.jitter_pct = 1.0;
        p.shimmer_pct = 3.0;
        let syn = synthesize_utterance(&p, 5).unwrap();
        let base = detect_gci(&syn.clip);
        for c in [0.25, 2.0, 0.37] {
            let scaled = detect_gci(&syn.clip.scaled(c).unwrap());
            assert_eq!(scaled.instants, base.instants, "scale {c}");
            for (a, b) in scaled.pulse_amplitudes.iter().zip(&base.pulse_amplitudes) {
                assert!((a - c * b).abs() < 1e-9 * b.max(1.0));
            }
        }
    }

    #[test]
    fn time_shift_equivariance() {
        let p = SynthesisProfile::vowel_a(110.0, 10_000);
        let syn = synthesize_utterance(&p, 1).unwrap();
        let base = detect_gci(&syn.clip);
        let shift = 300;
        let mut shifted = vec![0.0; shift];
        shifted.extend_from_slice(syn.clip.samples());
        let moved = detect_gci(&AudioClip::new(shifted, 10_000).unwrap());
        let edge = 1000;
        let a: Vec<usize> = base
            .instants
            .iter()
            .filter(|&&i| i > edge && i + edge < syn.clip.len())
            .map(|i| i + shift)
            .collect();
        let b: Vec<usize> = moved
            .instants
            .iter()
            .copied()
            .filter(|&i| i > edge + shift && i + edge < syn.clip.len() + shift)
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_sequence_params() {
        let clip = AudioClip::new(vec![0.0; 8000], 8000).unwrap();
        let gci = GciSequence {
            instants: (0..100).map(|i| i * 80).collect(),
            pulse_amplitudes: vec![0.5; 100],
            mean_pitch_hz: 100.0,
        };
        let p = extract_glottal_params(&gci, &clip);
        assert!((p.mean_period_ms - 10.0).abs() < 1e-12);
        assert_eq!(p.period_std_ms, 0.0);
        assert_eq!(p.jitter_local_pct, 0.0);
        assert_eq!(p.shimmer_local_pct, 0.0);
        assert!((p.mean_pulse_amplitude - 0.5).abs() < 1e-12);
        assert_eq!(p.voiced_fraction, 1.0);
    }

    #[test]
    fn empty_sequence_params_are_zero() {
        let clip = AudioClip::new(vec![0.0; 800], 8000).unwrap();
        let p = extract_glottal_params(&GciSequence::default(), &clip);
        assert_eq!(p.to_array(), [0.0; 7]);
    }

    #[test]
    fn out_of_range_gaps_are_ignored() {
        let clip = AudioClip::new(vec![0.0; 8000], 8000).unwrap();
        // Gaps of 80, 80, 400 (50 ms, rejected), 80 samples.
        let gci = GciSequence {
            instants: vec![0, 80, 160, 560, 640],
            pulse_amplitudes: vec![1.0; 5],
            mean_pitch_hz: 100.0,
        };
        let p = extract_glottal_params(&gci, &clip);
        assert!((p.mean_period_ms - 10.0).abs() < 1e-12);
        assert_eq!(p.jitter_local_pct, 0.0);
    }

    #[test]
    fn palindromic_gaps_reverse_cleanly() {
        let clip = AudioClip::new(vec![0.0; 8000], 8000).unwrap();
        let gaps = [80, 84, 78, 90, 78, 84, 80];
        let build = |g: &[usize]| {
            let mut t = vec![100];
            for d in g {
                t.push(t.last().unwrap() + d);
            }
            GciSequence {
                pulse_amplitudes: vec![1.0; t.len()],
                instants: t,
                mean_pitch_hz: 100.0,
            }
        };
        let rev: Vec<usize> = gaps.iter().rev().copied().collect();
        let a = extract_glottal_params(&build(&gaps), &clip);
        let b = extract_glottal_params(&build(&rev), &clip);
        assert_eq!(a.mean_period_ms, b.mean_period_ms);
        assert!((a.jitter_local_pct - b.jitter_local_pct).abs() < 1e-12);
        assert!(a.jitter_local_pct > 0.0);
    }

    #[test]
    fn recovers_injected_jitter() {
        let mut values = Vec::new();
        for seed in 0..10 {
            let mut p = SynthesisProfile::vowel_a(120.0, 10_000);
            p.jitter_pct = 2.0;
            p.duration_s = 2.0;
            let syn = synthesize_utterance(&p, seed).unwrap();
            let params = extract_glottal_params(&detect_gci(&syn.clip), &syn.clip);
            assert!(
                (1.2..=3.0).contains(&params.jitter_local_pct),
                "seed {seed}: {}",
                params.jitter_local_pct
            );
            values.push(params.jitter_local_pct);
        }
        assert!(values.iter().all(|v| v.is_finite()));
    }
}
