//! Normalized-autocorrelation pitch and voicing.

use crate::corpus::AudioClip;
use crate::error::{Error, Result};

use super::frame_count;

pub const DEFAULT_F_MIN: f64 = 60.0;
pub const DEFAULT_F_MAX: f64 = 400.0;

/// Minimum normalized autocorrelation for a frame to count as periodic.
pub const VOICING_THRESHOLD: f64 = 0.5;
/// Frames quieter than this (relative to the loudest frame) are unvoiced.
const ENERGY_FLOOR_DB: f64 = -40.0;
const HOP_S: f64 = 0.010;
/// Correlation runs on a low-passed copy so that formant ringing and
/// cycle-to-cycle timing jitter do not decorrelate neighbouring periods.
const LOWPASS_HZ: f64 = 1000.0;
const LOWPASS_HALF_TAPS_S: f64 = 0.002;

fn lowpass(x: &[f64], fs: f64) -> Vec<f64> {
    let cutoff = (LOWPASS_HZ / fs).min(0.5);
    let half = (LOWPASS_HALF_TAPS_S * fs).round().max(1.0) as isize;
    let taps: Vec<f64> = (-half..=half)
        .map(|k| {
            let t = k as f64;
            let sinc = if k == 0 {
                2.0 * cutoff
            } else {
                (2.0 * std::f64::consts::PI * cutoff * t).sin() / (std::f64::consts::PI * t)
            };
            let w = 0.5 + 0.5 * (std::f64::consts::PI * t / (half + 1) as f64).cos();
            sinc * w
        })
        .collect();
    let n = x.len() as isize;
    (0..n)
        .map(|i| {
            taps.iter()
                .enumerate()
                .filter_map(|(j, h)| {
                    let idx = i + j as isize - half;
                    (0..n).contains(&idx).then(|| h * x[idx as usize])
                })
                .sum()
        })
        .collect()
}

/// Per-frame voicing decisions and F0 estimates on a 10 ms grid.
#[derive(Debug, Clone)]
pub struct VoicingTrack {
    pub frame_len: usize,
    pub hop_len: usize,
    /// `Some(f0_hz)` for voiced frames.
    pub frames: Vec<Option<f64>>,
}

impl VoicingTrack {
    pub fn is_voiced_at(&self, sample: usize) -> bool {
        if self.frames.is_empty() {
            return false;
        }
        let center = sample as f64 - self.frame_len as f64 / 2.0;
        let idx = (center / self.hop_len as f64).round().max(0.0) as usize;
        self.frames[idx.min(self.frames.len() - 1)].is_some()
    }

    pub fn voiced_f0s(&self) -> Vec<f64> {
        self.frames.iter().flatten().copied().collect()
    }
}

fn validate_band(fs: f64, f_min: f64, f_max: f64) -> Result<()> {
    if !(f_min > 0.0 && f_min < f_max && f_max < fs / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "pitch band [{f_min}, {f_max}] Hz must satisfy 0 < f_min < f_max < {}",
            fs / 2.0
        )));
    }
    Ok(())
}

/// Normalized cross-correlation between `x[0..w]` and `x[lag..lag + w]`.
fn ncc_curve(x: &[f64], w: usize, min_lag: usize, max_lag: usize) -> Vec<f64> {
    let e0: f64 = x[..w].iter().map(|v| v * v).sum();
    // Sliding energy of the lagged window.
    let mut e_lag: f64 = x[min_lag..min_lag + w].iter().map(|v| v * v).sum();
    let mut out = Vec::with_capacity(max_lag - min_lag + 1);
    for lag in min_lag..=max_lag {
        if lag > min_lag {
            let drop = x[lag - 1];
            let add = x[lag + w - 1];
            e_lag += add * add - drop * drop;
        }
        let dot: f64 = x[..w].iter().zip(&x[lag..lag + w]).map(|(a, b)| a * b).sum();
        let denom = (e0 * e_lag.max(0.0)).sqrt();
        out.push(if denom > 0.0 { dot / denom } else { 0.0 });
    }
    out
}

/// Picks the shortest-lag local maximum within 90% of the global maximum to
/// avoid sub-harmonic (doubled period) picks; refines it parabolically.
fn pick_period(curve: &[f64], min_lag: usize) -> Option<(f64, f64)> {
    let (_, &best) = curve
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if best < VOICING_THRESHOLD {
        return None;
    }
    let n = curve.len();
    let idx = (0..n).find(|&i| {
        let left = if i == 0 { f64::NEG_INFINITY } else { curve[i - 1] };
        let right = if i + 1 == n { f64::NEG_INFINITY } else { curve[i + 1] };
        curve[i] >= 0.9 * best && curve[i] >= left && curve[i] >= right
    })?;
    let mut lag = (idx + min_lag) as f64;
    if idx > 0 && idx + 1 < n {
        let (y0, y1, y2) = (curve[idx - 1], curve[idx], curve[idx + 1]);
        let denom = y0 - 2.0 * y1 + y2;
        if denom.abs() > 1e-12 {
            lag += (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5);
        }
    }
    Some((lag, curve[idx]))
}

/// Voiced frames must form runs of at least this many with F0 continuity.
const MIN_VOICED_RUN: usize = 3;
const MAX_F0_STEP: f64 = 0.2;

fn drop_short_runs(frames: &mut [Option<f64>]) {
    let mut i = 0;
    while i < frames.len() {
        if frames[i].is_none() {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < frames.len() {
            match (frames[i], frames[i + 1]) {
                (Some(a), Some(b)) if (b - a).abs() <= MAX_F0_STEP * a => i += 1,
                _ => break,
            }
        }
        i += 1;
        if i - start < MIN_VOICED_RUN {
            frames[start..i].iter_mut().for_each(|f| *f = None);
        }
    }
}

pub fn voicing_track(samples: &[f64], sample_rate_hz: u32, f_min: f64, f_max: f64) -> Result<VoicingTrack> {
    let fs = f64::from(sample_rate_hz);
    validate_band(fs, f_min, f_max)?;
    let min_lag = (fs / f_max).floor().max(1.0) as usize;
    let max_lag = (fs / f_min).ceil() as usize;
    let w = (1.5 * fs / f_min).round() as usize;
    let frame_len = w + max_lag + 1;
    let hop_len = (HOP_S * fs).round().max(1.0) as usize;
    let n_frames = frame_count(samples.len(), frame_len, hop_len);

    let rms: Vec<f64> = (0..n_frames)
        .map(|i| {
            let f = &samples[i * hop_len..i * hop_len + frame_len];
            (f.iter().map(|v| v * v).sum::<f64>() / frame_len as f64).sqrt()
        })
        .collect();
    let peak = rms.iter().copied().fold(0.0, f64::max);
    let gate = peak * 10f64.powf(ENERGY_FLOOR_DB / 20.0);

    let smooth = lowpass(samples, fs);
    let mut frames: Vec<Option<f64>> = (0..n_frames)
        .map(|i| {
            if peak <= 0.0 || rms[i] <= gate {
                return None;
            }
            let f = &smooth[i * hop_len..i * hop_len + frame_len];
            let mean = f.iter().sum::<f64>() / f.len() as f64;
            let centered: Vec<f64> = f.iter().map(|v| v - mean).collect();
            let curve = ncc_curve(&centered, w, min_lag, max_lag);
            pick_period(&curve, min_lag).map(|(lag, _)| fs / lag)
        })
        .collect();
    drop_short_runs(&mut frames);
    Ok(VoicingTrack {
        frame_len,
        hop_len,
        frames,
    })
}

/// Median F0 over voiced frames, or `None` when no frame is periodic.
pub fn estimate_mean_pitch(clip: &AudioClip, f_min: f64, f_max: f64) -> Result<Option<f64>> {
    let track = voicing_track(clip.samples(), clip.sample_rate_hz(), f_min, f_max)?;
    Ok(median(track.voiced_f0s()))
}

pub(crate) fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
