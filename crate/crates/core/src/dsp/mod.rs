//! Numerical building blocks shared by the feature extractors.

mod fft;
mod lpc;
pub mod pitch;
mod resample;

use std::f64::consts::PI;

pub use fft::Fft;
pub use lpc::{autocorrelation, levinson_durbin, lpc, LpcModel};
pub use pitch::{estimate_mean_pitch, voicing_track, VoicingTrack};
pub use resample::{resample, resample_samples};

use crate::corpus::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    Hann,
    #[default]
    Hamming,
    Blackman,
    Rectangular,
}

impl Window {
    /// Symmetric window of `len` points.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        if len <= 1 {
            return vec![1.0; len];
        }
        let m = (len - 1) as f64;
        (0..len)
            .map(|n| {
                let x = 2.0 * PI * n as f64 / m;
                match self {
                    Window::Hann => 0.5 - 0.5 * x.cos(),
                    Window::Hamming => 0.54 - 0.46 * x.cos(),
                    Window::Blackman => 0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos(),
                    Window::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

/// Number of whole frames; the trailing partial frame is dropped.
pub fn frame_count(n_samples: usize, frame_len: usize, hop_len: usize) -> usize {
    if frame_len == 0 || hop_len == 0 || n_samples < frame_len {
        0
    } else {
        (n_samples - frame_len) / hop_len + 1
    }
}

pub fn ms_to_samples(ms: f64, sample_rate_hz: u32) -> usize {
    (ms * f64::from(sample_rate_hz) / 1000.0).round() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<Vec<f64>>,
    pub frame_len: usize,
    pub hop_len: usize,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub sample_rate_hz: u32,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn frame_geometry(clip: &AudioClip, frame_ms: f64, hop_ms: f64) -> Result<(usize, usize)> {
    if !(frame_ms > 0.0 && hop_ms > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "frame ({frame_ms} ms) and hop ({hop_ms} ms) must be positive"
        )));
    }
    let frame_len = ms_to_samples(frame_ms, clip.sample_rate_hz()).max(1);
    let hop_len = ms_to_samples(hop_ms, clip.sample_rate_hz()).max(1);
    if clip.len() < frame_len {
        return Err(Error::ClipTooShort {
            samples: clip.len(),
            needed: frame_len,
        });
    }
    Ok((frame_len, hop_len))
}

pub fn frame_signal(clip: &AudioClip, frame_ms: f64, hop_ms: f64) -> Result<FrameSequence> {
    let (frame_len, hop_len) = frame_geometry(clip, frame_ms, hop_ms)?;
    let x = clip.samples();
    let frames = (0..frame_count(x.len(), frame_len, hop_len))
        .map(|i| x[i * hop_len..i * hop_len + frame_len].to_vec())
        .collect();
    Ok(FrameSequence {
        frames,
        frame_len,
        hop_len,
        frame_ms,
        hop_ms,
        sample_rate_hz: clip.sample_rate_hz(),
    })
}

/// Linear-magnitude spectrogram with principal-value phases.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub magnitudes: Vec<Vec<f64>>,
    pub phases: Vec<Vec<f64>>,
    pub n_fft: usize,
    pub sample_rate_hz: u32,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn bin_hz(&self) -> f64 {
        f64::from(self.sample_rate_hz) / self.n_fft as f64
    }
}

/// Maps `atan2` output onto `(-pi, pi]`.
pub(crate) fn principal(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

pub fn stft(clip: &AudioClip, frame_ms: f64, hop_ms: f64, n_fft: usize, window: Window) -> Result<Spectrogram> {
    let frames = frame_signal(clip, frame_ms, hop_ms)?;
    if n_fft < frames.frame_len {
        return Err(Error::InvalidParameter(format!(
            "n_fft {n_fft} is smaller than the frame length {}",
            frames.frame_len
        )));
    }
    let fft = Fft::new(n_fft)?;
    let w = window.coefficients(frames.frame_len);
    let mut magnitudes = Vec::with_capacity(frames.len());
    let mut phases = Vec::with_capacity(frames.len());
    for frame in &frames.frames {
        let windowed: Vec<f64> = frame.iter().zip(&w).map(|(x, w)| x * w).collect();
        let bins = fft.real_forward(&windowed);
        magnitudes.push(bins.iter().map(|c| c.norm()).collect());
        phases.push(bins.iter().map(|c| principal(c.arg())).collect());
    }
    Ok(Spectrogram {
        magnitudes,
        phases,
        n_fft,
        sample_rate_hz: clip.sample_rate_hz(),
    })
}

pub const TRIM_FRAME_MS: f64 = 20.0;
pub const TRIM_HOP_MS: f64 = 10.0;
pub const DEFAULT_TRIM_THRESHOLD_DB: f64 = -40.0;
pub const DEFAULT_TRIM_MIN_VOICED_MS: f64 = 30.0;

/// Cuts leading and trailing frames whose RMS stays below
/// `peak_rms * 10^(threshold_db / 20)`. A voiced stretch only counts once it
/// spans at least `min_voiced_ms`, so isolated clicks do not anchor the cut.
pub fn trim_silence(clip: &AudioClip, threshold_db: f64, min_voiced_ms: f64) -> Result<AudioClip> {
    let fs = clip.sample_rate_hz();
    let x = clip.samples();
    let frame_len = ms_to_samples(TRIM_FRAME_MS, fs).clamp(1, x.len());
    let hop_len = ms_to_samples(TRIM_HOP_MS, fs).max(1);
    let n_frames = frame_count(x.len(), frame_len, hop_len);
    let rms: Vec<f64> = (0..n_frames)
        .map(|i| {
            let f = &x[i * hop_len..i * hop_len + frame_len];
            (f.iter().map(|v| v * v).sum::<f64>() / frame_len as f64).sqrt()
        })
        .collect();
    let peak = rms.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::AllSilent);
    }
    let gate = peak * 10f64.powf(threshold_db / 20.0);
    let above: Vec<bool> = rms.iter().map(|&r| r > gate).collect();

    let min_span = ms_to_samples(min_voiced_ms, fs);
    let mut qualifying = vec![false; n_frames];
    let mut i = 0;
    while i < n_frames {
        if !above[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n_frames && above[i] {
            i += 1;
        }
        let span = (i - 1 - start) * hop_len + frame_len;
        if span >= min_span {
            qualifying[start..i].iter_mut().for_each(|q| *q = true);
        }
    }
    let first = qualifying.iter().position(|&q| q).ok_or(Error::AllSilent)?;
    let last = qualifying.iter().rposition(|&q| q).ok_or(Error::AllSilent)?;
    let begin = first * hop_len;
    let end = if last + 1 == n_frames {
        x.len()
    } else {
        last * hop_len + frame_len
    };
    AudioClip::new(x[begin..end].to_vec(), fs)
}

/// Orthonormal DCT-II, first `n_out` coefficients.
pub fn dct_ii(values: &[f64], n_out: usize) -> Result<Vec<f64>> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptyInput("DCT input"));
    }
    if n_out > n {
        return Err(Error::InvalidParameter(format!(
            "requested {n_out} DCT coefficients from {n} inputs"
        )));
    }
    let nf = n as f64;
    Ok((0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            scale
                * values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * (PI * (i as f64 + 0.5) * k as f64 / nf).cos())
                    .sum::<f64>()
        })
        .collect())
}

/// `y[n] = x[n] - coef * x[n-1]`.
pub fn pre_emphasis(x: &[f64], coef: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut prev = 0.0;
    for &v in x {
        out.push(v - coef * prev);
        prev = v;
    }
    out
}
