//! Per-frame phase features: phase cepstrum, group delay and modified group
//! delay cepstra, instantaneous-frequency cepstrum, phase coherence and
//! spectral entropy (13 + 13 + 13 + 13 + 1 + 1 = 54 values).

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::corpus::AudioClip;
use crate::dsp::{self, principal, Fft, Window};
use crate::error::{Error, Result};

pub const N_CEPSTRA: usize = 13;
pub const N_PHASE_FEATURES: usize = 4 * N_CEPSTRA + 2;
pub const PHASE_RATE_HZ: u32 = 8000;
pub const FRAME_MS: f64 = 20.0;
pub const HOP_MS: f64 = 10.0;
pub const N_FFT: usize = 256;
/// Rows in every utterance matrix.
pub const MAX_FRAMES: usize = 500;

pub const MGD_ALPHA: f64 = 0.4;
pub const MGD_GAMMA: f64 = 0.9;
pub const MGD_LIFTER: usize = 8;
const REGULARIZER: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseFrame {
    pub pcc: [f64; N_CEPSTRA],
    pub gdcc: [f64; N_CEPSTRA],
    pub mgd: [f64; N_CEPSTRA],
    pub inst_freq: [f64; N_CEPSTRA],
    pub phase_coherence: f64,
    pub spectral_entropy: f64,
}

impl PhaseFrame {
    pub fn to_array(&self) -> [f64; N_PHASE_FEATURES] {
        let mut out = [0.0; N_PHASE_FEATURES];
        for (block, values) in [&self.pcc, &self.gdcc, &self.mgd, &self.inst_freq].iter().enumerate() {
            out[block * N_CEPSTRA..(block + 1) * N_CEPSTRA].copy_from_slice(*values);
        }
        out[4 * N_CEPSTRA] = self.phase_coherence;
        out[4 * N_CEPSTRA + 1] = self.spectral_entropy;
        out
    }

    /// Column names matching [`PhaseFrame::to_array`].
    pub fn feature_names() -> Vec<String> {
        let mut names = Vec::with_capacity(N_PHASE_FEATURES);
        for prefix in ["pcc", "gdcc", "mgd", "if"] {
            names.extend((0..N_CEPSTRA).map(|i| format!("{prefix}_{i}")));
        }
        names.push("phase_coherence".into());
        names.push("spectral_entropy".into());
        names
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFrameMatrix {
    pub frames: Vec<[f64; N_PHASE_FEATURES]>,
    pub valid_frame_count: usize,
}

/// `X = DFT(x)` and `Y = DFT(n x[n])` over the non-negative bins.
fn spectra(frame: &[f64], fft: &Fft) -> (Vec<Complex64>, Vec<Complex64>) {
    let ramp: Vec<f64> = frame.iter().enumerate().map(|(n, v)| n as f64 * v).collect();
    (fft.real_forward(frame), fft.real_forward(&ramp))
}

fn check_frame(frame: &[f64], n_fft: usize) -> Result<Fft> {
    if frame.len() > n_fft {
        return Err(Error::InvalidParameter(format!(
            "frame of {} samples exceeds n_fft {n_fft}",
            frame.len()
        )));
    }
    if frame.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroFrame);
    }
    Fft::new(n_fft)
}

fn group_delay_from(x: &[Complex64], y: &[Complex64]) -> Vec<f64> {
    let power: Vec<f64> = x.iter().map(|c| c.norm_sqr()).collect();
    let eps = REGULARIZER * power.iter().copied().fold(0.0, f64::max);
    x.iter()
        .zip(y)
        .zip(&power)
        .map(|((x, y), p)| (x.re * y.re + x.im * y.im) / (p + eps))
        .collect()
}

/// Group delay in samples for bins `0..=n_fft/2`.
pub fn group_delay_spectrum(frame: &[f64], n_fft: usize) -> Result<Vec<f64>> {
    let fft = check_frame(frame, n_fft)?;
    let (x, y) = spectra(frame, &fft);
    Ok(group_delay_from(&x, &y))
}

/// Magnitude smoothed by keeping the first `lifter_len` real-cepstrum bins.
/// A lifter covering the whole half-spectrum returns `|X|` unchanged.
fn cepstral_smooth(magnitude: &[f64], n_fft: usize, lifter_len: usize, fft: &Fft) -> Vec<f64> {
    let n_bins = n_fft / 2 + 1;
    if lifter_len >= n_bins {
        return magnitude.to_vec();
    }
    let peak = magnitude.iter().copied().fold(0.0, f64::max);
    let floor = peak * 1e-12;
    let mut buf: Vec<Complex64> = (0..n_fft)
        .map(|k| {
            let m = magnitude[if k < n_bins { k } else { n_fft - k }];
            Complex64::new((m + floor).ln(), 0.0)
        })
        .collect();
    fft.inverse(&mut buf);
    for (q, c) in buf.iter_mut().enumerate() {
        let keep = q < lifter_len || n_fft - q < lifter_len;
        if !keep {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    fft.forward(&mut buf);
    buf[..n_bins].iter().map(|c| c.re.exp()).collect()
}

fn mgd_from(x: &[Complex64], y: &[Complex64], n_fft: usize, alpha: f64, gamma: f64, lifter_len: usize, fft: &Fft) -> Result<Vec<f64>> {
    // Work on the spectrum normalized to unit peak so the result does not
    // depend on the frame's level when gamma != 1.
    let peak = x.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::ZeroFrame);
    }
    let magnitude: Vec<f64> = x.iter().map(|c| c.norm() / peak).collect();
    let smooth = cepstral_smooth(&magnitude, n_fft, lifter_len, fft);
    let denom: Vec<f64> = smooth.iter().map(|s| s.powf(2.0 * gamma)).collect();
    let max_denom = denom.iter().copied().fold(0.0, f64::max);
    if !(max_denom > 0.0) {
        return Err(Error::InvalidParameter("cepstral smoothing produced an all-zero spectrum".into()));
    }
    let eps = REGULARIZER * max_denom;
    let scale = peak * peak;
    Ok(x.iter()
        .zip(y)
        .zip(&denom)
        .map(|((x, y), d)| {
            let g = (x.re * y.re + x.im * y.im) / scale / (d + eps);
            g.signum() * g.abs().powf(alpha)
        })
        .collect())
}

pub fn modified_group_delay(frame: &[f64], n_fft: usize, alpha: f64, gamma: f64, lifter_len: usize) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0 && gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "MGD exponents must lie in (0, 1], got alpha={alpha}, gamma={gamma}"
        )));
    }
    if lifter_len == 0 {
        return Err(Error::InvalidParameter("lifter length must be positive".into()));
    }
    let fft = check_frame(frame, n_fft)?;
    let (x, y) = spectra(frame, &fft);
    mgd_from(&x, &y, n_fft, alpha, gamma, lifter_len, &fft)
}

/// Removes 2-pi jumps scanning from low to high bins.
pub fn unwrap_phase(phase: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phase.len());
    let mut offset = 0.0;
    for (i, &p) in phase.iter().enumerate() {
        if i > 0 {
            let d = p - phase[i - 1];
            if d > PI {
                offset -= 2.0 * PI;
            } else if d < -PI {
                offset += 2.0 * PI;
            }
        }
        out.push(p + offset);
    }
    out
}

/// Per-bin deviation (radians) of the observed phase advance from the
/// advance expected for the bin's centre frequency.
pub fn phase_deviation(phase: &[f64], prev_phase: &[f64], hop_len: usize, n_fft: usize) -> Vec<f64> {
    phase
        .iter()
        .zip(prev_phase)
        .enumerate()
        .map(|(k, (p, q))| principal(p - q - 2.0 * PI * k as f64 * hop_len as f64 / n_fft as f64))
        .collect()
}

/// Per-bin instantaneous-frequency deviation in Hz.
pub fn instantaneous_frequency_deviation(
    phase: &[f64],
    prev_phase: &[f64],
    hop_len: usize,
    n_fft: usize,
    sample_rate_hz: u32,
) -> Vec<f64> {
    let to_hz = f64::from(sample_rate_hz) / (2.0 * PI * hop_len as f64);
    phase_deviation(phase, prev_phase, hop_len, n_fft)
        .into_iter()
        .map(|d| d * to_hz)
        .collect()
}

fn cepstra(values: &[f64]) -> Result<[f64; N_CEPSTRA]> {
    let c = dsp::dct_ii(values, N_CEPSTRA)?;
    let mut out = [0.0; N_CEPSTRA];
    out.copy_from_slice(&c);
    Ok(out)
}

/// Features of one (already windowed) frame plus its phase spectrum, which
/// the next frame needs. An all-zero frame yields all-zero features.
pub fn phase_frame(
    frame: &[f64],
    prev_phase: Option<&[f64]>,
    n_fft: usize,
    hop_len: usize,
    sample_rate_hz: u32,
) -> Result<(PhaseFrame, Vec<f64>)> {
    let n_bins = n_fft / 2 + 1;
    let fft = match check_frame(frame, n_fft) {
        Err(Error::ZeroFrame) => return Ok((PhaseFrame::default(), vec![0.0; n_bins])),
        other => other?,
    };
    let (x, y) = spectra(frame, &fft);
    let phase: Vec<f64> = x.iter().map(|c| principal(c.arg())).collect();

    let pcc = cepstra(&unwrap_phase(&phase))?;
    let gdcc = cepstra(&group_delay_from(&x, &y))?;
    let mgd = cepstra(&mgd_from(&x, &y, n_fft, MGD_ALPHA, MGD_GAMMA, MGD_LIFTER, &fft)?)?;

    let deviation = match prev_phase {
        Some(prev) if prev.len() == n_bins => phase_deviation(&phase, prev, hop_len, n_fft),
        Some(prev) => {
            return Err(Error::DimensionMismatch {
                expected: n_bins,
                found: prev.len(),
            })
        }
        None => vec![0.0; n_bins],
    };
    let to_hz = f64::from(sample_rate_hz) / (2.0 * PI * hop_len as f64);
    let if_hz: Vec<f64> = deviation.iter().map(|d| d * to_hz).collect();
    let inst_freq = cepstra(&if_hz)?;
    let mean: Complex64 = deviation.iter().map(|&d| Complex64::from_polar(1.0, d)).sum::<Complex64>() / n_bins as f64;

    let power: Vec<f64> = x.iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = power.iter().sum();
    let spectral_entropy = power
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let q = p / total;
            -q * q.ln()
        })
        .sum::<f64>()
        .max(0.0);

    Ok((
        PhaseFrame {
            pcc,
            gdcc,
            mgd,
            inst_freq,
            phase_coherence: mean.norm().min(1.0),
            spectral_entropy,
        },
        phase,
    ))
}

/// 500 x 54 matrix for one utterance: 8 kHz, 20 ms Hamming frames with a
/// 10 ms hop and a 256-point FFT; zero rows pad short utterances.
pub fn utterance_phase_matrix(clip: &AudioClip) -> Result<PhaseFrameMatrix> {
    let clip = dsp::resample(clip, PHASE_RATE_HZ)?;
    let fs = clip.sample_rate_hz();
    let frame_len = dsp::ms_to_samples(FRAME_MS, fs);
    let hop_len = dsp::ms_to_samples(HOP_MS, fs);
    let n_valid = dsp::frame_count(clip.len(), frame_len, hop_len).min(MAX_FRAMES);
    let window = Window::Hamming.coefficients(frame_len);
    let x = clip.samples();

    let mut frames = vec![[0.0; N_PHASE_FEATURES]; MAX_FRAMES];
    let mut prev: Option<Vec<f64>> = None;
    for (i, row) in frames.iter_mut().enumerate().take(n_valid) {
        let windowed: Vec<f64> = x[i * hop_len..i * hop_len + frame_len]
            .iter()
            .zip(&window)
            .map(|(v, w)| v * w)
            .collect();
        let (features, phase) = phase_frame(&windowed, prev.as_deref(), N_FFT, hop_len, fs)?;
        *row = features.to_array();
        prev = Some(phase);
    }
    Ok(PhaseFrameMatrix {
        frames,
        valid_frame_count: n_valid,
    })
}
