//! Formant frequencies from the roots of per-frame LPC polynomials.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::corpus::AudioClip;
use crate::dsp::{self, pitch, Window};
use crate::error::{Error, Result};

pub const ANALYSIS_RATE_HZ: u32 = 10_000;
pub const LPC_ORDER: usize = 12;
pub const PRE_EMPHASIS: f64 = 0.97;
pub const MAX_BANDWIDTH_HZ: f64 = 600.0;
pub const HOP_MS: f64 = 10.0;
pub const N_FORMANTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormantSet {
    pub f_hz: [f64; N_FORMANTS],
    pub bandwidths_hz: [f64; N_FORMANTS],
    pub n_voiced_frames_used: usize,
}

/// Roots of `coeffs[0] z^n + coeffs[1] z^(n-1) + ... + coeffs[n]`, as the
/// eigenvalues of the companion matrix.
pub fn polynomial_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let lead = coeffs
        .iter()
        .position(|&c| c != 0.0)
        .ok_or(Error::EmptyInput("polynomial coefficients"))?;
    let monic: Vec<f64> = coeffs[lead..].iter().map(|c| c / coeffs[lead]).collect();
    let degree = monic.len() - 1;
    if degree == 0 {
        return Ok(Vec::new());
    }
    if monic.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter("non-finite polynomial coefficient".into()));
    }
    let companion = DMatrix::from_fn(degree, degree, |i, j| {
        if i == 0 {
            -monic[j + 1]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let roots: Vec<Complex64> = companion
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect();
    if roots.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "eigenvalue iteration failed for a degree-{degree} polynomial"
        )));
    }
    Ok(roots)
}

/// Candidate formants (frequency, bandwidth) from one pre-emphasized frame,
/// ascending, at most five.
pub fn frame_formants(frame: &[f64], sample_rate_hz: u32) -> Result<Vec<(f64, f64)>> {
    let model = dsp::lpc(frame, LPC_ORDER)?;
    let mut poly = Vec::with_capacity(LPC_ORDER + 1);
    poly.push(1.0);
    poly.extend(model.coefficients.iter().map(|a| -a));
    let fs = f64::from(sample_rate_hz);
    let mut found: Vec<(f64, f64)> = polynomial_roots(&poly)?
        .into_iter()
        .filter(|r| r.im > 0.0)
        .map(|r| (fs / (2.0 * std::f64::consts::PI) * r.arg(), -(fs / std::f64::consts::PI) * r.norm().ln()))
        .filter(|&(f, bw)| f > 0.0 && f < fs / 2.0 && bw > 0.0 && bw < MAX_BANDWIDTH_HZ)
        .collect();
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    found.truncate(N_FORMANTS);
    Ok(found)
}

/// Utterance-level F1..F5 as per-index medians over voiced frames. A frame
/// counts as voiced when the periodicity track marks its centre voiced.
pub fn estimate_formants(clip: &AudioClip, frame_ms: f64) -> Result<FormantSet> {
    let clip = dsp::resample(clip, ANALYSIS_RATE_HZ)?;
    let fs = clip.sample_rate_hz();
    let track = pitch::voicing_track(clip.samples(), fs, pitch::DEFAULT_F_MIN, pitch::DEFAULT_F_MAX)?;
    let emphasized = AudioClip::new(dsp::pre_emphasis(clip.samples(), PRE_EMPHASIS), fs)?;
    let frames = dsp::frame_signal(&emphasized, frame_ms, HOP_MS)?;
    let window = Window::Hamming.coefficients(frames.frame_len);

    let mut per_index: [Vec<(f64, f64)>; N_FORMANTS] = Default::default();
    let mut used = 0;
    for (i, frame) in frames.frames.iter().enumerate() {
        let center = i * frames.hop_len + frames.frame_len / 2;
        if !track.is_voiced_at(center) {
            continue;
        }
        let windowed: Vec<f64> = frame.iter().zip(&window).map(|(x, w)| x * w).collect();
        let Ok(candidates) = frame_formants(&windowed, fs) else {
            continue;
        };
        if candidates.is_empty() {
            continue;
        }
        used += 1;
        for (slot, c) in per_index.iter_mut().zip(candidates) {
            slot.push(c);
        }
    }
    let found = per_index.iter().take_while(|v| !v.is_empty()).count();
    if found < N_FORMANTS {
        return Err(Error::PartialFormants { found });
    }
    let mut f_hz = [0.0; N_FORMANTS];
    let mut bandwidths_hz = [0.0; N_FORMANTS];
    for (i, slot) in per_index.iter().enumerate() {
        f_hz[i] = pitch::median(slot.iter().map(|c| c.0).collect()).unwrap_or_default();
        bandwidths_hz[i] = pitch::median(slot.iter().map(|c| c.1).collect()).unwrap_or_default();
    }
    Ok(FormantSet {
        f_hz,
        bandwidths_hz,
        n_voiced_frames_used: used,
    })
}
