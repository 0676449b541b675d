use std::f64::consts::PI;

use crate::corpus::AudioClip;
use crate::error::Result;

/// Zero crossings of the sinc kernel kept on each side.
const HALF_ZERO_CROSSINGS: f64 = 24.0;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.94;

fn blackman(t: f64) -> f64 {
    // t in [-1, 1]
    if t.abs() >= 1.0 {
        return 0.0;
    }
    let x = PI * (t + 1.0);
    0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Band-limited (Blackman-windowed sinc) resampling. Output length is
/// `round(N * target / source)`.
pub fn resample(clip: &AudioClip, target_rate_hz: u32) -> Result<AudioClip> {
    let source = clip.sample_rate_hz();
    if source == target_rate_hz {
        return Ok(clip.clone());
    }
    let samples = resample_samples(clip.samples(), source, target_rate_hz);
    AudioClip::new(samples, target_rate_hz)
}

pub fn resample_samples(x: &[f64], source_rate_hz: u32, target_rate_hz: u32) -> Vec<f64> {
    let ratio = f64::from(target_rate_hz) / f64::from(source_rate_hz);
    let out_len = (x.len() as f64 * ratio).round() as usize;
    // Cutoff in cycles per input sample, relative to input Nyquist.
    let cutoff = ROLLOFF * ratio.min(1.0);
    let half_width = HALF_ZERO_CROSSINGS / cutoff;
    let n = x.len() as isize;
    (0..out_len)
        .map(|i| {
            let center = i as f64 / ratio;
            let lo = (center - half_width).ceil() as isize;
            let hi = (center + half_width).floor() as isize;
            let mut acc = 0.0;
            for j in lo.max(0)..=hi.min(n - 1) {
                let t = center - j as f64;
                acc += x[j as usize] * cutoff * sinc(cutoff * t) * blackman(t / half_width);
            }
            acc
        })
        .collect()
}
