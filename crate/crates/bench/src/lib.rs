//! Fixtures shared by the criterion benchmarks.

use dysgrade_core::corpus::synth::SynthesisProfile;
use dysgrade_core::corpus::{synthesize_corpus, synthesize_utterance};
use dysgrade_core::{AudioClip, SpeakerRecord};

/// Two seconds of a mildly perturbed /a/ at 10 kHz.
pub fn vowel_clip() -> AudioClip {
    let mut p = SynthesisProfile::vowel_a(120.0, 10_000);
    p.duration_s = 2.0;
    p.jitter_pct = 1.0;
    p.shimmer_pct = 3.0;
    synthesize_utterance(&p, 1).expect("valid profile").clip
}

/// A small labelled corpus, 4 speakers per class.
pub fn small_corpus() -> Vec<SpeakerRecord> {
    synthesize_corpus(4, 1).expect("valid corpus")
}

/// Deterministic binary training set: `n` rows of `d` features.
pub fn binary_dataset(n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
    let x: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..d).map(|j| ((i * 7919 + j * 104_729) % 1000) as f64 / 1000.0).collect())
        .collect();
    let y = x.iter().map(|r| r[0] + 0.3 * r[1] > 0.6).collect();
    (x, y)
}
