use crate::error::{Error, Result};

/// All-pole model `x[n] ~ sum_k coefficients[k-1] * x[n-k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpcModel {
    pub order: usize,
    pub coefficients: Vec<f64>,
    /// Square root of the normalized prediction-error energy.
    pub gain: f64,
    pub reflection_coefficients: Vec<f64>,
}

impl LpcModel {
    pub fn is_stable(&self) -> bool {
        self.reflection_coefficients.iter().all(|k| k.abs() < 1.0)
    }

    /// Prediction-error filter applied to `x` starting at `start`, using
    /// samples before `start` as history when available.
    pub fn residual_at(&self, x: &[f64], n: usize) -> f64 {
        let mut pred = 0.0;
        for (k, a) in self.coefficients.iter().enumerate() {
            if let Some(idx) = n.checked_sub(k + 1) {
                pred += a * x[idx];
            }
        }
        x[n] - pred
    }
}

/// Biased autocorrelation `r[k] = sum x[n] x[n+k] / N` for `k = 0..=max_lag`.
pub fn autocorrelation(frame: &[f64], max_lag: usize) -> Vec<f64> {
    let n = frame.len();
    (0..=max_lag)
        .map(|k| {
            if k >= n {
                0.0
            } else {
                frame[..n - k]
                    .iter()
                    .zip(&frame[k..])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / n as f64
            }
        })
        .collect()
}

/// Levinson-Durbin recursion on the autocorrelation sequence of `frame`.
pub fn lpc(frame: &[f64], order: usize) -> Result<LpcModel> {
    if order >= frame.len() {
        return Err(Error::InvalidParameter(format!(
            "LPC order {order} must be below the frame length {}",
            frame.len()
        )));
    }
    let r = autocorrelation(frame, order);
    levinson_durbin(&r, order)
}

pub fn levinson_durbin(r: &[f64], order: usize) -> Result<LpcModel> {
    if r.len() <= order {
        return Err(Error::InvalidParameter(
            "autocorrelation shorter than order + 1".into(),
        ));
    }
    if !(r[0] > 0.0) || !r[0].is_finite() {
        return Err(Error::SingularAutocorrelation);
    }
    let floor = r[0] * 1e-14;
    let mut a = vec![0.0; order];
    let mut reflection = Vec::with_capacity(order);
    let mut err = r[0];
    for i in 0..order {
        let k = if err > floor {
            let acc = r[i + 1] - (0..i).map(|j| a[j] * r[i - j]).sum::<f64>();
            (acc / err).clamp(-0.999_999_999, 0.999_999_999)
        } else {
            0.0
        };
        let prev = a.clone();
        a[i] = k;
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        err *= 1.0 - k * k;
        reflection.push(k);
    }
    Ok(LpcModel {
        order,
        coefficients: a,
        gain: err.max(0.0).sqrt(),
        reflection_coefficients: reflection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn recovers_ar2_coefficients() {
        let e = noise(20_000, 3);
        let mut x = vec![0.0; e.len()];
        for n in 0..x.len() {
            let x1 = if n >= 1 { x[n - 1] } else { 0.0 };
            let x2 = if n >= 2 { x[n - 2] } else { 0.0 };
            x[n] = 0.9 * x1 - 0.5 * x2 + e[n];
        }
        let m = lpc(&x, 2).unwrap();
        assert!((m.coefficients[0] - 0.9).abs() < 0.05, "{:?}", m.coefficients);
        assert!((m.coefficients[1] + 0.5).abs() < 0.05, "{:?}", m.coefficients);
        assert!(m.is_stable());
    }

    #[test]
    fn white_noise_has_small_reflection_coefficients() {
        let mut total = 0.0;
        for seed in 0..8 {
            let m = lpc(&noise(4000, seed), 10).unwrap();
            total += m.reflection_coefficients.iter().map(|k| k.abs()).sum::<f64>() / 10.0;
        }
        assert!(total / 8.0 < 0.2);
    }

    #[test]
    fn order_zero_is_rms() {
        let x = [1.0, -1.0, 1.0, -1.0];
        let m = lpc(&x, 0).unwrap();
        assert!(m.coefficients.is_empty());
        assert!((m.gain - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_frame_is_singular() {
        assert!(matches!(lpc(&[0.0; 32], 4), Err(Error::SingularAutocorrelation)));
        assert!(lpc(&[1.0; 4], 4).is_err());
    }

    #[test]
    fn residual_energy_is_non_increasing_in_order() {
        let x: Vec<f64> = noise(1000, 9)
            .iter()
            .enumerate()
            .map(|(i, v)| v + (i as f64 * 0.2).sin() * 3.0)
            .collect();
        let gains: Vec<f64> = (0..16).map(|p| lpc(&x, p).unwrap().gain).collect();
        for w in gains.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }
}
