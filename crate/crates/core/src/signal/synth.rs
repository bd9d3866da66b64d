//! Baseband I/Q frame synthesis.
//!
//! Linear schemes: random Gray-mapped symbols, upsampled to 8 samples per
//! symbol and shaped with a root-raised-cosine filter (roll-off 0.35, span 8
//! symbols). CPFSK: rectangular frequency pulse, modulation index 0.5.
//! GFSK: the same after a Gaussian filter with BT = 0.35. The clean signal is
//! scaled to unit average power, then complex AWGN with variance
//! 10^(−snr/10) is added.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::scheme::ModulationScheme;
use super::{FRAME_SAMPLES, SAMPLES_PER_SYMBOL};
use crate::error::{Error, Result};
use crate::numerics::Rng;

pub const RRC_ROLLOFF: f64 = 0.35;
pub const RRC_SPAN_SYMBOLS: usize = 8;
pub const GAUSSIAN_BT: f64 = 0.35;
pub const GAUSSIAN_SPAN_SYMBOLS: usize = 4;
pub const FSK_MODULATION_INDEX: f64 = 0.5;

/// Nominal SNR grid in dB: −20, −18, …, 18.
pub const SNR_GRID: [i8; 20] = [
    -20, -18, -16, -14, -12, -10, -8, -6, -4, -2, 0, 2, 4, 6, 8, 10, 12, 14, 16, 18,
];

pub fn snr_index(snr_db: i32) -> Option<usize> {
    SNR_GRID.iter().position(|&s| s as i32 == snr_db)
}

/// Channel options applied on top of the fixed pulse shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelOptions {
    /// Rotate every frame by a uniform random carrier phase.
    pub random_phase: bool,
    /// Rescale each received (signal + noise) frame to unit average power.
    pub normalize_received_power: bool,
}

impl Default for ChannelOptions {
    fn default() -> Self {
        Self {
            random_phase: false,
            normalize_received_power: true,
        }
    }
}

/// Signal and noise kept apart so power accounting can be checked.
#[derive(Debug, Clone)]
pub struct FrameComponents {
    pub signal: Vec<Complex64>,
    pub noise: Vec<Complex64>,
}

impl FrameComponents {
    pub fn signal_power(&self) -> f64 {
        mean_power(&self.signal)
    }

    pub fn noise_power(&self) -> f64 {
        mean_power(&self.noise)
    }

    pub fn realized_snr_db(&self) -> f64 {
        10.0 * (self.signal_power() / self.noise_power()).log10()
    }

    pub fn received(&self) -> Vec<Complex64> {
        self.signal.iter().zip(&self.noise).map(|(s, n)| s + n).collect()
    }
}

pub fn mean_power(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64
}

/// Draws the clean signal and the noise for one frame.
pub fn synthesize_components(
    scheme: ModulationScheme,
    snr_db: i32,
    channel: ChannelOptions,
    rng: &mut Rng,
) -> Result<FrameComponents> {
    if snr_index(snr_db).is_none() {
        return Err(Error::invalid(format!(
            "SNR {snr_db} dB is not on the grid -20, -18, ..., 18"
        )));
    }
    let mut signal = if scheme.is_linear() {
        linear_baseband(scheme, rng)
    } else {
        fsk_baseband(scheme == ModulationScheme::Gfsk, rng)
    };

    let power = mean_power(&signal);
    let phase = if channel.random_phase {
        std::f64::consts::TAU * rng.uniform()
    } else {
        0.0
    };
    let rotate = Complex64::from_polar(1.0 / power.sqrt(), phase);
    signal.iter_mut().for_each(|s| *s *= rotate);

    let noise_var = 10f64.powf(-f64::from(snr_db) / 10.0);
    let sigma = (noise_var / 2.0).sqrt();
    let noise = (0..FRAME_SAMPLES)
        .map(|_| {
            let (a, b) = rng.gaussian_pair();
            Complex64::new(a * sigma, b * sigma)
        })
        .collect();
    Ok(FrameComponents { signal, noise })
}

/// One received frame as 256 reals: 128 in-phase samples then 128 quadrature.
pub fn synthesize_iq(
    scheme: ModulationScheme,
    snr_db: i32,
    channel: ChannelOptions,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let parts = synthesize_components(scheme, snr_db, channel, rng)?;
    let mut rx = parts.received();
    if channel.normalize_received_power {
        let scale = 1.0 / mean_power(&rx).sqrt();
        rx.iter_mut().for_each(|v| *v *= scale);
    }
    let mut out = Vec::with_capacity(2 * FRAME_SAMPLES);
    out.extend(rx.iter().map(|v| v.re));
    out.extend(rx.iter().map(|v| v.im));
    Ok(out)
}

fn linear_baseband(scheme: ModulationScheme, rng: &mut Rng) -> Vec<Complex64> {
    let constellation = scheme.constellation();
    let taps = rrc_taps(RRC_ROLLOFF, SAMPLES_PER_SYMBOL, RRC_SPAN_SYMBOLS);
    // Enough symbols that every output sample in the window sees the full filter.
    let n_symbols = FRAME_SAMPLES / SAMPLES_PER_SYMBOL + 2 * RRC_SPAN_SYMBOLS;
    let symbols: Vec<Complex64> = (0..n_symbols)
        .map(|_| constellation[rng.below(constellation.len())])
        .collect();

    let start = RRC_SPAN_SYMBOLS * SAMPLES_PER_SYMBOL;
    (start..start + FRAME_SAMPLES)
        .map(|n| {
            // y[n] = sum_k sym[k] h[n - k*sps]
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, sym) in symbols.iter().enumerate() {
                let pos = k * SAMPLES_PER_SYMBOL;
                if pos > n {
                    break;
                }
                if let Some(h) = taps.get(n - pos) {
                    acc += sym * h;
                }
            }
            acc
        })
        .collect()
}

fn fsk_baseband(gaussian: bool, rng: &mut Rng) -> Vec<Complex64> {
    let sps = SAMPLES_PER_SYMBOL;
    let guard = GAUSSIAN_SPAN_SYMBOLS;
    let n_symbols = FRAME_SAMPLES / sps + 2 * guard;
    let mut freq: Vec<f64> = (0..n_symbols)
        .flat_map(|_| {
            let a = if rng.below(2) == 0 { -1.0 } else { 1.0 };
            std::iter::repeat(a).take(sps)
        })
        .collect();
    if gaussian {
        let g = gaussian_taps(GAUSSIAN_BT, sps, GAUSSIAN_SPAN_SYMBOLS);
        freq = convolve_same(&freq, &g);
    }
    // Each symbol advances the phase by pi * h * a.
    let step = std::f64::consts::PI * FSK_MODULATION_INDEX / sps as f64;
    let start = guard * sps;
    let mut phase = 0.0;
    let mut out = Vec::with_capacity(FRAME_SAMPLES);
    for (n, f) in freq.iter().enumerate() {
        if n >= start && out.len() < FRAME_SAMPLES {
            out.push(Complex64::from_polar(1.0, phase));
        }
        phase += step * f;
    }
    out
}

/// Root-raised-cosine impulse response, unit energy, `span * sps + 1` taps.
pub fn rrc_taps(beta: f64, sps: usize, span: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    let half = (span * sps / 2) as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|i| {
            let t = i as f64 / sps as f64;
            if i == 0 {
                1.0 - beta + 4.0 * beta / PI
            } else if (t.abs() - 1.0 / (4.0 * beta)).abs() < 1e-9 {
                beta / 2f64.sqrt()
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * beta)).sin()
                        + (1.0 - 2.0 / PI) * (PI / (4.0 * beta)).cos())
            } else {
                ((PI * t * (1.0 - beta)).sin()
                    + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos())
                    / (PI * t * (1.0 - (4.0 * beta * t).powi(2)))
            }
        })
        .collect();
    let energy: f64 = taps.iter().map(|h| h * h).sum();
    taps.iter_mut().for_each(|h| *h /= energy.sqrt());
    taps
}

/// Gaussian frequency-smoothing filter normalized to unit DC gain.
pub fn gaussian_taps(bt: f64, sps: usize, span: usize) -> Vec<f64> {
    use std::f64::consts::{LN_2, PI};
    let half = (span * sps / 2) as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|i| {
            let t = i as f64 / sps as f64;
            (-2.0 * PI * PI * bt * bt * t * t / LN_2).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|h| *h /= sum);
    taps
}

fn convolve_same(x: &[f64], h: &[f64]) -> Vec<f64> {
    let half = h.len() / 2;
    (0..x.len())
        .map(|n| {
            h.iter()
                .enumerate()
                .filter_map(|(k, hk)| {
                    let idx = (n + half).checked_sub(k)?;
                    x.get(idx).map(|xv| xv * hk)
                })
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rrc_is_symmetric_unit_energy() {
        let h = rrc_taps(RRC_ROLLOFF, 8, 8);
        assert_eq!(h.len(), 65);
        let e: f64 = h.iter().map(|v| v * v).sum();
        assert!((e - 1.0).abs() < 1e-12);
        for i in 0..h.len() {
            assert!((h[i] - h[h.len() - 1 - i]).abs() < 1e-12);
        }
        assert!(h.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rrc_squared_is_nyquist() {
        // RRC * RRC = raised cosine: zero crossings at nonzero symbol multiples.
        let h = rrc_taps(RRC_ROLLOFF, 8, 16);
        let n = h.len();
        let rc: Vec<f64> = (0..2 * n - 1)
            .map(|k| {
                (0..n)
                    .filter_map(|i| k.checked_sub(i).and_then(|j| h.get(j)).map(|hj| h[i] * hj))
                    .sum()
            })
            .collect();
        let center = n - 1;
        for m in 1..6 {
            let v = rc[center + m * 8] / rc[center];
            assert!(v.abs() < 0.02, "ISI at symbol {m}: {v}");
        }
    }

    #[test]
    fn gaussian_taps_sum_to_one() {
        let g = gaussian_taps(GAUSSIAN_BT, 8, 4);
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fsk_is_constant_envelope() {
        let mut rng = Rng::new(4);
        for gaussian in [false, true] {
            let s = fsk_baseband(gaussian, &mut rng);
            assert_eq!(s.len(), FRAME_SAMPLES);
            assert!(s.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn cpfsk_phase_moves_quarter_turn_per_symbol() {
        let mut rng = Rng::new(8);
        let s = fsk_baseband(false, &mut rng);
        for k in 0..FRAME_SAMPLES / SAMPLES_PER_SYMBOL - 1 {
            let a = s[k * SAMPLES_PER_SYMBOL];
            let b = s[(k + 1) * SAMPLES_PER_SYMBOL];
            let dphi = (b / a).arg().abs();
            assert!((dphi - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        }
    }

    #[test]
    fn off_grid_snr_rejected() {
        let mut rng = Rng::new(1);
        let ch = ChannelOptions::default();
        assert!(synthesize_iq(ModulationScheme::Bpsk, 1, ch, &mut rng).is_err());
        assert!(synthesize_iq(ModulationScheme::Bpsk, 20, ch, &mut rng).is_err());
        assert!(synthesize_iq(ModulationScheme::Bpsk, -20, ch, &mut rng).is_ok());
    }

    #[test]
    fn clean_signal_has_unit_power() {
        let mut rng = Rng::new(2);
        for m in ModulationScheme::ALL {
            let parts = synthesize_components(m, 0, ChannelOptions::default(), &mut rng).unwrap();
            assert!((parts.signal_power() - 1.0).abs() < 1e-12, "{m}");
        }
    }

    #[test]
    fn realized_snr_at_18db() {
        let mut rng = Rng::new(18);
        let n = 1000;
        let mean: f64 = (0..n)
            .map(|_| {
                synthesize_components(ModulationScheme::Bpsk, 18, ChannelOptions::default(), &mut rng)
                    .unwrap()
                    .realized_snr_db()
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 18.0).abs() <= 0.2, "mean realized SNR {mean}");
    }

    #[test]
    fn noise_dominates_at_minus_20db() {
        let mut rng = Rng::new(20);
        for m in ModulationScheme::ALL {
            let parts = synthesize_components(m, -20, ChannelOptions::default(), &mut rng).unwrap();
            let total = mean_power(&parts.received());
            let ratio = parts.signal_power() / total;
            assert!(ratio < 0.05, "{m}: {ratio}");
            assert!((total / parts.noise_power() - 1.0).abs() < 0.15);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let ch = ChannelOptions::default();
        for m in ModulationScheme::ALL {
            let a = synthesize_iq(m, 4, ch, &mut Rng::new(99)).unwrap();
            let b = synthesize_iq(m, 4, ch, &mut Rng::new(99)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn normalized_frames_have_unit_power() {
        let mut rng = Rng::new(5);
        let x = synthesize_iq(ModulationScheme::Qam16, -10, ChannelOptions::default(), &mut rng)
            .unwrap();
        let p: f64 = x.iter().map(|v| v * v).sum::<f64>() / FRAME_SAMPLES as f64;
        assert!((p - 1.0).abs() < 1e-12);
    }
}
