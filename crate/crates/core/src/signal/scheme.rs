use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The eight digital schemes, in canonical code order. The integer codes are
/// part of the IQD wire format and must never be renumbered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModulationScheme {
    Bpsk = 0,
    Qpsk = 1,
    Psk8 = 2,
    Qam16 = 3,
    Qam64 = 4,
    Pam4 = 5,
    Cpfsk = 6,
    Gfsk = 7,
}

pub const NUM_CLASSES: usize = 8;

impl ModulationScheme {
    pub const ALL: [ModulationScheme; NUM_CLASSES] = [
        ModulationScheme::Bpsk,
        ModulationScheme::Qpsk,
        ModulationScheme::Psk8,
        ModulationScheme::Qam16,
        ModulationScheme::Qam64,
        ModulationScheme::Pam4,
        ModulationScheme::Cpfsk,
        ModulationScheme::Gfsk,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ModulationScheme::Bpsk => "BPSK",
            ModulationScheme::Qpsk => "QPSK",
            ModulationScheme::Psk8 => "8PSK",
            ModulationScheme::Qam16 => "QAM16",
            ModulationScheme::Qam64 => "QAM64",
            ModulationScheme::Pam4 => "PAM4",
            ModulationScheme::Cpfsk => "CPFSK",
            ModulationScheme::Gfsk => "GFSK",
        }
    }

    /// Linear schemes are pulse-shaped constellations; the rest are
    /// continuous-phase frequency modulations.
    pub fn is_linear(self) -> bool {
        !matches!(self, ModulationScheme::Cpfsk | ModulationScheme::Gfsk)
    }

    /// Unit-average-energy constellation indexed by the transmitted bit
    /// pattern (Gray-mapped for PSK and QAM). Empty for the FSK schemes.
    pub fn constellation(self) -> Vec<Complex64> {
        match self {
            ModulationScheme::Bpsk => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            ModulationScheme::Qpsk => psk(4, std::f64::consts::FRAC_PI_4),
            ModulationScheme::Psk8 => psk(8, 0.0),
            ModulationScheme::Qam16 => square_qam(16),
            ModulationScheme::Qam64 => square_qam(64),
            ModulationScheme::Pam4 => {
                let scale = 5f64.sqrt();
                [-3.0, -1.0, 3.0, 1.0]
                    .iter()
                    .map(|&a| Complex64::new(a / scale, 0.0))
                    .collect()
            }
            ModulationScheme::Cpfsk | ModulationScheme::Gfsk => Vec::new(),
        }
    }
}

impl fmt::Display for ModulationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModulationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown modulation scheme `{s}`")))
    }
}

fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    while g > 1 {
        g >>= 1;
        b ^= g;
    }
    b
}

/// M-PSK where bit pattern `b` sits at phase index `gray_decode(b)`, so
/// neighbouring phases differ in one bit.
fn psk(m: usize, offset: f64) -> Vec<Complex64> {
    (0..m)
        .map(|bits| {
            let k = gray_decode(bits) as f64;
            Complex64::from_polar(1.0, offset + std::f64::consts::TAU * k / m as f64)
        })
        .collect()
}

fn square_qam(m: usize) -> Vec<Complex64> {
    let side = (m as f64).sqrt() as usize;
    let half_bits = side.trailing_zeros();
    let level = |g: usize| (2 * gray_decode(g)) as f64 - (side - 1) as f64;
    let pts: Vec<Complex64> = (0..m)
        .map(|bits| {
            let i_bits = bits >> half_bits;
            let q_bits = bits & (side - 1);
            Complex64::new(level(i_bits), level(q_bits))
        })
        .collect();
    let energy = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / m as f64;
    let scale = energy.sqrt();
    pts.into_iter().map(|p| p / scale).collect()
}
