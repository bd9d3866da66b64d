use rayon::prelude::*;

use super::scheme::{ModulationScheme, NUM_CLASSES};
use super::synth::{snr_index, synthesize_iq, ChannelOptions, SNR_GRID};
use super::FEATURE_DIM;
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, Rng};

/// Salt separating the split shuffle streams from the per-frame synthesis streams.
const SPLIT_SALT: u64 = 0x5b11_7000_0000_0001;

pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Split::Train),
            1 => Some(Split::Test),
            _ => None,
        }
    }
}

/// One labelled example: 128 complex samples as 256 `f32` features
/// (in-phase block first, then quadrature).
#[derive(Debug, Clone, PartialEq)]
pub struct IqFrame {
    iq: Vec<f32>,
    label: ModulationScheme,
    snr_db: i8,
}

impl IqFrame {
    pub fn new(iq: Vec<f32>, label: ModulationScheme, snr_db: i8) -> Result<Self> {
        if iq.len() != FEATURE_DIM {
            return Err(Error::invalid(format!(
                "frame has {} features, expected {FEATURE_DIM}",
                iq.len()
            )));
        }
        if snr_index(i32::from(snr_db)).is_none() {
            return Err(Error::invalid(format!("SNR {snr_db} dB is off the grid")));
        }
        if iq.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("frame contains non-finite features"));
        }
        Ok(Self { iq, label, snr_db })
    }

    /// Rounds a 64-bit feature vector to storage precision.
    pub fn from_f64(iq: &[f64], label: ModulationScheme, snr_db: i8) -> Result<Self> {
        Self::new(iq.iter().map(|&v| v as f32).collect(), label, snr_db)
    }

    pub fn iq(&self) -> &[f32] {
        &self.iq
    }

    pub fn features(&self) -> Vec<f64> {
        self.iq.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn label(&self) -> ModulationScheme {
        self.label
    }

    pub fn snr_db(&self) -> i8 {
        self.snr_db
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    frames: Vec<IqFrame>,
    split: Vec<Split>,
    seed: u64,
}

impl Dataset {
    pub fn new(frames: Vec<IqFrame>, split: Vec<Split>, seed: u64) -> Result<Self> {
        if frames.len() != split.len() {
            return Err(Error::invalid(format!(
                "{} frames but {} split flags",
                frames.len(),
                split.len()
            )));
        }
        Ok(Self {
            frames,
            split,
            seed,
        })
    }

    pub fn empty(seed: u64) -> Self {
        Self {
            frames: Vec::new(),
            split: Vec::new(),
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn frames(&self) -> &[IqFrame] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &IqFrame {
        &self.frames[i]
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    pub fn split_of(&self, i: usize) -> Split {
        self.split[i]
    }

    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == which).collect()
    }

    /// Per-(label, SNR) counts for the given split, indexed `[label][snr_index]`.
    pub fn stratum_counts(&self, which: Option<Split>) -> [[usize; SNR_GRID.len()]; NUM_CLASSES] {
        let mut counts = [[0usize; SNR_GRID.len()]; NUM_CLASSES];
        for (f, s) in self.frames.iter().zip(&self.split) {
            if which.map_or(true, |w| w == *s) {
                let j = snr_index(i32::from(f.snr_db)).expect("validated at construction");
                counts[f.label as usize][j] += 1;
            }
        }
        counts
    }
}

/// `8 × 20 × frames_per_cell` frames, ordered scheme-major, then SNR, then
/// index within the cell, with a stratified 80/20 split.
pub fn build_dataset(frames_per_cell: usize, seed: u64) -> Result<Dataset> {
    build_dataset_with(frames_per_cell, seed, ChannelOptions::default())
}

pub fn build_dataset_with(
    frames_per_cell: usize,
    seed: u64,
    channel: ChannelOptions,
) -> Result<Dataset> {
    if frames_per_cell == 0 {
        return Err(Error::invalid("frames_per_cell must be at least 1"));
    }
    let cells: Vec<(ModulationScheme, i8)> = ModulationScheme::ALL
        .iter()
        .flat_map(|&m| SNR_GRID.iter().map(move |&s| (m, s)))
        .collect();
    let total = cells.len() * frames_per_cell;

    let frames = (0..total)
        .into_par_iter()
        .map(|i| {
            let (scheme, snr) = cells[i / frames_per_cell];
            let mut rng = Rng::for_item(seed, i as u64);
            let iq = synthesize_iq(scheme, i32::from(snr), channel, &mut rng)?;
            IqFrame::from_f64(&iq, scheme, snr)
        })
        .collect::<Result<Vec<_>>>()?;

    let train_per_cell = (TRAIN_FRACTION * frames_per_cell as f64).round() as usize;
    let mut split = vec![Split::Test; total];
    for cell in 0..cells.len() {
        let mut order: Vec<usize> = (0..frames_per_cell).collect();
        Rng::new(derive_seed(seed ^ SPLIT_SALT, cell as u64)).shuffle(&mut order);
        for &k in &order[..train_per_cell] {
            split[cell * frames_per_cell + k] = Split::Train;
        }
    }
    Dataset::new(frames, split, seed)
}
