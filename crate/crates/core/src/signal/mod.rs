//! Labelled I/Q frames for the eight digital schemes: synthesis, the
//! stratified dataset, the [0, 1] feature scaler and the IQD file format.

mod dataset;
mod iqd;
mod scaler;
mod scheme;
mod synth;

pub use dataset::{build_dataset, build_dataset_with, Dataset, IqFrame, Split, TRAIN_FRACTION};
pub use iqd::{decode_iqd, encode_iqd, read_iqd, write_iqd, FRAME_LEN, HEADER_LEN};
pub use scaler::{fit_scaler, MinMaxScaler, ScaledSet, ScalerId};
pub use scheme::{ModulationScheme, NUM_CLASSES};
pub use synth::{
    gaussian_taps, mean_power, rrc_taps, snr_index, synthesize_components, synthesize_iq,
    ChannelOptions, FrameComponents, SNR_GRID,
};

/// Complex samples per frame.
pub const FRAME_SAMPLES: usize = 128;
/// Real features per frame (I block then Q block).
pub const FEATURE_DIM: usize = 2 * FRAME_SAMPLES;
pub const SAMPLES_PER_SYMBOL: usize = 8;
