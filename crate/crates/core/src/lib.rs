pub mod audio;
pub mod dataset;
pub mod dsp;
pub mod emg;
pub mod error;
pub mod formats;
pub mod metrics;
pub mod normalize;
pub mod report;
pub mod synth;
pub mod waveform;

pub use error::{Error, Result};
pub use waveform::Waveform;
