//! Deterministic DSP primitives shared by the EMG and audio feature paths.

pub mod filter;
pub mod frame;
pub mod resample;
pub mod stft;
pub mod window;

pub use filter::{design_butterworth, FilterKind, IirFilter};
pub use frame::{make_frame_clock, FrameClock, FrameTiming};
pub use resample::resample;
pub use stft::{istft, stft, ComplexSpectrogram, AUDIO_RATE_HZ, FFT_SIZE, HOP, NUM_BINS};
pub use window::blackman;
