//! Post-processing of synthetic room impulse responses.
//!
//! * [`audio`]: WAV I/O, resampling to 16 kHz / 16384 samples, spectra.
//! * [`acoustics`]: T60, EDT, DRR and CTE estimators.
//! * [`equalization`]: 7-band relative gains, a Gaussian mixture over them
//!   and window-method FIR matching.
//! * [`tsrirgan`]: the cycle-consistent raw-waveform GAN that maps
//!   synthetic RIRs toward real ones.
//! * [`augmentation`]: far-field speech from clean speech, an RIR and
//!   looped noise at a target SNR.
//! * [`pipeline`]: manifests, splits, the four post-processing
//!   combinations and corpus reports.

pub mod acoustics;
pub mod audio;
pub mod augmentation;
pub mod equalization;
pub mod pipeline;
pub mod tsrirgan;
