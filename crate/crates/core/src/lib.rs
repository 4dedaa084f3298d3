//! Impedance spectroscopy of particle suspensions: forward models, multisine
//! excitation, period-averaged impedance estimation, distribution of
//! relaxation times (DRT) inversion and linear concentration calibration.

pub mod calibration;
pub mod circuit;
pub mod drt;
pub mod error;
pub mod estimator;
pub mod multisine;
pub mod nnls;

pub use calibration::{fit_linear, predict, resolution, sensitivity, CalibrationModel, CalibrationPoint};
pub use circuit::{
    colloid_debye_form, eval_colloid_circuit, eval_rc_ladder, log_frequencies, synthesize_spectrum, CircuitParams,
    DebyeForm, ImpedanceModel, ImpedanceSpectrum, RcLadder, RcStage, SpectrumPoint,
};
pub use drt::{
    build_kernel, build_tau_grid, find_peaks, fit_drt, fit_drt_relative, reconstruct, DrtOptions, DrtResult, Peak,
    Regularizer, TauGrid,
};
pub use error::{Error, Result};
pub use estimator::{estimate_impedance, estimate_noise_floor, simulate_channel, ChannelConfig, MeasurementRecord};
pub use multisine::{crest_factor, design_multisine, render, MultisineDesign, MultisineSpec, SignalRecord, Tone};
pub use num_complex::Complex64;
