//! Calibrating the sensor against a reference meter with a programmable load.

mod fit;
mod load;
mod sweep;

pub use fit::{
    fit_current, fit_voltage_offset, CalibratedValue, CalibrationCurve, CurrentFit, FitForm, FitOptions, MeasurementPair,
    DEFAULT_MIN_PAIRS, DEFAULT_SELECTION_THRESHOLD,
};

pub use load::{
    LoadProgram, LoadStep, PotentiometerModel, ProgrammableLoad, SwitchNetwork, MIN_VOLTAGE_OUTPUT,
    MIN_VOLTAGE_RESOLUTION, PUBLISHED_FINEST_RESOLUTION, PUBLISHED_MIN_CURRENT,
};
pub use sweep::{pair_readings, reference_reading, run_calibration_sweep, SweepResult, SweepSetup};
