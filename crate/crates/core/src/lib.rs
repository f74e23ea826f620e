pub mod error;
pub mod bus_timing;
pub mod sensor;
pub mod sampler;
pub mod workload;
pub mod buffer_io;
pub mod calibration;
pub mod analysis;

pub use error::{Error, Result};
