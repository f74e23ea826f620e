//! Synthetic device loads and the reference meter that measures them.

mod presets;
mod profile;
mod reference;

pub use presets::{
    battery_source, generate_profile, preset_spec, Device, Workload, DEFAULT_BATTERY_RESISTANCE, DEFAULT_PROFILE_S,
    STATE_DWELL_S,
};
pub use profile::{Layer, LoadProfile, Piece, ProfileSpec, Segment, SegmentKind, Source, SUPPLY_OUTPUT_RESISTANCE};
pub use reference::{ReferenceMeter, REFERENCE_RANGES};
