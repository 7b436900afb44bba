//! FMCW radar capture parsing and range-Doppler processing.
//!
//! The chain: raw binary capture -> [`RadarCube`] -> per-frame
//! [`zero_doppler_filter`] -> [`compute_range_doppler`] -> [`cfar_2d`]
//! detections, with [`to_model_input`] conditioning maps for the 2-D encoder.

mod capture;
mod cfar;
mod config;
mod processing;

pub use capture::{parse_radar_capture, serialize_radar_capture, RadarCube};
pub use cfar::{cfar_2d, CfarConfig, Detection, DetectionList};
pub use config::{RadarConfig, SampleLayout, SPEED_OF_LIGHT};
pub use processing::{
    compute_range_doppler, compute_range_doppler_with, to_model_input, zero_doppler_filter,
    ComplexFrame, FftWindow, RangeDopplerMap,
};

/// Errors from radar parsing and processing.
#[derive(Debug, thiserror::Error)]
pub enum RadarError {
    #[error("capture size mismatch: expected {expected} bytes, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("unknown sample layout tag {0:?}")]
    UnknownLayout(String),
    #[error("invalid radar config: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("sample value {0} outside int16 range")]
    SampleOutOfRange(f64),
    #[error("CFAR window of {window} cells exceeds map dimensions {rows}x{cols}")]
    CfarWindow { window: usize, rows: usize, cols: usize },
    #[error("invalid CFAR config: {0}")]
    Cfar(String),
}
