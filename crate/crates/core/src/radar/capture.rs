use num_complex::Complex64;

use super::config::{RadarConfig, SampleLayout};
use super::processing::ComplexFrame;
use super::RadarError;

/// A parsed capture: complex ADC samples indexed `[frame][chirp][sample]`.
#[derive(Debug, Clone)]
pub struct RadarCube {
    pub config: RadarConfig,
    data: Vec<Complex64>,
}

impl RadarCube {
    pub fn new(config: RadarConfig, data: Vec<Complex64>) -> Result<Self, RadarError> {
        if data.len() != config.samples_per_capture() {
            return Err(RadarError::Dimension(format!(
                "cube holds {} samples, config requires {} ({} frames x {} chirps x {} samples)",
                data.len(),
                config.samples_per_capture(),
                config.frames_per_capture,
                config.chirps_per_frame,
                config.samples_per_chirp
            )));
        }
        Ok(Self { config, data })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.config.frames_per_capture,
            self.config.chirps_per_frame,
            self.config.samples_per_chirp,
        )
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Copy of one frame as a chirps x samples matrix.
    pub fn frame(&self, index: usize) -> Result<ComplexFrame, RadarError> {
        if index >= self.config.frames_per_capture {
            return Err(RadarError::Dimension(format!(
                "frame index {index} out of range ({} frames)",
                self.config.frames_per_capture
            )));
        }
        let n = self.config.samples_per_frame();
        let slice = &self.data[index * n..(index + 1) * n];
        ComplexFrame::new(
            self.config.chirps_per_frame,
            self.config.samples_per_chirp,
            slice.to_vec(),
        )
    }
}

/// Parses a raw capture file. Integer ADC codes are converted to floating
/// point without scaling.
pub fn parse_radar_capture(
    bytes: &[u8],
    config: &RadarConfig,
    layout: SampleLayout,
) -> Result<RadarCube, RadarError> {
    let expected = config.samples_per_capture() * layout.bytes_per_sample();
    if bytes.len() != expected {
        return Err(RadarError::SizeMismatch { expected, actual: bytes.len() });
    }
    let mut data = Vec::with_capacity(config.samples_per_capture());
    match layout {
        SampleLayout::ComplexI16Le => {
            for pair in bytes.chunks_exact(4) {
                let i = i16::from_le_bytes([pair[0], pair[1]]) as f64;
                let q = i16::from_le_bytes([pair[2], pair[3]]) as f64;
                data.push(Complex64::new(i, q));
            }
        }
        SampleLayout::ComplexF32Le => {
            for pair in bytes.chunks_exact(8) {
                let i = f32::from_le_bytes([pair[0], pair[1], pair[2], pair[3]]) as f64;
                let q = f32::from_le_bytes([pair[4], pair[5], pair[6], pair[7]]) as f64;
                data.push(Complex64::new(i, q));
            }
        }
    }
    RadarCube::new(*config, data)
}

/// Inverse of [`parse_radar_capture`]. For the int16 layout every component
/// must already be an integer-representable value in `[-32768, 32767]`;
/// out-of-range values are an error rather than silently clamped.
pub fn serialize_radar_capture(cube: &RadarCube, layout: SampleLayout) -> Result<Vec<u8>, RadarError> {
    let mut out = Vec::with_capacity(cube.data.len() * layout.bytes_per_sample());
    match layout {
        SampleLayout::ComplexI16Le => {
            for z in &cube.data {
                for comp in [z.re, z.im] {
                    let rounded = comp.round();
                    if !(i16::MIN as f64..=i16::MAX as f64).contains(&rounded) {
                        return Err(RadarError::SampleOutOfRange(comp));
                    }
                    out.extend_from_slice(&(rounded as i16).to_le_bytes());
                }
            }
        }
        SampleLayout::ComplexF32Le => {
            for z in &cube.data {
                out.extend_from_slice(&(z.re as f32).to_le_bytes());
                out.extend_from_slice(&(z.im as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}
