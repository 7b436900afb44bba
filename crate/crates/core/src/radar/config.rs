use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RadarError;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// FMCW chirp/frame geometry and timing.
///
/// Defaults follow the AWR2243 configuration: 77 GHz start frequency,
/// 256 samples per chirp at 10 Msps, 128 chirps per frame, 0.76 GHz sweep
/// bandwidth at 29.98 MHz/us slope, 40 ms frame period. The chirp repetition
/// interval is not part of the published table; the default 101.4 us is
/// back-solved so the velocity resolution lands at 0.15 m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarConfig {
    pub start_frequency_hz: f64,
    pub samples_per_chirp: usize,
    pub chirps_per_frame: usize,
    pub frames_per_capture: usize,
    pub sampling_rate_hz: f64,
    pub chirp_slope_hz_per_s: f64,
    pub bandwidth_hz: f64,
    pub chirp_repetition_interval_s: f64,
    pub frame_period_s: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self::awr2243()
    }
}

impl RadarConfig {
    /// The AWR2243 capture configuration.
    pub fn awr2243() -> Self {
        Self {
            start_frequency_hz: 77e9,
            samples_per_chirp: 256,
            chirps_per_frame: 128,
            frames_per_capture: 256,
            sampling_rate_hz: 10e6,
            chirp_slope_hz_per_s: 29.98e12,
            bandwidth_hz: 0.76e9,
            chirp_repetition_interval_s: 1.014e-4,
            frame_period_s: 0.04,
        }
    }

    pub fn validate(&self) -> Result<(), RadarError> {
        let positive = [
            ("start_frequency_hz", self.start_frequency_hz),
            ("sampling_rate_hz", self.sampling_rate_hz),
            ("chirp_slope_hz_per_s", self.chirp_slope_hz_per_s),
            ("bandwidth_hz", self.bandwidth_hz),
            ("chirp_repetition_interval_s", self.chirp_repetition_interval_s),
            ("frame_period_s", self.frame_period_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(RadarError::Config(format!("{name} must be strictly positive, got {v}")));
            }
        }
        for (name, v) in [
            ("samples_per_chirp", self.samples_per_chirp),
            ("chirps_per_frame", self.chirps_per_frame),
            ("frames_per_capture", self.frames_per_capture),
        ] {
            if v == 0 {
                return Err(RadarError::Config(format!("{name} must be strictly positive")));
            }
        }
        // Swept bandwidth over the sampled window must agree with the nominal
        // bandwidth to within 2%.
        let swept = self.chirp_slope_hz_per_s * self.samples_per_chirp as f64 / self.sampling_rate_hz;
        if (swept - self.bandwidth_hz).abs() > 0.02 * self.bandwidth_hz {
            return Err(RadarError::Config(format!(
                "slope x sampling window sweeps {swept:.3e} Hz, inconsistent with bandwidth {:.3e} Hz",
                self.bandwidth_hz
            )));
        }
        let active = self.chirps_per_frame as f64 * self.chirp_repetition_interval_s;
        if active > self.frame_period_s {
            return Err(RadarError::Config(format!(
                "chirps_per_frame x chirp_repetition_interval ({active:.6} s) exceeds frame period {} s",
                self.frame_period_s
            )));
        }
        Ok(())
    }

    pub fn carrier_wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.start_frequency_hz
    }

    /// Range resolution `c / (2B)`.
    pub fn range_resolution_m(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz)
    }

    /// Velocity resolution `lambda / (2 N T_r)`.
    pub fn velocity_resolution_mps(&self) -> f64 {
        self.carrier_wavelength_m()
            / (2.0 * self.chirps_per_frame as f64 * self.chirp_repetition_interval_s)
    }

    /// Range spanned by one FFT bin, from the beat-frequency bin spacing
    /// `f_s / N`: `R_bin = f_s c / (2 S N)`.
    pub fn range_bin_spacing_m(&self) -> f64 {
        self.sampling_rate_hz * SPEED_OF_LIGHT
            / (2.0 * self.chirp_slope_hz_per_s * self.samples_per_chirp as f64)
    }

    /// Beat frequency for a target at `range_m`: `f_b = 2 R S / c`.
    pub fn beat_frequency_hz(&self, range_m: f64) -> f64 {
        2.0 * range_m * self.chirp_slope_hz_per_s / SPEED_OF_LIGHT
    }

    /// Doppler frequency for radial velocity `v`: `f_d = 2 v / lambda`.
    pub fn doppler_frequency_hz(&self, velocity_mps: f64) -> f64 {
        2.0 * velocity_mps / self.carrier_wavelength_m()
    }

    /// Fractional range FFT bin for a target at `range_m`.
    pub fn range_bin_for(&self, range_m: f64) -> f64 {
        self.beat_frequency_hz(range_m) * self.samples_per_chirp as f64 / self.sampling_rate_hz
    }

    /// Fractional Doppler FFT bin offset from the zero-Doppler bin for `v`.
    pub fn doppler_bin_offset_for(&self, velocity_mps: f64) -> f64 {
        self.doppler_frequency_hz(velocity_mps)
            * self.chirps_per_frame as f64
            * self.chirp_repetition_interval_s
    }

    pub fn samples_per_frame(&self) -> usize {
        self.chirps_per_frame * self.samples_per_chirp
    }

    pub fn samples_per_capture(&self) -> usize {
        self.frames_per_capture * self.samples_per_frame()
    }
}

/// On-disk sample encoding of a radar capture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleLayout {
    /// Interleaved signed 16-bit little-endian I/Q pairs (I first).
    #[serde(rename = "ci16le")]
    ComplexI16Le,
    /// Interleaved little-endian f32 I/Q pairs.
    #[serde(rename = "cf32le")]
    ComplexF32Le,
}

impl SampleLayout {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::ComplexI16Le => "ci16le",
            Self::ComplexF32Le => "cf32le",
        }
    }

    pub fn bytes_per_sample(&self) -> usize {
        match self {
            Self::ComplexI16Le => 4,
            Self::ComplexF32Le => 8,
        }
    }
}

impl FromStr for SampleLayout {
    type Err = RadarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ci16le" => Ok(Self::ComplexI16Le),
            "cf32le" => Ok(Self::ComplexF32Le),
            other => Err(RadarError::UnknownLayout(other.to_string())),
        }
    }
}
