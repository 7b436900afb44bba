use num_complex::Complex64;
use rustfft::FftPlanner;

use super::config::RadarConfig;
use super::RadarError;

/// One frame of complex samples: chirps (slow time) x samples (fast time).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexFrame {
    chirps: usize,
    samples: usize,
    data: Vec<Complex64>,
}

impl ComplexFrame {
    pub fn new(chirps: usize, samples: usize, data: Vec<Complex64>) -> Result<Self, RadarError> {
        if data.len() != chirps * samples {
            return Err(RadarError::Dimension(format!(
                "frame data length {} does not match {chirps} chirps x {samples} samples",
                data.len()
            )));
        }
        Ok(Self { chirps, samples, data })
    }

    pub fn zeros(chirps: usize, samples: usize) -> Self {
        Self { chirps, samples, data: vec![Complex64::default(); chirps * samples] }
    }

    pub fn chirps(&self) -> usize {
        self.chirps
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn get(&self, chirp: usize, sample: usize) -> Complex64 {
        self.data[chirp * self.samples + sample]
    }

    pub fn set(&mut self, chirp: usize, sample: usize, value: Complex64) {
        self.data[chirp * self.samples + sample] = value;
    }

    /// Total energy, sum of |z|^2.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// 2-D magnitude map over Doppler x range bins with physical axis metadata.
#[derive(Debug, Clone)]
pub struct RangeDopplerMap {
    /// Row-major magnitudes, rows = Doppler bins, columns = range bins.
    magnitudes: Vec<f64>,
    doppler_bins: usize,
    range_bins: usize,
    pub range_resolution_m: f64,
    pub velocity_resolution_mps: f64,
    /// Zero Doppler sits at `chirps_per_frame / 2` after centering.
    pub zero_doppler_bin: usize,
}

impl RangeDopplerMap {
    pub fn new(
        magnitudes: Vec<f64>,
        doppler_bins: usize,
        range_bins: usize,
        range_resolution_m: f64,
        velocity_resolution_mps: f64,
        zero_doppler_bin: usize,
    ) -> Result<Self, RadarError> {
        if magnitudes.len() != doppler_bins * range_bins {
            return Err(RadarError::Dimension(format!(
                "map length {} does not match {doppler_bins} x {range_bins}",
                magnitudes.len()
            )));
        }
        if magnitudes.iter().any(|&m| m < 0.0 || !m.is_finite()) {
            return Err(RadarError::Dimension("map magnitudes must be finite and >= 0".into()));
        }
        Ok(Self {
            magnitudes,
            doppler_bins,
            range_bins,
            range_resolution_m,
            velocity_resolution_mps,
            zero_doppler_bin,
        })
    }

    pub fn doppler_bins(&self) -> usize {
        self.doppler_bins
    }

    pub fn range_bins(&self) -> usize {
        self.range_bins
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn get(&self, doppler_bin: usize, range_bin: usize) -> f64 {
        self.magnitudes[doppler_bin * self.range_bins + range_bin]
    }

    /// (doppler_bin, range_bin, magnitude) of the largest cell.
    pub fn peak(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for (i, &m) in self.magnitudes.iter().enumerate() {
            if m > best.2 {
                best = (i / self.range_bins, i % self.range_bins, m);
            }
        }
        best
    }

    /// Scales every magnitude by `c > 0` (used by scale-invariance checks).
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for m in &mut out.magnitudes {
            *m *= c;
        }
        out
    }
}

/// Optional window applied along both FFT axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FftWindow {
    #[default]
    Rectangular,
    Hann,
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Removes the zero-Doppler (static clutter) component: for every fast-time
/// sample column, subtracts the mean across chirps. Idempotent.
pub fn zero_doppler_filter(frame: &ComplexFrame) -> ComplexFrame {
    let (chirps, samples) = (frame.chirps, frame.samples);
    let mut means = vec![Complex64::default(); samples];
    for chirp in 0..chirps {
        let row = &frame.data[chirp * samples..(chirp + 1) * samples];
        for (m, z) in means.iter_mut().zip(row) {
            *m += z;
        }
    }
    let inv = 1.0 / chirps as f64;
    for m in &mut means {
        *m *= inv;
    }
    let mut out = frame.clone();
    for chirp in 0..chirps {
        let row = &mut out.data[chirp * samples..(chirp + 1) * samples];
        for (z, m) in row.iter_mut().zip(&means) {
            *z -= m;
        }
    }
    out
}

/// Range FFT along fast time, Doppler FFT along slow time, Doppler axis
/// rotated so zero Doppler sits at bin `chirps / 2`; magnitudes stored.
pub fn compute_range_doppler(
    frame: &ComplexFrame,
    config: &RadarConfig,
) -> Result<RangeDopplerMap, RadarError> {
    compute_range_doppler_with(frame, config, FftWindow::Rectangular)
}

pub fn compute_range_doppler_with(
    frame: &ComplexFrame,
    config: &RadarConfig,
    window: FftWindow,
) -> Result<RangeDopplerMap, RadarError> {
    let (chirps, samples) = (frame.chirps, frame.samples);
    if chirps != config.chirps_per_frame || samples != config.samples_per_chirp {
        return Err(RadarError::Dimension(format!(
            "frame is {chirps} x {samples}, config expects {} x {}",
            config.chirps_per_frame, config.samples_per_chirp
        )));
    }

    let mut planner = FftPlanner::<f64>::new();
    let range_fft = planner.plan_fft_forward(samples);
    let doppler_fft = planner.plan_fft_forward(chirps);

    let mut work = frame.data.clone();
    if window == FftWindow::Hann {
        let wr = hann(samples);
        for chirp in 0..chirps {
            for (z, w) in work[chirp * samples..(chirp + 1) * samples].iter_mut().zip(&wr) {
                *z *= w;
            }
        }
    }
    for chirp in 0..chirps {
        range_fft.process(&mut work[chirp * samples..(chirp + 1) * samples]);
    }

    let wd = if window == FftWindow::Hann { Some(hann(chirps)) } else { None };
    let zero_doppler_bin = chirps / 2;
    let mut magnitudes = vec![0.0f64; chirps * samples];
    let mut column = vec![Complex64::default(); chirps];
    for s in 0..samples {
        for (c, slot) in column.iter_mut().enumerate() {
            *slot = work[c * samples + s];
        }
        if let Some(w) = &wd {
            for (z, wv) in column.iter_mut().zip(w) {
                *z *= wv;
            }
        }
        doppler_fft.process(&mut column);
        for (k, z) in column.iter().enumerate() {
            let row = (k + zero_doppler_bin) % chirps;
            magnitudes[row * samples + s] = z.norm();
        }
    }

    RangeDopplerMap::new(
        magnitudes,
        chirps,
        samples,
        config.range_resolution_m(),
        config.velocity_resolution_mps(),
        zero_doppler_bin,
    )
}

/// Conditions a map for the 2-D encoder: `log(1 + magnitude)`, then min-max
/// scaled to `[0, 1]` per map. Constant maps scale to all zeros.
pub fn to_model_input(map: &RangeDopplerMap) -> Vec<f64> {
    let mut out: Vec<f64> = map.magnitudes.iter().map(|&m| m.ln_1p()).collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in &out {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = hi - lo;
    if span > 0.0 {
        for v in &mut out {
            *v = (*v - lo) / span;
        }
    } else {
        out.fill(0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn small_config() -> RadarConfig {
        RadarConfig {
            frames_per_capture: 1,
            chirps_per_frame: 128,
            samples_per_chirp: 256,
            ..RadarConfig::awr2243()
        }
    }

    /// Frame containing `exp(j tau (f_b/f_s m + f_d T_r n))`.
    fn tone_frame(cfg: &RadarConfig, beat_hz: f64, doppler_hz: f64) -> ComplexFrame {
        let mut frame = ComplexFrame::zeros(cfg.chirps_per_frame, cfg.samples_per_chirp);
        for n in 0..cfg.chirps_per_frame {
            for m in 0..cfg.samples_per_chirp {
                let phase = TAU
                    * (beat_hz * m as f64 / cfg.sampling_rate_hz
                        + doppler_hz * n as f64 * cfg.chirp_repetition_interval_s);
                frame.set(n, m, Complex64::from_polar(1.0, phase));
            }
        }
        frame
    }

    #[test]
    fn constant_frame_filters_to_zero() {
        let mut frame = ComplexFrame::zeros(8, 16);
        for z in frame.data_mut() {
            *z = Complex64::new(3.0, -1.5);
        }
        let filtered = zero_doppler_filter(&frame);
        assert!(filtered.data().iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn filter_output_has_zero_slow_time_mean() {
        let cfg = small_config();
        let frame = tone_frame(&cfg, 2.0e6, 1541.0);
        let filtered = zero_doppler_filter(&frame);
        let input_scale = frame.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
        for s in 0..filtered.samples() {
            let mut mean = Complex64::default();
            for c in 0..filtered.chirps() {
                mean += filtered.get(c, s);
            }
            mean /= filtered.chirps() as f64;
            assert!(mean.norm() < 1e-9 * input_scale, "column {s} mean {mean}");
        }
    }

    #[test]
    fn filter_is_idempotent() {
        let cfg = small_config();
        let frame = tone_frame(&cfg, 1.3e6, 700.0);
        let once = zero_doppler_filter(&frame);
        let twice = zero_doppler_filter(&once);
        let scale = once.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((a - b).norm() <= 1e-9 * scale);
        }
    }

    #[test]
    fn moving_target_survives_filter_within_1db() {
        // Target well away from zero Doppler: the notch removes only the DC
        // slow-time component, so the Doppler-domain peak barely changes.
        let cfg = small_config();
        let doppler_hz = 20.0 / (cfg.chirps_per_frame as f64 * cfg.chirp_repetition_interval_s);
        let frame = tone_frame(&cfg, 2.0e6, doppler_hz);
        let unfiltered = compute_range_doppler(&frame, &cfg).unwrap();
        let filtered = compute_range_doppler(&zero_doppler_filter(&frame), &cfg).unwrap();
        let (d, r, peak) = unfiltered.peak();
        let after = filtered.get(d, r);
        let ratio_db = 20.0 * (after / peak).log10();
        assert!(ratio_db.abs() < 1.0, "peak changed by {ratio_db} dB");
    }

    #[test]
    fn static_target_suppressed_by_at_least_40db() {
        let cfg = small_config();
        // Static return at range bin 51 (beat 2.0 MHz, zero Doppler).
        let frame = tone_frame(&cfg, 2.0e6, 0.0);
        let unfiltered = compute_range_doppler(&frame, &cfg).unwrap();
        let filtered = compute_range_doppler(&zero_doppler_filter(&frame), &cfg).unwrap();
        let zd = unfiltered.zero_doppler_bin;
        let before = unfiltered.get(zd, 51);
        let after = filtered.get(zd, 51);
        assert!(before > 0.0);
        let drop_db = 20.0 * (before / after.max(f64::MIN_POSITIVE)).log10();
        assert!(drop_db >= 40.0, "only {drop_db} dB suppression");
    }

    #[test]
    fn beat_tone_peaks_at_analytic_bins() {
        // 2.0 MHz beat, zero Doppler: range bin 2.0e6/10e6*256 = 51.2 -> 51,
        // Doppler bin 128/2 = 64.
        let cfg = small_config();
        let frame = tone_frame(&cfg, 2.0e6, 0.0);
        let map = compute_range_doppler(&frame, &cfg).unwrap();
        let (d, r, _) = map.peak();
        assert_eq!((d, r), (64, 51));
    }

    #[test]
    fn all_zero_frame_gives_all_zero_map() {
        let cfg = small_config();
        let frame = ComplexFrame::zeros(cfg.chirps_per_frame, cfg.samples_per_chirp);
        let map = compute_range_doppler(&frame, &cfg).unwrap();
        assert!(map.magnitudes().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn doppler_peak_for_3mps_target() {
        // v = 3 m/s -> f_d = 2v/lambda; offset = round(v / velocity_resolution) = 20.
        let cfg = small_config();
        let frame = tone_frame(&cfg, 2.0e6, cfg.doppler_frequency_hz(3.0));
        let map = compute_range_doppler(&frame, &cfg).unwrap();
        let (d, r, _) = map.peak();
        assert_eq!(r, 51);
        assert_eq!(d, 64 + (3.0 / cfg.velocity_resolution_mps()).round() as usize);
        assert_eq!(d, 84);
    }

    #[test]
    fn on_grid_tone_peaks_exactly_at_formula_bin() {
        let cfg = small_config();
        // Exactly on-grid: f_b = 40 * f_s / N, f_d = 12 / (N_c * T_r).
        let beat = 40.0 * cfg.sampling_rate_hz / cfg.samples_per_chirp as f64;
        let doppler = 12.0 / (cfg.chirps_per_frame as f64 * cfg.chirp_repetition_interval_s);
        let frame = tone_frame(&cfg, beat, doppler);
        let map = compute_range_doppler(&frame, &cfg).unwrap();
        let (d, r, _) = map.peak();
        assert_eq!((d, r), (64 + 12, 40));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let cfg = small_config();
        let frame = ComplexFrame::zeros(4, 8);
        assert!(matches!(compute_range_doppler(&frame, &cfg), Err(RadarError::Dimension(_))));
    }

    #[test]
    fn hann_window_keeps_peak_location() {
        let cfg = small_config();
        let frame = tone_frame(&cfg, 2.0e6, cfg.doppler_frequency_hz(3.0));
        let map = compute_range_doppler_with(&frame, &cfg, FftWindow::Hann).unwrap();
        let (d, r, _) = map.peak();
        assert_eq!((d, r), (84, 51));
    }

    #[test]
    fn model_input_is_min_max_scaled_and_monotone() {
        let map = RangeDopplerMap::new(vec![0.0, 1.0, 4.0, 2.0, 7.0, 3.0], 2, 3, 0.19, 0.15, 1)
            .unwrap();
        let out = to_model_input(&map);
        assert_eq!(out[0], 0.0);
        let hi = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(hi, 1.0);
        // log1p + affine scaling preserve the cell ordering
        let mut idx: Vec<usize> = (0..6).collect();
        idx.sort_by(|&a, &b| map.magnitudes()[a].partial_cmp(&map.magnitudes()[b]).unwrap());
        for pair in idx.windows(2) {
            assert!(out[pair[0]] <= out[pair[1]]);
        }
    }

    #[test]
    fn model_input_constant_map_is_all_zero() {
        let map = RangeDopplerMap::new(vec![5.0; 12], 3, 4, 0.19, 0.15, 1).unwrap();
        assert!(to_model_input(&map).iter().all(|&v| v == 0.0));
        let zero = RangeDopplerMap::new(vec![0.0; 12], 3, 4, 0.19, 0.15, 1).unwrap();
        assert!(to_model_input(&zero).iter().all(|&v| v == 0.0));
    }
}
