use serde::{Deserialize, Serialize};

use super::processing::RangeDopplerMap;
use super::RadarError;

/// 2-D cell-averaging CFAR with square guard/training rings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfarConfig {
    /// Guard cells on each side of the cell under test, per axis.
    pub guard_cells: usize,
    /// Training cells beyond the guard ring on each side, per axis.
    pub training_cells: usize,
    pub probability_of_false_alarm: f64,
}

impl Default for CfarConfig {
    fn default() -> Self {
        Self { guard_cells: 2, training_cells: 4, probability_of_false_alarm: 1e-3 }
    }
}

impl CfarConfig {
    /// Full window side length: `2 (guard + training) + 1`.
    pub fn window(&self) -> usize {
        2 * (self.guard_cells + self.training_cells) + 1
    }

    /// Training cells in the window: full square minus the guard block.
    pub fn training_cell_count(&self) -> usize {
        let g = 2 * self.guard_cells + 1;
        self.window() * self.window() - g * g
    }

    /// CA-CFAR scaling `alpha = N_t (p_fa^(-1/N_t) - 1)`.
    pub fn alpha(&self) -> f64 {
        let n = self.training_cell_count() as f64;
        n * (self.probability_of_false_alarm.powf(-1.0 / n) - 1.0)
    }

    pub fn validate(&self, rows: usize, cols: usize) -> Result<(), RadarError> {
        if self.training_cells < 1 {
            return Err(RadarError::Cfar("training_cells must be >= 1".into()));
        }
        let pfa = self.probability_of_false_alarm;
        if !(pfa > 0.0 && pfa < 1.0) {
            return Err(RadarError::Cfar(format!("p_fa must lie in (0, 1), got {pfa}")));
        }
        let w = self.window();
        if w > rows || w > cols {
            return Err(RadarError::CfarWindow { window: w, rows, cols });
        }
        Ok(())
    }
}

/// One cell that exceeded its CFAR threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub doppler_bin: usize,
    pub range_bin: usize,
    pub cell_value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Default)]
pub struct DetectionList {
    pub detections: Vec<Detection>,
}

impl DetectionList {
    /// (doppler_bin, range_bin) pairs, for set comparisons.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.detections.iter().map(|d| (d.doppler_bin, d.range_bin)).collect()
    }
}

/// Cell-averaging CFAR over the full map.
///
/// For each cell where the whole window fits, the threshold is
/// `alpha x mean(training cells)`; the cell is detected iff its value is
/// strictly greater. Border cells where the window does not fit are never
/// detected. Window sums use a summed-area table; the per-cell brute-force
/// oracle in the tests recomputes the same quantity independently.
pub fn cfar_2d(map: &RangeDopplerMap, cfg: &CfarConfig) -> Result<DetectionList, RadarError> {
    let (rows, cols) = (map.doppler_bins(), map.range_bins());
    cfg.validate(rows, cols)?;

    // sat[(r+1)*(cols+1) + c+1] = sum of map[0..=r][0..=c]
    let stride = cols + 1;
    let mut sat = vec![0.0f64; (rows + 1) * stride];
    for r in 0..rows {
        let mut row_sum = 0.0;
        for c in 0..cols {
            row_sum += map.get(r, c);
            sat[(r + 1) * stride + c + 1] = sat[r * stride + c + 1] + row_sum;
        }
    }
    let rect = |r0: usize, c0: usize, r1: usize, c1: usize| -> f64 {
        // inclusive corners
        sat[(r1 + 1) * stride + c1 + 1] - sat[r0 * stride + c1 + 1] - sat[(r1 + 1) * stride + c0]
            + sat[r0 * stride + c0]
    };

    let reach = cfg.guard_cells + cfg.training_cells;
    let g = cfg.guard_cells;
    let n_t = cfg.training_cell_count() as f64;
    let alpha = cfg.alpha();

    let mut detections = Vec::new();
    for r in reach..rows - reach {
        for c in reach..cols - reach {
            let window_sum = rect(r - reach, c - reach, r + reach, c + reach);
            let guard_sum = rect(r - g, c - g, r + g, c + g);
            let training_mean = (window_sum - guard_sum) / n_t;
            let threshold = alpha * training_mean;
            let value = map.get(r, c);
            if value > threshold {
                detections.push(Detection {
                    doppler_bin: r,
                    range_bin: c,
                    cell_value: value,
                    threshold,
                });
            }
        }
    }
    Ok(DetectionList { detections })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::keyed_rng;
    use rand::Rng;

    fn map_from(values: Vec<f64>, rows: usize, cols: usize) -> RangeDopplerMap {
        RangeDopplerMap::new(values, rows, cols, 0.19, 0.15, rows / 2).unwrap()
    }

    /// Independent per-cell oracle: walks the window ring explicitly.
    pub(crate) fn cfar_2d_brute_force(map: &RangeDopplerMap, cfg: &CfarConfig) -> Vec<(usize, usize)> {
        let (rows, cols) = (map.doppler_bins(), map.range_bins());
        let reach = (cfg.guard_cells + cfg.training_cells) as isize;
        let g = cfg.guard_cells as isize;
        let mut out = Vec::new();
        for r in 0..rows as isize {
            for c in 0..cols as isize {
                if r - reach < 0 || r + reach >= rows as isize || c - reach < 0 || c + reach >= cols as isize {
                    continue;
                }
                let mut sum = 0.0;
                let mut count = 0usize;
                for dr in -reach..=reach {
                    for dc in -reach..=reach {
                        if dr.abs() <= g && dc.abs() <= g {
                            continue; // guard block, including the cell under test
                        }
                        sum += map.get((r + dr) as usize, (c + dc) as usize);
                        count += 1;
                    }
                }
                let n_t = count as f64;
                let alpha = n_t * (cfg.probability_of_false_alarm.powf(-1.0 / n_t) - 1.0);
                let threshold = alpha * sum / n_t;
                if map.get(r as usize, c as usize) > threshold {
                    out.push((r as usize, c as usize));
                }
            }
        }
        out
    }

    #[test]
    fn all_zero_map_has_no_detections() {
        let map = map_from(vec![0.0; 32 * 32], 32, 32);
        let dets = cfar_2d(&map, &CfarConfig::default()).unwrap();
        assert!(dets.detections.is_empty());
    }

    #[test]
    fn strong_cell_in_unit_noise_is_detected() {
        let mut rng = keyed_rng(&[0xcf, 1]);
        let mut values: Vec<f64> = (0..32 * 32).map(|_| rng.gen_range(0.5..1.5)).collect();
        values[15 * 32 + 17] = 50.0;
        let map = map_from(values, 32, 32);
        let cfg = CfarConfig { guard_cells: 1, training_cells: 4, probability_of_false_alarm: 1e-3 };
        let dets = cfar_2d(&map, &cfg).unwrap();
        assert!(dets.cells().contains(&(15, 17)));
        // agrees with the brute-force oracle
        assert_eq!(dets.cells(), cfar_2d_brute_force(&map, &cfg));
    }

    #[test]
    fn detections_scale_invariant() {
        let mut rng = keyed_rng(&[0xcf, 2]);
        let mut values: Vec<f64> = (0..32 * 32).map(|_| rng.gen_range(0.1..2.0)).collect();
        values[10 * 32 + 10] = 40.0;
        values[20 * 32 + 25] = 35.0;
        let map = map_from(values, 32, 32);
        let cfg = CfarConfig::default();
        let base = cfar_2d(&map, &cfg).unwrap().cells();
        assert!(!base.is_empty());
        for c in [0.25, 4.0, 7.3] {
            assert_eq!(cfar_2d(&map.scaled(c), &cfg).unwrap().cells(), base, "scale {c}");
        }
    }

    #[test]
    fn border_cells_never_detected() {
        let mut values = vec![0.01; 32 * 32];
        // huge values where the window cannot fit
        values[0] = 1e9;
        values[3 * 32 + 31] = 1e9;
        let map = map_from(values, 32, 32);
        let cfg = CfarConfig { guard_cells: 2, training_cells: 4, probability_of_false_alarm: 1e-3 };
        let dets = cfar_2d(&map, &cfg).unwrap();
        assert!(dets.detections.is_empty());
    }

    #[test]
    fn window_larger_than_map_rejected() {
        let map = map_from(vec![1.0; 8 * 8], 8, 8);
        let cfg = CfarConfig { guard_cells: 2, training_cells: 4, probability_of_false_alarm: 1e-3 };
        assert!(matches!(cfar_2d(&map, &cfg), Err(RadarError::CfarWindow { .. })));
    }

    #[test]
    fn invalid_pfa_rejected() {
        let map = map_from(vec![1.0; 32 * 32], 32, 32);
        for pfa in [0.0, 1.0, -0.5] {
            let cfg = CfarConfig { probability_of_false_alarm: pfa, ..CfarConfig::default() };
            assert!(cfar_2d(&map, &cfg).is_err());
        }
    }

    #[test]
    fn every_detection_exceeds_its_threshold() {
        let mut rng = keyed_rng(&[0xcf, 3]);
        let values: Vec<f64> = (0..32 * 32).map(|_| rng.gen_range(0.0..3.0)).collect();
        let map = map_from(values, 32, 32);
        let dets = cfar_2d(&map, &CfarConfig::default()).unwrap();
        for d in &dets.detections {
            assert!(d.cell_value > d.threshold);
        }
    }

    #[test]
    fn matches_brute_force_oracle_on_random_maps() {
        let mut rng = keyed_rng(&[0xcf, 4]);
        let configs = [
            CfarConfig { guard_cells: 0, training_cells: 1, probability_of_false_alarm: 0.05 },
            CfarConfig { guard_cells: 1, training_cells: 3, probability_of_false_alarm: 1e-2 },
            CfarConfig { guard_cells: 2, training_cells: 4, probability_of_false_alarm: 1e-3 },
        ];
        for cfg in configs {
            for _ in 0..20 {
                let values: Vec<f64> = (0..32 * 32)
                    .map(|_| {
                        let v: f64 = rng.gen_range(0.0..1.0);
                        if rng.gen::<f64>() < 0.01 {
                            v * 100.0
                        } else {
                            v
                        }
                    })
                    .collect();
                let map = map_from(values, 32, 32);
                assert_eq!(cfar_2d(&map, &cfg).unwrap().cells(), cfar_2d_brute_force(&map, &cfg));
            }
        }
    }
}
