//! Reference measurements for the collapsed Tacoma Narrows span, used by
//! the CLI report and the acceptance suite to gauge the pipeline.

/// Small-energy period of the longitudinal mode on each branch, k = 1..=10 (s).
pub const SMALL_ENERGY_PERIODS_S: [f64; 10] = [
    10.95, 7.67, 5.42, 3.75, 2.9, 2.41, 2.02, 1.72, 1.5, 1.32,
];

/// Instability thresholds per branch: (energy MJ, period s, amplitude gap m).
pub const THRESHOLDS: [(f64, f64, f64); 10] = [
    (38.0, 11.22, 5.8),
    (51.8, 8.46, 10.0),
    (15.5, 5.48, 6.5),
    (53.7, 3.97, 7.8),
    (74.1, 3.14, 6.9),
    (56.6, 2.53, 4.5),
    (91.4, 2.18, 5.2),
    (95.8, 1.86, 4.6),
    (87.1, 1.59, 3.8),
    (82.1, 1.38, 3.3),
];

/// Energy grid (MJ) of the reference expansion-rate table.
pub const ER_ENERGY_GRID_MJ: [f64; 7] = [2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0];

/// Expansion rates per branch on the energy grid; None marks entries the
/// reference leaves unavailable.
pub const EXPANSION_RATES: [[Option<f64>; 7]; 10] = [
    [
        Some(1.0),
        Some(1.0),
        Some(1.0662),
        None,
        None,
        None,
        None,
    ],
    [
        Some(1.0),
        Some(1.00365),
        Some(1.03904),
        None,
        None,
        None,
        None,
    ],
    [
        Some(1.00614),
        Some(1.02071),
        Some(1.02961),
        Some(1.08141),
        Some(1.20949),
        None,
        None,
    ],
    [Some(1.0), Some(1.0), Some(1.01287), None, None, None, None],
    [
        Some(1.0),
        Some(1.0),
        Some(1.00001),
        Some(1.01521),
        Some(1.50051),
        None,
        None,
    ],
    [
        Some(1.0),
        Some(1.0),
        Some(1.0),
        Some(1.09919),
        Some(1.16332),
        None,
        None,
    ],
    [
        Some(1.0),
        Some(1.0),
        Some(1.0),
        Some(1.0),
        Some(1.09852),
        Some(1.58567),
        Some(1.97158),
    ],
    [
        Some(1.0),
        Some(1.0),
        Some(1.0),
        Some(1.0),
        Some(1.00112),
        Some(1.66552),
        None,
    ],
    [
        Some(1.0),
        Some(1.0),
        Some(1.01322),
        Some(1.01353),
        Some(1.24852),
        Some(1.76429),
        Some(2.12488),
    ],
    [
        Some(1.0),
        Some(1.0),
        Some(1.0),
        Some(1.0),
        Some(1.25447),
        Some(1.73715),
        Some(2.05263),
    ],
];

/// Clearly supercritical spot checks: (branch, grid energy MJ, expansion rate).
pub const ER_SPOT_CHECKS: [(usize, f64, f64); 4] = [
    (5, 10.0, 1.50051),
    (7, 14.0, 1.97158),
    (9, 12.0, 1.76429),
    (10, 14.0, 2.05263),
];

/// The reference expansion-rate grid energies are consistent with the
/// reference thresholds only when rescaled by this factor (the thresholds
/// themselves are in true MJ, cross-validated by the amplitude column).
pub const ER_GRID_ENERGY_SCALE: f64 = 9.81;
