//! Torsional stability of longitudinal modes: the time-periodic torsional
//! linearization Ẅ + Ξ(t)W = 0, its monodromy matrix and characteristic
//! multipliers, the expansion rate, instability thresholds along a branch,
//! and the analytic two-component sufficient criteria.

use crate::cable::CableProfile;
use crate::dynamics::{self, State};
use crate::galerkin::GalerkinSystem;
use crate::modes::{self, Branch, ModeOptions, PeriodicMode};
use crate::ode::AdaptiveRk;
use crate::par::map_maybe_parallel;
use crate::params::BridgeParams;
use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FloquetError {
    #[error("torsional truncation {nu} exceeds the mode's basis {n}")]
    NuTooLarge { nu: usize, n: usize },
    #[error("torsional truncation must be at least 1")]
    NuZero,
    #[error("trajectory cache too coarse for interpolation: {0} samples")]
    CacheTooCoarse(usize),
    #[error("torsional mass block is not positive definite")]
    MassNotSpd,
    #[error(transparent)]
    Dynamics(#[from] dynamics::DynamicsError),
    #[error(transparent)]
    Mode(#[from] Box<modes::ModeError>),
    #[error("no expansion-rate crossing of 1 + {0:.1e} on the branch")]
    NoThresholdInRange(f64),
    #[error("branch has fewer than two points")]
    BranchTooShort,
}

#[derive(Debug, Clone, Copy)]
pub struct FloquetOptions {
    /// Integrator tolerance for the mode trajectory and the monodromy columns.
    pub tol: f64,
    /// Trajectory cache samples per period.
    pub samples: usize,
    /// Evaluate monodromy columns (and branch scans) in parallel.
    pub parallel: bool,
}

impl Default for FloquetOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            samples: 1024,
            parallel: true,
        }
    }
}

/// Time-periodic torsional linearization around one longitudinal mode:
/// evaluator of the symmetric matrix Ξ(t), backed by a dense cache of the
/// mode trajectory with high-order periodic interpolation.
pub struct TorsionalSystem<'a> {
    pub nu: usize,
    pub t_period: f64,
    system: &'a GalerkinSystem,
    /// Y(t_i) at samples + 1 uniform times spanning [0, T].
    cache: Vec<DVector<f64>>,
    chol_theta_nu: Cholesky<f64, nalgebra::Dyn>,
}

const INTERP_POINTS: usize = 8;

pub fn assemble_torsional<'a>(
    system: &'a GalerkinSystem,
    mode: &PeriodicMode,
    nu: usize,
    opts: &FloquetOptions,
) -> Result<TorsionalSystem<'a>, FloquetError> {
    if nu == 0 {
        return Err(FloquetError::NuZero);
    }
    if nu > system.n {
        return Err(FloquetError::NuTooLarge { nu, n: system.n });
    }
    if opts.samples < 2 * INTERP_POINTS {
        return Err(FloquetError::CacheTooCoarse(opts.samples));
    }
    let cache: Vec<DVector<f64>> = if mode.y0.norm() == 0.0 {
        vec![DVector::zeros(system.n); opts.samples + 1]
    } else {
        let traj = dynamics::integrate(
            system,
            &State::new(0.0, mode.y0.clone(), DVector::zeros(system.n)),
            mode.period,
            opts.tol.min(1e-10),
            opts.samples + 1,
        )?;
        traj.states.into_iter().map(|s| s.y).collect()
    };
    let sub = system.mass_theta.view((0, 0), (nu, nu)).clone_owned();
    let chol_theta_nu = Cholesky::new(sub).ok_or(FloquetError::MassNotSpd)?;
    Ok(TorsionalSystem {
        nu,
        t_period: mode.period,
        system,
        cache,
        chol_theta_nu,
    })
}

impl TorsionalSystem<'_> {
    /// Interpolated mode coefficients at arbitrary time (period-wrapped).
    pub fn y_at(&self, t: f64) -> DVector<f64> {
        let n_seg = self.cache.len() - 1;
        let h = self.t_period / n_seg as f64;
        let tau = t.rem_euclid(self.t_period);
        let base = (tau / h).floor() as isize - (INTERP_POINTS as isize / 2 - 1);
        let mut out = DVector::zeros(self.system.n);
        // barycentric-free Lagrange over a centered window, wrapped periodically
        let mut ts = [0.0f64; INTERP_POINTS];
        for (j, tj) in ts.iter_mut().enumerate() {
            *tj = (base + j as isize) as f64 * h;
        }
        for j in 0..INTERP_POINTS {
            let mut lj = 1.0;
            for m in 0..INTERP_POINTS {
                if m != j {
                    lj *= (tau - ts[m]) / (ts[j] - ts[m]);
                }
            }
            let idx = (base + j as isize).rem_euclid(n_seg as isize) as usize;
            out += &self.cache[idx] * lj;
        }
        out
    }

    /// Symmetric stiffness Ξ(t) of Ẅ + Ξ(t)W = 0, from the congruence
    /// L⁻¹ K(y(t)) L⁻ᵀ with L the Cholesky factor of the torsional mass.
    pub fn xi_at(&self, t: f64) -> DMatrix<f64> {
        let y = self.y_at(t);
        self.xi_of_y(&y)
    }

    fn xi_of_y(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let k = self.system.torsional_stiffness(y, self.nu);
        let l = self.chol_theta_nu.l();
        let x = l
            .solve_lower_triangular(&k)
            .expect("triangular solve")
            .transpose();
        let xi = l.solve_lower_triangular(&x).expect("triangular solve");
        (xi.clone() + xi.transpose()) * 0.5
    }
}

/// Transition matrix over one period, characteristic multipliers, and the
/// expansion rate.
#[derive(Debug, Clone)]
pub struct MonodromyResult {
    pub matrix: DMatrix<f64>,
    pub multipliers: Vec<Complex<f64>>,
    pub expansion_rate: f64,
    pub det_abs: f64,
    pub t_period: f64,
}

impl MonodromyResult {
    /// Largest relative defect of the multiplier set under inversion
    /// (a linear Hamiltonian period map has reciprocal multiplier pairs).
    pub fn reciprocal_pairing_defect(&self) -> f64 {
        self.multipliers
            .iter()
            .map(|lam| {
                let inv = 1.0 / lam;
                self.multipliers
                    .iter()
                    .map(|mu| (mu - inv).norm() / inv.norm().max(1e-300))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }

    /// Largest deviation of any multiplier modulus from 1.
    pub fn unit_circle_defect(&self) -> f64 {
        self.multipliers
            .iter()
            .map(|l| (l.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Columns are integrated in fixed chunks of this size so that parallel and
/// sequential runs perform identical arithmetic.
const COLUMN_CHUNK: usize = 4;

/// Integrates Ż = A(t)Z, A = [[0, I], [-Ξ(t), 0]], from every canonical
/// initial vector over one period; the endpoint columns form the transition
/// matrix.
pub fn monodromy(
    torsys: &TorsionalSystem<'_>,
    opts: &FloquetOptions,
) -> Result<MonodromyResult, FloquetError> {
    let nu = torsys.nu;
    let dim = 2 * nu;
    let chunks: Vec<usize> = (0..dim.div_ceil(COLUMN_CHUNK)).collect();
    let results: Vec<Result<Vec<(usize, Vec<f64>)>, FloquetError>> =
        map_maybe_parallel(opts.parallel, chunks, |chunk| {
            let first = chunk * COLUMN_CHUNK;
            let count = COLUMN_CHUNK.min(dim - first);
            // chunk state: `count` columns of dimension 2*nu
            let mut z = vec![0.0; count * dim];
            for (c, col) in (first..first + count).enumerate() {
                z[c * dim + col] = 1.0;
            }
            let rk = AdaptiveRk::new(opts.tol);
            rk.integrate(
                |t, z, dz| {
                    let xi = torsys.xi_at(t);
                    for c in 0..count {
                        let zc = &z[c * dim..(c + 1) * dim];
                        let dzc = &mut dz[c * dim..(c + 1) * dim];
                        dzc[..nu].copy_from_slice(&zc[nu..]);
                        for i in 0..nu {
                            let mut acc = 0.0;
                            for j in 0..nu {
                                acc -= xi[(i, j)] * zc[j];
                            }
                            dzc[nu + i] = acc;
                        }
                    }
                },
                0.0,
                torsys.t_period,
                &mut z,
            )
            .map_err(|e| FloquetError::Dynamics(e.into()))?;
            Ok((0..count)
                .map(|c| (first + c, z[c * dim..(c + 1) * dim].to_vec()))
                .collect())
        });

    let mut matrix = DMatrix::zeros(dim, dim);
    for chunk in results {
        for (col, vals) in chunk? {
            for i in 0..dim {
                matrix[(i, col)] = vals[i];
            }
        }
    }
    let multipliers: Vec<Complex<f64>> = matrix.complex_eigenvalues().iter().cloned().collect();
    let expansion_rate = expansion_rate(&multipliers, torsys.t_period);
    let det_abs = matrix.clone().lu().determinant().abs();
    Ok(MonodromyResult {
        matrix,
        multipliers,
        expansion_rate,
        det_abs,
        t_period: torsys.t_period,
    })
}

/// Largest per-second growth factor max_j |λ_j|^(1/T).
pub fn expansion_rate(multipliers: &[Complex<f64>], t_period: f64) -> f64 {
    multipliers
        .iter()
        .map(|l| l.norm())
        .fold(0.0f64, f64::max)
        .powf(1.0 / t_period)
}

/// Constant coefficients of the two-component torsional system at the rest
/// state, by direct quadrature of the projection formulas on the profile
/// grid (independent of the assembled tensors).
pub fn gamma_coefficients(params: &BridgeParams, profile: &CableProfile) -> (f64, f64) {
    let l = profile.span();
    let ell2 = params.half_width * params.half_width;
    let nodes = profile.nodes();
    let weights = profile.weights();
    let mut cos1 = 0.0; // ∫ cos²(πx/L)/ξ²
    let mut cos2 = 0.0; // ∫ cos²(2πx/L)/ξ²
    let mut sv1 = 0.0; // ∫ s'' sin(πx/L)/ξ³
    let mut m1 = 0.0; // ∫ (M/3 + 2mξ) sin²(πx/L)
    let mut m2 = 0.0;
    for (i, &x) in nodes.iter().enumerate() {
        let w = weights[i];
        let xi = profile.xi[i];
        let mu = params.deck_mass / 3.0 + 2.0 * params.cable_mass * xi;
        cos1 += w * (PI * x / l).cos().powi(2) / (xi * xi);
        cos2 += w * (2.0 * PI * x / l).cos().powi(2) / (xi * xi);
        sv1 += w * profile.spp[i] * (PI * x / l).sin() / (xi * xi * xi);
        m1 += w * mu * (PI * x / l).sin().powi(2);
        m2 += w * mu * (2.0 * PI * x / l).sin().powi(2);
    }
    let norm1 = ell2 * m1;
    let norm2 = ell2 * m2;
    let ae = params.cable_area * params.cable_young;
    let gamma1 = (params.torsional_rigidity * PI * PI / (2.0 * l)
        + 2.0 * PI * PI * ell2 * params.tension / (l * l) * cos1
        + 2.0 * ae * ell2 / params.cable_length * sv1 * sv1)
        / norm1;
    let gamma2 = (2.0 * params.torsional_rigidity * PI * PI / l
        + 8.0 * PI * PI * ell2 * params.tension / (l * l) * cos2)
        / norm2;
    (gamma1, gamma2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Inconclusive,
}

/// Zhukovskii criterion for one Hill equation z̈ + p(t)z = 0 with
/// T-periodic p: strong stability holds if the coefficient range fits
/// inside one interval [n²π²/T², (n+1)²π²/T²]. Sufficient only.
pub fn zhukovskii_test(p_samples: &[f64], t_period: f64) -> Verdict {
    assert!(
        p_samples.iter().all(|v| v.is_finite()),
        "non-finite coefficient samples"
    );
    let lo = p_samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = p_samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo < 0.0 {
        return Verdict::Inconclusive;
    }
    let unit = PI * PI / (t_period * t_period);
    let n = (lo / unit).sqrt().floor();
    if n * n * unit <= lo && hi <= (n + 1.0) * (n + 1.0) * unit {
        Verdict::Stable
    } else {
        Verdict::Inconclusive
    }
}

/// Two-component sufficient stability test: the residual off-diagonal
/// coupling is boxed by ±|χ12(t)|, so all the interpolated Hill families
/// χ_kk(t) + α χ12(t), α in [-1, 1], lie inside the envelopes
/// χ_kk ± |χ12|. Stable if both envelope families pass the Zhukovskii test
/// inside a single interval.
pub fn nu2_sufficient_stability(torsys: &TorsionalSystem<'_>) -> Verdict {
    assert_eq!(torsys.nu, 2, "criterion requires nu = 2");
    let n_samp = 2048;
    let mut env1 = Vec::with_capacity(2 * n_samp);
    let mut env2 = Vec::with_capacity(2 * n_samp);
    for i in 0..n_samp {
        let t = torsys.t_period * i as f64 / n_samp as f64;
        let xi = torsys.xi_at(t);
        let off = xi[(0, 1)].abs();
        env1.push(xi[(0, 0)] - off);
        env1.push(xi[(0, 0)] + off);
        env2.push(xi[(1, 1)] - off);
        env2.push(xi[(1, 1)] + off);
    }
    if zhukovskii_test(&env1, torsys.t_period) == Verdict::Stable
        && zhukovskii_test(&env2, torsys.t_period) == Verdict::Stable
    {
        Verdict::Stable
    } else {
        Verdict::Inconclusive
    }
}

/// First crossing of the expansion rate above 1 + tol on a branch.
#[derive(Debug, Clone)]
pub struct Threshold {
    pub k: usize,
    pub energy_j: f64,
    pub t_at_threshold: f64,
    pub delta_m: f64,
    pub bracket_low: PeriodicMode,
    pub bracket_high: PeriodicMode,
}

/// Expansion rate of every mode on a branch, in branch order.
pub fn branch_expansion_rates(
    system: &GalerkinSystem,
    branch: &Branch,
    nu: usize,
    opts: &FloquetOptions,
) -> Result<Vec<MonodromyResult>, FloquetError> {
    let modes: Vec<&PeriodicMode> = branch.modes.iter().collect();
    let results = map_maybe_parallel(opts.parallel, modes, |mode| {
        let seq = FloquetOptions {
            parallel: false,
            ..*opts
        };
        let torsys = assemble_torsional(system, mode, nu, &seq)?;
        monodromy(&torsys, &seq)
    });
    results.into_iter().collect()
}

/// Locates the instability threshold by bisecting in the period between the
/// first branch points that bracket ER = 1 + tol_instab, re-converging the
/// mode at each midpoint, until the energy bracket is below 1% relative.
pub fn find_threshold(
    system: &GalerkinSystem,
    branch: &Branch,
    nu: usize,
    tol_instab: f64,
    opts: &FloquetOptions,
) -> Result<Threshold, FloquetError> {
    if branch.modes.len() < 2 {
        return Err(FloquetError::BranchTooShort);
    }
    let rates = branch_expansion_rates(system, branch, nu, opts)?;
    // the threshold bracket is the last upward crossing of 1 + tol with no
    // later return below it: narrow instability tongues that open and close
    // again at higher energy are transients, not the loss of stability (the
    // bracket must have ER <= 1 + tol below and ER > 1 + tol above)
    let last_stable = rates
        .iter()
        .rposition(|r| r.expansion_rate <= 1.0 + tol_instab);
    let i = match last_stable {
        Some(i) if i + 1 < rates.len() => i,
        _ => return Err(FloquetError::NoThresholdInRange(tol_instab)),
    };
    let mut lo = branch.modes[i].clone();
    let mut hi = branch.modes[i + 1].clone();
    let mode_opts = ModeOptions {
        tol: opts.tol.min(dynamics::DEFAULT_TOL),
        ..ModeOptions::default()
    };
    while (hi.energy - lo.energy) > 0.01 * hi.energy {
        let t_mid = 0.5 * (lo.period + hi.period);
        let w = (t_mid - lo.period) / (hi.period - lo.period);
        let guess = &lo.y0 * (1.0 - w) + &hi.y0 * w;
        let mid = modes::newton_mode(system, branch.k, t_mid, &guess, &mode_opts)
            .map_err(|e| FloquetError::Mode(Box::new(e)))?;
        let seq = FloquetOptions {
            parallel: opts.parallel,
            ..*opts
        };
        let torsys = assemble_torsional(system, &mid, nu, &seq)?;
        let mono = monodromy(&torsys, &seq)?;
        if mono.expansion_rate > 1.0 + tol_instab {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mid_energy = 0.5 * (lo.energy + hi.energy);
    let mid_t = 0.5 * (lo.period + hi.period);
    let mid_delta = 0.5 * (lo.delta + hi.delta);
    Ok(Threshold {
        k: branch.k,
        energy_j: mid_energy,
        t_at_threshold: mid_t,
        delta_m: mid_delta,
        bracket_low: lo,
        bracket_high: hi,
    })
}
