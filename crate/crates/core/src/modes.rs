//! Nonlinear longitudinal modes: periodic orbits of the projected system,
//! found by Newton's method on the reversible-orbit residual and continued
//! along each branch.
//!
//! With zero initial velocity the flow is even in time, so an orbit closes
//! with period T exactly when the velocity vanishes again at T/2. The
//! resulting n-dimensional system in Y0 is square and generically regular,
//! unlike the full transfer-map fixed-point iteration whose Jacobian is
//! singular along the flow direction. The transfer-map iteration is kept as
//! an alternative for cross-checks.

use crate::dynamics::{self, State};
use crate::galerkin::{GalerkinSystem, Spectrum};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModeError {
    #[error("branch index {k} outside 1..={n}")]
    BranchOutOfRange { k: usize, n: usize },
    #[error("no eigenpair with dominant component {0}")]
    NoDominantEigenpair(usize),
    #[error("Newton did not converge after {iters} iterations (residual {residual:.3e})")]
    NewtonDiverged { iters: usize, residual: f64 },
    #[error("Newton Jacobian is rank deficient")]
    JacobianSingular,
    #[error("full-period closure check failed: {closure:.3e} > {limit:.3e}")]
    ClosureFailed { closure: f64, limit: f64 },
    #[error(transparent)]
    Dynamics(#[from] dynamics::DynamicsError),
    #[error("branch file parse failure: {0}")]
    Persistence(#[from] serde_json::Error),
    #[error("branch file fingerprint {found} does not match parameters {expected}")]
    FingerprintMismatch { found: String, expected: String },
}

/// A converged periodic longitudinal mode with zero initial velocity.
#[derive(Debug, Clone)]
pub struct PeriodicMode {
    /// Branch index: dominant Fourier component of the family.
    pub k: usize,
    /// Period (s).
    pub period: f64,
    /// Initial coefficients, V(0) = 0 (m).
    pub y0: DVector<f64>,
    /// Total energy (J).
    pub energy: f64,
    /// Max minus min of y(x, t) over one period (m).
    pub delta: f64,
    /// Final Newton residual norm |V(T/2)|.
    pub residual: f64,
    /// Truncation dimension.
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    TMaxReached,
    EnergyCapReached,
    StepUnderflow,
    PointBudget,
}

/// Ordered family of modes for one branch index.
#[derive(Debug, Clone)]
pub struct Branch {
    pub k: usize,
    pub n: usize,
    pub modes: Vec<PeriodicMode>,
    pub fingerprint: String,
    pub stop: StopReason,
}

#[derive(Debug, Clone, Copy)]
pub struct ModeOptions {
    /// Integrator tolerance for Newton flows.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative full-period closure bound, scaled by |Y0|.
    pub closure_rel: f64,
}

impl Default for ModeOptions {
    fn default() -> Self {
        Self {
            tol: dynamics::DEFAULT_TOL,
            max_iter: 25,
            closure_rel: 1e-9,
        }
    }
}

/// Seed from the linear spectrum: alpha times the mass-normalized
/// eigenvector dominated by component k, period guess 2π/√λ.
pub fn seed_linear(
    system: &GalerkinSystem,
    spectrum: &Spectrum,
    k: usize,
    alpha: f64,
) -> Result<(DVector<f64>, f64), ModeError> {
    if k == 0 || k > system.n {
        return Err(ModeError::BranchOutOfRange { k, n: system.n });
    }
    let (lam, u) = spectrum
        .branch_eigenpair(k)
        .ok_or(ModeError::NoDominantEigenpair(k))?;
    Ok((u * alpha, 2.0 * std::f64::consts::PI / lam.sqrt()))
}

fn dominant_index(y0: &DVector<f64>) -> Option<usize> {
    y0.iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(i, _)| i + 1)
}

fn velocity_scale(y0: &DVector<f64>, t_period: f64) -> f64 {
    (y0.norm() * 2.0 * std::f64::consts::PI / t_period).max(1e-14)
}

/// Residual threshold: relative to the orbit's velocity scale with an
/// absolute floor at the integrator noise level, so convergence onto the
/// rest state is recognized too.
fn newton_tol(y0: &DVector<f64>, t_period: f64) -> f64 {
    1e-11 * velocity_scale(y0, t_period) + 1e-13
}

/// Scaled phase-space distance: velocities weighted by T/2π so both blocks
/// carry length units.
fn closure_norm(dy: &DVector<f64>, dv: &DVector<f64>, t_period: f64) -> f64 {
    let w = t_period / (2.0 * std::f64::consts::PI);
    (dy.norm_squared() + (dv * w).norm_squared()).sqrt()
}

fn verify_and_build(
    system: &GalerkinSystem,
    k: usize,
    t_period: f64,
    y0: DVector<f64>,
    residual: f64,
    opts: &ModeOptions,
) -> Result<PeriodicMode, ModeError> {
    // independent full-period closure at a twice tighter tolerance
    let (y1, v1) = dynamics::transfer_map(
        system,
        &y0,
        &DVector::zeros(system.n),
        t_period,
        (opts.tol / 2.0).max(1e-13),
    )?;
    let closure = closure_norm(&(&y1 - &y0), &v1, t_period);
    let limit = opts.closure_rel * y0.norm() + 1e-11;
    if closure > limit {
        return Err(ModeError::ClosureFailed { closure, limit });
    }
    let energy = dynamics::total_energy(system, &State::new(0.0, y0.clone(), DVector::zeros(system.n)));
    let delta = compute_delta(system, &y0, t_period, opts.tol)?;
    Ok(PeriodicMode {
        k,
        period: t_period,
        y0,
        energy,
        delta,
        residual,
        n: system.n,
    })
}

/// Max minus min of y(x, t) on a 512-point space grid over 256 samples of
/// one period.
fn compute_delta(
    system: &GalerkinSystem,
    y0: &DVector<f64>,
    t_period: f64,
    tol: f64,
) -> Result<f64, ModeError> {
    if y0.norm() == 0.0 {
        return Ok(0.0);
    }
    let traj = dynamics::integrate(
        system,
        &State::new(0.0, y0.clone(), DVector::zeros(system.n)),
        t_period,
        tol.max(1e-10),
        256,
    )?;
    let nx = 512;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for st in &traj.states {
        for i in 1..nx {
            let x = system.span * i as f64 / nx as f64;
            let mut y = 0.0;
            for (j, &wk) in system.wavenumbers.iter().enumerate() {
                y += st.y[j] * (wk * x).sin();
            }
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    Ok(hi - lo)
}

/// Newton iteration only: converged initial coefficients and the final
/// residual, without metrics or closure verification.
fn newton_solve(
    system: &GalerkinSystem,
    t_period: f64,
    guess: &DVector<f64>,
    opts: &ModeOptions,
) -> Result<(DVector<f64>, f64), ModeError> {
    let mut y0 = guess.clone();
    let mut residual = f64::INFINITY;
    for iter in 0..=opts.max_iter {
        let flow = dynamics::half_period_with_jacobian(system, &y0, t_period, opts.tol)?;
        residual = flow.v_half.norm();
        if residual <= newton_tol(&y0, t_period) {
            return Ok((y0, residual));
        }
        if iter == opts.max_iter {
            break;
        }
        let lu = flow.jac_v.clone().lu();
        let step = lu
            .solve(&(-&flow.v_half))
            .ok_or(ModeError::JacobianSingular)?;
        if !step.iter().all(|v| v.is_finite()) {
            return Err(ModeError::JacobianSingular);
        }
        y0 += step;
    }
    Err(ModeError::NewtonDiverged {
        iters: opts.max_iter,
        residual,
    })
}

/// Fixed-period Newton on the reversible residual V(T/2; Y0) = 0.
pub fn newton_mode(
    system: &GalerkinSystem,
    k: usize,
    t_period: f64,
    guess: &DVector<f64>,
    opts: &ModeOptions,
) -> Result<PeriodicMode, ModeError> {
    let (y0, residual) = newton_solve(system, t_period, guess, opts)?;
    verify_and_build(system, k, t_period, y0, residual, opts)
}

/// Amplitude-pinned Newton: the k-th component of Y0 is held fixed and the
/// period joins the unknowns. Regular even at the linear limit, where the
/// fixed-period system degenerates toward the zero solution.
pub fn newton_mode_pinned(
    system: &GalerkinSystem,
    k: usize,
    pinned: f64,
    guess: &DVector<f64>,
    t_guess: f64,
    opts: &ModeOptions,
) -> Result<(DVector<f64>, f64), ModeError> {
    let n = system.n;
    let mut y0 = guess.clone();
    y0[k - 1] = pinned;
    let mut t_period = t_guess;
    let mut residual = f64::INFINITY;
    for iter in 0..=opts.max_iter {
        let flow = dynamics::half_period_with_jacobian(system, &y0, t_period, opts.tol)?;
        residual = flow.v_half.norm();
        if residual <= newton_tol(&y0, t_period) {
            return Ok((y0, t_period));
        }
        if iter == opts.max_iter {
            break;
        }
        // d/dT of V(T/2) is half the acceleration at the half-period point
        let dv_dt = system.acceleration(&flow.y_half) * 0.5;
        let mut jac = DMatrix::zeros(n, n);
        let mut col = 0;
        for j in 0..n {
            if j == k - 1 {
                continue;
            }
            jac.set_column(col, &flow.jac_v.column(j));
            col += 1;
        }
        jac.set_column(n - 1, &dv_dt);
        let lu = jac.lu();
        let step = lu
            .solve(&(-&flow.v_half))
            .ok_or(ModeError::JacobianSingular)?;
        if !step.iter().all(|v| v.is_finite()) {
            return Err(ModeError::JacobianSingular);
        }
        let mut col = 0;
        for j in 0..n {
            if j == k - 1 {
                continue;
            }
            y0[j] += step[col];
            col += 1;
        }
        t_period += step[n - 1];
        if !(t_period.is_finite() && t_period > 0.0) {
            return Err(ModeError::JacobianSingular);
        }
    }
    Err(ModeError::NewtonDiverged {
        iters: opts.max_iter,
        residual,
    })
}

/// Transfer-map Newton iteration on Φ_T fixed points with a least-squares
/// step (the Jacobian of Φ_T - I is singular along the flow, so the plain
/// inverse does not exist). Returns the fixed point (Y0, V0); the converged
/// orbit may carry a small phase shift relative to the even-in-time
/// anchoring. Kept for cross-checks of the reversible formulation.
pub fn newton_mode_transfer(
    system: &GalerkinSystem,
    t_period: f64,
    guess_y: &DVector<f64>,
    guess_v: &DVector<f64>,
    opts: &ModeOptions,
) -> Result<(DVector<f64>, DVector<f64>), ModeError> {
    let n = system.n;
    let mut y0 = guess_y.clone();
    let mut v0 = guess_v.clone();
    let mut residual = f64::INFINITY;
    for iter in 0..=opts.max_iter {
        let (y1, v1, jac) = dynamics::full_period_jacobian(system, &y0, &v0, t_period, opts.tol)?;
        let mut r = DVector::zeros(2 * n);
        for i in 0..n {
            r[i] = y1[i] - y0[i];
            r[n + i] = v1[i] - v0[i];
        }
        residual = r.norm();
        if residual <= 1e-10 * y0.norm() + 1e-12 {
            return Ok((y0, v0));
        }
        if iter == opts.max_iter {
            break;
        }
        let m = jac - DMatrix::identity(2 * n, 2 * n);
        let svd = m.svd(true, true);
        let step = svd
            .solve(&(-r), 1e-10)
            .map_err(|_| ModeError::JacobianSingular)?;
        for i in 0..n {
            y0[i] += step[i];
            v0[i] += step[n + i];
        }
    }
    Err(ModeError::NewtonDiverged {
        iters: opts.max_iter,
        residual,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct BranchOptions {
    /// Continuation ceiling on the period; None derives it from energy_cap.
    pub t_max: Option<f64>,
    /// Initial/maximal period increment; None means 1% of the linear period.
    pub dt0: Option<f64>,
    /// Smallest useful period increment (s).
    pub dt_min: f64,
    /// Stop once a mode's energy exceeds this (J).
    pub energy_cap: Option<f64>,
    /// Seed amplitude chosen so the seed energy is about this (J).
    pub seed_energy: f64,
    pub max_points: usize,
    pub mode_opts: ModeOptions,
}

impl Default for BranchOptions {
    fn default() -> Self {
        Self {
            t_max: None,
            dt0: None,
            dt_min: 1e-4,
            energy_cap: None,
            seed_energy: 1e4,
            max_points: 400,
            mode_opts: ModeOptions::default(),
        }
    }
}

/// Leap step for a stalled amplitude march: re-predicts from the most
/// recent pair of points separated by a healthy amplitude gap (the stalled
/// tail of tiny steps carries no usable slope) and pins amplitudes well
/// beyond the stall. Succeeds only on a family carrying that amplitude.
fn amp_leap(
    system: &GalerkinSystem,
    k: usize,
    modes: &[PeriodicMode],
    opts: &ModeOptions,
) -> Option<PeriodicMode> {
    let last = modes.last()?;
    let a_last = last.y0[k - 1];
    let base = modes
        .iter()
        .rev()
        .find(|m| (a_last - m.y0[k - 1]).abs() >= (0.03 * a_last.abs()).max(0.02))?;
    let a_base = base.y0[k - 1];
    let leap_opts = ModeOptions {
        max_iter: 25,
        ..*opts
    };
    for factor in [1.0, 2.0, 4.0] {
        let da = (0.05 * a_last.abs() + 0.02) * factor;
        let r = da / (a_last - a_base);
        let guess = &last.y0 + (&last.y0 - &base.y0) * r;
        let t_guess = last.period + (last.period - base.period) * r;
        if let Ok((y0, t_new)) = newton_mode_pinned(system, k, a_last + da, &guess, t_guess, &leap_opts)
        {
            if t_new > last.period
                && dominant_index(&y0) == Some(k)
                && (t_new - last.period) >= 0.05 * (t_guess - last.period).max(0.0)
            {
                if let Ok(mode) = verify_and_build(system, k, t_new, y0, 0.0, &leap_opts) {
                    if mode.energy > last.energy && mode.delta >= last.delta {
                        return Some(mode);
                    }
                }
            }
        }
    }
    None
}

/// Builds the branch of k-th modes by continuation.
///
/// The first point is solved with the pinned-amplitude formulation (the
/// fixed-period Newton collapses to the zero solution at the linear limit).
/// The march then increments the period with a secant predictor, halving
/// the increment on failure; a converged point is accepted only if the
/// period and energy grow and the corrector displacement stays comparable
/// to the predictor step, which rejects hops onto a coexisting orbit
/// family. When the period increment underflows, the march switches to
/// pinned-amplitude steps (which parametrize the family smoothly through
/// near-tangencies with other families) and periodically re-probes the
/// period stepper.
pub fn continue_branch(
    system: &GalerkinSystem,
    spectrum: &Spectrum,
    k: usize,
    fingerprint: &str,
    opts: &BranchOptions,
) -> Result<Branch, ModeError> {
    let n = system.n;
    let (lam, _) = spectrum
        .branch_eigenpair(k)
        .ok_or(ModeError::NoDominantEigenpair(k))?;
    let t0 = 2.0 * std::f64::consts::PI / lam.sqrt();
    let alpha = (2.0 * opts.seed_energy / lam).sqrt();
    let (seed, _) = seed_linear(system, spectrum, k, alpha)?;
    let dt_target = opts.dt0.unwrap_or(0.01 * t0);
    let t_max = opts.t_max.unwrap_or(f64::MAX);
    let mopts = opts.mode_opts;
    // stepping probes fail fast; accepted points are re-verified below
    let step_opts = ModeOptions {
        max_iter: 12,
        ..mopts
    };
    let trace = std::env::var_os("NARROWS_TRACE").is_some();

    // first branch point at the seed amplitude
    if trace {
        eprintln!("[branch {k}] seeding at T0 = {t0:.6}, alpha = {alpha:.5}");
    }
    let (y_first, t_first) =
        newton_mode_pinned(system, k, seed[k - 1], &seed, t0 * (1.0 + 1e-9), &mopts)?;
    let first = verify_and_build(system, k, t_first, y_first, 0.0, &mopts)?;
    let mut da = first.y0[k - 1].abs();
    let mut modes = vec![first];

    // The pinned-amplitude stepper is primary: it parametrizes each family
    // smoothly through near-tangencies with coexisting families, where
    // period steps cannot discriminate between the two solutions. Where the
    // dominant amplitude folds along the family (even branches do this at
    // large energy) the amplitude stepper stalls and period stepping takes
    // over; the two steppers alternate on stalls and the march stops after
    // both stall back to back.
    let mut amp_mode = true;
    let mut dt = 4.0 * opts.dt_min;
    let mut stalls = 0usize;
    let mut stop = StopReason::PointBudget;

    while modes.len() < opts.max_points {
        let last = modes.last().expect("non-empty");
        if trace {
            eprintln!(
                "[branch {k}] pts={} T={:.6} E={:.4}MJ a={:.5} delta={:.3} mode={} dt={dt:.2e} da={da:.2e}",
                modes.len(),
                last.period,
                last.energy / 1e6,
                last.y0[k - 1],
                last.delta,
                if amp_mode { "amp" } else { "T" },
            );
        }
        if last.period >= t_max {
            stop = StopReason::TMaxReached;
            break;
        }
        if let Some(cap) = opts.energy_cap {
            if last.energy >= cap {
                stop = StopReason::EnergyCapReached;
                break;
            }
        }
        let prev = if modes.len() >= 2 {
            Some(&modes[modes.len() - 2])
        } else {
            None
        };

        if amp_mode {
            let a_cur = last.y0[k - 1];
            da = da.min(0.05 * a_cur.abs() + 0.02);
            let a_next = a_cur + da;
            let (guess, t_guess) = match prev {
                Some(p) if (a_cur - p.y0[k - 1]).abs() > 1e-14 => {
                    let r = da / (a_cur - p.y0[k - 1]);
                    (
                        &last.y0 + (&last.y0 - &p.y0) * r,
                        last.period + (last.period - p.period) * r,
                    )
                }
                _ => (&last.y0 * (a_next / a_cur), last.period),
            };
            let accepted =
                match newton_mode_pinned(system, k, a_next, &guess, t_guess, &step_opts) {
                    Ok((y0, t_new)) if t_new > last.period => {
                        // period-advance guard: where the dominant amplitude
                        // folds along the family, the predicted advance blows
                        // up while the found solution sits on another sheet
                        // with almost no advance
                        let advance_ok = t_guess <= last.period
                            || (t_new - last.period) >= 0.2 * (t_guess - last.period);
                        if advance_ok && dominant_index(&y0) == Some(k) {
                            verify_and_build(system, k, t_new, y0, 0.0, &mopts)
                                .ok()
                                .filter(|m| m.energy > last.energy && m.delta >= last.delta)
                        } else {
                            None
                        }
                    }
                    _ => None,
                };
            match accepted {
                Some(mode) => {
                    modes.push(mode);
                    da *= 1.4;
                    stalls = 0;
                }
                None => {
                    da /= 2.0;
                    if da < 1e-5 * a_cur.abs() + 1e-9 {
                        // before giving up on amplitude steps, leap over a
                        // possible tangle of families: pin an amplitude well
                        // past it, predicting with a wide-baseline secant
                        // that ignores the stalled tail
                        if let Some(mode) = amp_leap(system, k, &modes, &step_opts) {
                            modes.push(mode);
                            da = 0.02;
                            stalls = 0;
                            continue;
                        }
                        stalls += 1;
                        if stalls >= 2 {
                            stop = StopReason::StepUnderflow;
                            break;
                        }
                        amp_mode = false;
                        dt = 4.0 * opts.dt_min;
                    }
                }
            }
            continue;
        }

        let dt_step = dt.min(dt_target);
        let t_next = last.period + dt_step;
        let (guess, step_scale, a_pred, delta_pred) = match prev {
            Some(p) => {
                let fac = dt_step / (last.period - p.period);
                let dir = &last.y0 - &p.y0;
                (
                    &last.y0 + &dir * fac,
                    dir.norm() * fac,
                    last.y0[k - 1] + (last.y0[k - 1] - p.y0[k - 1]) * fac,
                    last.delta + (last.delta - p.delta) * fac,
                )
            }
            None => (
                last.y0.clone(),
                last.y0.norm() * 0.1 + 1e-3,
                last.y0[k - 1],
                last.delta,
            ),
        };
        let accepted = match newton_solve(system, t_next, &guess, &step_opts) {
            Ok((y0, _)) => {
                // family guards: the corrector must stay near the predictor
                // and keep the dominant component and the amplitude trend,
                // or it hopped onto a coexisting orbit family
                let disp = (&y0 - &guess).norm();
                if disp <= 1.5 * step_scale + 1e-5 * last.y0.norm() + 1e-6
                    && dominant_index(&y0) == Some(k)
                    && (y0[k - 1] - a_pred).abs() <= 0.05 * a_pred.abs() + 1e-4
                {
                    verify_and_build(system, k, t_next, y0, 0.0, &mopts)
                        .ok()
                        .filter(|m| {
                            m.energy > last.energy
                                && (m.delta - delta_pred).abs()
                                    <= 0.15 * delta_pred.abs() + 1e-4
                        })
                } else {
                    None
                }
            }
            Err(_) => None,
        };
        match accepted {
            Some(mode) => {
                modes.push(mode);
                dt = 2.0 * dt_step;
                stalls = 0;
            }
            None => {
                dt = dt_step / 2.0;
                if dt < opts.dt_min {
                    stalls += 1;
                    if stalls >= 2 {
                        stop = StopReason::StepUnderflow;
                        break;
                    }
                    amp_mode = true;
                    da = 0.01 * last.y0[k - 1].abs() + 1e-4;
                }
            }
        }
    }

    Ok(Branch {
        k,
        n,
        modes,
        fingerprint: fingerprint.to_string(),
        stop,
    })
}

/// Per-mode summary: energy in MJ, amplitude gap, dominant component,
/// midspan-symmetry flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeMetrics {
    pub energy_mj: f64,
    pub delta_m: f64,
    pub dominant: Option<usize>,
    pub symmetric: bool,
}

pub fn mode_metrics(system: &GalerkinSystem, mode: &PeriodicMode) -> ModeMetrics {
    let norm = mode.y0.norm();
    if norm == 0.0 {
        return ModeMetrics {
            energy_mj: 0.0,
            delta_m: 0.0,
            dominant: None,
            symmetric: true,
        };
    }
    let dominant = mode
        .y0
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(i, _)| i + 1);
    let mut symmetric = true;
    for j in (1..system.n).step_by(2) {
        // 0-based odd index = even component
        if mode.y0[j].abs() > 1e-6 * norm {
            symmetric = false;
        }
    }
    ModeMetrics {
        energy_mj: mode.energy / 1e6,
        delta_m: mode.delta,
        dominant,
        symmetric,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PointRecord {
    #[serde(rename = "T")]
    t: f64,
    #[serde(rename = "Y0")]
    y0: Vec<f64>,
    #[serde(rename = "energy_J")]
    energy_j: f64,
    delta_m: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct BranchFile {
    params_fingerprint: String,
    k: usize,
    n: usize,
    points: Vec<PointRecord>,
}

/// Serializes a branch to the persistence schema.
pub fn branch_to_json(branch: &Branch) -> String {
    let file = BranchFile {
        params_fingerprint: branch.fingerprint.clone(),
        k: branch.k,
        n: branch.n,
        points: branch
            .modes
            .iter()
            .map(|m| PointRecord {
                t: m.period,
                y0: m.y0.iter().cloned().collect(),
                energy_j: m.energy,
                delta_m: m.delta,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("branch serialize")
}

/// Loads a branch, validating the fingerprint against the current
/// parameters. Persisted points were closure-verified before saving.
pub fn branch_from_json(text: &str, expected_fingerprint: &str) -> Result<Branch, ModeError> {
    let file: BranchFile = serde_json::from_str(text)?;
    if file.params_fingerprint != expected_fingerprint {
        return Err(ModeError::FingerprintMismatch {
            found: file.params_fingerprint,
            expected: expected_fingerprint.to_string(),
        });
    }
    Ok(Branch {
        k: file.k,
        n: file.n,
        fingerprint: file.params_fingerprint,
        modes: file
            .points
            .into_iter()
            .map(|p| PeriodicMode {
                k: file.k,
                period: p.t,
                y0: DVector::from_vec(p.y0),
                energy: p.energy_j,
                delta: p.delta_m,
                residual: 0.0,
                n: file.n,
            })
            .collect(),
        stop: StopReason::TMaxReached,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cable;
    use crate::galerkin;
    use crate::params::default_tnb;

    fn setup(n: usize) -> (GalerkinSystem, Spectrum, String) {
        let params = default_tnb();
        let profile = cable::solve_cable_shape(&params, cable::DEFAULT_NODES).unwrap();
        let system = galerkin::assemble(&params, &profile, n).unwrap();
        let spectrum = system.linear_spectrum(n).unwrap();
        (system, spectrum, params.fingerprint())
    }

    #[test]
    fn seed_scaling_is_linear() {
        let (system, spectrum, _) = setup(10);
        let (y1, t1) = seed_linear(&system, &spectrum, 5, 0.5).unwrap();
        let (y2, t2) = seed_linear(&system, &spectrum, 5, 1.0).unwrap();
        assert_eq!(t1, t2);
        assert!((&y2 - &y1 * 2.0).norm() < 1e-14);
        assert!(seed_linear(&system, &spectrum, 0, 1.0).is_err());
        assert!(seed_linear(&system, &spectrum, 11, 1.0).is_err());
    }

    #[test]
    fn seed_period_matches_reference_for_branch_8() {
        let (system, spectrum, _) = setup(16);
        let (_, t_guess) = seed_linear(&system, &spectrum, 8, 1e-6).unwrap();
        assert!((t_guess - 1.72).abs() / 1.72 < 0.02, "T = {t_guess}");
    }

    #[test]
    fn newton_at_linear_period_collapses_to_zero() {
        // from a tiny seed at the linear period the fixed-T Newton finds the
        // rest state: energy goes to zero
        let (system, spectrum, _) = setup(10);
        let (lam, _) = spectrum.branch_eigenpair(3).unwrap();
        let alpha = (2.0 * 1e4 / lam).sqrt();
        let (seed, t_guess) = seed_linear(&system, &spectrum, 3, alpha).unwrap();
        let mode = newton_mode(&system, 3, t_guess, &seed, &ModeOptions::default()).unwrap();
        assert!(mode.energy < 1e4 * 1e-3, "energy {}", mode.energy);
    }

    #[test]
    fn first_branch_point_has_seed_energy_and_closes() {
        let (system, spectrum, fp) = setup(10);
        let opts = BranchOptions {
            max_points: 1,
            ..Default::default()
        };
        let branch = continue_branch(&system, &spectrum, 3, &fp, &opts).unwrap();
        let first = &branch.modes[0];
        assert!((first.energy - 1e4).abs() / 1e4 < 0.05, "E = {}", first.energy);
        // definition of a periodic orbit: the transfer map returns the point
        let (y1, v1) = dynamics::transfer_map(
            &system,
            &first.y0,
            &DVector::zeros(10),
            first.period,
            1e-12,
        )
        .unwrap();
        let c = closure_norm(&(&y1 - &first.y0), &v1, first.period);
        assert!(c < 1e-9 * first.y0.norm());
        // half-period velocity vanishes on the converged mode
        let vh = dynamics::half_period_velocity(&system, &first.y0, first.period, 1e-12).unwrap();
        assert!(vh.norm() < 1e-9 * velocity_scale(&first.y0, first.period));
    }

    #[test]
    fn branch_3_reaches_10_mj_with_monotone_energy() {
        let (system, spectrum, fp) = setup(10);
        let opts = BranchOptions {
            energy_cap: Some(10e6),
            max_points: 200,
            ..Default::default()
        };
        let branch = continue_branch(&system, &spectrum, 3, &fp, &opts).unwrap();
        assert!(branch.stop == StopReason::EnergyCapReached);
        let last = branch.modes.last().unwrap();
        assert!(last.energy >= 10e6);
        for w in branch.modes.windows(2) {
            assert!(w[1].period > w[0].period);
            assert!(w[1].energy > w[0].energy);
            assert!(w[1].delta > w[0].delta);
        }
        // odd branch: symmetric modes, dominant component 3, deck bent upward
        for m in &branch.modes {
            let metrics = mode_metrics(&system, m);
            assert!(metrics.symmetric);
            assert_eq!(metrics.dominant, Some(3));
        }
    }

    #[test]
    fn transfer_map_newton_finds_the_same_orbit() {
        let (system, spectrum, fp) = setup(10);
        let opts = BranchOptions {
            energy_cap: Some(2e6),
            max_points: 60,
            ..Default::default()
        };
        let branch = continue_branch(&system, &spectrum, 2, &fp, &opts).unwrap();
        let m = branch.modes.last().unwrap();
        let perturbed = &m.y0 * 1.000001;
        let (y_fix, v_fix) = newton_mode_transfer(
            &system,
            m.period,
            &perturbed,
            &DVector::zeros(10),
            &ModeOptions::default(),
        )
        .unwrap();
        // the fixed point sits on the same orbit, up to a small phase shift
        assert!(v_fix.norm() < 1e-5 * velocity_scale(&y_fix, m.period));
        let polished = newton_mode(&system, 2, m.period, &y_fix, &ModeOptions::default()).unwrap();
        assert!((&polished.y0 - &m.y0).norm() < 1e-8 * m.y0.norm());
    }

    #[test]
    fn zero_mode_metrics_are_degenerate() {
        let (system, _, _) = setup(6);
        let zero = PeriodicMode {
            k: 1,
            period: 1.0,
            y0: DVector::zeros(6),
            energy: 0.0,
            delta: 0.0,
            residual: 0.0,
            n: 6,
        };
        let metrics = mode_metrics(&system, &zero);
        assert_eq!(metrics.energy_mj, 0.0);
        assert_eq!(metrics.delta_m, 0.0);
        assert_eq!(metrics.dominant, None);
        assert!(metrics.symmetric);
    }

    #[test]
    fn branch_persistence_round_trip() {
        let (system, spectrum, fp) = setup(10);
        let opts = BranchOptions {
            max_points: 3,
            ..Default::default()
        };
        let branch = continue_branch(&system, &spectrum, 4, &fp, &opts).unwrap();
        let json = branch_to_json(&branch);
        let loaded = branch_from_json(&json, &fp).unwrap();
        assert_eq!(loaded.k, 4);
        assert_eq!(loaded.modes.len(), branch.modes.len());
        for (a, b) in loaded.modes.iter().zip(&branch.modes) {
            assert_eq!(a.period, b.period);
            assert_eq!(a.y0, b.y0);
            assert_eq!(a.energy, b.energy);
        }
        assert!(matches!(
            branch_from_json(&json, "deadbeef"),
            Err(ModeError::FingerprintMismatch { .. })
        ));
    }
}
