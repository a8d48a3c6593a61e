//! Time integration of the semi-discrete longitudinal system, the transfer
//! map, variational (sensitivity) flows, and conserved energy.

use crate::galerkin::GalerkinSystem;
use crate::ode::{AdaptiveRk, OdeError, StepStats};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Default integrator tolerance; chosen so characteristic multipliers are
/// stable to at least six digits under tolerance halving.
pub const DEFAULT_TOL: f64 = 1e-11;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("integration failure: {0}")]
    Ode(#[from] OdeError),
    #[error("tolerance {0:.3e} outside [1e-13, 1e-6]")]
    BadTolerance(f64),
    #[error("end time {t_end} not after start {t0}")]
    BadTimeSpan { t0: f64, t_end: f64 },
}

/// Phase-space state of the n-dimensional system.
#[derive(Debug, Clone)]
pub struct State {
    pub t: f64,
    pub y: DVector<f64>,
    pub v: DVector<f64>,
}

impl State {
    pub fn rest(n: usize) -> Self {
        Self {
            t: 0.0,
            y: DVector::zeros(n),
            v: DVector::zeros(n),
        }
    }

    pub fn new(t: f64, y: DVector<f64>, v: DVector<f64>) -> Self {
        Self { t, y, v }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected: usize,
    pub tol: f64,
}

/// Sampled trajectory with integrator statistics and the relative energy
/// drift over the integration window.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub stats: IntegratorStats,
    pub energy_drift: f64,
}

fn flat_rhs(system: &GalerkinSystem) -> impl Fn(f64, &[f64], &mut [f64]) + '_ {
    let n = system.n;
    move |_t, z, dz| {
        let y = DVector::from_column_slice(&z[..n]);
        let acc = system.acceleration(&y);
        dz[..n].copy_from_slice(&z[n..2 * n]);
        dz[n..2 * n].copy_from_slice(acc.as_slice());
    }
}

/// Integrates from `state0` to `t_end`, sampling `samples` equally spaced
/// states (endpoints included).
pub fn integrate(
    system: &GalerkinSystem,
    state0: &State,
    t_end: f64,
    tol: f64,
    samples: usize,
) -> Result<Trajectory, DynamicsError> {
    if !(1e-13..=1e-6).contains(&tol) {
        return Err(DynamicsError::BadTolerance(tol));
    }
    if t_end <= state0.t {
        return Err(DynamicsError::BadTimeSpan {
            t0: state0.t,
            t_end,
        });
    }
    let n = system.n;
    let mut z = vec![0.0; 2 * n];
    z[..n].copy_from_slice(state0.y.as_slice());
    z[n..].copy_from_slice(state0.v.as_slice());
    let sample_times: Vec<f64> = (0..samples.max(2))
        .map(|i| state0.t + (t_end - state0.t) * i as f64 / (samples.max(2) - 1) as f64)
        .collect();
    let mut states = Vec::with_capacity(sample_times.len());
    let rk = AdaptiveRk::new(tol);
    let stats: StepStats = rk.integrate_sampled(
        flat_rhs(system),
        state0.t,
        t_end,
        &mut z,
        &sample_times,
        |_, t, z| {
            states.push(State {
                t,
                y: DVector::from_column_slice(&z[..n]),
                v: DVector::from_column_slice(&z[n..2 * n]),
            });
        },
    )?;
    let e0 = total_energy(system, state0);
    let e1 = total_energy(system, states.last().expect("samples"));
    let energy_drift = (e1 - e0).abs() / e0.abs().max(1e-30);
    Ok(Trajectory {
        states,
        stats: IntegratorStats {
            steps: stats.steps,
            rejected: stats.rejected,
            tol,
        },
        energy_drift,
    })
}

/// Endpoint of the flow after time T: Φ_T(Y0, V0) = (Y(T), V(T)).
pub fn transfer_map(
    system: &GalerkinSystem,
    y0: &DVector<f64>,
    v0: &DVector<f64>,
    t_span: f64,
    tol: f64,
) -> Result<(DVector<f64>, DVector<f64>), DynamicsError> {
    let n = system.n;
    let mut z = vec![0.0; 2 * n];
    z[..n].copy_from_slice(y0.as_slice());
    z[n..].copy_from_slice(v0.as_slice());
    let rk = AdaptiveRk::new(tol);
    rk.integrate(flat_rhs(system), 0.0, t_span, &mut z)?;
    Ok((
        DVector::from_column_slice(&z[..n]),
        DVector::from_column_slice(&z[n..2 * n]),
    ))
}

/// Velocity at T/2 of the trajectory started from (Y0, 0). A reversible
/// orbit with period T has zero velocity there.
pub fn half_period_velocity(
    system: &GalerkinSystem,
    y0: &DVector<f64>,
    t_period: f64,
    tol: f64,
) -> Result<DVector<f64>, DynamicsError> {
    let (_, v) = transfer_map(system, y0, &DVector::zeros(system.n), t_period / 2.0, tol)?;
    Ok(v)
}

/// Half-period endpoint together with the sensitivity of (Y, V)(T/2) with
/// respect to Y0, from the variational equations integrated alongside the
/// flow.
pub struct HalfPeriodFlow {
    pub y_half: DVector<f64>,
    pub v_half: DVector<f64>,
    /// d V(T/2) / d Y0 (n x n).
    pub jac_v: DMatrix<f64>,
    /// d Y(T/2) / d Y0 (n x n).
    pub jac_y: DMatrix<f64>,
}

pub fn half_period_with_jacobian(
    system: &GalerkinSystem,
    y0: &DVector<f64>,
    t_period: f64,
    tol: f64,
) -> Result<HalfPeriodFlow, DynamicsError> {
    let n = system.n;
    // layout: [y | v | S_y (n*n) | S_v (n*n)], S_y(0) = I, S_v(0) = 0
    let mut z = vec![0.0; 2 * n + 2 * n * n];
    z[..n].copy_from_slice(y0.as_slice());
    for i in 0..n {
        z[2 * n + i * n + i] = 1.0;
    }
    let rk = AdaptiveRk::new(tol);
    rk.integrate(
        |_t, z, dz| {
            let y = DVector::from_column_slice(&z[..n]);
            let acc = system.acceleration(&y);
            let jac = system.chol_y.solve(&system.force_jacobian(&y));
            dz[..n].copy_from_slice(&z[n..2 * n]);
            dz[n..2 * n].copy_from_slice(acc.as_slice());
            let sy = DMatrix::from_column_slice(n, n, &z[2 * n..2 * n + n * n]);
            let sv = &z[2 * n + n * n..];
            dz[2 * n..2 * n + n * n].copy_from_slice(sv);
            let dsv = jac * sy;
            dz[2 * n + n * n..].copy_from_slice(dsv.as_slice());
        },
        0.0,
        t_period / 2.0,
        &mut z,
    )?;
    Ok(HalfPeriodFlow {
        y_half: DVector::from_column_slice(&z[..n]),
        v_half: DVector::from_column_slice(&z[n..2 * n]),
        jac_y: DMatrix::from_column_slice(n, n, &z[2 * n..2 * n + n * n]),
        jac_v: DMatrix::from_column_slice(n, n, &z[2 * n + n * n..]),
    })
}

/// Full-period transfer-map Jacobian JΦ_T (2n x 2n), for the transfer-map
/// Newton variant and closure diagnostics.
pub fn full_period_jacobian(
    system: &GalerkinSystem,
    y0: &DVector<f64>,
    v0: &DVector<f64>,
    t_period: f64,
    tol: f64,
) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>), DynamicsError> {
    let n = system.n;
    let dim = 2 * n;
    let mut z = vec![0.0; dim + dim * dim];
    z[..n].copy_from_slice(y0.as_slice());
    z[n..dim].copy_from_slice(v0.as_slice());
    for i in 0..dim {
        z[dim + i * dim + i] = 1.0;
    }
    let rk = AdaptiveRk::new(tol);
    rk.integrate(
        |_t, z, dz| {
            let y = DVector::from_column_slice(&z[..n]);
            let acc = system.acceleration(&y);
            let jac = system.chol_y.solve(&system.force_jacobian(&y));
            dz[..n].copy_from_slice(&z[n..dim]);
            dz[n..dim].copy_from_slice(acc.as_slice());
            let s = DMatrix::from_column_slice(dim, dim, &z[dim..]);
            let mut ds = DMatrix::zeros(dim, dim);
            ds.view_mut((0, 0), (n, dim))
                .copy_from(&s.view((n, 0), (n, dim)));
            let lower = &jac * s.view((0, 0), (n, dim));
            ds.view_mut((n, 0), (n, dim)).copy_from(&lower);
            dz[dim..].copy_from_slice(ds.as_slice());
        },
        0.0,
        t_period,
        &mut z,
    )?;
    Ok((
        DVector::from_column_slice(&z[..n]),
        DVector::from_column_slice(&z[n..dim]),
        DMatrix::from_column_slice(dim, dim, &z[dim..]),
    ))
}

/// Kinetic plus potential energy (J), conserved along exact trajectories.
pub fn total_energy(system: &GalerkinSystem, state: &State) -> f64 {
    0.5 * state.v.dot(&(&system.mass_y * &state.v)) + system.potential_energy(&state.y)
}

/// Trajectory CSV: t, y_1..y_n, v_1..v_n, energy.
pub fn trajectory_csv(system: &GalerkinSystem, traj: &Trajectory) -> String {
    let n = system.n;
    let mut out = String::from("t");
    for j in 1..=n {
        out.push_str(&format!(",y_{j}"));
    }
    for j in 1..=n {
        out.push_str(&format!(",v_{j}"));
    }
    out.push_str(",energy\n");
    for st in &traj.states {
        out.push_str(&format!("{}", st.t));
        for j in 0..n {
            out.push_str(&format!(",{}", st.y[j]));
        }
        for j in 0..n {
            out.push_str(&format!(",{}", st.v[j]));
        }
        out.push_str(&format!(",{}\n", total_energy(system, st)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cable;
    use crate::galerkin;
    use crate::params::default_tnb;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn tnb_system(n: usize) -> GalerkinSystem {
        let params = default_tnb();
        let profile = cable::solve_cable_shape(&params, cable::DEFAULT_NODES).unwrap();
        galerkin::assemble(&params, &profile, n).unwrap()
    }

    #[test]
    fn equilibrium_stays_put() {
        let sys = tnb_system(6);
        let traj = integrate(&sys, &State::rest(6), 5.0, 1e-11, 16).unwrap();
        for st in &traj.states {
            assert!(st.y.norm() == 0.0 && st.v.norm() == 0.0);
        }
        let (y, v) = transfer_map(&sys, &DVector::zeros(6), &DVector::zeros(6), 3.0, 1e-11).unwrap();
        assert_eq!(y.norm(), 0.0);
        assert_eq!(v.norm(), 0.0);
    }

    #[test]
    fn linear_limit_is_cosine() {
        let sys = tnb_system(10);
        let spec = sys.linear_spectrum(10).unwrap();
        let (lam, u) = spec.branch_eigenpair(4).unwrap();
        let alpha = 1e-5;
        let y0 = u * alpha;
        let period = 2.0 * std::f64::consts::PI / lam.sqrt();
        let traj = integrate(
            &sys,
            &State::new(0.0, y0.clone(), DVector::zeros(10)),
            period,
            1e-12,
            33,
        )
        .unwrap();
        for st in &traj.states {
            let expect = &y0 * (lam.sqrt() * st.t).cos();
            assert!(
                (&st.y - &expect).norm() <= 20.0 * alpha * alpha + 1e-12,
                "t = {}: dev {:.3e}",
                st.t,
                (&st.y - &expect).norm()
            );
        }
    }

    #[test]
    fn self_convergence_under_tolerance_halving() {
        let sys = tnb_system(6);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y0 = DVector::from_fn(6, |_, _| rng.random_range(-0.5..0.5));
        let v0 = DVector::from_fn(6, |_, _| rng.random_range(-0.5..0.5));
        let (ya, _) = transfer_map(&sys, &y0, &v0, 4.0, 1e-9).unwrap();
        let (yb, _) = transfer_map(&sys, &y0, &v0, 4.0, 5e-10).unwrap();
        let (yc, _) = transfer_map(&sys, &y0, &v0, 4.0, 1e-12).unwrap();
        let err_a = (&ya - &yc).norm() / yc.norm();
        let err_b = (&yb - &yc).norm() / yc.norm();
        assert!(err_b < 10.0 * 5e-10 + err_a, "{err_a:.2e} -> {err_b:.2e}");
        assert!(err_b < 1e-7);
    }

    #[test]
    fn energy_conservation_along_trajectory() {
        let sys = tnb_system(8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y0 = DVector::from_fn(8, |_, _| rng.random_range(-0.8..0.8));
        let state0 = State::new(0.0, y0, DVector::zeros(8));
        let traj = integrate(&sys, &state0, 8.0, 1e-11, 64).unwrap();
        assert!(
            traj.energy_drift < 1e-9,
            "relative drift {:.3e}",
            traj.energy_drift
        );
    }

    #[test]
    fn time_reversibility() {
        let sys = tnb_system(6);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let y0 = DVector::from_fn(6, |_, _| rng.random_range(-0.5..0.5));
        let v0 = DVector::from_fn(6, |_, _| rng.random_range(-0.1..0.1));
        let (y1, v1) = transfer_map(&sys, &y0, &v0, 3.0, 1e-12).unwrap();
        let (y2, v2) = transfer_map(&sys, &y1, &(-v1), 3.0, 1e-12).unwrap();
        assert!((&y2 - &y0).norm() < 1e-8);
        assert!((&v2 + &v0).norm() < 1e-8);
    }

    #[test]
    fn variational_jacobian_matches_finite_differences() {
        let sys = tnb_system(6);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let y0 = DVector::from_fn(6, |_, _| rng.random_range(-0.5..0.5));
        let t = 2.5;
        let flow = half_period_with_jacobian(&sys, &y0, 2.0 * t, 1e-11).unwrap();
        let h = 1e-6;
        for j in 0..6 {
            let mut yp = y0.clone();
            let mut ym = y0.clone();
            yp[j] += h;
            ym[j] -= h;
            let vp = half_period_velocity(&sys, &yp, 2.0 * t, 1e-11).unwrap();
            let vm = half_period_velocity(&sys, &ym, 2.0 * t, 1e-11).unwrap();
            let col = (vp - vm) / (2.0 * h);
            for i in 0..6 {
                assert!(
                    (flow.jac_v[(i, j)] - col[i]).abs() < 1e-4 * col.norm().max(1.0),
                    "J_v[{i}][{j}]: {} vs {}",
                    flow.jac_v[(i, j)],
                    col[i]
                );
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let sys = tnb_system(4);
        assert!(integrate(&sys, &State::rest(4), 1.0, 1e-5, 8).is_err());
        assert!(integrate(&sys, &State::rest(4), -1.0, 1e-11, 8).is_err());
    }
}
