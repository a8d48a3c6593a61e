//! Equilibrium cable shape: the boundary value problem
//! `H0 s'' = (M/2 + m sqrt(1 + s'^2)) g`, `s(0) = s(L) = s0`,
//! solved on a composite Gauss-Legendre grid.

use crate::params::BridgeParams;
use crate::quad::PanelGrid;
use thiserror::Error;

pub const POINTS_PER_PANEL: usize = 8;
/// Default node count for the TNB span.
pub const DEFAULT_NODES: usize = 1024;

/// Solved equilibrium cable shape with derivatives and local length on the
/// quadrature grid. `s''` is stored from the ODE itself, never from
/// numerical differentiation.
#[derive(Debug, Clone)]
pub struct CableProfile {
    grid: PanelGrid,
    /// Cable ordinate s(x) at the nodes (m).
    pub s: Vec<f64>,
    /// Slope s'(x) at the nodes.
    pub sp: Vec<f64>,
    /// Curvature s''(x) at the nodes (1/m), from the ODE right-hand side.
    pub spp: Vec<f64>,
    /// Local cable length xi = sqrt(1 + s'^2) at the nodes.
    pub xi: Vec<f64>,
    /// Tangential tension H0 * xi at the nodes (N).
    pub tension: Vec<f64>,
    /// Rest length of the cable over the span: integral of xi (m).
    pub computed_length: f64,
    span: f64,
    tower_height: f64,
    /// Coefficients of the ODE: s'' = (half_deck + cable * xi) * g / H0.
    ode_half_deck: f64,
    ode_cable: f64,
    ode_g_over_h0: f64,
}

#[derive(Debug, Error)]
pub enum CableError {
    #[error("need at least 64 quadrature nodes, got {0}")]
    TooFewNodes(usize),
    #[error("cable iteration did not converge: residual {0:.3e}")]
    NonConvergence(f64),
    #[error("position {x} outside the span [0, {span}]")]
    OutOfSpan { x: f64, span: f64 },
}

/// Solves the equilibrium shape by fixed-point iteration on the slope,
/// seeded with the massless-cable parabola. The midpoint condition
/// `s'(L/2) = 0` (symmetry) plus `s(0) = s0` determine the solution.
pub fn solve_cable_shape(
    params: &BridgeParams,
    n_nodes: usize,
) -> Result<CableProfile, CableError> {
    if n_nodes < 64 {
        return Err(CableError::TooFewNodes(n_nodes));
    }
    let span = params.span;
    let mut panels = n_nodes.div_ceil(POINTS_PER_PANEL);
    if panels % 2 == 1 {
        panels += 1;
    }
    let grid = PanelGrid::new(0.0, span, panels, POINTS_PER_PANEL);

    let half_deck = params.deck_mass / 2.0;
    let g_over_h0 = params.gravity / params.tension;
    let curvature = |slope: f64| (half_deck + params.cable_mass * slope.hypot(1.0)) * g_over_h0;

    // Massless-cable parabola as the seed: s'' = (M/2 + m) g / H0 constant.
    let spp0 = (half_deck + params.cable_mass) * g_over_h0;
    let mut sp: Vec<f64> = grid.nodes.iter().map(|&x| spp0 * (x - span / 2.0)).collect();

    let mid_edge = panels / 2;
    let mut residual = f64::INFINITY;
    for _ in 0..128 {
        let spp: Vec<f64> = sp.iter().map(|&u| curvature(u)).collect();
        let (anti, edges) = grid.antiderivative(&spp);
        let mid = edges[mid_edge];
        let next: Vec<f64> = anti.iter().map(|&a| a - mid).collect();
        residual = sp
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        sp = next;
        if residual < 1e-15 {
            break;
        }
    }
    if residual > 1e-12 {
        return Err(CableError::NonConvergence(residual));
    }

    let spp: Vec<f64> = sp.iter().map(|&u| curvature(u)).collect();
    let xi: Vec<f64> = sp.iter().map(|&u| u.hypot(1.0)).collect();
    let (s_anti, _) = grid.antiderivative(&sp);
    let s: Vec<f64> = s_anti.iter().map(|&a| params.tower_height + a).collect();
    let tension: Vec<f64> = xi.iter().map(|&x| params.tension * x).collect();
    let computed_length = grid.integrate(&xi);

    Ok(CableProfile {
        grid,
        s,
        sp,
        spp,
        xi,
        tension,
        computed_length,
        span,
        tower_height: params.tower_height,
        ode_half_deck: half_deck,
        ode_cable: params.cable_mass,
        ode_g_over_h0: g_over_h0,
    })
}

/// Flat-cable fixture: s = s0, s' = s'' = 0, xi = 1. Used for closed-form
/// cross-checks of the spectral assembly.
pub fn flat(params: &BridgeParams, n_nodes: usize) -> CableProfile {
    let span = params.span;
    let mut panels = n_nodes.div_ceil(POINTS_PER_PANEL).max(8);
    if panels % 2 == 1 {
        panels += 1;
    }
    let grid = PanelGrid::new(0.0, span, panels, POINTS_PER_PANEL);
    let n = grid.len();
    CableProfile {
        s: vec![params.tower_height; n],
        sp: vec![0.0; n],
        spp: vec![0.0; n],
        xi: vec![1.0; n],
        tension: vec![params.tension; n],
        computed_length: span,
        grid,
        span,
        tower_height: params.tower_height,
        ode_half_deck: 0.0,
        ode_cable: 0.0,
        ode_g_over_h0: 0.0,
    }
}

impl CableProfile {
    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn tower_height(&self) -> f64 {
        self.tower_height
    }

    pub fn nodes(&self) -> &[f64] {
        &self.grid.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.grid.weights
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.len()
    }

    /// Smooth evaluation of (s, s', s'', xi) between nodes. The slope is
    /// interpolated per panel (degree 7); s'' is recomputed from the ODE so
    /// it stays continuous and exact on the solution.
    pub fn eval(&self, x: f64) -> Result<(f64, f64, f64, f64), CableError> {
        if !(0.0..=self.span).contains(&x) {
            return Err(CableError::OutOfSpan { x, span: self.span });
        }
        let sp = self.grid.eval(&self.sp, x);
        let xi = sp.hypot(1.0);
        let spp = if self.ode_g_over_h0 == 0.0 && self.ode_half_deck == 0.0 {
            0.0
        } else {
            (self.ode_half_deck + self.ode_cable * xi) * self.ode_g_over_h0
        };
        let s = self.grid.eval(&self.s, x);
        Ok((s, sp, spp, xi))
    }

    /// CSV dump of (x, s, s', s'', xi) at the nodes, for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,s,sp,spp,xi\n");
        for i in 0..self.n_nodes() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.grid.nodes[i], self.s[i], self.sp[i], self.spp[i], self.xi[i]
            ));
        }
        out
    }
}

/// Rest length of the cable over the span by the profile's quadrature.
pub fn cable_length(profile: &CableProfile) -> f64 {
    profile.grid.integrate(&profile.xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::default_tnb;

    #[test]
    fn boundary_values() {
        let profile = solve_cable_shape(&default_tnb(), DEFAULT_NODES).unwrap();
        let (s0, _, _, _) = profile.eval(0.0).unwrap();
        let (sl, _, _, _) = profile.eval(profile.span()).unwrap();
        assert!((s0 - 72.0).abs() < 1e-8, "s(0) = {s0}");
        assert!((sl - 72.0).abs() < 1e-8, "s(L) = {sl}");
    }

    #[test]
    fn massless_cable_is_exact_parabola() {
        let mut params = default_tnb();
        params.cable_mass = 1e-300; // validation requires positive
        let profile = solve_cable_shape(&params, DEFAULT_NODES).unwrap();
        let c = params.deck_mass * params.gravity / (4.0 * params.tension);
        for &x in &[100.0, 300.0, params.span / 2.0, 700.0] {
            let (s, _, _, _) = profile.eval(x).unwrap();
            let exact = params.tower_height + c * x * (x - params.span);
            assert!(
                (s - exact).abs() / exact.abs() < 1e-10,
                "s({x}) = {s} vs {exact}"
            );
        }
    }

    /// Independent shooting oracle: integrate the second-order ODE from x = 0
    /// with a trial slope by fixed-step RK4 and bisect the trial slope until
    /// s(L) = s0.
    fn shooting_midspan(params: &BridgeParams, steps: usize) -> f64 {
        let span = params.span;
        let h = span / steps as f64;
        let rhs = |_s: f64, u: f64| {
            (params.deck_mass / 2.0 + params.cable_mass * u.hypot(1.0)) * params.gravity
                / params.tension
        };
        let run = |u0: f64| -> (f64, f64) {
            // returns (s(L), s(L/2))
            let mut s = params.tower_height;
            let mut u = u0;
            let mut s_mid = f64::NAN;
            for i in 0..steps {
                if i == steps / 2 {
                    s_mid = s;
                }
                let k1s = u;
                let k1u = rhs(s, u);
                let k2s = u + 0.5 * h * k1u;
                let k2u = rhs(s + 0.5 * h * k1s, u + 0.5 * h * k1u);
                let k3s = u + 0.5 * h * k2u;
                let k3u = rhs(s + 0.5 * h * k2s, u + 0.5 * h * k2u);
                let k4s = u + h * k3u;
                let k4u = rhs(s + h * k3s, u + h * k3u);
                s += h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
                u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
            }
            (s, s_mid)
        };
        let mut lo = -1.0;
        let mut hi = 0.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let (sl, _) = run(mid);
            if sl > params.tower_height {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let (_, s_mid) = run(0.5 * (lo + hi));
        s_mid
    }

    #[test]
    fn midspan_matches_shooting_oracle() {
        let params = default_tnb();
        let profile = solve_cable_shape(&params, DEFAULT_NODES).unwrap();
        let (s_mid, _, _, _) = profile.eval(params.span / 2.0).unwrap();
        let oracle = shooting_midspan(&params, 20_000);
        assert!(
            (s_mid - oracle).abs() < 1e-6,
            "midspan {s_mid} vs oracle {oracle}"
        );
    }

    #[test]
    fn symmetry() {
        let params = default_tnb();
        let profile = solve_cable_shape(&params, DEFAULT_NODES).unwrap();
        let (_, sp_mid, _, _) = profile.eval(params.span / 2.0).unwrap();
        assert!(sp_mid.abs() < 1e-8);
        let (s_q, sp_q, spp_q, _) = profile.eval(params.span / 4.0).unwrap();
        let (s_3q, sp_3q, spp_3q, _) = profile.eval(3.0 * params.span / 4.0).unwrap();
        assert!((s_q - s_3q).abs() < 1e-9);
        assert!((sp_q + sp_3q).abs() < 1e-12);
        assert!((spp_q - spp_3q).abs() < 1e-14);
    }

    #[test]
    fn convexity_and_xi_identity() {
        let profile = solve_cable_shape(&default_tnb(), DEFAULT_NODES).unwrap();
        for i in 0..profile.n_nodes() {
            assert!(profile.spp[i] > 0.0);
            let id = profile.xi[i] * profile.xi[i] - 1.0 - profile.sp[i] * profile.sp[i];
            assert!(id.abs() < 1e-12);
        }
    }

    #[test]
    fn residual_of_the_bvp() {
        let params = default_tnb();
        let profile = solve_cable_shape(&params, DEFAULT_NODES).unwrap();
        for i in 0..profile.n_nodes() {
            let rhs = (params.deck_mass / 2.0 + params.cable_mass * profile.xi[i]) * params.gravity;
            let res = (params.tension * profile.spp[i] - rhs).abs() / rhs;
            assert!(res < 1e-8);
        }
    }

    #[test]
    fn grid_convergence() {
        let params = default_tnb();
        let coarse = solve_cable_shape(&params, DEFAULT_NODES).unwrap();
        let fine = solve_cable_shape(&params, 2 * DEFAULT_NODES).unwrap();
        let (a, _, _, _) = coarse.eval(params.span / 2.0).unwrap();
        let (b, _, _, _) = fine.eval(params.span / 2.0).unwrap();
        assert!((a - b).abs() < 1e-8, "midspan moved {:.3e}", (a - b).abs());
    }

    #[test]
    fn length_close_to_catalog_value() {
        let params = default_tnb();
        let profile = solve_cable_shape(&params, DEFAULT_NODES).unwrap();
        let len = cable_length(&profile);
        assert!((len - params.cable_length).abs() / params.cable_length < 0.005);
    }

    #[test]
    fn flat_fixture_length_is_span() {
        let params = default_tnb();
        let profile = flat(&params, 512);
        let len = cable_length(&profile);
        assert!((len - params.span).abs() < 1e-10 * params.span);
    }

    #[test]
    fn massless_parabola_arclength_closed_form() {
        let mut params = default_tnb();
        params.cable_mass = 1e-300;
        let profile = solve_cable_shape(&params, DEFAULT_NODES).unwrap();
        // s = s0 + c x (x - L), a = 2c; arclength has the standard closed form
        let c = params.deck_mass * params.gravity / (4.0 * params.tension);
        let a = 2.0 * c;
        let u = a * params.span / 2.0;
        let exact = params.span / 2.0 * (1.0 + u * u).sqrt() + u.asinh() / a;
        let len = cable_length(&profile);
        assert!((len - exact).abs() / exact < 1e-8, "{len} vs {exact}");
    }

    #[test]
    fn eval_rejects_outside_span() {
        let profile = solve_cable_shape(&default_tnb(), 512).unwrap();
        assert!(profile.eval(-1.0).is_err());
        assert!(profile.eval(1e4).is_err());
    }
}
