//! Sine-basis projection of the longitudinal and torsional deck equations.
//!
//! All coefficient tensors are precomputed on the cable profile's quadrature
//! grid. Divergence-form terms are projected after one integration by parts
//! against the hinged boundary values, so nothing beyond s'' of the cable
//! profile is ever formed.

use crate::cable::CableProfile;
use crate::params::BridgeParams;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GalerkinError {
    #[error("truncation must be at least 1")]
    EmptyBasis,
    #[error("quadrature too coarse: {nodes} nodes for truncation {n} (need >= {need})")]
    QuadratureTooCoarse { nodes: usize, n: usize, need: usize },
    #[error("mass matrix is not positive definite")]
    MassNotSpd,
}

/// Precomputed tensors of the n-dimensional longitudinal system
/// `massY Ÿ = F(Y)` and of the torsional stiffness evaluator.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    pub n: usize,
    /// Basis wavenumbers k*pi/L, k = 1..=n.
    pub wavenumbers: Vec<f64>,
    /// Consistent longitudinal mass, ∫(M+2mξ) e_j e_k.
    pub mass_y: DMatrix<f64>,
    /// Consistent torsional mass, ∫(M/3+2mξ) e_j e_k.
    pub mass_theta: DMatrix<f64>,
    /// Diagonal bending stiffness EI (kπ/L)^4 L/2.
    pub bend: DVector<f64>,
    /// Diagonal torsional stiffness (GK/ℓ²)(kπ/L)^2 L/2.
    pub torsion: DVector<f64>,
    /// Q_jk = ∫ e_j' e_k' / ξ².
    pub q_mat: DMatrix<f64>,
    /// D_jk = ∫ e_j' e_k' / ξ³.
    pub d_mat: DMatrix<f64>,
    /// Fully symmetric cubic tensor C_jkl = ∫ s' e_j' e_k' e_l' / ξ⁴ (dense, row-major).
    pub c_tensor: Vec<f64>,
    /// v_k = ∫ s'' e_k / ξ³.
    pub v_vec: DVector<f64>,
    pub chol_y: Cholesky<f64, Dyn>,
    pub chol_theta: Cholesky<f64, Dyn>,
    /// H0 (N).
    pub h0: f64,
    /// A E / L_c (N/m).
    pub ae_lc: f64,
    pub span: f64,
}

/// Linearized spectrum around the rest state.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Eigenvalues of the generalized problem, ascending (1/s²).
    pub eigenvalues: Vec<f64>,
    /// Mass-normalized eigenvectors, u' massY u = 1, dominant component positive.
    pub eigenvectors: Vec<DVector<f64>>,
    /// 1-based index of the largest-magnitude basis component of each eigenvector.
    pub dominant: Vec<usize>,
    /// Interior sign changes of each eigenfunction on a fine grid.
    pub zero_counts: Vec<usize>,
}

impl Spectrum {
    /// Eigenpair whose eigenvector is dominated by basis component k.
    ///
    /// On the TNB profile the nonlocal cable-stretch term reorders the low
    /// end of the ascending spectrum, so branch semantics follow the
    /// dominant component rather than the ascending index.
    pub fn branch_eigenpair(&self, k: usize) -> Option<(f64, &DVector<f64>)> {
        self.dominant
            .iter()
            .position(|&d| d == k)
            .map(|i| (self.eigenvalues[i], &self.eigenvectors[i]))
    }
}

pub fn assemble(
    params: &BridgeParams,
    profile: &CableProfile,
    n: usize,
) -> Result<GalerkinSystem, GalerkinError> {
    if n == 0 {
        return Err(GalerkinError::EmptyBasis);
    }
    let nodes = profile.nodes();
    let weights = profile.weights();
    let nx = nodes.len();
    if nx < 16 * n {
        return Err(GalerkinError::QuadratureTooCoarse {
            nodes: nx,
            n,
            need: 16 * n,
        });
    }
    let span = profile.span();
    let wavenumbers: Vec<f64> = (1..=n).map(|k| k as f64 * PI / span).collect();

    // basis values and derivatives at the quadrature nodes
    let mut e = DMatrix::zeros(nx, n);
    let mut de = DMatrix::zeros(nx, n);
    for (i, &x) in nodes.iter().enumerate() {
        for (j, &wk) in wavenumbers.iter().enumerate() {
            e[(i, j)] = (wk * x).sin();
            de[(i, j)] = wk * (wk * x).cos();
        }
    }

    let mut mass_y = DMatrix::zeros(n, n);
    let mut mass_theta = DMatrix::zeros(n, n);
    let mut q_mat = DMatrix::zeros(n, n);
    let mut d_mat = DMatrix::zeros(n, n);
    let mut v_vec = DVector::zeros(n);
    for i in 0..nx {
        let w = weights[i];
        let xi = profile.xi[i];
        let my = w * (params.deck_mass + 2.0 * params.cable_mass * xi);
        let mt = w * (params.deck_mass / 3.0 + 2.0 * params.cable_mass * xi);
        let wq = w / (xi * xi);
        let wd = wq / xi;
        let wv = w * profile.spp[i] / (xi * xi * xi);
        for j in 0..n {
            v_vec[j] += wv * e[(i, j)];
            for k in j..n {
                mass_y[(j, k)] += my * e[(i, j)] * e[(i, k)];
                mass_theta[(j, k)] += mt * e[(i, j)] * e[(i, k)];
                q_mat[(j, k)] += wq * de[(i, j)] * de[(i, k)];
                d_mat[(j, k)] += wd * de[(i, j)] * de[(i, k)];
            }
        }
    }
    for j in 0..n {
        for k in 0..j {
            mass_y[(j, k)] = mass_y[(k, j)];
            mass_theta[(j, k)] = mass_theta[(k, j)];
            q_mat[(j, k)] = q_mat[(k, j)];
            d_mat[(j, k)] = d_mat[(k, j)];
        }
    }

    // cubic tensor, symmetric in all three indices by construction
    let mut c_tensor = vec![0.0; n * n * n];
    for i in 0..nx {
        let xi = profile.xi[i];
        let w = weights[i] * profile.sp[i] / (xi * xi * xi * xi);
        if w == 0.0 {
            continue;
        }
        for j in 0..n {
            let wj = w * de[(i, j)];
            for k in j..n {
                let wjk = wj * de[(i, k)];
                for l in k..n {
                    c_tensor[(j * n + k) * n + l] += wjk * de[(i, l)];
                }
            }
        }
    }
    // mirror the canonical j<=k<=l entries onto all permutations
    for j in 0..n {
        for k in j..n {
            for l in k..n {
                let val = c_tensor[(j * n + k) * n + l];
                for (a, b, c) in [
                    (j, l, k),
                    (k, j, l),
                    (k, l, j),
                    (l, j, k),
                    (l, k, j),
                ] {
                    c_tensor[(a * n + b) * n + c] = val;
                }
            }
        }
    }

    let bend = DVector::from_iterator(
        n,
        wavenumbers
            .iter()
            .map(|&wk| params.flexural_rigidity * wk.powi(4) * span / 2.0),
    );
    let torsion = DVector::from_iterator(
        n,
        wavenumbers.iter().map(|&wk| {
            params.torsional_rigidity / (params.half_width * params.half_width)
                * wk
                * wk
                * span
                / 2.0
        }),
    );

    let chol_y = Cholesky::new(mass_y.clone()).ok_or(GalerkinError::MassNotSpd)?;
    let chol_theta = Cholesky::new(mass_theta.clone()).ok_or(GalerkinError::MassNotSpd)?;

    Ok(GalerkinSystem {
        n,
        wavenumbers,
        mass_y,
        mass_theta,
        bend,
        torsion,
        q_mat,
        d_mat,
        c_tensor,
        v_vec,
        chol_y,
        chol_theta,
        h0: params.tension,
        ae_lc: params.cable_area * params.cable_young / params.cable_length,
        span,
    })
}

impl GalerkinSystem {
    #[inline]
    fn c_entry(&self, j: usize, k: usize, l: usize) -> f64 {
        self.c_tensor[(j * self.n + k) * self.n + l]
    }

    /// C : (Y ⊗ Y), the quadratic contraction.
    fn c_quad(&self, y: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut out = DVector::zeros(n);
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                let yk = y[k];
                if yk == 0.0 {
                    continue;
                }
                for l in 0..n {
                    acc += self.c_entry(j, k, l) * yk * y[l];
                }
            }
            out[j] = acc;
        }
        out
    }

    /// Matrix C(Y)_jk = Σ_l C_jkl y_l restricted to the leading nu block.
    fn c_contract(&self, y: &DVector<f64>, nu: usize) -> DMatrix<f64> {
        let n = self.n;
        let mut out = DMatrix::zeros(nu, nu);
        for j in 0..nu {
            for k in j..nu {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += self.c_entry(j, k, l) * y[l];
                }
                out[(j, k)] = acc;
                out[(k, j)] = acc;
            }
        }
        out
    }

    /// Projected force F(Y) so that massY Ÿ = F(Y); F(0) = 0 and the
    /// linearization at 0 matches the linear operator of the spectrum.
    pub fn force(&self, y: &DVector<f64>) -> DVector<f64> {
        let dy = &self.d_mat * y;
        let vy = self.v_vec.dot(y);
        let ydy = y.dot(&dy);
        let mut f = -&self.q_mat * y * (2.0 * self.h0);
        f -= self.c_quad(y) * (3.0 * self.h0);
        for j in 0..self.n {
            f[j] -= self.bend[j] * y[j];
            f[j] -= self.ae_lc * ydy * self.v_vec[j];
            f[j] -= 2.0 * self.ae_lc * vy * (self.v_vec[j] + dy[j]);
        }
        f
    }

    /// massY⁻¹ F(Y).
    pub fn acceleration(&self, y: &DVector<f64>) -> DVector<f64> {
        self.chol_y.solve(&self.force(y))
    }

    /// Hessian of -V, i.e. ∇F(Y); symmetric.
    pub fn force_jacobian(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut j = -self.coupling(y, self.n);
        for i in 0..self.n {
            j[(i, i)] -= self.bend[i];
        }
        j
    }

    /// Shared y-dependent stiffness block of the longitudinal Hessian and
    /// the torsional stiffness:
    /// 2H0 Q + 6H0 C(Y) + 2(AE/Lc)[v(DY)' + (DY)v' + vv' + (v·Y) D],
    /// restricted to the leading nu rows/columns (contractions run over the
    /// full basis of Y).
    fn coupling(&self, y: &DVector<f64>, nu: usize) -> DMatrix<f64> {
        let dy = &self.d_mat * y;
        let vy = self.v_vec.dot(y);
        let mut out = self.c_contract(y, nu) * (6.0 * self.h0);
        for j in 0..nu {
            for k in 0..nu {
                out[(j, k)] += 2.0 * self.h0 * self.q_mat[(j, k)]
                    + 2.0
                        * self.ae_lc
                        * (self.v_vec[j] * dy[k]
                            + dy[j] * self.v_vec[k]
                            + self.v_vec[j] * self.v_vec[k]
                            + vy * self.d_mat[(j, k)]);
            }
        }
        out
    }

    /// Torsional stiffness K(y) of the projected torsional equation
    /// massTheta Θ̈ + K(y(t)) Θ = 0, leading nu block.
    pub fn torsional_stiffness(&self, y: &DVector<f64>, nu: usize) -> DMatrix<f64> {
        let mut k = self.coupling(y, nu);
        for i in 0..nu {
            k[(i, i)] += self.torsion[i];
        }
        k
    }

    /// Potential energy V(Y), J; V(0) = 0 and -∇V = F.
    pub fn potential_energy(&self, y: &DVector<f64>) -> f64 {
        let dy = &self.d_mat * y;
        let vy = self.v_vec.dot(y);
        let ydy = y.dot(&dy);
        let qy = &self.q_mat * y;
        let mut cubic = 0.0;
        for j in 0..self.n {
            if y[j] == 0.0 {
                continue;
            }
            for k in 0..self.n {
                if y[k] == 0.0 {
                    continue;
                }
                for l in 0..self.n {
                    cubic += self.c_entry(j, k, l) * y[j] * y[k] * y[l];
                }
            }
        }
        let mut bend_term = 0.0;
        for j in 0..self.n {
            bend_term += 0.5 * self.bend[j] * y[j] * y[j];
        }
        bend_term + self.h0 * y.dot(&qy) + self.h0 * cubic + self.ae_lc * (vy * vy + vy * ydy)
    }

    /// Stiffness of the linearization at the rest state:
    /// bend + 2H0 Q + 2(AE/Lc) v v'.
    pub fn linear_stiffness(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut a = self.q_mat.clone() * (2.0 * self.h0);
        for j in 0..n {
            a[(j, j)] += self.bend[j];
            for k in 0..n {
                a[(j, k)] += 2.0 * self.ae_lc * self.v_vec[j] * self.v_vec[k];
            }
        }
        a
    }

    /// Generalized symmetric eigenproblem (bend + 2H0 Q + 2(AE/Lc) vv') u =
    /// λ massY u, eigenpairs ascending, eigenvectors mass-normalized.
    pub fn linear_spectrum(&self, k_max: usize) -> Result<Spectrum, GalerkinError> {
        if k_max > self.n {
            return Err(GalerkinError::QuadratureTooCoarse {
                nodes: k_max,
                n: self.n,
                need: self.n,
            });
        }
        let a = self.linear_stiffness();
        let l = self.chol_y.l();
        // B = L^-1 A L^-T, symmetric
        let mut b = l
            .solve_lower_triangular(&a)
            .ok_or(GalerkinError::MassNotSpd)?
            .transpose();
        b = l
            .solve_lower_triangular(&b)
            .ok_or(GalerkinError::MassNotSpd)?;
        let b = (b.clone() + b.transpose()) * 0.5;
        let eig = b.symmetric_eigen();
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());

        let lt = l.transpose();
        let mut eigenvalues = Vec::with_capacity(self.n);
        let mut eigenvectors = Vec::with_capacity(self.n);
        let mut dominant = Vec::with_capacity(self.n);
        let mut zero_counts = Vec::with_capacity(self.n);
        let n_grid = 2048;
        for &i in &order {
            eigenvalues.push(eig.eigenvalues[i]);
            let w = eig.eigenvectors.column(i).clone_owned();
            let mut u = lt
                .solve_upper_triangular(&w)
                .ok_or(GalerkinError::MassNotSpd)?;
            let dom = u.iter().enumerate().fold(0, |best, (j, &val)| {
                if val.abs() > u[best].abs() {
                    j
                } else {
                    best
                }
            });
            if u[dom] < 0.0 {
                u.neg_mut();
            }
            dominant.push(dom + 1);
            // interior sign changes on a fine grid
            let mut zeros = 0;
            let mut prev = 0.0f64;
            for gi in 1..n_grid {
                let x = self.span * gi as f64 / n_grid as f64;
                let mut val = 0.0;
                for (j, &wk) in self.wavenumbers.iter().enumerate() {
                    val += u[j] * (wk * x).sin();
                }
                if prev != 0.0 && val != 0.0 && prev.signum() != val.signum() {
                    zeros += 1;
                }
                if val != 0.0 {
                    prev = val;
                }
            }
            zero_counts.push(zeros);
            eigenvectors.push(u);
        }
        Ok(Spectrum {
            eigenvalues: eigenvalues[..].to_vec(),
            eigenvectors,
            dominant,
            zero_counts,
        })
    }
}

/// Closed-form eigenvalue of the horizontal-cable limit:
/// (EI k⁴π⁴ + 2 H0 k²π²L²) / ((M+2m) L⁴).
pub fn flat_cable_eigenvalue(params: &BridgeParams, k: usize) -> f64 {
    let kf = k as f64;
    let l = params.span;
    (params.flexural_rigidity * kf.powi(4) * PI.powi(4)
        + 2.0 * params.tension * kf * kf * PI * PI * l * l)
        / ((params.deck_mass + 2.0 * params.cable_mass) * l.powi(4))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cable;
    use crate::params::default_tnb;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn tnb_system(n: usize) -> (BridgeParams, CableProfile, GalerkinSystem) {
        let params = default_tnb();
        let profile = cable::solve_cable_shape(&params, cable::DEFAULT_NODES).unwrap();
        let system = assemble(&params, &profile, n).unwrap();
        (params, profile, system)
    }

    #[test]
    fn flat_cable_tensors_are_diagonal() {
        let params = default_tnb();
        let profile = cable::flat(&params, 512);
        let sys = assemble(&params, &profile, 6).unwrap();
        let l2 = params.span / 2.0;
        let mass_diag = (params.deck_mass + 2.0 * params.cable_mass) * l2;
        for j in 0..6 {
            for k in 0..6 {
                let expect_mass = if j == k { mass_diag } else { 0.0 };
                assert!((sys.mass_y[(j, k)] - expect_mass).abs() < 1e-6 * mass_diag);
                let wk = sys.wavenumbers[k];
                let expect_q = if j == k { wk * wk * l2 } else { 0.0 };
                assert!((sys.q_mat[(j, k)] - expect_q).abs() < 1e-9 * wk * wk * l2);
                assert!((sys.d_mat[(j, k)] - expect_q).abs() < 1e-9 * wk * wk * l2);
            }
            assert!(sys.v_vec[j].abs() < 1e-14);
        }
        assert!(sys.c_tensor.iter().all(|&c| c.abs() < 1e-12));
    }

    #[test]
    fn even_v_entries_vanish() {
        let (_, _, sys) = tnb_system(10);
        let v1 = sys.v_vec[0].abs();
        for k in (2..=10).step_by(2) {
            assert!(
                sys.v_vec[k - 1].abs() < 1e-8 * v1,
                "v[{k}] = {}",
                sys.v_vec[k - 1]
            );
        }
        // odd entries alternate in magnitude, decreasing
        assert!(sys.v_vec[0] > sys.v_vec[2] && sys.v_vec[2] > sys.v_vec[4]);
    }

    #[test]
    fn tensors_symmetric_and_spd() {
        let (_, _, sys) = tnb_system(10);
        for j in 0..10 {
            for k in 0..10 {
                assert!((sys.mass_y[(j, k)] - sys.mass_y[(k, j)]).abs() < 1e-12 * sys.mass_y[(0, 0)]);
                assert!((sys.q_mat[(j, k)] - sys.q_mat[(k, j)]).abs() < 1e-12);
                assert!((sys.d_mat[(j, k)] - sys.d_mat[(k, j)]).abs() < 1e-12);
            }
        }
        assert!(Cholesky::new(sys.q_mat.clone()).is_some());
        assert!(Cholesky::new(sys.d_mat.clone()).is_some());
        // full symmetry of C in its three indices
        for j in 0..10 {
            for k in 0..10 {
                for l in 0..10 {
                    let c = sys.c_entry(j, k, l);
                    assert_eq!(c, sys.c_entry(k, j, l));
                    assert_eq!(c, sys.c_entry(l, k, j));
                }
            }
        }
    }

    #[test]
    fn c_entry_matches_refined_quadrature() {
        let params = default_tnb();
        let profile = cable::solve_cable_shape(&params, cable::DEFAULT_NODES).unwrap();
        let sys = assemble(&params, &profile, 16).unwrap();
        let fine = cable::solve_cable_shape(&params, 4 * cable::DEFAULT_NODES).unwrap();
        let sys_fine = assemble(&params, &fine, 16).unwrap();
        let c = sys.c_entry(0, 0, 0);
        let cf = sys_fine.c_entry(0, 0, 0);
        assert!((c - cf).abs() / cf.abs() < 1e-8, "{c} vs {cf}");
    }

    #[test]
    fn quadrature_refinement_stability() {
        let params = default_tnb();
        let coarse = assemble(
            &params,
            &cable::solve_cable_shape(&params, cable::DEFAULT_NODES).unwrap(),
            10,
        )
        .unwrap();
        let fine = assemble(
            &params,
            &cable::solve_cable_shape(&params, 2 * cable::DEFAULT_NODES).unwrap(),
            10,
        )
        .unwrap();
        let scale = coarse.mass_y[(0, 0)];
        for j in 0..10 {
            for k in 0..10 {
                assert!((coarse.mass_y[(j, k)] - fine.mass_y[(j, k)]).abs() < 1e-9 * scale);
                assert!(
                    (coarse.q_mat[(j, k)] - fine.q_mat[(j, k)]).abs()
                        < 1e-9 * coarse.q_mat[(0, 0)].abs().max(1.0)
                );
            }
            assert!((coarse.v_vec[j] - fine.v_vec[j]).abs() < 1e-9 * coarse.v_vec[0].abs());
        }
    }

    #[test]
    fn rest_state_is_equilibrium() {
        let (_, _, sys) = tnb_system(10);
        let zero = DVector::zeros(10);
        assert_eq!(sys.force(&zero).norm(), 0.0);
        assert_eq!(sys.potential_energy(&zero), 0.0);
    }

    #[test]
    fn acceleration_matches_direct_projection_oracle() {
        // project the right side of the longitudinal equation against each
        // basis function by raw quadrature, with no precomputed tensors
        let params = default_tnb();
        let profile = cable::solve_cable_shape(&params, cable::DEFAULT_NODES).unwrap();
        let n = 6;
        let sys = assemble(&params, &profile, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));

        let nodes = profile.nodes();
        let weights = profile.weights();
        let span = profile.span();
        let mut f_direct: DVector<f64> = DVector::zeros(n);
        // nonlocal brackets
        let mut int_yx2 = 0.0; // ∫ y_x² / ξ³
        let mut int_sy = 0.0; // ∫ s'' y / ξ³
        for (i, &x) in nodes.iter().enumerate() {
            let xi = profile.xi[i];
            let mut yx = 0.0;
            let mut yv = 0.0;
            for j in 0..n {
                let wk = (j as f64 + 1.0) * PI / span;
                yx += y[j] * wk * (wk * x).cos();
                yv += y[j] * (wk * x).sin();
            }
            int_yx2 += weights[i] * yx * yx / xi.powi(3);
            int_sy += weights[i] * profile.spp[i] * yv / xi.powi(3);
        }
        for (i, &x) in nodes.iter().enumerate() {
            let xi = profile.xi[i];
            let sp = profile.sp[i];
            let spp = profile.spp[i];
            let mut yx = 0.0;
            for j in 0..n {
                let wk = (j as f64 + 1.0) * PI / span;
                yx += y[j] * wk * (wk * x).cos();
            }
            for j in 0..n {
                let wk = (j as f64 + 1.0) * PI / span;
                let ej = (wk * x).sin();
                let dej = wk * (wk * x).cos();
                // H0(2 y_x/ξ² + 3 s' y_x²/ξ⁴)_x projected by parts
                let mut val = -params.tension
                    * (2.0 * yx / (xi * xi) + 3.0 * sp * yx * yx / xi.powi(4))
                    * dej;
                // -(AE/Lc)[∫y_x²/ξ³] s''/ξ³ e_j
                val -= sys.ae_lc * int_yx2 * spp / xi.powi(3) * ej;
                // -(2AE/Lc)[∫s''y/ξ³](s'/ξ - y_x/ξ³)_x projected by parts
                val += 2.0 * sys.ae_lc * int_sy * (sp / xi - yx / xi.powi(3)) * dej;
                f_direct[j] += weights[i] * val;
            }
        }
        // bending contributes exactly
        for j in 0..n {
            f_direct[j] -= sys.bend[j] * y[j];
        }
        let f = sys.force(&y);
        for j in 0..n {
            assert!(
                (f[j] - f_direct[j]).abs() / f_direct[j].abs().max(1.0) < 1e-9,
                "component {j}: {} vs {}",
                f[j],
                f_direct[j]
            );
        }
    }

    #[test]
    fn acceleration_is_negative_mass_weighted_gradient() {
        let (_, _, sys) = tnb_system(8);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let y = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
            let f = sys.force(&y);
            let h = 1e-5;
            for j in 0..8 {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[j] += h;
                ym[j] -= h;
                let grad = (sys.potential_energy(&yp) - sys.potential_energy(&ym)) / (2.0 * h);
                assert!(
                    (f[j] + grad).abs() / grad.abs().max(1e3) < 1e-6,
                    "dV/dy_{j} = {grad}, F_{j} = {}",
                    f[j]
                );
            }
        }
    }

    #[test]
    fn force_jacobian_matches_finite_differences() {
        let (_, _, sys) = tnb_system(6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let jac = sys.force_jacobian(&y);
        let h = 1e-6;
        for j in 0..6 {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[j] += h;
            ym[j] -= h;
            let col = (sys.force(&yp) - sys.force(&ym)) / (2.0 * h);
            for i in 0..6 {
                assert!(
                    (jac[(i, j)] - col[i]).abs() / col[i].abs().max(1e4) < 1e-6,
                    "J[{i}][{j}]"
                );
            }
        }
    }

    #[test]
    fn flat_cable_spectrum_matches_closed_form() {
        let params = default_tnb();
        let profile = cable::flat(&params, 512);
        let sys = assemble(&params, &profile, 10).unwrap();
        let spec = sys.linear_spectrum(10).unwrap();
        for k in 1..=10 {
            let exact = flat_cable_eigenvalue(&params, k);
            let got = spec.eigenvalues[k - 1];
            assert!(
                (got - exact).abs() / exact < 1e-10,
                "k = {k}: {got} vs {exact}"
            );
            assert_eq!(spec.dominant[k - 1], k);
        }
    }

    #[test]
    fn flat_eigenvalue_limits() {
        let mut params = default_tnb();
        params.flexural_rigidity = 1e-280;
        let lam = flat_cable_eigenvalue(&params, 3);
        let taut = 2.0 * params.tension * 9.0 * PI * PI
            / ((params.deck_mass + 2.0 * params.cable_mass) * params.span * params.span);
        assert!((lam - taut).abs() / taut < 1e-12);
        // k^4 scaling in the bending-dominated regime
        let mut stiff = default_tnb();
        stiff.flexural_rigidity = 1e18;
        let r = flat_cable_eigenvalue(&stiff, 8) / flat_cable_eigenvalue(&stiff, 4);
        assert!((r - 16.0).abs() < 0.01, "ratio {r}");
    }

    #[test]
    fn tnb_spectrum_dominant_labelling_and_zero_counts() {
        let (_, _, sys) = tnb_system(16);
        let spec = sys.linear_spectrum(16).unwrap();
        // every branch index 1..=10 is represented by exactly one eigenpair
        for k in 1..=10 {
            let (lam, u) = spec.branch_eigenpair(k).expect("dominant eigenpair");
            assert!(lam > 0.0);
            let idx = spec.dominant.iter().position(|&d| d == k).unwrap();
            assert_eq!(spec.zero_counts[idx], k - 1, "branch {k}");
            assert!(u[k - 1] > 0.0);
            // mass-normalized
            let m = u.dot(&(&sys.mass_y * u));
            assert!((m - 1.0).abs() < 1e-10);
        }
        // spectrum is simple among the first 10
        for i in 1..10 {
            assert!(spec.eigenvalues[i] > spec.eigenvalues[i - 1] * 1.000001);
        }
    }

    #[test]
    fn small_amplitude_acceleration_matches_eigenvalue() {
        let (_, _, sys) = tnb_system(10);
        let spec = sys.linear_spectrum(10).unwrap();
        let (lam, u) = spec.branch_eigenpair(3).unwrap();
        let y = u * 1e-6;
        let acc = sys.acceleration(&y);
        let expect = -&y * lam;
        assert!((acc - &expect).norm() / expect.norm() < 1e-4);
    }

    #[test]
    fn quadratic_energy_limit() {
        let (_, _, sys) = tnb_system(10);
        let spec = sys.linear_spectrum(10).unwrap();
        let (lam, u) = spec.branch_eigenpair(2).unwrap();
        let alpha = 1e-4;
        let y = u * alpha;
        let v = sys.potential_energy(&y);
        let quad = 0.5 * lam * alpha * alpha; // mass-normalized eigenvector
        assert!((v - quad).abs() / quad < 1e-3, "{v} vs {quad}");
    }

    #[test]
    fn truncation_too_small_rejected() {
        let (_, _, sys) = tnb_system(6);
        assert!(sys.linear_spectrum(7).is_err());
    }
}
