//! Composite Gauss-Legendre panel quadrature with cumulative integration
//! and per-panel polynomial interpolation.

use std::f64::consts::PI;

/// A partition of [a, b] into equal panels, each carrying the same q-point
/// Gauss-Legendre rule. Nodes are strictly increasing and interior to their
/// panels.
#[derive(Debug, Clone)]
pub struct PanelGrid {
    pub a: f64,
    pub b: f64,
    pub panels: usize,
    pub points_per_panel: usize,
    /// All quadrature nodes, ascending.
    pub nodes: Vec<f64>,
    /// Matching quadrature weights.
    pub weights: Vec<f64>,
    /// Reference nodes on [0, 1].
    ref_nodes: Vec<f64>,
    /// partial[i][j] = integral over [0, t_i] of the j-th Lagrange basis
    /// polynomial on the reference nodes.
    partial: Vec<Vec<f64>>,
    /// full[j] = integral over [0, 1] of the j-th Lagrange basis polynomial
    /// (equals the reference weights for a Gauss rule).
    full: Vec<f64>,
    /// Barycentric weights of the reference nodes.
    bary: Vec<f64>,
}

fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 1 {
        return (p1, 1.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let pn = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = pn;
    }
    let dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre nodes and weights on [0, 1].
fn gauss_legendre_unit(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    let m = (q + 1) / 2;
    for i in 0..m {
        let mut x = f64::cos(PI * (i as f64 + 0.75) / (q as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_eval(q, x);
            dp = d;
            let dx = -p / d;
            x += dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[q - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[q - 1 - i] = 0.5 * w;
    }
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (nodes, weights)
}

/// Monomial coefficients of each Lagrange basis polynomial on `nodes`,
/// obtained by solving the Vandermonde system.
fn lagrange_coefficients(nodes: &[f64]) -> Vec<Vec<f64>> {
    use nalgebra::{DMatrix, DVector};
    let q = nodes.len();
    let mut vander = DMatrix::zeros(q, q);
    for (i, &t) in nodes.iter().enumerate() {
        let mut power = 1.0;
        for j in 0..q {
            vander[(i, j)] = power;
            power *= t;
        }
    }
    let lu = vander.lu();
    (0..q)
        .map(|j| {
            let mut rhs = DVector::zeros(q);
            rhs[j] = 1.0;
            let sol = lu.solve(&rhs).expect("Vandermonde solve");
            sol.iter().cloned().collect()
        })
        .collect()
}

fn integrate_polynomial(coeffs: &[f64], upper: f64) -> f64 {
    let mut sum = 0.0;
    for (deg, &c) in coeffs.iter().enumerate() {
        sum += c * upper.powi(deg as i32 + 1) / (deg as f64 + 1.0);
    }
    sum
}

impl PanelGrid {
    pub fn new(a: f64, b: f64, panels: usize, points_per_panel: usize) -> Self {
        assert!(panels >= 2 && panels % 2 == 0, "even panel count required");
        assert!(points_per_panel >= 2);
        let (ref_nodes, ref_weights) = gauss_legendre_unit(points_per_panel);
        let coeffs = lagrange_coefficients(&ref_nodes);
        let partial: Vec<Vec<f64>> = ref_nodes
            .iter()
            .map(|&t| coeffs.iter().map(|c| integrate_polynomial(c, t)).collect())
            .collect();
        let full: Vec<f64> = coeffs.iter().map(|c| integrate_polynomial(c, 1.0)).collect();
        let mut bary = vec![1.0; points_per_panel];
        for j in 0..points_per_panel {
            for m in 0..points_per_panel {
                if m != j {
                    bary[j] /= ref_nodes[j] - ref_nodes[m];
                }
            }
        }
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * points_per_panel);
        let mut weights = Vec::with_capacity(panels * points_per_panel);
        for p in 0..panels {
            let left = a + p as f64 * h;
            for i in 0..points_per_panel {
                nodes.push(left + h * ref_nodes[i]);
                weights.push(h * ref_weights[i]);
            }
        }
        Self {
            a,
            b,
            panels,
            points_per_panel,
            nodes,
            weights,
            ref_nodes,
            partial,
            full,
            bary,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn panel_width(&self) -> f64 {
        (self.b - self.a) / self.panels as f64
    }

    /// Integral of a function given by its node samples.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v * w)
            .sum()
    }

    /// Antiderivative samples F(x_i) = integral from `a` to x_i, plus the
    /// panel-edge prefix values F(edge_p) for p = 0..=panels.
    pub fn antiderivative(&self, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let q = self.points_per_panel;
        let h = self.panel_width();
        let mut at_nodes = vec![0.0; values.len()];
        let mut at_edges = vec![0.0; self.panels + 1];
        for p in 0..self.panels {
            let seg = &values[p * q..(p + 1) * q];
            let full: f64 = h * self.full.iter().zip(seg).map(|(w, v)| w * v).sum::<f64>();
            for i in 0..q {
                let part: f64 = h
                    * self.partial[i]
                        .iter()
                        .zip(seg)
                        .map(|(w, v)| w * v)
                        .sum::<f64>();
                at_nodes[p * q + i] = at_edges[p] + part;
            }
            at_edges[p + 1] = at_edges[p] + full;
        }
        (at_nodes, at_edges)
    }

    /// Node index range of the panel containing x.
    fn panel_of(&self, x: f64) -> usize {
        let h = self.panel_width();
        let p = ((x - self.a) / h).floor() as isize;
        p.clamp(0, self.panels as isize - 1) as usize
    }

    /// Barycentric Lagrange evaluation of the per-panel interpolant of the
    /// node samples `values` at x (degree points_per_panel - 1).
    pub fn eval(&self, values: &[f64], x: f64) -> f64 {
        let q = self.points_per_panel;
        let p = self.panel_of(x);
        let left = self.a + p as f64 * self.panel_width();
        let t = (x - left) / self.panel_width();
        let seg = &values[p * q..(p + 1) * q];
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..q {
            let d = t - self.ref_nodes[j];
            if d.abs() < 1e-300 {
                return seg[j];
            }
            let w = self.bary[j] / d;
            num += w * seg[j];
            den += w;
        }
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_is_exact_for_high_degree() {
        let g = PanelGrid::new(0.0, 2.0, 4, 8);
        // degree 15 is exact for an 8-point Gauss rule
        let vals: Vec<f64> = g.nodes.iter().map(|&x| x.powi(15)).collect();
        let exact = 2.0f64.powi(16) / 16.0;
        assert!((g.integrate(&vals) - exact).abs() / exact < 1e-14);
    }

    #[test]
    fn antiderivative_of_cosine() {
        let g = PanelGrid::new(0.0, PI, 16, 8);
        let vals: Vec<f64> = g.nodes.iter().map(|&x| x.cos()).collect();
        let (at_nodes, at_edges) = g.antiderivative(&vals);
        for (i, &x) in g.nodes.iter().enumerate() {
            assert!((at_nodes[i] - x.sin()).abs() < 1e-12);
        }
        assert!((at_edges[16] - PI.sin()).abs() < 1e-12);
    }

    #[test]
    fn interpolation_matches_smooth_function() {
        let g = PanelGrid::new(0.0, 1.0, 8, 8);
        let vals: Vec<f64> = g.nodes.iter().map(|&x| (3.0 * x).sin()).collect();
        for &x in &[0.0, 0.1234, 0.5, 0.876, 1.0] {
            assert!((g.eval(&vals, x) - (3.0 * x).sin()).abs() < 1e-10);
        }
    }
}
