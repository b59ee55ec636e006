//! Quadrature rules for integrals against the standard normal density.
//!
//! Conditional default probabilities in a one-factor copula switch from 0 to
//! 1 over a band of factor values whose width shrinks like
//! `sqrt((1 - rho) / rho)`. A single Gauss–Hermite rule cannot resolve that
//! band near `rho = 1`, so the factor integral uses composite Gauss–Legendre
//! panels laid on two overlapping grids: a uniform grid in the factor itself
//! (resolves the Gaussian weight) and a uniform grid in the standardized
//! conditional threshold (resolves the transition band).

use std::f64::consts::PI;

use super::normal;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "quadrature order must be positive");
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z_prev = z;
            z = z_prev - p1 / dp;
            if (z - z_prev).abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Settings for [`FactorRule::for_thresholds`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorQuadrature {
    /// Factor values beyond `±truncation` carry no mass.
    pub truncation: f64,
    /// Panel width on the factor grid.
    pub factor_step: f64,
    /// Panel width on the standardized-threshold grid.
    pub threshold_step: f64,
    /// Half-width of the standardized-threshold band that is refined.
    pub threshold_span: f64,
    /// Gauss–Legendre order per panel.
    pub order: usize,
}

impl Default for FactorQuadrature {
    fn default() -> Self {
        Self {
            truncation: 9.0,
            factor_step: 0.5,
            threshold_step: 0.25,
            threshold_span: 8.5,
            order: 10,
        }
    }
}

impl FactorQuadrature {
    /// Same layout with every panel split in two.
    pub fn refined(&self) -> Self {
        Self {
            factor_step: self.factor_step / 2.0,
            threshold_step: self.threshold_step / 2.0,
            ..*self
        }
    }
}

/// A composite rule `sum w_i f(s_i) ≈ ∫ f(s) φ(s) ds`; the weights already
/// include the normal density.
#[derive(Debug, Clone)]
pub struct FactorRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl FactorRule {
    /// Rule adapted to integrands of the form `g(Φ((c - sqrt(rho) s) / sqrt(1 - rho)))`
    /// for each threshold `c` in `thresholds`.
    pub fn for_thresholds(cfg: &FactorQuadrature, rho: f64, thresholds: &[f64]) -> Self {
        let t = cfg.truncation;
        let mut breaks: Vec<f64> = Vec::new();
        let n_factor = (2.0 * t / cfg.factor_step).ceil() as usize;
        for i in 0..=n_factor {
            breaks.push((-t + i as f64 * cfg.factor_step).min(t));
        }
        if rho > 0.0 && rho < 1.0 {
            let (sr, sq) = (rho.sqrt(), (1.0 - rho).sqrt());
            let n_thr = (2.0 * cfg.threshold_span / cfg.threshold_step).ceil() as usize;
            for &c in thresholds.iter().filter(|c| c.is_finite()) {
                for i in 0..=n_thr {
                    let x = -cfg.threshold_span + i as f64 * cfg.threshold_step;
                    let s = (c - sq * x) / sr;
                    if s > -t && s < t {
                        breaks.push(s);
                    }
                }
            }
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-13);

        let (gl_x, gl_w) = gauss_legendre(cfg.order);
        let mut nodes = Vec::with_capacity(breaks.len() * cfg.order);
        let mut weights = Vec::with_capacity(breaks.len() * cfg.order);
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, w) in gl_x.iter().zip(&gl_w) {
                let s = mid + half * x;
                nodes.push(s);
                weights.push(half * w * normal::pdf(s));
            }
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert_relative_eq!(s, 2.0 / 13.0, epsilon = 1e-14);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn factor_rule_integrates_normal_mass_and_step() {
        let cfg = FactorQuadrature::default();
        let rule = FactorRule::for_thresholds(&cfg, 0.9999, &[-1.2]);
        let mass: f64 = rule.weights.iter().sum();
        assert_relative_eq!(mass, 1.0, epsilon = 1e-14);
        // E[Φ((c - sqrt(rho) S)/sqrt(1-rho))] = Φ(c) for any rho
        let (sr, sq) = (0.9999f64.sqrt(), 0.0001f64.sqrt());
        let e: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(s, w)| w * normal::cdf((-1.2 - sr * s) / sq))
            .sum();
        assert_relative_eq!(e, normal::cdf(-1.2), epsilon = 1e-13);
    }
}
