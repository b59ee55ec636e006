//! Dense convex quadratic programs.
//!
//! Thin layer over the Goldfarb–Idnani dual active-set solver from the
//! `quadprog` crate: builds the row-major problem, adds an optional ridge so
//! semidefinite objectives become strictly convex, and reports the largest
//! constraint violation of the returned point.

use crate::error::{Error, Result};

/// `minimize ½ xᵀ H x + cᵀ x` subject to `E x = e` and `A x ≤ a`.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    n: usize,
    hessian: Vec<f64>,
    linear: Vec<f64>,
    equalities: Vec<(Vec<f64>, f64)>,
    inequalities: Vec<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Largest violation over all constraints at `x`.
    pub max_violation: f64,
    pub active: Vec<usize>,
}

impl QuadraticProgram {
    /// `hessian` is row-major `n × n` and must be symmetric.
    pub fn new(hessian: Vec<f64>, linear: Vec<f64>) -> Self {
        let n = linear.len();
        assert_eq!(hessian.len(), n * n, "hessian must be n x n");
        Self {
            n,
            hessian,
            linear,
            equalities: Vec::new(),
            inequalities: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn equality(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        assert_eq!(row.len(), self.n);
        self.equalities.push((row, rhs));
        self
    }

    /// Adds `row · x ≤ rhs`.
    pub fn less_equal(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        assert_eq!(row.len(), self.n);
        self.inequalities.push((row, rhs));
        self
    }

    /// Adds `row · x ≥ rhs`.
    pub fn greater_equal(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        let neg = row.into_iter().map(|v| -v).collect();
        self.less_equal(neg, -rhs)
    }

    /// Adds `ridge` to the diagonal.
    pub fn ridge(&mut self, ridge: f64) -> &mut Self {
        for i in 0..self.n {
            self.hessian[i * self.n + i] += ridge;
        }
        self
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut quad = 0.0;
        for i in 0..n {
            let row = &self.hessian[i * n..(i + 1) * n];
            quad += x[i] * row.iter().zip(x).map(|(h, v)| h * v).sum::<f64>();
        }
        0.5 * quad + self.linear.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |r: &[f64]| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let eq = self
            .equalities
            .iter()
            .map(|(r, b)| (dot(r) - b).abs())
            .fold(0.0, f64::max);
        let ineq = self
            .inequalities
            .iter()
            .map(|(r, b)| (dot(r) - b).max(0.0))
            .fold(0.0, f64::max);
        eq.max(ineq)
    }

    pub fn solve(&self) -> Result<QpSolution> {
        let mut q = self.hessian.clone();
        let meq = self.equalities.len();
        let mut amat = Vec::with_capacity((meq + self.inequalities.len()) * self.n);
        let mut bvec = Vec::with_capacity(meq + self.inequalities.len());
        for (row, rhs) in self.equalities.iter().chain(&self.inequalities) {
            amat.extend_from_slice(row);
            bvec.push(*rhs);
        }
        let sol =
            quadprog::solve_qp(&mut q, &self.linear, &amat, &bvec, meq, false).map_err(|e| {
                Error::Optimizer {
                    reason: format!("quadratic program: {e}"),
                    kkt_residual: f64::NAN,
                }
            })?;
        let max_violation = self.max_violation(&sol.sol);
        Ok(QpSolution {
            objective: self.objective(&sol.sol),
            x: sol.sol,
            max_violation,
            active: sol.iact,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn projection_onto_simplex() {
        // min |x - (0.8, 0.6, -0.2)|² on the simplex → (0.6, 0.4, 0)
        let target = [0.8, 0.6, -0.2];
        let mut h = vec![0.0; 9];
        for i in 0..3 {
            h[i * 3 + i] = 2.0;
        }
        let c = target.iter().map(|t| -2.0 * t).collect();
        let mut qp = QuadraticProgram::new(h, c);
        qp.equality(vec![1.0; 3], 1.0);
        for i in 0..3 {
            let mut r = vec![0.0; 3];
            r[i] = 1.0;
            qp.greater_equal(r, 0.0);
        }
        let s = qp.solve().unwrap();
        assert_relative_eq!(s.x[0], 0.6, epsilon = 1e-12);
        assert_relative_eq!(s.x[1], 0.4, epsilon = 1e-12);
        assert!(s.x[2].abs() < 1e-12);
        assert!(s.max_violation < 1e-12);
    }

    #[test]
    fn infeasible_is_reported() {
        let mut qp = QuadraticProgram::new(vec![1.0], vec![0.0]);
        qp.greater_equal(vec![1.0], 2.0).less_equal(vec![1.0], 1.0);
        assert!(matches!(qp.solve(), Err(Error::Optimizer { .. })));
    }
}
