//! Nonlinear least squares under linear inequality constraints.
//!
//! Levenberg–Marquardt where each damped Gauss–Newton step is the solution of
//! a small quadratic program carrying the linear constraints, so every
//! accepted iterate stays feasible.

use rayon::prelude::*;

use super::qp::QuadraticProgram;
use crate::error::{Error, Result};

/// Constraints of the form `row · x ≥ rhs`.
#[derive(Debug, Clone, Default)]
pub struct LinearInequalities {
    n: usize,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    labels: Vec<String>,
}

impl LinearInequalities {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: Vec<f64>, rhs: f64, label: impl Into<String>) {
        assert_eq!(row.len(), self.n);
        self.rows.push(row);
        self.rhs.push(rhs);
        self.labels.push(label.into());
    }

    /// `lo ≤ x[i] ≤ hi`; infinite sides are skipped.
    pub fn bound(&mut self, i: usize, lo: f64, hi: f64, label: &str) {
        if lo.is_finite() {
            let mut r = vec![0.0; self.n];
            r[i] = 1.0;
            self.push(r, lo, format!("{label} >= {lo}"));
        }
        if hi.is_finite() {
            let mut r = vec![0.0; self.n];
            r[i] = -1.0;
            self.push(r, -hi, format!("{label} <= {hi}"));
        }
    }

    /// `x[i] - x[j] ≥ 0`.
    pub fn ordered(&mut self, i: usize, j: usize, label: impl Into<String>) {
        let mut r = vec![0.0; self.n];
        r[i] = 1.0;
        r[j] = -1.0;
        self.push(r, 0.0, label);
    }

    /// Slack of every constraint at `x` (negative means violated).
    pub fn slacks(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(r, b)| r.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() - b)
            .collect()
    }

    pub fn min_slack(&self, x: &[f64]) -> f64 {
        self.slacks(x).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Labels of constraints within `tol` of binding at `x`.
    pub fn binding(&self, x: &[f64], tol: f64) -> Vec<String> {
        self.slacks(x)
            .into_iter()
            .zip(&self.labels)
            .filter(|(s, _)| *s <= tol)
            .map(|(_, l)| l.clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop once ½‖r‖² falls below this.
    pub cost_tolerance: f64,
    /// Stop once an accepted step improves the cost by less than this fraction.
    pub relative_tolerance: f64,
    pub step_tolerance: f64,
    pub fd_step: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cost_tolerance: 1e-26,
            relative_tolerance: 1e-12,
            step_tolerance: 1e-13,
            fd_step: 1e-7,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    /// ½‖r‖²
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

fn half_sq(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// Minimizes `½ ‖residuals(x)‖²` subject to `constraints`, starting from a
/// feasible `x0`.
pub fn least_squares<F>(
    residuals: F,
    x0: &[f64],
    constraints: &LinearInequalities,
    opts: &LmOptions,
) -> Result<LmReport>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let n = x0.len();
    if constraints.dim() != n {
        return Err(Error::Domain("constraint dimension mismatch".into()));
    }
    let start_slack = constraints.min_slack(x0);
    if start_slack < -1e-10 {
        return Err(Error::Infeasible(format!(
            "starting point violates constraints by {:e}: {:?}",
            -start_slack,
            constraints.binding(x0, -1e-10)
        )));
    }
    let mut x = x0.to_vec();
    let mut r = residuals(&x)?;
    let m = r.len();
    let mut cost = half_sq(&r);
    let mut mu = opts.initial_damping;
    let mut trace = vec![cost];
    let mut converged = cost <= opts.cost_tolerance;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let jac = jacobian(&residuals, &x, &r, opts.fd_step)?;
        // normal equations
        let mut jtj = vec![0.0; n * n];
        let mut jtr = vec![0.0; n];
        for i in 0..n {
            for j in i..n {
                let v: f64 = (0..m).map(|k| jac[i][k] * jac[j][k]).sum();
                jtj[i * n + j] = v;
                jtj[j * n + i] = v;
            }
            jtr[i] = (0..m).map(|k| jac[i][k] * r[k]).sum();
        }
        let max_diag = (0..n).map(|i| jtj[i * n + i]).fold(0.0, f64::max);
        let floor = 1e-12 * max_diag.max(1e-12);

        let mut accepted = false;
        while mu < 1e16 {
            let mut h = jtj.clone();
            for i in 0..n {
                h[i * n + i] += mu * jtj[i * n + i].max(floor) + floor;
            }
            let mut qp = QuadraticProgram::new(h, jtr.clone());
            let slacks = constraints.slacks(&x);
            for ((row, _), s) in constraints.rows.iter().zip(&constraints.rhs).zip(&slacks) {
                // row·(x + d) ≥ rhs  ⇔  row·d ≥ -slack
                qp.greater_equal(row.clone(), -s.max(0.0));
            }
            let step = match qp.solve() {
                Ok(s) => s.x,
                Err(_) => {
                    mu *= 10.0;
                    continue;
                }
            };
            let x_new: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + d).collect();
            let r_new = residuals(&x_new)?;
            let cost_new = half_sq(&r_new);
            if cost_new.is_finite() && cost_new < cost {
                let step_norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
                let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let rel_gain = (cost - cost_new) / cost.max(f64::MIN_POSITIVE);
                x = x_new;
                r = r_new;
                cost = cost_new;
                trace.push(cost);
                mu = (mu / 3.0).max(1e-12);
                accepted = true;
                if cost <= opts.cost_tolerance
                    || rel_gain < opts.relative_tolerance
                    || step_norm <= opts.step_tolerance * (x_norm + opts.step_tolerance)
                {
                    converged = true;
                }
                break;
            }
            mu *= 4.0;
        }
        if !accepted {
            // no descent direction left at any damping: a constrained stationary point
            converged = true;
        }
    }

    Ok(LmReport {
        x,
        residuals: r,
        cost,
        iterations,
        converged,
        trace,
    })
}

fn jacobian<F>(residuals: &F, x: &[f64], r0: &[f64], fd: f64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    (0..x.len())
        .into_par_iter()
        .map(|j| {
            let h = fd * x[j].abs().max(1e-3);
            let mut xp = x.to_vec();
            xp[j] += h;
            let rp = residuals(&xp)?;
            Ok(rp.iter().zip(r0).map(|(a, b)| (a - b) / h).collect())
        })
        .collect()
}
