//! Implied copula: a ladder of systemic hazard scenarios, deterministic
//! large-pool losses per scenario, and scenario probabilities fitted by two
//! quadratic programs.
//!
//! Stage one minimizes the squared (band-scaled) NPVs over the probability
//! simplex. Stage two minimizes the squared second differences of the
//! probabilities while every instrument stays inside its bid/ask band; since
//! the leg matrices are fixed, "theoretical spread inside the band" is a
//! linear inequality in the probabilities and needs no iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::instruments::{
    DiscountCurve, Instrument, PaymentSchedule, Quote, QuoteType, TrancheDef,
};
use crate::math::qp::QuadraticProgram;
use crate::mispricing;

const BPS: f64 = 1e4;
const SIMPLEX_TOL: f64 = 1e-10;
const BAND_MARGIN: f64 = 1e-8;
const STAGE2_RIDGE: f64 = 1e-10;

/// Recovery per scenario as a function of its 5y default probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum RecoveryLink {
    /// `max(0, intercept - slope * PD5)`.
    FlooredLinear {
        intercept: f64,
        slope: f64,
    },
    /// `a * ln(PD5)` clamped to `[0, 1]`; `PD5 = 0` maps to the cap.
    Logarithmic {
        a: f64,
    },
    Constant {
        recovery: f64,
    },
}

impl Default for RecoveryLink {
    fn default() -> Self {
        Self::FlooredLinear {
            intercept: 0.52,
            slope: 6.9,
        }
    }
}

const LINK_HORIZON: f64 = 5.0;

/// Scenario recovery for hazard `lambda`.
pub fn recovery_link(lambda: f64, link: &RecoveryLink) -> Result<f64> {
    if !(lambda >= 0.0) {
        return domain(format!("scenario hazard {lambda} must be non-negative"));
    }
    let pd5 = -(-lambda * LINK_HORIZON).exp_m1();
    Ok(match *link {
        RecoveryLink::FlooredLinear { intercept, slope } => (intercept - slope * pd5).max(0.0),
        RecoveryLink::Logarithmic { a } => {
            if pd5 == 0.0 {
                1.0
            } else {
                (a * pd5.ln()).clamp(0.0, 1.0)
            }
        }
        RecoveryLink::Constant { recovery } => recovery,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLadder {
    pub lambdas: Vec<f64>,
    pub maturity_ref: f64,
    pub recoveries: Vec<f64>,
}

impl ScenarioLadder {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Pool default rate of scenario `j` (0-based) at `t`.
    pub fn default_rate(&self, j: usize, t: f64) -> f64 {
        -(-self.lambdas[j] * t).exp_m1()
    }
}

/// `h` scenarios whose default rates at `maturity` are `0, 1/h, ..., (h-1)/h`.
pub fn build_ladder(h: usize, maturity: f64, link: &RecoveryLink) -> Result<ScenarioLadder> {
    if h < 2 {
        return domain("ladder needs at least two scenarios");
    }
    if !(maturity > 0.0) {
        return domain(format!("ladder maturity {maturity} must be positive"));
    }
    let lambdas: Vec<f64> = (0..h)
        .map(|j| -(-(j as f64) / h as f64).ln_1p() / maturity)
        .collect();
    let recoveries = lambdas
        .iter()
        .map(|l| recovery_link(*l, link))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioLadder {
        lambdas,
        maturity_ref: maturity,
        recoveries,
    })
}

/// Per-scenario legs (rows) for each instrument (columns).
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioLegMatrix {
    pub defleg: Vec<Vec<f64>>,
    pub dv01: Vec<Vec<f64>>,
    /// Receiver value at the market mid: premium leg minus default leg.
    pub npv: Vec<Vec<f64>>,
    pub quotes: Vec<Quote>,
}

impl ScenarioLegMatrix {
    pub fn scenarios(&self) -> usize {
        self.defleg.len()
    }

    pub fn instruments(&self) -> usize {
        self.quotes.len()
    }

    fn column_mix(&self, m: &[Vec<f64>], k: usize, p: &[f64]) -> f64 {
        m.iter().zip(p).map(|(row, pj)| pj * row[k]).sum()
    }

    /// Model quote (bps or upfront) of instrument `k` under probabilities `p`.
    pub fn theoretical(&self, k: usize, p: &[f64]) -> Result<f64> {
        let dl = self.column_mix(&self.defleg, k, p);
        let dv = self.column_mix(&self.dv01, k, p);
        match self.quotes[k].quote_type {
            QuoteType::Running => {
                if !(dv > 0.0) {
                    return Err(Error::DegenerateAnnuity(dv));
                }
                Ok(dl / dv * BPS)
            }
            QuoteType::Upfront { running_bps } => Ok(dl - running_bps / BPS * dv),
        }
    }

    pub fn standardized_mispricings(&self, p: &[f64]) -> Result<Vec<f64>> {
        (0..self.instruments())
            .map(|k| {
                Ok(mispricing::standardized(
                    self.theoretical(k, p)?,
                    &self.quotes[k],
                ))
            })
            .collect()
    }

    /// Linear form `row . p >= 0` equivalent to the model quote being at
    /// least (`upper = false`) or at most (`upper = true`) `level`.
    fn band_row(&self, k: usize, level: f64, upper: bool) -> Vec<f64> {
        let sign = if upper { -1.0 } else { 1.0 };
        (0..self.scenarios())
            .map(|j| {
                let (dl, dv) = (self.defleg[j][k], self.dv01[j][k]);
                let v = match self.quotes[k].quote_type {
                    QuoteType::Running => dl - level / BPS * dv,
                    QuoteType::Upfront { running_bps } => dl - running_bps / BPS * dv - level,
                };
                sign * v
            })
            .collect()
    }

    /// NPV under probabilities `p` per unit of half bid-ask premium.
    fn band_scale(&self, k: usize) -> f64 {
        let q = &self.quotes[k];
        let half = q.half_band();
        let mean_dv = self.dv01.iter().map(|r| r[k]).sum::<f64>() / self.scenarios() as f64;
        let s = match q.quote_type {
            QuoteType::Running => half / BPS * mean_dv,
            QuoteType::Upfront { .. } => half,
        };
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }
}

fn loss_path(tranche: Option<&TrancheDef>, recovery: f64, pd: f64) -> f64 {
    let pool = (1.0 - recovery) * pd;
    match tranche {
        Some(t) => t.loss_fraction(pool),
        None => pool,
    }
}

/// Deterministic large-pool legs of every scenario for every quote. Losses
/// arrive mid-period; premium accrues on the mid-period outstanding notional
/// (count-based for the index).
pub fn scenario_legs(
    ladder: &ScenarioLadder,
    quotes: &[Quote],
    sched: &PaymentSchedule,
    disc: &DiscountCurve,
) -> Result<ScenarioLegMatrix> {
    if quotes.is_empty() {
        return domain("scenario legs need at least one quote");
    }
    if let Some(q) = quotes
        .iter()
        .find(|q| (q.maturity - sched.maturity()).abs() > 1e-9)
    {
        return domain(format!(
            "quote {} does not match the {}y schedule",
            q.label(),
            sched.maturity()
        ));
    }
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..ladder.len())
        .into_par_iter()
        .map(|j| {
            let r = ladder.recoveries[j];
            let mut dls = Vec::with_capacity(quotes.len());
            let mut dvs = Vec::with_capacity(quotes.len());
            for q in quotes {
                let tranche = q.instrument.tranche();
                let mut dl = 0.0;
                let mut dv = 0.0;
                for i in 0..sched.len() {
                    let (t0, t1, tm) = (sched.start(i), sched.times()[i], sched.mid(i));
                    let l0 = loss_path(tranche, r, ladder.default_rate(j, t0));
                    let l1 = loss_path(tranche, r, ladder.default_rate(j, t1));
                    dl += disc.df(tm) * (l1 - l0);
                    let outstanding = match q.instrument {
                        Instrument::Index => ladder.default_rate(j, tm),
                        Instrument::Tranche(_) => loss_path(tranche, r, ladder.default_rate(j, tm)),
                    };
                    dv += sched.accrual(i) * disc.df(t1) * (1.0 - outstanding);
                }
                dls.push(dl);
                dvs.push(dv);
            }
            (dls, dvs)
        })
        .collect();
    let (defleg, dv01): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let npv = defleg
        .iter()
        .zip(&dv01)
        .map(|(dl, dv)| {
            quotes
                .iter()
                .enumerate()
                .map(|(k, q)| {
                    q.npv_at_mid(&crate::instruments::Legs {
                        default_leg: dl[k],
                        dv01: dv[k],
                    })
                })
                .collect()
        })
        .collect();
    Ok(ScenarioLegMatrix {
        defleg,
        dv01,
        npv,
        quotes: quotes.to_vec(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioProbabilities {
    pub p: Vec<f64>,
    pub stage1_mispricing: Vec<f64>,
    pub stage2_mispricing: Option<Vec<f64>>,
    pub stage1_objective: f64,
    pub smoothness: f64,
    /// Stage one left some instrument outside its band, so stage two was skipped.
    pub stage2_skipped: bool,
}

impl ScenarioProbabilities {
    pub fn final_mispricing(&self) -> &[f64] {
        self.stage2_mispricing
            .as_deref()
            .unwrap_or(&self.stage1_mispricing)
    }
}

fn simplex(qp: &mut QuadraticProgram, h: usize) {
    qp.equality(vec![1.0; h], 1.0);
    for j in 0..h {
        let mut row = vec![0.0; h];
        row[j] = 1.0;
        qp.greater_equal(row, 0.0);
    }
}

fn clean_simplex(mut p: Vec<f64>) -> Vec<f64> {
    p.iter_mut().for_each(|v| *v = v.max(0.0));
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

/// Sum of squared second differences of `p`.
pub fn second_difference_norm(p: &[f64]) -> f64 {
    p.windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]).powi(2))
        .sum()
}

/// Stage one: `min_P P' N N' P` on the simplex, with each NPV column divided
/// by the NPV of half its bid-ask band so instruments are comparable.
pub fn calibrate_stage1(matrix: &ScenarioLegMatrix) -> Result<ScenarioProbabilities> {
    let h = matrix.scenarios();
    let k = matrix.instruments();
    if h < k {
        return domain(format!("{h} scenarios cannot fit {k} instruments"));
    }
    let scales: Vec<f64> = (0..k).map(|c| matrix.band_scale(c)).collect();
    let n: Vec<Vec<f64>> = matrix
        .npv
        .iter()
        .map(|row| row.iter().zip(&scales).map(|(v, s)| v / s).collect())
        .collect();
    let mut hess = vec![0.0; h * h];
    for a in 0..h {
        for b in a..h {
            let v: f64 = (0..k).map(|c| n[a][c] * n[b][c]).sum::<f64>() * 2.0;
            hess[a * h + b] = v;
            hess[b * h + a] = v;
        }
    }
    let trace: f64 = (0..h).map(|j| hess[j * h + j]).sum();
    let mut qp = QuadraticProgram::new(hess, vec![0.0; h]);
    qp.ridge(1e-12 * trace.max(1.0) / h as f64);
    simplex(&mut qp, h);
    let sol = qp.solve()?;
    if sol.max_violation > SIMPLEX_TOL {
        return Err(Error::Optimizer {
            reason: "stage one solution violates the simplex".into(),
            kkt_residual: sol.max_violation,
        });
    }
    let p = clean_simplex(sol.x);
    let objective = (0..k)
        .map(|c| (0..h).map(|j| p[j] * n[j][c]).sum::<f64>().powi(2))
        .sum();
    let stage1_mispricing = matrix.standardized_mispricings(&p)?;
    Ok(ScenarioProbabilities {
        smoothness: second_difference_norm(&p),
        p,
        stage1_mispricing,
        stage2_mispricing: None,
        stage1_objective: objective,
        stage2_skipped: false,
    })
}

/// Stage two: smoothest probabilities keeping every instrument inside its
/// bid/ask band.
pub fn calibrate_stage2(
    matrix: &ScenarioLegMatrix,
    stage1: &ScenarioProbabilities,
) -> Result<ScenarioProbabilities> {
    if stage1
        .stage1_mispricing
        .iter()
        .any(|m| m.abs() > 1.0 + 1e-9)
    {
        return Ok(ScenarioProbabilities {
            stage2_skipped: true,
            ..stage1.clone()
        });
    }
    let h = matrix.scenarios();
    let mut hess = vec![0.0; h * h];
    for j in 1..h.saturating_sub(1) {
        let idx = [j - 1, j, j + 1];
        let coef = [1.0, -2.0, 1.0];
        for (a, ca) in idx.iter().zip(coef) {
            for (b, cb) in idx.iter().zip(coef) {
                hess[a * h + b] += 2.0 * ca * cb;
            }
        }
    }
    let mut qp = QuadraticProgram::new(hess, vec![0.0; h]);
    qp.ridge(STAGE2_RIDGE);
    simplex(&mut qp, h);
    for k in 0..matrix.instruments() {
        let q = &matrix.quotes[k];
        let margin = BAND_MARGIN * q.half_band();
        qp.greater_equal(matrix.band_row(k, q.bid + margin, false), 0.0);
        qp.greater_equal(matrix.band_row(k, q.ask - margin, true), 0.0);
    }
    let sol = qp.solve()?;
    if sol.max_violation > SIMPLEX_TOL {
        return Err(Error::Optimizer {
            reason: "stage two solution violates its constraints".into(),
            kkt_residual: sol.max_violation,
        });
    }
    let p = clean_simplex(sol.x);
    let mis = matrix.standardized_mispricings(&p)?;
    Ok(ScenarioProbabilities {
        smoothness: second_difference_norm(&p),
        p,
        stage1_mispricing: stage1.stage1_mispricing.clone(),
        stage2_mispricing: Some(mis),
        stage1_objective: stage1.stage1_objective,
        stage2_skipped: false,
    })
}

/// Both stages on one maturity's quotes.
#[derive(Debug, Clone, Serialize)]
pub struct ImpliedCopulaFit {
    pub ladder: ScenarioLadder,
    pub probabilities: ScenarioProbabilities,
    pub theoretical: Vec<f64>,
    pub quotes: Vec<Quote>,
}

pub fn calibrate(
    quotes: &[Quote],
    h: usize,
    link: &RecoveryLink,
    sched: &PaymentSchedule,
    disc: &DiscountCurve,
) -> Result<ImpliedCopulaFit> {
    let ladder = build_ladder(h, sched.maturity(), link)?;
    let matrix = scenario_legs(&ladder, quotes, sched, disc)?;
    let s1 = calibrate_stage1(&matrix)?;
    let s2 = calibrate_stage2(&matrix, &s1)?;
    let theoretical = (0..matrix.instruments())
        .map(|k| matrix.theoretical(k, &s2.p))
        .collect::<Result<Vec<_>>>()?;
    Ok(ImpliedCopulaFit {
        ladder,
        probabilities: s2,
        theoretical,
        quotes: quotes.to_vec(),
    })
}

/// Local maxima of `p` (strictly above the left neighbour, at least the right).
pub fn local_modes(p: &[f64]) -> Vec<usize> {
    (1..p.len().saturating_sub(1))
        .filter(|&j| p[j] > p[j - 1] && p[j] >= p[j + 1] && p[j] > 1e-8)
        .collect()
}
