//! Compound and base correlation.
//!
//! A [`CopulaContext`] fixes everything but the correlation: pool marginals,
//! payment grid, discounting and quadrature. Compound correlation prices an
//! `(A, B)` tranche with one correlation for both pieces; base correlation
//! prices it as a difference of two equity tranches under `rho_A` and
//! `rho_B`, which can produce negative expected tranche losses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gausscop::{flat_hazard_from_index, LossDistribution, Pool};
use crate::instruments::{
    theoretical_quote, tranche_legs_from_etl, DiscountCurve, EtlCurve, Instrument, Legs,
    PaymentSchedule, Quote, QuoteType, TimingConvention, TrancheDef,
};
use crate::math::interp::{Interpolation, Interpolator};
use crate::math::quadrature::FactorQuadrature;
use crate::math::roots;

/// Largest correlation used in scans and root searches.
pub const RHO_MAX: f64 = 0.9999;
pub const SCAN_STEP: f64 = 0.005;
const ROOT_TOL: f64 = 1e-7;
const BASE_TOL: f64 = 1e-11;
const REPRICE_BPS: f64 = 0.1;
const REPRICE_UPFRONT_REL: f64 = 1e-3;

/// Everything needed to price a tranche except the correlation.
#[derive(Debug, Clone)]
pub struct CopulaContext {
    pub pool: Pool,
    pub sched: PaymentSchedule,
    pub disc: DiscountCurve,
    pub timing: TimingConvention,
    pub quadrature: FactorQuadrature,
}

impl CopulaContext {
    pub fn new(pool: Pool, sched: PaymentSchedule, disc: DiscountCurve) -> Self {
        Self {
            pool,
            sched,
            disc,
            timing: TimingConvention::NotionalAtPeriodEnd,
            quadrature: FactorQuadrature::default(),
        }
    }

    /// Homogeneous pool whose flat hazard reproduces an index spread.
    pub fn homogeneous_from_index(
        index_spread_bps: f64,
        recovery: f64,
        names: usize,
        maturity: f64,
        disc: DiscountCurve,
    ) -> Result<Self> {
        let sched = PaymentSchedule::quarterly(maturity)?;
        let hazard = flat_hazard_from_index(index_spread_bps, recovery, &sched, &disc)?;
        Ok(Self::new(
            Pool::homogeneous(names, hazard, recovery)?,
            sched,
            disc,
        ))
    }

    pub fn with_pool(&self, pool: Pool) -> Self {
        Self {
            pool,
            ..self.clone()
        }
    }

    pub fn distributions(&self, rho: f64) -> Result<Vec<LossDistribution>> {
        self.pool
            .loss_distributions(&self.quadrature, rho, &self.sched)
    }

    fn curve(&self, values: Vec<f64>) -> EtlCurve {
        EtlCurve {
            times: self.sched.times().to_vec(),
            values,
        }
    }

    /// `E[L^{0,B}_t]` on the payment grid under correlation `rho`.
    pub fn equity_etl(&self, rho: f64, detachment: f64) -> Result<EtlCurve> {
        let dists = self.distributions(rho)?;
        Ok(self.curve(
            dists
                .iter()
                .map(|d| d.expected_equity_loss(detachment))
                .collect(),
        ))
    }

    /// Compound-correlation tranche ETL.
    pub fn tranche_etl(&self, rho: f64, tranche: &TrancheDef) -> Result<EtlCurve> {
        let dists = self.distributions(rho)?;
        Ok(self.curve(
            dists
                .iter()
                .map(|d| d.expected_tranche_loss(tranche))
                .collect(),
        ))
    }

    /// Base-correlation tranche ETL, `[B f(0,B; rho_B) - A f(0,A; rho_A)] / (B - A)`.
    pub fn base_etl(&self, rho_a: f64, rho_b: f64, tranche: &TrancheDef) -> Result<EtlCurve> {
        let (a, b) = (tranche.attachment, tranche.detachment);
        let upper = self.equity_etl(rho_b, b)?;
        if a == 0.0 {
            return Ok(upper);
        }
        let lower = self.equity_etl(rho_a, a)?;
        Ok(self.curve(
            upper
                .values
                .iter()
                .zip(&lower.values)
                .map(|(fb, fa)| (b * fb - a * fa) / (b - a))
                .collect(),
        ))
    }

    pub fn legs(&self, etl: &EtlCurve) -> Result<Legs> {
        tranche_legs_from_etl(etl, &self.sched, &self.disc, self.timing)
    }

    pub fn value(&self, etl: &EtlCurve, quote_type: &QuoteType) -> Result<f64> {
        theoretical_quote(quote_type, &self.legs(etl)?)
    }
}

fn quote_tranche(quote: &Quote) -> Result<TrancheDef> {
    match quote.instrument {
        Instrument::Tranche(t) => Ok(t),
        Instrument::Index => domain("correlation is implied from tranche quotes, not the index"),
    }
}

/// Model spread (bps) or upfront of a tranche under compound correlation.
pub fn tranche_spread_vs_rho(
    ctx: &CopulaContext,
    tranche: &TrancheDef,
    quote_type: &QuoteType,
    rho: f64,
) -> Result<f64> {
    ctx.value(&ctx.tranche_etl(rho, tranche)?, quote_type)
}

/// Correlation grid `0, 0.005, ..., 0.995` closed with [`RHO_MAX`].
pub fn scan_grid(step: f64) -> Vec<f64> {
    let n = (0.995 / step + 1e-9).floor() as usize;
    let mut g: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
    g.push(RHO_MAX);
    g
}

/// Model values along a correlation grid; a failing node aborts the scan.
pub fn scan(
    ctx: &CopulaContext,
    tranche: &TrancheDef,
    quote_type: &QuoteType,
    grid: &[f64],
) -> Result<Vec<f64>> {
    grid.par_iter()
        .map(|&rho| {
            tranche_spread_vs_rho(ctx, tranche, quote_type, rho).map_err(|e| Error::ScanNode {
                rho,
                reason: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Invertibility {
    Unique,
    Multiple,
    NonInvertible,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompoundResult {
    pub tranche: TrancheDef,
    pub maturity: f64,
    pub market: f64,
    pub roots: Vec<f64>,
    pub status: Invertibility,
    /// Smallest and largest model value over the scan.
    pub attainable_range: (f64, f64),
    pub grid: Vec<f64>,
    pub curve: Vec<f64>,
}

impl CompoundResult {
    pub fn invertible(&self) -> bool {
        self.status != Invertibility::NonInvertible
    }
}

/// Finds every compound correlation reproducing the quote mid.
pub fn invert_compound(quote: &Quote, ctx: &CopulaContext) -> Result<CompoundResult> {
    invert_compound_with(quote, ctx, SCAN_STEP)
}

pub fn invert_compound_with(
    quote: &Quote,
    ctx: &CopulaContext,
    step: f64,
) -> Result<CompoundResult> {
    let tranche = quote_tranche(quote)?;
    let grid = scan_grid(step);
    let curve = scan(ctx, &tranche, &quote.quote_type, &grid)?;
    let diff: Vec<f64> = curve.iter().map(|v| v - quote.mid).collect();
    let mut found = Vec::new();
    for i in 0..grid.len() {
        if diff[i] == 0.0 {
            found.push(grid[i]);
        }
        if i + 1 < grid.len() && diff[i] * diff[i + 1] < 0.0 {
            let root = roots::bisect(
                |rho| Ok(tranche_spread_vs_rho(ctx, &tranche, &quote.quote_type, rho)? - quote.mid),
                grid[i],
                grid[i + 1],
                ROOT_TOL,
            )?;
            found.push(root);
        }
    }
    let status = match found.len() {
        0 => Invertibility::NonInvertible,
        1 => Invertibility::Unique,
        _ => Invertibility::Multiple,
    };
    let lo = curve.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(CompoundResult {
        tranche,
        maturity: quote.maturity,
        market: quote.mid,
        roots: found,
        status,
        attainable_range: (lo, hi),
        grid,
        curve,
    })
}

/// Base correlations by detachment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseCurve {
    pub detachments: Vec<f64>,
    pub correlations: Vec<f64>,
    pub interpolation: Interpolation,
}

impl BaseCurve {
    pub fn new(
        detachments: Vec<f64>,
        correlations: Vec<f64>,
        interpolation: Interpolation,
    ) -> Result<Self> {
        if detachments.len() != correlations.len() || detachments.is_empty() {
            return domain("base curve needs matching, non-empty detachments and correlations");
        }
        if correlations.iter().any(|r| !(0.0..1.0).contains(r)) {
            return domain("base correlations must lie in [0, 1)");
        }
        Ok(Self {
            detachments,
            correlations,
            interpolation,
        })
    }

    /// Correlation at detachment `k`; flat outside the quoted range.
    pub fn rho_at(&self, k: f64) -> f64 {
        if self.detachments.len() == 1 {
            return self.correlations[0];
        }
        Interpolator::new(
            self.interpolation,
            self.detachments.clone(),
            self.correlations.clone(),
        )
        .map(|i| i.eval(k))
        .unwrap_or(self.correlations[0])
        .clamp(0.0, RHO_MAX)
    }
}

fn reprice_ok(model: f64, market: f64, quote_type: &QuoteType) -> bool {
    match quote_type {
        QuoteType::Running => (model - market).abs() <= REPRICE_BPS,
        QuoteType::Upfront { .. } => {
            (model - market).abs() <= REPRICE_UPFRONT_REL * market.abs().max(1e-2)
        }
    }
}

/// Value of `(A, B)` under base correlations `rho_a`, `rho_b`.
pub fn base_tranche_value(
    ctx: &CopulaContext,
    tranche: &TrancheDef,
    quote_type: &QuoteType,
    rho_a: f64,
    rho_b: f64,
) -> Result<f64> {
    ctx.value(&ctx.base_etl(rho_a, rho_b, tranche)?, quote_type)
}

/// Checks that tranche quotes tile `[0, K]` without gaps, equity first.
fn adjacent_structure(quotes: &[Quote]) -> Result<Vec<(TrancheDef, &Quote)>> {
    let mut v: Vec<(TrancheDef, &Quote)> = quotes
        .iter()
        .filter_map(|q| q.instrument.tranche().map(|t| (*t, q)))
        .collect();
    v.sort_by(|a, b| a.0.attachment.total_cmp(&b.0.attachment));
    if v.is_empty() || v[0].0.attachment != 0.0 {
        return domain("base bootstrap needs an equity tranche");
    }
    for w in v.windows(2) {
        if (w[1].0.attachment - w[0].0.detachment).abs() > 1e-12 {
            return domain(format!(
                "tranches {} and {} are not adjacent",
                w[0].0.label(),
                w[1].0.label()
            ));
        }
    }
    Ok(v)
}

/// Bootstraps base correlations detachment by detachment.
pub fn bootstrap_base(
    quotes: &[Quote],
    ctx: &CopulaContext,
    interpolation: Interpolation,
) -> Result<BaseCurve> {
    let structure = adjacent_structure(quotes)?;
    let mut dets = Vec::new();
    let mut rhos: Vec<f64> = Vec::new();
    for (tranche, quote) in structure {
        let rho_a = rhos.last().copied().unwrap_or(0.0);
        let f = |rho_b: f64| base_tranche_value(ctx, &tranche, &quote.quote_type, rho_a, rho_b);
        let (v0, v1) = (f(0.0)?, f(RHO_MAX)?);
        let (min, max) = (v0.min(v1), v0.max(v1));
        let rho_b = match roots::bisect(|r| Ok(f(r)? - quote.mid), 0.0, RHO_MAX, BASE_TOL) {
            Ok(r) => r,
            Err(Error::NoBracket(_)) => {
                return Err(Error::BaseUnattainable {
                    attachment: tranche.attachment,
                    detachment: tranche.detachment,
                    market: quote.mid,
                    min,
                    max,
                })
            }
            Err(e) => return Err(e),
        };
        let model = f(rho_b)?;
        if !reprice_ok(model, quote.mid, &quote.quote_type) {
            return Err(Error::Numeric(format!(
                "base correlation {rho_b} reprices {} at {model} against {}",
                tranche.label(),
                quote.mid
            )));
        }
        dets.push(tranche.detachment);
        rhos.push(rho_b);
    }
    BaseCurve::new(dets, rhos, interpolation)
}

/// Base-correlation ETL of any tranche, correlations read off the curve.
pub fn base_etl_curve(
    base: &BaseCurve,
    tranche: &TrancheDef,
    ctx: &CopulaContext,
) -> Result<EtlCurve> {
    let rho_a = if tranche.attachment == 0.0 {
        0.0
    } else {
        base.rho_at(tranche.attachment)
    };
    ctx.base_etl(rho_a, base.rho_at(tranche.detachment), tranche)
}

/// Smallest value the top quoted tranche can reach: everything below it is
/// bootstrapped, then its detachment correlation is pushed to [`RHO_MAX`].
pub fn min_attainable_senior_spread(quotes: &[Quote], ctx: &CopulaContext) -> Result<f64> {
    let structure = adjacent_structure(quotes)?;
    let (top, quote) = *structure.last().expect("non-empty structure");
    let below: Vec<Quote> = structure[..structure.len() - 1]
        .iter()
        .map(|(_, q)| (*q).clone())
        .collect();
    let rho_a = if below.is_empty() {
        0.0
    } else {
        *bootstrap_base(&below, ctx, Interpolation::Linear)?
            .correlations
            .last()
            .expect("non-empty curve")
    };
    let v0 = base_tranche_value(ctx, &top, &quote.quote_type, rho_a, 0.0)?;
    let v1 = base_tranche_value(ctx, &top, &quote.quote_type, rho_a, RHO_MAX)?;
    Ok(v0.min(v1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    Negativity,
    TimeDecreasing,
    Convexity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub time: f64,
    pub detail: String,
}

const ARB_TOL: f64 = 1e-12;

/// Negative values and decreases in time of an expected tranche loss curve.
pub fn arbitrage_report(etl: &EtlCurve) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut prev = 0.0;
    for (t, v) in etl.times.iter().zip(&etl.values) {
        if *v < -ARB_TOL {
            out.push(Violation {
                kind: ViolationKind::Negativity,
                time: *t,
                detail: format!("expected tranche loss {v:.6e} below zero"),
            });
        }
        if *v < prev - ARB_TOL {
            out.push(Violation {
                kind: ViolationKind::TimeDecreasing,
                time: *t,
                detail: format!("expected tranche loss falls from {prev:.6e} to {v:.6e}"),
            });
        }
        prev = *v;
    }
    out
}

/// Concavity of `g(k) = k f(T, 0, k)` across detachments at one date; a
/// convex kink would imply a negative loss density.
pub fn equity_concavity_report(
    time: f64,
    detachments: &[f64],
    equity_etl: &[f64],
) -> Vec<Violation> {
    let mut pts: Vec<(f64, f64)> = std::iter::once((0.0, 0.0))
        .chain(detachments.iter().zip(equity_etl).map(|(k, f)| (*k, k * f)))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.windows(3)
        .filter_map(|w| {
            let s1 = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            let s2 = (w[2].1 - w[1].1) / (w[2].0 - w[1].0);
            (s2 > s1 + ARB_TOL).then(|| Violation {
                kind: ViolationKind::Convexity,
                time,
                detail: format!(
                    "g slope rises from {s1:.6e} to {s2:.6e} at detachment {}",
                    w[1].0
                ),
            })
        })
        .collect()
}
