//! One-factor Gaussian copula: conditional default probabilities, homogeneous
//! and heterogeneous finite-pool default-count and loss laws, a flat-hazard
//! helper for index calibration, and a Monte Carlo cross-check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::instruments::{
    fair_spread, index_legs, DiscountCurve, EtlCurve, PaymentSchedule, TimingConvention, TrancheDef,
};
use crate::math::normal;
use crate::math::quadrature::{FactorQuadrature, FactorRule};
use crate::math::roots;

const NORMALIZATION_TOL: f64 = 1e-12;
const CONVERGENCE_TOL: f64 = 1e-10;
const PMF_FLOOR: f64 = 1e-22;

/// Discrete law of pool loss (or default count) on the grid `n * unit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossDistribution {
    pub unit: f64,
    pub probs: Vec<f64>,
    pub horizon: f64,
}

impl LossDistribution {
    pub fn new(unit: f64, probs: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(unit > 0.0) {
            return domain(format!("loss unit {unit} must be positive"));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Numeric("negative or NaN probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Numeric(format!("probabilities sum to {total}")));
        }
        Ok(Self {
            unit,
            probs,
            horizon,
        })
    }

    pub fn point_mass(unit: f64, at: usize, horizon: f64) -> Self {
        let mut probs = vec![0.0; at + 1];
        probs[at] = 1.0;
        Self {
            unit,
            probs,
            horizon,
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Pool loss fraction at grid point `n`, capped at one.
    pub fn loss_at(&self, n: usize) -> f64 {
        (n as f64 * self.unit).min(1.0)
    }

    /// Same probabilities reinterpreted on another unit (count law to loss law).
    pub fn with_unit(&self, unit: f64) -> Self {
        Self {
            unit,
            ..self.clone()
        }
    }

    pub fn mean_units(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    pub fn expected_loss(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| self.loss_at(n) * p)
            .sum()
    }

    /// `E[L^{A,B}]` as a fraction of tranche notional.
    pub fn expected_tranche_loss(&self, tranche: &TrancheDef) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(n, p)| tranche.loss_fraction(self.loss_at(n)) * p)
            .sum()
    }

    /// `E[L^{0,B}]`, the equity building block of base correlation.
    pub fn expected_equity_loss(&self, detachment: f64) -> f64 {
        let b = detachment;
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| self.loss_at(n).min(b) * p)
            .sum::<f64>()
            / b
    }

    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect()
    }
}

/// `Q(tau < T | S = s) = Φ((Φ⁻¹(1 − e^{−Λ(T)}) − √ρ s) / √(1 − ρ))`.
pub fn conditional_pd(rho: f64, cum_hazard: f64, s: f64) -> Result<f64> {
    check_rho(rho)?;
    if !(cum_hazard >= 0.0) {
        return domain(format!(
            "cumulative hazard {cum_hazard} must be non-negative"
        ));
    }
    let p = -(-cum_hazard).exp_m1();
    Ok(conditional_pd_from_threshold(rho, normal::inv_cdf(p), s))
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return domain(format!("correlation {rho} outside [0, 1)"));
    }
    Ok(())
}

fn conditional_pd_from_threshold(rho: f64, threshold: f64, s: f64) -> f64 {
    if threshold == f64::NEG_INFINITY {
        return 0.0;
    }
    if threshold == f64::INFINITY {
        return 1.0;
    }
    normal::cdf((threshold - rho.sqrt() * s) / (1.0 - rho).sqrt())
}

/// Precomputed `ln C(M, n)`.
struct Binomial {
    ln_choose: Vec<f64>,
}

impl Binomial {
    fn new(m: usize) -> Self {
        let lg = libm::lgamma(m as f64 + 1.0);
        let ln_choose = (0..=m)
            .map(|n| lg - libm::lgamma(n as f64 + 1.0) - libm::lgamma((m - n) as f64 + 1.0))
            .collect();
        Self { ln_choose }
    }

    /// Adds `weight * Binom(n; M, p)` into `out`, walking outward from the
    /// mode and stopping once terms are negligible.
    fn accumulate(&self, p: f64, weight: f64, out: &mut [f64]) {
        let m = self.ln_choose.len() - 1;
        if p <= 0.0 {
            out[0] += weight;
            return;
        }
        if p >= 1.0 {
            out[m] += weight;
            return;
        }
        let mode = (((m + 1) as f64 * p).floor() as usize).min(m);
        let (lp, lq) = (p.ln(), (-p).ln_1p());
        let peak = (self.ln_choose[mode] + mode as f64 * lp + (m - mode) as f64 * lq).exp();
        out[mode] += weight * peak;
        let odds = p / (1.0 - p);
        let mut term = peak;
        for n in mode..m {
            term *= (m - n) as f64 / (n + 1) as f64 * odds;
            if term < PMF_FLOOR * peak {
                break;
            }
            out[n + 1] += weight * term;
        }
        term = peak;
        for n in (1..=mode).rev() {
            term *= n as f64 / (m - n + 1) as f64 / odds;
            if term < PMF_FLOOR * peak {
                break;
            }
            out[n - 1] += weight * term;
        }
    }
}

fn normalize(mut probs: Vec<f64>) -> Vec<f64> {
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    probs
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Default-count law of `m` exchangeable names with marginal default
/// probability `p`, without a convergence check.
pub fn homogeneous_counts_with(
    cfg: &FactorQuadrature,
    m: usize,
    rho: f64,
    p: f64,
) -> Result<Vec<f64>> {
    check_rho(rho)?;
    if m == 0 {
        return domain("pool needs at least one name");
    }
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("default probability {p} outside [0, 1]"));
    }
    let binom = Binomial::new(m);
    let mut probs = vec![0.0; m + 1];
    if rho == 0.0 || p == 0.0 || p == 1.0 {
        binom.accumulate(p, 1.0, &mut probs);
        return Ok(probs);
    }
    let c = normal::inv_cdf(p);
    let rule = FactorRule::for_thresholds(cfg, rho, &[c]);
    for (s, w) in rule.nodes.iter().zip(&rule.weights) {
        binom.accumulate(conditional_pd_from_threshold(rho, c, *s), *w, &mut probs);
    }
    Ok(normalize(probs))
}

/// Default-count law of a homogeneous pool of `m` names at `horizon` with
/// cumulative hazard `cum_hazard`, unit `1/m`.
///
/// The factor integral is checked against a rule with every panel halved.
pub fn homogeneous_count_distribution(
    m: usize,
    horizon: f64,
    rho: f64,
    cum_hazard: f64,
) -> Result<LossDistribution> {
    if !(cum_hazard >= 0.0) {
        return domain(format!(
            "cumulative hazard {cum_hazard} must be non-negative"
        ));
    }
    let p = -(-cum_hazard).exp_m1();
    let cfg = FactorQuadrature::default();
    let coarse = homogeneous_counts_with(&cfg, m, rho, p)?;
    let fine = homogeneous_counts_with(&cfg.refined(), m, rho, p)?;
    let diff = max_abs_diff(&coarse, &fine);
    if diff > CONVERGENCE_TOL {
        return Err(Error::Numeric(format!(
            "factor quadrature not converged: refinement moved a probability by {diff:e}"
        )));
    }
    LossDistribution::new(1.0 / m as f64, fine, horizon)
}

/// Adds one Bernoulli name into a conditional count law in place.
fn add_name(law: &mut [f64], len: usize, p: f64) {
    for n in (1..=len).rev() {
        law[n] = law[n] * (1.0 - p) + law[n - 1] * p;
    }
    law[0] *= 1.0 - p;
}

fn distinct_thresholds(pds: &[f64]) -> Vec<f64> {
    let mut cs: Vec<f64> = pds
        .iter()
        .map(|p| normal::inv_cdf(*p))
        .filter(|c| c.is_finite())
        .collect();
    cs.sort_by(f64::total_cmp);
    cs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    cs
}

fn check_pds(pds: &[f64]) -> Result<()> {
    if pds.is_empty() {
        return domain("pool needs at least one name");
    }
    if let Some(p) = pds.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return domain(format!("default probability {p} outside [0, 1]"));
    }
    Ok(())
}

/// Default-count law for names with individual default probabilities.
pub fn heterogeneous_counts_with(
    cfg: &FactorQuadrature,
    pds: &[f64],
    rho: f64,
) -> Result<Vec<f64>> {
    check_rho(rho)?;
    check_pds(pds)?;
    let m = pds.len();
    let thresholds: Vec<f64> = pds.iter().map(|p| normal::inv_cdf(*p)).collect();
    let rule = if rho == 0.0 {
        FactorRule {
            nodes: vec![0.0],
            weights: vec![1.0],
        }
    } else {
        FactorRule::for_thresholds(cfg, rho, &distinct_thresholds(pds))
    };
    let mut probs = vec![0.0; m + 1];
    let mut law = vec![0.0; m + 1];
    for (s, w) in rule.nodes.iter().zip(&rule.weights) {
        law.iter_mut().for_each(|v| *v = 0.0);
        law[0] = 1.0;
        for (i, c) in thresholds.iter().enumerate() {
            add_name(&mut law, i + 1, conditional_pd_from_threshold(rho, *c, *s));
        }
        probs
            .iter_mut()
            .zip(&law)
            .for_each(|(acc, v)| *acc += w * v);
    }
    Ok(normalize(probs))
}

/// Default-count law of a heterogeneous pool, unit `1/M`.
pub fn heterogeneous_count_distribution(
    pds: &[f64],
    rho: f64,
    horizon: f64,
) -> Result<LossDistribution> {
    let cfg = FactorQuadrature::default();
    let coarse = heterogeneous_counts_with(&cfg, pds, rho)?;
    let fine = heterogeneous_counts_with(&cfg.refined(), pds, rho)?;
    let diff = max_abs_diff(&coarse, &fine);
    if diff > CONVERGENCE_TOL {
        return Err(Error::Numeric(format!(
            "factor quadrature not converged: refinement moved a probability by {diff:e}"
        )));
    }
    LossDistribution::new(1.0 / pds.len() as f64, fine, horizon)
}

/// Loss law of a heterogeneous pool on a grid of `unit`. A name losing
/// `(1 - R_i)/M` that falls between grid points is split between the two
/// neighbouring points so that its expected loss is preserved.
pub fn heterogeneous_loss_with(
    cfg: &FactorQuadrature,
    pds: &[f64],
    recoveries: &[f64],
    rho: f64,
    unit: f64,
    horizon: f64,
) -> Result<LossDistribution> {
    check_rho(rho)?;
    check_pds(pds)?;
    if pds.len() != recoveries.len() {
        return domain("one recovery per name required");
    }
    if recoveries.iter().any(|r| !(0.0..1.0).contains(r)) {
        return domain("recoveries must lie in [0, 1)");
    }
    if !(unit > 0.0) {
        return domain("loss unit must be positive");
    }
    let m = pds.len() as f64;
    let splits: Vec<(usize, f64)> = recoveries
        .iter()
        .map(|r| {
            let units = (1.0 - r) / m / unit;
            let k = (units + 1e-12).floor();
            (k as usize, (units - k).max(0.0))
        })
        .collect();
    let size = splits
        .iter()
        .map(|(k, f)| k + usize::from(*f > 0.0))
        .sum::<usize>()
        + 1;
    let thresholds: Vec<f64> = pds.iter().map(|p| normal::inv_cdf(*p)).collect();
    let rule = if rho == 0.0 {
        FactorRule {
            nodes: vec![0.0],
            weights: vec![1.0],
        }
    } else {
        FactorRule::for_thresholds(cfg, rho, &distinct_thresholds(pds))
    };
    let mut probs = vec![0.0; size];
    let mut law = vec![0.0; size];
    let mut next = vec![0.0; size];
    for (s, w) in rule.nodes.iter().zip(&rule.weights) {
        law.iter_mut().for_each(|v| *v = 0.0);
        law[0] = 1.0;
        let mut top = 0;
        for (c, (k, frac)) in thresholds.iter().zip(&splits) {
            let p = conditional_pd_from_threshold(rho, *c, *s);
            let (p_lo, p_hi) = (p * (1.0 - frac), p * frac);
            let new_top = top + k + usize::from(*frac > 0.0);
            next[..=new_top].iter_mut().for_each(|v| *v = 0.0);
            for n in 0..=top {
                let v = law[n];
                if v == 0.0 {
                    continue;
                }
                next[n] += v * (1.0 - p);
                next[n + k] += v * p_lo;
                if *frac > 0.0 {
                    next[n + k + 1] += v * p_hi;
                }
            }
            top = new_top;
            std::mem::swap(&mut law, &mut next);
        }
        probs
            .iter_mut()
            .zip(&law)
            .for_each(|(acc, v)| *acc += w * v);
    }
    LossDistribution::new(unit, normalize(probs), horizon)
}

/// Pool description used by copula pricing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pool {
    /// `names` identical names with a flat hazard rate and recovery.
    Homogeneous {
        names: usize,
        hazard: f64,
        recovery: f64,
    },
    /// Per-name flat hazards and recoveries, losses bucketed on `unit`.
    Heterogeneous {
        hazards: Vec<f64>,
        recoveries: Vec<f64>,
        unit: f64,
    },
}

impl Pool {
    pub fn homogeneous(names: usize, hazard: f64, recovery: f64) -> Result<Self> {
        if names == 0 || !(hazard >= 0.0) || !(0.0..1.0).contains(&recovery) {
            return domain("homogeneous pool needs names > 0, hazard >= 0, recovery in [0, 1)");
        }
        Ok(Self::Homogeneous {
            names,
            hazard,
            recovery,
        })
    }

    pub fn heterogeneous(hazards: Vec<f64>, recoveries: Vec<f64>) -> Result<Self> {
        if hazards.is_empty() || hazards.len() != recoveries.len() {
            return domain("heterogeneous pool needs one hazard and recovery per name");
        }
        if hazards.iter().any(|h| !(*h >= 0.0))
            || recoveries.iter().any(|r| !(0.0..1.0).contains(r))
        {
            return domain("hazards must be non-negative and recoveries in [0, 1)");
        }
        let unit = 1.0 / hazards.len() as f64;
        Ok(Self::Heterogeneous {
            hazards,
            recoveries,
            unit,
        })
    }

    pub fn names(&self) -> usize {
        match self {
            Self::Homogeneous { names, .. } => *names,
            Self::Heterogeneous { hazards, .. } => hazards.len(),
        }
    }

    /// Expected fraction of defaulted names by `t` (copula independent).
    pub fn expected_default_rate(&self, t: f64) -> f64 {
        match self {
            Self::Homogeneous { hazard, .. } => -(-hazard * t).exp_m1(),
            Self::Heterogeneous { hazards, .. } => {
                hazards.iter().map(|h| -(-h * t).exp_m1()).sum::<f64>() / hazards.len() as f64
            }
        }
    }

    pub fn expected_loss(&self, t: f64) -> f64 {
        match self {
            Self::Homogeneous { recovery, .. } => (1.0 - recovery) * self.expected_default_rate(t),
            Self::Heterogeneous {
                hazards,
                recoveries,
                ..
            } => {
                hazards
                    .iter()
                    .zip(recoveries)
                    .map(|(h, r)| (1.0 - r) * -(-h * t).exp_m1())
                    .sum::<f64>()
                    / hazards.len() as f64
            }
        }
    }

    /// Pool loss law at `t` under flat correlation `rho`.
    pub fn loss_distribution(
        &self,
        cfg: &FactorQuadrature,
        rho: f64,
        t: f64,
    ) -> Result<LossDistribution> {
        match self {
            Self::Homogeneous {
                names,
                hazard,
                recovery,
            } => {
                let p = -(-hazard * t).exp_m1();
                let probs = homogeneous_counts_with(cfg, *names, rho, p)?;
                LossDistribution::new((1.0 - recovery) / *names as f64, probs, t)
            }
            Self::Heterogeneous {
                hazards,
                recoveries,
                unit,
            } => {
                let pds: Vec<f64> = hazards.iter().map(|h| -(-h * t).exp_m1()).collect();
                heterogeneous_loss_with(cfg, &pds, recoveries, rho, *unit, t)
            }
        }
    }

    /// Loss laws on every payment date, evaluated in parallel.
    pub fn loss_distributions(
        &self,
        cfg: &FactorQuadrature,
        rho: f64,
        sched: &PaymentSchedule,
    ) -> Result<Vec<LossDistribution>> {
        sched
            .times()
            .par_iter()
            .map(|t| self.loss_distribution(cfg, rho, *t))
            .collect()
    }

    /// Expected pool loss and default-rate curves for index pricing.
    pub fn index_curves(&self, sched: &PaymentSchedule) -> (EtlCurve, EtlCurve) {
        let loss = sched
            .times()
            .iter()
            .map(|t| self.expected_loss(*t))
            .collect();
        let count = sched
            .times()
            .iter()
            .map(|t| self.expected_default_rate(*t))
            .collect();
        (
            EtlCurve {
                times: sched.times().to_vec(),
                values: loss,
            },
            EtlCurve {
                times: sched.times().to_vec(),
                values: count,
            },
        )
    }

    /// Same pool with every hazard multiplied by `factor`.
    pub fn scaled_hazards(&self, factor: f64) -> Self {
        match self {
            Self::Homogeneous {
                names,
                hazard,
                recovery,
            } => Self::Homogeneous {
                names: *names,
                hazard: hazard * factor,
                recovery: *recovery,
            },
            Self::Heterogeneous {
                hazards,
                recoveries,
                unit,
            } => Self::Heterogeneous {
                hazards: hazards.iter().map(|h| h * factor).collect(),
                recoveries: recoveries.clone(),
                unit: *unit,
            },
        }
    }
}

/// Index fair spread (bps) of a flat-hazard homogeneous pool.
pub fn index_spread_flat_hazard(
    hazard: f64,
    recovery: f64,
    sched: &PaymentSchedule,
    disc: &DiscountCurve,
) -> Result<f64> {
    let pool = Pool::homogeneous(1, hazard, recovery)?;
    let (loss, count) = pool.index_curves(sched);
    let legs = index_legs(
        &loss,
        &count,
        sched,
        disc,
        TimingConvention::NotionalAtPeriodEnd,
    )?;
    fair_spread(legs.default_leg, legs.dv01, 0.0)
}

/// Flat hazard rate reproducing an index spread, searched on `[1e-8, 5]`.
pub fn flat_hazard_from_index(
    spread_bps: f64,
    recovery: f64,
    sched: &PaymentSchedule,
    disc: &DiscountCurve,
) -> Result<f64> {
    if !(spread_bps > 0.0) {
        return domain(format!("index spread {spread_bps} must be positive"));
    }
    roots::brent(
        |h| Ok(index_spread_flat_hazard(h, recovery, sched, disc)? - spread_bps),
        1e-8,
        5.0,
        1e-15,
    )
}

/// Monte Carlo estimate of the homogeneous default-count law with per-bucket
/// standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloCounts {
    pub probs: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub paths: u64,
}

/// Simulates `paths` draws of the factor model; `seed` fixes the stream.
/// Work is split into fixed chunks, each with its own derived stream, so the
/// result does not depend on the thread count.
pub fn monte_carlo_counts(
    m: usize,
    rho: f64,
    p: f64,
    paths: u64,
    seed: u64,
) -> Result<MonteCarloCounts> {
    check_rho(rho)?;
    if m == 0 || paths == 0 || !(0.0..=1.0).contains(&p) {
        return domain("monte carlo needs m > 0, paths > 0, p in [0, 1]");
    }
    const CHUNK: u64 = 1 << 16;
    let c = normal::inv_cdf(p);
    let (sr, sq) = (rho.sqrt(), (1.0 - rho).sqrt());
    let chunks = paths.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let n = CHUNK.min(paths - k * CHUNK);
            let mut hist = vec![0u64; m + 1];
            for _ in 0..n {
                let s: f64 = rng.sample(StandardNormal);
                let mut d = 0;
                for _ in 0..m {
                    let y: f64 = rng.sample(StandardNormal);
                    if sr * s + sq * y < c {
                        d += 1;
                    }
                }
                hist[d] += 1;
            }
            hist
        })
        .reduce(
            || vec![0u64; m + 1],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let nf = paths as f64;
    let probs: Vec<f64> = counts.iter().map(|c| *c as f64 / nf).collect();
    let std_errors = probs.iter().map(|q| (q * (1.0 - q) / nf).sqrt()).collect();
    Ok(MonteCarloCounts {
        probs,
        std_errors,
        paths,
    })
}
