//! Model-free expected tranche loss surface.
//!
//! The unknowns are nodal expected losses `f(T_m, bucket_j)` of the adjacent
//! tranches tiling `[0, 1]` at the quoted maturities. Values between nodes
//! come from time interpolation anchored at `f(0) = 0`, so every maturity
//! reuses the shorter segments. The index is priced from
//! `f(t, 0, 1) = Σ (B_j - A_j) f(t, bucket_j)` with a deterministic recovery
//! mapping losses to defaults.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gausscop::{flat_hazard_from_index, Pool};
use crate::impliedcorr::{arbitrage_report, equity_concavity_report, Violation};
use crate::instruments::{
    index_legs, theoretical_quote, tranche_legs_from_etl, DiscountCurve, EtlCurve, Instrument,
    Legs, PaymentSchedule, Quote, QuoteType, TimingConvention, TrancheDef,
};
use crate::math::interp::{Interpolation, Interpolator};
use crate::math::lsq::{least_squares, LinearInequalities, LmOptions};
use crate::math::quadrature::FactorQuadrature;
use crate::mispricing::{self, MispricingReport};

const GRID_TOL: f64 = 1e-12;
const START_RHO: f64 = 0.3;
const START_NAMES: usize = 125;
const REFERENCE_RECOVERY: f64 = 0.4;
const RECOVERY_WEIGHT: f64 = 10.0;
const MAX_RECOVERY: f64 = 0.99;

/// Deterministic recovery linking expected loss to expected defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceRecovery {
    Constant {
        recovery: f64,
    },
    /// `values[m]` applies on `(T_{m-1}, T_m]`; the last value also beyond.
    Piecewise {
        maturities: Vec<f64>,
        values: Vec<f64>,
    },
}

impl SurfaceRecovery {
    fn segment(&self, t: f64) -> usize {
        match self {
            Self::Constant { .. } => 0,
            Self::Piecewise { maturities, .. } => maturities
                .partition_point(|&m| m < t - GRID_TOL)
                .min(maturities.len() - 1),
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        match self {
            Self::Constant { recovery } => *recovery,
            Self::Piecewise { values, .. } => values[self.segment(t)],
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::Constant { recovery } => vec![*recovery],
            Self::Piecewise { values, .. } => values.clone(),
        }
    }
}

/// Nodal expected tranche losses with their interpolation rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtlSurface {
    pub maturities: Vec<f64>,
    /// Upper edges of the buckets; the last one is 1.
    pub detachments: Vec<f64>,
    /// `nodal_values[m][j]`: expected loss of bucket `j` at `maturities[m]`
    /// as a fraction of the bucket notional.
    pub nodal_values: Vec<Vec<f64>>,
    pub interpolation: Interpolation,
    pub recovery: SurfaceRecovery,
}

impl EtlSurface {
    pub fn new(
        maturities: Vec<f64>,
        detachments: Vec<f64>,
        nodal_values: Vec<Vec<f64>>,
        interpolation: Interpolation,
        recovery: SurfaceRecovery,
    ) -> Result<Self> {
        if maturities.is_empty()
            || maturities.windows(2).any(|w| w[1] <= w[0])
            || maturities[0] <= 0.0
        {
            return domain("surface maturities must be positive and increasing");
        }
        if detachments.is_empty()
            || detachments[0] <= 0.0
            || detachments.windows(2).any(|w| w[1] <= w[0])
            || (detachments[detachments.len() - 1] - 1.0).abs() > GRID_TOL
        {
            return domain("surface detachments must increase from above 0 up to 1");
        }
        if nodal_values.len() != maturities.len()
            || nodal_values.iter().any(|r| r.len() != detachments.len())
        {
            return domain("nodal values must be maturities x detachments");
        }
        if let SurfaceRecovery::Piecewise {
            maturities: rm,
            values,
        } = &recovery
        {
            if rm.is_empty() || rm.len() != values.len() {
                return domain("piecewise recovery needs one value per breakpoint");
            }
        }
        Ok(Self {
            maturities,
            detachments,
            nodal_values,
            interpolation,
            recovery,
        })
    }

    pub fn buckets(&self) -> usize {
        self.detachments.len()
    }

    pub fn attachment(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.detachments[j - 1]
        }
    }

    pub fn bucket(&self, j: usize) -> TrancheDef {
        TrancheDef {
            attachment: self.attachment(j),
            detachment: self.detachments[j],
        }
    }

    pub fn max_maturity(&self) -> f64 {
        self.maturities[self.maturities.len() - 1]
    }

    fn curves(&self) -> Result<Vec<Interpolator>> {
        let xs: Vec<f64> = std::iter::once(0.0)
            .chain(self.maturities.iter().copied())
            .collect();
        (0..self.buckets())
            .map(|j| {
                let ys = std::iter::once(0.0)
                    .chain(self.nodal_values.iter().map(|r| r[j]))
                    .collect();
                Interpolator::new(self.interpolation, xs.clone(), ys)
            })
            .collect()
    }

    /// Bucket expected losses at every time in `times`: `out[i][j]`.
    pub fn bucket_values(&self, times: &[f64]) -> Result<Vec<Vec<f64>>> {
        let curves = self.curves()?;
        Ok(times
            .iter()
            .map(|&t| curves.iter().map(|c| c.eval(t)).collect())
            .collect())
    }

    /// `g(t, k) = k f(t, 0, k)`, linear in `k` inside each bucket.
    fn equity_loss(&self, row: &[f64], k: f64) -> f64 {
        (0..self.buckets())
            .map(|j| {
                let (a, b) = (self.attachment(j), self.detachments[j]);
                (k.min(b) - a).max(0.0) * row[j]
            })
            .sum()
    }

    /// Expected loss curve of an arbitrary tranche on a schedule.
    pub fn tranche_etl(&self, tranche: &TrancheDef, sched: &PaymentSchedule) -> Result<EtlCurve> {
        let rows = self.bucket_values(sched.times())?;
        let values = rows
            .iter()
            .map(|r| {
                (self.equity_loss(r, tranche.detachment) - self.equity_loss(r, tranche.attachment))
                    / tranche.thickness()
            })
            .collect();
        EtlCurve::on_schedule(sched, values)
    }

    /// Expected pool loss and expected default rate on a schedule.
    pub fn index_curves(&self, sched: &PaymentSchedule) -> Result<(EtlCurve, EtlCurve)> {
        let rows = self.bucket_values(sched.times())?;
        let loss: Vec<f64> = rows.iter().map(|r| self.equity_loss(r, 1.0)).collect();
        let mut count = Vec::with_capacity(loss.len());
        let (mut prev_l, mut prev_c) = (0.0, 0.0);
        for (&t, &l) in sched.times().iter().zip(&loss) {
            let r = self.recovery.at(t);
            prev_c += (l - prev_l) / (1.0 - r);
            prev_l = l;
            count.push(prev_c);
        }
        Ok((
            EtlCurve::on_schedule(sched, loss)?,
            EtlCurve::on_schedule(sched, count)?,
        ))
    }

    pub fn legs(
        &self,
        instrument: &Instrument,
        sched: &PaymentSchedule,
        disc: &DiscountCurve,
    ) -> Result<Legs> {
        match instrument {
            Instrument::Index => {
                let (loss, count) = self.index_curves(sched)?;
                index_legs(
                    &loss,
                    &count,
                    sched,
                    disc,
                    TimingConvention::NotionalAtPeriodEnd,
                )
            }
            Instrument::Tranche(t) => {
                let etl = self.tranche_etl(t, sched)?;
                tranche_legs_from_etl(&etl, sched, disc, TimingConvention::NotionalAtPeriodEnd)
            }
        }
    }

    /// Model value of a quote in its own convention.
    pub fn theoretical(&self, quote: &Quote, disc: &DiscountCurve) -> Result<f64> {
        let sched = PaymentSchedule::quarterly(quote.maturity)?;
        quote.theoretical(&self.legs(&quote.instrument, &sched, disc)?)
    }

    /// Largest violation of the nodal constraints: bounds, monotonicity in
    /// time and in seniority. Zero when all hold.
    pub fn constraint_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, row) in self.nodal_values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                worst = worst.max(-v).max(v - 1.0);
                if m > 0 {
                    worst = worst.max(self.nodal_values[m - 1][j] - v);
                }
                if j > 0 {
                    worst = worst.max(v - row[j - 1]);
                }
            }
        }
        worst
    }

    /// Arbitrage diagnostics on a quarterly grid for every bucket plus the
    /// concavity of `g` in detachment at each node.
    pub fn arbitrage(&self) -> Result<Vec<Violation>> {
        let sched = PaymentSchedule::quarterly(self.max_maturity())?;
        let rows = self.bucket_values(sched.times())?;
        let mut out = Vec::new();
        for j in 0..self.buckets() {
            let curve = EtlCurve::on_schedule(&sched, rows.iter().map(|r| r[j]).collect())?;
            out.extend(arbitrage_report(&curve));
        }
        for (t, row) in self.maturities.iter().zip(&self.nodal_values) {
            let eq: Vec<f64> = self
                .detachments
                .iter()
                .map(|&k| self.equity_loss(row, k) / k)
                .collect();
            out.extend(equity_concavity_report(*t, &self.detachments, &eq));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MispricingMetric {
    /// `(theoretical - mid) / half bid-ask`.
    Standardized,
    /// Zero inside the band, distance past it in half bid-ask units outside.
    Band,
}

#[derive(Debug, Clone)]
pub struct StripConfig {
    pub disc: DiscountCurve,
    pub interpolation: Interpolation,
    pub lm: LmOptions,
}

impl StripConfig {
    pub fn new(disc: DiscountCurve, interpolation: Interpolation) -> Self {
        Self {
            disc,
            interpolation,
            lm: LmOptions {
                max_iterations: 400,
                ..LmOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StripReport {
    pub metric: MispricingMetric,
    /// One metric value per quote, in input order.
    pub mispricings: Vec<f64>,
    pub mispricing: MispricingReport,
    pub objective: f64,
    pub recoveries: Vec<f64>,
    pub max_constraint_violation: f64,
    pub binding: Vec<String>,
    pub arbitrage: Vec<Violation>,
    pub converged: bool,
    pub iterations: usize,
    pub start: String,
}

impl StripReport {
    pub fn max_abs_mispricing(&self) -> f64 {
        self.mispricings.iter().map(|m| m.abs()).fold(0.0, f64::max)
    }
}

struct Layout {
    maturities: Vec<f64>,
    detachments: Vec<f64>,
    quotes: Vec<(Quote, Option<usize>)>,
    schedules: Vec<PaymentSchedule>,
}

impl Layout {
    fn buckets(&self) -> usize {
        self.detachments.len()
    }

    fn nodal(&self) -> usize {
        self.maturities.len() * self.buckets()
    }

    fn var(&self, m: usize, j: usize) -> usize {
        m * self.buckets() + j
    }

    fn thickness(&self, j: usize) -> f64 {
        self.detachments[j] - if j == 0 { 0.0 } else { self.detachments[j - 1] }
    }

    fn schedule_for(&self, maturity: f64) -> &PaymentSchedule {
        let m = self
            .maturities
            .iter()
            .position(|&t| t == maturity)
            .expect("maturity on layout");
        &self.schedules[m]
    }
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= GRID_TOL
}

fn layout(quotes: &[Quote], super_senior: bool) -> Result<Layout> {
    let mut maturities: Vec<f64> = quotes.iter().map(|q| q.maturity).collect();
    maturities.sort_by(f64::total_cmp);
    maturities.dedup();
    if maturities.is_empty() {
        return domain("no quotes to strip");
    }
    let mut edges: Vec<f64> = vec![1.0];
    for q in quotes {
        if let Instrument::Tranche(t) = q.instrument {
            for e in [t.attachment, t.detachment] {
                if e > 0.0 && !edges.iter().any(|&x| same(x, e)) {
                    edges.push(e);
                }
            }
        }
    }
    edges.sort_by(f64::total_cmp);
    let mut kept = Vec::new();
    for q in quotes {
        if q.half_band() <= 0.0 {
            return domain(format!("{} has no bid/ask band", q.label()));
        }
        let bucket = match q.instrument {
            Instrument::Index => None,
            Instrument::Tranche(t) => {
                let j = edges
                    .iter()
                    .position(|&e| same(e, t.detachment))
                    .filter(|&j| same(if j == 0 { 0.0 } else { edges[j - 1] }, t.attachment))
                    .ok_or_else(|| {
                        Error::Domain(format!("tranche {} does not tile the structure", t.label()))
                    })?;
                Some(j)
            }
        };
        kept.push((q.clone(), bucket));
    }
    let top = edges.len() - 1;
    for &t in &maturities {
        if !kept.iter().any(|(q, b)| q.maturity == t && b.is_none()) {
            return domain(format!("no index quote at {t}y"));
        }
        if super_senior && !kept.iter().any(|(q, b)| q.maturity == t && *b == Some(top)) {
            return domain(format!("no super-senior quote at {t}y"));
        }
    }
    let schedules = maturities
        .iter()
        .map(|&t| PaymentSchedule::quarterly(t))
        .collect::<Result<_>>()?;
    Ok(Layout {
        maturities,
        detachments: edges,
        quotes: kept,
        schedules,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Fixed(f64),
    ImpliedRecovery,
}

struct Problem<'a> {
    layout: Layout,
    mode: Mode,
    cfg: &'a StripConfig,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        match self.mode {
            Mode::Fixed(_) => self.layout.nodal(),
            Mode::ImpliedRecovery => self.layout.nodal() + self.layout.maturities.len(),
        }
    }

    fn surface(&self, x: &[f64]) -> Result<EtlSurface> {
        let l = &self.layout;
        let nodal = (0..l.maturities.len())
            .map(|m| (0..l.buckets()).map(|j| x[l.var(m, j)]).collect())
            .collect();
        let recovery = match self.mode {
            Mode::Fixed(r) => SurfaceRecovery::Constant { recovery: r },
            Mode::ImpliedRecovery => SurfaceRecovery::Piecewise {
                maturities: l.maturities.clone(),
                values: x[l.nodal()..].to_vec(),
            },
        };
        EtlSurface::new(
            l.maturities.clone(),
            l.detachments.clone(),
            nodal,
            self.cfg.interpolation,
            recovery,
        )
    }

    fn theoretical(&self, surface: &EtlSurface) -> Result<Vec<f64>> {
        self.layout
            .quotes
            .iter()
            .map(|(q, _)| {
                let legs = surface.legs(
                    &q.instrument,
                    self.layout.schedule_for(q.maturity),
                    &self.cfg.disc,
                )?;
                theoretical_quote(&q.quote_type, &legs)
            })
            .collect()
    }

    fn metric(&self) -> MispricingMetric {
        match self.mode {
            Mode::Fixed(_) => MispricingMetric::Standardized,
            Mode::ImpliedRecovery => MispricingMetric::Band,
        }
    }

    fn mispricings(&self, theoretical: &[f64]) -> Vec<f64> {
        self.layout
            .quotes
            .iter()
            .zip(theoretical)
            .map(|((q, _), &th)| match self.metric() {
                MispricingMetric::Standardized => mispricing::standardized(th, q),
                MispricingMetric::Band => mispricing::band(th, q),
            })
            .collect()
    }

    fn residuals(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.surface(x)?;
        let m = self.mispricings(&self.theoretical(&s)?);
        Ok(match self.mode {
            Mode::Fixed(_) => m,
            Mode::ImpliedRecovery => m
                .into_iter()
                .map(|v| RECOVERY_WEIGHT * v)
                .chain(
                    x[self.layout.nodal()..]
                        .iter()
                        .map(|r| r - REFERENCE_RECOVERY),
                )
                .collect(),
        })
    }

    fn constraints(&self) -> LinearInequalities {
        let l = &self.layout;
        let (nm, nb) = (l.maturities.len(), l.buckets());
        let mut c = LinearInequalities::new(self.dim());
        c.bound(
            l.var(0, nb - 1),
            0.0,
            f64::INFINITY,
            &format!("f({}y, {})", l.maturities[0], nb - 1),
        );
        c.bound(
            l.var(nm - 1, 0),
            f64::NEG_INFINITY,
            1.0,
            &format!("f({}y, 0)", l.maturities[nm - 1]),
        );
        for m in 0..nm {
            for j in 0..nb {
                if j + 1 < nb {
                    c.ordered(
                        l.var(m, j),
                        l.var(m, j + 1),
                        format!("seniority {}y bucket {j}", l.maturities[m]),
                    );
                }
                if m > 0 {
                    c.ordered(
                        l.var(m, j),
                        l.var(m - 1, j),
                        format!("time {}y bucket {j}", l.maturities[m]),
                    );
                }
            }
            // pool loss cannot exceed the loss of every name defaulting
            let mut row = vec![0.0; self.dim()];
            for j in 0..nb {
                row[l.var(m, j)] = -l.thickness(j);
            }
            match self.mode {
                Mode::Fixed(r) => c.push(row, r - 1.0, format!("pool loss {}y", l.maturities[m])),
                Mode::ImpliedRecovery => {
                    row[l.nodal() + m] = -1.0;
                    c.push(row, -1.0, format!("pool loss {}y", l.maturities[m]));
                }
            }
        }
        if self.mode == Mode::ImpliedRecovery {
            for m in 0..nm {
                c.bound(
                    l.nodal() + m,
                    0.0,
                    MAX_RECOVERY,
                    &format!("R({}y)", l.maturities[m]),
                );
            }
        }
        c
    }

    /// Gaussian copula surface with hazards fitted to each index quote.
    fn copula_start(&self) -> Result<Vec<f64>> {
        let l = &self.layout;
        let r = match self.mode {
            Mode::Fixed(r) => r,
            Mode::ImpliedRecovery => REFERENCE_RECOVERY,
        };
        let cfg = FactorQuadrature::default();
        let mut x = vec![0.0; self.dim()];
        for (m, &t) in l.maturities.iter().enumerate() {
            let idx = l
                .quotes
                .iter()
                .find(|(q, b)| q.maturity == t && b.is_none())
                .map(|(q, _)| q.mid)
                .expect("index per maturity");
            let hazard = flat_hazard_from_index(idx, r, &l.schedules[m], &self.cfg.disc)?;
            let dist =
                Pool::homogeneous(START_NAMES, hazard, r)?.loss_distribution(&cfg, START_RHO, t)?;
            for j in 0..l.buckets() {
                let bucket = TrancheDef {
                    attachment: if j == 0 { 0.0 } else { l.detachments[j - 1] },
                    detachment: l.detachments[j],
                };
                let v = dist.expected_tranche_loss(&bucket);
                let prev = if m > 0 { x[l.var(m - 1, j)] } else { 0.0 };
                x[l.var(m, j)] = v.max(prev);
            }
        }
        // seniority order after the running max in time
        for m in 0..l.maturities.len() {
            for j in 1..l.buckets() {
                let above = x[l.var(m, j - 1)];
                if x[l.var(m, j)] > above {
                    x[l.var(m, j)] = above;
                }
            }
        }
        if self.mode == Mode::ImpliedRecovery {
            for m in 0..l.maturities.len() {
                x[l.nodal() + m] = r;
            }
        }
        Ok(x)
    }

    fn warm_start(&self, prior: &EtlSurface) -> Option<Vec<f64>> {
        let l = &self.layout;
        if prior.maturities != l.maturities || prior.detachments.len() != l.buckets() {
            return None;
        }
        if !prior
            .detachments
            .iter()
            .zip(&l.detachments)
            .all(|(a, b)| same(*a, *b))
        {
            return None;
        }
        let mut x: Vec<f64> = prior.nodal_values.iter().flatten().copied().collect();
        if self.mode == Mode::ImpliedRecovery {
            for &t in &l.maturities {
                x.push(prior.recovery.at(t).min(MAX_RECOVERY));
            }
        }
        Some(x)
    }
}

fn run(problem: Problem<'_>, prior: Option<&EtlSurface>) -> Result<(EtlSurface, StripReport)> {
    let constraints = problem.constraints();
    let mut starts = vec![("flat-hazard copula".to_string(), problem.copula_start()?)];
    if let Some(x) = prior.and_then(|p| problem.warm_start(p)) {
        if constraints.min_slack(&x) >= -1e-12 {
            starts.push(("prior date".to_string(), x));
        }
    }
    let mut best: Option<(String, crate::math::lsq::LmReport)> = None;
    let mut last_err = None;
    for (name, x0) in starts {
        match least_squares(|x| problem.residuals(x), &x0, &constraints, &problem.cfg.lm) {
            Ok(rep) => {
                if best.as_ref().is_none_or(|(_, b)| rep.cost < b.cost) {
                    best = Some((name, rep));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (start, rep) = match best {
        Some(b) => b,
        None => return Err(last_err.unwrap_or_else(|| Error::Numeric("no start converged".into()))),
    };
    let surface = problem.surface(&rep.x)?;
    let theoretical = problem.theoretical(&surface)?;
    let mispricings = problem.mispricings(&theoretical);
    let quotes: Vec<Quote> = problem
        .layout
        .quotes
        .iter()
        .map(|(q, _)| q.clone())
        .collect();
    let objective = match problem.mode {
        Mode::Fixed(_) => mispricings.iter().map(|m| m * m).sum(),
        Mode::ImpliedRecovery => {
            100.0 * mispricings.iter().map(|m| m * m).sum::<f64>()
                + surface
                    .recovery
                    .values()
                    .iter()
                    .map(|r| (r - REFERENCE_RECOVERY).powi(2))
                    .sum::<f64>()
        }
    };
    let report = StripReport {
        metric: problem.metric(),
        mispricings,
        mispricing: MispricingReport::new(&quotes, &theoretical),
        objective,
        recoveries: surface.recovery.values(),
        max_constraint_violation: surface
            .constraint_violation()
            .max(-constraints.min_slack(&rep.x))
            .max(0.0),
        binding: constraints.binding(&rep.x, 1e-10),
        arbitrage: surface.arbitrage()?,
        converged: rep.converged,
        iterations: rep.iterations,
        start,
    };
    Ok((surface, report))
}

/// Fits nodal expected tranche losses to index and tranche quotes under a
/// constant recovery, minimizing squared standardized mispricings. Quotes on
/// the tranche detaching at 100% are ignored; that bucket is pinned by the
/// index. `prior` is an optional warm start such as the previous date.
pub fn strip_surface(
    quotes: &[Quote],
    cfg: &StripConfig,
    recovery: f64,
    prior: Option<&EtlSurface>,
) -> Result<(EtlSurface, StripReport)> {
    if !(0.0..1.0).contains(&recovery) {
        return domain(format!("recovery {recovery} outside [0, 1)"));
    }
    let used: Vec<Quote> = quotes
        .iter()
        .filter(|q| q.instrument.tranche().is_none_or(|t| t.detachment < 1.0))
        .cloned()
        .collect();
    let problem = Problem {
        layout: layout(&used, false)?,
        mode: Mode::Fixed(recovery),
        cfg,
    };
    run(problem, prior)
}

/// Joint fit of nodal losses and a recovery per maturity segment, including
/// the super-senior tranche. Objective: `100 Σ band² + Σ (R - 0.4)²` with
/// zero mispricing inside bid/ask.
pub fn strip_surface_implied_recovery(
    quotes: &[Quote],
    cfg: &StripConfig,
    prior: Option<&EtlSurface>,
) -> Result<(EtlSurface, StripReport)> {
    let problem = Problem {
        layout: layout(quotes, true)?,
        mode: Mode::ImpliedRecovery,
        cfg,
    };
    run(problem, prior)
}

#[derive(Debug, Clone, Serialize)]
pub struct NonstandardPrice {
    pub tranche: TrancheDef,
    pub maturity: f64,
    pub legs: Legs,
    pub spread_bps: f64,
    /// Upfront fraction when a fixed running spread was requested.
    pub upfront: Option<f64>,
    pub extrapolated: bool,
    pub etl: EtlCurve,
}

/// Prices a tranche with arbitrary attachment, detachment and maturity off a
/// stripped surface. Maturities past the last node are refused unless
/// `allow_extrapolation` is set.
pub fn price_nonstandard_tranche(
    surface: &EtlSurface,
    attachment: f64,
    detachment: f64,
    maturity: f64,
    disc: &DiscountCurve,
    running_bps: Option<f64>,
    allow_extrapolation: bool,
) -> Result<NonstandardPrice> {
    if (detachment - attachment).abs() <= GRID_TOL {
        return domain("zero-thickness tranche");
    }
    let tranche = TrancheDef::new(attachment, detachment)?;
    let extrapolated = maturity > surface.max_maturity() + GRID_TOL;
    if extrapolated && !allow_extrapolation {
        return Err(Error::Extrapolation(format!(
            "maturity {maturity}y beyond the last surface node {}y",
            surface.max_maturity()
        )));
    }
    let sched = PaymentSchedule::quarterly(maturity)?;
    let etl = surface.tranche_etl(&tranche, &sched)?;
    let legs = tranche_legs_from_etl(&etl, &sched, disc, TimingConvention::NotionalAtPeriodEnd)?;
    let spread_bps = theoretical_quote(&QuoteType::Running, &legs)?;
    let upfront = running_bps
        .map(|r| theoretical_quote(&QuoteType::Upfront { running_bps: r }, &legs))
        .transpose()?;
    Ok(NonstandardPrice {
        tranche,
        maturity,
        legs,
        spread_bps,
        upfront,
        extrapolated,
        etl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat_index_surface(hazard: f64, r: f64, t: f64) -> EtlSurface {
        let f = (1.0 - r) * (1.0 - (-hazard * t).exp());
        EtlSurface::new(
            vec![t],
            vec![1.0],
            vec![vec![f]],
            Interpolation::Linear,
            SurfaceRecovery::Constant { recovery: r },
        )
        .unwrap()
    }

    #[test]
    fn single_bucket_matches_flat_hazard_index() {
        let disc = DiscountCurve::flat(0.03);
        let (h, r) = (0.01, 0.4);
        let sched = PaymentSchedule::quarterly(5.0).unwrap();
        let spread = crate::gausscop::index_spread_flat_hazard(h, r, &sched, &disc).unwrap();
        let quote = Quote::new(
            Instrument::Index,
            5.0,
            QuoteType::Running,
            spread - 1.0,
            spread,
            spread + 1.0,
        )
        .unwrap();
        let (s, rep) = strip_surface(
            &[quote],
            &StripConfig::new(disc, Interpolation::Linear),
            r,
            None,
        )
        .unwrap();
        assert_relative_eq!(
            s.nodal_values[0][0],
            (1.0 - r) * (1.0 - (-h * 5.0f64).exp()),
            epsilon = 1e-4
        );
        assert!(rep.max_abs_mispricing() < 1e-6);
    }

    #[test]
    fn nonstandard_guards() {
        let s = flat_index_surface(0.01, 0.4, 5.0);
        let disc = DiscountCurve::flat(0.03);
        assert!(price_nonstandard_tranche(&s, 0.05, 0.05, 5.0, &disc, None, false).is_err());
        assert!(matches!(
            price_nonstandard_tranche(&s, 0.03, 0.06, 7.0, &disc, None, false),
            Err(Error::Extrapolation(_))
        ));
        let p = price_nonstandard_tranche(&s, 0.03, 0.06, 7.0, &disc, None, true).unwrap();
        assert!(p.extrapolated);
    }

    #[test]
    fn piecewise_recovery_segments() {
        let r = SurfaceRecovery::Piecewise {
            maturities: vec![5.0, 10.0],
            values: vec![0.3, 0.4],
        };
        assert_eq!(r.at(1.0), 0.3);
        assert_eq!(r.at(5.0), 0.3);
        assert_eq!(r.at(5.25), 0.4);
        assert_eq!(r.at(12.0), 0.4);
    }

    #[test]
    fn pool_loss_is_bucket_sum() {
        let s = EtlSurface::new(
            vec![5.0],
            vec![0.03, 0.07, 1.0],
            vec![vec![0.5, 0.1, 0.001]],
            Interpolation::Linear,
            SurfaceRecovery::Constant { recovery: 0.4 },
        )
        .unwrap();
        let sched = PaymentSchedule::quarterly(5.0).unwrap();
        let (loss, count) = s.index_curves(&sched).unwrap();
        let expect = 0.03 * 0.5 + 0.04 * 0.1 + 0.93 * 0.001;
        assert_relative_eq!(*loss.values.last().unwrap(), expect, epsilon = 1e-15);
        assert_relative_eq!(*count.values.last().unwrap(), expect / 0.6, epsilon = 1e-15);
        let eq = s
            .tranche_etl(&TrancheDef::new(0.0, 0.05).unwrap(), &sched)
            .unwrap();
        assert_relative_eq!(
            *eq.values.last().unwrap(),
            (0.03 * 0.5 + 0.02 * 0.1) / 0.05,
            epsilon = 1e-15
        );
    }
}
