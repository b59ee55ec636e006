//! Payment schedules, discounting, quote conventions, and index/tranche leg
//! valuation from expected (tranche) loss curves.
//!
//! Spreads are carried in basis points per annum, upfronts as a fraction of
//! tranche notional (a 49% upfront is `0.49`).

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

const BPS: f64 = 1e4;
const GRID_TOL: f64 = 1e-9;

/// Premium payment dates `T_1 < ... < T_b` in years; `T_0 = 0` is implied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaymentSchedule {
    times: Vec<f64>,
}

impl PaymentSchedule {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return domain("payment schedule needs at least one date");
        }
        if times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return domain("payment times must be positive and strictly increasing");
        }
        Ok(Self { times })
    }

    /// Quarterly dates up to `maturity`, with a final short stub when the
    /// maturity is not a multiple of a quarter.
    pub fn quarterly(maturity: f64) -> Result<Self> {
        Self::regular(maturity, 4)
    }

    pub fn regular(maturity: f64, per_year: usize) -> Result<Self> {
        if !(maturity > 0.0) || per_year == 0 {
            return domain(format!("invalid schedule maturity {maturity}"));
        }
        let step = 1.0 / per_year as f64;
        let mut times = Vec::new();
        let mut i = 1;
        loop {
            let t = i as f64 * step;
            if t >= maturity - GRID_TOL {
                times.push(maturity);
                break;
            }
            times.push(t);
            i += 1;
        }
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn maturity(&self) -> f64 {
        *self.times.last().expect("non-empty schedule")
    }

    /// `T_{i-1}` for the period ending at index `i` (0-based).
    pub fn start(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.times[i - 1]
        }
    }

    pub fn accrual(&self, i: usize) -> f64 {
        self.times[i] - self.start(i)
    }

    pub fn accruals(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.accrual(i)).collect()
    }

    pub fn mid(&self, i: usize) -> f64 {
        0.5 * (self.start(i) + self.times[i])
    }

    /// Dates up to and including `t` (a stub at `t` if needed).
    pub fn truncated(&self, t: f64) -> Result<Self> {
        let mut times: Vec<f64> = self
            .times
            .iter()
            .copied()
            .filter(|&s| s < t - GRID_TOL)
            .collect();
        times.push(t);
        Self::new(times)
    }

    pub fn same_grid(&self, times: &[f64]) -> bool {
        times.len() == self.times.len()
            && times
                .iter()
                .zip(&self.times)
                .all(|(a, b)| (a - b).abs() < GRID_TOL)
    }
}

/// Deterministic discount factors `D(0, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiscountCurve {
    /// Continuously compounded flat rate.
    Flat { rate: f64 },
    /// Log-linear interpolation between nodes; the last segment's forward
    /// rate is continued beyond the final node.
    LogLinear { times: Vec<f64>, log_dfs: Vec<f64> },
}

impl DiscountCurve {
    pub fn flat(rate: f64) -> Self {
        Self::Flat { rate }
    }

    pub fn from_nodes(times: Vec<f64>, dfs: Vec<f64>) -> Result<Self> {
        if times.len() != dfs.len() || times.is_empty() {
            return domain("discount nodes need matching, non-empty times and factors");
        }
        let (mut ts, mut ds) = (times, dfs);
        if ts[0] > 0.0 {
            ts.insert(0, 0.0);
            ds.insert(0, 1.0);
        }
        if ts[0] < 0.0 || (ds[0] - 1.0).abs() > 1e-12 {
            return domain("discount curve must start at D(0,0) = 1");
        }
        if ts.windows(2).any(|w| w[1] <= w[0]) {
            return domain("discount node times must be strictly increasing");
        }
        if ds.iter().any(|&d| !(d > 0.0 && d <= 1.0)) {
            return domain("discount factors must lie in (0, 1]");
        }
        if ds.windows(2).any(|w| w[1] > w[0] + 1e-15) {
            return domain("discount factors must be non-increasing");
        }
        Ok(Self::LogLinear {
            times: ts,
            log_dfs: ds.iter().map(|d| d.ln()).collect(),
        })
    }

    pub fn df(&self, t: f64) -> f64 {
        match self {
            Self::Flat { rate } => (-rate * t).exp(),
            Self::LogLinear { times, log_dfs } => {
                let n = times.len();
                if n == 1 || t <= 0.0 {
                    return if n == 1 {
                        1.0
                    } else {
                        1.0_f64.min((log_dfs[0]).exp())
                    };
                }
                let k = times.partition_point(|&s| s <= t).clamp(1, n - 1);
                let (t0, t1) = (times[k - 1], times[k]);
                let (l0, l1) = (log_dfs[k - 1], log_dfs[k]);
                (l0 + (t - t0) * (l1 - l0) / (t1 - t0)).exp()
            }
        }
    }
}

/// Loss tranche `[attachment, detachment]` as fractions of pool notional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrancheDef {
    pub attachment: f64,
    pub detachment: f64,
}

impl TrancheDef {
    pub fn new(attachment: f64, detachment: f64) -> Result<Self> {
        if !(0.0 <= attachment && attachment < detachment && detachment <= 1.0) {
            return domain(format!(
                "tranche needs 0 <= A < B <= 1, got A = {attachment}, B = {detachment}"
            ));
        }
        Ok(Self {
            attachment,
            detachment,
        })
    }

    pub fn equity(detachment: f64) -> Result<Self> {
        Self::new(0.0, detachment)
    }

    pub fn thickness(&self) -> f64 {
        self.detachment - self.attachment
    }

    pub fn is_equity(&self) -> bool {
        self.attachment == 0.0
    }

    /// Fraction of this tranche's notional consumed by a pool loss.
    pub fn loss_fraction(&self, pool_loss: f64) -> f64 {
        ((pool_loss - self.attachment).max(0.0)).min(self.thickness()) / self.thickness()
    }

    pub fn label(&self) -> String {
        format!(
            "{}-{}%",
            fmt_pct(self.attachment * 100.0),
            fmt_pct(self.detachment * 100.0)
        )
    }
}

fn fmt_pct(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    if (r - r.round()).abs() < 1e-9 {
        format!("{}", r.round() as i64)
    } else {
        format!("{r}")
    }
}

/// Tranched loss `L^{A,B}` of a pool loss, as a fraction of tranche notional.
pub fn tranched_loss(pool_loss: f64, attachment: f64, detachment: f64) -> Result<f64> {
    let t = TrancheDef::new(attachment, detachment)?;
    if !(0.0..=1.0).contains(&pool_loss) {
        return domain(format!("pool loss {pool_loss} outside [0, 1]"));
    }
    Ok(t.loss_fraction(pool_loss))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Instrument {
    /// The credit index: premium on the outstanding count notional.
    Index,
    Tranche(TrancheDef),
}

impl Instrument {
    pub fn label(&self) -> String {
        match self {
            Self::Index => "index".into(),
            Self::Tranche(t) => t.label(),
        }
    }

    pub fn tranche(&self) -> Option<&TrancheDef> {
        match self {
            Self::Index => None,
            Self::Tranche(t) => Some(t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum QuoteType {
    /// Fair running spread in bps, no upfront.
    Running,
    /// Upfront fraction of tranche notional with a fixed running spread.
    Upfront { running_bps: f64 },
}

/// A bid/mid/ask market quote for one instrument and maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub instrument: Instrument,
    pub maturity: f64,
    pub quote_type: QuoteType,
    pub bid: f64,
    pub mid: f64,
    pub ask: f64,
}

impl Quote {
    pub fn new(
        instrument: Instrument,
        maturity: f64,
        quote_type: QuoteType,
        bid: f64,
        mid: f64,
        ask: f64,
    ) -> Result<Self> {
        if !(bid <= mid && mid <= ask) {
            return domain(format!(
                "quote needs bid <= mid <= ask, got {bid} / {mid} / {ask}"
            ));
        }
        if !(maturity > 0.0) {
            return domain(format!("quote maturity {maturity} must be positive"));
        }
        if let QuoteType::Upfront { running_bps } = quote_type {
            if running_bps < 0.0 {
                return domain("fixed running spread must be non-negative");
            }
        }
        Ok(Self {
            instrument,
            maturity,
            quote_type,
            bid,
            mid,
            ask,
        })
    }

    /// Running-spread quote with mid = bid = ask.
    pub fn running_mid(instrument: Instrument, maturity: f64, mid_bps: f64) -> Result<Self> {
        Self::new(
            instrument,
            maturity,
            QuoteType::Running,
            mid_bps,
            mid_bps,
            mid_bps,
        )
    }

    pub fn upfront_mid(
        tranche: TrancheDef,
        maturity: f64,
        upfront: f64,
        running_bps: f64,
    ) -> Result<Self> {
        Self::new(
            Instrument::Tranche(tranche),
            maturity,
            QuoteType::Upfront { running_bps },
            upfront,
            upfront,
            upfront,
        )
    }

    pub fn half_band(&self) -> f64 {
        0.5 * (self.ask - self.bid)
    }

    pub fn label(&self) -> String {
        format!("{}y {}", fmt_pct(self.maturity), self.instrument.label())
    }

    /// Model value in this quote's convention (bps running or upfront fraction).
    pub fn theoretical(&self, legs: &Legs) -> Result<f64> {
        theoretical_quote(&self.quote_type, legs)
    }

    /// Premium-minus-protection value of a receiver position at the mid quote.
    pub fn npv_at_mid(&self, legs: &Legs) -> f64 {
        match self.quote_type {
            QuoteType::Running => self.mid / BPS * legs.dv01 - legs.default_leg,
            QuoteType::Upfront { running_bps } => {
                self.mid + running_bps / BPS * legs.dv01 - legs.default_leg
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimingConvention {
    /// Premium on the notional outstanding at each payment date; losses
    /// discounted from the payment date.
    #[default]
    NotionalAtPeriodEnd,
    /// Premium on the period-average notional; losses discounted from the
    /// middle of the period.
    MidPeriod,
}

/// Expected tranche loss (fraction of tranche notional) on a payment grid;
/// the value at `T_0 = 0` is zero and not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtlCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl EtlCurve {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return domain("etl curve times and values differ in length");
        }
        Ok(Self { times, values })
    }

    pub fn on_schedule(sched: &PaymentSchedule, values: Vec<f64>) -> Result<Self> {
        Self::new(sched.times().to_vec(), values)
    }

    pub fn zero(sched: &PaymentSchedule) -> Self {
        Self {
            times: sched.times().to_vec(),
            values: vec![0.0; sched.len()],
        }
    }

    fn prev(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.values[i - 1]
        }
    }
}

/// Protection and risky-annuity values of an instrument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Legs {
    pub default_leg: f64,
    pub dv01: f64,
}

fn check_grid(curve: &EtlCurve, sched: &PaymentSchedule) -> Result<()> {
    if !sched.same_grid(&curve.times) {
        return Err(Error::Domain(format!(
            "etl grid of {} dates does not match schedule of {} dates",
            curve.times.len(),
            sched.len()
        )));
    }
    Ok(())
}

fn default_leg(
    curve: &EtlCurve,
    sched: &PaymentSchedule,
    disc: &DiscountCurve,
    timing: TimingConvention,
) -> f64 {
    (0..sched.len())
        .map(|i| {
            let t = match timing {
                TimingConvention::NotionalAtPeriodEnd => sched.times()[i],
                TimingConvention::MidPeriod => sched.mid(i),
            };
            disc.df(t) * (curve.values[i] - curve.prev(i))
        })
        .sum()
}

fn annuity(
    outstanding_loss: &EtlCurve,
    sched: &PaymentSchedule,
    disc: &DiscountCurve,
    timing: TimingConvention,
) -> f64 {
    (0..sched.len())
        .map(|i| {
            let used = match timing {
                TimingConvention::NotionalAtPeriodEnd => outstanding_loss.values[i],
                TimingConvention::MidPeriod => {
                    0.5 * (outstanding_loss.values[i] + outstanding_loss.prev(i))
                }
            };
            sched.accrual(i) * disc.df(sched.times()[i]) * (1.0 - used)
        })
        .sum()
}

/// Default leg and DV01 of a tranche from its expected tranche loss curve.
pub fn tranche_legs_from_etl(
    etl: &EtlCurve,
    sched: &PaymentSchedule,
    disc: &DiscountCurve,
    timing: TimingConvention,
) -> Result<Legs> {
    check_grid(etl, sched)?;
    Ok(Legs {
        default_leg: default_leg(etl, sched, disc, timing),
        dv01: annuity(etl, sched, disc, timing),
    })
}

/// Index legs: protection on expected pool loss, premium on the notional
/// left after removing defaulted names (expected default rate).
pub fn index_legs(
    expected_loss: &EtlCurve,
    expected_default_rate: &EtlCurve,
    sched: &PaymentSchedule,
    disc: &DiscountCurve,
    timing: TimingConvention,
) -> Result<Legs> {
    check_grid(expected_loss, sched)?;
    check_grid(expected_default_rate, sched)?;
    for (i, (l, c)) in expected_loss
        .values
        .iter()
        .zip(&expected_default_rate.values)
        .enumerate()
    {
        if *c < *l - 1e-12 {
            return Err(Error::Consistency(format!(
                "expected default rate {c} below expected loss {l} at t = {}",
                sched.times()[i]
            )));
        }
    }
    Ok(Legs {
        default_leg: default_leg(expected_loss, sched, disc, timing),
        dv01: annuity(expected_default_rate, sched, disc, timing),
    })
}

/// Running spread in bps that prices the instrument at par given an upfront.
pub fn fair_spread(default_leg: f64, dv01: f64, upfront: f64) -> Result<f64> {
    if !(dv01 > 0.0) {
        return Err(Error::DegenerateAnnuity(dv01));
    }
    Ok((default_leg - upfront) / dv01 * BPS)
}

/// Upfront fraction that prices the instrument at par given a running spread.
pub fn fair_upfront(default_leg: f64, dv01: f64, running_bps: f64) -> f64 {
    default_leg - running_bps / BPS * dv01
}

pub fn theoretical_quote(quote_type: &QuoteType, legs: &Legs) -> Result<f64> {
    match quote_type {
        QuoteType::Running => fair_spread(legs.default_leg, legs.dv01, 0.0),
        QuoteType::Upfront { running_bps } => {
            Ok(fair_upfront(legs.default_leg, legs.dv01, *running_bps))
        }
    }
}
