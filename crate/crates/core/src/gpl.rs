//! Generalized Poisson Loss model.
//!
//! The driver `Z_t = Σ α_j N_j(t)` sums independent Poisson processes with
//! integer amplitudes and piecewise-constant intensities. Pool loss is
//! `min(Z_t, M') / M'`; its law comes from an inverse DFT of the
//! characteristic function. Expected defaults follow from the loss through a
//! constant recovery. The armageddon variant adds a component whose first
//! jump wipes out the pool with zero recovery on the names still alive.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gausscop::LossDistribution;
use crate::instruments::{
    index_legs, theoretical_quote, tranche_legs_from_etl, DiscountCurve, EtlCurve, Instrument,
    Legs, PaymentSchedule, Quote, TimingConvention,
};
use crate::math::lsq::{least_squares, LinearInequalities, LmOptions};
use crate::mispricing::{self, MispricingReport};

const TAIL_BOUND: f64 = 1e-12;
const MAX_FFT: usize = 1 << 20;
const CLIP_TOL: f64 = 1e-12;
/// Loss lattice points per name in the armageddon law.
pub const ARMAGEDDON_GRID: usize = 5;
const TIMING: TimingConvention = TimingConvention::MidPeriod;

/// Amplitude set of the armageddon variant for a 125-name pool with the
/// standard European detachments and 40% recovery.
pub const DEFAULT_ARMAGEDDON_AMPLITUDES: [u32; 10] = [1, 2, 3, 4, 7, 13, 19, 25, 46, 125];

/// `{1, 2, 3, 4}` plus, for each detachment `k`, the smallest jump that
/// takes the pool past `k` when one unit is `(1 - R) / names` of loss, plus
/// a final `top` amplitude.
pub fn detachment_amplitudes(
    names: usize,
    detachments: &[f64],
    recovery: f64,
    top: u32,
) -> Vec<u32> {
    let mut out: Vec<u32> = vec![1, 2, 3, 4];
    for &k in detachments {
        let x = names as f64 * k / (1.0 - recovery);
        out.push((x - 1e-9).ceil() as u32);
    }
    out.push(top);
    out.sort_unstable();
    out.dedup();
    out
}

/// Amplitudes, intensities and the loss cap of a GPL model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GplSpec {
    pub amplitudes: Vec<u32>,
    /// Right ends of the intensity segments; the last segment extends beyond.
    pub breakpoints: Vec<f64>,
    /// `intensities[j][s]`: per-annum intensity of amplitude `j` on segment `s`.
    pub intensities: Vec<Vec<f64>>,
    /// Loss units making up the whole pool, `M'`.
    pub cap: f64,
    pub names: usize,
    /// Recovery linking expected loss to expected defaults.
    pub recovery: f64,
}

impl GplSpec {
    pub fn new(
        amplitudes: Vec<u32>,
        breakpoints: Vec<f64>,
        intensities: Vec<Vec<f64>>,
        cap: f64,
        names: usize,
        recovery: f64,
    ) -> Result<Self> {
        if amplitudes.is_empty()
            || amplitudes[0] == 0
            || amplitudes.windows(2).any(|w| w[1] <= w[0])
        {
            return domain("amplitudes must be strictly increasing positive integers");
        }
        if breakpoints.is_empty()
            || breakpoints[0] <= 0.0
            || breakpoints.windows(2).any(|w| w[1] <= w[0])
        {
            return domain("intensity breakpoints must be positive and increasing");
        }
        if intensities.len() != amplitudes.len()
            || intensities.iter().any(|r| r.len() != breakpoints.len())
        {
            return domain("intensities must be amplitudes x segments");
        }
        if intensities.iter().flatten().any(|l| !(*l >= 0.0)) {
            return domain("intensities must be non-negative");
        }
        if names == 0 || !(cap >= names as f64) {
            return domain(format!("cap {cap} must be at least the pool size {names}"));
        }
        if !(0.0..1.0).contains(&recovery) {
            return domain(format!("recovery {recovery} outside [0, 1)"));
        }
        Ok(Self {
            amplitudes,
            breakpoints,
            intensities,
            cap,
            names,
            recovery,
        })
    }

    /// Zero intensities with one loss unit per default, `M' = names / (1 - R)`.
    pub fn one_default_per_unit(
        amplitudes: Vec<u32>,
        breakpoints: Vec<f64>,
        names: usize,
        recovery: f64,
    ) -> Result<Self> {
        let zeros = vec![vec![0.0; breakpoints.len()]; amplitudes.len()];
        Self::new(
            amplitudes,
            breakpoints,
            zeros,
            names as f64 / (1.0 - recovery),
            names,
            recovery,
        )
    }

    /// Grid points `0..=K` with `K = ceil(M')`; the top point is total loss.
    pub fn top_unit(&self) -> usize {
        (self.cap - 1e-9).ceil() as usize
    }

    /// `Λ_j(t) = ∫_0^t λ_j`.
    pub fn cumulative(&self, j: usize, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut prev = 0.0;
        let last = self.breakpoints.len() - 1;
        for (s, &b) in self.breakpoints.iter().enumerate() {
            let end = if s == last { t } else { b.min(t) };
            if end > prev {
                acc += self.intensities[j][s] * (end - prev);
            }
            if t <= b {
                break;
            }
            prev = b;
        }
        acc
    }

    pub fn cumulatives(&self, t: f64) -> Vec<f64> {
        (0..self.amplitudes.len())
            .map(|j| self.cumulative(j, t))
            .collect()
    }

    fn segment(&self, t: f64) -> usize {
        self.breakpoints
            .partition_point(|&b| b < t)
            .min(self.breakpoints.len() - 1)
    }

    pub fn with_intensities(&self, intensities: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            self.amplitudes.clone(),
            self.breakpoints.clone(),
            intensities,
            self.cap,
            self.names,
            self.recovery,
        )
    }
}

/// `φ_{Z_t}(u) = exp(Σ Λ_j(t) (e^{i u α_j} - 1))`.
pub fn gpl_char_function(spec: &GplSpec, t: f64, u: f64) -> Complex64 {
    let expo: Complex64 = spec
        .amplitudes
        .iter()
        .zip(spec.cumulatives(t))
        .map(|(&a, l)| l * (Complex64::from_polar(1.0, u * a as f64) - 1.0))
        .sum();
    expo.exp()
}

/// Per-annum loss intensity `Σ min(α_j, (M' - z)^+) λ_j(t)` in loss units.
pub fn gpl_compensator_intensity(spec: &GplSpec, t: f64, z_current: f64) -> f64 {
    let room = (spec.cap - z_current).max(0.0);
    let s = spec.segment(t);
    spec.amplitudes
        .iter()
        .zip(&spec.intensities)
        .map(|(&a, l)| (a as f64).min(room) * l[s])
        .sum()
}

/// `log P(Z ≥ n)` Chernoff bound minimized over a grid of tilts.
fn log_tail_bound(amplitudes: &[u32], cumulative: &[f64], n: usize) -> f64 {
    let amax = *amplitudes.iter().max().unwrap_or(&1) as f64;
    (1..=400)
        .map(|k| {
            let theta = k as f64 * 0.05 / amax;
            let cgf: f64 = amplitudes
                .iter()
                .zip(cumulative)
                .map(|(&a, l)| l * (theta * a as f64).exp_m1())
                .sum();
            cgf - theta * n as f64
        })
        .fold(f64::INFINITY, f64::min)
}

fn fft_size(amplitudes: &[u32], cumulative: &[f64], top: usize) -> Result<usize> {
    let mut n = (4 * top.max(1)).next_power_of_two();
    while n <= MAX_FFT {
        if log_tail_bound(amplitudes, cumulative, n) < TAIL_BOUND.ln() {
            return Ok(n);
        }
        n *= 2;
    }
    Err(Error::Numeric(format!(
        "driver tail above {TAIL_BOUND:e} even on {MAX_FFT} points"
    )))
}

/// Law of `Z` modulo `n` from the characteristic function on the DFT grid.
fn driver_pmf(
    amplitudes: &[u32],
    cumulative: &[f64],
    n: usize,
    fft: &Arc<dyn Fft<f64>>,
) -> Vec<f64> {
    let step = std::f64::consts::TAU / n as f64;
    let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..=n / 2 {
        let mut expo = Complex64::new(0.0, 0.0);
        for (&a, &l) in amplitudes.iter().zip(cumulative) {
            if l == 0.0 {
                continue;
            }
            let phase = ((k as u64 * a as u64) % n as u64) as f64 * step;
            expo += l * Complex64::new(phase.cos() - 1.0, phase.sin());
        }
        buf[k] = expo.exp();
        if k > 0 && k < n - k {
            buf[n - k] = buf[k].conj();
        }
    }
    fft.process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Law of `min(Z, top)` on `0..=top`, where `top` collects `P(Z ≥ top)`.
fn capped_law(
    amplitudes: &[u32],
    cumulative: &[f64],
    top: usize,
    planner: &mut FftPlanner<f64>,
) -> Result<Vec<f64>> {
    if cumulative.iter().all(|&l| l == 0.0) {
        let mut p = vec![0.0; top + 1];
        p[0] = 1.0;
        return Ok(p);
    }
    let n = fft_size(amplitudes, cumulative, top)?;
    let fft = planner.plan_fft_forward(n);
    let raw = driver_pmf(amplitudes, cumulative, n, &fft);
    if let Some(worst) = raw
        .iter()
        .copied()
        .filter(|&p| p < -CLIP_TOL)
        .reduce(f64::min)
    {
        return Err(Error::Numeric(format!(
            "inverse transform left probability {worst:e}"
        )));
    }
    let mut p: Vec<f64> = raw[..top].iter().map(|v| v.max(0.0)).collect();
    p.push(raw[top..].iter().map(|v| v.max(0.0)).sum());
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::Numeric(format!("transformed law sums to {total}")));
    }
    p.iter_mut().for_each(|v| *v /= total);
    Ok(p)
}

/// Law of the capped loss `L_t / M'` on the unit `1 / M'`.
pub fn gpl_loss_distribution(spec: &GplSpec, t: f64) -> Result<LossDistribution> {
    if !(t >= 0.0) {
        return domain(format!("negative horizon {t}"));
    }
    let mut planner = FftPlanner::new();
    let p = capped_law(
        &spec.amplitudes,
        &spec.cumulatives(t),
        spec.top_unit(),
        &mut planner,
    )?;
    LossDistribution::new(1.0 / spec.cap, p, t)
}

/// Loss laws at several horizons, built in parallel.
pub fn gpl_loss_distributions(spec: &GplSpec, times: &[f64]) -> Result<Vec<LossDistribution>> {
    times
        .par_iter()
        .map(|&t| gpl_loss_distribution(spec, t))
        .collect()
}

/// GPL whose top amplitude is the armageddon component: its first jump
/// defaults every surviving name with zero recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmageddonGplSpec {
    /// Amplitudes in defaulted names; the last equals the pool size and
    /// `cap` is the pool size. `recovery` is the name recovery.
    pub spec: GplSpec,
}

impl ArmageddonGplSpec {
    pub fn new(spec: GplSpec) -> Result<Self> {
        let top = *spec.amplitudes.last().expect("validated non-empty");
        if top as usize != spec.names || spec.cap != spec.names as f64 {
            return domain("armageddon spec needs top amplitude and cap equal to the pool size");
        }
        if spec.amplitudes.len() < 2 {
            return domain("armageddon spec needs at least one ordinary amplitude");
        }
        Ok(Self { spec })
    }

    /// Default amplitude set with zero intensities.
    pub fn standard(breakpoints: Vec<f64>, recovery: f64) -> Result<Self> {
        let a = DEFAULT_ARMAGEDDON_AMPLITUDES.to_vec();
        let zeros = vec![vec![0.0; breakpoints.len()]; a.len()];
        Self::new(GplSpec::new(a, breakpoints, zeros, 125.0, 125, recovery)?)
    }

    fn reduced(&self) -> (&[u32], usize) {
        let n = self.spec.amplitudes.len() - 1;
        (&self.spec.amplitudes[..n], n)
    }

    fn armageddon_cumulative(&self, t: f64) -> f64 {
        self.spec.cumulative(self.spec.amplitudes.len() - 1, t)
    }

    /// Law of the reduced default fraction `c̄_t` on `0..=names`.
    fn reduced_law(&self, t: f64, planner: &mut FftPlanner<f64>) -> Result<Vec<f64>> {
        let (amps, n) = self.reduced();
        let cum: Vec<f64> = (0..n).map(|j| self.spec.cumulative(j, t)).collect();
        capped_law(amps, &cum, self.spec.names, planner)
    }

    pub fn unit(&self) -> f64 {
        1.0 / (ARMAGEDDON_GRID * self.spec.names) as f64
    }

    /// Expected default fraction `E[C̄_t]`.
    pub fn expected_default_rate(&self, t: f64) -> Result<f64> {
        let mut planner = FftPlanner::new();
        let law = self.reduced_law(t, &mut planner)?;
        let m = self.spec.names as f64;
        let mean: f64 = law.iter().enumerate().map(|(c, p)| c as f64 / m * p).sum();
        let survive = (-self.armageddon_cumulative(t)).exp();
        Ok(survive * mean + (1.0 - survive))
    }
}

/// Adds `mass` at loss `x` (fraction) to a lattice of step `unit`, split
/// between neighbours so the mean is preserved.
fn deposit(probs: &mut [f64], unit: f64, x: f64, mass: f64) {
    let pos = (x / unit).clamp(0.0, (probs.len() - 1) as f64);
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac < 1e-9 || lo + 1 >= probs.len() {
        probs[lo] += mass;
    } else if frac > 1.0 - 1e-9 {
        probs[lo + 1] += mass;
    } else {
        probs[lo] += mass * (1.0 - frac);
        probs[lo + 1] += mass * frac;
    }
}

/// Stopped-loss law at `t`, conditioning on the first armageddon arrival.
/// Arrivals are grouped by quarterly period and use the reduced default
/// fraction at the period midpoint.
pub fn armageddon_loss_distribution(spec: &ArmageddonGplSpec, t: f64) -> Result<LossDistribution> {
    if !(t >= 0.0) {
        return domain(format!("negative horizon {t}"));
    }
    if t == 0.0 {
        return Ok(LossDistribution::point_mass(spec.unit(), 0, 0.0));
    }
    let grid = PaymentSchedule::quarterly(t)?;
    Ok(armageddon_on_grid(spec, &grid)?
        .pop()
        .expect("non-empty grid"))
}

/// Stopped-loss laws at every date of `grid`.
pub fn armageddon_on_grid(
    spec: &ArmageddonGplSpec,
    grid: &PaymentSchedule,
) -> Result<Vec<LossDistribution>> {
    let names = spec.spec.names;
    let m = names as f64;
    let r = spec.spec.recovery;
    let unit = spec.unit();
    let size = ARMAGEDDON_GRID * names + 1;
    let mids: Vec<f64> = (0..grid.len()).map(|i| grid.mid(i)).collect();
    let laws = |ts: &[f64]| -> Result<Vec<Vec<f64>>> {
        ts.par_iter()
            .map_init(FftPlanner::new, |planner, &t| spec.reduced_law(t, planner))
            .collect()
    };
    let at_dates = laws(grid.times())?;
    let at_mids = laws(&mids)?;

    // armageddon arrivals accumulated period by period
    let mut arrived = vec![0.0; size];
    let mut out = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let w = (-spec.armageddon_cumulative(grid.start(i))).exp()
            - (-spec.armageddon_cumulative(grid.times()[i])).exp();
        if w > 0.0 {
            for (c, p) in at_mids[i].iter().enumerate() {
                deposit(&mut arrived, unit, 1.0 - r * c as f64 / m, w * p);
            }
        }
        let survive = (-spec.armageddon_cumulative(grid.times()[i])).exp();
        let mut probs = arrived.clone();
        for (c, p) in at_dates[i].iter().enumerate() {
            deposit(&mut probs, unit, (1.0 - r) * c as f64 / m, survive * p);
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|v| *v /= total);
        out.push(LossDistribution::new(unit, probs, grid.times()[i])?);
    }
    Ok(out)
}

/// Either flavour of the model, as calibrated and priced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GplModel {
    Standard(GplSpec),
    Armageddon(ArmageddonGplSpec),
}

impl GplModel {
    pub fn spec(&self) -> &GplSpec {
        match self {
            Self::Standard(s) => s,
            Self::Armageddon(a) => &a.spec,
        }
    }

    pub fn with_intensities(&self, intensities: Vec<Vec<f64>>) -> Result<Self> {
        Ok(match self {
            Self::Standard(s) => Self::Standard(s.with_intensities(intensities)?),
            Self::Armageddon(a) => Self::Armageddon(ArmageddonGplSpec::new(
                a.spec.with_intensities(intensities)?,
            )?),
        })
    }

    /// Loss laws on every date of `grid`.
    pub fn loss_distributions(&self, grid: &PaymentSchedule) -> Result<Vec<LossDistribution>> {
        match self {
            Self::Standard(s) => gpl_loss_distributions(s, grid.times()),
            Self::Armageddon(a) => armageddon_on_grid(a, grid),
        }
    }

    /// Expected loss and expected default fraction on `grid`, given the laws.
    fn index_curves(
        &self,
        grid: &PaymentSchedule,
        dists: &[LossDistribution],
    ) -> Result<(EtlCurve, EtlCurve)> {
        let loss: Vec<f64> = dists.iter().map(|d| d.expected_loss()).collect();
        let count = match self {
            Self::Standard(s) => {
                let worst = loss.iter().copied().fold(0.0, f64::max);
                if s.recovery >= 1.0 - worst {
                    return Err(Error::RecoveryAdmissibility {
                        recovery: s.recovery,
                        bound: 1.0 - worst,
                    });
                }
                loss.iter().map(|l| l / (1.0 - s.recovery)).collect()
            }
            Self::Armageddon(a) => grid
                .times()
                .par_iter()
                .map(|&t| a.expected_default_rate(t))
                .collect::<Result<Vec<f64>>>()?,
        };
        Ok((
            EtlCurve::on_schedule(grid, loss)?,
            EtlCurve::on_schedule(grid, count)?,
        ))
    }

    /// Default leg and DV01 of an instrument, priced mid-period.
    pub fn expected_legs(
        &self,
        instrument: &Instrument,
        sched: &PaymentSchedule,
        disc: &DiscountCurve,
    ) -> Result<Legs> {
        let dists = self.loss_distributions(sched)?;
        legs_from_laws(self, instrument, sched, disc, &dists)
    }

    /// Model quotes for many instruments sharing one quarterly grid.
    pub fn price_quotes(&self, quotes: &[Quote], disc: &DiscountCurve) -> Result<Vec<f64>> {
        let horizon = quotes.iter().map(|q| q.maturity).fold(0.0, f64::max);
        if quotes.is_empty() {
            return Ok(Vec::new());
        }
        let grid = PaymentSchedule::quarterly(horizon)?;
        let dists = self.loss_distributions(&grid)?;
        quotes
            .iter()
            .map(|q| {
                let sched = grid.truncated(q.maturity)?;
                if !grid.times().starts_with(sched.times()) {
                    return domain(format!("maturity {} off the quarterly grid", q.maturity));
                }
                let legs =
                    legs_from_laws(self, &q.instrument, &sched, disc, &dists[..sched.len()])?;
                theoretical_quote(&q.quote_type, &legs)
            })
            .collect()
    }
}

fn legs_from_laws(
    model: &GplModel,
    instrument: &Instrument,
    sched: &PaymentSchedule,
    disc: &DiscountCurve,
    dists: &[LossDistribution],
) -> Result<Legs> {
    match instrument {
        Instrument::Index => {
            let (loss, count) = model.index_curves(sched, dists)?;
            index_legs(&loss, &count, sched, disc, TIMING)
        }
        Instrument::Tranche(t) => {
            let etl = EtlCurve::on_schedule(
                sched,
                dists.iter().map(|d| d.expected_tranche_loss(t)).collect(),
            )?;
            tranche_legs_from_etl(&etl, sched, disc, TIMING)
        }
    }
}

/// How amplitudes are chosen before fitting intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeMode {
    /// Keep the template's amplitudes.
    Fixed,
    /// Grow the set from `{1}` by the amplitude that most reduces the
    /// objective, until the relative gain drops below 1%.
    Greedy {
        candidates: Vec<u32>,
        max_amplitudes: usize,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentFit {
    pub maturity: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GplCalibration {
    pub model: GplModel,
    pub segments: Vec<SegmentFit>,
    pub report: MispricingReport,
    /// Σ standardized mispricing² over all instruments.
    pub objective: f64,
    /// Objective after each greedy amplitude addition (one entry when fixed).
    pub trace: Vec<f64>,
    /// Segments fitted before any failure.
    pub stage_reached: usize,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GplCalibrationConfig {
    pub disc: DiscountCurve,
    pub lm: LmOptions,
    pub greedy_min_gain: f64,
    /// Refit all segments together after the bootstrap.
    pub joint_refinement: bool,
}

impl GplCalibrationConfig {
    pub fn new(disc: DiscountCurve) -> Self {
        Self {
            disc,
            lm: LmOptions {
                max_iterations: 300,
                cost_tolerance: 1e-20,
                relative_tolerance: 1e-10,
                ..LmOptions::default()
            },
            greedy_min_gain: 0.01,
            joint_refinement: true,
        }
    }
}

fn loss_rate_scale(model: &GplModel, j: usize) -> f64 {
    let s = model.spec();
    s.amplitudes[j] as f64 / s.cap
}

/// Fits the intensities of one segment; earlier segments stay frozen and
/// later ones copy this one.
fn fit_segment(
    model: &GplModel,
    seg: usize,
    quotes: &[Quote],
    cfg: &GplCalibrationConfig,
) -> Result<(GplModel, SegmentFit)> {
    let spec = model.spec();
    let n = spec.amplitudes.len();
    let nseg = spec.breakpoints.len();
    let build = |theta: &[f64]| -> Result<GplModel> {
        let mut lam = spec.intensities.clone();
        for j in 0..n {
            let v = theta[j].max(0.0) / loss_rate_scale(model, j);
            lam[j][seg..nseg].fill(v);
        }
        model.with_intensities(lam)
    };
    let residuals = |theta: &[f64]| -> Result<Vec<f64>> {
        let m = build(theta)?;
        let th = m.price_quotes(quotes, &cfg.disc)?;
        Ok(quotes
            .iter()
            .zip(&th)
            .map(|(q, v)| mispricing::standardized(*v, q))
            .collect())
    };
    let mut bounds = LinearInequalities::new(n);
    for j in 0..n {
        bounds.bound(
            j,
            0.0,
            f64::INFINITY,
            &format!("lambda {}", spec.amplitudes[j]),
        );
    }
    let mut starts: Vec<Vec<f64>> = Vec::new();
    let prev: Vec<f64> = (0..n)
        .map(|j| spec.intensities[j][seg.saturating_sub(1)] * loss_rate_scale(model, j))
        .collect();
    if seg > 0 {
        starts.push(prev);
    }
    let index_rate = quotes
        .iter()
        .find(|q| q.instrument == Instrument::Index)
        .map(|q| q.mid / 1e4)
        .unwrap_or(0.005);
    starts.push(vec![index_rate / n as f64; n]);
    let mut tilted = vec![0.05 * index_rate / n as f64; n];
    tilted[0] = 0.7 * index_rate;
    starts.push(tilted);

    let mut best: Option<crate::math::lsq::LmReport> = None;
    let mut last_err = None;
    for x0 in starts {
        match least_squares(residuals, &x0, &bounds, &cfg.lm) {
            Ok(rep) => {
                if best.as_ref().is_none_or(|b| rep.cost < b.cost) {
                    best = Some(rep);
                }
                if best
                    .as_ref()
                    .is_some_and(|b| b.cost <= cfg.lm.cost_tolerance)
                {
                    break;
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let rep = best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Numeric("no start".into())))?;
    let fitted = build(&rep.x)?;
    Ok((
        fitted,
        SegmentFit {
            maturity: spec.breakpoints[seg],
            objective: 2.0 * rep.cost,
            iterations: rep.iterations,
            converged: rep.converged,
        },
    ))
}

/// All segments at once from the bootstrapped intensities; kept only if it
/// lowers the objective.
fn refine_jointly(
    model: &GplModel,
    quotes: &[Quote],
    cfg: &GplCalibrationConfig,
) -> Result<GplModel> {
    let spec = model.spec();
    let (n, nseg) = (spec.amplitudes.len(), spec.breakpoints.len());
    let build = |theta: &[f64]| -> Result<GplModel> {
        let lam = (0..n)
            .map(|j| {
                (0..nseg)
                    .map(|s| theta[j * nseg + s].max(0.0) / loss_rate_scale(model, j))
                    .collect()
            })
            .collect();
        model.with_intensities(lam)
    };
    let residuals = |theta: &[f64]| -> Result<Vec<f64>> {
        let th = build(theta)?.price_quotes(quotes, &cfg.disc)?;
        Ok(quotes
            .iter()
            .zip(&th)
            .map(|(q, v)| mispricing::standardized(*v, q))
            .collect())
    };
    let x0: Vec<f64> = (0..n)
        .flat_map(|j| (0..nseg).map(move |s| spec.intensities[j][s] * loss_rate_scale(model, j)))
        .collect();
    let mut bounds = LinearInequalities::new(n * nseg);
    for i in 0..n * nseg {
        bounds.bound(i, 0.0, f64::INFINITY, &format!("theta {i}"));
    }
    let start_cost: f64 = residuals(&x0)?.iter().map(|r| r * r).sum();
    let rep = least_squares(residuals, &x0, &bounds, &cfg.lm)?;
    if 2.0 * rep.cost < start_cost {
        build(&rep.x)
    } else {
        Ok(model.clone())
    }
}

/// Bootstraps intensities maturity by maturity for a fixed amplitude set.
fn calibrate_fixed(
    template: &GplModel,
    quotes: &[Quote],
    cfg: &GplCalibrationConfig,
) -> Result<GplCalibration> {
    let spec = template.spec();
    for q in quotes {
        if !spec
            .breakpoints
            .iter()
            .any(|&b| (b - q.maturity).abs() < 1e-9)
        {
            return domain(format!(
                "quote maturity {} is not an intensity breakpoint",
                q.maturity
            ));
        }
    }
    let zeros = vec![vec![0.0; spec.breakpoints.len()]; spec.amplitudes.len()];
    let mut model = template.with_intensities(zeros)?;
    let mut segments = Vec::new();
    let mut failure = None;
    for (s, &b) in spec.breakpoints.iter().enumerate() {
        let seg_quotes: Vec<Quote> = quotes
            .iter()
            .filter(|q| (q.maturity - b).abs() < 1e-9)
            .cloned()
            .collect();
        if seg_quotes.is_empty() {
            continue;
        }
        match fit_segment(&model, s, &seg_quotes, cfg) {
            Ok((m, fit)) => {
                model = m;
                segments.push(fit);
            }
            Err(e) => {
                failure = Some(format!("segment ending {b}y: {e}"));
                break;
            }
        }
    }
    let stage_reached = segments.len();
    if cfg.joint_refinement && failure.is_none() {
        match refine_jointly(&model, quotes, cfg) {
            Ok(m) => model = m,
            Err(e) => failure = Some(format!("joint refinement: {e}")),
        }
    }
    let theoretical = model.price_quotes(quotes, &cfg.disc)?;
    let report = MispricingReport::new(quotes, &theoretical);
    let objective = report.total_standardized_sq;
    Ok(GplCalibration {
        stage_reached,
        model,
        segments,
        report,
        objective,
        trace: vec![objective],
        failure,
    })
}

/// Calibrates intensities (and optionally amplitudes) to quotes across
/// maturities. Breakpoints of the template must include every quoted
/// maturity.
pub fn calibrate_gpl(
    template: &GplModel,
    quotes: &[Quote],
    mode: &AmplitudeMode,
    cfg: &GplCalibrationConfig,
) -> Result<GplCalibration> {
    if quotes.is_empty() {
        return domain("no quotes to calibrate");
    }
    match mode {
        AmplitudeMode::Fixed => calibrate_fixed(template, quotes, cfg),
        AmplitudeMode::Greedy {
            candidates,
            max_amplitudes,
        } => {
            let with_amplitudes = |amps: Vec<u32>| -> Result<GplModel> {
                let s = template.spec();
                let zeros = vec![vec![0.0; s.breakpoints.len()]; amps.len()];
                let spec = GplSpec::new(
                    amps,
                    s.breakpoints.clone(),
                    zeros,
                    s.cap,
                    s.names,
                    s.recovery,
                )?;
                Ok(match template {
                    GplModel::Standard(_) => GplModel::Standard(spec),
                    GplModel::Armageddon(_) => GplModel::Armageddon(ArmageddonGplSpec::new(spec)?),
                })
            };
            let mut set = vec![1u32];
            if let GplModel::Armageddon(a) = template {
                set.push(a.spec.names as u32);
            }
            let mut current = calibrate_fixed(&with_amplitudes(set.clone())?, quotes, cfg)?;
            let mut trace = vec![current.objective];
            while set.len() < *max_amplitudes && current.objective > 0.0 {
                let trials: Vec<(u32, GplCalibration)> = candidates
                    .par_iter()
                    .filter(|a| !set.contains(a))
                    .filter_map(|&a| {
                        let mut amps = set.clone();
                        amps.push(a);
                        amps.sort_unstable();
                        let model = with_amplitudes(amps).ok()?;
                        calibrate_fixed(&model, quotes, cfg).ok().map(|c| (a, c))
                    })
                    .collect();
                let Some((a, best)) = trials
                    .into_iter()
                    .min_by(|x, y| x.1.objective.total_cmp(&y.1.objective).then(x.0.cmp(&y.0)))
                else {
                    break;
                };
                let gain = (current.objective - best.objective) / current.objective;
                if gain < cfg.greedy_min_gain {
                    break;
                }
                set.push(a);
                set.sort_unstable();
                trace.push(best.objective);
                current = best;
            }
            current.trace = trace;
            Ok(current)
        }
    }
}
