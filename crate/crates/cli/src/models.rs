use std::path::PathBuf;

use anyhow::{anyhow, bail, Context};
use clap::{Args, ValueEnum};
use serde_json::{json, Value};

use tranche_core::etlsurface::{
    price_nonstandard_tranche, strip_surface, strip_surface_implied_recovery, EtlSurface,
    StripConfig,
};
use tranche_core::gausscop::Pool;
use tranche_core::gpl::{
    calibrate_gpl, detachment_amplitudes, AmplitudeMode, ArmageddonGplSpec, GplCalibrationConfig,
    GplModel, GplSpec, DEFAULT_ARMAGEDDON_AMPLITUDES,
};
use tranche_core::impliedcopula::{self, RecoveryLink};
use tranche_core::impliedcorr::{
    arbitrage_report, base_etl_curve, bootstrap_base, equity_concavity_report,
    invert_compound_with, CopulaContext, SCAN_STEP,
};
use tranche_core::math::interp::Interpolation;
use tranche_core::mispricing::MispricingReport;
use tranche_core::quotes::QuoteSet;
use tranche_core::{DiscountCurve, Error, PaymentSchedule, Quote};

use crate::inputs::Inputs;
use crate::output::{num, Output, Table};

#[derive(Args, Debug, Clone)]
pub struct CompoundArgs {
    /// Name recovery of the homogeneous pool.
    #[arg(long, default_value_t = 0.4)]
    pub recovery: f64,
    #[arg(long, default_value_t = 125)]
    pub names: usize,
    /// Correlation scan step.
    #[arg(long, default_value_t = SCAN_STEP)]
    pub step: f64,
}

#[derive(Args, Debug, Clone)]
pub struct BaseArgs {
    #[command(flatten)]
    pub pool: CompoundArgs,
    /// Interpolation of base correlation in detachment.
    #[arg(long, default_value = "linear", value_parser = parse_interp)]
    pub interp: Interpolation,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LinkKind {
    Linear,
    Log,
    Constant,
}

#[derive(Args, Debug, Clone)]
pub struct ImpliedCopulaArgs {
    #[arg(long)]
    pub maturity: f64,
    #[arg(long, value_enum, default_value_t = LinkKind::Linear)]
    pub recovery_link: LinkKind,
    /// Slope: `a` of the log link, or the PD slope of the linear link.
    #[arg(long)]
    pub a: Option<f64>,
    /// Intercept of the linear link.
    #[arg(long, default_value_t = 0.52)]
    pub intercept: f64,
    /// Recovery of the constant link.
    #[arg(long, default_value_t = 0.4)]
    pub recovery: f64,
    #[arg(long, default_value_t = 125)]
    pub scenarios: usize,
}

#[derive(Args, Debug, Clone)]
pub struct EtlStripArgs {
    /// Interpolation in time: linear or spline.
    #[arg(long, default_value = "linear", value_parser = parse_interp)]
    pub interp: Interpolation,
    /// Fit one recovery per maturity segment, using super-senior quotes.
    #[arg(long)]
    pub implied_recovery: bool,
    #[arg(long, default_value_t = 0.4)]
    pub recovery: f64,
}

#[derive(Args, Debug, Clone)]
pub struct EtlPriceArgs {
    #[arg(long)]
    pub attach: f64,
    #[arg(long)]
    pub detach: f64,
    #[arg(long)]
    pub maturity: f64,
    /// Quote an upfront against this fixed running spread as well.
    #[arg(long)]
    pub running_bps: Option<f64>,
    #[arg(long)]
    pub allow_extrapolation: bool,
    /// Surface JSON written by etl-strip; quotes are stripped otherwise.
    #[arg(long, conflicts_with = "quotes")]
    pub surface: Option<PathBuf>,
    #[arg(long)]
    pub quotes: Option<PathBuf>,
    #[arg(long)]
    pub disc: Option<PathBuf>,
    #[arg(long, default_value_t = 0.03)]
    pub flat_rate: f64,
    #[arg(long)]
    pub date: Option<String>,
    #[command(flatten)]
    pub strip: EtlStripArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GplMode {
    Fixed,
    Greedy,
}

#[derive(Args, Debug, Clone)]
pub struct GplArgs {
    #[arg(long, value_enum, default_value_t = GplMode::Fixed)]
    pub mode: GplMode,
    /// Jump amplitudes in loss units; derived from the quoted detachments by default.
    #[arg(long, value_delimiter = ',')]
    pub amplitudes: Option<Vec<u32>>,
    /// Add the pool-wiping component and work in default counts.
    #[arg(long)]
    pub armageddon: bool,
    /// Defaults to 0.3, or 0.4 with --armageddon.
    #[arg(long)]
    pub recovery: Option<f64>,
    #[arg(long, default_value_t = 125)]
    pub names: usize,
    /// Largest amplitude set the greedy search may build.
    #[arg(long, default_value_t = 10)]
    pub max_amplitudes: usize,
    /// Skip the joint pass over all segments after the bootstrap.
    #[arg(long)]
    pub no_refine: bool,
}

fn parse_interp(s: &str) -> Result<Interpolation, String> {
    s.parse()
}

#[derive(Debug, Clone)]
pub enum Model {
    Compound(CompoundArgs),
    Base(BaseArgs),
    ImpliedCopula(ImpliedCopulaArgs),
    EtlStrip(EtlStripArgs),
    Gpl(GplArgs),
}

/// Outcome of one model on one quote set.
pub struct RunResult {
    pub output: Output,
    /// Invertibility indicators keyed by instrument.
    pub indicators: Vec<(String, bool)>,
    /// Instruments priced outside bid/ask and the number of instruments.
    pub outside: Option<(usize, usize)>,
    pub surface: Option<EtlSurface>,
}

impl RunResult {
    fn new(record: Value, tables: Vec<Table>) -> Self {
        Self {
            output: Output { record, tables },
            indicators: Vec::new(),
            outside: None,
            surface: None,
        }
    }
}

fn header(set: &QuoteSet) -> Value {
    json!({ "date": set.date, "family": set.family, "series": set.series })
}

fn maturity_label(t: f64) -> String {
    format!("{t}y")
}

fn context(
    set: &QuoteSet,
    t: f64,
    args: &CompoundArgs,
    disc: &DiscountCurve,
) -> anyhow::Result<CopulaContext> {
    let index = set
        .index(t)
        .ok_or_else(|| anyhow!("no index quote at {t}y to calibrate the pool hazard"))?;
    Ok(CopulaContext::homogeneous_from_index(
        index.mid,
        args.recovery,
        args.names,
        t,
        disc.clone(),
    )?)
}

fn pool_hazard(ctx: &CopulaContext) -> Option<f64> {
    match ctx.pool {
        Pool::Homogeneous { hazard, .. } => Some(hazard),
        Pool::Heterogeneous { .. } => None,
    }
}

fn tranche_quotes(set: &QuoteSet, t: f64) -> Vec<Quote> {
    set.tranches(t).into_iter().cloned().collect()
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Compound(_) => "compound",
            Self::Base(_) => "base",
            Self::ImpliedCopula(_) => "implied-copula",
            Self::EtlStrip(_) => "etl-strip",
            Self::Gpl(_) => "gpl-calibrate",
        }
    }

    pub fn run(
        &self,
        set: &QuoteSet,
        disc: &DiscountCurve,
        prior: Option<&EtlSurface>,
    ) -> anyhow::Result<RunResult> {
        match self {
            Self::Compound(a) => compound(set, disc, a),
            Self::Base(a) => base(set, disc, a),
            Self::ImpliedCopula(a) => implied_copula(set, disc, a),
            Self::EtlStrip(a) => etl_strip(set, disc, a, prior),
            Self::Gpl(a) => gpl(set, disc, a),
        }
    }
}

fn compound(
    set: &QuoteSet,
    disc: &DiscountCurve,
    args: &CompoundArgs,
) -> anyhow::Result<RunResult> {
    let mut scan = Table::new("compound_scan", &["maturity", "tranche", "rho", "value"]);
    let mut indicators = Vec::new();
    let mut blocks = Vec::new();
    for t in set.maturities() {
        let quotes = tranche_quotes(set, t);
        if quotes.is_empty() {
            continue;
        }
        let ctx = context(set, t, args, disc)?;
        let mut rows = Vec::new();
        for q in &quotes {
            let r = invert_compound_with(q, &ctx, args.step)?;
            let label = r.tranche.label();
            for (rho, v) in r.grid.iter().zip(&r.curve) {
                scan.push(vec![num(t), label.clone(), num(*rho), num(*v)]);
            }
            indicators.push((format!("{} {label}", maturity_label(t)), r.invertible()));
            rows.push(json!({
                "tranche": r.tranche,
                "market": r.market,
                "status": r.status,
                "roots": r.roots,
                "attainable_range": [r.attainable_range.0, r.attainable_range.1],
            }));
        }
        blocks.push(json!({ "maturity": t, "hazard": pool_hazard(&ctx), "tranches": rows }));
    }
    let mut record = header(set);
    record["maturities"] = Value::Array(blocks);
    let mut out = RunResult::new(record, vec![scan]);
    out.indicators = indicators;
    Ok(out)
}

fn base(set: &QuoteSet, disc: &DiscountCurve, args: &BaseArgs) -> anyhow::Result<RunResult> {
    let mut etl_table = Table::new("base_etl", &["maturity", "tranche", "time", "etl"]);
    let mut indicators = Vec::new();
    let mut blocks = Vec::new();
    for t in set.maturities() {
        let quotes = tranche_quotes(set, t);
        if quotes.is_empty() {
            continue;
        }
        let ctx = context(set, t, &args.pool, disc)?;
        let mut compound = Vec::new();
        for q in &quotes {
            let r = invert_compound_with(q, &ctx, args.pool.step)?;
            indicators.push((
                format!("{} {}", maturity_label(t), r.tranche.label()),
                r.invertible(),
            ));
            compound.push(json!({ "tranche": r.tranche, "status": r.status }));
        }
        let curve = match bootstrap_base(&quotes, &ctx, args.interp) {
            Ok(c) => c,
            Err(e @ Error::BaseUnattainable { .. }) => {
                blocks.push(json!({
                    "maturity": t,
                    "hazard": pool_hazard(&ctx),
                    "base_curve": null,
                    "error": e.to_string(),
                    "compound": compound,
                }));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let mut arbitrage = Vec::new();
        for q in &quotes {
            let tranche = q.instrument.tranche().expect("tranche quote");
            let etl = base_etl_curve(&curve, tranche, &ctx)?;
            for (time, v) in etl.times.iter().zip(&etl.values) {
                etl_table.push(vec![num(t), tranche.label(), num(*time), num(*v)]);
            }
            for v in arbitrage_report(&etl) {
                arbitrage.push(json!({ "tranche": tranche.label(), "violation": v }));
            }
        }
        let equity: Vec<_> = curve
            .detachments
            .iter()
            .zip(&curve.correlations)
            .map(|(k, rho)| ctx.equity_etl(*rho, *k))
            .collect::<Result<_, _>>()?;
        for (i, time) in ctx.sched.times().iter().enumerate() {
            let g: Vec<f64> = equity.iter().map(|c| c.values[i]).collect();
            for v in equity_concavity_report(*time, &curve.detachments, &g) {
                arbitrage.push(json!({ "tranche": "equity", "violation": v }));
            }
        }
        blocks.push(json!({
            "maturity": t,
            "hazard": pool_hazard(&ctx),
            "base_curve": curve,
            "arbitrage": arbitrage,
            "compound": compound,
        }));
    }
    let mut record = header(set);
    record["maturities"] = Value::Array(blocks);
    let mut out = RunResult::new(record, vec![etl_table]);
    out.indicators = indicators;
    Ok(out)
}

fn recovery_link(args: &ImpliedCopulaArgs) -> RecoveryLink {
    match args.recovery_link {
        LinkKind::Linear => RecoveryLink::FlooredLinear {
            intercept: args.intercept,
            slope: args.a.unwrap_or(6.9),
        },
        LinkKind::Log => RecoveryLink::Logarithmic {
            a: args.a.unwrap_or(-0.1),
        },
        LinkKind::Constant => RecoveryLink::Constant {
            recovery: args.recovery,
        },
    }
}

fn implied_copula(
    set: &QuoteSet,
    disc: &DiscountCurve,
    args: &ImpliedCopulaArgs,
) -> anyhow::Result<RunResult> {
    let quotes: Vec<Quote> = set
        .for_maturity(args.maturity)
        .into_iter()
        .cloned()
        .collect();
    if quotes.is_empty() {
        bail!("no quotes at {}y", args.maturity);
    }
    let sched = PaymentSchedule::quarterly(args.maturity)?;
    let fit =
        impliedcopula::calibrate(&quotes, args.scenarios, &recovery_link(args), &sched, disc)?;
    let report = MispricingReport::new(&quotes, &fit.theoretical);
    let mut dist = Table::new(
        "default_distribution",
        &["scenario", "default_rate", "probability"],
    );
    for (j, p) in fit.probabilities.p.iter().enumerate() {
        dist.push(vec![
            j.to_string(),
            num(fit.ladder.default_rate(j, args.maturity)),
            num(*p),
        ]);
    }
    let outside = report.outside.len();
    let mut record = header(set);
    record["maturity"] = json!(args.maturity);
    record["ladder"] = json!(fit.ladder);
    record["probabilities"] = json!(fit.probabilities);
    record["theoretical"] = json!(fit.theoretical);
    record["mispricing"] = json!(report);
    let mut out = RunResult::new(record, vec![dist]);
    out.outside = Some((outside, quotes.len()));
    Ok(out)
}

fn strip(
    quotes: &[Quote],
    disc: &DiscountCurve,
    args: &EtlStripArgs,
    prior: Option<&EtlSurface>,
) -> anyhow::Result<(EtlSurface, tranche_core::etlsurface::StripReport)> {
    let cfg = StripConfig::new(disc.clone(), args.interp);
    Ok(if args.implied_recovery {
        strip_surface_implied_recovery(quotes, &cfg, prior)?
    } else {
        strip_surface(quotes, &cfg, args.recovery, prior)?
    })
}

fn etl_strip(
    set: &QuoteSet,
    disc: &DiscountCurve,
    args: &EtlStripArgs,
    prior: Option<&EtlSurface>,
) -> anyhow::Result<RunResult> {
    let (surface, report) = strip(&set.quotes, disc, args, prior)?;
    let mut grid = Table::new("etl_grid", &["time", "attachment", "detachment", "etl"]);
    let sched = PaymentSchedule::quarterly(surface.max_maturity())?;
    for (t, row) in sched
        .times()
        .iter()
        .zip(surface.bucket_values(sched.times())?)
    {
        for (j, v) in row.iter().enumerate() {
            let b = surface.bucket(j);
            grid.push(vec![num(*t), num(b.attachment), num(b.detachment), num(*v)]);
        }
    }
    let outside = report.mispricing.outside.len();
    let total = report.mispricing.rows.len();
    let mut record = header(set);
    record["surface"] = json!(surface);
    record["report"] = json!(report);
    let mut out = RunResult::new(record, vec![grid]);
    out.outside = Some((outside, total));
    out.surface = Some(surface);
    Ok(out)
}

fn load_surface(path: &PathBuf) -> anyhow::Result<EtlSurface> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: Value = serde_json::from_str(&text)?;
    let node = doc
        .pointer("/result/surface")
        .or_else(|| doc.get("surface"))
        .unwrap_or(&doc)
        .clone();
    serde_json::from_value(node).context("surface JSON")
}

pub fn etl_price(args: &EtlPriceArgs) -> anyhow::Result<Output> {
    let disc = match &args.disc {
        Some(p) => tranche_core::quotes::read_discount(p)?,
        None => DiscountCurve::flat(args.flat_rate),
    };
    let surface = match (&args.surface, &args.quotes) {
        (Some(p), _) => load_surface(p)?,
        (None, Some(q)) => {
            let inputs = Inputs {
                quotes: q.clone(),
                disc: None,
                flat_rate: args.flat_rate,
                date: args.date.clone(),
                out: None,
                seed: 0,
            };
            let sets = inputs.quote_sets()?;
            let [set] = sets.as_slice() else {
                bail!(
                    "etl-price needs exactly one quote date, found {}",
                    sets.len()
                );
            };
            strip(&set.quotes, &disc, &args.strip, None)?.0
        }
        (None, None) => bail!("pass --surface or --quotes"),
    };
    let price = price_nonstandard_tranche(
        &surface,
        args.attach,
        args.detach,
        args.maturity,
        &disc,
        args.running_bps,
        args.allow_extrapolation,
    )?;
    let mut etl = Table::new("tranche_etl", &["time", "etl"]);
    for (t, v) in price.etl.times.iter().zip(&price.etl.values) {
        etl.push(vec![num(*t), num(*v)]);
    }
    Ok(Output {
        record: json!(price),
        tables: vec![etl],
    })
}

fn gpl_template(set: &QuoteSet, args: &GplArgs) -> anyhow::Result<(GplModel, u32)> {
    let breakpoints = set.maturities();
    if args.armageddon {
        let recovery = args.recovery.unwrap_or(0.4);
        let amps = args
            .amplitudes
            .clone()
            .unwrap_or_else(|| DEFAULT_ARMAGEDDON_AMPLITUDES.to_vec());
        let zeros = vec![vec![0.0; breakpoints.len()]; amps.len()];
        let spec = GplSpec::new(
            amps,
            breakpoints,
            zeros,
            args.names as f64,
            args.names,
            recovery,
        )?;
        return Ok((
            GplModel::Armageddon(ArmageddonGplSpec::new(spec)?),
            args.names as u32,
        ));
    }
    let recovery = args.recovery.unwrap_or(0.3);
    let top = (args.names as f64 / (1.0 - recovery)).ceil() as u32;
    let amps = match &args.amplitudes {
        Some(a) => a.clone(),
        None => {
            let mut dets: Vec<f64> = set
                .quotes
                .iter()
                .filter_map(|q| q.instrument.tranche().map(|t| t.detachment))
                .filter(|d| *d < 1.0)
                .collect();
            dets.sort_by(f64::total_cmp);
            dets.dedup();
            detachment_amplitudes(args.names, &dets, recovery, top)
        }
    };
    let spec = GplSpec::one_default_per_unit(amps, breakpoints, args.names, recovery)?;
    Ok((GplModel::Standard(spec), top))
}

fn gpl(set: &QuoteSet, disc: &DiscountCurve, args: &GplArgs) -> anyhow::Result<RunResult> {
    let (template, top) = gpl_template(set, args)?;
    let mode = match args.mode {
        GplMode::Fixed => AmplitudeMode::Fixed,
        GplMode::Greedy => AmplitudeMode::Greedy {
            candidates: (1..=top).collect(),
            max_amplitudes: args.max_amplitudes,
        },
    };
    let mut cfg = GplCalibrationConfig::new(disc.clone());
    cfg.joint_refinement = !args.no_refine;
    let cal = calibrate_gpl(&template, &set.quotes, &mode, &cfg)?;
    if let Some(reason) = &cal.failure {
        bail!(
            "calibration stopped after {} segments: {reason}",
            cal.stage_reached
        );
    }
    let horizon = set.maturities().last().copied().unwrap_or(0.0);
    let sched = PaymentSchedule::quarterly(horizon)?;
    let mut surface = Table::new("loss_distribution", &["time", "loss", "probability"]);
    for (t, d) in sched
        .times()
        .iter()
        .zip(cal.model.loss_distributions(&sched)?)
    {
        for (n, p) in d.probs.iter().enumerate() {
            if *p > 0.0 {
                surface.push(vec![num(*t), num(d.loss_at(n)), num(*p)]);
            }
        }
    }
    let outside = cal.report.outside.len();
    let total = cal.report.rows.len();
    let mut record = header(set);
    record["calibration"] = json!(cal);
    let mut out = RunResult::new(record, vec![surface]);
    out.outside = Some((outside, total));
    Ok(out)
}
