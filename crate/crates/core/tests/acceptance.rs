//! Acceptance checks, one PASS/FAIL line per criterion.

mod common;

use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use common::*;
use tranche_core::etlsurface::*;
use tranche_core::gausscop::{
    self, conditional_pd, heterogeneous_count_distribution, LossDistribution,
};
use tranche_core::gpl::*;
use tranche_core::impliedcopula::{self, local_modes, RecoveryLink};
use tranche_core::impliedcorr::*;
use tranche_core::math::interp::Interpolation;
use tranche_core::math::quadrature::gauss_legendre;
use tranche_core::{DiscountCurve, Instrument, PaymentSchedule, Quote, QuoteType, TrancheDef};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn tr(a: f64, b: f64) -> TrancheDef {
    TrancheDef::new(a, b).unwrap()
}

const UPFRONT: QuoteType = QuoteType::Upfront { running_bps: 500.0 };

// 10y quotes of Aug 3 2005; the index level is an input assumption.
const AUG3_INDEX_BPS: f64 = 54.5;
const AUG3_RATE: f64 = 0.04;

fn aug3() -> (CopulaContext, Vec<Quote>) {
    let ctx = CopulaContext::homogeneous_from_index(
        AUG3_INDEX_BPS,
        0.4,
        125,
        10.0,
        DiscountCurve::flat(AUG3_RATE),
    )
    .unwrap();
    let quotes = vec![
        Quote::upfront_mid(tr(0.0, 0.03), 10.0, 0.49, 500.0).unwrap(),
        Quote::running_mid(Instrument::Tranche(tr(0.03, 0.06)), 10.0, 360.0).unwrap(),
        Quote::running_mid(Instrument::Tranche(tr(0.06, 0.09)), 10.0, 82.0).unwrap(),
        Quote::running_mid(Instrument::Tranche(tr(0.09, 0.12)), 10.0, 46.0).unwrap(),
        Quote::running_mid(Instrument::Tranche(tr(0.12, 0.22)), 10.0, 31.0).unwrap(),
    ];
    (ctx, quotes)
}

fn compound_invertibility() -> Outcome {
    let t0 = Instant::now();
    let (ctx, quotes) = aug3();
    let results: Vec<CompoundResult> = quotes
        .iter()
        .map(|q| invert_compound(q, &ctx).unwrap())
        .collect();
    let elapsed = t0.elapsed();
    let (lo, hi) = results[2].attainable_range;
    let range_ok = (lo / 93.0 - 1.0).abs() <= 0.15 && (hi / 268.0 - 1.0).abs() <= 0.15;
    let mezz_fails = results[2].status == Invertibility::NonInvertible;
    let others = results
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != 2)
        .all(|(_, r)| !r.roots.is_empty());
    let roots: Vec<String> = results
        .iter()
        .map(|r| match r.roots.first() {
            Some(x) => format!("{:.3}", x),
            None => "none".into(),
        })
        .collect();
    outcome(
        range_ok && mezz_fails && others && elapsed < Duration::from_secs(30),
        format!(
            "6-9% range [{lo:.1}, {hi:.1}] bps, 82 bps {:?}, first roots {roots:?}, {}",
            results[2].status,
            secs(elapsed)
        ),
    )
}

fn base_bootstrap() -> Outcome {
    let (ctx, quotes) = aug3();
    let base = match bootstrap_base(&quotes, &ctx, Interpolation::Linear) {
        Ok(b) => b,
        Err(e) => return outcome(false, format!("bootstrap failed: {e}")),
    };
    let rho9 = base.correlations[2];
    let mut worst = 0.0f64;
    for (i, q) in quotes.iter().enumerate() {
        let t = q.instrument.tranche().unwrap();
        let rho_a = if i == 0 {
            0.0
        } else {
            base.correlations[i - 1]
        };
        let v = base_tranche_value(&ctx, t, &q.quote_type, rho_a, base.correlations[i]).unwrap();
        // upfronts are compared in bps of notional
        let err = match q.quote_type {
            QuoteType::Running => (v - q.mid).abs(),
            QuoteType::Upfront { .. } => 1e4 * (v - q.mid).abs(),
        };
        worst = worst.max(err);
    }
    let etl = ctx
        .base_etl(base.correlations[1], 0.48, &tr(0.06, 0.09))
        .unwrap();
    let min_etl = etl.values.iter().copied().fold(f64::INFINITY, f64::min);
    let negative = etl.values.iter().position(|v| *v < 0.0);
    outcome(
        (rho9 - 0.3807).abs() <= 0.02 && worst < 0.1 && negative.is_some(),
        format!(
            "rho(9%) = {:.2}%, worst repricing {worst:.2e} bps, 6-9% ETL at rho_B 0.48 min {min_etl:.3e} (first negative at t = {})",
            100.0 * rho9,
            negative.map_or("none".into(), |i| format!("{}", etl.times[i]))
        ),
    )
}

fn implied_copula() -> Outcome {
    let t0 = Instant::now();
    let r = |a, b| Instrument::Tranche(tr(a, b));
    let quotes = vec![
        Quote::new(r(0.0, 0.03), 5.0, UPFRONT, 0.315, 0.324, 0.336).unwrap(),
        Quote::new(r(0.03, 0.07), 5.0, QuoteType::Running, 100.0, 106.5, 113.0).unwrap(),
        Quote::new(r(0.07, 0.10), 5.0, QuoteType::Running, 22.0, 23.5, 25.0).unwrap(),
        Quote::new(r(0.10, 0.15), 5.0, QuoteType::Running, 9.3, 10.0, 10.7).unwrap(),
        Quote::new(r(0.15, 0.30), 5.0, QuoteType::Running, 5.1, 5.5, 5.9).unwrap(),
    ];
    let sched = PaymentSchedule::quarterly(5.0).unwrap();
    let fit = match impliedcopula::calibrate(
        &quotes,
        125,
        &RecoveryLink::default(),
        &sched,
        &DiscountCurve::flat(0.05),
    ) {
        Ok(f) => f,
        Err(e) => return outcome(false, format!("calibration failed: {e}")),
    };
    let elapsed = t0.elapsed();
    let p = &fit.probabilities.p;
    let m = fit.probabilities.final_mispricing();
    let worst = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    // scenario j defaults j of 125 names by maturity
    let tail: f64 = p[41..].iter().sum();
    let modes = local_modes(p);
    let mid_mode = modes.iter().any(|j| (10..=30).contains(j));
    outcome(
        !fit.probabilities.stage2_skipped
            && worst <= 1.0
            && tail > 0.0
            && mid_mode
            && elapsed < Duration::from_secs(60),
        format!(
            "stage 2 max |m| {worst:.6}, tail beyond 40 defaults {tail:.4}, modes {modes:?}, {}",
            secs(elapsed)
        ),
    )
}

type Row = (&'static str, [Option<(f64, f64, f64)>; 4]);

const GPL_MATURITIES: [f64; 4] = [3.0, 5.0, 7.0, 10.0];

/// Quotes `(Π, Δ)` with `Δ` half the bid-ask; equity `Π` is upfront in bps.
fn gpl_panel(rows: &[Row]) -> (Vec<Quote>, f64) {
    let mut quotes = Vec::new();
    let mut reference_total = 0.0;
    for (name, cells) in rows {
        let inst = match *name {
            "index" => Instrument::Index,
            s => {
                let (a, b) = s.split_once('-').unwrap();
                Instrument::Tranche(tr(
                    a.parse::<f64>().unwrap() / 100.0,
                    b.parse::<f64>().unwrap() / 100.0,
                ))
            }
        };
        for (cell, &t) in cells.iter().zip(&GPL_MATURITIES) {
            let Some((pi, delta, e)) = *cell else {
                continue;
            };
            reference_total += (e / delta).powi(2);
            let q = if inst.tranche().is_some_and(|x| x.is_equity()) {
                Quote::new(
                    inst,
                    t,
                    UPFRONT,
                    (pi - delta) / 1e4,
                    pi / 1e4,
                    (pi + delta) / 1e4,
                )
            } else {
                Quote::new(inst, t, QuoteType::Running, pi - delta, pi, pi + delta)
            };
            quotes.push(q.unwrap());
        }
    }
    (quotes, reference_total)
}

fn gpl_fixed(quotes: &[Quote]) -> (GplCalibration, Duration) {
    let t0 = Instant::now();
    let cap = (125.0f64 / 0.7).ceil() as u32;
    let amps = detachment_amplitudes(125, &[0.03, 0.06, 0.09, 0.12, 0.22], 0.3, cap);
    let spec = GplSpec::one_default_per_unit(amps, GPL_MATURITIES.to_vec(), 125, 0.3).unwrap();
    let cfg = GplCalibrationConfig::new(DiscountCurve::flat(0.03));
    let cal = calibrate_gpl(
        &GplModel::Standard(spec),
        quotes,
        &AmplitudeMode::Fixed,
        &cfg,
    )
    .unwrap();
    (cal, t0.elapsed())
}

fn gpl_calibration() -> Outcome {
    let s = |p, d, e| Some((p, d, e));
    let (may, _) = gpl_panel(&[
        (
            "index",
            [
                s(38., 4., 0.),
                s(54., 1., 0.),
                s(65., 3., 1.),
                s(77., 2., 0.),
            ],
        ),
        (
            "0-3",
            [
                s(2060., 100., 1.),
                s(4262., 118., 8.),
                s(5421., 384., 73.),
                s(6489., 124., -21.),
            ],
        ),
        (
            "3-6",
            [
                s(72., 10., 0.),
                s(173., 68., 0.),
                s(398., 40., -8.),
                s(590., 20., 1.),
            ],
        ),
        (
            "6-9",
            [
                s(28., 6., 0.),
                s(57., 6., 0.),
                s(141., 17., -5.),
                s(188., 15., 2.),
            ],
        ),
        (
            "9-12",
            [
                s(13., 2., 0.),
                s(31., 5., 1.),
                s(72., 20., -3.),
                s(87., 15., 6.),
            ],
        ),
        (
            "12-22",
            [
                s(3., 1., 0.),
                s(21., 3., 0.),
                s(42., 13., -3.),
                s(60., 10., -3.),
            ],
        ),
    ]);
    let (oct, reference_total) = gpl_panel(&[
        (
            "index",
            [
                s(23., 2., 0.),
                s(38., 1., 0.),
                s(47., 1., 0.),
                s(58., 1., 0.),
            ],
        ),
        (
            "0-3",
            [
                s(762., 26., -2.),
                s(3137., 26., 2.),
                s(4862., 76., -89.),
                s(5862., 74., 157.),
            ],
        ),
        (
            "3-6",
            [
                s(20., 10., 1.),
                s(95., 1., 0.),
                s(200., 3., 1.),
                s(515., 10., -10.),
            ],
        ),
        (
            "6-9",
            [
                s(7., 6., 0.),
                s(28., 1., 0.),
                s(43., 2., 1.),
                s(100., 4., 3.),
            ],
        ),
        (
            "9-12",
            [None, s(12., 2., 1.), s(27., 4., -3.), s(54., 5., -4.)],
        ),
        (
            "12-22",
            [None, s(7., 1., 0.), s(13., 2., 0.), s(23., 3., 0.)],
        ),
    ]);
    let (cal_may, t_may) = gpl_fixed(&may);
    let (cal_oct, t_oct) = gpl_fixed(&oct);
    let expected = ["7y 0-3%", "10y 0-3%", "10y 3-6%"];
    let others = cal_oct
        .report
        .outside
        .iter()
        .filter(|l| !expected.contains(&l.as_str()))
        .count();
    let limit = Duration::from_secs(300);
    outcome(
        may.len() == 24
            && cal_may.report.all_inside()
            && cal_oct.objective <= 2.0 * reference_total
            && others <= 2
            && t_may < limit
            && t_oct < limit,
        format!(
            "May 13: {} of 24 inside ({}); Oct 11: objective {:.2} vs bound {:.2}, outside {:?} ({})",
            cal_may.report.rows.iter().filter(|r| r.inside()).count(),
            secs(t_may),
            cal_oct.objective,
            2.0 * reference_total,
            cal_oct.report.outside,
            secs(t_oct)
        ),
    )
}

fn poisson_pmf(mean: f64) -> Vec<f64> {
    let mut out = vec![(-mean).exp()];
    let mut tail = 1.0 - out[0];
    while tail > 1e-14 {
        let k = out.len();
        let next = out[k - 1] * mean / k as f64;
        out.push(next);
        tail -= next;
    }
    out
}

fn convolution_oracle(amps: &[u32], cumulative: &[f64], top: usize) -> Vec<f64> {
    let mut law = vec![1.0];
    for (&a, &l) in amps.iter().zip(cumulative) {
        let pmf = poisson_pmf(l);
        let mut next = vec![0.0; law.len() + (pmf.len() - 1) * a as usize];
        for (x, px) in law.iter().enumerate() {
            for (k, pk) in pmf.iter().enumerate() {
                next[x + k * a as usize] += px * pk;
            }
        }
        law = next;
    }
    let mut capped = vec![0.0; top + 1];
    for (x, p) in law.iter().enumerate() {
        capped[x.min(top)] += p;
    }
    capped
}

fn fft_vs_convolution() -> (bool, String) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let cap = rng.random_range(10..=200) as f64;
        let n = rng.random_range(1..=5);
        let mut amps: Vec<u32> = (0..n).map(|_| rng.random_range(1..=cap as u32)).collect();
        amps.sort_unstable();
        amps.dedup();
        let lam = amps
            .iter()
            .map(|_| vec![rng.random_range(0.0..1.0)])
            .collect();
        let spec = GplSpec::new(amps.clone(), vec![10.0], lam, cap, cap as usize, 0.3).unwrap();
        let t = rng.random_range(0.25..10.0);
        let fft = gpl_loss_distribution(&spec, t).unwrap();
        let oracle = convolution_oracle(&amps, &spec.cumulatives(t), spec.top_unit());
        worst = fft
            .probs
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(worst, f64::max);
    }
    (
        worst < 1e-10,
        format!("(a) max |FFT - convolution| {worst:.1e}"),
    )
}

fn copula_vs_monte_carlo() -> (bool, String) {
    let (m, rho, p, paths) = (20, 0.3, 0.05_f64, 10_000_000);
    let model = gausscop::homogeneous_count_distribution(m, 5.0, rho, -(-p).ln_1p()).unwrap();
    let mc = gausscop::monte_carlo_counts(m, rho, p, paths, 0).unwrap();
    let mut worst = 0.0f64;
    for (q, est) in model.probs.iter().zip(&mc.probs) {
        // binomial standard error under the model law
        let se = (q * (1.0 - q) / paths as f64).sqrt();
        let z = if se > 0.0 { (est - q).abs() / se } else { 0.0 };
        worst = worst.max(z);
    }
    (
        worst <= 3.0,
        format!("(b) max |z| over {} buckets {worst:.2}", m + 1),
    )
}

/// Count law by enumerating all `2^M` default sets at each factor node.
fn enumeration_oracle(pds: &[f64], rho: f64) -> Vec<f64> {
    let m = pds.len();
    let (x, w) = gauss_legendre(12);
    let (lo, hi, panels) = (-10.0, 10.0, 400);
    let h = (hi - lo) / panels as f64;
    let mut law = vec![0.0; m + 1];
    for k in 0..panels {
        let a = lo + k as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            let s = a + 0.5 * h * (xi + 1.0);
            let weight = 0.5 * h * wi * (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let cond: Vec<f64> = pds
                .iter()
                .map(|p| conditional_pd(rho, -(-p).ln_1p(), s).unwrap())
                .collect();
            for set in 0u32..(1 << m) {
                let mut prob = 1.0;
                for (i, c) in cond.iter().enumerate() {
                    prob *= if set >> i & 1 == 1 { *c } else { 1.0 - c };
                }
                law[set.count_ones() as usize] += weight * prob;
            }
        }
    }
    law
}

fn recursion_vs_enumeration() -> (bool, String) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for m in 1..=10 {
        let pds: Vec<f64> = (0..m).map(|_| rng.random_range(0.005..0.3)).collect();
        let rho = rng.random_range(0.0..0.8);
        let rec = heterogeneous_count_distribution(&pds, rho, 5.0).unwrap();
        let oracle = enumeration_oracle(&pds, rho);
        worst = rec
            .probs
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(worst, f64::max);
    }
    (
        worst < 1e-12,
        format!("(c) max |recursion - enumeration| {worst:.1e}"),
    )
}

fn oracle_equivalences() -> Outcome {
    let parts = [
        fft_vs_convolution(),
        copula_vs_monte_carlo(),
        recursion_vs_enumeration(),
    ];
    outcome(
        parts.iter().all(|p| p.0),
        parts
            .iter()
            .map(|p| p.1.as_str())
            .collect::<Vec<_>>()
            .join("; "),
    )
}

fn etl_self_consistency() -> Outcome {
    let disc = DiscountCurve::flat(0.03);
    let maturities = [3.0, 5.0, 7.0, 10.0];
    let constant = SurfaceRecovery::Constant { recovery: 0.4 };
    let mut pass = true;
    let mut notes = Vec::new();
    for interp in [Interpolation::Linear, Interpolation::MonotoneCubic] {
        let truth = copula_surface(
            0.012,
            0.12,
            0.02,
            &maturities,
            &STANDARD_DETACHMENTS,
            interp,
            constant.clone(),
        );
        let quotes = surface_quotes(&truth, &disc, false, 0.02);
        let (fit, rep) =
            strip_surface(&quotes, &StripConfig::new(disc.clone(), interp), 0.4, None).unwrap();
        let err = max_nodal_error(&fit, &truth);
        let m = rep.max_abs_mispricing();
        pass &= err < 1e-4 && m < 1e-6 && rep.max_constraint_violation < 1e-10;
        notes.push(format!(
            "{interp:?}: nodal error {err:.1e}, max |m| {m:.1e}, slack {:.1e}",
            rep.max_constraint_violation
        ));
    }
    let planted = SurfaceRecovery::Piecewise {
        maturities: vec![5.0, 10.0],
        values: vec![0.3, 0.4],
    };
    let truth = copula_surface(
        0.012,
        0.12,
        0.02,
        &[5.0, 10.0],
        &STANDARD_DETACHMENTS,
        Interpolation::Linear,
        planted,
    );
    let quotes = surface_quotes(&truth, &disc, true, 1e-5);
    let (_, rep) = strip_surface_implied_recovery(
        &quotes,
        &StripConfig::new(disc, Interpolation::Linear),
        None,
    )
    .unwrap();
    let r = &rep.recoveries;
    pass &= (r[0] - 0.3).abs() < 0.02 && (r[1] - 0.4).abs() < 0.02;
    notes.push(format!("implied recoveries ({:.4}, {:.4})", r[0], r[1]));
    outcome(pass, notes.join("; "))
}

fn run_property<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> (bool, String) {
    let mut runner = TestRunner::new(Config {
        cases: 200,
        failure_persistence: None,
        ..Config::default()
    });
    match runner.run(&strategy, test) {
        Ok(()) => (true, format!("{name} ok")),
        Err(e) => (false, format!("{name} failed: {e}")),
    }
}

fn random_law(m: usize, rho: f64, p: f64) -> LossDistribution {
    gausscop::homogeneous_count_distribution(m, 5.0, rho, -(-p).ln_1p())
        .unwrap()
        .with_unit(0.6 / m as f64)
}

fn property_suites() -> Outcome {
    let law = (1usize..=125, 0.0..0.95f64, 0.0005..0.5f64);
    let results = [
        run_property("normalization", law.clone(), |(m, rho, p)| {
            let d = random_law(m, rho, p);
            prop_assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(d.probs.iter().all(|q| *q >= 0.0));
            Ok(())
        }),
        run_property(
            "tranche decomposition",
            (law.clone(), 0.0..0.5f64, 0.001..0.5f64),
            |((m, rho, p), a, w)| {
                let d = random_law(m, rho, p);
                let b = a + w;
                let direct = d.expected_tranche_loss(&tr(a, b));
                let via_equity = if a == 0.0 {
                    d.expected_equity_loss(b)
                } else {
                    (b * d.expected_equity_loss(b) - a * d.expected_equity_loss(a)) / w
                };
                prop_assert!((direct - via_equity).abs() < 1e-12);
                Ok(())
            },
        ),
        run_property(
            "adjacent additivity",
            (law.clone(), 0.0..0.3f64, 0.001..0.3f64, 0.001..0.3f64),
            |((m, rho, p), a, w1, w2)| {
                let d = random_law(m, rho, p);
                let (b, c) = (a + w1, a + w1 + w2);
                let lhs = w1 * d.expected_tranche_loss(&tr(a, b))
                    + w2 * d.expected_tranche_loss(&tr(b, c));
                let rhs = (c - a) * d.expected_tranche_loss(&tr(a, c));
                prop_assert!((lhs - rhs).abs() < 1e-13);
                Ok(())
            },
        ),
        run_property(
            "GPL time dominance",
            (
                0.0..1.5f64,
                0.0..0.3f64,
                0.0..0.05f64,
                2u32..10,
                10u32..80,
                0.1..5.0f64,
                0.01..5.0f64,
            ),
            |(l1, l2, l3, a2, a3, t1, dt)| {
                let lam = vec![vec![l1], vec![l2], vec![l3]];
                let spec =
                    GplSpec::new(vec![1, a2, a3], vec![10.0], lam, 125.0 / 0.7, 125, 0.3).unwrap();
                let c1 = gpl_loss_distribution(&spec, t1).unwrap().cdf();
                let c2 = gpl_loss_distribution(&spec, t1 + dt).unwrap().cdf();
                prop_assert!(c1.iter().zip(&c2).all(|(x, y)| *y <= x + 1e-12));
                Ok(())
            },
        ),
        run_property(
            "base = compound on equity",
            (0.02..0.9f64, 0.002..0.03f64, 0.02..0.1f64),
            |(rho, hazard, det)| {
                let pool = gausscop::Pool::homogeneous(25, hazard, 0.4).unwrap();
                let ctx = CopulaContext::new(
                    pool,
                    PaymentSchedule::quarterly(1.0).unwrap(),
                    DiscountCurve::flat(0.03),
                );
                let eq = tr(0.0, det);
                let mid = tranche_spread_vs_rho(&ctx, &eq, &UPFRONT, rho).unwrap();
                let q = Quote::upfront_mid(eq, 1.0, mid, 500.0).unwrap();
                let comp = invert_compound(&q, &ctx).unwrap();
                let base =
                    bootstrap_base(std::slice::from_ref(&q), &ctx, Interpolation::Linear).unwrap();
                prop_assert_eq!(comp.roots.len(), 1);
                prop_assert!((comp.roots[0] - base.correlations[0]).abs() < 1e-6);
                Ok(())
            },
        ),
    ];
    outcome(
        results.iter().all(|r| r.0),
        format!(
            "200 cases each: {}",
            results
                .iter()
                .map(|r| r.1.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("compound non-invertibility", compound_invertibility),
        ("base correlation bootstrap", base_bootstrap),
        ("implied copula", implied_copula),
        ("GPL calibration", gpl_calibration),
        ("oracle equivalences", oracle_equivalences),
        ("ETL stripping self-consistency", etl_self_consistency),
        ("property suites", property_suites),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let o = check();
        println!(
            "criterion {n} {}: {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
