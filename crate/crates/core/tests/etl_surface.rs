mod common;

use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use tranche_core::etlsurface::*;
use tranche_core::math::interp::Interpolation;
use tranche_core::{DiscountCurve, Instrument, PaymentSchedule, QuoteType};

const MATURITIES: [f64; 4] = [3.0, 5.0, 7.0, 10.0];

fn constant(r: f64) -> SurfaceRecovery {
    SurfaceRecovery::Constant { recovery: r }
}

#[test]
fn recovers_synthetic_surface_under_both_interpolations() {
    let disc = DiscountCurve::flat(0.03);
    for interp in [Interpolation::Linear, Interpolation::MonotoneCubic] {
        let truth = copula_surface(
            0.012,
            0.12,
            0.02,
            &MATURITIES,
            &STANDARD_DETACHMENTS,
            interp,
            constant(0.4),
        );
        let quotes = surface_quotes(&truth, &disc, false, 0.02);
        let (fit, rep) =
            strip_surface(&quotes, &StripConfig::new(disc.clone(), interp), 0.4, None).unwrap();
        assert!(max_nodal_error(&fit, &truth) < 1e-4, "{interp:?}");
        assert!(
            rep.max_abs_mispricing() < 1e-6,
            "{interp:?}: {:?}",
            rep.mispricings
        );
        assert!(rep.max_constraint_violation < 1e-10);
        assert!(rep.arbitrage.is_empty(), "{:?}", rep.arbitrage);
        assert!(rep.mispricing.all_inside());
    }
}

#[test]
fn interpolation_choice_keeps_band_classification() {
    let disc = DiscountCurve::flat(0.035);
    let truth = copula_surface(
        0.009,
        0.2,
        0.01,
        &MATURITIES,
        &STANDARD_DETACHMENTS,
        Interpolation::Linear,
        constant(0.4),
    );
    let quotes = surface_quotes(&truth, &disc, false, 0.03);
    let classify = |interp| {
        let (_, rep) =
            strip_surface(&quotes, &StripConfig::new(disc.clone(), interp), 0.4, None).unwrap();
        rep.mispricing
            .rows
            .iter()
            .map(|r| r.inside())
            .collect::<Vec<_>>()
    };
    assert_eq!(
        classify(Interpolation::Linear),
        classify(Interpolation::MonotoneCubic)
    );
}

#[test]
fn pool_loss_equals_weighted_buckets_at_nodes() {
    let s = copula_surface(
        0.01,
        0.25,
        0.0,
        &MATURITIES,
        &STANDARD_DETACHMENTS,
        Interpolation::MonotoneCubic,
        constant(0.4),
    );
    let sched = PaymentSchedule::quarterly(10.0).unwrap();
    let (loss, _) = s.index_curves(&sched).unwrap();
    for (m, &t) in s.maturities.iter().enumerate() {
        let i = sched
            .times()
            .iter()
            .position(|&x| (x - t).abs() < 1e-12)
            .unwrap();
        let weighted: f64 = (0..s.buckets())
            .map(|j| s.bucket(j).thickness() * s.nodal_values[m][j])
            .sum();
        assert_relative_eq!(loss.values[i], weighted, epsilon = 1e-15);
    }
}

#[test]
fn synthetic_panel_mostly_repriced_inside_band() {
    let disc = DiscountCurve::flat(0.03);
    let cfg = StripConfig::new(disc.clone(), Interpolation::Linear);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dates = 30;
    let mut prior: Option<EtlSurface> = None;
    let mut inside = 0;
    for _ in 0..dates {
        let hazard = rng.random_range(0.004..0.02);
        let rho0 = rng.random_range(0.05..0.3);
        let slope = rng.random_range(0.0..0.03);
        let truth = copula_surface(
            hazard,
            rho0,
            slope,
            &MATURITIES,
            &STANDARD_DETACHMENTS,
            Interpolation::Linear,
            constant(0.4),
        );
        let quotes = surface_quotes(&truth, &disc, false, rng.random_range(0.01..0.05));
        let (fit, rep) = strip_surface(&quotes, &cfg, 0.4, prior.as_ref()).unwrap();
        if rep.max_abs_mispricing() <= 1.0 {
            inside += 1;
        }
        prior = Some(fit);
    }
    assert!(inside as f64 / dates as f64 >= 0.97, "{inside} of {dates}");
}

#[test]
fn implied_recovery_at_reference_level() {
    let disc = DiscountCurve::flat(0.03);
    let truth = copula_surface(
        0.01,
        0.15,
        0.01,
        &[5.0, 10.0],
        &STANDARD_DETACHMENTS,
        Interpolation::Linear,
        constant(0.4),
    );
    let quotes = surface_quotes(&truth, &disc, true, 0.01);
    let (_, rep) = strip_surface_implied_recovery(
        &quotes,
        &StripConfig::new(disc, Interpolation::Linear),
        None,
    )
    .unwrap();
    for r in &rep.recoveries {
        assert!((r - 0.4).abs() < 1e-3, "{:?}", rep.recoveries);
    }
    assert!(rep.max_abs_mispricing() < 1e-6);
}

#[test]
fn implied_recovery_finds_planted_piecewise_values() {
    let disc = DiscountCurve::flat(0.03);
    let planted = SurfaceRecovery::Piecewise {
        maturities: vec![5.0, 10.0],
        values: vec![0.3, 0.4],
    };
    for interp in [Interpolation::Linear, Interpolation::MonotoneCubic] {
        let truth = copula_surface(
            0.012,
            0.12,
            0.02,
            &[5.0, 10.0],
            &STANDARD_DETACHMENTS,
            interp,
            planted.clone(),
        );
        let quotes = surface_quotes(&truth, &disc, true, 1e-5);
        let (_, rep) =
            strip_surface_implied_recovery(&quotes, &StripConfig::new(disc.clone(), interp), None)
                .unwrap();
        assert!(
            (rep.recoveries[0] - 0.3).abs() < 0.02,
            "{interp:?} {:?}",
            rep.recoveries
        );
        assert!(
            (rep.recoveries[1] - 0.4).abs() < 0.02,
            "{interp:?} {:?}",
            rep.recoveries
        );
    }
}

#[test]
fn wide_super_senior_lowers_early_recovery() {
    let disc = DiscountCurve::flat(0.03);
    let truth = copula_surface(
        0.012,
        0.12,
        0.02,
        &[5.0, 10.0],
        &STANDARD_DETACHMENTS,
        Interpolation::Linear,
        constant(0.4),
    );
    let mut quotes = surface_quotes(&truth, &disc, true, 0.02);
    for q in quotes.iter_mut() {
        if q.maturity == 5.0 && q.instrument.tranche().is_some_and(|t| t.detachment == 1.0) {
            q.bid += 3.0;
            q.mid += 3.0;
            q.ask += 3.0;
        }
    }
    let (_, rep) = strip_surface_implied_recovery(
        &quotes,
        &StripConfig::new(disc, Interpolation::Linear),
        None,
    )
    .unwrap();
    assert!(rep.recoveries[0] < 0.4 - 1e-3, "{:?}", rep.recoveries);
}

#[test]
fn standard_tranche_round_trip_and_nonstandard_weights() {
    let disc = DiscountCurve::flat(0.03);
    let truth = copula_surface(
        0.01,
        0.15,
        0.01,
        &MATURITIES,
        &STANDARD_DETACHMENTS,
        Interpolation::Linear,
        constant(0.4),
    );
    let quotes = surface_quotes(&truth, &disc, false, 0.02);
    let (fit, _) = strip_surface(
        &quotes,
        &StripConfig::new(disc.clone(), Interpolation::Linear),
        0.4,
        None,
    )
    .unwrap();

    let q36 = quotes
        .iter()
        .find(|q| q.maturity == 5.0 && q.instrument == Instrument::Tranche(tranche(0.03, 0.06)))
        .unwrap();
    let p = price_nonstandard_tranche(&fit, 0.03, 0.06, 5.0, &disc, None, false).unwrap();
    assert_relative_eq!(p.spread_bps, q36.mid, max_relative = 1e-6);

    // 4-15% is a thickness-weighted mix of the buckets it overlaps
    let p = price_nonstandard_tranche(&fit, 0.04, 0.15, 5.0, &disc, None, false).unwrap();
    let parts = [(0.04, 0.06), (0.06, 0.09), (0.09, 0.12), (0.12, 0.15)];
    let mut default_leg = 0.0;
    for (a, b) in parts {
        let legs = price_nonstandard_tranche(&fit, a, b, 5.0, &disc, None, false)
            .unwrap()
            .legs;
        default_leg += (b - a) / 0.11 * legs.default_leg;
    }
    assert_relative_eq!(p.legs.default_leg, default_leg, max_relative = 1e-12);
    let m = fit.maturities.iter().position(|&t| t == 5.0).unwrap();
    let f = &fit.nodal_values[m];
    let node = (0.02 * f[1] + 0.03 * f[2] + 0.03 * f[3] + 0.03 * f[4]) / 0.11;
    assert_relative_eq!(*p.etl.values.last().unwrap(), node, max_relative = 1e-12);
    let s_low = price_nonstandard_tranche(&fit, 0.03, 0.06, 5.0, &disc, None, false)
        .unwrap()
        .spread_bps;
    let s_high = price_nonstandard_tranche(&fit, 0.12, 0.22, 5.0, &disc, None, false)
        .unwrap()
        .spread_bps;
    assert!(p.spread_bps < s_low && p.spread_bps > s_high);

    let up = price_nonstandard_tranche(&fit, 0.0, 0.03, 5.0, &disc, Some(500.0), false).unwrap();
    let q03 = quotes
        .iter()
        .find(|q| q.maturity == 5.0 && q.quote_type == (QuoteType::Upfront { running_bps: 500.0 }))
        .unwrap();
    assert_relative_eq!(up.upfront.unwrap(), q03.mid, max_relative = 1e-6);
}

#[test]
fn untiled_tranche_is_rejected() {
    let disc = DiscountCurve::flat(0.03);
    let truth = copula_surface(
        0.01,
        0.15,
        0.0,
        &[5.0],
        &STANDARD_DETACHMENTS,
        Interpolation::Linear,
        constant(0.4),
    );
    let mut quotes = surface_quotes(&truth, &disc, false, 0.02);
    let extra = tranche_core::Quote::new(
        Instrument::Tranche(tranche(0.04, 0.15)),
        5.0,
        QuoteType::Running,
        20.0,
        21.0,
        22.0,
    )
    .unwrap();
    quotes.push(extra);
    assert!(strip_surface(
        &quotes,
        &StripConfig::new(disc, Interpolation::Linear),
        0.4,
        None
    )
    .is_err());
}
