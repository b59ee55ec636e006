//! Thin wasm-bindgen wrappers used by `www/index.html`. The plain functions
//! carry the logic so they can be exercised off the browser.

use tranche_core::gausscop::Pool;
use tranche_core::gpl::{gpl_loss_distribution, GplSpec};
use tranche_core::impliedcorr::{tranche_spread_vs_rho, CopulaContext};
use tranche_core::math::quadrature::FactorQuadrature;
use tranche_core::{DiscountCurve, QuoteType, TrancheDef};
use wasm_bindgen::prelude::*;

/// Pool loss probabilities on the grid `k / names` of a homogeneous
/// Gaussian copula pool at horizon `t`.
pub fn copula_losses(
    names: usize,
    hazard: f64,
    recovery: f64,
    rho: f64,
    t: f64,
) -> tranche_core::Result<Vec<f64>> {
    let pool = Pool::homogeneous(names, hazard, recovery)?;
    Ok(pool
        .loss_distribution(&FactorQuadrature::default(), rho, t)?
        .probs)
}

/// Tranche quote against flat correlation on `points` evenly spaced values
/// in `[0, rho_max]`, for a 125-name pool at 40% recovery. Equity is quoted
/// as upfront percent with 500 bps running, the rest as running bps.
pub fn spread_curve(
    index_bps: f64,
    rate: f64,
    maturity: f64,
    attach: f64,
    detach: f64,
    rho_max: f64,
    points: usize,
) -> tranche_core::Result<Vec<f64>> {
    let ctx = CopulaContext::homogeneous_from_index(
        index_bps,
        0.4,
        125,
        maturity,
        DiscountCurve::flat(rate),
    )?;
    let tranche = TrancheDef::new(attach, detach)?;
    let (qt, scale) = if attach == 0.0 {
        (QuoteType::Upfront { running_bps: 500.0 }, 100.0)
    } else {
        (QuoteType::Running, 1.0)
    };
    let n = points.max(2);
    (0..n)
        .map(|i| {
            let rho = rho_max * i as f64 / (n - 1) as f64;
            Ok(tranche_spread_vs_rho(&ctx, &tranche, &qt, rho)? * scale)
        })
        .collect()
}

/// GPL loss law at `t` with constant intensities and one loss unit per
/// default; index `k` holds the probability of `k` units.
pub fn gpl_losses(
    amplitudes: Vec<u32>,
    intensities: Vec<f64>,
    names: usize,
    recovery: f64,
    t: f64,
) -> tranche_core::Result<Vec<f64>> {
    let rows = intensities.into_iter().map(|l| vec![l]).collect();
    let cap = names as f64 / (1.0 - recovery);
    let spec = GplSpec::new(amplitudes, vec![t.max(1e-6)], rows, cap, names, recovery)?;
    Ok(gpl_loss_distribution(&spec, t)?.probs)
}

fn js(e: tranche_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn copula_loss_distribution(
    names: usize,
    hazard: f64,
    recovery: f64,
    rho: f64,
    t: f64,
) -> Result<Vec<f64>, JsError> {
    copula_losses(names, hazard, recovery, rho, t).map_err(js)
}

#[wasm_bindgen]
pub fn compound_curve(
    index_bps: f64,
    rate: f64,
    maturity: f64,
    attach: f64,
    detach: f64,
    rho_max: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    spread_curve(index_bps, rate, maturity, attach, detach, rho_max, points).map_err(js)
}

#[wasm_bindgen]
pub fn gpl_distribution(
    amplitudes: Vec<u32>,
    intensities: Vec<f64>,
    names: usize,
    recovery: f64,
    t: f64,
) -> Result<Vec<f64>, JsError> {
    gpl_losses(amplitudes, intensities, names, recovery, t).map_err(js)
}
