#![allow(dead_code)]

use tranche_core::etlsurface::{EtlSurface, SurfaceRecovery};
use tranche_core::gausscop::Pool;
use tranche_core::math::interp::Interpolation;
use tranche_core::math::quadrature::FactorQuadrature;
use tranche_core::{DiscountCurve, Instrument, Quote, QuoteType, TrancheDef};

pub const STANDARD_DETACHMENTS: [f64; 6] = [0.03, 0.06, 0.09, 0.12, 0.22, 1.0];

pub fn tranche(a: f64, b: f64) -> TrancheDef {
    TrancheDef::new(a, b).unwrap()
}

/// Nodal losses of a homogeneous Gaussian copula pool whose correlation
/// drifts with maturity, so no single flat model reproduces the surface.
pub fn copula_surface(
    hazard: f64,
    rho0: f64,
    rho_slope: f64,
    maturities: &[f64],
    detachments: &[f64],
    interpolation: Interpolation,
    recovery: SurfaceRecovery,
) -> EtlSurface {
    let cfg = FactorQuadrature::default();
    let pool = Pool::homogeneous(125, hazard, 0.4).unwrap();
    let rows = maturities
        .iter()
        .map(|&t| {
            let d = pool
                .loss_distribution(&cfg, rho0 + rho_slope * t, t)
                .unwrap();
            let mut a = 0.0;
            detachments
                .iter()
                .map(|&b| {
                    let v = d.expected_tranche_loss(&tranche(a, b));
                    a = b;
                    v
                })
                .collect()
        })
        .collect();
    EtlSurface::new(
        maturities.to_vec(),
        detachments.to_vec(),
        rows,
        interpolation,
        recovery,
    )
    .unwrap()
}

/// Index and bucket quotes priced off `surface`, with half bid-ask equal to
/// `rel` times the mid. Equity is quoted upfront with 500 bps running.
pub fn surface_quotes(
    surface: &EtlSurface,
    disc: &DiscountCurve,
    super_senior: bool,
    rel: f64,
) -> Vec<Quote> {
    let mut out = Vec::new();
    for &t in &surface.maturities {
        let mut instruments = vec![(Instrument::Index, QuoteType::Running)];
        for j in 0..surface.buckets() {
            let b = surface.bucket(j);
            if b.detachment == 1.0 && !super_senior {
                continue;
            }
            let qt = if b.is_equity() {
                QuoteType::Upfront { running_bps: 500.0 }
            } else {
                QuoteType::Running
            };
            instruments.push((Instrument::Tranche(b), qt));
        }
        for (inst, qt) in instruments {
            let probe = Quote::new(inst, t, qt, 0.0, 0.0, 0.0).unwrap();
            let m = surface.theoretical(&probe, disc).unwrap();
            let h = rel * m.abs();
            out.push(Quote::new(inst, t, qt, m - h, m, m + h).unwrap());
        }
    }
    out
}

pub fn max_nodal_error(a: &EtlSurface, b: &EtlSurface) -> f64 {
    a.nodal_values
        .iter()
        .flatten()
        .zip(b.nodal_values.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
