//! Synthetic CDO tranche and credit index pricing with a ladder of dependence
//! models:
//!
//! * [`gausscop`]: one-factor Gaussian copula pool loss distributions.
//! * [`impliedcorr`]: compound and base correlation, attainable ranges and
//!   expected-tranche-loss arbitrage diagnostics.
//! * [`impliedcopula`]: scenario hazard ladder calibrated by two quadratic
//!   programs.
//! * [`etlsurface`]: model-free stripping of expected tranche losses across
//!   maturities and detachments.
//! * [`gpl`]: the Generalized Poisson Loss dynamic model.
//!
//! Every model reduces to expected tranche losses on a payment grid, which are
//! turned into legs and quotes by [`instruments`].

// `!(x >= 0.0)` rejects NaN along with negatives
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod etlsurface;
pub mod gausscop;
pub mod gpl;
pub mod impliedcopula;
pub mod impliedcorr;
pub mod instruments;
pub mod math;
pub mod mispricing;
pub mod quotes;

pub use error::{Error, Result};
pub use gausscop::LossDistribution;
pub use instruments::{
    DiscountCurve, EtlCurve, Instrument, Legs, PaymentSchedule, Quote, QuoteType, TimingConvention,
    TrancheDef,
};
