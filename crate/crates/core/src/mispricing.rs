//! Mispricing metrics against bid/ask quotes and grouped summaries.

use serde::Serialize;

use crate::instruments::{Instrument, Quote};

/// `(theoretical - mid) / half bid-ask`.
pub fn standardized(theoretical: f64, quote: &Quote) -> f64 {
    scaled(theoretical - quote.mid, quote.half_band())
}

/// Zero inside `[bid, ask]`, otherwise the distance past the nearer side in
/// half bid-ask units.
pub fn band(theoretical: f64, quote: &Quote) -> f64 {
    scaled(outside(theoretical, quote), quote.half_band())
}

/// Zero inside `[bid, ask]`, otherwise the distance past the nearer side
/// relative to mid.
pub fn relative(theoretical: f64, quote: &Quote) -> f64 {
    scaled(outside(theoretical, quote), quote.mid.abs())
}

fn outside(theoretical: f64, quote: &Quote) -> f64 {
    if theoretical > quote.ask {
        theoretical - quote.ask
    } else if theoretical < quote.bid {
        theoretical - quote.bid
    } else {
        0.0
    }
}

fn scaled(diff: f64, scale: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if scale > 0.0 {
        diff / scale
    } else {
        diff.signum() * f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Seniority {
    Equity,
    Mezzanine,
    Senior,
}

impl Seniority {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Equity => "equity",
            Self::Mezzanine => "mezzanine",
            Self::Senior => "senior",
        }
    }
}

/// Seniority bucket of each attachment: the lowest is equity, the next two
/// are mezzanine, anything above is senior.
pub fn seniority_of(attachment: f64, all_attachments: &[f64]) -> Seniority {
    let mut sorted = all_attachments.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    match sorted.iter().position(|a| *a == attachment) {
        Some(0) => Seniority::Equity,
        Some(1) | Some(2) => Seniority::Mezzanine,
        _ => Seniority::Senior,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MispricingRow {
    pub label: String,
    pub maturity: f64,
    pub instrument: Instrument,
    pub theoretical: f64,
    pub bid: f64,
    pub mid: f64,
    pub ask: f64,
    pub standardized: f64,
    pub band: f64,
    pub relative: f64,
    pub seniority: Option<Seniority>,
}

/// Band mispricings below this (in half bid-ask units) count as inside.
pub const INSIDE_TOL: f64 = 1e-6;

impl MispricingRow {
    pub fn inside(&self) -> bool {
        self.band.abs() <= INSIDE_TOL
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub group: String,
    pub count: usize,
    pub outside: usize,
    pub mean_abs_relative: f64,
    pub max_abs_band: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MispricingReport {
    pub rows: Vec<MispricingRow>,
    pub total_standardized_sq: f64,
    pub total_band_sq: f64,
    pub max_abs_standardized: f64,
    pub outside: Vec<String>,
    pub groups: Vec<GroupSummary>,
}

impl MispricingReport {
    /// Builds the report from quotes and matching model values.
    pub fn new(quotes: &[Quote], theoretical: &[f64]) -> Self {
        assert_eq!(quotes.len(), theoretical.len(), "one model value per quote");
        let mut rows = Vec::with_capacity(quotes.len());
        for (q, &th) in quotes.iter().zip(theoretical) {
            let seniority = q.instrument.tranche().map(|t| {
                let atts: Vec<f64> = quotes
                    .iter()
                    .filter(|o| o.maturity == q.maturity)
                    .filter_map(|o| o.instrument.tranche().map(|t| t.attachment))
                    .collect();
                seniority_of(t.attachment, &atts)
            });
            rows.push(MispricingRow {
                label: q.label(),
                maturity: q.maturity,
                instrument: q.instrument,
                theoretical: th,
                bid: q.bid,
                mid: q.mid,
                ask: q.ask,
                standardized: standardized(th, q),
                band: band(th, q),
                relative: relative(th, q),
                seniority,
            });
        }
        let total_standardized_sq = rows.iter().map(|r| r.standardized.powi(2)).sum();
        let total_band_sq = rows.iter().map(|r| r.band.powi(2)).sum();
        let max_abs_standardized = rows
            .iter()
            .map(|r| r.standardized.abs())
            .fold(0.0, f64::max);
        let outside = rows
            .iter()
            .filter(|r| !r.inside())
            .map(|r| r.label.clone())
            .collect();
        let groups = summarize(&rows);
        Self {
            rows,
            total_standardized_sq,
            total_band_sq,
            max_abs_standardized,
            outside,
            groups,
        }
    }

    pub fn all_inside(&self) -> bool {
        self.outside.is_empty()
    }
}

type Predicate = Box<dyn Fn(&MispricingRow) -> bool>;

fn summarize(rows: &[MispricingRow]) -> Vec<GroupSummary> {
    let mut keys: Vec<(String, Predicate)> = Vec::new();
    let mut maturities: Vec<f64> = rows.iter().map(|r| r.maturity).collect();
    maturities.sort_by(f64::total_cmp);
    maturities.dedup();
    for m in maturities {
        keys.push((format!("maturity {m}y"), Box::new(move |r| r.maturity == m)));
    }
    keys.push((
        "index".into(),
        Box::new(|r| r.instrument == Instrument::Index),
    ));
    keys.push((
        "tranche".into(),
        Box::new(|r| r.instrument != Instrument::Index),
    ));
    for s in [Seniority::Equity, Seniority::Mezzanine, Seniority::Senior] {
        keys.push((s.name().into(), Box::new(move |r| r.seniority == Some(s))));
    }
    keys.into_iter()
        .filter_map(|(group, pred)| {
            let members: Vec<&MispricingRow> = rows.iter().filter(|r| pred(r)).collect();
            if members.is_empty() {
                return None;
            }
            Some(GroupSummary {
                group,
                count: members.len(),
                outside: members.iter().filter(|r| !r.inside()).count(),
                mean_abs_relative: members.iter().map(|r| r.relative.abs()).sum::<f64>()
                    / members.len() as f64,
                max_abs_band: members.iter().map(|r| r.band.abs()).fold(0.0, f64::max),
            })
        })
        .collect()
}
