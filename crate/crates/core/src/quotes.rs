//! Quote and discount-curve CSV ingestion.
//!
//! Quote rows: `date,family,series,maturity_years,attach,detach,quote_type,bid,mid,ask,fixed_running_bps`.
//! Index rows carry `INDEX` in both attach and detach. `quote_type` is
//! `running` (bps) or `upfront` (fraction of tranche notional); an upfront
//! row without a fixed running spread gets 500 bps.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instruments::{DiscountCurve, Instrument, Quote, QuoteType, TrancheDef};

pub const DEFAULT_EQUITY_RUNNING_BPS: f64 = 500.0;
const INDEX_MARKER: &str = "INDEX";

/// Quotes observed on one date for one index family and series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteSet {
    pub date: String,
    pub family: String,
    pub series: String,
    pub quotes: Vec<Quote>,
}

impl QuoteSet {
    pub fn new(
        date: impl Into<String>,
        family: impl Into<String>,
        series: impl Into<String>,
    ) -> Self {
        Self {
            date: date.into(),
            family: family.into(),
            series: series.into(),
            quotes: Vec::new(),
        }
    }

    pub fn with_quotes(mut self, quotes: Vec<Quote>) -> Self {
        self.quotes = quotes;
        self
    }

    pub fn maturities(&self) -> Vec<f64> {
        let mut m: Vec<f64> = self.quotes.iter().map(|q| q.maturity).collect();
        m.sort_by(f64::total_cmp);
        m.dedup();
        m
    }

    pub fn index(&self, maturity: f64) -> Option<&Quote> {
        self.quotes
            .iter()
            .find(|q| q.maturity == maturity && q.instrument == Instrument::Index)
    }

    /// Tranche quotes of one maturity sorted by attachment.
    pub fn tranches(&self, maturity: f64) -> Vec<&Quote> {
        let mut v: Vec<&Quote> = self
            .quotes
            .iter()
            .filter(|q| q.maturity == maturity && q.instrument != Instrument::Index)
            .collect();
        v.sort_by(|a, b| {
            let ta = a.instrument.tranche().map(|t| t.attachment).unwrap_or(0.0);
            let tb = b.instrument.tranche().map(|t| t.attachment).unwrap_or(0.0);
            ta.total_cmp(&tb)
        });
        v
    }

    pub fn for_maturity(&self, maturity: f64) -> Vec<&Quote> {
        self.quotes
            .iter()
            .filter(|q| q.maturity == maturity)
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct QuoteRow {
    date: String,
    family: String,
    series: String,
    maturity_years: f64,
    attach: String,
    detach: String,
    quote_type: String,
    bid: f64,
    mid: f64,
    ask: f64,
    fixed_running_bps: Option<f64>,
}

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        line,
        reason: reason.into(),
    }
}

fn row_to_quote(row: &QuoteRow, line: usize) -> Result<Quote> {
    let instrument = match (row.attach.trim(), row.detach.trim()) {
        (INDEX_MARKER, INDEX_MARKER) => Instrument::Index,
        (a, d) => {
            let a: f64 = a
                .parse()
                .map_err(|_| parse_err(line, format!("bad attach {a:?}")))?;
            let d: f64 = d
                .parse()
                .map_err(|_| parse_err(line, format!("bad detach {d:?}")))?;
            Instrument::Tranche(TrancheDef::new(a, d).map_err(|e| parse_err(line, e.to_string()))?)
        }
    };
    let quote_type = match row.quote_type.trim().to_ascii_lowercase().as_str() {
        "running" => {
            if row.fixed_running_bps.is_some() {
                return Err(parse_err(
                    line,
                    "fixed running spread given on a running quote",
                ));
            }
            QuoteType::Running
        }
        "upfront" => QuoteType::Upfront {
            running_bps: row.fixed_running_bps.unwrap_or(DEFAULT_EQUITY_RUNNING_BPS),
        },
        other => return Err(parse_err(line, format!("unknown quote type {other:?}"))),
    };
    if row.bid > row.ask {
        return Err(parse_err(
            line,
            format!("bid {} above ask {}", row.bid, row.ask),
        ));
    }
    Quote::new(
        instrument,
        row.maturity_years,
        quote_type,
        row.bid,
        row.mid,
        row.ask,
    )
    .map_err(|e| parse_err(line, e.to_string()))
}

/// Parses quote CSV text, grouping rows by (date, family, series) in order of
/// first appearance.
pub fn parse_quotes<R: Read>(reader: R) -> Result<Vec<QuoteSet>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let mut sets: Vec<QuoteSet> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let row: QuoteRow = rec
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(line, e.to_string()))?;
        let quote = row_to_quote(&row, line)?;
        match sets
            .iter_mut()
            .find(|s| s.date == row.date && s.family == row.family && s.series == row.series)
        {
            Some(s) => s.quotes.push(quote),
            None => {
                sets.push(QuoteSet::new(row.date, row.family, row.series).with_quotes(vec![quote]))
            }
        }
    }
    Ok(sets)
}

pub fn read_quotes(path: &Path) -> Result<Vec<QuoteSet>> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_quotes(file)
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Writes quote sets in the ingestion format.
pub fn write_quotes<W: Write>(sets: &[QuoteSet], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record([
        "date",
        "family",
        "series",
        "maturity_years",
        "attach",
        "detach",
        "quote_type",
        "bid",
        "mid",
        "ask",
        "fixed_running_bps",
    ])
    .map_err(io)?;
    for s in sets {
        for q in &s.quotes {
            let (a, d) = match q.instrument {
                Instrument::Index => (INDEX_MARKER.to_string(), INDEX_MARKER.to_string()),
                Instrument::Tranche(t) => (fmt_num(t.attachment), fmt_num(t.detachment)),
            };
            let (kind, running) = match q.quote_type {
                QuoteType::Running => ("running", String::new()),
                QuoteType::Upfront { running_bps } => ("upfront", fmt_num(running_bps)),
            };
            w.write_record([
                s.date.as_str(),
                &s.family,
                &s.series,
                &fmt_num(q.maturity),
                &a,
                &d,
                kind,
                &fmt_num(q.bid),
                &fmt_num(q.mid),
                &fmt_num(q.ask),
                &running,
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

#[derive(Debug, Deserialize)]
struct DiscountRow {
    time_years: f64,
    df: f64,
}

pub fn parse_discount<R: Read>(reader: R) -> Result<DiscountCurve> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let (mut ts, mut ds) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.deserialize::<DiscountRow>().enumerate() {
        let row = rec.map_err(|e| parse_err(i + 2, e.to_string()))?;
        ts.push(row.time_years);
        ds.push(row.df);
    }
    DiscountCurve::from_nodes(ts, ds)
}

pub fn read_discount(path: &Path) -> Result<DiscountCurve> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_discount(file)
}
