use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use tranche_core::quotes::{read_discount, read_quotes, QuoteSet};
use tranche_core::DiscountCurve;

// Quote and discount inputs shared by every calibration subcommand.
#[derive(Args, Debug, Clone)]
pub struct Inputs {
    /// Quote CSV file.
    #[arg(long)]
    pub quotes: PathBuf,
    /// Discount factor CSV (`time_years,df`).
    #[arg(long, conflicts_with = "flat_rate")]
    pub disc: Option<PathBuf>,
    /// Flat continuously compounded rate used when no discount file is given.
    #[arg(long, default_value_t = 0.03)]
    pub flat_rate: f64,
    /// Only use quotes observed on this date.
    #[arg(long)]
    pub date: Option<String>,
    /// Directory for the JSON result and CSV tables; JSON goes to stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Recorded in the output; every calibration is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl Inputs {
    pub fn discount(&self) -> anyhow::Result<DiscountCurve> {
        match &self.disc {
            Some(p) => read_discount(p).with_context(|| format!("reading {}", p.display())),
            None => Ok(DiscountCurve::flat(self.flat_rate)),
        }
    }

    pub fn quote_sets(&self) -> anyhow::Result<Vec<QuoteSet>> {
        let sets = read_quotes(&self.quotes)
            .with_context(|| format!("reading {}", self.quotes.display()))?;
        if sets.is_empty() {
            eprintln!("warning: {} holds no quotes", self.quotes.display());
        }
        Ok(match &self.date {
            Some(d) => sets.into_iter().filter(|s| &s.date == d).collect(),
            None => sets,
        })
    }
}
