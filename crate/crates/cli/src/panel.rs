use rayon::prelude::*;
use serde_json::{json, Value};

use tranche_core::etlsurface::EtlSurface;
use tranche_core::quotes::QuoteSet;
use tranche_core::DiscountCurve;

use crate::inputs::Inputs;
use crate::models::{Model, RunResult};
use crate::output::{write_json, Table};

fn run_dates(
    sets: &[QuoteSet],
    disc: &DiscountCurve,
    model: &Model,
) -> Vec<anyhow::Result<RunResult>> {
    match model {
        // the previous date's surface seeds the next strip
        Model::EtlStrip(_) => {
            let mut prior: Option<EtlSurface> = None;
            sets.iter()
                .map(|s| {
                    let r = model.run(s, disc, prior.as_ref());
                    if let Ok(ok) = &r {
                        prior = ok.surface.clone();
                    }
                    r
                })
                .collect()
        }
        _ => sets.par_iter().map(|s| model.run(s, disc, None)).collect(),
    }
}

/// Runs `model` on every date and writes the panel; returns the number of
/// failed dates.
pub fn run(inputs: &Inputs, model: &Model) -> anyhow::Result<usize> {
    let disc = inputs.discount()?;
    let sets = inputs.quote_sets()?;
    let results = run_dates(&sets, &disc, model);

    let mut records = Vec::new();
    let mut tables: Vec<Table> = Vec::new();
    let mut indicators = Table::new("invertibility", &["date", "instrument", "invertible"]);
    let mut outside = Table::new("outside_bid_ask", &["date", "outside", "instruments"]);
    let mut series: Vec<(String, Vec<Value>)> = Vec::new();
    let (mut failures, mut dates_outside, mut calibrated) = (0, 0, 0);

    for (i, (set, result)) in sets.iter().zip(results).enumerate() {
        let mut rec = json!({ "date": set.date, "family": set.family, "series": set.series });
        match result {
            Ok(r) => {
                rec["status"] = json!("ok");
                rec["result"] = r.output.record;
                for t in &r.output.tables {
                    match tables.iter_mut().find(|x| x.name == t.name) {
                        Some(x) => x.append_dated(&set.date, t),
                        None => {
                            let mut header = vec!["date"];
                            header.extend(t.header.iter().copied());
                            let mut x = Table::new(t.name, &header);
                            x.append_dated(&set.date, t);
                            tables.push(x);
                        }
                    }
                }
                for (key, ok) in r.indicators {
                    let flag = u8::from(ok);
                    indicators.push(vec![set.date.clone(), key.clone(), flag.to_string()]);
                    let pos = match series.iter().position(|(k, _)| *k == key) {
                        Some(p) => p,
                        None => {
                            series.push((key, vec![Value::Null; sets.len()]));
                            series.len() - 1
                        }
                    };
                    series[pos].1[i] = json!(flag);
                }
                if let Some((n, total)) = r.outside {
                    outside.push(vec![set.date.clone(), n.to_string(), total.to_string()]);
                    calibrated += 1;
                    dates_outside += usize::from(n > 0);
                }
            }
            Err(e) => {
                failures += 1;
                rec["status"] = json!("failed");
                rec["error"] = json!(format!("{e:#}"));
                eprintln!("warning: {} failed: {e:#}", set.date);
            }
        }
        records.push(rec);
    }

    let mut summary = json!({ "dates": sets.len(), "failed": failures });
    if !series.is_empty() {
        summary["invertibility"] = series
            .iter()
            .map(|(k, v)| json!({ "instrument": k, "series": v }))
            .collect();
        tables.push(indicators);
    }
    if calibrated > 0 {
        summary["dates_outside_bid_ask"] = json!(dates_outside);
        summary["percent_dates_outside_bid_ask"] =
            json!(100.0 * dates_outside as f64 / calibrated as f64);
        tables.push(outside);
    }
    let doc = json!({
        "command": "panel",
        "model": model.name(),
        "seed": inputs.seed,
        "summary": summary,
        "records": records,
    });
    write_json(inputs.out.as_deref(), "panel.json", &doc)?;
    if let Some(dir) = &inputs.out {
        for t in &tables {
            t.write(dir)?;
        }
    }
    Ok(failures)
}
