mod inputs;
mod models;
mod output;
mod panel;

use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use inputs::Inputs;
use models::{
    BaseArgs, CompoundArgs, EtlPriceArgs, EtlStripArgs, GplArgs, ImpliedCopulaArgs, Model,
};

const THREADS_VAR: &str = "TRANCHE_LAB_THREADS";

/// Tranche pricing and dependence-model calibration.
#[derive(Parser)]
#[command(name = "tranche-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compound correlations by scanning and root-finding each tranche.
    Compound {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        args: CompoundArgs,
    },
    /// Base correlation bootstrap with arbitrage diagnostics.
    Base {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        args: BaseArgs,
    },
    /// Two-stage implied copula fit for one maturity.
    ImpliedCopula {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        args: ImpliedCopulaArgs,
    },
    /// Strip an expected tranche loss surface.
    EtlStrip {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        args: EtlStripArgs,
    },
    /// Price a non-standard tranche off a stripped surface.
    EtlPrice(EtlPriceArgs),
    /// Calibrate the Generalized Poisson Loss model.
    GplCalibrate {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        args: GplArgs,
    },
    /// Run one model over every date of a quote file.
    Panel {
        #[command(subcommand)]
        model: PanelModel,
    },
}

#[derive(Subcommand)]
enum PanelModel {
    /// Compound invertibility per date.
    Compound {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        args: CompoundArgs,
    },
    /// Base correlation per date.
    Base {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        args: BaseArgs,
    },
    /// Implied copula per date.
    ImpliedCopula {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        args: ImpliedCopulaArgs,
    },
    /// Loss surface per date, warm-started from the previous date.
    EtlStrip {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        args: EtlStripArgs,
    },
    /// GPL calibration per date.
    GplCalibrate {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        args: GplArgs,
    },
}

impl PanelModel {
    fn split(self) -> (Inputs, Model) {
        match self {
            Self::Compound { inputs, args } => (inputs, Model::Compound(args)),
            Self::Base { inputs, args } => (inputs, Model::Base(args)),
            Self::ImpliedCopula { inputs, args } => (inputs, Model::ImpliedCopula(args)),
            Self::EtlStrip { inputs, args } => (inputs, Model::EtlStrip(args)),
            Self::GplCalibrate { inputs, args } => (inputs, Model::Gpl(args)),
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .with_context(|| format!("{THREADS_VAR} must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    configure_threads()?;
    let (inputs, model) = match cli.command {
        Command::Panel { model } => {
            let (inputs, model) = model.split();
            let failures = panel::run(&inputs, &model)?;
            return Ok(if failures > 0 {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            });
        }
        Command::EtlPrice(args) => {
            models::etl_price(&args)?.emit(args.out.as_deref(), "etl-price", None)?;
            return Ok(ExitCode::SUCCESS);
        }
        Command::Compound { inputs, args } => (inputs, Model::Compound(args)),
        Command::Base { inputs, args } => (inputs, Model::Base(args)),
        Command::ImpliedCopula { inputs, args } => (inputs, Model::ImpliedCopula(args)),
        Command::EtlStrip { inputs, args } => (inputs, Model::EtlStrip(args)),
        Command::GplCalibrate { inputs, args } => (inputs, Model::Gpl(args)),
    };
    let disc = inputs.discount()?;
    let sets = inputs.quote_sets()?;
    let set = match sets.as_slice() {
        [one] => one,
        [] => bail!("no quotes to calibrate"),
        many => bail!(
            "{} dates in the quote file; pass --date or use the panel subcommand",
            many.len()
        ),
    };
    let out = model.run(set, &disc, None)?;
    out.output
        .emit(inputs.out.as_deref(), model.name(), Some(inputs.seed))?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
