use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fairscope::error::{Error, Result};
use fairscope::models::{ModelId, SynthParams};
use fairscope::pipeline::{
    run_audit, run_curves, run_explain, run_group_bias, run_mitigation, run_shapley_bias,
    write_synthetic, AuditConfig, AuditReport, RunOptions,
};

/// Distribution-level bias audits of scoring models.
#[derive(Parser, Debug)]
#[command(name = "fairscope", version, about)]
struct Cli {
    /// Output directory (overrides the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print stage timings to stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// Audit configuration (JSON).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Model bias, predictor bias explanations and curves.
    Audit(ConfigArg),
    /// Attribution matrix only.
    Explain(ConfigArg),
    /// Shapley values of the bias games.
    ShapleyBias(ConfigArg),
    /// Group-based parity and group Shapley bias.
    GroupBias(ConfigArg),
    /// Greedy neutralization of positively biased predictors.
    Mitigate(ConfigArg),
    /// Curve CSV files only.
    Curves(ConfigArg),
    /// Write a synthetic dataset, its true model and a ready audit config.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// M1..M6, EPS_TAU or ZERO_BIAS.
    #[arg(long)]
    model: String,
    /// Number of rows.
    #[arg(long, short = 'n', default_value_t = 10_000)]
    n: usize,
    /// Parameter override, e.g. `--param tau=10` (repeatable).
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

fn configure_threads() {
    if let Ok(v) = std::env::var("FAIRSCOPE_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n > 0 {
                // a second initialization attempt is harmless
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn print_summary(report: &AuditReport, out: &Path) {
    if let Some(b) = &report.model_bias {
        println!(
            "model bias: total {:.6}  positive {:.6}  negative {:.6}  net {:.6}",
            b.total, b.positive, b.negative, b.net
        );
    }
    if let Some(rows) = &report.explanations {
        for r in rows {
            println!(
                "  {:<16} beta {:.6}  pos {:.6}  neg {:.6}  net {:.6}",
                r.feature, r.beta, r.beta_pos, r.beta_neg, r.beta_net
            );
        }
    }
    println!("wrote {} file(s) to {}", report.files.len(), out.display());
}

fn synth(args: &SynthArgs, out: &Path, seed: u64) -> Result<()> {
    let id: ModelId = args.model.parse()?;
    let mut params = SynthParams::default();
    for p in &args.params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| Error::InvalidParams(format!("expected KEY=VALUE, got `{p}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParams(format!("`{v}` is not a number")))?;
        params.set(k.trim(), v)?;
    }
    let cfg = write_synthetic(id, &params, args.n, seed, out)?;
    println!("wrote {} rows of {id} to {}; audit with --config {}", args.n, out.display(), cfg.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let opts = RunOptions {
        out: cli.out.clone(),
        seed: cli.seed,
        verbose: cli.verbose,
    };
    let (runner, arg): (fn(&AuditConfig, &RunOptions) -> Result<AuditReport>, &ConfigArg) =
        match &cli.command {
            Command::Synth(args) => {
                let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
                return synth(args, &out, cli.seed.unwrap_or(0));
            }
            Command::Audit(a) => (run_audit, a),
            Command::Explain(a) => (run_explain, a),
            Command::ShapleyBias(a) => (run_shapley_bias, a),
            Command::GroupBias(a) => (run_group_bias, a),
            Command::Mitigate(a) => (run_mitigation, a),
            Command::Curves(a) => (run_curves, a),
        };
    let cfg = AuditConfig::load(&arg.config)?;
    let report = runner(&cfg, &opts)?;
    let out = opts.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    print_summary(&report, &out);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fairscope: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
