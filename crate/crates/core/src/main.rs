use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use microgrid_core::ann::ModelBundle;
use microgrid_core::harness::datagen::{gen_data_to_dir, load_data_dir, train_bundle, MatrixConfig, TrainingConfig};
use microgrid_core::harness::{compare, compute_metrics, run_scenario, LabeledRun, RunOutcome, Scenario};

#[derive(Parser)]
#[command(name = "mgsim", version, about = "Microgrid secondary-control co-simulation with FDI attacks and a neural voltage controller")]
struct Cli {
    /// Overrides the scenario or training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its trace as CSV.
    Simulate {
        /// Scenario file, or one of: default, default-nonperiodic, default-periodic.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write metrics as JSON.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Run the training-data matrix and write one trace per run plus a manifest.
    GenData {
        /// Matrix file; the built-in matrix when omitted.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train one network per DG from a gen-data directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Training config; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Write per-DG training reports as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a scenario with every DG on the trained controller.
    Evaluate {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Run a scenario with the baseline and with the trained controller and report both.
    Compare {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Print the communication graph and channel list of a scenario.
    GraphInfo {
        #[arg(long)]
        scenario: String,
    },
}

fn load_scenario(spec: &str, seed: Option<u64>) -> Result<Scenario> {
    let mut s = Scenario::load(spec).with_context(|| format!("loading scenario `{spec}`"))?;
    if let Some(seed) = seed {
        s.config.seed = seed;
    }
    Ok(s)
}

fn write_file(path: &Path, body: impl FnOnce(&mut fs::File) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    body(&mut f)?;
    f.flush()?;
    drop(f);
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, |f| {
        serde_json::to_writer_pretty(&mut *f, value)?;
        writeln!(f)?;
        Ok(())
    })
}

fn finish_run(scenario: &Scenario, outcome: &RunOutcome, out: &Path, metrics: Option<&Path>) -> Result<ExitCode> {
    write_file(out, |f| Ok(outcome.trace.write_csv(f)?))?;
    if let Some(m) = metrics {
        let diverged_at = outcome.diverged.as_ref().map(|d| d.t);
        let report = compute_metrics(&outcome.trace, scenario.refs, 0, diverged_at)?;
        write_json(m, &report)?;
    }
    match &outcome.diverged {
        Some(d) => {
            eprintln!("diverged at t={}: {}", d.t, d.reason);
            Ok(ExitCode::from(2))
        }
        None => {
            println!("{} samples written to {}", outcome.trace.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate { scenario, out, metrics } => {
            let s = load_scenario(&scenario, cli.seed)?;
            let outcome = run_scenario(&s)?;
            finish_run(&s, &outcome, &out, metrics.as_deref())
        }
        Command::Evaluate { scenario, model, out, metrics } => {
            let bundle = ModelBundle::load(&model)?;
            let s = load_scenario(&scenario, cli.seed)?.with_model(bundle)?;
            let outcome = run_scenario(&s)?;
            finish_run(&s, &outcome, &out, metrics.as_deref())
        }
        Command::GenData { matrix, out_dir } => {
            let (cfg, base) = match &matrix {
                Some(p) => (MatrixConfig::load(p)?, p.parent()),
                None => (MatrixConfig::default(), None),
            };
            let manifest = gen_data_to_dir(&cfg, base, &out_dir)?;
            let failed = manifest.runs.iter().filter(|r| r.message.is_some()).count();
            println!("{} runs written to {} ({failed} not ok)", manifest.runs.len(), out_dir.display());
            Ok(if failed > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Train { data, config, out, report } => {
            let mut cfg = match &config {
                Some(p) => TrainingConfig::load(p)?,
                None => TrainingConfig::default(),
            };
            if let Some(seed) = cli.seed {
                cfg.train.seed = seed;
            }
            let (manifest, runs) = load_data_dir(&data)?;
            let (bundle, reports) = train_bundle(&manifest, &runs, &cfg)?;
            bundle.save(&out).with_context(|| format!("writing {}", out.display()))?;
            for (dg, r) in reports.iter().enumerate() {
                println!(
                    "dg{}: {} train / {} validation rows, best validation MSE {:.3e} at epoch {}",
                    dg + 1,
                    r.train_rows,
                    r.val_rows,
                    r.best_val_mse,
                    r.best_epoch
                );
            }
            if let Some(p) = report {
                write_json(&p, &reports)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { scenario, model, report } => {
            let bundle = ModelBundle::load(&model)?;
            let base = load_scenario(&scenario, cli.seed)?.with_baseline();
            let ann = base.clone().with_model(bundle)?;
            let (ob, oa) = (run_scenario(&base)?, run_scenario(&ann)?);
            let (ib, ia) = (base.identity(), ann.identity());
            let rep = compare(
                LabeledRun { identity: &ib, trace: &ob.trace, diverged_at: ob.diverged.as_ref().map(|d| d.t) },
                LabeledRun { identity: &ia, trace: &oa.trace, diverged_at: oa.diverged.as_ref().map(|d| d.t) },
                base.refs,
                0,
            )?;
            write_json(&report, &rep)?;
            println!(
                "post-attack mean eps_v: baseline {:.4e}, ann {:.4e}; ann_better_mean_eps_v={} ann_within_limits={} ann_smaller_ripple={}",
                rep.baseline.post_eps_mean,
                rep.ann.post_eps_mean,
                rep.ann_better_mean_eps_v,
                rep.ann_within_limits,
                rep.ann_smaller_ripple
            );
            Ok(if ob.diverged.is_some() || oa.diverged.is_some() { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::GraphInfo { scenario } => {
            let s = load_scenario(&scenario, cli.seed)?;
            let g = &s.graph;
            println!("{} DGs", g.len());
            for i in 0..g.len() {
                let nbrs: Vec<String> = g.in_neighbors(i).map(|(j, w)| format!("dg{} (a={w})", j + 1)).collect();
                let pin = if g.is_pinned(i) { format!(", pinned b={}", g.pinning(i)) } else { String::new() };
                println!("dg{} receives from: {}{pin}", i + 1, if nbrs.is_empty() { "-".into() } else { nbrs.join(", ") });
            }
            println!("{} channels:", s.channels.len());
            for c in s.channels.ids() {
                println!("  {c}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
