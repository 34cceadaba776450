//! `trontide <subcommand> --config <path> [--out <path>] [--seed <u64>] [-R <int>]`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::{resolve_seed, Experiment, ExperimentConfig, SEED_ENV};
use super::{optimality, sweep, verify};
use crate::error::{Error, Result};
use crate::mathcore::linalg::Vector;
use crate::mathcore::rng::streams;
use crate::mathcore::RngStream;

#[derive(Debug, Parser)]
#[command(name = "trontide", version, about = "Neuro-Tron training under bounded label poisoning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Theory constants, step size and horizon as JSON.
    Theory(CommonArgs),
    /// One training run as a `t,dist_sq,grad_norm` CSV trace.
    Train(CommonArgs),
    /// `R` seeded runs summarized as JSON.
    Trials(CommonArgs),
    /// Monte-Carlo verification report as JSON.
    Verify(CommonArgs),
    /// Worst-case consistent-alternative demonstration as JSON.
    Optimality(CommonArgs),
    /// Parameter sweep as CSV.
    Sweep(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short = 'R')]
    pub trials: Option<usize>,
}

fn json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

/// Output text and, when the run produced a report but must still fail, the error to raise.
type Outcome = (String, Option<Error>);

fn load(args: &CommonArgs) -> Result<(ExperimentConfig, u64)> {
    let cfg = ExperimentConfig::from_path(&args.config)?;
    let env = std::env::var(SEED_ENV).ok();
    let seed = resolve_seed(args.seed, env.as_deref(), cfg.seed)?;
    Ok((cfg, seed))
}

fn theory(exp: &Experiment) -> Result<Outcome> {
    let report = exp.theory_report()?;
    let err = (!report.feasible).then(|| {
        Error::infeasible(report.violated_constraints.join("; "), "the configuration violates the theorem's conditions")
    });
    Ok((json(&report), err))
}

fn verify_cmd(exp: &Experiment) -> Result<Outcome> {
    let vc = exp.config.verify.unwrap_or_default();
    let root = RngStream::new(exp.seed).derive(streams::VERIFY);
    let mut report = verify::VerificationReport::default();
    report.checks.extend(verify::verify_lemma2(
        &exp.problem.dist,
        &[exp.problem.net.leak_alpha()],
        &root.derive(1),
        vc.lemma2_samples,
        vc.lemma2_pairs,
    )?);
    report.checks.push(verify::verify_lemma3(
        std::slice::from_ref(&exp.problem.net),
        &exp.problem.dist,
        &root.derive(2),
        vc.lemma3_instances,
    )?);
    let consts = exp.constants()?;
    verify::verify_run_terms(&exp.problem, &exp.attack, &exp.train, &consts, vc.batches, &mut report)?;
    let failures = report.failures().len();
    let err = (failures > 0).then(|| Error::Numeric(format!("{failures} verification checks failed")));
    Ok((json(&report), err))
}

fn optimality_cmd(exp: &Experiment, trials: Option<usize>) -> Result<Outcome> {
    let oc = exp
        .config
        .optimality
        .as_ref()
        .ok_or_else(|| Error::config("optimality", "the config has no optimality section"))?;
    let report = optimality::demo_optimality(
        &exp.problem,
        &Vector::try_from_vec(oc.w_adv.clone())?,
        exp.train.batch,
        exp.plan.eps,
        exp.plan.delta,
        trials.unwrap_or(exp.plan.trials),
        exp.seed,
        exp.train.w_init.clone(),
        exp.train.mc_samples,
    )?;
    Ok((json(&report), None))
}

fn execute(cli: &Cli) -> Result<Outcome> {
    let (Command::Theory(args)
    | Command::Train(args)
    | Command::Trials(args)
    | Command::Verify(args)
    | Command::Optimality(args)
    | Command::Sweep(args)) = &cli.command;
    let (cfg, seed) = load(args)?;
    if let Command::Sweep(_) = cli.command {
        let rows = sweep::sweep(&cfg, seed, args.trials)?;
        return Ok((sweep::to_csv(&rows), None));
    }
    let exp = Experiment::build(cfg, seed)?;
    match cli.command {
        Command::Theory(_) => theory(&exp),
        Command::Train(_) => Ok((exp.train()?.1.to_csv(), None)),
        Command::Trials(_) => Ok((json(&exp.run_trials(args.trials)?), None)),
        Command::Verify(_) => verify_cmd(&exp),
        Command::Optimality(_) => optimality_cmd(&exp, args.trials),
        Command::Sweep(_) => unreachable!("handled above"),
    }
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

/// Runs the CLI and returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (Command::Theory(args)
    | Command::Train(args)
    | Command::Trials(args)
    | Command::Verify(args)
    | Command::Optimality(args)
    | Command::Sweep(args)) = &cli.command;
    let result = execute(&cli).and_then(|(text, err)| {
        emit(args.out.as_ref(), &text)?;
        err.map_or(Ok(()), Err)
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

