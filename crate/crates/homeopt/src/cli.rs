//! Argument handling for the `homeopt` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::pipeline;

#[derive(Debug, Parser)]
#[command(
    name = "homeopt",
    version,
    about = "Cluster smart-home power traces into domain states and plan low-power transitions",
    after_help = "Any config key can be set with a dotted flag, e.g. `--planner.gamma 0.9` or `--modes.max_nodes=40`."
)]
pub struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every stochastic step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trace at `paths.trace`.
    Synth,
    /// Fit device modes and domain states; write the model bundle.
    Cluster,
    /// Add behavior statistics, transition model and policy to the bundle.
    Train,
    /// Replay the test stream and write the CSV and JSON report.
    Simulate,
    /// Re-emit the CSV report from a saved JSON report.
    Report {
        /// JSON report to read; defaults to the one next to `paths.report`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

/// Splits `--a.b value` and `--a.b=value` pairs out of `args`. Everything
/// else is passed through untouched for clap.
pub fn split_dotted(args: impl IntoIterator<Item = OsString>) -> Result<(Vec<OsString>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let dotted = arg
            .to_str()
            .and_then(|s| s.strip_prefix("--"))
            .filter(|s| s.split('=').next().is_some_and(|k| k.contains('.')));
        match dotted {
            Some(flag) => {
                let (key, value) = match flag.split_once('=') {
                    Some((k, v)) => (k.to_string(), v.to_string()),
                    None => {
                        let v = it
                            .next()
                            .ok_or_else(|| Error::Config(format!("--{flag} needs a value")))?
                            .into_string()
                            .map_err(|_| Error::Config(format!("--{flag}: value is not UTF-8")))?;
                        (flag.to_string(), v)
                    }
                };
                overrides.push((key, value));
            }
            None => rest.push(arg),
        }
    }
    Ok((rest, overrides))
}

/// Runs one invocation; returns the lines to print.
pub fn run(cli: &Cli, overrides: &[(String, String)]) -> Result<Vec<String>> {
    let config = RunConfig::load(cli.config.as_deref(), overrides, cli.seed)?;
    let mut out = Vec::new();
    match &cli.command {
        Command::Synth => {
            let s = pipeline::synth(&config)?;
            out.push(format!(
                "wrote {} readings ({} frames) to {}",
                s.readings,
                s.frames,
                config.paths.trace.display()
            ));
        }
        Command::Cluster => {
            let c = pipeline::cluster(&config)?;
            for (device, modes) in &c.modes {
                out.push(format!("{device}: {modes} modes"));
            }
            out.push(format!("domain states: {}", c.states));
            out.push(format!("bundle: {}", config.paths.bundle.display()));
        }
        Command::Train => {
            let t = pipeline::train(&config)?;
            out.push(format!(
                "states: {}, strict: {}, policy iterations: {}",
                t.states, t.strict, t.iterations
            ));
        }
        Command::Simulate => {
            let r = pipeline::simulate(&config)?;
            out.extend(pipeline::summary_lines(&r.summary, &r.slots));
            out.push(format!("report: {}", config.paths.report.display()));
        }
        Command::Report { input } => {
            let json = input.clone().unwrap_or_else(|| config.paths.report_json());
            let r = pipeline::rewrite_report(&json, &config)?;
            out.extend(pipeline::summary_lines(&r.summary, &r.slots));
            out.push(format!("report: {}", config.paths.report.display()));
        }
        Command::Config => out.push(config.to_toml()?),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(args: &[&str]) -> Vec<OsString> {
        args.iter().map(OsString::from).collect()
    }

    #[test]
    fn dotted_flags_are_extracted() {
        let (rest, ov) = split_dotted(os(&[
            "homeopt",
            "--seed",
            "3",
            "--planner.gamma",
            "0.8",
            "simulate",
            "--sim.slot_size=500",
            "--behavior.top",
            "-1",
        ]))
        .unwrap();
        assert_eq!(rest, os(&["homeopt", "--seed", "3", "simulate"]));
        assert_eq!(
            ov,
            vec![
                ("planner.gamma".into(), "0.8".into()),
                ("sim.slot_size".into(), "500".into()),
                ("behavior.top".into(), "-1".into()),
            ]
        );
    }

    #[test]
    fn dangling_dotted_flag() {
        assert!(split_dotted(os(&["homeopt", "train", "--planner.gamma"])).is_err());
    }
}
