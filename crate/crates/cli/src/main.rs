use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cascade_core::analysis::{analyze, trends, write_tables};
use cascade_core::attack::AttackVector;
use cascade_core::campaign::{
    load_case, read_records, run_campaign, CampaignConfig, Oracle, ProtectionSetting, RunOptions, BUILTIN_IEEE39,
    RECORDS_FILE,
};
use cascade_core::protection::{calibrate, verify_n1, ProtectionConfig};
use cascade_core::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Cascading-failure simulation under dynamic load-altering attacks.
#[derive(Parser)]
#[command(name = "cascade-laa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Case file, or `builtin:ieee39` (overrides the config's case).
    #[arg(long)]
    case: Option<String>,
    /// Campaign config (schema cascade-laa-config/1).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one attack vector (JSON file) and print the record.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Attack vector: {"lambda0": [...], "interval": I, "scenario": tau, "gain": C}.
        #[arg(long)]
        attack: PathBuf,
        /// Keep every n-th integration step in the trajectory.
        #[arg(long, default_value_t = 0)]
        stride: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Auto-calibrate the protection thresholds and print the N-1 report.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check N-1 security of a protection configuration.
    VerifyN1 {
        #[command(flatten)]
        common: Common,
        /// Protection thresholds (JSON); defaults to the config's fixed thresholds.
        #[arg(long)]
        protection: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a sampling campaign.
    Campaign {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        proposals: Option<u64>,
        #[arg(long)]
        chains: Option<usize>,
        /// Output directory (overrides the config's output).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Aggregate tables from a campaign's records.
    Analyze {
        /// Campaign output directory; tables are written next to the records.
        #[arg(long)]
        out: PathBuf,
        /// Record file, if not `<out>/records.jsonl`.
        #[arg(long)]
        records: Option<PathBuf>,
    },
}

fn config(common: &Common) -> Result<CampaignConfig> {
    let mut cfg = match &common.config {
        Some(p) => CampaignConfig::load(p)?,
        None => CampaignConfig::new(BUILTIN_IEEE39),
    };
    if let Some(c) = &common.case {
        cfg.case = c.clone();
    }
    Ok(cfg)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    serde_json::from_str(&s).map_err(|e| Error::Parse { line: e.line(), column: e.column(), message: e.to_string() })
}

fn emit<T: Serialize>(v: &T, out: Option<&Path>) -> Result<()> {
    let s = serde_json::to_string_pretty(v).expect("serializable");
    match out {
        Some(p) => std::fs::write(p, s + "\n").map_err(|e| Error::Io { path: p.display().to_string(), source: e }),
        None => {
            println!("{s}");
            Ok(())
        }
    }
}

fn protection(cfg: &CampaignConfig) -> Result<ProtectionConfig> {
    match &cfg.protection {
        ProtectionSetting::Fixed(p) => Ok(p.clone()),
        ProtectionSetting::Auto(_) => {
            let case = load_case(&cfg.case)?;
            let c = &cfg.calibration;
            Ok(calibrate(&case, &c.start, &cfg.dynamics, &c.n1, c.margin)?.config)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate { common, attack, stride, out } => {
            let mut cfg = config(&common)?;
            cfg.dynamics.output_stride = stride;
            let a: AttackVector = read_json(&attack)?;
            let case = load_case(&cfg.case)?;
            let oracle = Oracle::new(&case, protection(&cfg)?, &cfg.dynamics, &cfg.attack)?;
            if a.lambda0.len() != oracle.nodes().len() {
                return Err(Error::Validation(format!(
                    "attack has {} initial changes for {} vulnerable nodes",
                    a.lambda0.len(),
                    oracle.nodes().len()
                )));
            }
            emit(&oracle.simulate(&a)?, out.as_deref())?;
        }
        Command::Calibrate { common, out } => {
            let cfg = config(&common)?;
            let case = load_case(&cfg.case)?;
            let c = &cfg.calibration;
            let cal = calibrate(&case, &c.start, &cfg.dynamics, &c.n1, c.margin)?;
            emit(&cal, out.as_deref())?;
        }
        Command::VerifyN1 { common, protection: prot, out } => {
            let cfg = config(&common)?;
            let case = load_case(&cfg.case)?;
            let p = match prot {
                Some(path) => read_json(&path)?,
                None => match &cfg.protection {
                    ProtectionSetting::Fixed(p) => p.clone(),
                    ProtectionSetting::Auto(_) => ProtectionConfig::default(),
                },
            };
            let report = verify_n1(&case, &p, &cfg.dynamics, &cfg.calibration.n1)?;
            emit(&report, out.as_deref())?;
            eprintln!("N-1: {} violation(s)", report.violation_count());
            if !report.passed() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Campaign { common, seed, proposals, chains, out, resume } => {
            let mut cfg = config(&common)?;
            if let Some(s) = seed {
                cfg.sampler.seed = s;
            }
            if let Some(n) = proposals {
                cfg.sampler.proposals = n;
            }
            if let Some(c) = chains {
                cfg.sampler.chains = c;
            }
            let dir = out
                .or_else(|| cfg.output.clone())
                .ok_or_else(|| Error::Validation("no output directory: pass --out or set output".into()))?;
            let s = run_campaign(&cfg, &dir, &RunOptions { resume, halt_after: None })?;
            eprintln!(
                "{} proposals, acceptance {:.3}, {} records in {:.1} s",
                s.proposals, s.acceptance_rate, s.records, s.wall_time_s
            );
        }
        Command::Analyze { out, records } => {
            let path = records.unwrap_or_else(|| out.join(RECORDS_FILE));
            let recs = read_records(&path)?;
            let tables = analyze(&recs)?;
            write_tables(&tables, &out)?;
            emit(&trends(&recs)?, None)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
