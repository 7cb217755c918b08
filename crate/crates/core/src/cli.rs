//! Command-line front end.
//!
//! Settings come from an optional flat TOML file (`--config`) overridden by
//! flags. Everything is validated before any engine starts, and output files
//! are written atomically, so a usage error never leaves a partial artifact.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{
    estimate_detection_rate, AttackKind, AttackReport, AttackStrategy, DetectionExperiment,
};
use crate::audit::{self, AuditError};
use crate::equivalence::exhaustive_equivalence;
use crate::protocol::{run_session, EngineKind, OutcomePlan, PartySecret, SessionConfig, SumMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ABORTED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PROPERTY: i32 = 3;
pub const EXIT_IO: i32 = 4;

const DEFAULT_TRIALS: u64 = 100_000;

#[derive(Debug, Parser)]
#[command(
    name = "mqpc",
    version,
    about = "Multi-party quantum private comparison simulator and auditor"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one session; prints the summary and optionally writes the transcript.
    Run(RunArgs),
    /// Estimate the per-decoy detection rate of a channel attack.
    Attack(AttackArgs),
    /// Exhaustive soundness, leakage, collusion and efficiency audits.
    Audit {
        #[command(subcommand)]
        kind: AuditCommand,
    },
    /// Check the symbolic swap rule against the dense simulator on every branch.
    OracleCheck(CommonArgs),
    /// Print the qubit-efficiency comparison table.
    Efficiency(CommonArgs),
}

#[derive(Debug, Subcommand)]
pub enum AuditCommand {
    Soundness(CommonArgs),
    Leakage(CommonArgs),
    Collusion(CollusionArgs),
    Efficiency(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Flat TOML file with default settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "L")]
    pub secret_len: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub decoys: Option<usize>,
    /// symbolic | oracle
    #[arg(long)]
    pub engine: Option<String>,
    /// Require d >= n + 1 (`--strict false` to allow unsound pairs).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub strict: Option<bool>,
    #[arg(long)]
    pub trials: Option<u64>,
    /// residue | integer
    #[arg(long)]
    pub sums: Option<String>,
    /// Output file (transcript for `run`, JSON report otherwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated secret values, or `random`.
    #[arg(long)]
    pub secrets: Option<String>,
    /// none | intercept-resend | measure-resend
    #[arg(long)]
    pub attack: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct AttackArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// intercept-resend | measure-resend | none
    #[arg(long)]
    pub attack: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct CollusionArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated colluding party indices (1-based).
    #[arg(long)]
    pub colluders: Option<String>,
    /// Honest party whose secret is probed.
    #[arg(long)]
    pub target: Option<usize>,
}

/// Keys accepted in a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub d: Option<usize>,
    pub n: Option<usize>,
    #[serde(rename = "L")]
    pub secret_len: Option<usize>,
    pub seed: Option<u64>,
    pub decoys: Option<usize>,
    pub engine: Option<EngineKind>,
    pub strict: Option<bool>,
    pub trials: Option<u64>,
    pub sums: Option<SumMode>,
    pub secrets: Option<SecretsField>,
    pub attack: Option<AttackKind>,
    pub colluders: Option<Vec<usize>>,
    pub target: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum SecretsField {
    Values(Vec<u64>),
    Word(String),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl From<AuditError> for CliError {
    fn from(e: AuditError) -> Self {
        usage(e.to_string())
    }
}

/// Secret inputs after validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Secrets {
    Explicit(Vec<u64>),
    Random,
}

/// Merged file and flag settings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliConfig {
    pub d: Option<usize>,
    pub n: Option<usize>,
    pub secret_len: Option<usize>,
    pub seed: u64,
    pub decoys: Option<usize>,
    pub engine: EngineKind,
    pub strict: bool,
    pub trials: Option<u64>,
    pub sums: SumMode,
    pub secrets: Secrets,
    pub attack: Option<AttackKind>,
    pub colluders: Option<Vec<usize>>,
    pub target: Option<usize>,
    pub out: Option<PathBuf>,
}

impl CliConfig {
    fn require(value: Option<usize>, name: &str) -> Result<usize, CliError> {
        value.ok_or_else(|| {
            usage(format!(
                "missing field {name}: pass --{name} or set it in --config"
            ))
        })
    }

    pub fn d(&self) -> Result<usize, CliError> {
        let d = Self::require(self.d, "d")?;
        if d < 2 {
            return Err(usage(format!("invalid d = {d}: need d >= 2")));
        }
        Ok(d)
    }

    pub fn n(&self) -> Result<usize, CliError> {
        let n = Self::require(self.n, "n")?;
        if n < 2 {
            return Err(usage(format!("invalid n = {n}: need n >= 2")));
        }
        Ok(n)
    }

    pub fn secret_len(&self) -> Result<usize, CliError> {
        let len = Self::require(self.secret_len, "L")?;
        if !(1..=63).contains(&len) {
            return Err(usage(format!("invalid L = {len}: need 1 <= L <= 63")));
        }
        Ok(len)
    }

    pub fn trials(&self) -> Result<u64, CliError> {
        match self.trials.unwrap_or(DEFAULT_TRIALS) {
            0 => Err(usage("invalid trials = 0: need trials >= 1")),
            t => Ok(t),
        }
    }

    /// Session settings for `run`, checked against the strict-mode rule.
    pub fn session(&self) -> Result<SessionConfig, CliError> {
        let (d, n, len) = (self.d()?, self.n()?, self.secret_len()?);
        let mut config = SessionConfig::new(d, n, len)
            .with_seed(self.seed)
            .with_engine(self.engine)
            .with_sums(self.sums);
        if let Some(decoys) = self.decoys {
            config = config.with_decoys(decoys);
        }
        if !self.strict {
            config = config.permissive();
        }
        if let Some(reason) = config.rejection() {
            return Err(usage(format!("invalid configuration: {reason}")));
        }
        Ok(config)
    }

    /// Explicit secrets are checked for count and width; `random` draws them
    /// from a stream of the session seed separate from the session's own.
    pub fn party_secrets(&self, config: &SessionConfig) -> Result<Vec<PartySecret>, CliError> {
        let values = match &self.secrets {
            Secrets::Explicit(values) => {
                if values.len() != config.n {
                    return Err(usage(format!(
                        "invalid secrets: n = {} but {} secrets given",
                        config.n,
                        values.len()
                    )));
                }
                values.clone()
            }
            Secrets::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(1);
                (0..config.n)
                    .map(|_| rng.gen_range(0..1u64 << config.secret_len))
                    .collect()
            }
        };
        values
            .iter()
            .map(|&x| {
                PartySecret::from_value(x, config.secret_len).map_err(|_| {
                    usage(format!(
                        "invalid secrets: {x} does not fit in L = {} bits",
                        config.secret_len
                    ))
                })
            })
            .collect()
    }
}

fn parse_enum<T: DeserializeOwned>(raw: &str, field: &str) -> Result<T, CliError> {
    serde_json::from_value(serde_json::Value::String(raw.to_string()))
        .map_err(|_| usage(format!("invalid {field}: {raw:?}")))
}

fn parse_list<T: std::str::FromStr>(raw: &str, field: &str) -> Result<Vec<T>, CliError> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| usage(format!("invalid {field}: {raw:?}")))
        })
        .collect()
}

fn read_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| {
        usage(format!(
            "malformed config {}: {}",
            path.display(),
            e.message()
        ))
    })
}

/// Flag-only extras that some subcommands accept.
#[derive(Debug, Clone, Default)]
pub struct Extras {
    pub secrets: Option<String>,
    pub attack: Option<String>,
    pub colluders: Option<String>,
    pub target: Option<usize>,
}

/// Merges the config file (if any) with flags; flags win.
pub fn parse_config(common: &CommonArgs, extras: &Extras) -> Result<CliConfig, CliError> {
    let file = match &common.config {
        Some(path) => read_file_config(path)?,
        None => FileConfig::default(),
    };
    let engine = match &common.engine {
        Some(raw) => parse_enum(raw, "engine")?,
        None => file.engine.unwrap_or(EngineKind::Symbolic),
    };
    let sums = match &common.sums {
        Some(raw) => parse_enum(raw, "sums")?,
        None => file.sums.unwrap_or(SumMode::Residue),
    };
    let attack = match &extras.attack {
        Some(raw) => Some(parse_enum(raw, "attack")?),
        None => file.attack,
    };
    let secrets_raw = match &extras.secrets {
        Some(raw) if raw.trim() == "random" => SecretsField::Word("random".into()),
        Some(raw) => SecretsField::Values(parse_list(raw, "secrets")?),
        None => file.secrets.unwrap_or(SecretsField::Word("random".into())),
    };
    let secrets = match secrets_raw {
        SecretsField::Values(v) => Secrets::Explicit(v),
        SecretsField::Word(w) if w == "random" => Secrets::Random,
        SecretsField::Word(w) => return Err(usage(format!("invalid secrets: {w:?}"))),
    };
    let colluders = match &extras.colluders {
        Some(raw) => Some(parse_list(raw, "colluders")?),
        None => file.colluders,
    };
    Ok(CliConfig {
        d: common.d.or(file.d),
        n: common.n.or(file.n),
        secret_len: common.secret_len.or(file.secret_len),
        seed: common.seed.or(file.seed).unwrap_or(0),
        decoys: common.decoys.or(file.decoys),
        engine,
        strict: common.strict.or(file.strict).unwrap_or(true),
        trials: common.trials.or(file.trials),
        sums,
        secrets,
        attack,
        colluders,
        target: extras.target.or(file.target),
        out: common.out.clone(),
    })
}

/// Writes via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io_err = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let name = path.file_name().ok_or_else(|| {
        io_err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "not a file path",
        ))
    })?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, contents).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(e)
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Result of a command: what to print, what to write to `--out`, and the exit code.
struct CommandOutput {
    stdout: String,
    artifact: Option<String>,
    code: i32,
}

impl CommandOutput {
    fn report<T: Serialize>(report: &T, ok: bool) -> Self {
        let json = to_json(report);
        Self {
            stdout: json.clone(),
            artifact: Some(json),
            code: if ok { EXIT_OK } else { EXIT_PROPERTY },
        }
    }
}

fn cmd_run(cfg: &CliConfig) -> Result<CommandOutput, CliError> {
    let config = cfg.session()?;
    let secrets = cfg.party_secrets(&config)?;
    let attack = AttackStrategy::new(cfg.attack.unwrap_or(AttackKind::None));
    let result = run_session(&config, &secrets, &attack, &OutcomePlan::Sampled)
        .map_err(|e| usage(e.to_string()))?;
    Ok(CommandOutput {
        stdout: to_json(&result.summary()),
        artifact: Some(result.transcript.to_jsonl()),
        code: if result.verdict.is_aborted() {
            EXIT_ABORTED
        } else {
            EXIT_OK
        },
    })
}

fn cmd_attack(cfg: &CliConfig) -> Result<CommandOutput, CliError> {
    let exp = DetectionExperiment {
        d: cfg.d()?,
        decoys_per_trial: cfg.decoys.unwrap_or(1),
        trials: cfg.trials()?,
        seed: cfg.seed,
    };
    if exp.decoys_per_trial == 0 {
        return Err(usage(
            "invalid decoys = 0: the experiment needs at least one decoy per trial",
        ));
    }
    let strategy = AttackStrategy::new(cfg.attack.unwrap_or(AttackKind::InterceptResend));
    let stats = estimate_detection_rate(&exp, &strategy).map_err(|e| usage(e.to_string()))?;
    let report = AttackReport::new(&exp, &strategy, &stats);
    // Fails when the estimate misses the analytic rate by more than both
    // 0.01 and twice the interval half-width.
    let half = (report.interval.1 - report.interval.0) / 2.0;
    let ok = (report.rate - report.expected).abs() <= (2.0 * half).max(0.01);
    Ok(CommandOutput::report(&report, ok))
}

fn cmd_oracle_check(cfg: &CliConfig) -> Result<CommandOutput, CliError> {
    let d = cfg.d()?;
    let n = cfg.n()?;
    let size = (d as u64)
        .saturating_pow(n as u32 + 4)
        .saturating_mul(n as u64);
    if size > audit::MAX_BRANCHES {
        return Err(usage(format!(
            "oracle-check at d = {d}, n = {n} needs {size} branches"
        )));
    }
    let report = exhaustive_equivalence(d, n).map_err(|e| usage(e.to_string()))?;
    let mut out = CommandOutput::report(&report, report.all_matched());
    out.stdout = if report.all_matched() {
        format!("all {} branches matched\n", report.branches)
    } else {
        format!(
            "{} of {} branches mismatched\n",
            report.mismatches.len(),
            report.branches
        )
    };
    Ok(out)
}

#[derive(Serialize)]
struct EfficiencyReport {
    n: usize,
    #[serde(rename = "L")]
    secret_len: usize,
    rows: Vec<audit::EfficiencyRow>,
    particles_counted: usize,
    particles_expected: u64,
}

fn cmd_efficiency(cfg: &CliConfig) -> Result<CommandOutput, CliError> {
    let n = cfg.n()?;
    let secret_len = cfg.secret_len.unwrap_or(1);
    let rows = audit::efficiency_table(n)?;
    // Count particles on an actual session at the smallest sound dimension.
    let config = SessionConfig::new(cfg.d.unwrap_or(n + 1).max(n + 1), n, secret_len)
        .with_seed(cfg.seed)
        .with_decoys(0);
    let secrets =
        vec![PartySecret::from_value(0, secret_len).map_err(|e| usage(e.to_string()))?; n];
    let result = run_session(
        &config,
        &secrets,
        &AttackStrategy::NONE,
        &OutcomePlan::Sampled,
    )
    .map_err(|e| usage(e.to_string()))?;
    let report = EfficiencyReport {
        n,
        secret_len,
        rows,
        particles_counted: result.particles.consumed(),
        particles_expected: audit::consumed_particles(n, secret_len),
    };
    let ok = report.particles_counted as u64 == report.particles_expected;
    Ok(CommandOutput::report(&report, ok))
}

fn cmd_audit(kind: &AuditCommand, cfg: &CliConfig) -> Result<CommandOutput, CliError> {
    match kind {
        AuditCommand::Soundness(_) => {
            let report = audit::soundness_scan(cfg.d()?, cfg.n()?, cfg.secret_len()?, cfg.engine)?;
            Ok(CommandOutput::report(&report, report.is_clean()))
        }
        AuditCommand::Leakage(_) => {
            let report = audit::tp_view_leakage(cfg.d()?, cfg.n()?, cfg.secret_len()?, cfg.sums)?;
            Ok(CommandOutput::report(&report, report.view_is_sum()))
        }
        AuditCommand::Collusion(_) => {
            let colluders = cfg.colluders.clone().ok_or_else(|| {
                usage("missing field colluders: pass --colluders or set it in --config")
            })?;
            let target = cfg.target.ok_or_else(|| {
                usage("missing field target: pass --target or set it in --config")
            })?;
            let report = audit::collusion_privacy_check(
                cfg.d()?,
                cfg.n()?,
                cfg.secret_len()?,
                &colluders,
                target,
                cfg.sums,
            )?;
            Ok(CommandOutput::report(&report, report.passed))
        }
        AuditCommand::Efficiency(_) => cmd_efficiency(cfg),
    }
}

/// Runs a parsed command, printing to `stdout`. Returns the exit code.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let (common, extras) = match &cli.command {
        Command::Run(a) => (
            &a.common,
            Extras {
                secrets: a.secrets.clone(),
                attack: a.attack.clone(),
                ..Extras::default()
            },
        ),
        Command::Attack(a) => (
            &a.common,
            Extras {
                attack: a.attack.clone(),
                ..Extras::default()
            },
        ),
        Command::Audit { kind } => match kind {
            AuditCommand::Soundness(c) | AuditCommand::Leakage(c) | AuditCommand::Efficiency(c) => {
                (c, Extras::default())
            }
            AuditCommand::Collusion(a) => (
                &a.common,
                Extras {
                    colluders: a.colluders.clone(),
                    target: a.target,
                    ..Extras::default()
                },
            ),
        },
        Command::OracleCheck(c) | Command::Efficiency(c) => (c, Extras::default()),
    };
    let cfg = parse_config(common, &extras)?;
    let outcome = match &cli.command {
        Command::Run(_) => cmd_run(&cfg)?,
        Command::Attack(_) => cmd_attack(&cfg)?,
        Command::Audit { kind } => cmd_audit(kind, &cfg)?,
        Command::OracleCheck(_) => cmd_oracle_check(&cfg)?,
        Command::Efficiency(_) => cmd_efficiency(&cfg)?,
    };
    if let (Some(path), Some(artifact)) = (&cfg.out, &outcome.artifact) {
        write_atomic(path, artifact)?;
    }
    stdout
        .write_all(outcome.stdout.as_bytes())
        .map_err(|source| CliError::Io {
            path: PathBuf::from("<stdout>"),
            source,
        })?;
    Ok(outcome.code)
}

/// Parses `args` (program name first) and runs. Errors go to `stderr`.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
