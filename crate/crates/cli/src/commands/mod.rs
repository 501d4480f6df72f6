//! Command implementations. Each resolves its config, checks that no output
//! would overwrite an input, runs, and records a manifest.

pub mod generate;
pub mod plan;
pub mod replay;
pub mod report;
pub mod train;
pub mod trial;

use std::path::{Path, PathBuf};

use toml::Table;

use crate::cli::TrainMode;
use crate::config::{resolve, to_table};
use crate::error::{CliError, CliResult};
use crate::manifest::{FileDigest, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Generate,
    Train(TrainMode),
    Plan,
    Trial,
    Report,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Generate => "generate",
            Kind::Train(_) => "train",
            Kind::Plan => "plan",
            Kind::Trial => "trial",
            Kind::Report => "report",
        }
    }

    pub fn mode(self) -> Option<TrainMode> {
        match self {
            Kind::Train(m) => Some(m),
            _ => None,
        }
    }

    pub fn from_manifest(m: &Manifest) -> CliResult<Self> {
        let kind = match (m.command.as_str(), m.mode.as_deref()) {
            ("generate", None) => Kind::Generate,
            ("train", Some(mode)) => Kind::Train(
                TrainMode::parse(mode).ok_or_else(|| CliError::config("mode", format!("unknown train mode `{mode}`")))?,
            ),
            ("plan", None) => Kind::Plan,
            ("trial", None) => Kind::Trial,
            ("report", None) => Kind::Report,
            (command, _) => return Err(CliError::config("command", format!("unknown command `{command}`"))),
        };
        Ok(kind)
    }
}

/// What a command read and wrote.
#[derive(Debug, Default)]
pub struct Record {
    pub inputs: Vec<PathBuf>,
    /// File names inside the output directory.
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
}

/// Fails if writing `names` into `out` would replace one of `inputs`.
pub fn guard_outputs(out: &Path, names: &[&str], inputs: &[PathBuf]) -> CliResult<()> {
    for name in names.iter().copied().chain([crate::manifest::FILE_NAME]) {
        let target = out.join(name);
        let Ok(target) = target.canonicalize() else { continue };
        for input in inputs {
            if input.canonicalize().is_ok_and(|i| i == target) {
                return Err(CliError::config(
                    "out",
                    format!("output {} would overwrite input {}", target.display(), input.display()),
                ));
            }
        }
    }
    Ok(())
}

fn run_resolved<T, F>(table: Table, run: F) -> CliResult<(Table, Record)>
where
    T: serde::de::DeserializeOwned + serde::Serialize,
    F: FnOnce(&mut T) -> CliResult<Record>,
{
    let mut config: T = resolve(table)?;
    let record = run(&mut config)?;
    Ok((to_table(&config)?, record))
}

/// Runs `kind` on a raw config table and writes its manifest into `out`.
/// Commands rewrite relative input paths as absolute, so the recorded
/// config replays from any directory.
pub fn execute(kind: Kind, table: Table, out: &Path) -> CliResult<Manifest> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let (config, record) = match kind {
        Kind::Generate => run_resolved(table, |c| generate::run(c, out))?,
        Kind::Train(mode) => run_resolved(table, |c| train::run(mode, c, out))?,
        Kind::Plan => run_resolved(table, |c| plan::run(c, out))?,
        Kind::Trial => run_resolved(table, |c| trial::run(c, out))?,
        Kind::Report => run_resolved(table, |c| report::run(c, out))?,
    };
    let inputs = record
        .inputs
        .iter()
        .map(|p| FileDigest::of(p, p.clone()))
        .collect::<CliResult<Vec<_>>>()?;
    let outputs = record
        .outputs
        .iter()
        .map(|name| FileDigest::of(&out.join(name), PathBuf::from(name)))
        .collect::<CliResult<Vec<_>>>()?;
    let manifest = Manifest {
        command: kind.name().to_string(),
        mode: kind.mode().map(|m| m.name().to_string()),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: record.seed,
        inputs,
        outputs,
        config,
    };
    manifest.write(out)?;
    Ok(manifest)
}
