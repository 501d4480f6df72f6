use std::path::Path;

use super::{execute, Kind};
use crate::error::{CliError, CliResult};
use crate::manifest::{sha256_file, Manifest};

/// Checks the recorded inputs are unchanged, re-runs the command into `out`
/// and compares every output digest.
pub fn run(manifest_path: &Path, out: &Path) -> CliResult<Manifest> {
    let recorded = Manifest::read(manifest_path)?;
    for input in &recorded.inputs {
        let now = sha256_file(&input.path)?;
        if now != input.sha256 {
            return Err(CliError::Replay(format!(
                "input {} changed since the recorded run",
                input.path.display()
            )));
        }
    }
    let kind = Kind::from_manifest(&recorded)?;
    let replayed = execute(kind, recorded.config.clone(), out)?;
    if replayed.outputs.len() != recorded.outputs.len() {
        return Err(CliError::Replay(format!(
            "{} outputs recorded, {} produced",
            recorded.outputs.len(),
            replayed.outputs.len()
        )));
    }
    for (was, now) in recorded.outputs.iter().zip(&replayed.outputs) {
        if was != now {
            return Err(CliError::Replay(format!(
                "output {} differs (recorded {}, replayed {} {})",
                was.path.display(),
                was.sha256,
                now.path.display(),
                now.sha256
            )));
        }
    }
    Ok(replayed)
}
