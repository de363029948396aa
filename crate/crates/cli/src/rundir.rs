use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Environment variable naming the directory that holds timestamped runs.
pub const OUTPUT_ROOT_VAR: &str = "FAULTWALK_OUTPUT_ROOT";
const DEFAULT_ROOT: &str = "runs";

/// Creates the directory a command writes into: `explicit` when given,
/// otherwise `<root>/<kind>-<label>-<UTC timestamp>`.
pub fn create(explicit: Option<&Path>, kind: &str, label: &str) -> Result<PathBuf> {
    let dir = match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let root = std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_ROOT));
            let stamp = chrono::Utc::now().format("%Y%m%d-%H%M%S");
            let base = root.join(format!("{kind}-{label}-{stamp}"));
            let mut dir = base.clone();
            let mut n = 1;
            while dir.exists() {
                dir = PathBuf::from(format!("{}-{n}", base.display()));
                n += 1;
            }
            dir
        }
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

pub fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
