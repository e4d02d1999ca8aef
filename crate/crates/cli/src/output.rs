use std::fs;
use std::path::Path;

use mvfuse_core::io::write_joints;
use mvfuse_core::JointSet;

use crate::{CliError, CliResult};

pub fn ensure_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| CliError::Run(format!("{}: {e}", dir.display())))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    fs::write(path, contents).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
}

/// Writes through a sibling temporary file and a rename, so readers never
/// see a partial summary.
pub fn write_atomic(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    write_file(tmp, contents)?;
    fs::rename(tmp, path).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
}

const HASH_PREFIX: &str = "# config ";

/// Joints text preceded by a `# config <hash>` provenance comment.
pub fn joints_text(hash: &str, sets: &[JointSet]) -> String {
    format!("{HASH_PREFIX}{hash}\n{}", write_joints(sets))
}

/// The provenance hash of a joints file written by [`joints_text`].
pub fn hash_comment(text: &str) -> Option<String> {
    text.lines().find_map(|l| l.strip_prefix(HASH_PREFIX)).map(|h| h.trim().to_string())
}

pub fn to_json(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json value serializes");
    s.push('\n');
    s
}
