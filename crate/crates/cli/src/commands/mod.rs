pub mod compress;
pub mod gen_toy;
pub mod infer;
pub mod schedule;
pub mod verify;

use std::path::Path;

/// Command-line misuse that is not a flag-parse failure (clap handles those):
/// empty inputs, incoherent flag combinations. Exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Atomic text write: temp file in the destination directory, then rename.
pub fn write_text_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp-write");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)
}
