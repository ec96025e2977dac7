//! Plain-text artifact writers.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Header cells `prefix1..prefixM`, or just `prefix` when `m == 1`.
pub(crate) fn coordinate_columns(prefix: &str, m: usize) -> Vec<String> {
    if m == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=m).map(|i| format!("{prefix}{i}")).collect()
    }
}
