//! Result files. Every file is written to a temporary sibling and renamed into
//! place, so a crash never leaves a half-written result.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::agent::TrajectoryRecord;
use crate::error::EvalError;

use super::RunMatrix;

fn output_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), EvalError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| output_err(path, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    let mut f = fs::File::create(tmp).map_err(|e| output_err(path, e))?;
    f.write_all(bytes).map_err(|e| output_err(path, e))?;
    f.sync_all().map_err(|e| output_err(path, e))?;
    fs::rename(tmp, path).map_err(|e| output_err(path, e))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), EvalError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| output_err(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn write_csv(path: &Path, matrix: &RunMatrix) -> Result<(), EvalError> {
    let mut buf = Vec::new();
    matrix.write_csv(&mut buf).map_err(|e| output_err(path, e))?;
    write_atomic(path, &buf)
}

pub fn save_trajectories(path: &Path, records: &[TrajectoryRecord]) -> Result<(), EvalError> {
    write_json(path, records)
}

pub fn load_trajectories(path: &Path) -> Result<Vec<TrajectoryRecord>, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| output_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| output_err(path, e))
}
