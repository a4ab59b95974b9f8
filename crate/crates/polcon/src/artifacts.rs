//! Artifact persistence: JSONL and CSV with stable field names, no
//! timestamps in bodies, parents created on demand. Artifacts from a
//! seeded run are byte-identical across reruns.

use serde::de::DeserializeOwned;
use serde::Serialize;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Decode { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    Encode { path: PathBuf, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> ArtifactError {
    ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn ensure_parent(path: &Path) -> Result<(), ArtifactError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    Ok(())
}

pub fn write_string(path: &Path, body: &str) -> Result<(), ArtifactError> {
    ensure_parent(path)?;
    std::fs::write(path, body).map_err(|e| io_err(path, e))
}

pub fn read_string(path: &Path) -> Result<String, ArtifactError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// One record per line, trailing newline included.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), ArtifactError> {
    ensure_parent(path)?;
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| ArtifactError::Encode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        out.write_all(line.as_bytes()).map_err(|e| io_err(path, e))?;
        out.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ArtifactError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| ArtifactError::Decode {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let body = serde_json::to_string_pretty(value).map_err(|e| ArtifactError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_string(path, &format!("{body}\n"))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    let body = read_string(path)?;
    serde_json::from_str(&body).map_err(|e| ArtifactError::Decode {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

/// Recursively list files under a root, paths relative to it, sorted.
pub fn walk_files(root: &Path) -> Result<Vec<PathBuf>, ArtifactError> {
    fn recurse(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), ArtifactError> {
        let entries = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| io_err(dir, e))?;
            let path = entry.path();
            if path.is_dir() {
                recurse(root, &path, out)?;
            } else {
                out.push(path.strip_prefix(root).expect("entries live under root").to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    if root.exists() {
        recurse(root, root, &mut out)?;
    }
    out.sort();
    Ok(out)
}
