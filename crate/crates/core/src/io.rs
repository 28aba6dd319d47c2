//! Small text-format helpers shared by the PLY, CSV and sidecar writers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("i/o error on {path}: {source}")]
    Fs {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("json error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl IoError {
    pub(crate) fn fs(path: &Path, source: std::io::Error) -> Self {
        IoError::Fs {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Formats `x` with 9 significant digits in scientific notation.
pub fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| IoError::fs(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| IoError::fs(path, e))
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::fs(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| IoError::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    write_text(path, &(text + "\n"))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| IoError::Json {
        path: path.display().to_string(),
        source: e,
    })
}

/// Writes a numeric CSV with a header row; all values at 9 significant digits.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), IoError> {
    let mut out = String::with_capacity(rows.len() * header.len() * 16);
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", sig9(*v));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Reads a numeric CSV with a header row. Returns the header and the rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), IoError> {
    let text = read_text(path)?;
    let p = path.display().to_string();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or_else(|| IoError::Parse {
        path: p.clone(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let header: Vec<String> = head.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| IoError::Parse {
                path: p.clone(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        if row.len() != header.len() {
            return Err(IoError::Parse {
                path: p,
                line: i + 1,
                msg: format!("expected {} columns, found {}", header.len(), row.len()),
            });
        }
        rows.push(row);
    }
    Ok((header, rows))
}
