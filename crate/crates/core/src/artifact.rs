//! Line-oriented stage artifacts and atomic file writes.
//!
//! An artifact is a JSONL file whose first line is an [`ArtifactHeader`]
//! naming the stage and the content hash of everything that produced it.
//! The remaining lines are records of the stage's type.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const ARTIFACT_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Format { path: String, line: usize, message: String },
    #[error("{path}: expected a `{expected}` artifact, found `{found}`")]
    WrongStage {
        path: String,
        expected: String,
        found: String,
    },
}

/// Write `path` via a temporary sibling and an atomic rename, so readers
/// only ever see a complete file.
pub fn write_atomic<F>(path: &Path, write: F) -> io::Result<()>
where
    F: FnOnce(&mut fs::File) -> io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    write(tmp.as_file_mut())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Incremental SHA-256 over labelled parts.
#[derive(Default)]
pub struct ContentHasher(Sha256);

impl ContentHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn part(mut self, label: &str, bytes: &[u8]) -> Self {
        // length-prefix each part so ("ab","c") and ("a","bc") differ
        self.0.update((label.len() as u64).to_le_bytes());
        self.0.update(label.as_bytes());
        self.0.update((bytes.len() as u64).to_le_bytes());
        self.0.update(bytes);
        self
    }

    pub fn json<T: Serialize>(self, label: &str, value: &T) -> Self {
        let bytes = serde_json::to_vec(value).expect("hashable value serializes");
        self.part(label, &bytes)
    }

    pub fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

pub fn hash_file(path: &Path) -> Result<String, ArtifactError> {
    let bytes = fs::read(path).map_err(|source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(ContentHasher::new().part("file", &bytes).finish())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub stage: String,
    pub format: u32,
    pub content_hash: String,
    pub records: usize,
}

pub fn write_artifact<T: Serialize>(
    path: &Path,
    stage: &str,
    content_hash: &str,
    records: &[T],
) -> Result<(), ArtifactError> {
    let header = ArtifactHeader {
        stage: stage.to_string(),
        format: ARTIFACT_FORMAT,
        content_hash: content_hash.to_string(),
        records: records.len(),
    };
    write_atomic(path, |f| {
        let mut w = BufWriter::new(f);
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for r in records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    })
    .map_err(|source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_header(path: &Path) -> Result<ArtifactHeader, ArtifactError> {
    let display = path.display().to_string();
    let file = fs::File::open(path).map_err(|source| ArtifactError::Io {
        path: display.clone(),
        source,
    })?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|source| ArtifactError::Io {
            path: display.clone(),
            source,
        })?;
    serde_json::from_str(&first).map_err(|e| ArtifactError::Format {
        path: display,
        line: 1,
        message: e.to_string(),
    })
}

pub fn read_artifact<T: DeserializeOwned>(path: &Path, stage: &str) -> Result<(ArtifactHeader, Vec<T>), ArtifactError> {
    let display = path.display().to_string();
    let file = fs::File::open(path).map_err(|source| ArtifactError::Io {
        path: display.clone(),
        source,
    })?;
    let mut lines = BufReader::new(file).lines();
    let format_err = |line: usize, message: String| ArtifactError::Format {
        path: display.clone(),
        line,
        message,
    };
    let header_line = lines
        .next()
        .ok_or_else(|| format_err(1, "empty artifact".into()))?
        .map_err(|e| format_err(1, e.to_string()))?;
    let header: ArtifactHeader = serde_json::from_str(&header_line).map_err(|e| format_err(1, e.to_string()))?;
    if header.stage != stage {
        return Err(ArtifactError::WrongStage {
            path: display,
            expected: stage.to_string(),
            found: header.stage,
        });
    }
    if header.format != ARTIFACT_FORMAT {
        return Err(format_err(1, format!("unsupported artifact format {}", header.format)));
    }
    let mut records = Vec::with_capacity(header.records);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| format_err(i + 2, e.to_string()))?;
        records.push(serde_json::from_str(&line).map_err(|e| format_err(i + 2, e.to_string()))?);
    }
    if records.len() != header.records {
        return Err(format_err(
            records.len() + 1,
            format!(
                "truncated: header promises {} records, found {}",
                header.records,
                records.len()
            ),
        ));
    }
    Ok((header, records))
}
