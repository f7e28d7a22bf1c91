//! Deterministic CSV emission: every byte written is also hashed, so the
//! manifest can certify outputs without re-reading files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::manifest::OutputRecord;
use crate::{CliError, CliResult};

pub struct CsvFile {
    name: String,
    writer: BufWriter<File>,
    hasher: Sha256,
    rows: u64,
}

impl CsvFile {
    /// Creates `dir/name` and writes the header line.
    pub fn create(dir: &Path, name: &str, header: &str) -> CliResult<Self> {
        let path = dir.join(name);
        let file = File::create(&path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut out = CsvFile {
            name: name.to_string(),
            writer: BufWriter::new(file),
            hasher: Sha256::new(),
            rows: 0,
        };
        out.line(header)?;
        out.rows = 0;
        Ok(out)
    }

    /// Writes one data row (no trailing newline in `row`).
    pub fn row(&mut self, row: &str) -> CliResult<()> {
        self.line(row)?;
        Ok(())
    }

    fn line(&mut self, text: &str) -> CliResult<()> {
        self.writer
            .write_all(text.as_bytes())
            .and_then(|_| self.writer.write_all(b"\n"))
            .map_err(|e| CliError::Io(format!("{}: {e}", self.name)))?;
        self.hasher.update(text.as_bytes());
        self.hasher.update(b"\n");
        self.rows += 1;
        Ok(())
    }

    /// Flushes and returns the checksum record.
    pub fn finish(mut self) -> CliResult<OutputRecord> {
        self.writer
            .flush()
            .map_err(|e| CliError::Io(format!("{}: {e}", self.name)))?;
        Ok(OutputRecord {
            path: self.name,
            sha256: format!("sha256:{}", hex::encode(self.hasher.finalize())),
            rows: self.rows,
        })
    }
}
