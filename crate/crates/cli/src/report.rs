//! Line-oriented report files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Output directory, created on first write.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root)
            .map_err(|e| CliError::data(format!("cannot create output directory {}: {e}", root.display())))?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> CliResult<PathBuf> {
        let p = self.path(name);
        fs::write(&p, contents).map_err(|e| CliError::data(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }

    /// One JSON object per line.
    pub fn jsonl<T: Serialize>(&self, name: &str, records: &[T]) -> CliResult<PathBuf> {
        let mut s = String::new();
        for r in records {
            s.push_str(&serde_json::to_string(r).expect("report records serialize"));
            s.push('\n');
        }
        self.write(name, &s)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        self.write(name, &(serde_json::to_string_pretty(value).expect("report serializes") + "\n"))
    }

    /// Flat table with a header row.
    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| CliError::data(format!("cannot format {name}: {e}"));
        w.write_record(header).map_err(fail)?;
        for r in rows {
            w.write_record(r).map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::data(format!("cannot format {name}: {e}")))?;
        self.write(name, &String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Accuracy as a percentage with its CI, e.g. `91.7 ± 0.5`.
pub fn percent_ci(mean: f64, ci: f64) -> String {
    format!("{:.1} ± {:.1}", 100.0 * mean, 100.0 * ci)
}
