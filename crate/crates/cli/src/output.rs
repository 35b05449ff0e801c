use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Output directory for one invocation.
#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, CliError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let p = self.path(name);
        fs::write(&p, contents).map_err(|e| CliError::io(p, e))
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("output serializes");
        text.push('\n');
        self.write(name, text)
    }

    /// Writes a CSV from a header and string rows.
    pub fn write_csv<I, R>(&self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let p = self.path(name);
        let file = fs::File::create(&p).map_err(|e| CliError::io(&p, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let fail = |e| CliError::csv(&p, e);
        w.write_record(header).map_err(fail)?;
        for row in rows {
            w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(fail)?;
        }
        w.flush().map_err(|e| CliError::io(&p, e))
    }

    pub fn create_file(&self, name: &str) -> Result<fs::File, CliError> {
        let p = self.path(name);
        fs::File::create(&p).map_err(|e| CliError::io(p, e))
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}
