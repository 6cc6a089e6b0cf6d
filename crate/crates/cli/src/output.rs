//! CSV emission and run manifests.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::CliError;

/// 17 significant digits: enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, sink: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes to `path`, or to stdout when no path is given.
    pub fn emit(&self, path: Option<&Path>) -> Result<(), CliError> {
        match path {
            Some(p) => {
                let file = std::fs::File::create(p)
                    .map_err(|e| CliError::Config(format!("cannot create {}: {e}", p.display())))?;
                self.write_to(std::io::BufWriter::new(file))
            }
            None => self.write_to(std::io::stdout().lock()),
        }
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.toml");
    PathBuf::from(name)
}

/// Writes the effective configuration next to `out` so the run can be
/// repeated with `--config <manifest>`.
pub fn write_manifest(out: &Path, command: &str, config: &RunConfig) -> Result<PathBuf, CliError> {
    let path = manifest_path(out);
    let text = format!("# infodemic {command}\n{}", config.to_toml());
    std::fs::write(&path, text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn table_csv() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), num(0.25)]);
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n1,2.5000000000000000e-1\n");
    }

    #[test]
    fn manifest_name() {
        assert_eq!(manifest_path(Path::new("/tmp/x.csv")), PathBuf::from("/tmp/x.csv.manifest.toml"));
    }
}
