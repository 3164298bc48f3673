use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use distlqr_core::{EmpiricalDistribution, HistogramDensity};
use serde::Serialize;

use crate::config::Format;
use crate::error::CliError;

/// Artifact sink rooted at the output directory. Nothing is written outside
/// `root`.
#[derive(Debug)]
pub struct Output {
    root: PathBuf,
    formats: Vec<Format>,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn new(root: PathBuf, formats: Vec<Format>) -> Self {
        Self {
            root,
            formats,
            written: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn write_with<F>(&mut self, name: &str, f: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>,
    {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(Self::io_err(parent))?;
        }
        let file = fs::File::create(&path).map_err(Self::io_err(&path))?;
        let mut w = BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush()).map_err(Self::io_err(&path))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<Option<PathBuf>, CliError> {
        if !self.wants(Format::Json) {
            return Ok(None);
        }
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
            writeln!(w)
        })
        .map(Some)
    }

    pub fn edf(&mut self, name: &str, d: &EmpiricalDistribution) -> Result<Option<PathBuf>, CliError> {
        if !self.wants(Format::Csv) {
            return Ok(None);
        }
        self.write_with(name, |w| d.write_edf_csv(w)).map(Some)
    }

    pub fn histogram(&mut self, name: &str, h: &HistogramDensity) -> Result<Option<PathBuf>, CliError> {
        if !self.wants(Format::Csv) {
            return Ok(None);
        }
        self.write_with(name, |w| h.write_csv(w)).map(Some)
    }

    pub fn csv(&mut self, name: &str, header: &str, rows: &[Vec<String>]) -> Result<Option<PathBuf>, CliError> {
        if !self.wants(Format::Csv) {
            return Ok(None);
        }
        self.write_with(name, |w| {
            writeln!(w, "{header}")?;
            for r in rows {
                writeln!(w, "{}", r.join(","))?;
            }
            Ok(())
        })
        .map(Some)
    }
}

/// Several EDFs evaluated on one shared grid spanning all their samples.
pub fn edf_grid(dists: &[&EmpiricalDistribution], points: usize) -> Vec<Vec<String>> {
    let lo = dists.iter().map(|d| d.min()).fold(f64::INFINITY, f64::min);
    let hi = dists.iter().map(|d| d.max()).fold(f64::NEG_INFINITY, f64::max);
    let steps = points.max(2) - 1;
    (0..=steps)
        .map(|i| {
            let z = if i == steps { hi } else { lo + (hi - lo) * i as f64 / steps as f64 };
            std::iter::once(fmt(z)).chain(dists.iter().map(|d| fmt(d.edf(z)))).collect()
        })
        .collect()
}

/// Shortest round-trip formatting; empty for missing values.
pub fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}
