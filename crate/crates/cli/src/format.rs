use std::fs::File;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// Rounds to 12 significant digits, then prints the shortest string that
/// reads back to the rounded value.
pub fn fmt_float(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{v:.11e}").parse().unwrap_or(v);
    let s = format!("{rounded:?}");
    s.strip_suffix(".0").map(str::to_owned).unwrap_or(s)
}

/// CSV writer over a file, with float cells rendered by [`fmt_float`].
pub struct CsvOut {
    inner: csv::Writer<File>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[String]) -> CliResult<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(header)?;
        Ok(Self { inner })
    }

    pub fn row(&mut self, cells: &[String]) -> CliResult<()> {
        self.inner.write_record(cells)?;
        Ok(())
    }

    pub fn float_row(&mut self, values: impl IntoIterator<Item = f64>) -> CliResult<()> {
        let cells: Vec<String> = values.into_iter().map(fmt_float).collect();
        self.row(&cells)
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.inner.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
