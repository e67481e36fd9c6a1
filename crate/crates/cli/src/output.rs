use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

pub use scatter_core::bench::sig9;

use crate::commands::CliError;

/// CSV to a file, or to standard output when `path` is `None`.
pub fn write_csv(
    path: Option<&Path>,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(File::create(p).map_err(|e| CliError::io(p, e))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header).map_err(CliError::csv)?;
    for r in rows {
        w.write_record(r).map_err(CliError::csv)?;
    }
    w.flush()
        .map_err(|e| CliError::Usage(format!("cannot write CSV: {e}")))?;
    Ok(())
}
