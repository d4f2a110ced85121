use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use spinsys_core::experiment::ExperimentConfig;

pub type Sink = Box<dyn Write>;

pub fn open(out: Option<&Path>) -> io::Result<Sink> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

/// A CSV writer preceded by the `#` metadata block of `cfg`.
pub fn csv_with_header(
    out: Option<&Path>,
    cfg: &ExperimentConfig,
    command: &str,
    columns: &[&str],
) -> anyhow::Result<csv::Writer<Sink>> {
    let mut sink = open(out)?;
    for line in cfg.header_lines(command)? {
        writeln!(sink, "{line}")?;
    }
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(columns)?;
    Ok(w)
}

/// Shortest round-trip text of a float.
pub fn num(x: f64) -> String {
    format!("{x}")
}
