//! Text output helpers shared by the CSV writers.

use std::io::{self, Write};

/// Formats a real with 17 significant digits, `.` decimal separator and no
/// grouping, which round-trips any `f64` exactly.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a CSV with a header row and one row per record.
pub fn write_csv<W, I, R>(mut out: W, header: &[&str], rows: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = R>,
    R: AsRef<[f64]>,
{
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.as_ref().iter().map(|&v| real(v)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}
