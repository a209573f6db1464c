//! Dataset CSV format: header `path_id,t,x1,...,xp`, rows sorted by
//! `(path_id, t)`.

use std::io::{Read, Write};
use std::path::Path;

use pfdisc::{Dataset, SamplePath};

use crate::error::{CliError, Result};

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> CliError {
    CliError::Parse { path: path.to_path_buf(), line, message: message.into() }
}

/// Rows of one path: id, times, per-variable values, first line number.
type Group = (String, Vec<f64>, Vec<Vec<f64>>, u64);

/// Parse a dataset from any reader; `origin` only labels error messages.
pub fn read_dataset<R: Read>(reader: R, origin: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(origin, 1, e.to_string()))?.clone();
    if headers.len() < 3 || &headers[0] != "path_id" || &headers[1] != "t" {
        return Err(parse_err(origin, 1, "expected header `path_id,t,x1,...,xp`"));
    }
    let p = headers.len() - 2;

    let mut groups: Vec<Group> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |pos| pos.line());
            parse_err(origin, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |pos| pos.line());
        let id = record[0].to_string();
        let number = |col: usize| -> Result<f64> {
            record[col]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(origin, line, format!("column `{}` is not a finite number: `{}`", &headers[col], &record[col])))
        };
        let t = number(1)?;
        if groups.last().is_none_or(|g| g.0 != id) {
            if groups.iter().any(|g| g.0 == id) {
                return Err(parse_err(origin, line, format!("rows of path `{id}` are not contiguous")));
            }
            groups.push((id.clone(), Vec::new(), vec![Vec::new(); p], line));
        }
        let g = groups.last_mut().expect("just pushed");
        if g.1.last().is_some_and(|&prev| t <= prev) {
            return Err(parse_err(origin, line, format!("times of path `{id}` are not strictly increasing")));
        }
        g.1.push(t);
        for v in 0..p {
            g.2[v].push(number(v + 2)?);
        }
    }
    if groups.is_empty() {
        return Err(parse_err(origin, 1, "file contains no data rows"));
    }
    let grid = groups[0].1.clone();
    let mut paths = Vec::with_capacity(groups.len());
    for (id, times, rows, line) in groups {
        if times != grid {
            return Err(parse_err(origin, line, format!("path `{id}` does not share the time grid of the first path")));
        }
        paths.push(SamplePath::new(times, rows).map_err(|e| parse_err(origin, line, e.to_string()))?);
    }
    Dataset::new(paths).map_err(|e| parse_err(origin, 1, e.to_string()))
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_dataset(std::io::BufReader::new(file), path)
}

/// Write a dataset; floats use the shortest representation that parses
/// back to the same bits.
pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["path_id".to_string(), "t".to_string()];
    header.extend((1..=dataset.dim()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for (id, path) in dataset.paths().iter().enumerate() {
        for (i, t) in path.times().iter().enumerate() {
            let mut row = vec![id.to_string(), t.to_string()];
            row.extend((0..path.dim()).map(|j| path.get(j, i).to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()
}

pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_dataset(dataset, std::io::BufWriter::new(file)).map_err(|e| CliError::io(path, e))
}
