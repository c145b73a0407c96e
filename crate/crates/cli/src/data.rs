//! CSV input and output. Binary data are `x1[,x2],z` (a single covariate may
//! be named `x`); regression data are `x,y`.

use std::fs::File;
use std::path::Path;

use lbp::Points;

use crate::CliError;

fn data_err(path: &Path, row: Option<usize>, msg: impl std::fmt::Display) -> CliError {
    match row {
        Some(r) => CliError::Data(format!("{} row {r}: {msg}", path.display())),
        None => CliError::Data(format!("{}: {msg}", path.display())),
    }
}

/// Header plus numeric rows. Row numbers in errors count the header as row 1.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let file = File::open(path).map_err(|e| data_err(path, None, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| data_err(path, Some(1), e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| data_err(path, Some(row), e))?;
        let values = record
            .iter()
            .zip(&header)
            .map(|(field, name)| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| data_err(path, Some(row), format!("column {name}: '{field}' is not a finite number")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(data_err(path, None, "no data rows"));
    }
    Ok(Table { header, rows })
}

fn column(table: &Table, path: &Path, name: &str) -> Result<usize, CliError> {
    table
        .header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| data_err(path, Some(1), format!("missing column '{name}' in header {:?}", table.header)))
}

fn covariate_columns(table: &Table, path: &Path) -> Result<Vec<usize>, CliError> {
    if let Ok(c) = column(table, path, "x") {
        return Ok(vec![c]);
    }
    let mut cols = vec![column(table, path, "x1")?];
    if let Ok(c) = column(table, path, "x2") {
        cols.push(c);
    }
    Ok(cols)
}

fn points(table: &Table, cols: &[usize]) -> Points {
    let coords = table.rows.iter().flat_map(|r| cols.iter().map(move |&c| r[c])).collect();
    Points::new(cols.len(), coords).expect("rectangular table")
}

pub fn read_binary(path: &Path) -> Result<(Points, Vec<u8>), CliError> {
    let t = read_table(path)?;
    let cols = covariate_columns(&t, path)?;
    let zc = column(&t, path, "z")?;
    let z = t
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| match r[zc] {
            v if v == 0.0 => Ok(0),
            v if v == 1.0 => Ok(1),
            v => Err(data_err(path, Some(i + 2), format!("z must be 0 or 1, got {v}"))),
        })
        .collect::<Result<Vec<u8>, _>>()?;
    Ok((points(&t, &cols), z))
}

pub fn read_regression(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let t = read_table(path)?;
    let (xc, yc) = (column(&t, path, "x")?, column(&t, path, "y")?);
    Ok((t.rows.iter().map(|r| r[xc]).collect(), t.rows.iter().map(|r| r[yc]).collect()))
}

pub fn read_points(path: &Path) -> Result<Points, CliError> {
    let t = read_table(path)?;
    let cols = covariate_columns(&t, path)?;
    Ok(points(&t, &cols))
}

pub fn covariate_header(dim: usize) -> Vec<String> {
    if dim == 1 {
        vec!["x".into()]
    } else {
        (1..=dim).map(|k| format!("x{k}")).collect()
    }
}

pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let io = |e: csv::Error| data_err(path, None, e);
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
    }
    w.flush().map_err(|e| data_err(path, None, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| data_err(path, None, e))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value).map_err(|e| data_err(path, None, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(|e| data_err(path, None, e))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| data_err(path, None, e))
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}
