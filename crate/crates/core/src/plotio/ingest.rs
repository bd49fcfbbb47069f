use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::estimation::SampleMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Json,
}

impl InputFormat {
    /// From the file extension; anything but `.json` is read as CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

impl FromStr for InputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown input format {other:?} (expected csv or json)"))),
        }
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Json => "json",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    /// `None` infers from the extension.
    pub format: Option<InputFormat>,
    /// CSV only. Without a header, columns are named c1..cd.
    pub has_header: bool,
    pub burn_in: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            format: None,
            has_header: true,
            burn_in: 0,
        }
    }
}

/// Samples plus the number of draws read before burn-in was dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub samples: SampleMatrix<f64>,
    pub rows_read: usize,
}

pub fn ingest(path: impl AsRef<Path>, format: InputFormat, burn_in: usize) -> Result<SampleMatrix<f64>> {
    let options = IngestOptions {
        format: Some(format),
        burn_in,
        ..IngestOptions::default()
    };
    Ok(ingest_with(path, &options)?.samples)
}

pub fn ingest_with(path: impl AsRef<Path>, options: &IngestOptions) -> Result<Ingested> {
    let path = path.as_ref();
    let format = options.format.unwrap_or_else(|| InputFormat::from_path(path));
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
    match format {
        InputFormat::Csv => parse_csv(file, options.has_header, options.burn_in),
        InputFormat::Json => {
            let mut text = String::new();
            std::io::BufReader::new(file).read_to_string(&mut text)?;
            parse_json(&text, options.burn_in)
        }
    }
}

fn csv_line(e: &csv::Error) -> u64 {
    e.position().map_or(0, |p| p.line())
}

pub fn parse_csv<R: Read>(reader: R, has_header: bool, burn_in: usize) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut names: Option<Vec<String>> = if has_header {
        let headers = rdr.headers().map_err(|e| Error::Ingest {
            line: csv_line(&e).max(1),
            message: e.to_string(),
        })?;
        Some(headers.iter().map(str::to_string).collect())
    } else {
        None
    };
    let mut columns: Vec<Vec<f64>> = names.as_ref().map_or_else(Vec::new, |n| vec![Vec::new(); n.len()]);
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                return Err(Error::Ingest {
                    line: csv_line(&e),
                    message: e.to_string(),
                })
            }
        }
        let line = record.position().map_or(0, |p| p.line());
        if names.is_none() && columns.is_empty() {
            columns = vec![Vec::new(); record.len()];
        }
        if record.len() != columns.len() {
            return Err(Error::Ingest {
                line,
                message: format!("expected {} fields, found {}", columns.len(), record.len()),
            });
        }
        for (j, (cell, col)) in record.iter().zip(columns.iter_mut()).enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Ingest {
                line,
                message: format!("column {}: cannot parse {cell:?} as a number", j + 1),
            })?;
            col.push(v);
        }
    }
    if names.is_none() {
        names = Some((1..=columns.len()).map(|j| format!("c{j}")).collect());
    }
    finish(columns, names, burn_in)
}

/// `{"a": [..], "b": [..]}` with equal-length numeric arrays, in file order.
pub fn parse_json(text: &str, burn_in: usize) -> Result<Ingested> {
    let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text).map_err(|e| Error::Ingest {
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    let mut names = Vec::with_capacity(map.len());
    let mut columns = Vec::with_capacity(map.len());
    for (name, value) in map {
        let arr = value
            .as_array()
            .ok_or_else(|| Error::Format(format!("column {name:?} is not an array")))?;
        let col = arr
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_f64()
                    .ok_or_else(|| Error::Format(format!("column {name:?}, entry {i}: {v} is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = columns.first().map(Vec::len) {
            if col.len() != first {
                return Err(Error::Format(format!(
                    "column {name:?} has {} values, column {:?} has {first}",
                    col.len(),
                    names[0]
                )));
            }
        }
        names.push(name);
        columns.push(col);
    }
    finish(columns, Some(names), burn_in)
}

fn finish(mut columns: Vec<Vec<f64>>, names: Option<Vec<String>>, burn_in: usize) -> Result<Ingested> {
    if columns.is_empty() {
        return Err(Error::Format("no columns".into()));
    }
    let rows_read = columns[0].len();
    if rows_read <= burn_in + 1 {
        return Err(Error::Format(format!(
            "{rows_read} draws with burn-in {burn_in} leaves fewer than 2"
        )));
    }
    for c in &mut columns {
        c.drain(..burn_in);
    }
    Ok(Ingested {
        samples: SampleMatrix::from_columns(columns, names)?,
        rows_read,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(text: &str, header: bool, burn_in: usize) -> Result<Ingested> {
        parse_csv(text.as_bytes(), header, burn_in)
    }

    #[test]
    fn csv_with_burn_in() {
        let r = csv("x\n1\n2\n3\n", true, 1).unwrap();
        assert_eq!(r.samples.column(0), &[2.0, 3.0]);
        assert_eq!(r.samples.column_label(0), "x");
        assert_eq!(r.rows_read, 3);
    }

    #[test]
    fn headerless_csv() {
        let r = csv("1,2\n3,4\n5,6\n", false, 0).unwrap();
        assert_eq!(r.samples.column_names().unwrap(), &["c1".to_string(), "c2".to_string()]);
        assert_eq!(r.samples.column(1), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn ragged_csv_names_line() {
        let err = csv("a,b\n1,2\n3\n4,5\n", true, 0).unwrap_err();
        match err {
            Error::Ingest { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(err_line(csv("a\n1\nfoo\n", true, 0)) == 3);
    }

    fn err_line(r: Result<Ingested>) -> u64 {
        match r {
            Err(Error::Ingest { line, .. }) => line,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_rows() {
        assert!(csv("x\n1\n2\n", true, 1).is_err());
        assert!(csv("x\n", true, 0).is_err());
    }

    #[test]
    fn json_columns() {
        let r = parse_json(r#"{"b":[1,2,3],"a":[4,5,6]}"#, 0).unwrap();
        assert_eq!(r.samples.column_label(0), "b");
        assert_eq!(r.samples.column(1), &[4.0, 5.0, 6.0]);
        assert!(matches!(parse_json(r#"{"a":[1,2],"b":[1]}"#, 0), Err(Error::Format(_))));
        assert!(parse_json(r#"{"a":[1,"x"]}"#, 0).is_err());
        assert!(matches!(parse_json("{\n\"a\": [1,\n", 0), Err(Error::Ingest { .. })));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(InputFormat::from_path(Path::new("a.JSON")), InputFormat::Json);
        assert_eq!(InputFormat::from_path(Path::new("a.csv")), InputFormat::Csv);
        assert_eq!("json".parse::<InputFormat>().unwrap(), InputFormat::Json);
        assert!("xml".parse::<InputFormat>().is_err());
    }
}
