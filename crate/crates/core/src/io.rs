//! File formats: noise-curve CSV and JSON documents.
//!
//! Curve CSV columns are `frequency_hz,setpoint,setpoint_unit,output,output_unit`.
//! Rows sharing a frequency form one curve, in file order. Setpoint units
//! are `V` (junction bias) or `K` (resistor temperature); output units are
//! `quanta` or `w_per_hz`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::NoiseCurve;
use crate::quanta::{quanta_from_psd, Frequency};
use crate::sources::SourceKind;

pub const CURVE_HEADER: [&str; 5] = ["frequency_hz", "setpoint", "setpoint_unit", "output", "output_unit"];

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    frequency_hz: f64,
    setpoint: f64,
    setpoint_unit: String,
    output: f64,
    output_unit: String,
}

fn unit_of(kind: SourceKind) -> &'static str {
    match kind {
        SourceKind::Sntj => "V",
        SourceKind::Vts => "K",
    }
}

fn kind_of(unit: &str) -> Option<SourceKind> {
    match unit {
        "V" => Some(SourceKind::Sntj),
        "K" => Some(SourceKind::Vts),
        _ => None,
    }
}

/// Writes curves with outputs in quanta.
pub fn write_curves_csv<W: Write>(writer: W, curves: &[NoiseCurve]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(CURVE_HEADER)?;
    for c in curves {
        for (s, y) in c.setpoints.iter().zip(&c.outputs) {
            w.serialize(CurveRow {
                frequency_hz: c.frequency.hertz(),
                setpoint: *s,
                setpoint_unit: unit_of(c.source_kind).into(),
                output: *y,
                output_unit: "quanta".into(),
            })?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Reads curves; `context` names the input in schema errors.
pub fn read_curves_csv<R: Read>(reader: R, context: &str) -> Result<Vec<NoiseCurve>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().ne(CURVE_HEADER) {
        return Err(Error::schema(
            context,
            format!("expected header {}, found {}", CURVE_HEADER.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut groups: Vec<(f64, SourceKind, Vec<f64>, Vec<f64>)> = Vec::new();
    for (i, row) in r.deserialize::<CurveRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::schema(context, format!("line {line}: {e}")))?;
        let kind = kind_of(&row.setpoint_unit)
            .ok_or_else(|| Error::schema(context, format!("line {line}: setpoint_unit must be V or K, found {:?}", row.setpoint_unit)))?;
        let f = Frequency::new(row.frequency_hz).map_err(|e| Error::schema(context, format!("line {line}: {e}")))?;
        let quanta = match row.output_unit.as_str() {
            "quanta" => row.output,
            "w_per_hz" => quanta_from_psd(row.output, f)
                .map_err(|e| Error::schema(context, format!("line {line}: {e}")))?
                .value(),
            other => {
                return Err(Error::schema(
                    context,
                    format!("line {line}: output_unit must be quanta or w_per_hz, found {other:?}"),
                ))
            }
        };
        match groups.last_mut() {
            Some(g) if g.0 == row.frequency_hz => {
                if g.1 != kind {
                    return Err(Error::schema(context, format!("line {line}: setpoint unit changes within a curve")));
                }
                g.2.push(row.setpoint);
                g.3.push(quanta);
            }
            _ => {
                if groups.iter().any(|g| g.0 == row.frequency_hz) {
                    return Err(Error::schema(
                        context,
                        format!("line {line}: rows for {} Hz are not contiguous", row.frequency_hz),
                    ));
                }
                groups.push((row.frequency_hz, kind, vec![row.setpoint], vec![quanta]));
            }
        }
    }
    if groups.is_empty() {
        return Err(Error::schema(context, "no data rows"));
    }
    groups
        .into_iter()
        .map(|(f, kind, s, y)| {
            NoiseCurve::new(Frequency::new(f)?, kind, s, y).map_err(|e| Error::schema(context, format!("{f} Hz: {e}")))
        })
        .collect()
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_curves_file(path: &Path) -> Result<Vec<NoiseCurve>> {
    read_curves_csv(open(path)?, &path.display().to_string())
}

pub fn write_curves_file(path: &Path, curves: &[NoiseCurve]) -> Result<()> {
    let mut w = create(path)?;
    write_curves_csv(&mut w, curves)?;
    finish(w, path)
}

/// Parses a JSON document, reporting line and column on schema errors.
pub fn parse_json<T: DeserializeOwned>(text: &str, context: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::schema(context, e.to_string()))
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_json(&text, &path.display().to_string())
}

/// Pretty JSON with a trailing newline. Field order follows the type
/// definitions, so output is byte-stable.
pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    finish(w, path)
}

/// Writes a CSV from a header and rows of numbers.
pub fn write_table_file(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let inner = w.into_inner().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into_error(),
    })?;
    finish(inner, path)
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
