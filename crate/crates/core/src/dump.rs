//! Raw event dumps.
//!
//! Binary: one record of eight little-endian `f64` per event,
//! `x1 x2 x3 x4 phi1 phi2 phi3 phi4`, no header. CSV: the same columns
//! under a header line. Mode order is `a_v, b_h, a_h, b_v`.

use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::QuadSample;

/// Bytes per binary record.
pub const RECORD_BYTES: usize = 64;

pub const CSV_HEADER: [&str; 8] = ["x1", "x2", "x3", "x4", "phi1", "phi2", "phi3", "phi4"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DumpFormat {
    #[default]
    Binary,
    Csv,
}

impl FromStr for DumpFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" | "bin" => Ok(Self::Binary),
            "csv" => Ok(Self::Csv),
            other => Err(Error::Parse(format!("unknown dump format {other:?}"))),
        }
    }
}

fn fields(s: &QuadSample) -> [f64; 8] {
    let [x1, x2, x3, x4] = s.x;
    let [p1, p2, p3, p4] = s.phase;
    [x1, x2, x3, x4, p1, p2, p3, p4]
}

fn from_fields(f: [f64; 8], index: usize) -> Result<QuadSample> {
    let s = QuadSample { x: [f[0], f[1], f[2], f[3]], phase: [f[4], f[5], f[6], f[7]] };
    if !s.is_finite() {
        return Err(Error::Dump(format!("record {index} contains a non-finite value")));
    }
    Ok(s)
}

/// Streaming writer for either format.
pub struct DumpWriter<W: Write> {
    inner: Inner<W>,
}

enum Inner<W: Write> {
    Binary(W),
    Csv(Box<csv::Writer<W>>),
}

impl<W: Write> DumpWriter<W> {
    pub fn new(writer: W, format: DumpFormat) -> Result<Self> {
        let inner = match format {
            DumpFormat::Binary => Inner::Binary(writer),
            DumpFormat::Csv => {
                let mut w = csv::Writer::from_writer(writer);
                w.write_record(CSV_HEADER).map_err(csv_error)?;
                Inner::Csv(Box::new(w))
            }
        };
        Ok(Self { inner })
    }

    pub fn write(&mut self, samples: &[QuadSample]) -> Result<()> {
        match &mut self.inner {
            Inner::Binary(w) => {
                let mut buf = Vec::with_capacity(samples.len() * RECORD_BYTES);
                for s in samples {
                    for v in fields(s) {
                        buf.extend_from_slice(&v.to_le_bytes());
                    }
                }
                w.write_all(&buf)?;
            }
            Inner::Csv(w) => {
                for s in samples {
                    // `{}` on f64 is shortest round-trip
                    w.write_record(fields(s).map(|v| v.to_string())).map_err(csv_error)?;
                }
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<W> {
        match self.inner {
            Inner::Binary(mut w) => {
                w.flush()?;
                Ok(w)
            }
            Inner::Csv(w) => w.into_inner().map_err(|e| Error::Io(e.into_error())),
        }
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    let msg = e.to_string();
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        _ => Error::Dump(msg),
    }
}

pub fn write_dump<W: Write>(writer: W, format: DumpFormat, samples: &[QuadSample]) -> Result<W> {
    let mut w = DumpWriter::new(writer, format)?;
    w.write(samples)?;
    w.finish()
}

/// Decode a binary dump. The length must be a multiple of the record size.
pub fn read_binary(bytes: &[u8]) -> Result<Vec<QuadSample>> {
    if !bytes.len().is_multiple_of(RECORD_BYTES) {
        return Err(Error::Dump(format!(
            "binary dump of {} bytes is not a whole number of {RECORD_BYTES}-byte records",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(RECORD_BYTES)
        .enumerate()
        .map(|(i, rec)| {
            let mut f = [0.0; 8];
            for (v, b) in f.iter_mut().zip(rec.chunks_exact(8)) {
                *v = f64::from_le_bytes(b.try_into().expect("8-byte chunk"));
            }
            from_fields(f, i)
        })
        .collect()
}

/// Decode a CSV dump with the standard header.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<QuadSample>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = r.headers().map_err(csv_error)?;
    if header.iter().map(str::trim).ne(CSV_HEADER) {
        return Err(Error::Dump(format!("unexpected CSV header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        if rec.len() != 8 {
            return Err(Error::Dump(format!("record {i} has {} fields, expected 8", rec.len())));
        }
        let mut f = [0.0; 8];
        for (v, field) in f.iter_mut().zip(rec.iter()) {
            *v = field
                .trim()
                .parse()
                .map_err(|_| Error::Dump(format!("record {i}: cannot parse {field:?}")))?;
        }
        out.push(from_fields(f, i)?);
    }
    Ok(out)
}

pub fn read_dump(bytes: &[u8], format: DumpFormat) -> Result<Vec<QuadSample>> {
    match format {
        DumpFormat::Binary => read_binary(bytes),
        DumpFormat::Csv => read_csv(bytes),
    }
}
