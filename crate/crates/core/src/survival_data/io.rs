use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ShapeBuilder};

use super::SurvivalDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// First eight bytes of the binary columnar format.
pub const BINARY_MAGIC: &[u8; 8] = b"HZSCRN01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    Csv,
    BinaryColumnar,
}

impl DataFormat {
    /// `.bin`/`.hzs` files are binary, everything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("hzs") => DataFormat::BinaryColumnar,
            _ => DataFormat::Csv,
        }
    }
}

struct RawData {
    times: Vec<f64>,
    events: Vec<bool>,
    features: Array2<f64>,
    names: Vec<String>,
}

/// Reads, validates and standardizes a dataset.
///
/// CSV files need a header `time,status,<feature names...>`; status must be
/// 0 or 1.
pub fn load_dataset<F: Scalar>(path: impl AsRef<Path>, format: DataFormat) -> Result<SurvivalDataset<F>> {
    let raw = match format {
        DataFormat::Csv => read_csv(path.as_ref())?,
        DataFormat::BinaryColumnar => read_binary(path.as_ref())?,
    };
    SurvivalDataset::builder(raw.times.into_iter().map(F::lit).collect(), raw.events, raw.features.mapv(F::lit))
        .names(raw.names)
        .build()
}

fn read_csv(path: &Path) -> Result<RawData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.len() < 3 {
        return Err(Error::Parse {
            line: 1,
            row: 0,
            msg: "header must be time,status followed by at least one feature".into(),
        });
    }
    if !header[0].eq_ignore_ascii_case("time") || !header[1].eq_ignore_ascii_case("status") {
        return Err(Error::Parse {
            line: 1,
            row: 0,
            msg: format!("expected header to start with time,status, found {},{}", &header[0], &header[1]),
        });
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_owned).collect();
    let p = names.len();
    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut values = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r as u64 + 1;
        let rec = rec.map_err(|e| {
            let line = e.position().map(|pos| pos.line()).unwrap_or(row + 1);
            Error::Parse { line, row, msg: e.to_string() }
        })?;
        let line = rec.position().map(|pos| pos.line()).unwrap_or(row + 1);
        let bad = |msg: String| Error::Parse { line, row, msg };
        if rec.len() != p + 2 {
            return Err(bad(format!("expected {} fields, found {}", p + 2, rec.len())));
        }
        let num = |k: usize| -> Result<f64> {
            let v: f64 = rec[k].parse().map_err(|_| bad(format!("field {} ({:?}) is not a number", k + 1, &rec[k])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("field {} is not finite", k + 1)))
            }
        };
        let t = num(0)?;
        if t < 0.0 {
            return Err(Error::Domain(format!("negative time {t} at row {row} (line {line})")));
        }
        let status = match num(1)? {
            0.0 => false,
            1.0 => true,
            s => return Err(bad(format!("status must be 0 or 1, found {s}"))),
        };
        times.push(t);
        events.push(status);
        for k in 0..p {
            values.push(num(k + 2)?);
        }
    }
    let n = times.len();
    let features = Array2::from_shape_vec((n, p), values).expect("row-major buffer matches shape");
    Ok(RawData { times, events, features, names })
}

fn read_binary(path: &Path) -> Result<RawData> {
    let mut rdr = BufReader::new(File::open(path)?);
    let mut header = [0u8; 16];
    rdr.read_exact(&mut header)?;
    if &header[..8] != BINARY_MAGIC {
        return Err(Error::Parse { line: 0, row: 0, msg: "bad magic in binary dataset header".into() });
    }
    let n = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;
    let p = u32::from_le_bytes(header[12..16].try_into().expect("4 bytes")) as usize;
    let mut read_col = |len: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; len * 8];
        rdr.read_exact(&mut buf)?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    };
    let times = read_col(n)?;
    let status = read_col(n)?;
    let block = read_col(n * p)?;
    let mut events = Vec::with_capacity(n);
    for (i, (&t, &s)) in times.iter().zip(&status).enumerate() {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Domain(format!("invalid time {t} at row {}", i + 1)));
        }
        events.push(match s {
            0.0 => false,
            1.0 => true,
            s => {
                return Err(Error::Parse {
                    line: 0,
                    row: i as u64 + 1,
                    msg: format!("status must be 0 or 1, found {s}"),
                })
            }
        });
    }
    let features = Array2::from_shape_vec((n, p).f(), block).expect("column-major buffer matches shape");
    let names = (1..=p).map(|j| format!("f{j}")).collect();
    Ok(RawData { times, events, features, names })
}

/// Writes `time,status,<names>` CSV of the dataset's (standardized) values.
pub fn write_csv<F: Scalar>(ds: &SurvivalDataset<F>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["time".to_string(), "status".to_string()];
    header.extend(ds.names().iter().cloned());
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec = vec![ds.times()[i].as_f64().to_string(), (ds.events()[i] as u8).to_string()];
        rec.extend((0..ds.p()).map(|j| ds.features()[[i, j]].as_f64().to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the binary columnar format: 16-byte header (magic, n, p as
/// little-endian u32), then times, status, and the column-major feature
/// block, all little-endian f64.
pub fn write_binary<F: Scalar>(ds: &SurvivalDataset<F>, path: impl AsRef<Path>) -> Result<()> {
    let n = u32::try_from(ds.n()).map_err(|_| Error::InvalidArgument("n exceeds u32".into()))?;
    let p = u32::try_from(ds.p()).map_err(|_| Error::InvalidArgument("p exceeds u32".into()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&p.to_le_bytes())?;
    for &t in ds.times() {
        w.write_all(&t.as_f64().to_le_bytes())?;
    }
    for &e in ds.events() {
        w.write_all(&(if e { 1.0f64 } else { 0.0 }).to_le_bytes())?;
    }
    for j in 0..ds.p() {
        for &v in ds.feature_slice(j) {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}
