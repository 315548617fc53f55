//! Binary record and feature containers.
//!
//! Both share one layout, all little-endian: a 4-byte magic, u16 format
//! version, u32 dimensions, the f32 payload in row-major order, one u8 label
//! per record or row, and a trailer.
//!
//! * `UWBR` (raw records): dims `(records, frames, bins)`; the trailer is the
//!   u8 stage tag of the matrices followed by one u8 scenario tag per record.
//! * `UWBF` (features): dims `(rows, columns)`; the trailer is the u16
//!   feature layout version followed by one u8 scenario tag per row.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use byteorder::{ReadBytesExt, WriteBytesExt, LE};
use ctfdbf_core::preprocess::Stage;
use ctfdbf_core::sim::Scenario;
use ndarray::Array2;

use crate::error::{format_err, Error, Result};

pub const RECORD_MAGIC: &[u8; 4] = b"UWBR";
pub const FEATURE_MAGIC: &[u8; 4] = b"UWBF";
pub const CONTAINER_VERSION: u16 = 1;

fn eof(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        format_err("truncated container")
    } else {
        Error::Io(e)
    }
}

fn dim(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| format_err(format!("dimension {n} exceeds u32")))
}

fn write_f32s<W: Write>(w: &mut W, values: impl IntoIterator<Item = f64>) -> Result<()> {
    let mut buf = Vec::new();
    for v in values {
        buf.write_f32::<LE>(v as f32)?;
    }
    Ok(w.write_all(&buf)?)
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0f32; n];
    r.read_f32_into::<LE>(&mut buf).map_err(eof)?;
    Ok(buf.into_iter().map(f64::from).collect())
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 4], n_dims: usize) -> Result<Vec<usize>> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m).map_err(eof)?;
    if &m != magic {
        return Err(format_err(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.read_u16::<LE>().map_err(eof)?;
    if version != CONTAINER_VERSION {
        return Err(format_err(format!("unsupported container version {version}")));
    }
    (0..n_dims).map(|_| Ok(r.read_u32::<LE>().map_err(eof)? as usize)).collect()
}

fn scenario_tags<R: Read>(r: &mut R, n: usize) -> Result<Vec<Scenario>> {
    let mut tags = vec![0u8; n];
    r.read_exact(&mut tags).map_err(eof)?;
    tags.iter()
        .map(|&t| Scenario::from_tag(t).ok_or_else(|| format_err(format!("unknown scenario tag {t}"))))
        .collect()
}

/// Total container size implied by the header, or a format error on overflow.
fn expected_len(header: u64, cells: &[usize], rows: usize, trailer: u64) -> Result<u64> {
    cells
        .iter()
        .try_fold(4u64, |acc, &d| acc.checked_mul(d as u64))
        .and_then(|payload| header.checked_add(payload))
        .and_then(|n| n.checked_add(2 * rows as u64 + trailer))
        .ok_or_else(|| format_err("container dimensions overflow"))
}

/// Streams records into a `UWBR` container; the count is fixed up front.
pub struct RecordWriter<W: Write> {
    out: W,
    records: usize,
    frames: usize,
    bins: usize,
    stage: Stage,
    labels: Vec<u8>,
    scenarios: Vec<u8>,
}

impl RecordWriter<BufWriter<File>> {
    pub fn create(path: &Path, records: usize, frames: usize, bins: usize, stage: Stage) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), records, frames, bins, stage)
    }
}

impl<W: Write> RecordWriter<W> {
    pub fn new(mut out: W, records: usize, frames: usize, bins: usize, stage: Stage) -> Result<Self> {
        out.write_all(RECORD_MAGIC)?;
        out.write_u16::<LE>(CONTAINER_VERSION)?;
        for d in [records, frames, bins] {
            out.write_u32::<LE>(dim(d)?)?;
        }
        Ok(Self { out, records, frames, bins, stage, labels: Vec::new(), scenarios: Vec::new() })
    }

    pub fn push(&mut self, data: &Array2<f64>, label: u8, scenario: Scenario) -> Result<()> {
        if data.dim() != (self.frames, self.bins) {
            return Err(format_err(format!(
                "record is {:?}, container holds {}x{}",
                data.dim(),
                self.frames,
                self.bins
            )));
        }
        if self.labels.len() == self.records {
            return Err(format_err(format!("container already holds {} records", self.records)));
        }
        write_f32s(&mut self.out, data.iter().copied())?;
        self.labels.push(label);
        self.scenarios.push(scenario.tag());
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.labels.len() != self.records {
            return Err(format_err(format!("wrote {} of {} records", self.labels.len(), self.records)));
        }
        self.out.write_all(&self.labels)?;
        self.out.write_u8(self.stage.tag())?;
        self.out.write_all(&self.scenarios)?;
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Reads a `UWBR` container one record at a time.
pub struct RecordReader<R> {
    input: R,
    pub records: usize,
    pub frames: usize,
    pub bins: usize,
    pub stage: Stage,
    pub labels: Vec<u8>,
    pub scenarios: Vec<Scenario>,
    next: usize,
}

impl RecordReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read + Seek> RecordReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let d = read_header(&mut input, RECORD_MAGIC, 3)?;
        let (records, frames, bins) = (d[0], d[1], d[2]);
        let header = 4 + 2 + 12;
        let total = expected_len(header, &[records, frames, bins], records, 1)?;
        let actual = input.seek(SeekFrom::End(0))?;
        if actual != total {
            return Err(format_err(format!("container is {actual} bytes, header implies {total}")));
        }
        input.seek(SeekFrom::Start(total - 2 * records as u64 - 1))?;
        let mut labels = vec![0u8; records];
        input.read_exact(&mut labels).map_err(eof)?;
        let tag = input.read_u8().map_err(eof)?;
        let stage = Stage::from_tag(tag).ok_or_else(|| format_err(format!("unknown stage tag {tag}")))?;
        let scenarios = scenario_tags(&mut input, records)?;
        input.seek(SeekFrom::Start(header))?;
        Ok(Self { input, records, frames, bins, stage, labels, scenarios, next: 0 })
    }

    /// The next record with its label and scenario, or `None` at the end.
    pub fn next_record(&mut self) -> Option<Result<(Array2<f64>, u8, Scenario)>> {
        if self.next == self.records {
            return None;
        }
        let i = self.next;
        self.next += 1;
        Some(read_f32s(&mut self.input, self.frames * self.bins).map(|v| {
            let data = Array2::from_shape_vec((self.frames, self.bins), v).expect("length matches dims");
            (data, self.labels[i], self.scenarios[i])
        }))
    }
}

/// Hybrid feature rows with their labels and scenarios.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
    pub scenarios: Vec<Scenario>,
    pub layout_version: u16,
}

impl FeatureTable {
    pub fn new(features: Array2<f64>, labels: Vec<u8>, scenarios: Vec<Scenario>, layout_version: u16) -> Result<Self> {
        if labels.len() != features.nrows() || scenarios.len() != features.nrows() {
            return Err(format_err("labels and scenarios must match the row count"));
        }
        Ok(Self { features, labels, scenarios, layout_version })
    }

    pub fn rows_of(&self, scenario: Scenario) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.scenarios[i] == scenario).collect()
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let (rows, cols) = self.features.dim();
        w.write_all(FEATURE_MAGIC)?;
        w.write_u16::<LE>(CONTAINER_VERSION)?;
        w.write_u32::<LE>(dim(rows)?)?;
        w.write_u32::<LE>(dim(cols)?)?;
        write_f32s(&mut w, self.features.iter().copied())?;
        w.write_all(&self.labels)?;
        w.write_u16::<LE>(self.layout_version)?;
        let tags: Vec<u8> = self.scenarios.iter().map(|s| s.tag()).collect();
        w.write_all(&tags)?;
        Ok(w.flush()?)
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let d = read_header(&mut r, FEATURE_MAGIC, 2)?;
        let (rows, cols) = (d[0], d[1]);
        expected_len(14, &[rows, cols], rows, 2)?;
        let values = read_f32s(&mut r, rows * cols)?;
        let features = Array2::from_shape_vec((rows, cols), values).expect("length matches dims");
        let mut labels = vec![0u8; rows];
        r.read_exact(&mut labels).map_err(eof)?;
        let layout_version = r.read_u16::<LE>().map_err(eof)?;
        let scenarios = scenario_tags(&mut r, rows)?;
        if r.read(&mut [0u8])? != 0 {
            return Err(format_err("trailing bytes after feature container"));
        }
        Self::new(features, labels, scenarios, layout_version)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }

    /// One row per sample: label, scenario, then the named features.
    pub fn write_csv<W: Write>(&self, w: W, names: &[String]) -> Result<()> {
        if names.len() != self.features.ncols() {
            return Err(format_err(format!("{} names for {} columns", names.len(), self.features.ncols())));
        }
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["label".to_string(), "scenario".to_string()];
        header.extend(names.iter().cloned());
        out.write_record(&header)?;
        for (i, row) in self.features.rows().into_iter().enumerate() {
            let mut rec = vec![self.labels[i].to_string(), self.scenarios[i].to_string()];
            // Values are stored as f32; print them at that precision.
            rec.extend(row.iter().map(|&v| (v as f32).to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}
