use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"AFM1";

/// Column origin: `(channel, flat spatial position)` for conv taps, or
/// `(unit, 0)` for fc taps.
pub type Provenance = (u32, u32);

/// `n x d` feature rows tapped from a network, with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    d: usize,
    data: Vec<f32>,
    labels: Vec<u8>,
    tap: String,
    provenance: Vec<Provenance>,
}

impl FeatureMatrix {
    pub fn new(
        n: usize,
        d: usize,
        data: Vec<f32>,
        labels: Vec<u8>,
        tap: impl Into<String>,
        provenance: Vec<Provenance>,
    ) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {n}x{d} matrix",
                data.len()
            )));
        }
        if labels.len() != n {
            return Err(Error::InvalidArgument(format!("{} labels for {n} rows", labels.len())));
        }
        if provenance.len() != d {
            return Err(Error::InvalidArgument(format!(
                "{} provenance entries for {d} columns",
                provenance.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite feature at row {}, column {}",
                i / d.max(1),
                i % d.max(1)
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidArgument(format!("label {l} is not binary")));
        }
        Ok(FeatureMatrix {
            n,
            d,
            data,
            labels,
            tap: tap.into(),
            provenance,
        })
    }

    /// Matrix with trivial provenance `(j, 0)` for column `j`.
    pub fn from_rows(rows: &[Vec<f32>], labels: Vec<u8>, tap: impl Into<String>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        let provenance = (0..d as u32).map(|j| (j, 0)).collect();
        Self::new(rows.len(), d, data, labels, tap, provenance)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn tap(&self) -> &str {
        &self.tap
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn value(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.d + j]
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.contains(&0) && self.labels.contains(&1)
    }

    /// Keeps the given columns, in the given order, carrying provenance.
    pub fn select_columns(&self, columns: &[usize]) -> Result<FeatureMatrix> {
        if let Some(&c) = columns.iter().find(|&&c| c >= self.d) {
            return Err(Error::InvalidArgument(format!(
                "column {c} out of range for d = {}",
                self.d
            )));
        }
        let mut data = Vec::with_capacity(self.n * columns.len());
        for i in 0..self.n {
            let row = self.row(i);
            data.extend(columns.iter().map(|&c| row[c]));
        }
        FeatureMatrix::new(
            self.n,
            columns.len(),
            data,
            self.labels.clone(),
            self.tap.clone(),
            columns.iter().map(|&c| self.provenance[c]).collect(),
        )
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<FeatureMatrix> {
        let mut data = Vec::with_capacity(rows.len() * self.d);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.n {
                return Err(Error::InvalidArgument(format!("row {r} out of range")));
            }
            data.extend_from_slice(self.row(r));
            labels.push(self.labels[r]);
        }
        FeatureMatrix::new(
            rows.len(),
            self.d,
            data,
            labels,
            self.tap.clone(),
            self.provenance.clone(),
        )
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&(self.d as u32).to_le_bytes())?;
        w.write_all(&(self.tap.len() as u32).to_le_bytes())?;
        w.write_all(self.tap.as_bytes())?;
        for &(c, p) in &self.provenance {
            w.write_all(&c.to_le_bytes())?;
            w.write_all(&p.to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.labels)?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read, origin: &str) -> Result<FeatureMatrix> {
        let bad = |reason: &str| Error::format(origin, reason);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic, expected AFM1"));
        }
        let mut read_u32 = |what: &str| -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)
                .map_err(|_| bad(&format!("truncated while reading {what}")))?;
            Ok(u32::from_le_bytes(b))
        };
        let n = read_u32("n")? as usize;
        let d = read_u32("d")? as usize;
        let tap_len = read_u32("tap length")? as usize;
        if tap_len > 4096 {
            return Err(bad("tap name length implausible"));
        }
        let mut provenance_raw = Vec::new();
        let mut tap = vec![0u8; tap_len];
        let mut rest = Vec::new();
        r.read_exact(&mut tap).map_err(|_| bad("truncated tap name"))?;
        let tap = String::from_utf8(tap).map_err(|_| bad("tap name is not UTF-8"))?;
        r.read_to_end(&mut rest)?;
        let need = d * 8 + n * d * 4 + n;
        if rest.len() != need {
            return Err(bad(&format!("payload is {} bytes, header implies {need}", rest.len())));
        }
        let (prov, rest) = rest.split_at(d * 8);
        for chunk in prov.chunks_exact(8) {
            provenance_raw.push((
                u32::from_le_bytes(chunk[..4].try_into().unwrap()),
                u32::from_le_bytes(chunk[4..].try_into().unwrap()),
            ));
        }
        let (values, labels) = rest.split_at(n * d * 4);
        let data = values
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        FeatureMatrix::new(n, d, data, labels.to_vec(), tap, provenance_raw).map_err(|e| bad(&e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let r = BufReader::new(File::open(path)?);
        Self::read_from(r, &path.display().to_string())
    }
}
