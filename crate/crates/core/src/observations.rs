//! Sampled index sets and the Poisson counts observed on them.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OBSERVATION_CSV_HEADER: &str = "i,j,y";

/// One observed cell: zero-based indices and a count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub i: usize,
    pub j: usize,
    pub y: u64,
}

/// The sampled index set, stored in row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    d1: usize,
    d2: usize,
    cells: Vec<(usize, usize)>,
}

impl Mask {
    pub fn new(d1: usize, d2: usize, mut cells: Vec<(usize, usize)>) -> Result<Self> {
        cells.sort_unstable();
        for w in cells.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateObservation {
                    i: w[0].0,
                    j: w[0].1,
                });
            }
        }
        if let Some(&(i, j)) = cells.iter().find(|&&(i, j)| i >= d1 || j >= d2) {
            return Err(Error::IndexOutOfRange { i, j, d1, d2 });
        }
        Ok(Self { d1, d2, cells })
    }

    pub fn full(d1: usize, d2: usize) -> Self {
        let cells = (0..d1).flat_map(|i| (0..d2).map(move |j| (i, j))).collect();
        Self { d1, d2, cells }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.d1, self.d2)
    }

    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Row-major membership flags, `d1 * d2` long.
    pub fn to_dense(&self) -> Vec<bool> {
        let mut dense = vec![false; self.d1 * self.d2];
        for &(i, j) in &self.cells {
            dense[i * self.d2 + j] = true;
        }
        dense
    }
}

/// Observed counts `Y_ij` on the index set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    d1: usize,
    d2: usize,
    samples: Vec<Observation>,
    /// Expected size of the index set under the sampling model.
    m_expected: f64,
}

impl ObservationSet {
    pub fn new(d1: usize, d2: usize, mut samples: Vec<Observation>, m_expected: f64) -> Result<Self> {
        if d1 == 0 || d2 == 0 {
            return Err(Error::BadShape(format!("{d1}x{d2}")));
        }
        samples.sort_unstable_by_key(|o| (o.i, o.j));
        for w in samples.windows(2) {
            if (w[0].i, w[0].j) == (w[1].i, w[1].j) {
                return Err(Error::DuplicateObservation { i: w[0].i, j: w[0].j });
            }
        }
        if let Some(o) = samples.iter().find(|o| o.i >= d1 || o.j >= d2) {
            return Err(Error::IndexOutOfRange {
                i: o.i,
                j: o.j,
                d1,
                d2,
            });
        }
        Ok(Self {
            d1,
            d2,
            samples,
            m_expected,
        })
    }

    /// Builds a set whose expected size is taken to be its realized size.
    pub fn from_samples(d1: usize, d2: usize, samples: Vec<Observation>) -> Result<Self> {
        let m = samples.len() as f64;
        Self::new(d1, d2, samples, m)
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.d1, self.d2)
    }

    pub fn samples(&self) -> &[Observation] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn m_expected(&self) -> f64 {
        self.m_expected
    }

    pub fn mask(&self) -> Mask {
        Mask {
            d1: self.d1,
            d2: self.d2,
            cells: self.samples.iter().map(|o| (o.i, o.j)).collect(),
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(16 * (self.samples.len() + 1));
        out.push_str(OBSERVATION_CSV_HEADER);
        out.push('\n');
        for o in &self.samples {
            out.push_str(&format!("{},{},{}\n", o.i, o.j, o.y));
        }
        out
    }

    /// Parses the `i,j,y` format. Without an explicit shape the matrix is
    /// sized to the largest index seen.
    pub fn from_csv_reader(reader: impl Read, shape: Option<(usize, usize)>) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::CorruptFile("empty observation file".into()))?;
        let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
        if cols != ["i", "j", "y"] {
            return Err(Error::CorruptFile(format!(
                "expected header {OBSERVATION_CSV_HEADER:?}, found {:?}",
                header.trim()
            )));
        }
        let mut samples = Vec::new();
        let mut seen = HashSet::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::CorruptFile(format!("line {}: {:?}", n + 2, line));
            let mut it = line.split(',').map(str::trim);
            let i = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            let j = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            let y = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            if it.next().is_some() {
                return Err(bad());
            }
            if !seen.insert((i, j)) {
                return Err(Error::DuplicateObservation { i, j });
            }
            samples.push(Observation { i, j, y });
        }
        let (d1, d2) = match shape {
            Some(s) => s,
            None => (
                samples.iter().map(|o| o.i + 1).max().unwrap_or(0),
                samples.iter().map(|o| o.j + 1).max().unwrap_or(0),
            ),
        };
        Self::from_samples(d1, d2, samples)
    }

    pub fn read_csv(path: impl AsRef<Path>, shape: Option<(usize, usize)>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?, shape)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}
