//! Dense intensity matrices and the elementary metrics on them.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::region::FeasibleRegion;

/// A dense `d1 x d2` grid of finite reals.
///
/// Holds the truth `M`, estimates, solver iterates and gradients alike.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMatrix(DMatrix<f64>);

impl IntensityMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        for j in 0..values.ncols() {
            for i in 0..values.nrows() {
                if !values[(i, j)].is_finite() {
                    return Err(Error::NonFinite { i, j });
                }
            }
        }
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::BadShape(format!(
                "matrix must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        Ok(Self(values))
    }

    /// Wraps values already known to be finite.
    pub(crate) fn from_matrix_unchecked(values: DMatrix<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self(values)
    }

    pub fn constant(d1: usize, d2: usize, value: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(d1, d2, value))
    }

    pub fn from_fn(d1: usize, d2: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(d1, d2, f))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d1 = rows.len();
        let d2 = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d2) {
            return Err(Error::BadShape(format!(
                "ragged rows: expected {d2} columns, found {}",
                bad.len()
            )));
        }
        Self::new(DMatrix::from_fn(d1, d2, |i, j| rows[i][j]))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.d1())
            .map(|i| (0..self.d2()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn d1(&self) -> usize {
        self.0.nrows()
    }

    pub fn d2(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn nuclear_norm(&self) -> Result<f64> {
        linalg::nuclear_norm(&self.0)
    }

    pub fn ensure_shape(&self, expected: (usize, usize)) -> Result<()> {
        if self.shape() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                got: self.shape(),
            });
        }
        Ok(())
    }

    /// Frobenius distance to `other`.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        other.ensure_shape(self.shape())?;
        Ok((&self.0 - &other.0).norm())
    }

    /// Serializes as comma-separated rows without a header.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for i in 0..self.d1() {
            for j in 0..self.d2() {
                if j > 0 {
                    out.push(',');
                }
                // `{}` on f64 prints the shortest round-tripping form.
                write!(out, "{}", self.0[(i, j)]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|_| {
                        Error::CorruptFile(format!(
                            "line {}: cannot parse {:?} as a number",
                            lineno + 1,
                            tok
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::CorruptFile("empty matrix file".into()));
        }
        Self::from_rows(&rows).map_err(|e| match e {
            Error::BadShape(msg) => Error::CorruptFile(msg),
            other => other,
        })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }
}

impl From<IntensityMatrix> for DMatrix<f64> {
    fn from(m: IntensityMatrix) -> Self {
        m.0
    }
}

/// `||a - b||_F^2 / (d1 d2)`.
pub fn mse_per_entry(a: &IntensityMatrix, b: &IntensityMatrix) -> Result<f64> {
    b.ensure_shape(a.shape())?;
    let sum: f64 = a
        .0
        .iter()
        .zip(b.0.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / (a.d1() * a.d2()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MembershipReport {
    pub in_box: bool,
    pub in_nuclear_ball: bool,
    pub nuclear_norm: f64,
}

impl MembershipReport {
    pub fn feasible(&self) -> bool {
        self.in_box && self.in_nuclear_ball
    }
}

/// Checks `x` against the box and the nuclear ball of `region`, each with
/// absolute slack `tol`.
pub fn membership(x: &IntensityMatrix, region: &FeasibleRegion, tol: f64) -> Result<MembershipReport> {
    x.ensure_shape(region.shape())?;
    if !(tol >= 0.0) {
        return Err(Error::NonPositiveParameter(tol));
    }
    let lo = region.beta - tol;
    let hi = region.alpha + tol;
    let in_box = x.0.iter().all(|&v| v >= lo && v <= hi);
    let nuclear_norm = x.nuclear_norm()?;
    Ok(MembershipReport {
        in_box,
        in_nuclear_ball: nuclear_norm <= region.nuclear_radius() + tol,
        nuclear_norm,
    })
}
