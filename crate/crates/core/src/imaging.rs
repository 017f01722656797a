//! Patch matrices built from grayscale images, and image file I/O.
//!
//! Patches are traversed row-major across the image, and each patch is
//! vectorized row-major into one column of the matrix.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Svd;
use crate::matrix::IntensityMatrix;
use crate::observations::Mask;

/// Row-major grid of grayscale values.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::BadShape(format!("{height}x{width}")));
        }
        if pixels.len() != height * width {
            return Err(Error::BadShape(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        if let Some(k) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                i: k / width,
                j: k % width,
            });
        }
        Ok(Self { height, width, pixels })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let pixels = (0..height * width).map(|k| f(k / width, k % width)).collect();
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.height, self.width, self.pixels.iter().map(|&v| f(v)).collect())
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn to_matrix(&self) -> IntensityMatrix {
        IntensityMatrix::from_matrix_unchecked(DMatrix::from_row_slice(self.height, self.width, &self.pixels))
    }

    pub fn from_matrix(m: &IntensityMatrix) -> Self {
        let (h, w) = m.shape();
        let pixels = (0..h * w).map(|k| m.get(k / w, k % w)).collect();
        Self {
            height: h,
            width: w,
            pixels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchLayout {
    pub image_h: usize,
    pub image_w: usize,
    pub patch_h: usize,
    pub patch_w: usize,
}

impl PatchLayout {
    pub fn new(image_h: usize, image_w: usize, patch_h: usize, patch_w: usize) -> Result<Self> {
        let layout = Self {
            image_h,
            image_w,
            patch_h,
            patch_w,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.patch_h > 0
            && self.patch_w > 0
            && self.image_h > 0
            && self.image_w > 0
            && self.image_h.is_multiple_of(self.patch_h)
            && self.image_w.is_multiple_of(self.patch_w);
        if ok {
            Ok(())
        } else {
            Err(Error::IndivisibleLayout {
                image_h: self.image_h,
                image_w: self.image_w,
                patch_h: self.patch_h,
                patch_w: self.patch_w,
            })
        }
    }

    /// `(patch_h * patch_w, number of patches)`.
    pub fn matrix_shape(&self) -> (usize, usize) {
        (
            self.patch_h * self.patch_w,
            (self.image_h / self.patch_h) * (self.image_w / self.patch_w),
        )
    }

    /// Image coordinates of matrix cell `(row, col)`.
    pub fn pixel_of(&self, row: usize, col: usize) -> (usize, usize) {
        let per_row = self.image_w / self.patch_w;
        let (pr, pc) = (col / per_row, col % per_row);
        let (a, b) = (row / self.patch_w, row % self.patch_w);
        (pr * self.patch_h + a, pc * self.patch_w + b)
    }
}

/// Column `p` holds patch `p` flattened row-major.
pub fn patchify(image: &Image, layout: &PatchLayout) -> Result<IntensityMatrix> {
    layout.validate()?;
    if (image.height, image.width) != (layout.image_h, layout.image_w) {
        return Err(Error::ShapeMismatch {
            expected: (layout.image_h, layout.image_w),
            got: (image.height, image.width),
        });
    }
    let (rows, cols) = layout.matrix_shape();
    let m = DMatrix::from_fn(rows, cols, |r, c| {
        let (i, j) = layout.pixel_of(r, c);
        image.get(i, j)
    });
    Ok(IntensityMatrix::from_matrix_unchecked(m))
}

/// Exact inverse of [`patchify`].
pub fn unpatchify(m: &IntensityMatrix, layout: &PatchLayout) -> Result<Image> {
    layout.validate()?;
    m.ensure_shape(layout.matrix_shape())?;
    let mut pixels = vec![0.0; layout.image_h * layout.image_w];
    let (rows, cols) = layout.matrix_shape();
    for c in 0..cols {
        for r in 0..rows {
            let (i, j) = layout.pixel_of(r, c);
            pixels[i * layout.image_w + j] = m.get(r, c);
        }
    }
    Image::new(layout.image_h, layout.image_w, pixels)
}

/// Zeroes every pixel whose patch-matrix cell is absent from `mask`.
pub fn mask_overlay(image: &Image, mask: &Mask, layout: &PatchLayout) -> Result<Image> {
    let m = patchify(image, layout)?;
    if mask.shape() != m.shape() {
        return Err(Error::ShapeMismatch {
            expected: m.shape(),
            got: mask.shape(),
        });
    }
    let keep = mask.to_dense();
    let (_, cols) = m.shape();
    let masked = DMatrix::from_fn(m.d1(), cols, |r, c| if keep[r * cols + c] { m.get(r, c) } else { 0.0 });
    unpatchify(&IntensityMatrix::from_matrix_unchecked(masked), layout)
}

/// Poisson rates from pixel values: `max(scale * pixel, beta)`.
pub fn lift_intensities(image: &Image, beta: f64, scale: f64) -> Result<Image> {
    image.map(|v| (scale * v).max(beta))
}

/// Linear map of `[beta, alpha]` onto `0..=maxval`, rounding half up.
/// Values outside the interval saturate.
pub fn to_display(image: &Image, beta: f64, alpha: f64, maxval: u16) -> Result<Image> {
    let top = maxval as f64;
    image.map(|v| {
        if alpha > beta {
            let t = (v.clamp(beta, alpha) - beta) / (alpha - beta);
            (t * top + 0.5).floor().min(top)
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmEncoding {
    /// `P2`.
    Ascii,
    /// `P5`.
    Binary,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptFile(msg.into())
}

/// Reads the whitespace-separated header fields, skipping `#` comments.
/// Leaves the reader positioned after the single whitespace byte that
/// ends the header.
fn read_header_tokens(r: &mut impl BufRead, count: usize) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(corrupt("unexpected end of PGM header"));
        }
        let b = byte[0];
        if b == b'#' && cur.is_empty() {
            let mut skip = Vec::new();
            r.read_until(b'\n', &mut skip)?;
            continue;
        }
        if b.is_ascii_whitespace() {
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
                if tokens.len() == count {
                    return Ok(tokens);
                }
            }
        } else {
            cur.push(b as char);
        }
    }
}

pub fn read_pgm(reader: impl Read) -> Result<Image> {
    let mut r = BufReader::new(reader);
    let mut magic = [0u8; 2];
    r.read_exact(&mut magic).map_err(|_| corrupt("missing PGM magic number"))?;
    let encoding = match &magic {
        b"P2" => PgmEncoding::Ascii,
        b"P5" => PgmEncoding::Binary,
        [b'P', _] => {
            return Err(Error::UnsupportedFormat(format!(
                "Netpbm variant {} (only P2 and P5 grayscale)",
                String::from_utf8_lossy(&magic)
            )))
        }
        _ => return Err(Error::UnsupportedFormat("not a Netpbm file".into())),
    };
    let header = read_header_tokens(&mut r, 3)?;
    let parse = |s: &str, what: &str| -> Result<usize> { s.parse().map_err(|_| corrupt(format!("bad {what} {s:?}"))) };
    let width = parse(&header[0], "width")?;
    let height = parse(&header[1], "height")?;
    let maxval = parse(&header[2], "maxval")?;
    if width == 0 || height == 0 {
        return Err(corrupt(format!("empty image {width}x{height}")));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(corrupt(format!("maxval {maxval} outside 1..=65535")));
    }
    let n = width * height;
    let mut pixels = Vec::with_capacity(n);
    match encoding {
        PgmEncoding::Ascii => {
            let mut rest = String::new();
            r.read_to_string(&mut rest).map_err(|_| corrupt("non-text P2 body"))?;
            let mut body = String::new();
            for line in rest.lines() {
                body.push_str(line.split('#').next().unwrap_or(""));
                body.push(' ');
            }
            for tok in body.split_ascii_whitespace() {
                let v = parse(tok, "pixel")?;
                if v > maxval {
                    return Err(corrupt(format!("pixel {v} exceeds maxval {maxval}")));
                }
                pixels.push(v as f64);
            }
            if pixels.len() != n {
                return Err(corrupt(format!("expected {n} pixels, found {}", pixels.len())));
            }
        }
        PgmEncoding::Binary => {
            let bytes_per = if maxval < 256 { 1 } else { 2 };
            let mut raw = vec![0u8; n * bytes_per];
            r.read_exact(&mut raw).map_err(|_| corrupt("truncated P5 raster"))?;
            for chunk in raw.chunks_exact(bytes_per) {
                let v = if bytes_per == 1 {
                    chunk[0] as usize
                } else {
                    u16::from_be_bytes([chunk[0], chunk[1]]) as usize
                };
                if v > maxval {
                    return Err(corrupt(format!("pixel {v} exceeds maxval {maxval}")));
                }
                pixels.push(v as f64);
            }
        }
    }
    Image::new(height, width, pixels)
}

pub fn write_pgm(image: &Image, mut writer: impl Write, maxval: u16, encoding: PgmEncoding) -> Result<()> {
    if maxval == 0 {
        return Err(Error::PixelOutOfRange(0.0));
    }
    let mut values = Vec::with_capacity(image.pixels.len());
    for &v in &image.pixels {
        if v.fract() != 0.0 || v < 0.0 || v > maxval as f64 {
            return Err(Error::PixelOutOfRange(v));
        }
        values.push(v as u16);
    }
    let magic = match encoding {
        PgmEncoding::Ascii => "P2",
        PgmEncoding::Binary => "P5",
    };
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", image.width, image.height).into_bytes();
    match encoding {
        PgmEncoding::Ascii => {
            for row in values.chunks(image.width) {
                let line: Vec<String> = row.iter().map(u16::to_string).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
        PgmEncoding::Binary => {
            for v in values {
                if maxval < 256 {
                    out.push(v as u8);
                } else {
                    out.extend_from_slice(&v.to_be_bytes());
                }
            }
        }
    }
    writer.write_all(&out)?;
    Ok(())
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default()
}

/// Reads `.pgm` (P2 or P5) or `.csv` grids.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "pgm" | "pnm" => read_pgm(std::fs::File::open(path)?),
        "csv" => Ok(Image::from_matrix(&IntensityMatrix::read_csv(path)?)),
        other => Err(Error::UnsupportedFormat(format!("image extension {other:?}"))),
    }
}

/// Writes `.pgm` as P5 with maxval 255, or 65535 when a pixel needs it,
/// and `.csv` as plain rows.
pub fn write_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "pgm" | "pnm" => {
            let maxval = if image.max() <= 255.0 { 255 } else { 65535 };
            let mut buf = Vec::new();
            write_pgm(image, &mut buf, maxval, PgmEncoding::Binary)?;
            std::fs::write(path, buf)?;
            Ok(())
        }
        "csv" => image.to_matrix().write_csv(path),
        other => Err(Error::UnsupportedFormat(format!("image extension {other:?}"))),
    }
}

/// Rank of the synthetic solar image before quantization.
pub const SOLAR_RANK: usize = 10;
pub const SOLAR_SIZE: usize = 48;

/// Synthetic 48x48 8-bit stand-in for a solar flare frame: a bright
/// elongated core, a few flare loops and a smooth limb gradient, truncated
/// to rank 10, mapped onto `[16, 255]` and rounded.
pub fn solar_fixture() -> Result<Image> {
    let n = SOLAR_SIZE;
    // (row, col, row spread, col spread, amplitude)
    let blobs = [
        (22.0, 25.0, 5.0, 9.0, 1.0),
        (17.0, 31.0, 3.0, 3.5, 0.8),
        (29.0, 17.0, 4.0, 2.5, 0.6),
        (12.0, 12.0, 6.0, 6.0, 0.35),
        (36.0, 34.0, 5.0, 7.0, 0.45),
        (8.0, 38.0, 2.5, 4.0, 0.3),
    ];
    let raw = DMatrix::from_fn(n, n, |i, j| {
        let (y, x) = (i as f64, j as f64);
        let limb = 0.15 * (1.0 - ((y - 24.0).powi(2) + (x - 24.0).powi(2)).sqrt() / 34.0);
        let loops: f64 = blobs
            .iter()
            .map(|&(cy, cx, sy, sx, a)| a * (-0.5 * (((y - cy) / sy).powi(2) + ((x - cx) / sx).powi(2))).exp())
            .sum();
        limb + loops
    });
    let svd = Svd::new(&raw)?;
    let mut trunc = DMatrix::zeros(n, n);
    for k in 0..SOLAR_RANK.min(svd.s.len()) {
        trunc += svd.u.column(k) * svd.v_t.row(k) * svd.s[k];
    }
    let (lo, hi) = (trunc.min(), trunc.max());
    let pixels = trunc
        .transpose()
        .iter()
        .map(|&v| (16.0 + 239.0 * (v - lo) / (hi - lo)).round().clamp(0.0, 255.0))
        .collect();
    Image::new(n, n, pixels)
}
