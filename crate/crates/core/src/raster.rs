//! Covariate rasters: ESRI ASCII grid I/O, pixel transformations, point
//! extraction and moving-window averaging.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointKm;

/// Regular grid with rows stored top to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub ncols: usize,
    pub nrows: usize,
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
    pub nodata: f64,
    pub values: Vec<f64>,
}

pub const DEFAULT_NODATA: f64 = -9999.0;

impl Raster {
    pub fn new(ncols: usize, nrows: usize, xll: f64, yll: f64, cellsize: f64, nodata: f64, values: Vec<f64>) -> Result<Self> {
        if !(cellsize > 0.0) {
            return Err(Error::InvalidInput("raster cellsize must be positive".into()));
        }
        if values.len() != ncols * nrows {
            return Err(Error::InvalidInput(format!(
                "raster has {} values, expected {}",
                values.len(),
                ncols * nrows
            )));
        }
        Ok(Raster {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
            nodata,
            values,
        })
    }

    /// Raster filled by evaluating `f` at every cell centre.
    pub fn from_fn(ncols: usize, nrows: usize, xll: f64, yll: f64, cellsize: f64, f: impl Fn(PointKm) -> f64) -> Self {
        let mut values = Vec::with_capacity(ncols * nrows);
        for r in 0..nrows {
            for c in 0..ncols {
                values.push(f(Raster::center_of(xll, yll, cellsize, nrows, r, c)));
            }
        }
        Raster {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
            nodata: DEFAULT_NODATA,
            values,
        }
    }

    fn center_of(xll: f64, yll: f64, cs: f64, nrows: usize, r: usize, c: usize) -> PointKm {
        PointKm::new(xll + (c as f64 + 0.5) * cs, yll + (nrows as f64 - r as f64 - 0.5) * cs)
    }

    pub fn cell_center(&self, r: usize, c: usize) -> PointKm {
        Raster::center_of(self.xll, self.yll, self.cellsize, self.nrows, r, c)
    }

    pub fn ytop(&self) -> f64 {
        self.yll + self.nrows as f64 * self.cellsize
    }

    pub fn xmax(&self) -> f64 {
        self.xll + self.ncols as f64 * self.cellsize
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata || v.is_nan()
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        let v = self.values[r * self.ncols + c];
        (!self.is_nodata(v)).then_some(v)
    }

    /// `(row, col)` of the cell containing `p`. A point on a shared edge
    /// belongs to the cell with the higher row/column index.
    pub fn cell_of(&self, p: &PointKm) -> Option<(usize, usize)> {
        let cf = ((p.x - self.xll) / self.cellsize).floor();
        let rf = ((self.ytop() - p.y) / self.cellsize).floor();
        if !(cf >= 0.0 && rf >= 0.0) || cf >= self.ncols as f64 || rf >= self.nrows as f64 {
            return None;
        }
        Some((rf as usize, cf as usize))
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(|&v| !self.is_nodata(v))
    }

    pub fn map_valid(&self, f: impl Fn(f64) -> f64) -> Raster {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            if !self.is_nodata(*v) {
                *v = f(*v);
            }
        }
        out
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().peekable();
        let mut header: [Option<f64>; 6] = [None; 6];
        const KEYS: [&str; 6] = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"];
        while let Some(&(lineno, line)) = lines.peek() {
            let mut parts = line.split_whitespace();
            let Some(key) = parts.next() else {
                lines.next();
                continue;
            };
            let key = key.to_ascii_lowercase();
            let Some(slot) = KEYS.iter().position(|k| *k == key) else {
                if key.parse::<f64>().is_err() {
                    return Err(Error::parse(source, lineno + 1, format!("unknown header key `{key}`")));
                }
                break;
            };
            let value = parts
                .next()
                .ok_or_else(|| Error::parse(source, lineno + 1, format!("missing value for `{key}`")))?
                .parse::<f64>()
                .map_err(|e| Error::parse(source, lineno + 1, e.to_string()))?;
            header[slot] = Some(value);
            lines.next();
        }
        let need = |k: usize| header[k].ok_or_else(|| Error::parse(source, 0, format!("missing header `{}`", KEYS[k])));
        let ncols = need(0)?;
        let nrows = need(1)?;
        if ncols < 0.0 || nrows < 0.0 || ncols.fract() != 0.0 || nrows.fract() != 0.0 {
            return Err(Error::parse(source, 0, "ncols/nrows must be non-negative integers"));
        }
        let (ncols, nrows) = (ncols as usize, nrows as usize);
        let (xll, yll, cellsize) = (need(2)?, need(3)?, need(4)?);
        let nodata = header[5].unwrap_or(DEFAULT_NODATA);
        let mut values = Vec::with_capacity(ncols * nrows);
        for (lineno, line) in lines {
            for tok in line.split_whitespace() {
                values.push(
                    tok.parse::<f64>()
                        .map_err(|e| Error::parse(source, lineno + 1, format!("`{tok}`: {e}")))?,
                );
            }
        }
        if values.len() != ncols * nrows {
            return Err(Error::parse(
                source,
                0,
                format!("expected {} values ({} × {}), found {}", ncols * nrows, ncols, nrows, values.len()),
            ));
        }
        Raster::new(ncols, nrows, xll, yll, cellsize, nodata, values).map_err(|e| Error::parse(source, 0, e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 8 + 128);
        let _ = writeln!(out, "ncols {}", self.ncols);
        let _ = writeln!(out, "nrows {}", self.nrows);
        let _ = writeln!(out, "xllcorner {}", self.xll);
        let _ = writeln!(out, "yllcorner {}", self.yll);
        let _ = writeln!(out, "cellsize {}", self.cellsize);
        let _ = writeln!(out, "NODATA_value {}", self.nodata);
        for r in 0..self.nrows {
            let row = &self.values[r * self.ncols..(r + 1) * self.ncols];
            for (c, v) in row.iter().enumerate() {
                if c > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Raster::parse(&text, &path.display().to_string())
}

pub fn write_raster(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_atomic(path, raster.to_text().as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    /// `log(1 + x)` then centre and scale by the population standard
    /// deviation over all valid pixels.
    Log1pStandardize,
    /// `(x − min) / (max − min)`.
    UnitScale,
    None,
}

impl std::str::FromStr for TransformKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log1p-standardize" | "log1p" => Ok(TransformKind::Log1pStandardize),
            "unit-scale" | "unit" => Ok(TransformKind::UnitScale),
            "none" => Ok(TransformKind::None),
            other => Err(Error::InvalidInput(format!("unknown transform `{other}`"))),
        }
    }
}

pub fn transform(raster: &Raster, kind: TransformKind) -> Result<Raster> {
    match kind {
        TransformKind::None => Ok(raster.clone()),
        TransformKind::Log1pStandardize => {
            if raster.valid_values().any(|v| v < 0.0) {
                return Err(Error::InvalidInput("log1p transform needs non-negative values".into()));
            }
            let logged = raster.map_valid(f64::ln_1p);
            let n = logged.valid_values().count() as f64;
            let mean = logged.valid_values().sum::<f64>() / n;
            let var = logged.valid_values().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if !(var > 0.0) {
                return Err(Error::InvalidInput("zero variance raster cannot be standardised".into()));
            }
            let sd = var.sqrt();
            Ok(logged.map_valid(|v| (v - mean) / sd))
        }
        TransformKind::UnitScale => {
            let (lo, hi) = raster
                .valid_values()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if !(hi > lo) {
                return Err(Error::InvalidInput("unit-scale needs max > min".into()));
            }
            Ok(raster.map_valid(|v| (v - lo) / (hi - lo)))
        }
    }
}

/// Value of the cell containing each point; `None` for nodata or outside.
pub fn extract(raster: &Raster, points: &[PointKm]) -> Vec<Option<f64>> {
    points.iter().map(|p| extract_point(raster, p)).collect()
}

pub fn extract_point(raster: &Raster, p: &PointKm) -> Option<f64> {
    let (r, c) = raster.cell_of(p)?;
    raster.get(r, c)
}

/// Mean of valid cells whose centres fall in the `window × window` square
/// centred on `p`. When no centre falls in the window (only possible for
/// windows narrower than a cell) the containing cell's value is used.
pub fn window_average_point(raster: &Raster, p: &PointKm, window: f64) -> Option<f64> {
    let half = 0.5 * window;
    let cs = raster.cellsize;
    // columns whose centre x lies in [p.x - half, p.x + half]
    let c0 = ((p.x - half - raster.xll) / cs - 0.5).ceil().max(0.0);
    let c1 = ((p.x + half - raster.xll) / cs - 0.5).floor().min(raster.ncols as f64 - 1.0);
    let r0 = ((raster.ytop() - (p.y + half)) / cs - 0.5).ceil().max(0.0);
    let r1 = ((raster.ytop() - (p.y - half)) / cs - 0.5).floor().min(raster.nrows as f64 - 1.0);
    if c0 > c1 || r0 > r1 {
        return extract_point(raster, p);
    }
    let (c0, c1, r0, r1) = (c0 as usize, c1 as usize, r0 as usize, r1 as usize);
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in r0..=r1 {
        for c in c0..=c1 {
            if let Some(v) = raster.get(r, c) {
                sum += v;
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

pub fn window_average(raster: &Raster, points: &[PointKm], window: f64) -> Result<Vec<Option<f64>>> {
    if !(window > 0.0) {
        return Err(Error::InvalidInput("window must be positive".into()));
    }
    Ok(points.iter().map(|p| window_average_point(raster, p, window)).collect())
}

/// One transformed covariate raster.
#[derive(Debug, Clone)]
pub struct Covariate {
    pub name: String,
    pub transform: TransformKind,
    pub raster: Raster,
}

/// Named, transformed covariate rasters in design-matrix column order.
#[derive(Debug, Clone, Default)]
pub struct CovariateSet {
    covariates: Vec<Covariate>,
}

impl CovariateSet {
    /// Transforms each raw raster and records its tag.
    pub fn from_raw(raw: Vec<(String, Raster, TransformKind)>) -> Result<Self> {
        let mut covariates = Vec::with_capacity(raw.len());
        for (name, raster, kind) in raw {
            if covariates.iter().any(|c: &Covariate| c.name == name) {
                return Err(Error::InvalidInput(format!("duplicate covariate name `{name}`")));
            }
            let raster = transform(&raster, kind)?;
            covariates.push(Covariate {
                name,
                transform: kind,
                raster,
            });
        }
        Ok(CovariateSet { covariates })
    }

    pub fn empty() -> Self {
        CovariateSet::default()
    }

    pub fn len(&self) -> usize {
        self.covariates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariates.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.covariates.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn covariates(&self) -> &[Covariate] {
        &self.covariates
    }

    /// Number of fixed effects including the intercept.
    pub fn num_effects(&self) -> usize {
        self.covariates.len() + 1
    }

    /// `[1, x₁(s), …, x_q(s)]`, with covariates window-averaged when
    /// `window` is given; `None` if any covariate is missing.
    pub fn design_row(&self, p: &PointKm, window: Option<f64>) -> Option<Vec<f64>> {
        let mut row = Vec::with_capacity(self.num_effects());
        row.push(1.0);
        for cov in &self.covariates {
            let v = match window {
                Some(w) => window_average_point(&cov.raster, p, w),
                None => extract_point(&cov.raster, p),
            }?;
            row.push(v);
        }
        Some(row)
    }
}
