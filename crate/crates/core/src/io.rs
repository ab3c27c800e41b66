//! Shape specifications, immersion files, reports and CSV outputs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::continuation::ContinuationTrace;
use crate::error::{Error, Result};
use crate::geometry::ImmersionMap;
use crate::spectral::{num_coeffs, SphereGrid};

pub const SCHEMA: &str = "immreg/1";

/// Parsed `--shape` argument.
#[derive(Clone, Debug, PartialEq)]
pub enum ShapeSpec {
    Sphere { r: f64 },
    Ellipsoid { a: f64, b: f64, c: f64 },
    /// `r·(1 + Σ amp·Y_lm)` along the radial direction.
    Perturbed { r: f64, terms: Vec<(usize, i64, f64)> },
    File(PathBuf),
}

fn number(s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Parse(format!("not a number: '{s}'")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parse(format!("not a finite number: '{s}'")))
    }
}

fn positive(s: &str) -> Result<f64> {
    let v = number(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Parse(format!("expected a positive number, got '{s}'")))
    }
}

impl FromStr for ShapeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("shape '{s}' lacks a ':'")))?;
        match kind {
            "sphere" => Ok(ShapeSpec::Sphere { r: positive(args)? }),
            "ellipsoid" => {
                let v: Vec<&str> = args.split(',').collect();
                if v.len() != 3 {
                    return Err(Error::Parse(format!("ellipsoid needs 3 axes, got '{args}'")));
                }
                Ok(ShapeSpec::Ellipsoid { a: positive(v[0])?, b: positive(v[1])?, c: positive(v[2])? })
            }
            "perturbed" => {
                let mut parts = args.split(';');
                let r = positive(parts.next().unwrap_or_default())?;
                let mut terms = Vec::new();
                for t in parts {
                    let v: Vec<&str> = t.split(',').collect();
                    if v.len() != 3 {
                        return Err(Error::Parse(format!("perturbation term '{t}' is not <l>,<m>,<amp>")));
                    }
                    let l: usize = v[0].parse().map_err(|_| Error::Parse(format!("bad degree '{}'", v[0])))?;
                    let m: i64 = v[1].parse().map_err(|_| Error::Parse(format!("bad order '{}'", v[1])))?;
                    if m.unsigned_abs() as usize > l {
                        return Err(Error::Parse(format!("order {m} exceeds degree {l}")));
                    }
                    terms.push((l, m, number(v[2])?));
                }
                if terms.is_empty() {
                    return Err(Error::Parse("perturbed shape needs at least one term".into()));
                }
                Ok(ShapeSpec::Perturbed { r, terms })
            }
            "file" if !args.is_empty() => Ok(ShapeSpec::File(PathBuf::from(args))),
            _ => Err(Error::Parse(format!("unknown shape '{s}'"))),
        }
    }
}

impl ShapeSpec {
    pub fn build(&self, grid: &Arc<SphereGrid>) -> Result<ImmersionMap> {
        match self {
            ShapeSpec::Sphere { r } => ImmersionMap::sphere(grid, *r),
            ShapeSpec::Ellipsoid { a, b, c } => ImmersionMap::ellipsoid(grid, *a, *b, *c),
            ShapeSpec::Perturbed { r, terms } => {
                if let Some(&(l, _, _)) = terms.iter().find(|t| t.0 > grid.l_max()) {
                    return Err(Error::DegreeMismatch { grid: grid.l_max(), input: l });
                }
                ImmersionMap::perturbed_sphere(grid, *r, terms)
            }
            ShapeSpec::File(path) => read_immersion(path, grid),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffSet {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

/// On-disk immersion: real orthonormal harmonic coefficients in `(ℓ, m)`
/// lexicographic order.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImmersionFile {
    #[serde(rename = "L")]
    pub l: usize,
    pub coeffs: CoeffSet,
}

impl ImmersionFile {
    pub fn from_immersion(f: &ImmersionMap) -> Self {
        let [x, y, z] = f.coeffs();
        Self { l: f.grid().l_max(), coeffs: CoeffSet { x, y, z } }
    }

    /// Immersion on `grid`, zero-padding coefficients of a lower degree.
    pub fn to_immersion(&self, grid: &Arc<SphereGrid>) -> Result<ImmersionMap> {
        let expected = num_coeffs(self.l);
        for v in [&self.coeffs.x, &self.coeffs.y, &self.coeffs.z] {
            if v.len() != expected {
                return Err(Error::SizeMismatch { expected, got: v.len() });
            }
        }
        if self.l > grid.l_max() {
            return Err(Error::DegreeMismatch { grid: grid.l_max(), input: self.l });
        }
        let pad = |v: &Vec<f64>| {
            let mut out = v.clone();
            out.resize(grid.num_coeffs(), 0.0);
            out
        };
        ImmersionMap::from_coeffs(grid, [pad(&self.coeffs.x), pad(&self.coeffs.y), pad(&self.coeffs.z)])
    }
}

pub fn read_immersion(path: &Path, grid: &Arc<SphereGrid>) -> Result<ImmersionMap> {
    let file: ImmersionFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    file.to_immersion(grid)
}

pub fn write_immersion(path: &Path, f: &ImmersionMap) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &ImmersionFile::from_immersion(f))?;
    w.flush()?;
    Ok(())
}

/// Versioned envelope for `report.json`.
#[derive(Clone, Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub schema: &'static str,
    pub command: String,
    pub data: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &str, data: T) -> Self {
        Self { schema: SCHEMA, command: command.to_string(), data }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Machine-readable error record.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorRecord {
    pub schema: &'static str,
    pub error: &'static str,
    pub message: String,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        Self { schema: SCHEMA, error: e.kind(), message: e.to_string() }
    }
}

/// Number of singular-value columns in `trace.csv`.
pub const TRACE_SV_COLUMNS: usize = 12;

fn float(v: f64) -> String {
    format!("{v:e}")
}

/// One row per continuation step: `epsilon, iters, residual, sv1..sv12`.
/// Missing singular values are left empty.
pub fn write_trace_csv<W: Write>(out: W, trace: &ContinuationTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["epsilon".to_string(), "iters".into(), "residual".into()];
    header.extend((1..=TRACE_SV_COLUMNS).map(|k| format!("sv{k}")));
    w.write_record(&header)?;
    for row in &trace.rows {
        let mut rec = vec![float(row.epsilon), row.iterations.to_string(), float(row.residual)];
        rec.extend((0..TRACE_SV_COLUMNS).map(|k| row.singular_values.get(k).map(|&v| float(v)).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-node `theta, phi, H, K, lambda2`.
pub fn write_geometry_csv<W: Write>(out: W, grid: &SphereGrid, mean: &[f64], gauss: &[f64], lambda2: &[f64]) -> Result<()> {
    let nn = grid.num_nodes();
    for len in [mean.len(), gauss.len(), lambda2.len()] {
        if len != nn {
            return Err(Error::SizeMismatch { expected: nn, got: len });
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta", "phi", "H", "K", "lambda2"])?;
    for n in 0..nn {
        let (t, p) = grid.node(n);
        w.write_record([float(t), float(p), float(mean[n]), float(gauss[n]), float(lambda2[n])])?;
    }
    w.flush()?;
    Ok(())
}
