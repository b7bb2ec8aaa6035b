//! Annual series I/O, normalization and the synthetic LV-derived generator.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lv::{integrate_rk4, LvParams, LvState, Trajectory};

/// Values observed once per year, consecutive years, strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualSeries {
    years: Vec<i32>,
    values: Vec<f64>,
}

impl AnnualSeries {
    pub fn new(years: Vec<i32>, values: Vec<f64>) -> Result<Self> {
        if years.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} years but {} values",
                years.len(),
                values.len()
            )));
        }
        for (i, w) in years.windows(2).enumerate() {
            if w[1] != w[0] + 1 {
                return Err(Error::InvalidInput(format!(
                    "years must be consecutive: {} follows {} at index {}",
                    w[1],
                    w[0],
                    i + 1
                )));
            }
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "values must be finite and > 0, got {v} at index {i}"
            )));
        }
        Ok(Self { years, values })
    }

    /// Consecutive years starting at `start_year`.
    pub fn from_values(start_year: i32, values: Vec<f64>) -> Result<Self> {
        let years = (0..values.len()).map(|i| start_year + i as i32).collect();
        Self::new(years, values)
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn prefix(&self, n: usize) -> AnnualSeries {
        let n = n.min(self.len());
        AnnualSeries {
            years: self.years[..n].to_vec(),
            values: self.values[..n].to_vec(),
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("year,value\n");
        for (y, v) in self.years.iter().zip(&self.values) {
            out.push_str(&format!("{y},{v}\n"));
        }
        out
    }

    /// SHA-256 of the canonical CSV rendering.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv_string().as_bytes()))
    }
}

/// Parse a `year,value` CSV file.
pub fn load_csv(path: impl AsRef<Path>) -> Result<AnnualSeries> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<AnnualSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.len() != 2 || &header[0] != "year" || &header[1] != "value" {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `year,value`, found `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut years: Vec<i32> = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |message: String| Error::Parse { line, message };
        let year: i32 = record[0]
            .parse()
            .map_err(|_| err(format!("year `{}` is not an integer", &record[0])))?;
        let value: f64 = record[1]
            .parse()
            .map_err(|_| err(format!("value `{}` is not a number", &record[1])))?;
        if !(value.is_finite() && value > 0.0) {
            return Err(err(format!("value {value} must be finite and positive")));
        }
        if let Some(&prev) = years.last() {
            if year != prev + 1 {
                return Err(err(format!("year {year} does not follow {prev}; years must be consecutive")));
            }
        }
        years.push(year);
        values.push(value);
    }
    AnnualSeries::new(years, values)
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_csv(series: &AnnualSeries, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, series.to_csv_string().as_bytes())
}

/// Trajectory as `t,x,y` rows with 17 significant digits.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,x,y\n");
    for (i, s) in traj.states.iter().enumerate() {
        out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", traj.time(i), s.x, s.y));
    }
    out
}

/// Affine map taking the observed `[min, max]` onto `[0.5, 1.5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub scale: f64,
    pub offset: f64,
}

impl Normalization {
    pub const LOW: f64 = 0.5;
    pub const HIGH: f64 = 1.5;

    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::TooShort {
                what: "series for normalization",
                needed: 1,
                got: 0,
            });
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(Error::ZeroRange(min));
        }
        let scale = (Self::HIGH - Self::LOW) / (max - min);
        Ok(Self {
            scale,
            offset: Self::LOW - min * scale,
        })
    }

    pub fn apply(&self, v: f64) -> f64 {
        self.scale * v + self.offset
    }

    pub fn invert(&self, u: f64) -> f64 {
        (u - self.offset) / self.scale
    }

    pub fn apply_all(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.apply(v)).collect()
    }
}

pub fn normalize(values: &[f64]) -> Result<(Vec<f64>, Normalization)> {
    let norm = Normalization::fit(values)?;
    Ok((norm.apply_all(values), norm))
}

/// Parameters of the synthetic annual series.
///
/// Year `k` holds `scale * (x(k) + level - slope * k + noise_k)`, where
/// `x` is the LV prey orbit sampled at unit time and `noise_k` is Gaussian
/// with standard deviation `noise_std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub lv: LvParams,
    pub initial: LvState,
    /// Integration step; must divide 1 exactly.
    pub dt: f64,
    pub n_years: usize,
    pub start_year: i32,
    pub level: f64,
    pub slope: f64,
    pub noise_std: f64,
    pub scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            lv: LvParams::default(),
            initial: LvState::new(10.0, 5.0),
            dt: 0.01,
            n_years: 37,
            start_year: 1986,
            level: 8.0,
            slope: 0.15,
            noise_std: 0.1,
            scale: 1.0e4,
            seed: 2023,
        }
    }
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<AnnualSeries> {
    if cfg.n_years < 5 {
        return Err(Error::TooShort {
            what: "synthetic series",
            needed: 5,
            got: cfg.n_years,
        });
    }
    let stride = (1.0 / cfg.dt).round();
    if !(cfg.dt > 0.0 && stride >= 1.0 && (stride * cfg.dt - 1.0).abs() < 1e-12) {
        return Err(Error::InvalidConfig(format!(
            "synthetic integration step {} must divide one year",
            cfg.dt
        )));
    }
    if !(cfg.noise_std >= 0.0 && cfg.noise_std.is_finite() && cfg.scale > 0.0 && cfg.scale.is_finite()) {
        return Err(Error::InvalidConfig("noise_std must be >= 0 and scale > 0".into()));
    }
    let stride = stride as usize;
    let traj = integrate_rk4(&cfg.lv, cfg.initial, cfg.dt, stride * (cfg.n_years - 1))?;
    let sampled = traj.subsample(stride)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut values = Vec::with_capacity(cfg.n_years);
    for (k, s) in sampled.states.iter().enumerate() {
        let eps = if cfg.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        let v = cfg.scale * (s.x + cfg.level - cfg.slope * k as f64 + eps);
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Generation(format!(
                "year index {k} produced non-positive value {v}; raise `level` or lower `slope`"
            )));
        }
        values.push(v);
    }
    AnnualSeries::from_values(cfg.start_year, values)
}
