//! Forward-difference derivative channels and one-step-ahead supervised pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(value, first difference, second difference)` at one anchor index.
pub type Triple = [f64; 3];

/// Zeroth, first and second forward-difference channels sharing one index.
///
/// Index `i` holds `s[i]`, `(s[i+1] - s[i]) / dt` and
/// `(s[i+2] - 2 s[i+1] + s[i]) / dt^2`, so triple `i` reads the raw series
/// through `s[i+2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeTriple {
    pub v: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub dt: f64,
}

impl DerivativeTriple {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn get(&self, i: usize) -> Triple {
        [self.v[i], self.v1[i], self.v2[i]]
    }

    pub fn triples(&self) -> Vec<Triple> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSet {
    pub inputs: Vec<Vec<Triple>>,
    pub targets: Vec<Triple>,
}

impl SupervisedSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("dt must be finite and > 0, got {dt}")))
    }
}

pub fn first_difference(series: &[f64], dt: f64) -> Result<Vec<f64>> {
    check_dt(dt)?;
    if series.len() < 2 {
        return Err(Error::TooShort {
            what: "series for first difference",
            needed: 2,
            got: series.len(),
        });
    }
    Ok(series.windows(2).map(|w| (w[1] - w[0]) / dt).collect())
}

/// Forward difference applied twice.
pub fn second_difference(series: &[f64], dt: f64) -> Result<Vec<f64>> {
    if series.len() < 3 {
        return Err(Error::TooShort {
            what: "series for second difference",
            needed: 3,
            got: series.len(),
        });
    }
    first_difference(&first_difference(series, dt)?, dt)
}

pub fn build_triple(series: &[f64], dt: f64) -> Result<DerivativeTriple> {
    if series.len() < 3 {
        return Err(Error::TooShort {
            what: "series for derivative triple",
            needed: 3,
            got: series.len(),
        });
    }
    let n = series.len() - 2;
    let mut v1 = first_difference(series, dt)?;
    let v2 = first_difference(&v1, dt)?;
    v1.truncate(n);
    Ok(DerivativeTriple {
        v: series[..n].to_vec(),
        v1,
        v2,
        dt,
    })
}

/// Windows of `window` consecutive triples, each paired with the triple that follows it.
pub fn build_supervised_pairs(triple: &DerivativeTriple, window: usize) -> Result<SupervisedSet> {
    if window == 0 {
        return Err(Error::InvalidConfig("window must be >= 1".into()));
    }
    if triple.len() < window + 1 {
        return Err(Error::TooShort {
            what: "derivative triple for supervised pairs",
            needed: window + 1,
            got: triple.len(),
        });
    }
    let all = triple.triples();
    let (inputs, targets) = (0..all.len() - window)
        .map(|k| (all[k..k + window].to_vec(), all[k + window]))
        .unzip();
    Ok(SupervisedSet { inputs, targets })
}
