//! Comparison forecasters: the same LSTM trained from scratch on the plain
//! data loss, an echo-state network, and persistence.

use nalgebra::{DMatrix, DVector};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{AnnualSeries, Normalization};
use crate::differentials::build_supervised_pairs;
use crate::error::{Error, Result};
use crate::nn::{init_params, Matrix};
use crate::physics::Objective;
use crate::training::{fit, prepare_series, Method, OneStepForecaster, Phase, TrainConfig, TrainedModel};

/// LSTM on the real series only: no pretraining, no physics residual.
pub fn train_vanilla_lstm(series: &AnnualSeries, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    let (normalization, triple) = prepare_series(series, config)?;
    let batch = build_supervised_pairs(&triple, config.window)?;
    let mut net = init_params(config.seed, 3, config.hidden, 3)?;
    let objective = Objective::Pretrain {
        pooling: config.pooling,
    };
    let history = fit(&mut net, &batch, &objective, config.finetune_epochs, config.learning_rate)?;
    Ok(TrainedModel {
        method: Method::VanillaLstm,
        phase: Phase::Finetuned,
        net,
        normalization: Some(normalization),
        lv: config.lv,
        loss_history: history,
        config: config.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EsnConfig {
    pub reservoir_size: usize,
    pub spectral_radius: f64,
    pub input_scaling: f64,
    pub ridge: f64,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for EsnConfig {
    fn default() -> Self {
        Self {
            reservoir_size: 50,
            spectral_radius: 0.9,
            input_scaling: 0.5,
            ridge: 1e-6,
            warmup: 2,
            seed: 0,
        }
    }
}

/// Echo-state network: fixed random reservoir, ridge-trained linear readout.
///
/// State update `s_t = tanh(W s_{t-1} + w_in u_t + w_bias)`; the readout
/// maps `[1, s_t]` to `u_{t+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsnParams {
    pub config: EsnConfig,
    pub reservoir: Matrix,
    pub input_weights: Vec<f64>,
    pub bias_weights: Vec<f64>,
    /// Bias first, then one weight per reservoir unit. Empty until trained.
    pub readout: Vec<f64>,
    pub normalization: Option<Normalization>,
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &Matrix) -> f64 {
    DMatrix::from_row_slice(m.rows, m.cols, &m.data)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

impl EsnParams {
    /// Draw a dense reservoir and rescale it to the configured spectral radius.
    pub fn new(config: EsnConfig) -> Result<Self> {
        let r = config.reservoir_size;
        if r == 0 {
            return Err(Error::InvalidConfig("reservoir size must be >= 1".into()));
        }
        if !(config.spectral_radius > 0.0 && config.spectral_radius < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "spectral radius must be in (0, 1), got {}",
                config.spectral_radius
            )));
        }
        if !(config.ridge >= 0.0 && config.ridge.is_finite()) {
            return Err(Error::InvalidConfig("ridge coefficient must be >= 0".into()));
        }
        let unit = Uniform::new_inclusive(-1.0, 1.0).expect("valid bounds");
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut reservoir = Matrix::zeros(r, r);
        for w in reservoir.data.iter_mut() {
            *w = unit.sample(&mut rng);
        }
        let radius = spectral_radius(&reservoir);
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::NumericalFailure {
                index: 0,
                reason: format!("reservoir spectral radius {radius}"),
            });
        }
        let k = config.spectral_radius / radius;
        reservoir.data.iter_mut().for_each(|w| *w *= k);
        let input_weights = (0..r).map(|_| config.input_scaling * unit.sample(&mut rng)).collect();
        let bias_weights = (0..r).map(|_| config.input_scaling * unit.sample(&mut rng)).collect();
        Ok(Self {
            config,
            reservoir,
            input_weights,
            bias_weights,
            readout: Vec::new(),
            normalization: None,
        })
    }

    fn update(&self, state: &[f64], u: f64) -> Vec<f64> {
        (0..self.config.reservoir_size)
            .map(|i| {
                let rec: f64 = self.reservoir.row(i).iter().zip(state).map(|(w, s)| w * s).sum();
                (rec + self.input_weights[i] * u + self.bias_weights[i]).tanh()
            })
            .collect()
    }

    /// Reservoir state after each normalized input, from a zero start.
    pub fn states(&self, inputs: &[f64]) -> Vec<Vec<f64>> {
        let mut s = vec![0.0; self.config.reservoir_size];
        inputs
            .iter()
            .map(|&u| {
                s = self.update(&s, u);
                s.clone()
            })
            .collect()
    }

    pub fn readout_value(&self, state: &[f64]) -> f64 {
        self.readout[0] + self.readout[1..].iter().zip(state).map(|(w, s)| w * s).sum::<f64>()
    }
}

/// Closed-form ridge regression on `[1, state]`; the bias is not penalized.
pub fn fit_readout(states: &[Vec<f64>], targets: &[f64], ridge: f64) -> Result<Vec<f64>> {
    if states.len() != targets.len() || states.is_empty() {
        return Err(Error::Shape(format!(
            "{} states for {} targets",
            states.len(),
            targets.len()
        )));
    }
    let p = states[0].len() + 1;
    let x = DMatrix::from_fn(states.len(), p, |i, j| if j == 0 { 1.0 } else { states[i][j - 1] });
    let y = DVector::from_column_slice(targets);
    let mut normal = x.transpose() * &x;
    for j in 1..p {
        normal[(j, j)] += ridge;
    }
    let rhs = x.transpose() * y;
    let max_diag = (0..p).map(|j| normal[(j, j)]).fold(0.0, f64::max);
    let chol = normal.cholesky().ok_or(Error::Regularization { lambda: ridge })?;
    let min_pivot = (0..p).map(|j| chol.l_dirty()[(j, j)].powi(2)).fold(f64::INFINITY, f64::min);
    if min_pivot <= 1e-12 * max_diag {
        return Err(Error::Regularization { lambda: ridge });
    }
    Ok(chol.solve(&rhs).iter().copied().collect())
}

pub fn train_esn(series: &AnnualSeries, params: EsnParams) -> Result<EsnParams> {
    const MIN_LEN: usize = 5;
    if series.len() < MIN_LEN {
        return Err(Error::TooShort {
            what: "series for echo-state training",
            needed: MIN_LEN,
            got: series.len(),
        });
    }
    let warmup = params.config.warmup;
    if warmup + 1 >= series.len() {
        return Err(Error::TooShort {
            what: "series after echo-state warm-up",
            needed: warmup + 2,
            got: series.len(),
        });
    }
    let norm = Normalization::fit(series.values())?;
    let u = norm.apply_all(series.values());
    let states = params.states(&u[..u.len() - 1]);
    let readout = fit_readout(&states[warmup..], &u[warmup + 1..], params.config.ridge)?;
    Ok(EsnParams {
        readout,
        normalization: Some(norm),
        ..params
    })
}

impl OneStepForecaster for EsnParams {
    fn min_history(&self) -> usize {
        1
    }

    fn forecast_next(&self, history: &[f64]) -> Result<f64> {
        let norm = self
            .normalization
            .ok_or_else(|| Error::WrongPhase("echo-state network has no trained readout".into()))?;
        if history.is_empty() {
            return Err(Error::TooShort {
                what: "history for forecast",
                needed: 1,
                got: 0,
            });
        }
        let states = self.states(&norm.apply_all(history));
        Ok(norm.invert(self.readout_value(states.last().expect("non-empty"))))
    }
}

/// Predicts each value as the one observed before it.
#[derive(Debug, Clone, Copy, Default)]
pub struct Persistence;

impl OneStepForecaster for Persistence {
    fn min_history(&self) -> usize {
        1
    }

    fn forecast_next(&self, history: &[f64]) -> Result<f64> {
        history.last().copied().ok_or(Error::TooShort {
            what: "history for forecast",
            needed: 1,
            got: 0,
        })
    }
}

pub fn persistence_forecast(series: &AnnualSeries, test_start: usize) -> Result<Vec<f64>> {
    crate::training::rolling_forecast(&Persistence, series, test_start)
}
