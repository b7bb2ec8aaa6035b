//! Two-phase pipeline: pretrain on simulated LV dynamics, carry the weights
//! over, fine-tune on a real annual series with the physics residual loss.
//!
//! Forecasts are one step ahead. For a history `s[0..n)` the network sees
//! the last `W` derivative triples (the newest one reads `s[n-1]`) and
//! predicts the triple anchored at `n-2`. Its zeroth and first channels
//! restate already observed values; the second-difference channel carries
//! the new information, so the forecast is
//! `s[n] = 2 s[n-1] - s[n-2] + dt^2 * v2_hat` in normalized units.

use serde::{Deserialize, Serialize};

use crate::data::{AnnualSeries, Normalization};
use crate::differentials::{build_supervised_pairs, build_triple, DerivativeTriple, SupervisedSet, Triple};
use crate::error::{Error, Result};
use crate::lv::{integrate_rk4, LvParams, LvState};
use crate::nn::{self, init_params, NetworkParams};
use crate::optim::OptimizerState;
use crate::physics::{ChannelPooling, Objective, DEFAULT_EPS_Y};

/// Sampling interval of real annual data.
pub const ANNUAL_DT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lv: LvParams,
    pub initial: LvState,
    /// RK4 step of the pretraining simulation.
    pub dt: f64,
    /// Number of RK4 steps simulated for pretraining.
    pub steps: usize,
    /// Keep every `sample_stride`-th simulated state; `dt * sample_stride`
    /// is the time between pretraining samples.
    pub sample_stride: usize,
    pub window: usize,
    pub hidden: usize,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub eps_y: f64,
    pub pooling: ChannelPooling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lv: LvParams::default(),
            initial: LvState::new(10.0, 5.0),
            dt: 0.01,
            steps: 20_000,
            sample_stride: 100,
            window: 4,
            hidden: 32,
            pretrain_epochs: 200,
            finetune_epochs: 500,
            learning_rate: 1e-3,
            seed: 0,
            eps_y: DEFAULT_EPS_Y,
            pooling: ChannelPooling::All,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.lv.validate()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.window == 0 {
            return bad("window must be >= 1");
        }
        if self.hidden == 0 {
            return bad("hidden size must be >= 1");
        }
        if self.sample_stride == 0 || self.steps == 0 {
            return bad("steps and sample_stride must be >= 1");
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt must be finite and > 0");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be finite and > 0");
        }
        if !(self.eps_y.is_finite() && self.eps_y > 0.0) {
            return bad("eps_y must be finite and > 0");
        }
        Ok(())
    }

    /// Shortest series that can be fine-tuned on.
    pub fn min_train_len(&self) -> usize {
        self.window + 3
    }

    /// Shortest history a forecast can be made from.
    pub fn min_history_len(&self) -> usize {
        self.window + 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrained,
    Finetuned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// LV pretraining followed by residual-loss fine-tuning.
    Vanya,
    /// Same backbone trained from scratch on the plain data loss.
    VanillaLstm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub method: Method,
    pub phase: Phase,
    pub net: NetworkParams,
    pub normalization: Option<Normalization>,
    pub lv: LvParams,
    pub loss_history: Vec<f64>,
    pub config: TrainConfig,
}

/// Everything fine-tuning needs: transferred weights and the prepared real series.
#[derive(Debug, Clone)]
pub struct FinetuneState {
    pub net: NetworkParams,
    pub normalization: Normalization,
    pub triple: DerivativeTriple,
    pub lv: LvParams,
}

/// Full-batch Adam. The history holds the loss before every update plus the final loss.
pub(crate) fn fit(
    net: &mut NetworkParams,
    batch: &SupervisedSet,
    objective: &Objective,
    epochs: usize,
    learning_rate: f64,
) -> Result<Vec<f64>> {
    let mut opt = OptimizerState::new(net, learning_rate);
    let mut history = Vec::with_capacity(epochs + 1);
    for epoch in 0..epochs {
        let g = nn::gradient(net, batch, objective)?;
        if !g.loss.is_finite() {
            return Err(Error::NumericalFailure {
                index: epoch,
                reason: format!("loss {} at epoch {epoch}", g.loss),
            });
        }
        history.push(g.loss);
        opt.step(net, &g.grads)?;
    }
    let last = nn::batch_loss(net, batch, objective)?;
    if !last.is_finite() {
        return Err(Error::NumericalFailure {
            index: epochs,
            reason: format!("final loss {last}"),
        });
    }
    history.push(last);
    Ok(history)
}

/// The normalized LV prey series used for pretraining.
pub fn pretraining_triple(config: &TrainConfig) -> Result<DerivativeTriple> {
    let traj = integrate_rk4(&config.lv, config.initial, config.dt, config.steps)?;
    let sampled = traj.subsample(config.sample_stride)?;
    let norm = Normalization::fit(&sampled.xs())?;
    build_triple(&norm.apply_all(&sampled.xs()), ANNUAL_DT)
}

pub fn pretrain(config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    let triple = pretraining_triple(config)?;
    let batch = build_supervised_pairs(&triple, config.window)?;
    let mut net = init_params(config.seed, 3, config.hidden, 3)?;
    let objective = Objective::Pretrain {
        pooling: config.pooling,
    };
    let history = fit(&mut net, &batch, &objective, config.pretrain_epochs, config.learning_rate)?;
    Ok(TrainedModel {
        method: Method::Vanya,
        phase: Phase::Pretrained,
        net,
        normalization: None,
        lv: config.lv,
        loss_history: history,
        config: config.clone(),
    })
}

/// Normalize a training series and build its derivative triple.
pub(crate) fn prepare_series(series: &AnnualSeries, config: &TrainConfig) -> Result<(Normalization, DerivativeTriple)> {
    if series.len() < config.min_train_len() {
        return Err(Error::TooShort {
            what: "training series",
            needed: config.min_train_len(),
            got: series.len(),
        });
    }
    let norm = Normalization::fit(series.values())?;
    let triple = build_triple(&norm.apply_all(series.values()), ANNUAL_DT)?;
    Ok((norm, triple))
}

pub fn transfer(pretrained: &TrainedModel, series: &AnnualSeries, config: &TrainConfig) -> Result<FinetuneState> {
    if pretrained.phase != Phase::Pretrained {
        return Err(Error::WrongPhase("transfer expects a pretrained model".into()));
    }
    let (normalization, triple) = prepare_series(series, config)?;
    Ok(FinetuneState {
        net: pretrained.net.clone(),
        normalization,
        triple,
        lv: pretrained.lv,
    })
}

pub fn finetune(state: FinetuneState, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    if let Some((i, &v)) = state.triple.v.iter().enumerate().find(|(_, v)| !(v.abs() >= config.eps_y)) {
        return Err(Error::Singularity {
            index: i,
            value: v.abs(),
            floor: config.eps_y,
        });
    }
    let batch = build_supervised_pairs(&state.triple, config.window)?;
    let objective = Objective::Residual {
        lv: state.lv,
        eps_y: config.eps_y,
    };
    let mut net = state.net;
    let history = fit(&mut net, &batch, &objective, config.finetune_epochs, config.learning_rate)?;
    Ok(TrainedModel {
        method: Method::Vanya,
        phase: Phase::Finetuned,
        net,
        normalization: Some(state.normalization),
        lv: state.lv,
        loss_history: history,
        config: config.clone(),
    })
}

/// Pretrain, transfer and fine-tune in one call.
pub fn train_vanya(series: &AnnualSeries, config: &TrainConfig) -> Result<TrainedModel> {
    let pretrained = pretrain(config)?;
    finetune(transfer(&pretrained, series, config)?, config)
}

/// Anything that predicts the next value of a series from its observed history.
pub trait OneStepForecaster {
    /// Smallest history length accepted by `forecast_next`.
    fn min_history(&self) -> usize;

    /// Forecast `history[n]` in original units from `history[0..n)`.
    fn forecast_next(&self, history: &[f64]) -> Result<f64>;
}

/// Predict the triple anchored at `n - 2` for a normalized history of length `n`.
pub(crate) fn predict_next_triple(net: &NetworkParams, normalized: &[f64], window: usize) -> Result<Triple> {
    let n = normalized.len();
    if n < window + 2 {
        return Err(Error::TooShort {
            what: "history for forecast",
            needed: window + 2,
            got: n,
        });
    }
    let triple = build_triple(normalized, ANNUAL_DT)?;
    let window: Vec<Triple> = (triple.len() - window..triple.len()).map(|i| triple.get(i)).collect();
    nn::forward(net, &window)
}

/// Next normalized value implied by a predicted triple on the observed tail.
pub(crate) fn next_value(normalized: &[f64], predicted: &Triple) -> f64 {
    let n = normalized.len();
    2.0 * normalized[n - 1] - normalized[n - 2] + ANNUAL_DT * ANNUAL_DT * predicted[2]
}

impl OneStepForecaster for TrainedModel {
    fn min_history(&self) -> usize {
        self.config.min_history_len()
    }

    fn forecast_next(&self, history: &[f64]) -> Result<f64> {
        let norm = self
            .normalization
            .ok_or_else(|| Error::WrongPhase("forecasting needs a fine-tuned model with a normalization record".into()))?;
        let u = norm.apply_all(history);
        let pred = predict_next_triple(&self.net, &u, self.config.window)?;
        let value = norm.invert(next_value(&u, &pred));
        if !value.is_finite() {
            return Err(Error::NumericalFailure {
                index: history.len(),
                reason: "non-finite forecast".into(),
            });
        }
        Ok(value)
    }
}

pub fn forecast_one_step(model: &TrainedModel, series: &AnnualSeries) -> Result<f64> {
    model.forecast_next(series.values())
}

/// Teacher-forced one-step forecasts for every index from `test_start` to the end.
pub fn rolling_forecast<F: OneStepForecaster + ?Sized>(
    model: &F,
    full_series: &AnnualSeries,
    test_start: usize,
) -> Result<Vec<f64>> {
    rolling_forecast_values(model, full_series.values(), test_start)
}

pub fn rolling_forecast_values<F: OneStepForecaster + ?Sized>(
    model: &F,
    values: &[f64],
    test_start: usize,
) -> Result<Vec<f64>> {
    if test_start < model.min_history() {
        return Err(Error::TooShort {
            what: "history before the test segment",
            needed: model.min_history(),
            got: test_start,
        });
    }
    if test_start > values.len() {
        return Err(Error::InvalidInput(format!(
            "test start {test_start} is past the series end {}",
            values.len()
        )));
    }
    (test_start..values.len())
        .map(|t| model.forecast_next(&values[..t]))
        .collect()
}
