//! Training objectives.
//!
//! The pretraining objective is the RMSE between forecast and real
//! derivative triples. The fine-tuning objective compares a physics
//! residual built from each triple:
//!
//! ```text
//! Y(y, y', y'') = y'' - a^2 y + (a y - y') (2a - d - g + (b y' - a b y) / (b y))
//! ```
//!
//! with `(a, b, g, d)` the Lotka-Volterra constants, and takes the RMSE of
//! `Y(pred) - Y(real)` over samples.

use serde::{Deserialize, Serialize};

use crate::differentials::Triple;
use crate::error::{Error, Result};
use crate::lv::LvParams;

pub const DEFAULT_EPS_Y: f64 = 1e-8;

/// Which triple channels enter the pretraining RMSE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelPooling {
    /// Residuals of all three channels pooled into one mean.
    #[default]
    All,
    /// Only the zeroth (value) channel.
    ZerothOnly,
}

impl ChannelPooling {
    fn channels(self) -> usize {
        match self {
            ChannelPooling::All => 3,
            ChannelPooling::ZerothOnly => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualInputs {
    pub y: f64,
    pub y1: f64,
    pub y2: f64,
}

impl From<Triple> for ResidualInputs {
    fn from(t: Triple) -> Self {
        Self {
            y: t[0],
            y1: t[1],
            y2: t[2],
        }
    }
}

fn check_lengths(pred: &[Triple], real: &[Triple]) -> Result<()> {
    if pred.len() != real.len() {
        return Err(Error::Shape(format!(
            "prediction length {} != target length {}",
            pred.len(),
            real.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Shape("loss over zero samples".into()));
    }
    Ok(())
}

/// RMSE over forecast triples, pooling all three channels.
pub fn pretrain_loss(pred: &[Triple], real: &[Triple]) -> Result<f64> {
    pretrain_loss_with(pred, real, ChannelPooling::All)
}

pub fn pretrain_loss_with(pred: &[Triple], real: &[Triple], pooling: ChannelPooling) -> Result<f64> {
    Ok(Objective::Pretrain { pooling }.evaluate(pred, real)?.loss)
}

fn residual_at(index: usize, input: ResidualInputs, p: &LvParams, eps_y: f64) -> Result<f64> {
    let ResidualInputs { y, y1, y2 } = input;
    if !(y.abs() >= eps_y) {
        return Err(Error::Singularity {
            index,
            value: y.abs(),
            floor: eps_y,
        });
    }
    let (a, b, g, d) = (p.alpha, p.beta, p.gamma, p.delta);
    Ok(y2 - a * a * y + (a * y - y1) * (2.0 * a - d - g + (b * y1 - a * b * y) / (b * y)))
}

/// The physics residual of a single triple, evaluated as printed.
pub fn residual_y(input: ResidualInputs, params: &LvParams, eps_y: f64) -> Result<f64> {
    residual_at(0, input, params, eps_y)
}

/// Partial derivatives of the residual with respect to `(y, y', y'')`.
///
/// Uses the simplified form `y'' - a^2 y + u (2a - d - g) - u^2 / y`, `u = a y - y'`.
fn residual_partials(input: ResidualInputs, p: &LvParams) -> Triple {
    let ResidualInputs { y, y1, .. } = input;
    let a = p.alpha;
    let c = 2.0 * a - p.delta - p.gamma;
    let u = a * y - y1;
    let inv = 1.0 / y;
    [
        -a * a + a * c - 2.0 * a * u * inv + u * u * inv * inv,
        -c + 2.0 * u * inv,
        1.0,
    ]
}

/// RMSE between the residuals of predicted and real triples.
pub fn train_loss(pred: &[Triple], real: &[Triple], params: &LvParams, eps_y: f64) -> Result<f64> {
    Ok(Objective::Residual {
        lv: *params,
        eps_y,
    }
    .evaluate(pred, real)?
    .loss)
}

/// A scalar loss over forecast triples together with its output derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Pretrain { pooling: ChannelPooling },
    Residual { lv: LvParams, eps_y: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub loss: f64,
    /// Sum of squared residuals before the mean and root.
    pub sum_sq: f64,
    /// Number of terms in the mean.
    pub count: usize,
    /// d(sum_sq)/d(pred) for each sample.
    pub sum_sq_grads: Vec<Triple>,
}

impl LossEval {
    /// d(loss)/d(pred), with the root's derivative taken as 0 when the loss is 0.
    pub fn output_grads(&self) -> Vec<Triple> {
        let scale = if self.loss > 0.0 {
            1.0 / (2.0 * self.count as f64 * self.loss)
        } else {
            0.0
        };
        self.sum_sq_grads
            .iter()
            .map(|g| [g[0] * scale, g[1] * scale, g[2] * scale])
            .collect()
    }
}

impl Objective {
    pub fn evaluate(&self, pred: &[Triple], real: &[Triple]) -> Result<LossEval> {
        check_lengths(pred, real)?;
        let mut sum_sq = 0.0;
        let mut grads = Vec::with_capacity(pred.len());
        let count;
        match *self {
            Objective::Pretrain { pooling } => {
                let k = pooling.channels();
                count = k * pred.len();
                for (i, (p, r)) in pred.iter().zip(real).enumerate() {
                    let mut g = [0.0; 3];
                    for c in 0..k {
                        let diff = p[c] - r[c];
                        if !diff.is_finite() {
                            return Err(Error::NumericalFailure {
                                index: i,
                                reason: format!("non-finite residual in channel {c}"),
                            });
                        }
                        sum_sq += diff * diff;
                        g[c] = 2.0 * diff;
                    }
                    grads.push(g);
                }
            }
            Objective::Residual { lv, eps_y } => {
                count = pred.len();
                for (i, (p, r)) in pred.iter().zip(real).enumerate() {
                    let pin = ResidualInputs::from(*p);
                    let diff =
                        residual_at(i, pin, &lv, eps_y)? - residual_at(i, (*r).into(), &lv, eps_y)?;
                    if !diff.is_finite() {
                        return Err(Error::NumericalFailure {
                            index: i,
                            reason: "non-finite physics residual".into(),
                        });
                    }
                    sum_sq += diff * diff;
                    let dy = residual_partials(pin, &lv);
                    grads.push([2.0 * diff * dy[0], 2.0 * diff * dy[1], 2.0 * diff * dy[2]]);
                }
            }
        }
        let loss = (sum_sq / count as f64).sqrt();
        if !loss.is_finite() {
            return Err(Error::NumericalFailure {
                index: 0,
                reason: format!("loss overflowed to {loss}"),
            });
        }
        Ok(LossEval {
            loss,
            sum_sq,
            count,
            sum_sq_grads: grads,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_lv() -> LvParams {
        LvParams::new(1.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn pretrain_loss_examples() {
        let a = [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        assert_eq!(pretrain_loss(&a, &a).unwrap(), 0.0);

        let l = pretrain_loss(&[[4.0, 0.0, 0.0]], &[[1.0, 0.0, 0.0]]).unwrap();
        assert!((l - 3f64.sqrt()).abs() < 1e-15);

        let b = [[0.5, 2.5, -1.0], [4.0, 7.0, 6.5]];
        assert_eq!(pretrain_loss(&a, &b).unwrap(), pretrain_loss(&b, &a).unwrap());

        let zeroth = pretrain_loss_with(&[[4.0, 9.0, 9.0]], &[[1.0, 0.0, 0.0]], ChannelPooling::ZerothOnly)
            .unwrap();
        assert_eq!(zeroth, 3.0);

        assert!(matches!(pretrain_loss(&a, &b[..1]), Err(Error::Shape(_))));
        assert!(matches!(pretrain_loss(&[], &[]), Err(Error::Shape(_))));
    }

    #[test]
    fn residual_examples() {
        let p = LvParams::new(1.0, 0.5, 1.0, 1.0).unwrap();
        let r = residual_y(ResidualInputs { y: 1.0, y1: 0.0, y2: 0.0 }, &p, DEFAULT_EPS_Y).unwrap();
        assert_eq!(r, -2.0);

        let p = LvParams::new(1.7, 0.3, 0.9, 0.2).unwrap();
        for y in [0.5, 1.3, 42.0] {
            let r = residual_y(ResidualInputs { y, y1: 1.7 * y, y2: 0.0 }, &p, DEFAULT_EPS_Y).unwrap();
            assert!(close(r, -1.7 * 1.7 * y, 1e-14));
        }

        let input = ResidualInputs { y: 0.8, y1: -0.3, y2: 0.2 };
        let lo = residual_y(input, &LvParams::new(1.2, 0.5, 0.4, 0.3).unwrap(), DEFAULT_EPS_Y).unwrap();
        let hi = residual_y(input, &LvParams::new(1.2, 7.3, 0.4, 0.3).unwrap(), DEFAULT_EPS_Y).unwrap();
        assert!(close(lo, hi, 1e-14));
    }

    #[test]
    fn residual_rejects_small_y() {
        let err = residual_y(ResidualInputs { y: 1e-9, y1: 0.0, y2: 0.0 }, &unit_lv(), 1e-8).unwrap_err();
        assert!(matches!(err, Error::Singularity { .. }));
        let err = train_loss(
            &[[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
            &[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
            &unit_lv(),
            1e-8,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Singularity { index: 1, .. }));
    }

    #[test]
    fn train_loss_examples() {
        let lv = unit_lv();
        let a = [[1.0, 0.2, -0.1], [1.4, 0.0, 0.3]];
        assert_eq!(train_loss(&a, &a, &lv, DEFAULT_EPS_Y).unwrap(), 0.0);

        let l = train_loss(&[[1.0, 0.0, 0.0]], &[[2.0, 0.0, 0.0]], &lv, DEFAULT_EPS_Y).unwrap();
        assert_eq!(l, 2.0);

        let p = [[0.9, 0.1, 0.4]];
        let r = [[1.2, -0.2, 0.0]];
        let yp = residual_y(p[0].into(), &lv, DEFAULT_EPS_Y).unwrap();
        let yr = residual_y(r[0].into(), &lv, DEFAULT_EPS_Y).unwrap();
        assert!(close(train_loss(&p, &r, &lv, DEFAULT_EPS_Y).unwrap(), (yp - yr).abs(), 1e-15));
    }

    #[test]
    fn sum_of_squares_gradient_is_linear_in_residual() {
        let obj = Objective::Pretrain { pooling: ChannelPooling::All };
        let real = [[1.0, 2.0, 3.0], [0.0, -1.0, 0.5]];
        let pred = [[1.5, 1.0, 3.25], [0.1, -1.4, 0.0]];
        let doubled: Vec<Triple> = pred
            .iter()
            .zip(&real)
            .map(|(p, r)| [r[0] + 2.0 * (p[0] - r[0]), r[1] + 2.0 * (p[1] - r[1]), r[2] + 2.0 * (p[2] - r[2])])
            .collect();
        let g1 = obj.evaluate(&pred, &real).unwrap().sum_sq_grads;
        let g2 = obj.evaluate(&doubled, &real).unwrap().sum_sq_grads;
        for (a, b) in g1.iter().zip(&g2) {
            for c in 0..3 {
                assert!((b[c] - 2.0 * a[c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_loss_has_zero_output_gradient() {
        let obj = Objective::Residual { lv: unit_lv(), eps_y: DEFAULT_EPS_Y };
        let a = [[1.0, 0.3, 0.1]];
        let eval = obj.evaluate(&a, &a).unwrap();
        assert_eq!(eval.loss, 0.0);
        assert_eq!(eval.output_grads(), vec![[0.0; 3]]);
    }

    #[test]
    fn residual_partials_match_finite_differences() {
        let lv = LvParams::new(1.1, 0.4, 0.4, 0.1).unwrap();
        let base = ResidualInputs { y: 0.9, y1: 0.15, y2: -0.05 };
        let analytic = residual_partials(base, &lv);
        let eps = 1e-6;
        for c in 0..3 {
            let shift = |s: f64| {
                let mut t = [base.y, base.y1, base.y2];
                t[c] += s;
                residual_y(t.into(), &lv, DEFAULT_EPS_Y).unwrap()
            };
            let fd = (shift(eps) - shift(-eps)) / (2.0 * eps);
            assert!(close(analytic[c], fd, 1e-8), "channel {c}: {} vs {fd}", analytic[c]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn residual_independent_of_beta(
            y in 0.1f64..10.0, y1 in -5.0f64..5.0, y2 in -5.0f64..5.0,
            a in 0.05f64..3.0, b1 in 0.05f64..10.0, b2 in 0.05f64..10.0,
            g in 0.05f64..3.0, d in 0.05f64..3.0,
        ) {
            let input = ResidualInputs { y, y1, y2 };
            let r1 = residual_y(input, &LvParams::new(a, b1, g, d).unwrap(), DEFAULT_EPS_Y).unwrap();
            let r2 = residual_y(input, &LvParams::new(a, b2, g, d).unwrap(), DEFAULT_EPS_Y).unwrap();
            prop_assert!(close(r1, r2, 1e-10), "{r1} vs {r2}");
        }

        #[test]
        fn residual_closed_form(
            y in 0.1f64..10.0, y1 in -5.0f64..5.0, y2 in -5.0f64..5.0,
            a in 0.05f64..3.0, b in 0.05f64..10.0, g in 0.05f64..3.0, d in 0.05f64..3.0,
        ) {
            let r = residual_y(ResidualInputs { y, y1, y2 }, &LvParams::new(a, b, g, d).unwrap(), DEFAULT_EPS_Y).unwrap();
            let u = a * y - y1;
            let closed = y2 - a * a * y + u * (2.0 * a - d - g) - u * u / y;
            prop_assert!(close(r, closed, 1e-10), "{r} vs {closed}");
        }

        #[test]
        fn train_loss_non_negative(
            p in prop::collection::vec((0.5f64..1.5, -1.0f64..1.0, -1.0f64..1.0), 1..10),
            shift in -0.4f64..0.4,
        ) {
            let pred: Vec<Triple> = p.iter().map(|&(a, b, c)| [a, b, c]).collect();
            let real: Vec<Triple> = pred.iter().map(|t| [t[0] + shift, t[1], t[2]]).collect();
            let l = train_loss(&pred, &real, &LvParams::default(), DEFAULT_EPS_Y).unwrap();
            prop_assert!(l >= 0.0);
        }
    }
}
