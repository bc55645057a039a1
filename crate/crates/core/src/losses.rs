//! Prototype-survival fusion loss and its analytic gradients.
//!
//! Prototypes and class centers are constants here: gradients flow only to
//! fused features (prototype terms and, through the matcher, the survival
//! term) and to logits.

use serde::Serialize;

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::library::PrototypeLibrary;
use crate::matching::{logits_with_jacobian, sigmoid};
use crate::scalar::{all_finite, cast, from_usize, widen, Scalar};
use crate::similarity::{dissimilarity_grad, pmdsim_with_grad, power_mean_distance};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// A loss value together with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct WithGrad<T> {
    pub value: T,
    pub grad: Vec<T>,
}

fn check_feature<T: Scalar>(f: &[T], dim: usize) -> Result<()> {
    if f.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: f.len(),
        });
    }
    if !all_finite(f) {
        return Err(Error::NonFinite("feature"));
    }
    Ok(())
}

/// Contrastive term `max(-log(Σexp(S⁺) / (Σexp(S⁺) + Σexp(S⁻))), 0)` where
/// positives are the effective prototypes of `class` and negatives those of
/// every other class.
pub fn contrastive_loss<T: Scalar>(
    f: &[T],
    lib: &PrototypeLibrary<T>,
    class: usize,
    power: T,
) -> Result<WithGrad<T>> {
    check_feature(f, lib.dim())?;
    if class >= lib.classes() {
        return Err(Error::OutOfRange {
            what: "class index",
            value: class,
            bound: lib.classes(),
        });
    }
    if lib.classes() < 2 {
        return Err(Error::Undefined("contrastive loss without negative prototypes"));
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for c in 0..lib.classes() {
        for p in lib.effective(c) {
            let (s, g) = pmdsim_with_grad(f, &p.vector, power);
            if c == class {
                pos.push((s.exp(), g));
            } else {
                neg.push((s.exp(), g));
            }
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Empty("positive or negative prototype set"));
    }
    let a: T = pos.iter().map(|(e, _)| *e).sum();
    let b: T = neg.iter().map(|(e, _)| *e).sum();
    let inner = (b / a).ln_1p();
    let mut grad = vec![T::zero(); f.len()];
    if inner <= T::zero() {
        return Ok(WithGrad { value: T::zero(), grad });
    }
    let total = a + b;
    for (e, g) in &pos {
        let w = *e * (T::one() / total - T::one() / a);
        for (acc, &x) in grad.iter_mut().zip(g) {
            *acc = *acc + w * x;
        }
    }
    for (e, g) in &neg {
        let w = *e / total;
        for (acc, &x) in grad.iter_mut().zip(g) {
            *acc = *acc + w * x;
        }
    }
    Ok(WithGrad { value: inner, grad })
}

/// Center term `σ / S(f, μ_c)`; minimal (equal to `σ`) at `f = μ_c`.
pub fn center_loss<T: Scalar>(f: &[T], center: &[T], sigma: T, power: T) -> Result<WithGrad<T>> {
    check_feature(f, center.len())?;
    if !all_finite(center) {
        return Err(Error::NonFinite("class center"));
    }
    let value = sigma * (T::one() + power_mean_distance(f, center, power));
    let grad = dissimilarity_grad(f, center, power)
        .into_iter()
        .map(|g| sigma * g)
        .collect();
    Ok(WithGrad { value, grad })
}

/// Terms of the discrete-time survival likelihood for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct NllTerms<T> {
    /// `-(1-Cs)·(log Surv(Y) + log h(Y))`.
    pub uncensored: T,
    /// `-Cs·log Surv(Y+1)`.
    pub censored: T,
    /// `(1-α)·(uncensored + censored) + α·censored`.
    pub loss: T,
    /// Gradient of `loss` with respect to the logits.
    pub grad: Vec<T>,
}

/// `log(clamp(p))` and the factor its derivative keeps (0 when clamped).
fn clamped_log<T: Scalar>(p: T) -> (T, T) {
    let lo: T = cast(PROB_CLAMP);
    let hi = T::one() - lo;
    if p < lo {
        (lo.ln(), T::zero())
    } else if p > hi {
        (hi.ln(), T::zero())
    } else {
        (p.ln(), T::one())
    }
}

/// Negative log-likelihood of a discrete-time hazard model with
/// `h(s) = sigmoid(logit_s)` and `Surv(t) = Π_{s<t} (1 - h(s))`.
pub fn nll_surv_loss<T: Scalar>(logits: &[T], y: usize, censored: bool, alpha_loss: T) -> Result<NllTerms<T>> {
    let k = logits.len();
    if y >= k {
        return Err(Error::OutOfRange {
            what: "time bin",
            value: y,
            bound: k,
        });
    }
    if !all_finite(logits) {
        return Err(Error::NonFinite("logits"));
    }
    let hazards: Vec<T> = logits.iter().map(|&z| sigmoid(z)).collect();
    let keep: Vec<T> = logits.iter().map(|&z| sigmoid(-z)).collect();
    let surv_before = |t: usize| keep[..t].iter().fold(T::one(), |acc, &x| acc * x);
    let mut grad = vec![T::zero(); k];
    let one = T::one();
    let (uncensored, censored_term);
    if censored {
        let (log_s, live) = clamped_log(surv_before(y + 1));
        censored_term = -log_s;
        uncensored = T::zero();
        // d(-log Surv(Y+1))/dz_s = h_s for s <= Y, zero beyond
        for s in 0..=y {
            grad[s] = live * hazards[s];
        }
    } else {
        let (log_s, live_s) = clamped_log(surv_before(y));
        let (log_h, live_h) = clamped_log(hazards[y]);
        uncensored = -(log_s + log_h);
        censored_term = T::zero();
        for s in 0..y {
            grad[s] = live_s * hazards[s];
        }
        grad[y] = -live_h * keep[y];
    }
    let w_total = if censored { one } else { one - alpha_loss };
    let loss = (one - alpha_loss) * (uncensored + censored_term) + alpha_loss * censored_term;
    for g in &mut grad {
        *g = *g * w_total;
    }
    Ok(NllTerms {
        uncensored,
        censored: censored_term,
        loss,
        grad,
    })
}

/// One labeled fused feature in a batch.
#[derive(Debug, Clone, Copy)]
pub struct LossSample<'a, T> {
    pub feature: &'a [T],
    pub time_bin: usize,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleLoss<T> {
    pub contra: T,
    pub center: T,
    pub uncensored: T,
    pub censored: T,
    pub surv: T,
}

/// Batch-mean loss components.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown<T> {
    pub contra: T,
    pub center: T,
    pub prototypes: T,
    pub uncensored: T,
    pub censored: T,
    pub surv: T,
    pub total: T,
    pub per_sample: Vec<SampleLoss<T>>,
}

#[derive(Serialize)]
struct BreakdownLine {
    epoch: u64,
    step: u64,
    batch: usize,
    contra: f64,
    center: f64,
    prototypes: f64,
    uncensored: f64,
    censored: f64,
    surv: f64,
    total: f64,
}

impl<T: Scalar> LossBreakdown<T> {
    pub fn is_finite(&self) -> bool {
        [self.contra, self.center, self.prototypes, self.uncensored, self.censored, self.surv, self.total]
            .iter()
            .all(|x| x.is_finite())
    }

    /// Training-log line (batch means only).
    pub fn to_json_line(&self, epoch: u64, step: u64) -> String {
        serde_json::to_string(&BreakdownLine {
            epoch,
            step,
            batch: self.per_sample.len(),
            contra: widen(self.contra),
            center: widen(self.center),
            prototypes: widen(self.prototypes),
            uncensored: widen(self.uncensored),
            censored: widen(self.censored),
            surv: widen(self.surv),
            total: widen(self.total),
        })
        .expect("breakdown serializes")
    }
}

/// Loss value, breakdown and gradients for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss<T> {
    pub breakdown: LossBreakdown<T>,
    /// `dL_total/df_i` per sample through both the prototype terms and the
    /// matcher's logits.
    pub feature_grads: Vec<Vec<T>>,
    /// `dL_total/dlogits_i` per sample.
    pub logit_grads: Vec<Vec<T>>,
}

/// `L_total = β·(L_contra + L_center) + (1-β)·L_surv` over a batch, with
/// every component averaged over the batch. Summation runs in batch order.
pub fn total_loss<T: Scalar>(
    batch: &[LossSample<'_, T>],
    lib: &PrototypeLibrary<T>,
    cfg: &EngineConfig,
) -> Result<BatchLoss<T>> {
    if batch.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    let power: T = cast(cfg.power);
    let sigma: T = cast(cfg.sigma_center);
    let alpha: T = cast(cfg.alpha_loss);
    let beta: T = cast(cfg.beta_loss);
    let inv_b = T::one() / from_usize(batch.len());
    let mut per_sample = Vec::with_capacity(batch.len());
    let mut feature_grads = Vec::with_capacity(batch.len());
    let mut logit_grads = Vec::with_capacity(batch.len());
    for s in batch {
        if s.time_bin >= lib.classes() {
            return Err(Error::OutOfRange {
                what: "time bin",
                value: s.time_bin,
                bound: lib.classes(),
            });
        }
        let contra = contrastive_loss(s.feature, lib, s.time_bin, power)?;
        let center = center_loss(s.feature, lib.center(s.time_bin), sigma, power)?;
        let (logits, jac) = logits_with_jacobian(s.feature, lib, cfg);
        let nll = nll_surv_loss(&logits, s.time_bin, s.censored, alpha)?;

        let w_proto = beta * inv_b;
        let w_surv = (T::one() - beta) * inv_b;
        let mut g: Vec<T> = contra
            .grad
            .iter()
            .zip(&center.grad)
            .map(|(&a, &b)| w_proto * (a + b))
            .collect();
        for (row, &gl) in jac.iter().zip(&nll.grad) {
            for (acc, &x) in g.iter_mut().zip(row) {
                *acc = *acc + w_surv * gl * x;
            }
        }
        feature_grads.push(g);
        logit_grads.push(nll.grad.iter().map(|&x| w_surv * x).collect());
        per_sample.push(SampleLoss {
            contra: contra.value,
            center: center.value,
            uncensored: nll.uncensored,
            censored: nll.censored,
            surv: nll.loss,
        });
    }
    let mean = |pick: fn(&SampleLoss<T>) -> T| per_sample.iter().map(pick).sum::<T>() * inv_b;
    let contra = mean(|s| s.contra);
    let center = mean(|s| s.center);
    let uncensored = mean(|s| s.uncensored);
    let censored = mean(|s| s.censored);
    let surv = mean(|s| s.surv);
    let prototypes = contra + center;
    let total = beta * prototypes + (T::one() - beta) * surv;
    Ok(BatchLoss {
        breakdown: LossBreakdown {
            contra,
            center,
            prototypes,
            uncensored,
            censored,
            surv,
            total,
            per_sample,
        },
        feature_grads,
        logit_grads,
    })
}
