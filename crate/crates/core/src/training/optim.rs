use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ParamKind, Parameters};
use crate::tensor::Scalar;

/// Momentum buffers plus the learning-rate schedule state.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub velocity: Parameters<T>,
    pub lr: f64,
    /// Evaluations since the validation objective last improved.
    pub plateau_counter: usize,
    /// Best validation objective so far; `None` before the first evaluation.
    pub best: Option<f64>,
    pub step: u64,
}

/// Scalar part of [`OptimizerState`], as stored in checkpoint headers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub lr: f64,
    pub plateau_counter: usize,
    pub best: Option<f64>,
    pub step: u64,
}

impl<T: Scalar> OptimizerState<T> {
    /// Zero buffers for every trainable entry of `params`.
    pub fn new(params: &Parameters<T>, lr: f64) -> Self {
        Self {
            velocity: params.trainable().zeros_like(),
            lr,
            plateau_counter: 0,
            best: None,
            step: 0,
        }
    }

    pub fn schedule(&self) -> ScheduleState {
        ScheduleState {
            lr: self.lr,
            plateau_counter: self.plateau_counter,
            best: self.best,
            step: self.step,
        }
    }

    pub fn from_parts(velocity: Parameters<T>, s: ScheduleState) -> Self {
        Self {
            velocity,
            lr: s.lr,
            plateau_counter: s.plateau_counter,
            best: s.best,
            step: s.step,
        }
    }
}

/// Hyper-parameters of one SGD update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdSettings {
    pub momentum: f64,
    pub weight_decay: f64,
}

/// `v ← μ·v − lr·s·(g + λ·w)`, `w ← w + v` for every gradient entry, where
/// `s = lr_scale(name)`. Batch-norm affine terms get no decay.
pub fn sgd_momentum_step<T: Scalar>(
    params: &mut Parameters<T>,
    grads: &Parameters<T>,
    state: &mut OptimizerState<T>,
    settings: SgdSettings,
    lr_scale: impl Fn(&str) -> f64,
) -> Result<()> {
    for (name, g) in grads.iter() {
        let kind = ParamKind::of(name)
            .ok_or_else(|| Error::Config(format!("unrecognised parameter `{name}`")))?;
        if !kind.trainable() {
            return Err(Error::Usage(format!(
                "gradient given for non-trainable `{name}`"
            )));
        }
        let w = params.get_mut(name)?;
        let v = state.velocity.get_mut(name)?;
        if w.shape() != g.shape() || v.shape() != g.shape() {
            return Err(Error::shape(
                "sgd_momentum_step",
                format!(
                    "`{name}`: param {:?}, grad {:?}, buffer {:?}",
                    w.shape(),
                    g.shape(),
                    v.shape()
                ),
            ));
        }
        let lr = T::of(state.lr * lr_scale(name));
        let mu = T::of(settings.momentum);
        let wd = T::of(if kind.decays() {
            settings.weight_decay
        } else {
            0.0
        });
        for ((wi, vi), &gi) in w.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            *vi = mu * *vi - lr * (gi + wd * *wi);
            *wi += *vi;
        }
    }
    state.step += 1;
    Ok(())
}

/// Plateau rule for the learning rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlateauSettings {
    pub patience: usize,
    /// Minimum decrease of the objective that counts as improvement.
    pub epsilon: f64,
    pub factor: f64,
}

/// Feeds one validation objective to the schedule. Returns true when the
/// learning rate was reduced.
pub fn plateau_step<T: Scalar>(
    state: &mut OptimizerState<T>,
    objective: f64,
    settings: PlateauSettings,
) -> bool {
    match state.best {
        Some(best) if objective >= best - settings.epsilon => {
            state.plateau_counter += 1;
            if state.plateau_counter >= settings.patience {
                state.lr /= settings.factor;
                state.plateau_counter = 0;
                return true;
            }
        }
        _ => {
            state.best = Some(objective);
            state.plateau_counter = 0;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn single(name: &str, w: f64) -> Parameters<f64> {
        let mut p = Parameters::new();
        p.insert(name, Tensor::from_f64(&[1], &[w]).unwrap());
        p
    }

    const PLATEAU: PlateauSettings = PlateauSettings {
        patience: 5,
        epsilon: 1e-3,
        factor: 10.0,
    };

    #[test]
    fn hand_iterated_momentum() {
        let mut p = single("a.weight", 0.0);
        let g = single("a.weight", 1.0);
        let mut s = OptimizerState::new(&p, 0.1);
        let cfg = SgdSettings {
            momentum: 0.9,
            weight_decay: 0.0,
        };
        sgd_momentum_step(&mut p, &g, &mut s, cfg, |_| 1.0).unwrap();
        assert!((s.velocity.get("a.weight").unwrap().data()[0] + 0.1).abs() < 1e-15);
        assert!((p.get("a.weight").unwrap().data()[0] + 0.1).abs() < 1e-15);
        sgd_momentum_step(&mut p, &g, &mut s, cfg, |_| 1.0).unwrap();
        assert!((s.velocity.get("a.weight").unwrap().data()[0] + 0.19).abs() < 1e-15);
        assert!((p.get("a.weight").unwrap().data()[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn plain_sgd_and_no_decay_on_gamma() {
        let mut p = single("a.weight", 2.0);
        p.insert("a.bn.gamma", Tensor::from_f64(&[1], &[2.0]).unwrap());
        let mut g = single("a.weight", 0.5);
        g.insert("a.bn.gamma", Tensor::from_f64(&[1], &[0.0]).unwrap());
        let mut s = OptimizerState::new(&p, 0.1);
        let cfg = SgdSettings {
            momentum: 0.0,
            weight_decay: 0.0,
        };
        sgd_momentum_step(&mut p, &g, &mut s, cfg, |_| 1.0).unwrap();
        assert_eq!(p.get("a.weight").unwrap().data()[0], 2.0 - 0.1 * 0.5);

        let cfg = SgdSettings {
            momentum: 0.0,
            weight_decay: 0.5,
        };
        sgd_momentum_step(&mut p, &g, &mut s, cfg, |_| 1.0).unwrap();
        assert_eq!(p.get("a.bn.gamma").unwrap().data()[0], 2.0);
    }

    #[test]
    fn improving_history_keeps_lr() {
        let mut s = OptimizerState::new(&single("a.weight", 0.0), 0.1);
        for i in 0..20 {
            assert!(!plateau_step(&mut s, 10.0 - i as f64, PLATEAU));
        }
        assert_eq!(s.lr, 0.1);
    }

    #[test]
    fn flat_history_drops_after_patience() {
        let mut s = OptimizerState::new(&single("a.weight", 0.0), 0.1);
        for _ in 0..5 {
            assert!(!plateau_step(&mut s, 1.0, PLATEAU));
        }
        assert!(plateau_step(&mut s, 1.0, PLATEAU));
        assert!((s.lr - 0.01).abs() < 1e-15);
        assert_eq!(s.plateau_counter, 0);
    }

    #[test]
    fn improvement_after_drop_resets_counter() {
        let mut s = OptimizerState::new(&single("a.weight", 0.0), 0.1);
        for _ in 0..6 {
            plateau_step(&mut s, 1.0, PLATEAU);
        }
        plateau_step(&mut s, 1.0, PLATEAU);
        assert_eq!(s.plateau_counter, 1);
        plateau_step(&mut s, 0.5, PLATEAU);
        assert_eq!(s.plateau_counter, 0);
        assert_eq!(s.best, Some(0.5));
    }

    #[test]
    fn tiny_improvement_does_not_count() {
        let mut s = OptimizerState::new(&single("a.weight", 0.0), 0.1);
        plateau_step(&mut s, 1.0, PLATEAU);
        plateau_step(&mut s, 1.0 - 5e-4, PLATEAU);
        assert_eq!(s.plateau_counter, 1);
        assert_eq!(s.best, Some(1.0));
    }
}
