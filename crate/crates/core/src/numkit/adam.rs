use ndarray::Zip;

use super::mlp::{MlpGrads, MlpParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: MlpGrads,
    v: MlpGrads,
    t: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Self {
        Self {
            config,
            m: MlpGrads::zeros_like(params),
            v: MlpGrads::zeros_like(params),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &MlpGrads {
        &self.m
    }

    pub fn second_moment(&self) -> &MlpGrads {
        &self.v
    }

    /// One bias-corrected Adam update, in place. Parameters are untouched if
    /// any gradient entry is non-finite.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads) -> Result<()> {
        if !grads.matches(params) || !self.m.matches(params) {
            return Err(Error::shape("gradient / moment shapes do not mirror parameters"));
        }
        if let Some(name) = grads.first_non_finite() {
            return Err(Error::NonFinite(name));
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: &f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
        };
        for (k, layer) in params.layers_mut().iter_mut().enumerate() {
            let (mw, mb) = &mut self.m.layers[k];
            let (vw, vb) = &mut self.v.layers[k];
            let (gw, gb) = &grads.layers[k];
            Zip::from(&mut layer.weight)
                .and(mw)
                .and(vw)
                .and(gw)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(mb)
                .and(vb)
                .and(gb)
                .for_each(update);
        }
        Ok(())
    }
}

/// Polyak averaging: every entry becomes `(1 - tau) * target + tau * online`.
pub fn soft_update(target: &MlpParams, online: &MlpParams, tau: f64) -> Result<MlpParams> {
    let mut out = target.clone();
    soft_update_in_place(&mut out, online, tau)?;
    Ok(out)
}

pub fn soft_update_in_place(target: &mut MlpParams, online: &MlpParams, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Range {
            name: "tau",
            detail: format!("{tau} not in [0, 1]"),
        });
    }
    if !target.same_shape(online) {
        return Err(Error::shape("target and online networks differ in shape"));
    }
    // Exact endpoints: (1 - 1) * t + 1 * o can differ from o by rounding.
    if tau == 1.0 {
        *target = online.clone();
        return Ok(());
    }
    if tau == 0.0 {
        return Ok(());
    }
    for (t, o) in target.layers_mut().iter_mut().zip(online.layers()) {
        Zip::from(&mut t.weight)
            .and(&o.weight)
            .for_each(|t, &o| *t = (1.0 - tau) * *t + tau * o);
        Zip::from(&mut t.bias)
            .and(&o.bias)
            .for_each(|t, &o| *t = (1.0 - tau) * *t + tau * o);
    }
    Ok(())
}
