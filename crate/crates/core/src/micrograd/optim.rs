use super::ParamSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub epochs: usize,
    pub batch: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            seed: 0,
            epochs: 1,
            batch: 1,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed: it freezes the parameters
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be nonnegative",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::InvalidArgument("epochs and batch must be positive".into()));
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum: `v ← μv + g`, `p ← p − lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    cfg: SgdConfig,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(cfg: SgdConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            velocity: Vec::new(),
        })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.cfg
    }

    /// Apply one update from the accumulated gradients, then zero them.
    pub fn step(&mut self, params: &mut ParamSet) {
        if self.velocity.len() != params.len() {
            self.velocity = params.ids().map(|id| vec![0.0; params.get(id).len()]).collect();
        }
        let (lr, mu) = (self.cfg.learning_rate, self.cfg.momentum);
        for (id, vel) in params.ids().collect::<Vec<_>>().into_iter().zip(&mut self.velocity) {
            let t = params.get_mut(id);
            let g = t.grad().expect("parameters carry gradients").to_vec();
            for ((p, v), g) in t.data_mut().iter_mut().zip(vel.iter_mut()).zip(g) {
                *v = mu * *v + g;
                *p -= lr * *v;
            }
            t.zero_grad();
        }
    }
}
