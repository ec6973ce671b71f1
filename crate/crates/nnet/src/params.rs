use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NetError;
use crate::spec::NetSpec;

/// Flat parameter vector laid out by [`NetSpec::layout`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub values: Vec<f64>,
}

impl NetParams {
    pub fn zeros(spec: &NetSpec) -> Self {
        NetParams {
            values: vec![0.0; spec.param_count()],
        }
    }

    /// Uniform `±1/sqrt(fan_in)` initialization.
    pub fn init(spec: &NetSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = spec.layout();
        let mut values = vec![0.0; layout.len()];
        for b in &layout.blocks {
            let r = 1.0 / (b.fan_in.max(1) as f64).sqrt();
            for v in &mut values[b.range()] {
                *v = rng.random_range(-r..r);
            }
        }
        NetParams { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check(&self, spec: &NetSpec) -> Result<(), NetError> {
        let n = spec.param_count();
        if self.values.len() != n {
            return Err(NetError::Shape(format!("{} parameters for a spec needing {n}", self.values.len())));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(NetError::Shape(format!("parameter {i} is not finite")));
        }
        Ok(())
    }

    /// Values of the named block.
    pub fn block<'a>(&'a self, spec: &NetSpec, name: &str) -> Option<&'a [f64]> {
        spec.layout().block(name).map(|b| &self.values[b.range()])
    }

    pub fn block_mut<'a>(&'a mut self, spec: &NetSpec, name: &str) -> Option<&'a mut [f64]> {
        spec.layout().block(name).map(move |b| &mut self.values[b.range()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{Activation, Arch};

    #[test]
    fn init_is_seeded_and_bounded() {
        let spec = NetSpec::new(Arch::Mlp, 1, 10, Activation::Relu).with_io(1, 16, 4);
        let a = NetParams::init(&spec, 7);
        assert_eq!(a, NetParams::init(&spec, 7));
        assert_ne!(a, NetParams::init(&spec, 8));
        let w = a.block(&spec, "dense0.w").unwrap();
        assert!(w.iter().all(|v| v.abs() <= 0.25));
        a.check(&spec).unwrap();
        let mut bad = a.clone();
        bad.values.pop();
        assert!(bad.check(&spec).is_err());
    }
}
