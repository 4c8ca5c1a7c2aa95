use crate::error::{Error, Result};
use crate::ndgrad::Array;

/// Adam with decoupled weight decay: the decay term multiplies the weights
/// directly and never enters the moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Array>,
    v: Vec<Array>,
}

impl Adam {
    pub fn new(params: &[Array], beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        let zeros = || params.iter().map(|p| Array::zeros(p.shape())).collect();
        Self {
            beta1,
            beta2,
            eps,
            weight_decay,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut [Array], grads: &[Array], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::shape(
                "adam",
                format!("{} params, {} grads", params.len(), grads.len()),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.shape() != g.shape() {
                return Err(Error::shape("adam", format!("{:?} vs {:?}", p.shape(), g.shape())));
            }
            let (b1, b2) = (self.beta1, self.beta2);
            let m = m.data_mut();
            let v = v.data_mut();
            for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let step = (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                *w -= lr * (step + self.weight_decay * *w);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut p = vec![Array::new(&[3], vec![1.0, -2.0, 0.5]).unwrap()];
        let g = vec![Array::new(&[3], vec![0.3, -4.0, 0.0]).unwrap()];
        let mut opt = Adam::new(&p, 0.9, 0.999, 1e-8, 0.0);
        opt.update(&mut p, &g, 0.1).unwrap();
        let want = [0.9, -1.9, 0.5];
        for (a, b) in p[0].data().iter().zip(want) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn decay_is_decoupled() {
        let mut p = vec![Array::new(&[1], vec![2.0]).unwrap()];
        let g = vec![Array::zeros(&[1])];
        let mut opt = Adam::new(&p, 0.9, 0.999, 1e-8, 0.5);
        opt.update(&mut p, &g, 0.1).unwrap();
        assert!((p[0].data()[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);
    }
}
