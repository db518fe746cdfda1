use super::network::{Gradients, Network};
use super::tensor::Tensor;
use super::NnError;

/// Bias-corrected Adam moments for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(net: &Network, lr: f64, beta1: f64) -> Self {
        let m: Vec<Tensor> = net.params().map(Tensor::zeros_like).collect();
        AdamState { step: 0, v: m.clone(), m, lr, beta1, beta2: 0.999, epsilon: 1e-8 }
    }

    pub fn for_tensors<'a>(params: impl IntoIterator<Item = &'a Tensor>, lr: f64, beta1: f64) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(Tensor::zeros_like).collect();
        AdamState { step: 0, v: m.clone(), m, lr, beta1, beta2: 0.999, epsilon: 1e-8 }
    }

    /// One Adam step over parallel parameter and gradient lists.
    pub fn update<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut Tensor>,
        grads: impl IntoIterator<Item = &'a Tensor>,
    ) -> Result<(), NnError> {
        let params: Vec<&mut Tensor> = params.into_iter().collect();
        let grads: Vec<&Tensor> = grads.into_iter().collect();
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(NnError::ParamCount { expected: self.m.len(), got: grads.len().min(params.len()) });
        }
        for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(NnError::ShapeMismatch { expected: p.shape().to_vec(), got: g.shape().to_vec() });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.into_iter().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }

    pub fn step_network(&mut self, net: &mut Network, grads: &Gradients) -> Result<(), NnError> {
        self.update(net.params_mut(), grads.flat())
    }
}
