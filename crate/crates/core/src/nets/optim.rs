use super::layers::ParamSet;
use super::tensor::Tensor;

/// Adaptive-moment optimizer state for one [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub step: u64,
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
}

impl Adam {
    pub fn new(params: &ParamSet<f32>, lr: f32) -> Self {
        let zeros = |t: &Tensor<f32>| Tensor::from_vec(t.shape().to_vec(), vec![0.0; t.len()]);
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.tensors().iter().map(zeros).collect(),
            v: params.tensors().iter().map(zeros).collect(),
        }
    }

    /// Applies one update. Entries of `grads` that are `None` are treated as
    /// zero gradients (moments still decay).
    pub fn update(&mut self, params: &mut ParamSet<f32>, grads: &[Option<Tensor<f32>>]) {
        assert_eq!(grads.len(), params.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let step_size = self.lr / bc1;
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            match &grads[i] {
                Some(g) => {
                    for (((pp, mm), vv), &gg) in p.data_mut().iter_mut().zip(m).zip(v).zip(g.data())
                    {
                        *mm = self.beta1 * *mm + (1.0 - self.beta1) * gg;
                        *vv = self.beta2 * *vv + (1.0 - self.beta2) * gg * gg;
                        *pp -= step_size * *mm / ((*vv / bc2).sqrt() + self.eps);
                    }
                }
                None => {
                    for ((pp, mm), vv) in p.data_mut().iter_mut().zip(m).zip(v) {
                        *mm *= self.beta1;
                        *vv *= self.beta2;
                        *pp -= step_size * *mm / ((*vv / bc2).sqrt() + self.eps);
                    }
                }
            }
        }
    }
}

/// Adam on a single scalar (the log-temperature).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarAdam {
    pub lr: f64,
    pub step: u64,
    pub m: f64,
    pub v: f64,
}

impl ScalarAdam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            step: 0,
            m: 0.0,
            v: 0.0,
        }
    }

    pub fn update(&mut self, x: &mut f64, grad: f64) {
        self.step += 1;
        self.m = 0.9 * self.m + 0.1 * grad;
        self.v = 0.999 * self.v + 0.001 * grad * grad;
        let mh = self.m / (1.0 - 0.9f64.powi(self.step as i32));
        let vh = self.v / (1.0 - 0.999f64.powi(self.step as i32));
        *x -= self.lr * mh / (vh.sqrt() + 1e-8);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut ps = ParamSet::new();
        ps.add("x", Tensor::row(vec![3.0f32, -2.0]));
        let mut opt = Adam::new(&ps, 0.05);
        for _ in 0..2000 {
            let g = ps.get(0).map(|x| 2.0 * x);
            opt.update(&mut ps, &[Some(g)]);
        }
        assert!(ps.get(0).data().iter().all(|x| x.abs() < 1e-2));
    }

    #[test]
    fn scalar_adam_moves_against_gradient() {
        let mut x = 1.0;
        let mut opt = ScalarAdam::new(0.1);
        opt.update(&mut x, 1.0);
        assert!(x < 1.0);
    }
}
