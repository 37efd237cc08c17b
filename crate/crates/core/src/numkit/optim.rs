use super::{Gradients, ParamStore, Tensor};

/// Adam with lazy row updates for parameters whose gradient came only
/// from row lookups: untouched embedding rows keep their value and moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Option<Tensor>>,
    v: Vec<Option<Tensor>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        if self.m.len() < params.len() {
            self.m.resize(params.len(), None);
            self.v.resize(params.len(), None);
        }
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (id, g) in grads.iter() {
            let i = id.index();
            if i >= params.len() {
                continue;
            }
            let p = params.tensor_mut(id);
            let m = self.m[i].get_or_insert_with(|| Tensor::zeros(p.shape()));
            let v = self.v[i].get_or_insert_with(|| Tensor::zeros(p.shape()));
            let cols = p.cols();
            let ranges: Vec<std::ops::Range<usize>> = match grads.touched_rows(id) {
                Some(rows) => rows.iter().map(|&r| r * cols..(r + 1) * cols).collect(),
                None => vec![0..p.len()],
            };
            let (pd, md, vd, gd) = (p.data_mut(), m.data_mut(), v.data_mut(), g.data());
            for range in ranges {
                for k in range {
                    md[k] = self.beta1 * md[k] + (1.0 - self.beta1) * gd[k];
                    vd[k] = self.beta2 * vd[k] + (1.0 - self.beta2) * gd[k] * gd[k];
                    let mh = md[k] / bc1;
                    let vh = vd[k] / bc2;
                    pd[k] -= self.lr * mh / (vh.sqrt() + self.eps);
                }
            }
        }
    }
}
