use super::config::OptimizerKind;
use crate::numkernel::{GradSlot, ParamGrads, ParamId, ParamStore, Tensor2};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Scales `grads` so their global norm is at most `max_norm`; returns the
/// norm before scaling.
pub fn clip_gradients(grads: &mut ParamGrads, max_norm: f64) -> f64 {
    let norm = grads.norm_sq().sqrt();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

fn grad_row(slot: Option<&GradSlot>, r: usize) -> Option<&[f64]> {
    match slot? {
        GradSlot::Dense(t) => Some(t.row(r)),
        GradSlot::Rows { rows, .. } => rows.get(&r).map(Vec::as_slice),
    }
}

/// SGD or Adam over every tensor of a [`ParamStore`]. Weight decay, when
/// set, adds `weight_decay · θ` to each gradient.
///
/// Row-sparse gradients are treated as dense with zeros elsewhere, so Adam
/// moments decay on untouched rows exactly as in the dense update.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    weight_decay: f64,
    steps: u64,
    first: Vec<Tensor2>,
    second: Vec<Tensor2>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, store: &ParamStore) -> Self {
        let moments = || -> Vec<Tensor2> {
            match kind {
                OptimizerKind::Adam => store
                    .iter()
                    .map(|(_, _, t)| Tensor2::zeros(t.rows(), t.cols()))
                    .collect(),
                OptimizerKind::Sgd => Vec::new(),
            }
        };
        Optimizer {
            kind,
            learning_rate,
            weight_decay: 0.0,
            steps: 0,
            first: moments(),
            second: moments(),
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn weight_decay(&self) -> f64 {
        self.weight_decay
    }

    /// Updates applied so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &ParamGrads) {
        self.steps += 1;
        let ids: Vec<ParamId> = store.ids().collect();
        let lr = self.learning_rate;
        let wd = self.weight_decay;
        let t = self.steps as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for id in ids {
            let slot = grads.slot(id);
            if slot.is_none() && wd == 0.0 && self.kind == OptimizerKind::Sgd {
                continue;
            }
            let param = store.get_mut(id);
            let cols = param.cols();
            for r in 0..param.rows() {
                let g = grad_row(slot, r);
                let theta = param.row_mut(r);
                match self.kind {
                    OptimizerKind::Sgd => {
                        for c in 0..cols {
                            let gc = g.map_or(0.0, |g| g[c]) + wd * theta[c];
                            theta[c] -= lr * gc;
                        }
                    }
                    OptimizerKind::Adam => {
                        let m = self.first[id.index()].row_mut(r);
                        let v = self.second[id.index()].row_mut(r);
                        for c in 0..cols {
                            let gc = g.map_or(0.0, |g| g[c]) + wd * theta[c];
                            m[c] = ADAM_BETA1 * m[c] + (1.0 - ADAM_BETA1) * gc;
                            v[c] = ADAM_BETA2 * v[c] + (1.0 - ADAM_BETA2) * gc * gc;
                            let mh = m[c] / c1;
                            let vh = v[c] / c2;
                            theta[c] -= lr * mh / (vh.sqrt() + ADAM_EPS);
                        }
                    }
                }
            }
        }
    }

    /// Moment tensors in parameter order, first moments then second.
    pub(crate) fn state(&self) -> impl Iterator<Item = &Tensor2> {
        self.first.iter().chain(&self.second)
    }

    pub(crate) fn from_state(
        kind: OptimizerKind,
        learning_rate: f64,
        weight_decay: f64,
        steps: u64,
        mut moments: Vec<Tensor2>,
    ) -> Self {
        let second = moments.split_off(moments.len() / 2);
        Optimizer {
            kind,
            learning_rate,
            weight_decay,
            steps,
            first: moments,
            second,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor2::from_vec(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap());
        (s, id)
    }

    fn grads(s: &ParamStore, id: ParamId, g: [f64; 4]) -> ParamGrads {
        let mut out = ParamGrads::zeros_like(s);
        out.dense_mut(id).data_mut().copy_from_slice(&g);
        out
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let (mut s, id) = store();
            let before = s.clone();
            let g = grads(&s, id, [0.3, -1.0, 2.0, 0.1]);
            let mut opt = Optimizer::new(kind, 0.0, &s);
            opt.update(&mut s, &g);
            assert_eq!(s, before);
        }
    }

    #[test]
    fn sgd_step() {
        let (mut s, id) = store();
        let g = grads(&s, id, [1.0, 1.0, -2.0, 0.0]);
        Optimizer::new(OptimizerKind::Sgd, 0.5, &s).update(&mut s, &g);
        assert_eq!(s.get(id).data(), &[0.5, -2.5, 1.5, 3.0]);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let (mut s, id) = store();
        let g = grads(&s, id, [4.0, -0.5, 1e-3, 0.0]);
        Optimizer::new(OptimizerKind::Adam, 0.1, &s).update(&mut s, &g);
        let d = s.get(id).data();
        assert!((d[0] - 0.9).abs() < 1e-6);
        assert!((d[1] + 1.9).abs() < 1e-6);
        assert!((d[2] - 0.4).abs() < 1e-4);
        assert_eq!(d[3], 3.0);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let (s, id) = store();
        let mut g = grads(&s, id, [3.0, 4.0, 0.0, 0.0]);
        assert_eq!(clip_gradients(&mut g, 1.0), 5.0);
        assert!((g.norm_sq().sqrt() - 1.0).abs() < 1e-12);
        let mut g = grads(&s, id, [0.3, 0.4, 0.0, 0.0]);
        clip_gradients(&mut g, 1.0);
        assert_eq!(g.dense(id).data(), &[0.3, 0.4, 0.0, 0.0]);
    }
}
