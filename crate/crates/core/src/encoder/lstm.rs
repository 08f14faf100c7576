use rand::Rng;

use super::init::uniform;
use crate::error::{Error, Result};
use crate::numkernel::{ParamId, ParamStore, Tape, Tensor2, Var};

pub const FORGET_BIAS: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    /// Consumes the sequence last element first.
    Backward,
}

/// Standard LSTM cell without peepholes. Gate blocks are stacked in the
/// order input, forget, candidate, output.
///
/// `w_input` is `4h × d_in`, `w_hidden` is `4h × h`, `bias` is `1 × 4h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmCell {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let w_input = store.add(
            format!("{prefix}.w_input"),
            uniform(4 * hidden, input_dim, 1.0 / (input_dim as f64).sqrt(), rng),
        );
        let w_hidden = store.add(
            format!("{prefix}.w_hidden"),
            uniform(4 * hidden, hidden, 1.0 / (hidden as f64).sqrt(), rng),
        );
        let mut b = Tensor2::zeros(1, 4 * hidden);
        b.data_mut()[hidden..2 * hidden].fill(FORGET_BIAS);
        let bias = store.add(format!("{prefix}.bias"), b);
        LstmCell {
            w_input,
            w_hidden,
            bias,
            input_dim,
            hidden,
        }
    }

    /// Re-attaches a cell stored under `prefix`, checking shapes.
    pub fn from_store(store: &ParamStore, prefix: &str, input_dim: usize, hidden: usize) -> Result<Self> {
        let get = |suffix: &str, shape: (usize, usize)| -> Result<ParamId> {
            let name = format!("{prefix}.{suffix}");
            let id = store
                .find(&name)
                .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
            if store.get(id).shape() != shape {
                return Err(Error::Format(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    store.get(id).shape()
                )));
            }
            Ok(id)
        };
        Ok(LstmCell {
            w_input: get("w_input", (4 * hidden, input_dim))?,
            w_hidden: get("w_hidden", (4 * hidden, hidden))?,
            bias: get("bias", (1, 4 * hidden))?,
            input_dim,
            hidden,
        })
    }

    pub fn param_ids(&self) -> [ParamId; 3] {
        [self.w_input, self.w_hidden, self.bias]
    }

    /// Input projection `x · W_inputᵀ + b` for every row of `inputs`.
    fn project(&self, tape: &mut Tape<'_>, inputs: Var) -> Result<Var> {
        let (_, cols) = tape.shape(inputs);
        if cols != self.input_dim {
            return Err(Error::shape("lstm input", (1, self.input_dim), tape.shape(inputs)));
        }
        let w = tape.param(self.w_input);
        let b = tape.param(self.bias);
        let xw = tape.matmul_t(inputs, w)?;
        tape.add_row(xw, b)
    }

    fn step(&self, tape: &mut Tape<'_>, pre: Var, prev: Option<(Var, Var)>) -> Result<(Var, Var)> {
        let h = self.hidden;
        let gates = match prev {
            Some((hp, _)) => {
                let w = tape.param(self.w_hidden);
                let rec = tape.matmul_t(hp, w)?;
                tape.add(pre, rec)?
            }
            None => pre,
        };
        let i = tape.slice_cols(gates, 0, h)?;
        let i = tape.sigmoid(i);
        let g = tape.slice_cols(gates, 2 * h, h)?;
        let g = tape.tanh(g);
        let o = tape.slice_cols(gates, 3 * h, h)?;
        let o = tape.sigmoid(o);
        let ig = tape.mul(i, g)?;
        let c = match prev {
            Some((_, cp)) => {
                let f = tape.slice_cols(gates, h, h)?;
                let f = tape.sigmoid(f);
                let fc = tape.mul(f, cp)?;
                tape.add(fc, ig)?
            }
            None => ig,
        };
        let tc = tape.tanh(c);
        let hn = tape.mul(o, tc)?;
        Ok((hn, c))
    }

    /// Hidden state after each step, in input-row order: for `Forward`,
    /// entry `t` has consumed rows `0..=t`; for `Backward`, rows `t..n`.
    pub fn states(&self, tape: &mut Tape<'_>, inputs: Var, direction: Direction) -> Result<Vec<Var>> {
        let n = tape.shape(inputs).0;
        let pre = self.project(tape, inputs)?;
        let order: Vec<usize> = match direction {
            Direction::Forward => (0..n).collect(),
            Direction::Backward => (0..n).rev().collect(),
        };
        let mut out = vec![None; n];
        let mut prev = None;
        for t in order {
            let row = tape.row(pre, t)?;
            let (h, c) = self.step(tape, row, prev)?;
            out[t] = Some(h);
            prev = Some((h, c));
        }
        Ok(out.into_iter().map(|v| v.expect("every row visited")).collect())
    }

    /// Final hidden state after consuming all rows of `inputs`.
    pub fn run(&self, tape: &mut Tape<'_>, inputs: Var, direction: Direction) -> Result<Var> {
        let n = tape.shape(inputs).0;
        if n == 0 {
            return Ok(self.zero_state(tape));
        }
        let states = self.states(tape, inputs, direction)?;
        Ok(match direction {
            Direction::Forward => states[n - 1],
            Direction::Backward => states[0],
        })
    }

    /// Same as [`run`](Self::run) over a list of `1 × d_in` rows; an empty
    /// list yields the zero initial state.
    pub fn run_rows(&self, tape: &mut Tape<'_>, rows: &[Var], direction: Direction) -> Result<Var> {
        if rows.is_empty() {
            return Ok(self.zero_state(tape));
        }
        let x = tape.stack_rows(rows)?;
        self.run(tape, x, direction)
    }

    pub fn zero_state(&self, tape: &mut Tape<'_>) -> Var {
        tape.input(Tensor2::zeros(1, self.hidden))
    }
}
