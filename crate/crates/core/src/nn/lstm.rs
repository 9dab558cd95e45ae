use crate::error::{Error, Result};
use crate::nn::params::{Binding, ParamId, ParamStore};
use crate::tensor::{gaussian_init, Tape, Tensor, Value};

pub const HIDDEN_GRID: [usize; 4] = [16, 32, 64, 128];

/// One recurrent step: consumes the input row and previous (hidden, cell)
/// state, produces the next pair. Implemented by the plain and the
/// layer-normalized cell so the bidirectional driver works with either.
pub trait RecurrentCell {
    fn hidden_size(&self) -> usize;
    fn step(
        &self,
        tape: &mut Tape,
        binding: &Binding,
        x: Value,
        h_prev: Value,
        c_prev: Value,
    ) -> Result<(Value, Value)>;
}

/// Gate matrices of a bias-free LSTM. Inputs are row vectors, so every
/// matrix maps from the left: `x[d] · W[d,H]`, `m[H] · W[H,H]`.
pub struct LstmParams {
    pub w_ix: ParamId,
    pub w_im: ParamId,
    pub w_fx: ParamId,
    pub w_fm: ParamId,
    pub w_ox: ParamId,
    pub w_om: ParamId,
    pub w_cx: ParamId,
    pub w_cm: ParamId,
    pub hidden: usize,
}

impl LstmParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        std: f64,
        seed: u64,
    ) -> Result<Self> {
        let mat = |store: &mut ParamStore, name: &str, rows: usize, k: u64| {
            store.add(
                format!("{prefix}.{name}"),
                gaussian_init(&[rows, hidden], std, seed.wrapping_add(k))?,
            )
        };
        Ok(LstmParams {
            w_ix: mat(store, "w_ix", input_dim, 0)?,
            w_im: mat(store, "w_im", hidden, 1)?,
            w_fx: mat(store, "w_fx", input_dim, 2)?,
            w_fm: mat(store, "w_fm", hidden, 3)?,
            w_ox: mat(store, "w_ox", input_dim, 4)?,
            w_om: mat(store, "w_om", hidden, 5)?,
            w_cx: mat(store, "w_cx", input_dim, 6)?,
            w_cm: mat(store, "w_cm", hidden, 7)?,
            hidden,
        })
    }

    fn gate_pre(
        &self,
        tape: &mut Tape,
        b: &Binding,
        x: Value,
        m: Value,
        wx: ParamId,
        wm: ParamId,
    ) -> Result<Value> {
        let from_x = tape.matmul(x, b.value(wx))?;
        let from_m = tape.matmul(m, b.value(wm))?;
        tape.add(from_x, from_m)
    }
}

impl RecurrentCell for LstmParams {
    fn hidden_size(&self) -> usize {
        self.hidden
    }

    /// i = sigmoid(x W_ix + m W_im)        input gate
    /// f = sigmoid(x W_fx + m W_fm)        forget gate
    /// o = sigmoid(x W_ox + m W_om)        output gate
    /// c = f * c_prev + i * tanh(x W_cx + m W_cm)
    /// m = o * c
    fn step(
        &self,
        tape: &mut Tape,
        b: &Binding,
        x: Value,
        m_prev: Value,
        c_prev: Value,
    ) -> Result<(Value, Value)> {
        let pre_i = self.gate_pre(tape, b, x, m_prev, self.w_ix, self.w_im)?;
        let i = tape.sigmoid(pre_i)?;
        let pre_f = self.gate_pre(tape, b, x, m_prev, self.w_fx, self.w_fm)?;
        let f = tape.sigmoid(pre_f)?;
        let pre_o = self.gate_pre(tape, b, x, m_prev, self.w_ox, self.w_om)?;
        let o = tape.sigmoid(pre_o)?;
        let pre_c = self.gate_pre(tape, b, x, m_prev, self.w_cx, self.w_cm)?;
        let cand = tape.tanh(pre_c)?;
        let keep = tape.mul(f, c_prev)?;
        let write = tape.mul(i, cand)?;
        let c = tape.add(keep, write)?;
        let m = tape.mul(o, c)?;
        Ok((m, c))
    }
}

/// Run two independent kernels over the first `n` rows of `seq` — one
/// left-to-right, one right-to-left — and concatenate their outputs
/// aligned by position into a `[T, 2H]` matrix. Rows past `n` are padding
/// and come out zero.
pub fn bilstm_forward<C: RecurrentCell>(
    tape: &mut Tape,
    binding: &Binding,
    fwd: &C,
    bwd: &C,
    seq: Value,
    n: usize,
) -> Result<Value> {
    let shape = tape.shape(seq).to_vec();
    if shape.len() != 2 {
        return Err(Error::Shape(format!(
            "bilstm_forward: need [T,d] sequence, got {shape:?}"
        )));
    }
    let t_total = shape[0];
    if n == 0 {
        return Err(Error::EmptyInput("bilstm_forward over zero steps".into()));
    }
    if n > t_total {
        return Err(Error::Shape(format!(
            "bilstm_forward: {n} valid steps exceed {t_total} rows"
        )));
    }
    let h = fwd.hidden_size();
    if bwd.hidden_size() != h {
        return Err(Error::Shape(format!(
            "bilstm_forward: kernel sizes differ ({h} vs {})",
            bwd.hidden_size()
        )));
    }

    let run = |tape: &mut Tape, cell: &C, reversed: bool| -> Result<Vec<Value>> {
        let mut state_h = tape.constant(Tensor::zeros(&[h]));
        let mut state_c = tape.constant(Tensor::zeros(&[h]));
        let mut outputs: Vec<Option<Value>> = vec![None; n];
        let order: Vec<usize> = if reversed {
            (0..n).rev().collect()
        } else {
            (0..n).collect()
        };
        for t in order {
            let x = tape.row(seq, t)?;
            let (nh, nc) = cell.step(tape, binding, x, state_h, state_c)?;
            state_h = nh;
            state_c = nc;
            outputs[t] = Some(state_h);
        }
        Ok(outputs.into_iter().map(Option::unwrap).collect())
    };

    let fwd_out = run(tape, fwd, false)?;
    let bwd_out = run(tape, bwd, true)?;

    let mut rows = Vec::with_capacity(t_total);
    for t in 0..n {
        rows.push(tape.concat(&[fwd_out[t], bwd_out[t]])?);
    }
    for _ in n..t_total {
        rows.push(tape.constant(Tensor::zeros(&[2 * h])));
    }
    tape.stack_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Mode;
    use crate::tensor::gradcheck;

    fn zero_cell(store: &mut ParamStore, prefix: &str, d: usize, h: usize) -> LstmParams {
        let mat = |store: &mut ParamStore, name: &str, rows: usize| {
            store
                .add(format!("{prefix}.{name}"), Tensor::zeros(&[rows, h]))
                .unwrap()
        };
        LstmParams {
            w_ix: mat(store, "w_ix", d),
            w_im: mat(store, "w_im", h),
            w_fx: mat(store, "w_fx", d),
            w_fm: mat(store, "w_fm", h),
            w_ox: mat(store, "w_ox", d),
            w_om: mat(store, "w_om", h),
            w_cx: mat(store, "w_cx", d),
            w_cm: mat(store, "w_cm", h),
            hidden: h,
        }
    }

    #[test]
    fn zero_weights_halve_the_cell_state() {
        // all gates sigmoid(0)=0.5, candidate tanh(0)=0:
        // c = 0.5*c_prev, m = 0.5*c = 0.25*c_prev
        let mut store = ParamStore::new();
        let cell = zero_cell(&mut store, "cell", 2, 3);
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, Mode::Eval);
        let x = tape.constant(Tensor::from_vec(vec![1.0, -1.0]));
        let m0 = tape.constant(Tensor::zeros(&[3]));
        let c0 = tape.constant(Tensor::from_vec(vec![0.8, -0.4, 2.0]));
        let (m, c) = cell.step(&mut tape, &bind, x, m0, c0).unwrap();
        assert_eq!(tape.data(c).data(), &[0.4, -0.2, 1.0]);
        assert_eq!(tape.data(m).data(), &[0.2, -0.1, 0.5]);
    }

    #[test]
    fn zero_cell_state_gives_zero_output() {
        let mut store = ParamStore::new();
        let cell = zero_cell(&mut store, "cell", 2, 2);
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, Mode::Eval);
        let x = tape.constant(Tensor::from_vec(vec![3.0, 4.0]));
        let m0 = tape.constant(Tensor::zeros(&[2]));
        let c0 = tape.constant(Tensor::zeros(&[2]));
        let (m, _) = cell.step(&mut tape, &bind, x, m0, c0).unwrap();
        assert_eq!(tape.data(m).data(), &[0.0, 0.0]);
    }

    #[test]
    fn step_gradients_match_finite_differences() {
        // all eight matrices as inputs, plus x and the initial states
        let (d, h) = (2, 2);
        let mut inputs = Vec::new();
        for k in 0..8 {
            let rows = if k % 2 == 0 { d } else { h };
            inputs.push(gaussian_init(&[rows, h], 0.3, 100 + k as u64).unwrap());
        }
        inputs.push(Tensor::from_vec(vec![0.5, -0.8])); // x
        inputs.push(Tensor::from_vec(vec![0.1, 0.2])); // m_prev
        inputs.push(Tensor::from_vec(vec![-0.3, 0.6])); // c_prev

        let report = gradcheck::check_default(&inputs, |tape, v| {
            let gate = |tape: &mut Tape, x: Value, m: Value, wx: Value, wm: Value| {
                let a = tape.matmul(x, wx)?;
                let b = tape.matmul(m, wm)?;
                tape.add(a, b)
            };
            let (x, m0, c0) = (v[8], v[9], v[10]);
            let pre_i = gate(tape, x, m0, v[0], v[1])?;
            let i = tape.sigmoid(pre_i)?;
            let pre_f = gate(tape, x, m0, v[2], v[3])?;
            let f = tape.sigmoid(pre_f)?;
            let pre_o = gate(tape, x, m0, v[4], v[5])?;
            let o = tape.sigmoid(pre_o)?;
            let pre_c = gate(tape, x, m0, v[6], v[7])?;
            let cand = tape.tanh(pre_c)?;
            let keep = tape.mul(f, c0)?;
            let write = tape.mul(i, cand)?;
            let c = tape.add(keep, write)?;
            let m = tape.mul(o, c)?;
            tape.sum(m)
        })
        .unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn bilstm_single_step_concatenates_both_kernels() {
        let mut store = ParamStore::new();
        let fwd = LstmParams::init(&mut store, "f", 2, 2, 0.2, 1).unwrap();
        let bwd = LstmParams::init(&mut store, "b", 2, 2, 0.2, 2).unwrap();
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, Mode::Eval);
        let seq = tape.constant(Tensor::from_rows(&[vec![0.5, -0.5]]).unwrap());
        let out = bilstm_forward(&mut tape, &bind, &fwd, &bwd, seq, 1).unwrap();
        assert_eq!(tape.shape(out), &[1, 4]);

        // same single input through each kernel alone
        let x = tape.row(seq, 0).unwrap();
        let z = tape.constant(Tensor::zeros(&[2]));
        let (hf, _) = fwd.step(&mut tape, &bind, x, z, z).unwrap();
        let (hb, _) = bwd.step(&mut tape, &bind, x, z, z).unwrap();
        let row = tape.data(out).row(0).to_vec();
        assert_eq!(&row[..2], tape.data(hf).data());
        assert_eq!(&row[2..], tape.data(hb).data());
    }

    #[test]
    fn bilstm_pads_rows_beyond_n_with_zeros() {
        let mut store = ParamStore::new();
        let fwd = LstmParams::init(&mut store, "f", 2, 3, 0.2, 1).unwrap();
        let bwd = LstmParams::init(&mut store, "b", 2, 3, 0.2, 2).unwrap();
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, Mode::Eval);
        let seq = tape.constant(
            Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![9.0, 9.0]]).unwrap(),
        );
        let out = bilstm_forward(&mut tape, &bind, &fwd, &bwd, seq, 2).unwrap();
        assert_eq!(tape.shape(out), &[3, 6]);
        assert!(tape.data(out).row(2).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bilstm_rejects_empty_and_overlong_n() {
        let mut store = ParamStore::new();
        let fwd = LstmParams::init(&mut store, "f", 2, 2, 0.2, 1).unwrap();
        let bwd = LstmParams::init(&mut store, "b", 2, 2, 0.2, 2).unwrap();
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, Mode::Eval);
        let seq = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap());
        assert!(matches!(
            bilstm_forward(&mut tape, &bind, &fwd, &bwd, seq, 0),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            bilstm_forward(&mut tape, &bind, &fwd, &bwd, seq, 2),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn padding_rows_send_no_gradient_to_params() {
        // Train-mode binding, loss = sum over the padded output: gradients
        // w.r.t. the padded input row must be absent from the sequence leaf.
        let mut store = ParamStore::new();
        let fwd = LstmParams::init(&mut store, "f", 2, 2, 0.3, 5).unwrap();
        let bwd = LstmParams::init(&mut store, "b", 2, 2, 0.3, 6).unwrap();
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, Mode::Train);
        let seq = tape.leaf(
            Tensor::from_rows(&[vec![0.4, -0.1], vec![0.2, 0.9], vec![5.0, 5.0]]).unwrap(),
        );
        let out = bilstm_forward(&mut tape, &bind, &fwd, &bwd, seq, 2).unwrap();
        let total = tape.sum(out).unwrap();
        tape.backward(total).unwrap();
        let g = tape.grad(seq).unwrap();
        assert!(g.row(0).iter().any(|v| *v != 0.0));
        assert!(g.row(2).iter().all(|v| *v == 0.0));
    }
}
