use crate::error::Result;
use crate::nn::lstm::RecurrentCell;
use crate::nn::params::{Binding, ParamId, ParamStore};
use crate::tensor::{gaussian_init, Tape, Tensor, Value};

/// Floor on the standard deviation inside layer normalization; keeps
/// constant vectors from dividing by zero.
pub const LN_EPS: f64 = 1e-8;

/// Layer normalization: standardize to zero mean / unit (population) std,
/// then apply a learned per-element gain and shift.
pub fn ln(tape: &mut Tape, z: Value, alpha: Value, beta: Value) -> Result<Value> {
    let standardized = tape.standardize(z, LN_EPS)?;
    let scaled = tape.mul(standardized, alpha)?;
    tape.add(scaled, beta)
}

/// Gain/shift pair for one layer-normalization site.
pub struct LnSite {
    pub alpha: ParamId,
    pub beta: ParamId,
}

impl LnSite {
    pub fn init(store: &mut ParamStore, name: &str, h: usize) -> Result<Self> {
        Ok(LnSite {
            alpha: store.add(format!("{name}.alpha"), Tensor::full(&[h], 1.0))?,
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[h]))?,
        })
    }

    pub fn apply(&self, tape: &mut Tape, b: &Binding, z: Value) -> Result<Value> {
        ln(tape, z, b.value(self.alpha), b.value(self.beta))
    }
}

/// LSTM cell whose gate pre-activations are layer-normalized per source
/// (input-side and hidden-side separately), with peephole connections and
/// a normalized cell output:
///
///   i = sigmoid(LN(x W_xi) + LN(h W_hi) + w_ci * c_prev + b_i)
///   f = sigmoid(LN(x W_xf) + LN(h W_hf) + w_cf * c_prev + b_f)
///   c = f * c_prev + i * tanh(LN(x W_xc) + LN(h W_hc) + b_c)
///   o = sigmoid(LN(x W_xo) + LN(h W_ho) + w_co * c + b_o)
///   h = o * tanh(LN(c))
///
/// Every LN site carries its own gain/shift, initialized to 1 and 0.
pub struct LnLstmParams {
    pub w_xi: ParamId,
    pub w_hi: ParamId,
    pub w_xf: ParamId,
    pub w_hf: ParamId,
    pub w_xc: ParamId,
    pub w_hc: ParamId,
    pub w_xo: ParamId,
    pub w_ho: ParamId,
    pub peep_i: ParamId,
    pub peep_f: ParamId,
    pub peep_o: ParamId,
    pub b_i: ParamId,
    pub b_f: ParamId,
    pub b_c: ParamId,
    pub b_o: ParamId,
    pub ln_xi: LnSite,
    pub ln_hi: LnSite,
    pub ln_xf: LnSite,
    pub ln_hf: LnSite,
    pub ln_xc: LnSite,
    pub ln_hc: LnSite,
    pub ln_xo: LnSite,
    pub ln_ho: LnSite,
    pub ln_c: LnSite,
    pub hidden: usize,
}

impl LnLstmParams {
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
        let w_xi = mat(store, "w_xi", input_dim, 0)?;
        let w_hi = mat(store, "w_hi", hidden, 1)?;
        let w_xf = mat(store, "w_xf", input_dim, 2)?;
        let w_hf = mat(store, "w_hf", hidden, 3)?;
        let w_xc = mat(store, "w_xc", input_dim, 4)?;
        let w_hc = mat(store, "w_hc", hidden, 5)?;
        let w_xo = mat(store, "w_xo", input_dim, 6)?;
        let w_ho = mat(store, "w_ho", hidden, 7)?;
        let vec0 = |store: &mut ParamStore, name: &str| {
            store.add(format!("{prefix}.{name}"), Tensor::zeros(&[hidden]))
        };
        Ok(LnLstmParams {
            w_xi,
            w_hi,
            w_xf,
            w_hf,
            w_xc,
            w_hc,
            w_xo,
            w_ho,
            peep_i: vec0(store, "peep_i")?,
            peep_f: vec0(store, "peep_f")?,
            peep_o: vec0(store, "peep_o")?,
            b_i: vec0(store, "b_i")?,
            b_f: vec0(store, "b_f")?,
            b_c: vec0(store, "b_c")?,
            b_o: vec0(store, "b_o")?,
            ln_xi: LnSite::init(store, &format!("{prefix}.ln_xi"), hidden)?,
            ln_hi: LnSite::init(store, &format!("{prefix}.ln_hi"), hidden)?,
            ln_xf: LnSite::init(store, &format!("{prefix}.ln_xf"), hidden)?,
            ln_hf: LnSite::init(store, &format!("{prefix}.ln_hf"), hidden)?,
            ln_xc: LnSite::init(store, &format!("{prefix}.ln_xc"), hidden)?,
            ln_hc: LnSite::init(store, &format!("{prefix}.ln_hc"), hidden)?,
            ln_xo: LnSite::init(store, &format!("{prefix}.ln_xo"), hidden)?,
            ln_ho: LnSite::init(store, &format!("{prefix}.ln_ho"), hidden)?,
            ln_c: LnSite::init(store, &format!("{prefix}.ln_c"), hidden)?,
            hidden,
        })
    }

    /// LN(input · W) for one gate's x-side or h-side contribution.
    fn normed(
        &self,
        tape: &mut Tape,
        b: &Binding,
        input: Value,
        w: ParamId,
        site: &LnSite,
    ) -> Result<Value> {
        let prod = tape.matmul(input, b.value(w))?;
        site.apply(tape, b, prod)
    }
}

impl RecurrentCell for LnLstmParams {
    fn hidden_size(&self) -> usize {
        self.hidden
    }

    fn step(
        &self,
        tape: &mut Tape,
        b: &Binding,
        x: Value,
        h_prev: Value,
        c_prev: Value,
    ) -> Result<(Value, Value)> {
        let gate = |tape: &mut Tape,
                    me: &Self,
                    wx: ParamId,
                    sx: &LnSite,
                    wh: ParamId,
                    sh: &LnSite,
                    peep: Option<(ParamId, Value)>,
                    bias: ParamId|
         -> Result<Value> {
            let from_x = me.normed(tape, b, x, wx, sx)?;
            let from_h = me.normed(tape, b, h_prev, wh, sh)?;
            let mut pre = tape.add(from_x, from_h)?;
            if let Some((p, c)) = peep {
                let hole = tape.mul(b.value(p), c)?;
                pre = tape.add(pre, hole)?;
            }
            tape.add(pre, b.value(bias))
        };

        let pre_i = gate(
            tape,
            self,
            self.w_xi,
            &self.ln_xi,
            self.w_hi,
            &self.ln_hi,
            Some((self.peep_i, c_prev)),
            self.b_i,
        )?;
        let i = tape.sigmoid(pre_i)?;

        let pre_f = gate(
            tape,
            self,
            self.w_xf,
            &self.ln_xf,
            self.w_hf,
            &self.ln_hf,
            Some((self.peep_f, c_prev)),
            self.b_f,
        )?;
        let f = tape.sigmoid(pre_f)?;

        let pre_c = gate(
            tape,
            self,
            self.w_xc,
            &self.ln_xc,
            self.w_hc,
            &self.ln_hc,
            None,
            self.b_c,
        )?;
        let cand = tape.tanh(pre_c)?;
        let keep = tape.mul(f, c_prev)?;
        let write = tape.mul(i, cand)?;
        let c = tape.add(keep, write)?;

        // the output gate peeks at the cell state just computed
        let pre_o = gate(
            tape,
            self,
            self.w_xo,
            &self.ln_xo,
            self.w_ho,
            &self.ln_ho,
            Some((self.peep_o, c)),
            self.b_o,
        )?;
        let o = tape.sigmoid(pre_o)?;

        let c_normed = self.ln_c.apply(tape, b, c)?;
        let c_act = tape.tanh(c_normed)?;
        let h = tape.mul(o, c_act)?;
        Ok((h, c))
    }
}
