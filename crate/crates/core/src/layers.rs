//! Parameterized building blocks shared by the classifier and the dialogue
//! models. Layers hold only [`ParamId`]s; the values live in a
//! [`ParamStore`], so the same layer runs against an `f32` store for training
//! and an `f64` copy for gradient checks.

use crate::error::Result;
use crate::numerics::{clip_grad_norm, xavier, AdamState, Float, Grads, Graph, ParamId, ParamStore, Rng, Tensor, Var};

/// Large negative logit used to exclude positions from a softmax.
pub const MASKED_LOGIT: f64 = -1e9;

/// `y = x W + b` with `W: [input, output]`.
#[derive(Debug, Clone)]
pub struct Linear {
    w: ParamId,
    b: Option<ParamId>,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        let w = store.add(format!("{name}.w"), xavier(&[input, output], rng)?)?;
        let b = if bias {
            Some(store.add(format!("{name}.b"), Tensor::zeros(&[1, output]))?)
        } else {
            None
        };
        Ok(Linear { w, b })
    }

    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let y = g.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

/// One LSTM layer. Gates are laid out `[input | forget | output | cell]`
/// along the columns of `wx: [input, 4H]`, `wh: [H, 4H]` and `b: [1, 4H]`;
/// the forget-gate bias starts at 1.
#[derive(Debug, Clone)]
pub struct Lstm {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
    hidden: usize,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        let wx = store.add(format!("{name}.wx"), xavier(&[input, 4 * hidden], rng)?)?;
        let wh = store.add(format!("{name}.wh"), xavier(&[hidden, 4 * hidden], rng)?)?;
        let mut bias = Tensor::zeros(&[1, 4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        let b = store.add(format!("{name}.b"), bias)?;
        Ok(Lstm { wx, wh, b, hidden })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn zero_state<T: Float>(&self, g: &mut Graph<'_, T>, batch: usize) -> Result<LstmState> {
        let h = g.constant(Tensor::zeros(&[batch, self.hidden]))?;
        Ok(LstmState { h, c: h })
    }

    /// Input projection `x wx + b` for many rows at once.
    pub fn project<T: Float>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let wx = g.param(self.wx);
        let b = g.param(self.b);
        let y = g.matmul(x, wx)?;
        g.add_row(y, b)
    }

    /// Advances one step given the projected input `xp: [B, 4H]`. Rows whose
    /// `mask` entry is 0 keep their previous state.
    pub fn step_projected<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        xp: Var,
        state: LstmState,
        mask: Option<Var>,
    ) -> Result<LstmState> {
        let h = self.hidden;
        let wh = g.param(self.wh);
        let rec = g.matmul(state.h, wh)?;
        let gates = g.add(xp, rec)?;
        let i = g.slice_cols(gates, 0, h)?;
        let f = g.slice_cols(gates, h, 2 * h)?;
        let o = g.slice_cols(gates, 2 * h, 3 * h)?;
        let u = g.slice_cols(gates, 3 * h, 4 * h)?;
        let i = g.sigmoid(i)?;
        let f = g.sigmoid(f)?;
        let o = g.sigmoid(o)?;
        let u = g.tanh(u)?;
        let keep = g.mul(f, state.c)?;
        let write = g.mul(i, u)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c)?;
        let hn = g.mul(o, tc)?;
        match mask {
            None => Ok(LstmState { h: hn, c }),
            Some(m) => Ok(LstmState {
                h: carry(g, state.h, hn, m)?,
                c: carry(g, state.c, c, m)?,
            }),
        }
    }

    pub fn step<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        state: LstmState,
        mask: Option<Var>,
    ) -> Result<LstmState> {
        let xp = self.project(g, x)?;
        self.step_projected(g, xp, state, mask)
    }

    /// Runs over a time-major sequence. `xs` holds the `T` inputs stacked as
    /// `[T*B, input]`; `masks[t]` (when given) is a `[B, 1]` validity column.
    /// Returns the per-step hidden states in input order and the final state.
    pub fn run<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        xs: Var,
        steps: usize,
        masks: Option<&[Var]>,
        init: LstmState,
        reverse: bool,
    ) -> Result<(Vec<Var>, LstmState)> {
        let batch = g.value(xs).rows() / steps;
        let proj = self.project(g, xs)?;
        let mut outputs = vec![init.h; steps];
        let mut state = init;
        let order: Vec<usize> = if reverse {
            (0..steps).rev().collect()
        } else {
            (0..steps).collect()
        };
        for t in order {
            let xp = if steps == 1 {
                proj
            } else {
                g.slice_rows(proj, t * batch, (t + 1) * batch)?
            };
            state = self.step_projected(g, xp, state, masks.map(|m| m[t]))?;
            outputs[t] = state.h;
        }
        Ok((outputs, state))
    }
}

/// `prev + mask * (next - prev)` row-wise.
fn carry<T: Float>(g: &mut Graph<'_, T>, prev: Var, next: Var, mask: Var) -> Result<Var> {
    let delta = g.sub(next, prev)?;
    let kept = g.mul_col(delta, mask)?;
    g.add(prev, kept)
}

/// `[B, 1]` column holding 1 where `valid[b]` and 0 elsewhere.
pub fn mask_column<T: Float>(valid: impl IntoIterator<Item = bool>) -> Result<Tensor<T>> {
    Tensor::column(
        valid
            .into_iter()
            .map(|v| if v { T::one() } else { T::zero() })
            .collect(),
    )
}

/// Stacks time-major token ids `ids[t][b]` into one flat list.
pub fn flatten_time_major(ids: &[Vec<usize>]) -> Vec<usize> {
    ids.iter().flatten().copied().collect()
}

/// Clips, fills in zero gradients for parameters the loss did not touch, and
/// applies one Adam step. Rows listed in `frozen_rows` (parameter, row) get a
/// zero gradient. Returns the pre-clip global norm.
pub fn apply_update(
    store: &mut ParamStore,
    adam: &mut AdamState,
    mut grads: Grads,
    clip: f64,
    frozen_rows: &[(ParamId, usize)],
) -> Result<f64> {
    for id in store.ids() {
        if grads.get(id).is_none() {
            grads.slots_mut()[id.index()] = Some(Tensor::zeros(store.get(id).shape()));
        }
    }
    for &(id, row) in frozen_rows {
        if let Some(Some(t)) = grads.slots_mut().get_mut(id.index()) {
            let c = t.cols();
            t.data_mut()[row * c..(row + 1) * c].fill(0.0);
        }
    }
    let norm = if clip > 0.0 {
        clip_grad_norm(&mut grads, clip)
    } else {
        grads.global_norm()
    };
    adam.step(store, &grads)?;
    Ok(norm)
}
