use candle_core::{Tensor, D};
use candle_nn::ops::sigmoid;

use super::CellType;
use crate::error::Result;

/// Hidden state of a recurrent cell.
#[derive(Debug, Clone)]
pub(crate) enum CellState {
    Gru(Tensor),
    Lstm { h: Tensor, c: Tensor },
}

impl CellState {
    pub fn new(kind: CellType, h: Tensor) -> Result<Self> {
        Ok(match kind {
            CellType::Gru => CellState::Gru(h),
            CellType::Lstm => {
                let c = h.zeros_like()?;
                CellState::Lstm { h, c }
            }
        })
    }

    pub fn h(&self) -> &Tensor {
        match self {
            CellState::Gru(h) => h,
            CellState::Lstm { h, .. } => h,
        }
    }

    /// `self + m * (next - self)`, with `m` a `[B, 1]` 0/1 mask.
    pub fn masked(&self, next: CellState, m: &Tensor) -> Result<Self> {
        let mix = |old: &Tensor, new: &Tensor| -> Result<Tensor> {
            Ok((old + (new - old)?.broadcast_mul(m)?)?)
        };
        Ok(match (self, &next) {
            (CellState::Gru(a), CellState::Gru(b)) => CellState::Gru(mix(a, b)?),
            (CellState::Lstm { h, c }, CellState::Lstm { h: h2, c: c2 }) => CellState::Lstm {
                h: mix(h, h2)?,
                c: mix(c, c2)?,
            },
            _ => next,
        })
    }
}

/// Gate layout follows the common `[r, z, n]` (GRU) and `[i, f, g, o]` (LSTM)
/// convention with separate input and recurrent biases.
pub(crate) struct Cell {
    pub kind: CellType,
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub b_ih: Tensor,
    pub b_hh: Tensor,
    pub hidden: usize,
}

impl Cell {
    /// Input projection `x W_ih + b_ih` for `[B, in]` or `[B, L, in]` inputs.
    pub fn project(&self, x: &Tensor) -> Result<Tensor> {
        match x.rank() {
            2 => Ok(x.matmul(&self.w_ih)?.broadcast_add(&self.b_ih)?),
            _ => {
                let (b, l, e) = x.dims3()?;
                let y = x.reshape((b * l, e))?.matmul(&self.w_ih)?.broadcast_add(&self.b_ih)?;
                Ok(y.reshape((b, l, ()))?)
            }
        }
    }

    /// One recurrence step given the projected input `[B, G]`.
    pub fn step(&self, xw: &Tensor, state: &CellState) -> Result<CellState> {
        let h = state.h();
        let hw = h.matmul(&self.w_hh)?.broadcast_add(&self.b_hh)?;
        let n = self.hidden;
        let chunk = |t: &Tensor, i: usize| t.narrow(D::Minus1, i * n, n);
        match (self.kind, state) {
            (CellType::Gru, _) => {
                let r = sigmoid(&(chunk(xw, 0)? + chunk(&hw, 0)?)?)?;
                let z = sigmoid(&(chunk(xw, 1)? + chunk(&hw, 1)?)?)?;
                let cand = (chunk(xw, 2)? + (r * chunk(&hw, 2)?)?)?.tanh()?;
                let next = (&cand + (z * (h - &cand)?)?)?;
                Ok(CellState::Gru(next))
            }
            (CellType::Lstm, CellState::Lstm { c, .. }) => {
                let gates = (xw + hw)?;
                let i = sigmoid(&chunk(&gates, 0)?)?;
                let f = sigmoid(&chunk(&gates, 1)?)?;
                let g = chunk(&gates, 2)?.tanh()?;
                let o = sigmoid(&chunk(&gates, 3)?)?;
                let c = ((f * c)? + (i * g)?)?;
                let h = (o * c.tanh()?)?;
                Ok(CellState::Lstm { h, c })
            }
            (CellType::Lstm, CellState::Gru(_)) => {
                let fresh = CellState::new(CellType::Lstm, h.clone())?;
                self.step(xw, &fresh)
            }
        }
    }
}

impl CellType {
    pub fn gates(self) -> usize {
        match self {
            CellType::Gru => 3,
            CellType::Lstm => 4,
        }
    }
}
