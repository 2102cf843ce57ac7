//! Reverse-mode automatic differentiation over the tensor kernels, and a
//! central-difference gradient checker.

mod gradcheck;
mod param;
mod tape;

pub use gradcheck::{grad_check, relative_error, GradCheckConfig, GradCheckReport};
pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{Tape, Var};

use crate::error::Result;
use crate::tensor::{Element, Mode, Tensor};

/// Forward-pass context: the tape being recorded, read-only parameters, the
/// mode, and buffer updates (batch-norm running statistics) to apply once
/// the pass is finished.
pub struct Ctx<'a, T: Element> {
    pub tape: &'a mut Tape<T>,
    pub params: &'a ParamStore<T>,
    pub mode: Mode,
    updates: Vec<(ParamId, Tensor<T>)>,
}

impl<'a, T: Element> Ctx<'a, T> {
    pub fn new(tape: &'a mut Tape<T>, params: &'a ParamStore<T>, mode: Mode) -> Self {
        Ctx {
            tape,
            params,
            mode,
            updates: Vec::new(),
        }
    }

    /// Records a parameter's current value on the tape.
    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        self.tape.param(self.params, id)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        self.tape.value(v)
    }

    pub(crate) fn defer_update(&mut self, id: ParamId, value: Tensor<T>) {
        self.updates.push((id, value));
    }

    /// Buffer updates gathered during the pass, in recording order.
    pub fn into_updates(self) -> Vec<(ParamId, Tensor<T>)> {
        self.updates
    }
}
