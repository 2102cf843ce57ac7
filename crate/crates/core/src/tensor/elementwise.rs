use super::{Element, Tensor};
use crate::error::{dim_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Relu,
}

/// How the right operand of a binary op is laid over the left one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Broadcast {
    Same,
    /// One-element right operand.
    Scalar,
    /// Right operand of shape `[C]` applied along axis 1 of the left one.
    Channel,
}

impl Broadcast {
    pub fn resolve(lhs: &[usize], rhs: &[usize]) -> Result<Self> {
        if lhs == rhs {
            Ok(Broadcast::Same)
        } else if rhs.iter().product::<usize>() == 1 {
            Ok(Broadcast::Scalar)
        } else if rhs.len() == 1 && lhs.len() >= 2 && rhs[0] == lhs[1] {
            Ok(Broadcast::Channel)
        } else {
            Err(dim_err!("cannot broadcast {rhs:?} onto {lhs:?}"))
        }
    }

    /// Index into the right operand for flat index `i` of the left one.
    #[inline]
    pub(crate) fn rhs_index(self, i: usize, lhs: &[usize]) -> usize {
        match self {
            Broadcast::Same => i,
            Broadcast::Scalar => 0,
            Broadcast::Channel => {
                let inner: usize = lhs[2..].iter().product();
                (i / inner) % lhs[1]
            }
        }
    }

    /// Sums a left-shaped gradient down to the right operand's shape.
    pub(crate) fn reduce<T: Element>(self, grad: &Tensor<T>, rhs_shape: &[usize]) -> Tensor<T> {
        match self {
            Broadcast::Same => grad.clone(),
            Broadcast::Scalar => Tensor::from_raw(rhs_shape.to_vec(), vec![grad.sum()]),
            Broadcast::Channel => {
                let lhs = grad.shape();
                let mut out = vec![T::zero(); lhs[1]];
                for (i, &g) in grad.data().iter().enumerate() {
                    out[self.rhs_index(i, lhs)] += g;
                }
                Tensor::from_raw(rhs_shape.to_vec(), out)
            }
        }
    }
}

/// Pointwise `a op b` with `b` broadcast per [`Broadcast`].
pub fn binary<T: Element>(a: &Tensor<T>, b: &Tensor<T>, op: Binary) -> Result<Tensor<T>> {
    let bc = Broadcast::resolve(a.shape(), b.shape())?;
    let shape = a.shape();
    let bd = b.data();
    let data = a
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let y = bd[bc.rhs_index(i, shape)];
            match op {
                Binary::Add => x + y,
                Binary::Sub => x - y,
                Binary::Mul => x * y,
            }
        })
        .collect();
    Ok(Tensor::from_raw(shape.to_vec(), data))
}

#[inline]
pub fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn unary<T: Element>(x: &Tensor<T>, op: Unary) -> Tensor<T> {
    match op {
        Unary::Tanh => x.map(T::tanh),
        Unary::Sigmoid => x.map(sigmoid),
        Unary::Relu => x.map(|v| if v > T::zero() { v } else { T::zero() }),
    }
}

pub fn scale<T: Element>(x: &Tensor<T>, s: T) -> Tensor<T> {
    x.map(|v| v * s)
}
