//! Differentiable dense numerics: matrices, the reverse-mode tape, named
//! parameters, initialisation and dropout.

mod matrix;
mod tape;

pub mod gradcheck;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use matrix::Matrix;
pub use tape::{Gradients, Tape, Var};
pub(crate) use tape::huber_value;

use crate::error::{Error, Result};

/// Seeded generator used for every random draw in the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}

/// Element-wise non-linearity applied after graph layers and the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::LeakyRelu { slope } => tape.leaky_relu(x, slope),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Identity => x,
        }
    }
}

/// Negative slope of the attention-score LeakyReLU.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

/// Learnable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    #[serde(skip, default = "empty_matrix")]
    pub grad: Matrix,
}

fn empty_matrix() -> Matrix {
    Matrix::zeros(0, 0)
}

impl Param {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        if self.grad.shape() != self.value.shape() {
            self.grad = Matrix::zeros(self.value.rows(), self.value.cols());
        } else {
            self.grad.fill(0.0);
        }
    }
}

/// Kaiming (He) normal initialisation: zero mean, std `sqrt(2 / fan_in)`.
pub fn kaiming_init(
    name: impl Into<String>,
    rows: usize,
    cols: usize,
    fan_in: usize,
    rng: &mut impl Rng,
) -> Result<Param> {
    if fan_in == 0 {
        return Err(Error::InvalidArgument("kaiming_init: fan_in must be >= 1".into()));
    }
    let std = libm::sqrt(2.0 / fan_in as f64);
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let values = Matrix::from_fn(rows, cols, |_, _| normal.sample(rng));
    Ok(Param::new(name, values))
}

/// Inverted dropout: in training mode each entry is zeroed with probability
/// `p` and survivors are scaled by `1 / (1 − p)`; identity otherwise.
pub fn dropout(tape: &mut Tape, x: Var, p: f64, training: bool, rng: &mut impl Rng) -> Result<Var> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(alloc::format!(
            "dropout probability {p} outside [0, 1)"
        )));
    }
    if !training || p == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - p);
    let (r, c) = tape.value(x).shape();
    let mask = Matrix::from_fn(r, c, |_, _| {
        if rng.random::<f64>() < p {
            0.0
        } else {
            keep
        }
    });
    tape.mul_const(x, mask)
}

/// `x · W`, with `W` of shape `(d_in, d_out)`.
pub fn linear(tape: &mut Tape, x: Var, weight: Var) -> Result<Var> {
    tape.matmul(x, weight)
}

/// `x · W + b`.
pub fn affine(tape: &mut Tape, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let xw = tape.matmul(x, weight)?;
    tape.add_row(xw, bias)
}

/// Ordered, name-addressable collection of parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

/// Tape leaves created for every parameter of a store.
#[derive(Debug, Clone)]
pub struct Bindings {
    vars: Vec<Var>,
    index: BTreeMap<String, usize>,
}

impl Bindings {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::UnknownParam(name.into()))
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_params(params: Vec<Param>) -> Result<Self> {
        let mut store = Self::new();
        for p in params {
            store.insert(p)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, param: Param) -> Result<()> {
        if self.index.contains_key(&param.name) {
            return Err(Error::InvalidArgument(alloc::format!(
                "duplicate parameter `{}`",
                param.name
            )));
        }
        self.index.insert(param.name.clone(), self.params.len());
        self.params.push(param);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.index.get(name).map(|&i| &mut self.params[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    /// Rebuilds the name index, e.g. after deserialisation.
    pub fn reindex(&mut self) {
        self.index = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect();
        for p in &mut self.params {
            p.zero_grad();
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> Bindings {
        Bindings {
            vars: self.params.iter().map(|p| tape.leaf(p.value.clone())).collect(),
            index: self.index.clone(),
        }
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(Param::zero_grad);
    }

    /// Adds the gradients of every bound parameter into its accumulator.
    pub fn accumulate(&mut self, bindings: &Bindings, grads: &Gradients) -> Result<()> {
        for (p, &v) in self.params.iter_mut().zip(&bindings.vars) {
            if let Some(g) = grads.get(v) {
                if p.grad.shape() != p.value.shape() {
                    p.zero_grad();
                }
                p.grad.add_assign(g)?;
            }
        }
        Ok(())
    }

    pub fn total_len(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }
}
