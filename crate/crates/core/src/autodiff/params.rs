//! Named parameter storage with gradient buffers and initializers.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::matrix::Matrix;

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// One learnable matrix plus its (optional) gradient buffer.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub grad: Option<Matrix>,
}

/// Ordered collection of parameters. Order is fixed at construction time and
/// drives checkpoint layout and optimizer state alignment.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Matrix) -> ParamId {
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad: None,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn grad(&self, id: ParamId) -> Option<&Matrix> {
        self.params[id.0].grad.as_ref()
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn accumulate_grad(&mut self, id: ParamId, g: &Matrix) {
        let p = &mut self.params[id.0];
        match &mut p.grad {
            Some(existing) => existing.add_assign_scaled(g, 1.0),
            slot => *slot = Some(g.clone()),
        }
    }

    /// Guarantees a gradient buffer exists (zeros if nothing accumulated).
    pub fn ensure_grad(&mut self, id: ParamId, shape: (usize, usize)) {
        let p = &mut self.params[id.0];
        if p.grad.is_none() {
            p.grad = Some(Matrix::zeros(shape.0, shape.1));
        }
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub fn grads_populated(&self) -> bool {
        self.params.iter().all(|p| p.grad.is_some())
    }

    /// Global L2 norm over all gradients; errors if any is missing.
    pub fn grad_norm(&self) -> Option<f64> {
        let mut total = 0.0;
        for p in &self.params {
            total += p.grad.as_ref()?.sum_squares();
        }
        Some(total.sqrt())
    }

    /// Rescales all gradients so the global norm is at most `max_norm`.
    /// Returns the pre-clip norm, or `None` if gradients are missing.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> Option<f64> {
        let norm = self.grad_norm()?;
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for p in &mut self.params {
                if let Some(g) = &mut p.grad {
                    for v in g.as_mut_slice() {
                        *v *= scale;
                    }
                }
            }
        }
        Some(norm)
    }
}

/// Xavier/Glorot uniform initialization.
pub fn xavier_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-limit..=limit))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}

/// Gaussian initialization with the given standard deviation.
pub fn normal_init(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Matrix {
    let dist = Normal::new(0.0, std).expect("std must be finite");
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}
