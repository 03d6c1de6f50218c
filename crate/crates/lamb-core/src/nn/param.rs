use rand::Rng;
use rand_distr::{Distribution, Normal};

/// A named tensor with a gradient accumulator of the same shape.
///
/// Vectors are stored as `rows x 1`. Data is row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Parameter {
    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Parameter {
            name: name.into(),
            rows,
            cols,
            values: vec![0.0; rows * cols],
            grad: vec![0.0; rows * cols],
        }
    }

    /// Uniform init on (-scale, scale), seeded by the caller's rng.
    pub fn uniform(
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut p = Self::zeros(name, rows, cols);
        for v in &mut p.values {
            *v = rng.random_range(-scale..scale);
        }
        p
    }

    /// Gaussian init with the given standard deviation.
    pub fn normal(
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        std_dev: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let dist = Normal::new(0.0, std_dev).expect("std_dev must be finite and positive");
        let mut p = Self::zeros(name, rows, cols);
        for v in &mut p.values {
            *v = dist.sample(rng);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.values[r * self.cols + c]
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn grads_finite(&self) -> bool {
        self.grad.iter().all(|g| g.is_finite())
    }
}
