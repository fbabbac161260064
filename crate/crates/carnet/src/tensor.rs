//! Dense NCHW tensor storage and the seeded PRNG every stochastic path uses.
//!
//! Layout contract: element `(n, c, h, w)` lives at `(((n*C + c)*H + h)*W + w)`
//! in a row-major `f32` buffer. Checkpoints serialize exactly this layout, so
//! it is part of the on-disk format.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// `(batch, channels, height, width)`.
pub type Shape = [usize; 4];

/// Dense 4-D float tensor with an optional gradient buffer of the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
    grad: Option<Vec<f32>>,
}

impl Tensor {
    /// All-zero tensor. No gradient buffer.
    pub fn zeros(shape: Shape) -> Tensor {
        Tensor {
            shape,
            data: vec![0.0; shape.iter().product()],
            grad: None,
        }
    }

    /// Builds a tensor from an existing buffer; length must match the shape.
    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Tensor {
        assert_eq!(
            data.len(),
            shape.iter().product::<usize>(),
            "buffer length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            shape,
            data,
            grad: None,
        }
    }

    /// I.i.d. normal draws, advancing `rng` deterministically.
    pub fn randn(shape: Shape, rng: &mut Rng, mean: f32, std: f32) -> Tensor {
        assert!(std >= 0.0, "negative std {std}");
        let mut t = Tensor::zeros(shape);
        for v in &mut t.data {
            *v = rng.normal(mean as f64, std as f64) as f32;
        }
        t
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// `(n, c, h, w)` unpacked.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.shape[0], self.shape[1], self.shape[2], self.shape[3])
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f32 {
        let [_, cc, hh, ww] = self.shape;
        self.data[((n * cc + c) * hh + h) * ww + w]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut f32 {
        let [_, cc, hh, ww] = self.shape;
        &mut self.data[((n * cc + c) * hh + h) * ww + w]
    }

    /// Elementwise map into a new tensor (input kept intact).
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    /// Elementwise in-place addition; errors if shapes differ.
    pub fn add_inplace(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                what: "elementwise add",
                left: self.shape,
                right: other.shape,
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Whether any element is NaN.
    pub fn has_nan(&self) -> bool {
        self.data.iter().any(|v| v.is_nan())
    }

    /// Lazily allocates the gradient buffer (zero-filled) and returns it.
    pub fn grad_mut(&mut self) -> &mut [f32] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Serializes as 4 little-endian `u64` dims followed by the raw
    /// little-endian `f32` payload. Gradients are never serialized.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        for d in self.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Inverse of [`Tensor::write_to`].
    pub fn read_from(r: &mut impl Read) -> Result<Tensor> {
        let mut dim = [0u8; 8];
        let mut shape = [0usize; 4];
        for d in &mut shape {
            r.read_exact(&mut dim)?;
            *d = u64::from_le_bytes(dim) as usize;
        }
        let numel: usize = shape.iter().product();
        let mut data = vec![0.0f32; numel];
        let mut buf = [0u8; 4];
        for v in &mut data {
            r.read_exact(&mut buf)?;
            *v = f32::from_le_bytes(buf);
        }
        Ok(Tensor::from_vec(shape, data))
    }
}

/// xorshift64* PRNG (Marsaglia xorshift with Vigna's finalizing multiplier).
///
/// The seed is pre-mixed through one splitmix64 step so that small seeds such
/// as the constant 7 still start from a well-spread nonzero state. The integer
/// stream is platform-independent; Gaussian draws go through Box-Muller in
/// `f64` and are reproducible wherever `ln`/`cos`/`sin` round identically.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
    cached_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Rng {
        // splitmix64 of the seed; xorshift state must be nonzero.
        let mut z = seed.wrapping_add(0x9E3779B97F4A7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^= z >> 31;
        Rng {
            state: if z == 0 { 0x853C49E6748FEA9B } else { z },
            cached_normal: None,
        }
    }

    /// Derives an independent stream, e.g. per image index or pipeline stage.
    pub fn derive(&self, salt: u64) -> Rng {
        Rng::new(self.state ^ salt.wrapping_mul(0xA24BAED4963EE407))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545F4914F6CDD1D)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`; `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        (self.uniform() * n as f64) as usize % n
    }

    /// Standard normal via Box-Muller, scaled to `mean`/`std`.
    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        let z = match self.cached_normal.take() {
            Some(z) => z,
            None => {
                let u1 = 1.0 - self.uniform(); // (0, 1]
                let u2 = self.uniform();
                let r = (-2.0 * u1.ln()).sqrt();
                let theta = 2.0 * std::f64::consts::PI * u2;
                self.cached_normal = Some(r * theta.sin());
                r * theta.cos()
            }
        };
        mean + std * z
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
