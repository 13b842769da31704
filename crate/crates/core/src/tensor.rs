//! Dense 4-axis `f64` tensors in row-major `(n, c, h, w)` order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        let shape = Shape { n, c, h, w };
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidDimension(format!("{shape}")));
        }
        Ok(shape)
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

impl TryFrom<(usize, usize, usize, usize)> for Shape {
    type Error = Error;
    fn try_from((n, c, h, w): (usize, usize, usize, usize)) -> Result<Self> {
        Shape::new(n, c, h, w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementOp {
    Add,
    Sub,
    Mul,
    /// Multiply by a scalar. Only valid with [`Operand::Scalar`].
    Scale,
}

#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Tensor(&'a Tensor),
    Scalar(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    /// Tensor of the given shape with every element set to `fill`.
    pub fn new(shape: impl TryInto<Shape, Error = Error>, fill: f64) -> Result<Self> {
        let shape = shape.try_into()?;
        Ok(Tensor {
            shape,
            data: vec![fill; shape.len()],
        })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} elements for {shape}", shape.len()),
                got: format!("{} elements", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.shape.offset(n, c, y, x)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut f64 {
        let i = self.shape.offset(n, c, y, x);
        &mut self.data[i]
    }

    /// One `(n, c)` plane as a row-major `h * w` slice.
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let start = self.shape.offset(n, c, 0, 0);
        &self.data[start..start + self.shape.plane()]
    }

    /// Flat copy of the data in storage order.
    pub fn flatten(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// Same data under a new shape with identical element count.
    pub fn reshape(self, shape: Shape) -> Result<Self> {
        Tensor::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Sum of elementwise products with another tensor of the same shape.
    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn check_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: format!("{}", self.shape),
                got: format!("{}", other.shape),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        elementwise(ElementOp::Add, self, Operand::Tensor(other))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        elementwise(ElementOp::Sub, self, Operand::Tensor(other))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        elementwise(ElementOp::Mul, self, Operand::Tensor(other))
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    /// `self += alpha * other`, in place.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }
}

/// Pointwise arithmetic. Inputs are never modified.
pub fn elementwise(op: ElementOp, a: &Tensor, b: Operand<'_>) -> Result<Tensor> {
    let f: fn(f64, f64) -> f64 = match op {
        ElementOp::Add => |x, y| x + y,
        ElementOp::Sub => |x, y| x - y,
        ElementOp::Mul | ElementOp::Scale => |x, y| x * y,
    };
    match b {
        Operand::Scalar(s) => Ok(a.map(|v| f(v, s))),
        Operand::Tensor(_) if op == ElementOp::Scale => Err(Error::InvalidConfig(
            "scale takes a scalar operand".into(),
        )),
        Operand::Tensor(t) => {
            a.check_same_shape(t)?;
            Ok(Tensor {
                shape: a.shape,
                data: a.data.iter().zip(&t.data).map(|(&x, &y)| f(x, y)).collect(),
            })
        }
    }
}

/// He-normal initialization: zero mean, variance `2 / fan_in`.
pub fn he_init(shape: Shape, fan_in: usize, rng: &mut Rng) -> Result<Tensor> {
    if fan_in == 0 {
        return Err(Error::InvalidDimension("fan_in must be >= 1".into()));
    }
    let std = libm::sqrt(2.0 / fan_in as f64);
    let data = (0..shape.len()).map(|_| rng.normal() * std).collect();
    Tensor::from_vec(shape, data)
}
