//! Minimal dense row-major matrices, generic over `f32` / `f64`.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Scalar type of the model. Training and checkpoints use `f32`; gradient
/// checks run in `f64`.
pub trait Real: Float + FromPrimitive + NumAssign + Sum + Default + Debug + Send + Sync + 'static {
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data length");
        Tensor { rows, cols, data }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `W x + b` where `b` is a 1×rows tensor.
    pub fn affine(&self, bias: &Tensor<T>, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "affine input width");
        (0..self.rows)
            .map(|i| dot(self.row(i), x) + bias.data[i])
            .collect()
    }

    /// `out += Wᵀ dz`.
    pub fn add_transpose_mul(&self, dz: &[T], out: &mut [T]) {
        for (i, &g) in dz.iter().enumerate() {
            if g != T::zero() {
                axpy(g, self.row(i), out);
            }
        }
    }

    /// `self += dz ⊗ x`.
    pub fn add_outer(&mut self, dz: &[T], x: &[T]) {
        for (i, &g) in dz.iter().enumerate() {
            if g != T::zero() {
                axpy(g, x, self.row_mut(i));
            }
        }
    }

    pub fn add_to_row(&mut self, i: usize, v: &[T]) {
        axpy(T::one(), v, self.row_mut(i));
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = T::zero());
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| U::from(*x).expect("castable")).collect(),
        }
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// `y += a x`.
pub fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * *xi;
    }
}

pub fn softmax<T: Real>(z: &[T]) -> Vec<T> {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = z.iter().map(|x| (*x - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Cross-entropy of `z` against class `label`, and its gradient w.r.t. `z`.
pub fn cross_entropy<T: Real>(z: &[T], label: usize) -> (T, Vec<T>) {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = m + z.iter().map(|x| (*x - m).exp()).sum::<T>().ln();
    let mut grad = softmax(z);
    grad[label] -= T::one();
    (lse - z[label], grad)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Real>(z: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in z.iter().enumerate().skip(1) {
        if *x > z[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_two_class_loss_is_ln2() {
        let (l, g) = cross_entropy(&[0.0f64, 0.0], 1);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(g, vec![0.5, -0.5]);
    }

    #[test]
    fn confident_loss_vanishes() {
        let (l, _) = cross_entropy(&[0.0f64, 60.0], 1);
        assert!(l < 1e-20);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0f32, 1.0, 0.5]), 0);
        assert_eq!(argmax(&[0.0f32, 2.0, 2.0]), 1);
    }

    #[test]
    fn affine_and_transpose() {
        let w = Tensor::from_vec(2, 3, vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor::from_vec(1, 2, vec![0.5, -0.5]);
        assert_eq!(w.affine(&b, &[1.0, 0.0, -1.0]), vec![-1.5, -2.5]);
        let mut out = vec![0.0; 3];
        w.add_transpose_mul(&[1.0, 1.0], &mut out);
        assert_eq!(out, vec![5.0, 7.0, 9.0]);
    }
}
