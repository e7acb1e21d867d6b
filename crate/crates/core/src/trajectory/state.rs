// SPDX-License-Identifier: Apache-2.0

//! Conditioned density matrices and the homodyne record.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::space::HilbertSpace;

/// Dense row-major density matrix on a product space.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub dim: usize,
    pub matter_dim: usize,
    pub cavity_dim: usize,
    pub data: Vec<Complex64>,
}

impl Density {
    /// Pure product state `|m, c><m, c|`.
    pub fn basis(space: &HilbertSpace, m: usize, c: usize) -> Self {
        let dim = space.dim();
        let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
        let i = m * space.cavity_dim + c;
        data[i * dim + i] = Complex64::new(1.0, 0.0);
        Self {
            dim,
            matter_dim: space.matter_dim,
            cavity_dim: space.cavity_dim,
            data,
        }
    }

    /// Pure state `|psi><psi|` for a product-basis vector.
    pub fn pure(space: &HilbertSpace, psi: &[Complex64]) -> Self {
        let dim = space.dim();
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                data[i * dim + j] = psi[i] * psi[j].conj() / norm;
            }
        }
        Self {
            dim,
            matter_dim: space.matter_dim,
            cavity_dim: space.cavity_dim,
            data,
        }
    }

    pub fn from_matrix(space: &HilbertSpace, m: &DMatrix<Complex64>) -> Self {
        let dim = space.dim();
        let data = (0..dim * dim).map(|k| m[(k / dim, k % dim)]).collect();
        Self {
            dim,
            matter_dim: space.matter_dim,
            cavity_dim: space.cavity_dim,
            data,
        }
    }

    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.data[i * self.dim + j])
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn purity(&self) -> f64 {
        // Tr rho^2 = sum |rho_ij|^2 for Hermitian rho.
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scale(&mut self, f: f64) {
        for z in &mut self.data {
            *z *= f;
        }
    }

    /// Largest `|rho - rho^dag|` entry; the matrix is then replaced by its
    /// Hermitian part.
    pub fn hermitize(&mut self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                let a = self.data[i * d + j];
                let b = self.data[j * d + i];
                worst = worst.max((a - b.conj()).norm());
                let h = 0.5 * (a + b.conj());
                self.data[i * d + j] = h;
                self.data[j * d + i] = h.conj();
            }
            let diag = &mut self.data[i * d + i];
            diag.im = 0.0;
        }
        worst
    }

    /// In-place conjugate transpose.
    pub fn adjoint(&mut self) {
        let d = self.dim;
        for i in 0..d {
            self.data[i * d + i] = self.data[i * d + i].conj();
            for j in i + 1..d {
                let a = self.data[i * d + j];
                self.data[i * d + j] = self.data[j * d + i].conj();
                self.data[j * d + i] = a.conj();
            }
        }
    }

    /// `rho_ij *= p_i conj(p_j)`.
    pub fn phase(&mut self, p: &[Complex64]) {
        let d = self.dim;
        for i in 0..d {
            let pi = p[i];
            let row = &mut self.data[i * d..(i + 1) * d];
            for (z, pj) in row.iter_mut().zip(p) {
                *z *= pi * pj.conj();
            }
        }
    }

    /// `Tr(rho O)` for a local matter operator `O ⊗ I`.
    pub fn expect_matter<T: Copy + Into<Complex64>>(&self, op: &DMatrix<T>) -> Complex64 {
        let (nm, nc, d) = (self.matter_dim, self.cavity_dim, self.dim);
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..nm {
            for mp in 0..nm {
                let o: Complex64 = op[(m, mp)].into();
                if o == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..nc {
                    acc += self.data[(mp * nc + c) * d + m * nc + c] * o;
                }
            }
        }
        acc
    }

    /// `Tr(rho O)` for a local cavity operator `I ⊗ O`.
    pub fn expect_cavity<T: Copy + Into<Complex64>>(&self, op: &DMatrix<T>) -> Complex64 {
        let (nm, nc, d) = (self.matter_dim, self.cavity_dim, self.dim);
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..nm {
            for c in 0..nc {
                for cp in 0..nc {
                    let o: Complex64 = op[(c, cp)].into();
                    if o == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    acc += self.data[(m * nc + cp) * d + m * nc + c] * o;
                }
            }
        }
        acc
    }

    /// Population of the highest matter and cavity levels.
    pub fn top_populations(&self) -> (f64, f64) {
        let (nm, nc, d) = (self.matter_dim, self.cavity_dim, self.dim);
        let mut top_m = 0.0;
        let mut top_c = 0.0;
        for m in 0..nm {
            for c in 0..nc {
                let i = m * nc + c;
                let p = self.data[i * d + i].re;
                if m + 1 == nm {
                    top_m += p;
                }
                if c + 1 == nc {
                    top_c += p;
                }
            }
        }
        (top_m, top_c)
    }

    /// Smallest eigenvalue, from a dense Hermitian decomposition.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = self.to_matrix();
        let e = m.symmetric_eigen();
        e.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// A local operator applied from the left, `rho <- (A ⊗ I) rho` or
/// `rho <- (I ⊗ A) rho`, with the sparsity pattern stored once.
#[derive(Debug, Clone)]
pub struct LocalOp {
    on_cavity: bool,
    n: usize,
    /// `(row, col, value)` of the non-zero entries.
    entries: Vec<(usize, usize, Complex64)>,
}

impl LocalOp {
    pub fn cavity<T: Copy + Into<Complex64>>(op: &DMatrix<T>) -> Self {
        Self::new(true, op)
    }

    pub fn matter<T: Copy + Into<Complex64>>(op: &DMatrix<T>) -> Self {
        Self::new(false, op)
    }

    fn new<T: Copy + Into<Complex64>>(on_cavity: bool, op: &DMatrix<T>) -> Self {
        let mut entries = Vec::new();
        for r in 0..op.nrows() {
            for c in 0..op.ncols() {
                let v: Complex64 = op[(r, c)].into();
                if v.norm() > 0.0 {
                    entries.push((r, c, v));
                }
            }
        }
        Self {
            on_cavity,
            n: op.nrows(),
            entries,
        }
    }

    /// `out <- A rho`, with rows combined by axpy so the inner loop runs
    /// over contiguous memory.
    pub fn apply(&self, rho: &Density, out: &mut Density) {
        let d = rho.dim;
        let nc = rho.cavity_dim;
        let nm = rho.matter_dim;
        debug_assert_eq!(self.n, if self.on_cavity { nc } else { nm });
        out.data.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        let (blocks, stride_outer, stride_inner) = if self.on_cavity {
            (nm, nc, 1)
        } else {
            (nc, 1, nc)
        };
        for b in 0..blocks {
            let base = b * stride_outer;
            for &(r, c, v) in &self.entries {
                let dst = (base + r * stride_inner) * d;
                let src = (base + c * stride_inner) * d;
                let (src_row, dst_row) = (&rho.data[src..src + d], &mut out.data[dst..dst + d]);
                for (o, x) in dst_row.iter_mut().zip(src_row) {
                    *o += v * x;
                }
            }
        }
    }
}

/// `rho <- A rho A^dag` using `rho^dag = rho`: apply from the left, take the
/// adjoint, apply from the left again. `scratch` must match `rho` in shape.
pub fn sandwich(ops: &[&LocalOp], rho: &mut Density, scratch: &mut Density) {
    for _ in 0..2 {
        for op in ops {
            op.apply(rho, scratch);
            std::mem::swap(&mut rho.data, &mut scratch.data);
        }
        rho.adjoint();
    }
}

/// Past homodyne increments, newest last, capped at the kernel memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub increments: VecDeque<f64>,
    pub capacity: usize,
}

impl Record {
    pub fn new(capacity: usize) -> Self {
        Self {
            increments: VecDeque::with_capacity(capacity.max(1)),
            capacity: capacity.max(1),
        }
    }

    pub fn push(&mut self, dxi: f64) {
        if self.increments.len() == self.capacity {
            self.increments.pop_front();
        }
        self.increments.push_back(dxi);
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// `sum_m w_m dxi_{n-1-m}` over the available history.
    pub fn convolve(&self, weights: &[f64]) -> f64 {
        self.increments
            .iter()
            .rev()
            .zip(weights)
            .map(|(x, w)| x * w)
            .sum()
    }
}
