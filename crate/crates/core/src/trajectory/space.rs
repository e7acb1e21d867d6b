// SPDX-License-Identifier: Apache-2.0

//! Truncated product spaces `matter ⊗ cavity`.
//!
//! Basis states are ordered matter-major: index `m * cavity_dim + c`. Spin
//! states run from `S_z = -N/2` upwards, so index 0 is the fully polarised
//! normal-phase state.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest product dimension the dense engine accepts.
pub const MAX_DIM: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MatterKind {
    /// Collective spin `j = N/2`, dimension `N + 1`.
    Spin { n: u32 },
    /// Holstein–Primakoff boson kept up to `cutoff - 1` quanta.
    TruncatedBoson { cutoff: usize },
}

/// Product space with its local operators cached as real matrices.
#[derive(Debug, Clone)]
pub struct HilbertSpace {
    pub matter: MatterKind,
    pub matter_dim: usize,
    pub cavity_dim: usize,
    /// Annihilation operator of the cavity.
    pub a: DMatrix<f64>,
    /// `a + a^dag`.
    pub a_sum: DMatrix<f64>,
    /// Matter coupling operator: `2 S_x` for a spin, `b + b^dag` for the boson.
    pub coupling: DMatrix<f64>,
    /// Diagonal of the free matter Hamiltonian divided by `omega_r`:
    /// `S_z` eigenvalues or boson number.
    pub matter_levels: Vec<f64>,
    /// `S_x` for spins, `X = (b + b^dag) / 2` for the boson.
    pub x_op: DMatrix<f64>,
    /// `i S_y` or `i Y`, both real.
    pub iy_op: DMatrix<f64>,
    /// `S_z` for spins, `b^dag b` for the boson.
    pub z_op: DMatrix<f64>,
}

fn annihilation(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if j == i + 1 { (j as f64).sqrt() } else { 0.0 })
}

impl HilbertSpace {
    pub fn dim(&self) -> usize {
        self.matter_dim * self.cavity_dim
    }

    pub fn is_spin(&self) -> bool {
        matches!(self.matter, MatterKind::Spin { .. })
    }

    /// Eigen-decomposition of a real symmetric local operator, columns of
    /// the returned matrix are eigenvectors.
    pub fn eigen(op: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
        let e = SymmetricEigen::new(op.clone());
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
    }

    /// `op ⊗ I` on the product space.
    pub fn full_matter(&self, op: &DMatrix<f64>) -> DMatrix<Complex64> {
        let eye = DMatrix::<f64>::identity(self.cavity_dim, self.cavity_dim);
        op.kronecker(&eye).map(|x| Complex64::new(x, 0.0))
    }

    /// `I ⊗ op` on the product space.
    pub fn full_cavity(&self, op: &DMatrix<f64>) -> DMatrix<Complex64> {
        let eye = DMatrix::<f64>::identity(self.matter_dim, self.matter_dim);
        eye.kronecker(op).map(|x| Complex64::new(x, 0.0))
    }
}

/// Build `matter ⊗ Fock(cavity_dim)` and verify the canonical commutators.
pub fn build_space(matter: MatterKind, cavity_dim: usize) -> Result<HilbertSpace> {
    if cavity_dim < 2 {
        return Err(Error::Space(format!(
            "cavity cutoff must be at least 2, got {cavity_dim}"
        )));
    }
    let (matter_dim, coupling, levels, sx, i_sy, sz) = match matter {
        MatterKind::Spin { n } => {
            if n < 1 {
                return Err(Error::Space("a spin needs at least one particle".into()));
            }
            let dim = n as usize + 1;
            let j = 0.5 * n as f64;
            let mz: Vec<f64> = (0..dim).map(|k| k as f64 - j).collect();
            // S_+ |m> = sqrt(j(j+1) - m(m+1)) |m+1>.
            let splus = DMatrix::from_fn(dim, dim, |r, c| {
                if r == c + 1 {
                    (j * (j + 1.0) - mz[c] * (mz[c] + 1.0)).sqrt()
                } else {
                    0.0
                }
            });
            let sminus = splus.transpose();
            let sx = (&splus + &sminus) * 0.5;
            let i_sy = (&splus - &sminus) * 0.5;
            let sz = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(mz.clone()));
            (dim, &sx * 2.0, mz, sx, i_sy, sz)
        }
        MatterKind::TruncatedBoson { cutoff } => {
            if cutoff < 2 {
                return Err(Error::Space(format!(
                    "boson cutoff must be at least 2, got {cutoff}"
                )));
            }
            let b = annihilation(cutoff);
            let bd = b.transpose();
            let x = (&b + &bd) * 0.5;
            let i_y = (&b - &bd) * 0.5;
            let n = &bd * &b;
            let levels = (0..cutoff).map(|k| k as f64).collect();
            (cutoff, &b + &bd, levels, x, i_y, n)
        }
    };
    let dim = matter_dim * cavity_dim;
    if dim > MAX_DIM {
        return Err(Error::Space(format!(
            "product dimension {dim} exceeds the dense limit {MAX_DIM}"
        )));
    }
    let a = annihilation(cavity_dim);
    let a_sum = &a + a.transpose();
    let space = HilbertSpace {
        matter,
        matter_dim,
        cavity_dim,
        a,
        a_sum,
        coupling,
        matter_levels: levels,
        x_op: sx,
        iy_op: i_sy,
        z_op: sz,
    };
    check_commutators(&space)?;
    Ok(space)
}

fn check_commutators(space: &HilbertSpace) -> Result<()> {
    let a = &space.a;
    let comm = a * a.transpose() - a.transpose() * a;
    let n = space.cavity_dim;
    for r in 0..n {
        for c in 0..n {
            let want = if r == c && r + 1 < n { 1.0 } else { 0.0 };
            if r + 1 == n && c + 1 == n {
                continue;
            }
            if (comm[(r, c)] - want).abs() > 1e-12 {
                return Err(Error::Space(format!("[a, a^dag] fails at ({r}, {c})")));
            }
        }
    }
    if space.is_spin() {
        // [S_x, S_y] = i S_z becomes [S_x, i S_y] = -S_z with real matrices.
        let c = &space.x_op * &space.iy_op - &space.iy_op * &space.x_op;
        let err = (c + &space.z_op).abs().max();
        if err > 1e-12 {
            return Err(Error::Space(format!("[S_x, S_y] = i S_z fails by {err}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        assert_eq!(build_space(MatterKind::Spin { n: 1 }, 8).unwrap().dim(), 16);
        assert_eq!(
            build_space(MatterKind::TruncatedBoson { cutoff: 10 }, 10)
                .unwrap()
                .dim(),
            100
        );
        assert_eq!(build_space(MatterKind::Spin { n: 10 }, 15).unwrap().dim(), 165);
    }

    #[test]
    fn rejects_small_cutoffs() {
        assert!(build_space(MatterKind::Spin { n: 1 }, 1).is_err());
        assert!(build_space(MatterKind::TruncatedBoson { cutoff: 1 }, 4).is_err());
        assert!(build_space(MatterKind::Spin { n: 0 }, 4).is_err());
        assert!(build_space(MatterKind::TruncatedBoson { cutoff: 100 }, 100).is_err());
    }

    #[test]
    fn truncation_defect_sits_on_the_last_level() {
        let s = build_space(MatterKind::Spin { n: 1 }, 5).unwrap();
        let comm = &s.a * s.a.transpose() - s.a.transpose() * &s.a;
        assert!((comm[(4, 4)] + 4.0).abs() < 1e-12);
        assert!((comm[(3, 3)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spin_half_operators() {
        let s = build_space(MatterKind::Spin { n: 1 }, 2).unwrap();
        assert_eq!(s.x_op[(0, 1)], 0.5);
        assert_eq!(s.z_op[(0, 0)], -0.5);
        assert_eq!(s.coupling[(1, 0)], 1.0);
        let full = s.full_matter(&s.z_op);
        assert_eq!(full[(2, 2)].re, 0.5);
        assert_eq!(full[(1, 1)].re, -0.5);
    }
}
