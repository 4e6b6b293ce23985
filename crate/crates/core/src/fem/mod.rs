//! P1 finite elements on the unit square: mesh, assembly, norms and the
//! discrete Riesz map of `H¹₀`.

mod assembly;
mod mesh;
mod sparse;
mod trajectory;

pub use assembly::{assemble_mass, assemble_stiffness, assemble_stiffness_full, Assembler};
pub use mesh::Mesh;
pub use sparse::{BandedCholesky, Pattern, SparseSpd};
pub use trajectory::{DumpMeta, FieldTrajectory, TimeGrid, TrajectoryCsv};

use crate::error::{Error, Result};

/// Relative residual above which a Riesz solve is reported as failed.
pub const RIESZ_TOLERANCE: f64 = 1e-10;

/// Space-time discretization shared by every solve: mesh, time grid, mass
/// matrix and the unweighted stiffness `K₁` that realizes the Riesz map.
///
/// Immutable after construction and shared read-only between threads.
#[derive(Debug, Clone)]
pub struct FemSpace {
    mesh: Mesh,
    grid: TimeGrid,
    assembler: Assembler,
    mass: SparseSpd,
    stiffness: SparseSpd,
    stiffness_factor: BandedCholesky,
}

impl FemSpace {
    pub fn new(level: u32, grid: TimeGrid) -> Result<Self> {
        let mesh = Mesh::new(level)?;
        let assembler = Assembler::interior(&mesh);
        let mass = assembler.mass();
        let stiffness = assembler.stiffness(&mesh, |_| 1.0)?;
        let stiffness_factor = stiffness.cholesky()?;
        Ok(Self {
            mesh,
            grid,
            assembler,
            mass,
            stiffness,
            stiffness_factor,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_dof(&self) -> usize {
        self.mesh.n_dof()
    }

    pub fn assembler(&self) -> &Assembler {
        &self.assembler
    }

    pub fn mass(&self) -> &SparseSpd {
        &self.mass
    }

    /// `K₁`, the stiffness matrix of the unit coefficient.
    pub fn stiffness(&self) -> &SparseSpd {
        &self.stiffness
    }

    pub fn zero_trajectory(&self) -> FieldTrajectory {
        FieldTrajectory::zeros(self.grid, self.n_dof())
    }

    /// Nodal interpolant of `f(x, t)` at every grid time.
    pub fn interpolate_trajectory(&self, f: impl Fn([f64; 2], f64) -> f64) -> FieldTrajectory {
        FieldTrajectory::from_fn(self.grid, self.n_dof(), |_, t| {
            self.mesh.interpolate(|x| f(x, t))
        })
    }

    /// Dual coefficients `K₁ w` of `R_V w`.
    pub fn riesz_apply(&self, w: &[f64]) -> Vec<f64> {
        self.stiffness.matvec(w)
    }

    /// Nodal vector `K₁⁻¹ F`, checked against the residual tolerance.
    pub fn riesz_solve(&self, dual: &[f64]) -> Result<Vec<f64>> {
        if dual.len() != self.n_dof() {
            return Err(Error::DimensionMismatch {
                what: "riesz_solve",
                expected: self.n_dof(),
                got: dual.len(),
            });
        }
        let w = self.stiffness_factor.solve(dual);
        let residual = self.stiffness.matvec(&w);
        let num: f64 = residual
            .iter()
            .zip(dual)
            .map(|(r, f)| (r - f) * (r - f))
            .sum::<f64>()
            .sqrt();
        let den = dual.iter().map(|f| f * f).sum::<f64>().sqrt();
        if den > 0.0 && num > RIESZ_TOLERANCE * den {
            return Err(Error::SolveResidual {
                residual: num / den,
            });
        }
        Ok(w)
    }

    /// `‖v‖_{L²(D)}`
    pub fn norm_l2d(&self, v: &[f64]) -> f64 {
        self.mass.quad_form(v).max(0.0).sqrt()
    }

    /// `‖v‖_V = ‖∇v‖_{L²(D)}`
    pub fn norm_v(&self, v: &[f64]) -> f64 {
        self.stiffness.quad_form(v).max(0.0).sqrt()
    }

    /// `L²(V;I)` inner product, right-endpoint rule in time (`k ≥ 1`).
    pub fn inner_l2v_i(&self, a: &FieldTrajectory, b: &FieldTrajectory) -> Result<f64> {
        self.check(a)?;
        a.check_shape(b, "inner_l2v_i")?;
        let dt = self.grid.dt();
        Ok((1..=self.grid.n_steps())
            .map(|k| dt * self.stiffness.bilinear(a.row(k), b.row(k)))
            .sum())
    }

    pub fn norm_l2v_i(&self, v: &FieldTrajectory) -> Result<f64> {
        Ok(self.inner_l2v_i(v, v)?.max(0.0).sqrt())
    }

    /// `‖R_V w‖_{L²(V';I)}`, equal to `‖w‖_{L²(V;I)}` by the Riesz isometry.
    pub fn norm_dual_l2v_i(&self, w: &FieldTrajectory) -> Result<f64> {
        self.norm_l2v_i(w)
    }

    pub(crate) fn check(&self, v: &FieldTrajectory) -> Result<()> {
        if v.grid() != self.grid {
            return Err(Error::DimensionMismatch {
                what: "trajectory grid",
                expected: self.grid.n_steps(),
                got: v.grid().n_steps(),
            });
        }
        if v.n_dof() != self.n_dof() {
            return Err(Error::DimensionMismatch {
                what: "trajectory unknowns",
                expected: self.n_dof(),
                got: v.n_dof(),
            });
        }
        Ok(())
    }
}
