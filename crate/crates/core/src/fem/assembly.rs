use std::sync::Arc;

use super::mesh::Mesh;
use super::sparse::{Pattern, SparseSpd};
use crate::error::{Error, Result};

const NO_SLOT: usize = usize::MAX;

/// Element-to-CSR scatter map for one choice of unknowns.
///
/// Built once per mesh; each triangle stores the value-array position of its
/// nine local entries (or `NO_SLOT` when a vertex carries no unknown).
#[derive(Debug, Clone)]
pub struct Assembler {
    pattern: Arc<Pattern>,
    slots: Vec<[[usize; 3]; 3]>,
    // gradient dot products ∇φ_a·∇φ_b times area, per triangle
    grad_products: Vec<[[f64; 3]; 3]>,
    areas: Vec<f64>,
}

impl Assembler {
    /// Unknowns are the interior nodes (homogeneous Dirichlet eliminated).
    pub fn interior(mesh: &Mesh) -> Self {
        Self::build(mesh, |n| mesh.interior_index(n), mesh.n_dof())
    }

    /// Unknowns are all nodes, boundary included.
    pub fn all_nodes(mesh: &Mesh) -> Self {
        Self::build(mesh, Some, mesh.nodes().len())
    }

    fn build(mesh: &Mesh, dof: impl Fn(usize) -> Option<usize>, dim: usize) -> Self {
        let mut entries = Vec::new();
        for tri in mesh.triangles() {
            for &a in tri {
                for &b in tri {
                    if let (Some(i), Some(j)) = (dof(a), dof(b)) {
                        entries.push((i, j));
                    }
                }
            }
        }
        let pattern = Arc::new(Pattern::from_entries(dim, entries));
        let mut slots = Vec::with_capacity(mesh.triangles().len());
        let mut grad_products = Vec::with_capacity(mesh.triangles().len());
        let mut areas = Vec::with_capacity(mesh.triangles().len());
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let mut s = [[NO_SLOT; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    if let (Some(i), Some(j)) = (dof(tri[a]), dof(tri[b])) {
                        s[a][b] = pattern.slot(i, j).expect("pattern covers element");
                    }
                }
            }
            slots.push(s);
            let area = mesh.signed_area(t);
            let p = tri.map(|n| mesh.nodes()[n]);
            // ∇λ_a = (y_{a+1} - y_{a+2}, x_{a+2} - x_{a+1}) / (2|T|)
            let grads: [[f64; 2]; 3] = std::array::from_fn(|a| {
                let b = (a + 1) % 3;
                let c = (a + 2) % 3;
                [
                    (p[b][1] - p[c][1]) / (2.0 * area),
                    (p[c][0] - p[b][0]) / (2.0 * area),
                ]
            });
            let gp = std::array::from_fn(|a| {
                std::array::from_fn(|b| {
                    area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1])
                })
            });
            grad_products.push(gp);
            areas.push(area);
        }
        Self {
            pattern,
            slots,
            grad_products,
            areas,
        }
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    /// Consistent P1 mass matrix, `∫ φ_i φ_j`.
    pub fn mass(&self) -> SparseSpd {
        let mut m = SparseSpd::zeros(self.pattern.clone());
        let vals = m.values_mut();
        for (s, area) in self.slots.iter().zip(&self.areas) {
            for a in 0..3 {
                for b in 0..3 {
                    if s[a][b] != NO_SLOT {
                        let w = if a == b { 2.0 } else { 1.0 };
                        vals[s[a][b]] += area * w / 12.0;
                    }
                }
            }
        }
        m
    }

    /// Weighted stiffness `∫ c ∇φ_i·∇φ_j` with the edge-midpoint rule.
    pub fn stiffness(&self, mesh: &Mesh, coeff: impl Fn([f64; 2]) -> f64) -> Result<SparseSpd> {
        let mut values = vec![0.0; self.pattern.nnz()];
        self.stiffness_into(mesh, coeff, &mut values)?;
        SparseSpd::new(self.pattern.clone(), values)
    }

    /// Accumulates the weighted stiffness into a raw value array.
    pub fn stiffness_into(
        &self,
        mesh: &Mesh,
        coeff: impl Fn([f64; 2]) -> f64,
        values: &mut [f64],
    ) -> Result<()> {
        debug_assert_eq!(values.len(), self.pattern.nnz());
        for (t, (s, gp)) in self.slots.iter().zip(&self.grad_products).enumerate() {
            let mut mean = 0.0;
            for q in mesh.edge_midpoints(t) {
                let c = coeff(q);
                if !c.is_finite() {
                    return Err(Error::NonFiniteCoefficient {
                        value: c,
                        x: q[0],
                        y: q[1],
                    });
                }
                mean += c / 3.0;
            }
            if mean == 0.0 {
                continue;
            }
            for a in 0..3 {
                for b in 0..3 {
                    if s[a][b] != NO_SLOT {
                        values[s[a][b]] += mean * gp[a][b];
                    }
                }
            }
        }
        Ok(())
    }

    /// P1 load vector `∫ f φ_i` with the edge-midpoint rule.
    pub fn load(&self, mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.pattern.dim()];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let area = self.areas[t];
            let mids = mesh.edge_midpoints(t);
            let fv = mids.map(&f);
            // midpoint m_k sits on edge (k, k+1): φ_k = φ_{k+1} = 1/2 there
            for (a, &node) in tri.iter().enumerate() {
                let Some(i) = self.dof_of(mesh, node) else {
                    continue;
                };
                let prev = (a + 2) % 3;
                out[i] += area / 3.0 * 0.5 * (fv[a] + fv[prev]);
            }
        }
        out
    }

    fn dof_of(&self, mesh: &Mesh, node: usize) -> Option<usize> {
        if self.pattern.dim() == mesh.nodes().len() {
            Some(node)
        } else {
            mesh.interior_index(node)
        }
    }
}

/// Mass matrix on the interior unknowns.
pub fn assemble_mass(mesh: &Mesh) -> SparseSpd {
    Assembler::interior(mesh).mass()
}

/// Weighted stiffness matrix on the interior unknowns.
pub fn assemble_stiffness(mesh: &Mesh, coeff: impl Fn([f64; 2]) -> f64) -> Result<SparseSpd> {
    Assembler::interior(mesh).stiffness(mesh, coeff)
}

/// Weighted stiffness before boundary elimination.
pub fn assemble_stiffness_full(
    mesh: &Mesh,
    coeff: impl Fn([f64; 2]) -> f64,
) -> Result<SparseSpd> {
    Assembler::all_nodes(mesh).stiffness(mesh, coeff)
}
