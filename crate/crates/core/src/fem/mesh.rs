use crate::error::{Error, Result};

/// Uniform right-triangle mesh of the unit square.
///
/// Nodes are numbered row-major (y outer, x inner). Each grid square is split
/// along its `(0,0)–(1,1)` diagonal. Boundary nodes carry no unknown.
#[derive(Debug, Clone)]
pub struct Mesh {
    level: u32,
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    interior_index: Vec<Option<usize>>,
    interior_nodes: Vec<usize>,
}

impl Mesh {
    pub fn new(level: u32) -> Result<Self> {
        if level == 0 {
            return Err(Error::invalid("mesh level must be at least 1"));
        }
        if level > 12 {
            return Err(Error::invalid(format!("mesh level {level} is too fine")));
        }
        let cells = 1usize << level;
        let np = cells + 1;
        let h = 1.0 / cells as f64;
        let mut nodes = Vec::with_capacity(np * np);
        let mut interior_index = vec![None; np * np];
        let mut interior_nodes = Vec::with_capacity((cells - 1) * (cells - 1));
        for j in 0..np {
            for i in 0..np {
                let id = j * np + i;
                // exact endpoints keep boundary detection free of roundoff
                let coord = |k: usize| if k == cells { 1.0 } else { k as f64 * h };
                nodes.push([coord(i), coord(j)]);
                if i > 0 && i < cells && j > 0 && j < cells {
                    interior_index[id] = Some(interior_nodes.len());
                    interior_nodes.push(id);
                }
            }
        }
        let mut triangles = Vec::with_capacity(2 * cells * cells);
        for j in 0..cells {
            for i in 0..cells {
                let a = j * np + i;
                let b = a + 1;
                let c = a + np + 1;
                let d = a + np;
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        Ok(Self {
            level,
            nodes,
            triangles,
            interior_index,
            interior_nodes,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Number of cells per side, `2^level`.
    pub fn cells_per_side(&self) -> usize {
        1 << self.level
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells_per_side() as f64
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn interior_index(&self, node: usize) -> Option<usize> {
        self.interior_index[node]
    }

    /// Global node id of each interior unknown, in unknown order.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    pub fn n_dof(&self) -> usize {
        self.interior_nodes.len()
    }

    pub fn signed_area(&self, tri: usize) -> f64 {
        let [p0, p1, p2] = self.triangles[tri].map(|n| self.nodes[n]);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    /// Edge midpoints of a triangle, the quadrature points of the 3-point rule.
    pub fn edge_midpoints(&self, tri: usize) -> [[f64; 2]; 3] {
        let [p0, p1, p2] = self.triangles[tri].map(|n| self.nodes[n]);
        let mid = |a: [f64; 2], b: [f64; 2]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        [mid(p0, p1), mid(p1, p2), mid(p2, p0)]
    }

    /// Nodal interpolant of `f` on the interior unknowns.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.interior_nodes.iter().map(|&n| f(self.nodes[n])).collect()
    }

    /// Half bandwidth of interior-unknown matrices under the natural ordering.
    pub fn bandwidth(&self) -> usize {
        self.cells_per_side()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_one_counts() {
        let m = Mesh::new(1).unwrap();
        assert_eq!(m.nodes().len(), 9);
        assert_eq!(m.triangles().len(), 8);
        assert_eq!(m.n_dof(), 1);
        assert_eq!(m.interior_nodes(), &[4]);
    }

    #[test]
    fn level_zero_rejected() {
        assert!(Mesh::new(0).is_err());
    }

    #[test]
    fn dof_count_and_area() {
        for level in 1..=5 {
            let m = Mesh::new(level).unwrap();
            let k = (1usize << level) - 1;
            assert_eq!(m.n_dof(), k * k);
            let mut total = 0.0;
            for t in 0..m.triangles().len() {
                let a = m.signed_area(t);
                assert!(a > 0.0);
                total += a;
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_nodes_have_no_unknown() {
        let m = Mesh::new(3).unwrap();
        for (id, p) in m.nodes().iter().enumerate() {
            let on_boundary = p.iter().any(|&c| c == 0.0 || c == 1.0);
            assert_eq!(on_boundary, m.interior_index(id).is_none());
        }
    }
}
