use crate::error::{Error, Result};

use super::{ModelSpec, Resolution};

/// Element connectivity of a [`Mesh`].
#[derive(Debug, Clone, PartialEq)]
pub enum Elements {
    Segments(Vec<[usize; 2]>),
    Triangles(Vec<[usize; 3]>),
}

/// A uniform mesh of the unit interval or the unit square.
///
/// Nodes are numbered lexicographically (x fastest). `interior` lists the
/// nodes that carry a degree of freedom; Dirichlet boundary nodes are
/// eliminated, so `interior_index[node]` is `None` on the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub dimension: usize,
    pub nodes: Vec<[f64; 2]>,
    pub elements: Elements,
    pub interior: Vec<usize>,
    pub interior_index: Vec<Option<usize>>,
}

impl Mesh {
    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }

    /// Coordinates of the interior nodes, in degree-of-freedom order.
    pub fn interior_points(&self) -> Vec<[f64; 2]> {
        self.interior.iter().map(|&i| self.nodes[i]).collect()
    }

    pub fn num_elements(&self) -> usize {
        match &self.elements {
            Elements::Segments(s) => s.len(),
            Elements::Triangles(t) => t.len(),
        }
    }

    fn with_interior(dimension: usize, nodes: Vec<[f64; 2]>, elements: Elements, is_interior: impl Fn(usize) -> bool) -> Self {
        let mut interior = Vec::new();
        let mut interior_index = vec![None; nodes.len()];
        for i in 0..nodes.len() {
            if is_interior(i) {
                interior_index[i] = Some(interior.len());
                interior.push(i);
            }
        }
        Self {
            dimension,
            nodes,
            elements,
            interior,
            interior_index,
        }
    }
}

/// Builds the mesh described by `spec`.
pub fn build_mesh(spec: &ModelSpec) -> Result<Mesh> {
    spec.validate()?;
    Ok(match spec.resolution {
        Resolution::Segments(n) => interval_mesh(n)?,
        Resolution::Grid { nx, ny } => square_mesh(nx, ny)?,
    })
}

/// `n` uniform segments on (0, 1).
pub fn interval_mesh(n: usize) -> Result<Mesh> {
    if n < 2 {
        return Err(Error::InvalidSpec(format!("need at least 2 elements, got {n}")));
    }
    let nodes = (0..=n).map(|i| [i as f64 / n as f64, 0.0]).collect();
    let segments = (0..n).map(|i| [i, i + 1]).collect();
    Ok(Mesh::with_interior(1, nodes, Elements::Segments(segments), |i| i > 0 && i < n))
}

/// `nx * ny` uniform cells on (0, 1)^2, each cut along the same diagonal into
/// two triangles.
pub fn square_mesh(nx: usize, ny: usize) -> Result<Mesh> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidSpec(format!("need at least 2 cells per direction, got {nx}x{ny}")));
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([i as f64 / nx as f64, j as f64 / ny as f64]);
        }
    }
    let mut tris = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (n0, n1, n2, n3) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            tris.push([n0, n1, n3]);
            tris.push([n0, n3, n2]);
        }
    }
    Ok(Mesh::with_interior(2, nodes, Elements::Triangles(tris), |k| {
        let (i, j) = (k % (nx + 1), k / (nx + 1));
        i > 0 && i < nx && j > 0 && j < ny
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_interior_count() {
        assert_eq!(interval_mesh(200).unwrap().num_interior(), 199);
        let m = interval_mesh(2).unwrap();
        assert_eq!(m.interior_points(), vec![[0.5, 0.0]]);
    }

    #[test]
    fn square_interior_count() {
        let m = square_mesh(32, 32).unwrap();
        assert_eq!(m.num_interior(), 961);
        assert_eq!(m.num_elements(), 2 * 32 * 32);
        assert_eq!(square_mesh(3, 5).unwrap().num_interior(), 2 * 4);
    }

    #[test]
    fn coarse_resolutions_rejected() {
        assert!(matches!(interval_mesh(1), Err(Error::InvalidSpec(_))));
        assert!(matches!(square_mesh(1, 4), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn interior_order_is_lexicographic() {
        let m = square_mesh(4, 4).unwrap();
        let pts = m.interior_points();
        for w in pts.windows(2) {
            assert!(w[0][1] < w[1][1] || (w[0][1] == w[1][1] && w[0][0] < w[1][0]));
        }
    }
}
