use nalgebra::DVector;

use crate::error::Result;
use crate::sparse::CsrMatrix;

use super::{
    build_mesh, AffineParts, AffineTruthModel, ConstraintOperator, Elements, Mesh, ModelId, ModelSpec,
    ThetaFunctions,
};

/// Unit-coefficient P1 stiffness matrix `int grad(phi_i) . grad(phi_j)` on the
/// interior nodes.
pub fn stiffness_matrix(mesh: &Mesh) -> CsrMatrix {
    let n = mesh.num_interior();
    let mut triplets = Vec::new();
    let mut scatter = |local: &[usize], k: &dyn Fn(usize, usize) -> f64| {
        for (a, &na) in local.iter().enumerate() {
            let Some(i) = mesh.interior_index[na] else { continue };
            for (b, &nb) in local.iter().enumerate() {
                if let Some(j) = mesh.interior_index[nb] {
                    triplets.push((i, j, k(a, b)));
                }
            }
        }
    };
    match &mesh.elements {
        Elements::Segments(segs) => {
            for s in segs {
                let h = mesh.nodes[s[1]][0] - mesh.nodes[s[0]][0];
                scatter(s, &|a, b| if a == b { 1.0 / h } else { -1.0 / h });
            }
        }
        Elements::Triangles(tris) => {
            for t in tris {
                let (area, grads) = triangle_gradients(mesh, t);
                scatter(t, &|a, b| area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]));
            }
        }
    }
    let summed = CsrMatrix::from_triplets(n, n, &triplets);
    // couplings across the cut diagonal cancel exactly in exact arithmetic
    summed.pruned(1e-13)
}

/// Load vector `int phi_i` of the constant function 1 on the interior nodes.
pub fn load_vector(mesh: &Mesh) -> DVector<f64> {
    let mut f = DVector::zeros(mesh.num_interior());
    let mut scatter = |local: &[usize], w: f64| {
        for &node in local {
            if let Some(i) = mesh.interior_index[node] {
                f[i] += w;
            }
        }
    };
    match &mesh.elements {
        Elements::Segments(segs) => {
            for s in segs {
                scatter(s, 0.5 * (mesh.nodes[s[1]][0] - mesh.nodes[s[0]][0]));
            }
        }
        Elements::Triangles(tris) => {
            for t in tris {
                scatter(t, triangle_gradients(mesh, t).0 / 3.0);
            }
        }
    }
    f
}

fn triangle_gradients(mesh: &Mesh, t: &[usize; 3]) -> (f64, [[f64; 2]; 3]) {
    let [p0, p1, p2] = t.map(|k| mesh.nodes[k]);
    let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    let area = 0.5 * det.abs();
    // gradient of the barycentric coordinate opposite to each vertex
    let grads = [
        [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
        [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
        [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
    ];
    (area, grads)
}

/// Assembles the affine truth model for one of the two obstacle problems.
pub fn assemble_model(spec: &ModelSpec) -> Result<AffineTruthModel> {
    let mesh = build_mesh(spec)?;
    let stiffness = stiffness_matrix(&mesh);
    let load = load_vector(&mesh);
    let n = mesh.num_interior();
    let points = mesh.interior_points();
    let (f1, b, g1) = match spec.model {
        // rope: constraint u >= h(x) written as -u <= -h(x)
        ModelId::Rope => (
            -load,
            ConstraintOperator::Diagonal(DVector::from_element(n, -1.0)),
            DVector::from_iterator(n, points.iter().map(|p| -(5.0 * p[0] - 10.0))),
        ),
        ModelId::Membrane => (
            load,
            ConstraintOperator::Diagonal(DVector::from_element(n, 1.0)),
            DVector::from_element(n, 0.1),
        ),
    };
    let mut model = AffineTruthModel::from_parts(AffineParts {
        a_components: vec![stiffness.clone()],
        f_components: vec![f1],
        g_components: vec![g1],
        b,
        x_v: stiffness,
        theta: ThetaFunctions::linear_diffusion(),
        parameter_box: spec.parameter_box(),
    })?;
    model.spec = Some(spec.clone());
    model.mesh = Some(mesh);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe_truth::{assemble_at, evaluate_theta};
    use crate::Error;

    #[test]
    fn two_element_rope_by_hand() {
        let m = assemble_model(&ModelSpec::rope(2)).unwrap();
        assert_eq!(m.a_components[0].to_dense()[(0, 0)], 4.0);
        assert_eq!(m.f_components[0][0], -0.5);
        assert_eq!(m.g_components[0][0], 7.5);
        let (a, _, _) = assemble_at(&m, &[0.001]).unwrap();
        assert!((a.get(0, 0) - 0.004).abs() < 1e-18);
    }

    #[test]
    fn membrane_obstacle_and_theta() {
        let m = assemble_model(&ModelSpec::membrane(4, 4)).unwrap();
        assert!(m.g_components[0].iter().all(|&g| g == 0.1));
        let th = evaluate_theta(&m, &[0.5]).unwrap();
        assert_eq!((th.a, th.f, th.g), (vec![0.5], vec![1.0], vec![1.0]));
        assert!(matches!(evaluate_theta(&m, &[0.6]), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn five_point_stencil_from_consistent_split() {
        // with a single diagonal direction the P1 stiffness is the 5-point Laplacian
        let m = assemble_model(&ModelSpec::membrane(5, 5)).unwrap();
        let a = &m.a_components[0];
        for i in 0..a.nrows() {
            assert!((a.get(i, i) - 4.0).abs() < 1e-12);
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j != i {
                    assert!((v + 1.0).abs() < 1e-12);
                }
            }
        }
        assert!(m.f_components[0].iter().all(|&f| (f - 1.0 / 25.0).abs() < 1e-15));
    }

    #[test]
    fn load_integrates_piecewise_linear_exactly() {
        let m = assemble_model(&ModelSpec::rope(8)).unwrap();
        let pts = m.mesh.as_ref().unwrap().interior_points();
        let u = DVector::from_iterator(pts.len(), pts.iter().map(|p| p[0] * (1.0 - p[0])));
        // the interpolant of x(1-x) on 8 segments integrates to 1/6 - h^2/6
        let exact = 1.0 / 6.0 - 1.0 / (6.0 * 64.0);
        assert!((m.f_components[0].dot(&u) + exact).abs() < 1e-14);
    }
}
