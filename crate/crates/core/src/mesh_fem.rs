//! Structured P1 triangulation of the unit square and assembly of the
//! parameter-independent component matrices for the two benchmark
//! operators.
//!
//! Homogeneous Dirichlet conditions are imposed by eliminating boundary
//! vertices: assembled matrices act on interior degrees of freedom only.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Vector2<f64>>,
    /// Vertex index triples, counterclockwise.
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
}

impl Mesh {
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (p, q, r) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((q.x - p.x) * (r.y - p.y) - (r.x - p.x) * (q.y - p.y))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }
}

/// Uniform right-triangle mesh: (n+1)^2 lattice vertices, each cell split
/// along the (i,j) -> (i+1,j+1) diagonal.
pub fn build_structured_mesh(n: usize) -> Result<Mesh> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 subdivisions per side, got {n}"
        )));
    }
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    let mut boundary = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Vector2::new(i as f64 * h, j as f64 * h));
            boundary.push(i == 0 || i == n || j == 0 || j == n);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10) = (idx(i, j), idx(i + 1, j));
            let (v01, v11) = (idx(i, j + 1), idx(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Ok(Mesh {
        vertices,
        triangles,
        boundary,
    })
}

#[derive(Debug, Clone)]
pub struct FemSpace {
    pub mesh: Mesh,
    /// vertex index -> dof index, for interior vertices only.
    pub free_dof_map: Vec<Option<usize>>,
    pub n_dof: usize,
}

impl FemSpace {
    pub fn new(mesh: Mesh) -> Self {
        let mut free_dof_map = vec![None; mesh.vertices.len()];
        let mut next = 0usize;
        for (v, &on_boundary) in mesh.boundary.iter().enumerate() {
            if !on_boundary {
                free_dof_map[v] = Some(next);
                next += 1;
            }
        }
        FemSpace {
            mesh,
            free_dof_map,
            n_dof: next,
        }
    }
}

/// Scalar coefficient functions of the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Theta {
    Const(f64),
    /// 1 / mu_d^2
    InverseSquare(usize),
    /// c / mu_d
    ScaledInverse { coeff: f64, dim: usize },
    /// mu_d^2 / 2
    HalfSquare(usize),
}

impl Theta {
    pub fn eval(&self, mu: &[f64]) -> f64 {
        match *self {
            Theta::Const(c) => c,
            Theta::InverseSquare(d) => 1.0 / (mu[d] * mu[d]),
            Theta::ScaledInverse { coeff, dim } => coeff / mu[dim],
            Theta::HalfSquare(d) => 0.5 * mu[d] * mu[d],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// Anisotropic diffusion with the 2x2 parametric diffusion matrix.
    TwoParam,
    /// Same diffusion plus the quadratic-potential reaction term.
    ThreeParam,
    /// Unparameterized -Laplace u = lambda u, used for analytic checks.
    Laplacian,
}

impl ProblemKind {
    /// Coefficient functions of the affine decomposition, (theta_a, theta_b).
    pub fn thetas(&self) -> (Vec<Theta>, Vec<Theta>) {
        let theta_a = match self {
            ProblemKind::TwoParam => vec![
                Theta::InverseSquare(0),
                Theta::ScaledInverse { coeff: 0.7, dim: 1 },
                Theta::InverseSquare(1),
            ],
            ProblemKind::ThreeParam => vec![
                Theta::InverseSquare(0),
                Theta::ScaledInverse { coeff: 0.7, dim: 1 },
                Theta::InverseSquare(1),
                Theta::HalfSquare(2),
            ],
            ProblemKind::Laplacian => vec![Theta::Const(1.0), Theta::Const(1.0)],
        };
        (theta_a, vec![Theta::Const(1.0)])
    }

    pub fn parameter_dim(&self) -> usize {
        match self {
            ProblemKind::TwoParam => 2,
            ProblemKind::ThreeParam => 3,
            ProblemKind::Laplacian => 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AffineOperator {
    pub a_components: Vec<CsrMatrix>,
    pub theta_a: Vec<Theta>,
    pub b_components: Vec<CsrMatrix>,
    pub theta_b: Vec<Theta>,
    pub parameter_dim: usize,
    pub kind: ProblemKind,
}

impl AffineOperator {
    pub fn dim(&self) -> usize {
        self.a_components[0].nrows()
    }

    /// Validity window of the diffusion matrix: positive definite for
    /// mu_1 in (-1.42, 1.42) \ {0} and mu_2 != 0.
    pub fn check_admissible(&self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.parameter_dim {
            return Err(Error::InvalidArgument(format!(
                "parameter has length {}, operator expects {}",
                mu.len(),
                self.parameter_dim
            )));
        }
        match self.kind {
            ProblemKind::Laplacian => Ok(()),
            ProblemKind::TwoParam | ProblemKind::ThreeParam => {
                if mu[0] == 0.0 || mu[0].abs() >= 1.42 {
                    return Err(Error::Domain(format!(
                        "mu_1 = {} violates mu_1 in (-1.42, 1.42) \\ {{0}}",
                        mu[0]
                    )));
                }
                if mu[1] == 0.0 {
                    return Err(Error::Domain("mu_2 must be nonzero".into()));
                }
                Ok(())
            }
        }
    }

    /// Assemble (A(mu), B(mu)) from the affine components.
    pub fn evaluate(&self, mu: &[f64]) -> Result<(CsrMatrix, CsrMatrix)> {
        self.check_admissible(mu)?;
        let a_terms: Vec<(f64, &CsrMatrix)> = self
            .theta_a
            .iter()
            .zip(&self.a_components)
            .map(|(t, m)| (t.eval(mu), m))
            .collect();
        let b_terms: Vec<(f64, &CsrMatrix)> = self
            .theta_b
            .iter()
            .zip(&self.b_components)
            .map(|(t, m)| (t.eval(mu), m))
            .collect();
        Ok((
            CsrMatrix::linear_combination(&a_terms),
            CsrMatrix::linear_combination(&b_terms),
        ))
    }
}

struct ElementGeometry {
    area: f64,
    /// grad phi_i = (bx[i], by[i]) / (2 area)
    bx: [f64; 3],
    by: [f64; 3],
    coords: [Vector2<f64>; 3],
}

fn element_geometry(mesh: &Mesh, t: usize) -> ElementGeometry {
    let [a, b, c] = mesh.triangles[t];
    let p = [mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]];
    let area = 0.5
        * ((p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y));
    let bx = [p[1].y - p[2].y, p[2].y - p[0].y, p[0].y - p[1].y];
    let by = [p[2].x - p[1].x, p[0].x - p[2].x, p[1].x - p[0].x];
    ElementGeometry {
        area,
        bx,
        by,
        coords: p,
    }
}

/// Element matrices for one triangle, all four component forms.
/// Stiffness and mass use exact P1 integrals; the potential term uses the
/// three-point edge-midpoint rule (exact to degree 2).
fn element_matrices(
    geo: &ElementGeometry,
) -> ([[f64; 3]; 3], [[f64; 3]; 3], [[f64; 3]; 3], [[f64; 3]; 3], [[f64; 3]; 3]) {
    let inv4a = 1.0 / (4.0 * geo.area);
    let mut kxx = [[0.0; 3]; 3];
    let mut kyy = [[0.0; 3]; 3];
    let mut kxy = [[0.0; 3]; 3];
    let mut mass = [[0.0; 3]; 3];
    let mut pot = [[0.0; 3]; 3];

    for i in 0..3 {
        for j in 0..3 {
            kxx[i][j] = geo.bx[i] * geo.bx[j] * inv4a;
            kyy[i][j] = geo.by[i] * geo.by[j] * inv4a;
            // symmetric cross term: int (dx phi_j dy phi_i + dy phi_j dx phi_i)
            kxy[i][j] = (geo.bx[j] * geo.by[i] + geo.by[j] * geo.bx[i]) * inv4a;
            mass[i][j] = geo.area / 12.0 * if i == j { 2.0 } else { 1.0 };
        }
    }

    // edge midpoints; phi values there are 1/2 on the two adjacent vertices
    let mids = [
        0.5 * (geo.coords[0] + geo.coords[1]),
        0.5 * (geo.coords[1] + geo.coords[2]),
        0.5 * (geo.coords[2] + geo.coords[0]),
    ];
    let phi_at_mid = |i: usize, m: usize| -> f64 {
        // midpoint m joins vertices m and (m+1)%3
        if i == m || i == (m + 1) % 3 {
            0.5
        } else {
            0.0
        }
    };
    for m in 0..3 {
        let w = mids[m].x * mids[m].x + mids[m].y * mids[m].y;
        for i in 0..3 {
            for j in 0..3 {
                pot[i][j] += geo.area / 3.0 * w * phi_at_mid(i, m) * phi_at_mid(j, m);
            }
        }
    }
    (kxx, kxy, kyy, mass, pot)
}

fn assemble_component<F>(space: &FemSpace, elem: F) -> CsrMatrix
where
    F: Fn(&ElementGeometry) -> [[f64; 3]; 3],
{
    let mut triplets = Vec::new();
    for t in 0..space.mesh.triangles.len() {
        let geo = element_geometry(&space.mesh, t);
        let local = elem(&geo);
        let verts = space.mesh.triangles[t];
        for i in 0..3 {
            let Some(gi) = space.free_dof_map[verts[i]] else {
                continue;
            };
            for j in 0..3 {
                let Some(gj) = space.free_dof_map[verts[j]] else {
                    continue;
                };
                triplets.push((gi, gj, local[i][j]));
            }
        }
    }
    CsrMatrix::from_triplets(space.n_dof, space.n_dof, &triplets)
}

fn assemble_components(space: &FemSpace) -> [CsrMatrix; 5] {
    [
        assemble_component(space, |g| element_matrices(g).0),
        assemble_component(space, |g| element_matrices(g).1),
        assemble_component(space, |g| element_matrices(g).2),
        assemble_component(space, |g| element_matrices(g).3),
        assemble_component(space, |g| element_matrices(g).4),
    ]
}

/// Affine decomposition of the two-parameter diffusion problem:
/// a-components [A_xx, A_xy + A_yx, A_yy] with weights
/// [1/mu_1^2, 0.7/mu_2, 1/mu_2^2]; b-component the mass matrix.
pub fn assemble_problem_two_param(space: &FemSpace) -> AffineOperator {
    let [kxx, kxy, kyy, mass, _] = assemble_components(space);
    let kind = ProblemKind::TwoParam;
    let (theta_a, theta_b) = kind.thetas();
    AffineOperator {
        a_components: vec![kxx, kxy, kyy],
        theta_a,
        b_components: vec![mass],
        theta_b,
        parameter_dim: kind.parameter_dim(),
        kind,
    }
}

/// Three-parameter variant: adds the potential component
/// C(i,j) = int (x^2 + y^2) phi_j phi_i with weight mu_3^2 / 2.
pub fn assemble_problem_three_param(space: &FemSpace) -> AffineOperator {
    let [kxx, kxy, kyy, mass, pot] = assemble_components(space);
    let kind = ProblemKind::ThreeParam;
    let (theta_a, theta_b) = kind.thetas();
    AffineOperator {
        a_components: vec![kxx, kxy, kyy, pot],
        theta_a,
        b_components: vec![mass],
        theta_b,
        parameter_dim: kind.parameter_dim(),
        kind,
    }
}

/// Plain Dirichlet Laplacian (A_xx + A_yy, M); parameter-free.
pub fn assemble_laplacian(space: &FemSpace) -> AffineOperator {
    let [kxx, _, kyy, mass, _] = assemble_components(space);
    let kind = ProblemKind::Laplacian;
    let (theta_a, theta_b) = kind.thetas();
    AffineOperator {
        a_components: vec![kxx, kyy],
        theta_a,
        b_components: vec![mass],
        theta_b,
        parameter_dim: kind.parameter_dim(),
        kind,
    }
}

/// Mass matrix on all vertices, no boundary elimination. Row sums total
/// the domain area; used for assembly sanity checks.
pub fn assemble_full_mass(mesh: &Mesh) -> CsrMatrix {
    let n = mesh.vertices.len();
    let mut triplets = Vec::new();
    for t in 0..mesh.triangles.len() {
        let geo = element_geometry(mesh, t);
        let verts = mesh.triangles[t];
        for i in 0..3 {
            for j in 0..3 {
                let v = geo.area / 12.0 * if i == j { 2.0 } else { 1.0 };
                triplets.push((verts[i], verts[j], v));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn smallest_mesh_counts() {
        let mesh = build_structured_mesh(2).unwrap();
        assert_eq!(mesh.vertices.len(), 9);
        assert_eq!(mesh.triangles.len(), 8);
        let space = FemSpace::new(mesh);
        assert_eq!(space.n_dof, 1);
    }

    #[test]
    fn n4_counts() {
        let mesh = build_structured_mesh(4).unwrap();
        assert_eq!(mesh.vertices.len(), 25);
        assert_eq!(mesh.triangles.len(), 32);
        assert_eq!(FemSpace::new(mesh).n_dof, 9);
    }

    #[test]
    fn rejects_degenerate_subdivision() {
        assert!(matches!(
            build_structured_mesh(1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn triangle_areas_positive_and_partition_unit_square() {
        let mesh = build_structured_mesh(100).unwrap();
        for t in 0..mesh.triangles.len() {
            assert!(mesh.signed_area(t) > 0.0);
        }
        assert_relative_eq!(mesh.total_area(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn boundary_flags_match_coordinates() {
        let mesh = build_structured_mesh(7).unwrap();
        for (v, p) in mesh.vertices.iter().enumerate() {
            let on_edge = p.x == 0.0 || p.x == 1.0 || p.y == 0.0 || p.y == 1.0;
            assert_eq!(mesh.boundary[v], on_edge);
        }
    }

    #[test]
    fn full_mass_rows_sum_to_domain_area() {
        let mesh = build_structured_mesh(10).unwrap();
        let m = assemble_full_mass(&mesh);
        let total: f64 = (0..m.nrows())
            .map(|i| m.row(i).1.iter().sum::<f64>())
            .sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn theta_values_problem_one() {
        let op_thetas = [
            Theta::InverseSquare(0),
            Theta::ScaledInverse { coeff: 0.7, dim: 1 },
            Theta::InverseSquare(1),
        ];
        let mu = [0.3, 0.4];
        let vals: Vec<f64> = op_thetas.iter().map(|t| t.eval(&mu)).collect();
        assert_relative_eq!(vals[0], 1.0 / 0.09, max_relative = 1e-14);
        assert_relative_eq!(vals[1], 1.75, max_relative = 1e-14);
        assert_relative_eq!(vals[2], 6.25, max_relative = 1e-14);
    }

    #[test]
    fn theta_potential_weight() {
        assert_relative_eq!(
            Theta::HalfSquare(2).eval(&[0.4, 0.4, 6.0]),
            18.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn components_are_symmetric() {
        let space = FemSpace::new(build_structured_mesh(8).unwrap());
        let op = assemble_problem_three_param(&space);
        for m in op.a_components.iter().chain(&op.b_components) {
            assert!(m.max_asymmetry() == 0.0);
        }
    }

    #[test]
    fn potential_bounded_by_twice_mass() {
        let space = FemSpace::new(build_structured_mesh(8).unwrap());
        let op = assemble_problem_three_param(&space);
        let pot = &op.a_components[3];
        let mass = &op.b_components[0];
        for i in 0..pot.nrows() {
            let (cols, vals) = pot.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                assert!(v <= 2.0 * mass.get(i, j) + 1e-15);
            }
        }
    }

    #[test]
    fn evaluate_rejects_inadmissible_mu() {
        let space = FemSpace::new(build_structured_mesh(4).unwrap());
        let op = assemble_problem_two_param(&space);
        assert!(matches!(op.evaluate(&[1.5, 1.0]), Err(Error::Domain(_))));
        assert!(matches!(op.evaluate(&[0.0, 1.0]), Err(Error::Domain(_))));
        assert!(matches!(op.evaluate(&[0.5, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(
            op.evaluate(&[0.5]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn evaluate_combines_components_exactly() {
        let space = FemSpace::new(build_structured_mesh(5).unwrap());
        let op = assemble_problem_two_param(&space);
        let (a, _) = op.evaluate(&[1.0, 1.0]).unwrap();
        let expected = CsrMatrix::linear_combination(&[
            (1.0, &op.a_components[0]),
            (0.7, &op.a_components[1]),
            (1.0, &op.a_components[2]),
        ]);
        assert_eq!(a, expected);
        assert!(a.max_asymmetry() == 0.0);
    }

    #[test]
    fn assembly_invariant_under_triangle_permutation() {
        let mesh = build_structured_mesh(6).unwrap();
        let mut shuffled = mesh.clone();
        shuffled.triangles.reverse();
        shuffled.triangles.swap(3, 17);
        let a = assemble_problem_two_param(&FemSpace::new(mesh));
        let b = assemble_problem_two_param(&FemSpace::new(shuffled));
        for (x, y) in a.a_components.iter().zip(&b.a_components) {
            assert_eq!(x, y);
        }
        assert_eq!(a.b_components[0], b.b_components[0]);
    }

    #[test]
    fn stiffness_positive_semidefinite_mass_positive_definite() {
        use nalgebra::DVector;
        let space = FemSpace::new(build_structured_mesh(6).unwrap());
        let op = assemble_problem_two_param(&space);
        let n = space.n_dof;
        let mut state = 0x9e3779b97f4a7c15u64;
        for _ in 0..10 {
            let v = DVector::from_fn(n, |_, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            });
            assert!(v.dot(&op.a_components[0].matvec(&v)) >= -1e-12);
            if v.norm() > 0.0 {
                assert!(v.dot(&op.b_components[0].matvec(&v)) > 0.0);
            }
        }
    }
}
