//! Full offline/online loop through the public API on a coarse mesh.

use parevp::eigensolve::{smallest_eigenpairs, SolverConfig};
use parevp::mesh_fem::{assemble_problem_two_param, build_structured_mesh, FemSpace};
use parevp::pod::{build_snapshot_matrix, pod_basis, pod_basis_via_gram};
use parevp::rom::{attach_reference, online_solve, project_operators};
use parevp::sampling::{lhs_sample, ParameterBox};

#[test]
fn offline_online_roundtrip_on_coarse_mesh() {
    let space = FemSpace::new(build_structured_mesh(12).unwrap());
    let op = assemble_problem_two_param(&space);
    let bx = ParameterBox::new(vec![(0.1, 1.4), (0.1, 1.4)]).unwrap();
    let samples = lhs_sample(&bx, 9, 3).unwrap();
    let solver = SolverConfig::default();

    let n_e = 2;
    let solutions: Vec<_> = samples
        .points
        .iter()
        .map(|mu| {
            let (a, b) = op.evaluate(mu).unwrap();
            smallest_eigenpairs(&a, &b, n_e, &solver).unwrap()
        })
        .collect();

    let snapshots = build_snapshot_matrix(&solutions, n_e).unwrap();
    assert_eq!(snapshots.n_cols(), 18);
    let basis = pod_basis(&snapshots, 1e-8).unwrap();
    let model = project_operators(&op, &basis).unwrap();

    // Reproduction at every training parameter.
    for (mu, fem) in samples.points.iter().zip(&solutions) {
        let mut r = online_solve(&model, mu, n_e).unwrap();
        attach_reference(&mut r, &fem.values());
        for err in r.relative_errors.unwrap() {
            assert!(err < 1e-6, "training-point error {err:.2e} at {mu:?}");
        }
    }

    // Min-max at an off-sample point: reduced eigenvalues from above.
    let probe = [0.55, 0.85];
    let (a, b) = op.evaluate(&probe).unwrap();
    let fem = smallest_eigenpairs(&a, &b, n_e, &solver).unwrap();
    let rom = online_solve(&model, &probe, n_e).unwrap();
    for (rom_v, fem_v) in rom.reduced_values.iter().zip(fem.values()) {
        assert!(*rom_v >= fem_v - 1e-8 * fem_v);
    }
}

#[test]
fn gram_route_matches_svd_route_end_to_end() {
    let space = FemSpace::new(build_structured_mesh(10).unwrap());
    let op = assemble_problem_two_param(&space);
    let bx = ParameterBox::new(vec![(0.1, 1.4), (0.1, 1.4)]).unwrap();
    let samples = lhs_sample(&bx, 7, 11).unwrap();
    let solver = SolverConfig::default();
    let solutions: Vec<_> = samples
        .points
        .iter()
        .map(|mu| {
            let (a, b) = op.evaluate(mu).unwrap();
            smallest_eigenpairs(&a, &b, 1, &solver).unwrap()
        })
        .collect();
    let snapshots = build_snapshot_matrix(&solutions, 1).unwrap();
    let svd = pod_basis(&snapshots, 1e-8).unwrap();
    let gram = pod_basis_via_gram(&snapshots, 1e-8).unwrap();
    assert_eq!(svd.n(), gram.n());

    // Same subspace: projector difference should vanish.
    let p_svd = &svd.basis * svd.basis.transpose();
    let p_gram = &gram.basis * gram.basis.transpose();
    assert!((p_svd - p_gram).abs().max() < 1e-7);
}
