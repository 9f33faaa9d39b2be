use boundopt::geometry::{check_eps2o, projected_gradient_norm, residual};
use boundopt::linalg::symmetric_min_eigenvalue;
use boundopt::nmf::{build_saddle, gen_synthetic, initial_point, read_matrix_csv, write_matrix_csv, NmfProblem};
use boundopt::pgrad::{self, PgradParams};
use boundopt::pncg;
use boundopt::{Objective, SolverConfig, Status};
use nalgebra::{DMatrix, SymmetricEigen};

#[test]
fn generator_is_deterministic_per_seed() {
    let a = gen_synthetic(30, 20, 4, 11).unwrap();
    let b = gen_synthetic(30, 20, 4, 11).unwrap();
    let c = gen_synthetic(30, 20, 4, 12).unwrap();
    assert_eq!(a.problem.v, b.problem.v);
    assert_ne!(a.problem.v, c.problem.v);
    assert_eq!(initial_point(&a.problem, 3), initial_point(&b.problem, 3));
}

#[test]
fn large_factors_are_sixty_percent_zero() {
    let d = gen_synthetic(400, 300, 30, 1).unwrap();
    for frac in [d.zero_fraction_w, d.zero_fraction_y] {
        assert!((0.55..=0.65).contains(&frac), "zero fraction {frac}");
    }
    let mean = d.problem.v.iter().map(|v| v.abs()).sum::<f64>() / d.problem.v.len() as f64;
    assert!((mean - 1.0).abs() < 1e-12);
}

#[test]
fn data_survives_a_csv_round_trip_and_solves_identically() {
    let d = gen_synthetic(15, 12, 3, 2).unwrap();
    let mut buf = Vec::new();
    write_matrix_csv(&d.problem.v, &mut buf).unwrap();
    let v = read_matrix_csv(buf.as_slice()).unwrap();
    assert_eq!(v, d.problem.v);
    let reread = NmfProblem::new(v, 3).unwrap();
    let x0 = initial_point(&reread, 5);
    let b = reread.bounds();
    let cfg = SolverConfig {
        meo_enabled: false,
        ..SolverConfig::with_eps(1e-6)
    };
    let r1 = pncg::solve(&d.problem, &x0, &b, &cfg).unwrap();
    let r2 = pncg::solve(&reread, &x0, &b, &cfg).unwrap();
    assert_eq!(r1.x_final, r2.x_final);
    assert_eq!(r1.outer_iters, r2.outer_iters);
}

#[test]
fn malformed_csv_reports_the_line() {
    let text = "rows=2,cols=2\n1,2\n3,oops\n";
    let err = read_matrix_csv(text.as_bytes()).unwrap_err();
    assert!(err.to_string().starts_with("line 3"), "{err}");
    let short = "rows=3,cols=2\n1,2\n3,4\n";
    assert!(read_matrix_csv(short.as_bytes()).is_err());
}

#[test]
fn reported_residual_and_projnorm_match_the_final_point() {
    let d = gen_synthetic(25, 20, 4, 9).unwrap();
    let x0 = initial_point(&d.problem, 1);
    let b = d.problem.bounds();
    let cfg = SolverConfig::with_eps(1e-6);
    let rep = pncg::solve(&d.problem, &x0, &b, &cfg).unwrap();
    let mut g = vec![0.0; x0.len()];
    d.problem.gradient(&rep.x_final, &mut g);
    assert_eq!(rep.residual, residual(&rep.x_final, &g, &b, cfg.eps_r));
    assert_eq!(rep.projnorm, projected_gradient_norm(&rep.x_final, &g, &b));
    let (w, y) = d.problem.unpack(&rep.x_final).unwrap();
    let f = 0.5 * (&d.problem.v - w * y).norm_squared();
    assert!((f - rep.f_final).abs() <= 1e-10 * (1.0 + f));
}

#[test]
fn second_order_output_is_certified_densely() {
    let d = gen_synthetic(12, 10, 3, 4).unwrap();
    let x0 = initial_point(&d.problem, 2);
    let b = d.problem.bounds();
    let cfg = SolverConfig {
        max_outer_iters: 50_000,
        ..SolverConfig::with_eps(1e-6)
    };
    let rep = pncg::solve(&d.problem, &x0, &b, &cfg).unwrap();
    assert_eq!(rep.status, Status::ConvergedEps2o);
    let check = check_eps2o(&rep.x_final, &d.problem, &b, 1e-6, 10_000).unwrap();
    assert!(check.scaled_grad_norm <= 2e-6, "{check:?}");
    assert!(check.gradient_floor_violations.is_empty(), "{check:?}");
    assert!(check.min_curvature >= -1e-3 * 1.01, "{check:?}");
}

fn dense_hessian<O: Objective>(o: &O, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        o.hessian_vec(x, &e, &mut col);
        e[j] = 0.0;
        h.set_column(j, &nalgebra::DVector::from_column_slice(&col));
    }
    (&h + h.transpose()) * 0.5
}

#[test]
fn replicated_rank_one_point_is_a_strict_saddle() {
    let d = gen_synthetic(20, 15, 3, 6).unwrap();
    let s = build_saddle(&d.problem.v, 3, 1, 1e-10).unwrap();
    let p = NmfProblem::new(d.problem.v.clone(), 3).unwrap();
    assert!(s.saddle_projnorm <= 1e-9);

    let free: Vec<usize> = (0..s.x0.len()).filter(|&i| s.x0[i] > 0.0).collect();
    let h = dense_hessian(&p, &s.x0);
    let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
    let lmin = symmetric_min_eigenvalue(&hff);
    assert!(lmin < -1e-2, "smallest free curvature {lmin}");

    let eig = SymmetricEigen::new(hff);
    let k = eig.eigenvalues.imin();
    let mut x = s.x0.clone();
    let t = 1e-3 * free.iter().map(|&i| s.x0[i]).fold(f64::INFINITY, f64::min).min(1.0);
    for (a, &i) in free.iter().enumerate() {
        x[i] += t * eig.eigenvectors[(a, k)];
    }
    assert!(p.bounds().is_feasible(&x));
    assert!(p.value(&x) < p.value(&s.x0));
}

#[test]
fn first_order_baseline_stays_at_the_saddle() {
    let d = gen_synthetic(20, 15, 3, 6).unwrap();
    let s = build_saddle(&d.problem.v, 3, 1, 1e-10).unwrap();
    let p = NmfProblem::new(d.problem.v.clone(), 3).unwrap();
    let b = p.bounds();
    let params = PgradParams {
        tol: 1e-8,
        ..PgradParams::default()
    };
    let base = pgrad::solve(&p, &s.x0, &b, &params).unwrap();
    assert_eq!(base.outer_iters, 0);
    let rep = pncg::solve(&p, &s.x0, &b, &SolverConfig::with_eps(1e-8)).unwrap();
    assert!(rep.step_counts.meo_nc >= 1);
    assert!(rep.f_final < base.f_final - 1e-3);
}
