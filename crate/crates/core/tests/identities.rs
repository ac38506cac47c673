use nalgebra::{DMatrix, DVector, SymmetricEigen};
use tds_core::solver::kronecker_system;
use tds_core::{
    apply_noise, build_penalty, loss, solve, sylvester_residual, Grid, NoiseKind, NoiseSpec, SmoothingParams,
};

fn noisy(m: usize, n: usize, seed: u64) -> Grid {
    let z = Grid::from_fn(m, n, |i, j| (0.7 * i as f64).sin() + 0.3 * j as f64).unwrap();
    apply_noise(&z, &NoiseSpec::new(NoiseKind::awgn(0.5), seed)).unwrap()
}

fn to_matrix(g: &Grid) -> DMatrix<f64> {
    DMatrix::from_row_slice(g.rows(), g.cols(), g.as_slice())
}

fn vec_of(g: &Grid) -> DVector<f64> {
    let (m, n) = g.shape();
    DVector::from_fn(m * n, |k, _| g[(k % m, k / m)])
}

/// `A = I/2 + gamma T` and `B = I/2 + delta H` so that `G A + B G = Z`.
fn sylvester_pair(m: usize, n: usize, gamma: f64, delta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let t = build_penalty(n).unwrap().to_dense();
    let h = build_penalty(m).unwrap().to_dense();
    (
        DMatrix::identity(n, n) * 0.5 + t * gamma,
        DMatrix::identity(m, m) * 0.5 + h * delta,
    )
}

#[test]
fn eigen_closed_form_of_the_integral_matches_solver() {
    // int_0^inf e^{-Bt} Z e^{-At} dt = U_B [ (U_B' Z U_A)_ij / (beta_i + alpha_j) ] U_A'
    for (seed, (m, n, gamma, delta)) in [(5, 4, 0.8, 2.5), (6, 7, 3.0, 0.2), (3, 9, 12.0, 12.0)]
        .into_iter()
        .enumerate()
    {
        let z = noisy(m, n, seed as u64);
        let (a, b) = sylvester_pair(m, n, gamma, delta);
        let ea = SymmetricEigen::new(a);
        let eb = SymmetricEigen::new(b);
        let mut w = eb.eigenvectors.transpose() * to_matrix(&z) * &ea.eigenvectors;
        for i in 0..m {
            for j in 0..n {
                w[(i, j)] /= eb.eigenvalues[i] + ea.eigenvalues[j];
            }
        }
        let closed = &eb.eigenvectors * w * ea.eigenvectors.transpose();
        let g = solve(&z, &SmoothingParams::tds1(gamma, delta)).unwrap().trend;
        let diff = (&closed - to_matrix(&g)).norm() / closed.norm();
        assert!(diff <= 1e-10, "closed form differs by {diff:e}");
    }
}

#[test]
fn quadrature_of_the_integral_matches_solver() {
    let (m, n, gamma, delta) = (4, 5, 0.3, 0.2);
    let z = noisy(m, n, 11);
    let (a, b) = sylvester_pair(m, n, gamma, delta);
    let zm = to_matrix(&z);
    // composite Simpson on [0, 40]; the integrand decays at least like e^{-t}
    let h = 0.005;
    let steps = 8000;
    let step_a = (&a * -h).exp();
    let step_b = (&b * -h).exp();
    let mut ea = DMatrix::<f64>::identity(n, n);
    let mut eb = DMatrix::<f64>::identity(m, m);
    let mut acc = DMatrix::<f64>::zeros(m, n);
    for k in 0..=steps {
        let weight = if k == 0 || k == steps {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += (&eb * &zm * &ea) * weight;
        ea = &ea * &step_a;
        eb = &step_b * &eb;
    }
    acc *= h / 3.0;
    let g = to_matrix(&solve(&z, &SmoothingParams::tds1(gamma, delta)).unwrap().trend);
    let diff = (&acc - &g).norm() / g.norm();
    assert!(diff <= 1e-9, "quadrature differs by {diff:e}");
}

#[test]
fn sylvester_split_residual_is_small_for_all_variants() {
    let z = noisy(6, 5, 2);
    let cases = [
        SmoothingParams::tds(4.0),
        SmoothingParams::tds1(9.0, 0.5),
        SmoothingParams::tds2(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![0.5, 0.1, 8.0, 2.0, 1.0]),
        SmoothingParams::TdsIIIRowScalar {
            gamma: 2.0,
            delta: vec![0.5, 0.1, 8.0, 2.0, 1.0],
        },
        SmoothingParams::TdsIIIColScalar {
            gamma: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            delta: 7.0,
        },
    ];
    for p in cases {
        let g = solve(&z, &p).unwrap().trend;
        let r = sylvester_residual(&g, &z, &p).unwrap();
        assert!(r <= 1e-10 * z.frobenius_norm(), "{}: {r:e}", p.name());
    }
}

#[test]
fn loss_is_the_kronecker_quadratic_form() {
    // M(G) = vec(G)' K vec(G) - 2 vec(Z)' vec(G) + |Z|^2
    let z = noisy(5, 6, 7);
    let g = noisy(5, 6, 8);
    let p = SmoothingParams::tds2(vec![0.3, 1.0, 2.0, 0.7, 5.0], vec![1.0, 0.2, 0.4, 3.0, 2.0, 9.0]);
    let w = p.weights(5, 6).unwrap();
    let k = kronecker_system(5, 6, &w).unwrap();
    let (vg, vz) = (vec_of(&g), vec_of(&z));
    let quad = vg.dot(&(&k * &vg)) - 2.0 * vz.dot(&vg) + vz.dot(&vz);
    let direct = loss(&z, &g, &p).unwrap();
    assert!((quad - direct).abs() <= 1e-10 * direct.abs());
}

#[test]
fn loss_excess_is_the_energy_of_the_displacement() {
    // M(G* + D) - M(G*) = vec(D)' K vec(D)
    let z = noisy(6, 4, 9);
    let p = SmoothingParams::tds1(3.0, 40.0);
    let w = p.weights(6, 4).unwrap();
    let k = kronecker_system(6, 4, &w).unwrap();
    let g = solve(&z, &p).unwrap().trend;
    let base = loss(&z, &g, &p).unwrap();
    for seed in 0..5 {
        let d = apply_noise(&Grid::zeros(6, 4).unwrap(), &NoiseSpec::new(NoiseKind::awgn(0.1), seed)).unwrap();
        let vd = vec_of(&d);
        let expect = vd.dot(&(&k * &vd));
        let excess = loss(&z, &g.add(&d).unwrap(), &p).unwrap() - base;
        assert!(
            (excess - expect).abs() <= 1e-9 * (expect + base),
            "seed {seed}: {excess} vs {expect}"
        );
    }
}
