use gridnorm::basis::regression_matrix;
use gridnorm::fftnorm::{variance_fft, CoarseSolver};
use gridnorm::grid::{
    make_coarse_grid, make_level_geometry, CoarseMode, Domain, FineGrid, NTildeRule,
};
use gridnorm::kron::{build_tridiagonal, eigendecompose, variance_kronecker};
use gridnorm::sar::{build_sar, variance_exact};

struct ErrorStats {
    mean: f64,
    max: f64,
}

fn relaxed_fft_error(n_buffer: usize, kappa2: f64) -> ErrorStats {
    let domain = Domain::square(-1.0, 1.0).unwrap();
    let fine = FineGrid::new(domain, 500).unwrap();
    let geo = make_level_geometry(domain, 25, n_buffer, 2.5).unwrap();
    let coarse = make_coarse_grid(&fine, &geo, NTildeRule::FourR, CoarseMode::Relaxed).unwrap();
    let eig = eigendecompose(&build_tridiagonal(geo.r_total(), kappa2).unwrap()).unwrap();
    let phi = regression_matrix(&fine, &geo).unwrap();
    let exact = variance_kronecker(&phi, &eig).unwrap();
    let fft = variance_fft(&geo, &fine, &coarse, CoarseSolver::Kronecker(&eig)).unwrap();
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for (a, b) in fft.values().iter().zip(exact.values()) {
        let e = ((a - b) / b).abs();
        sum += e;
        max = max.max(e);
    }
    ErrorStats {
        mean: sum / exact.values().len() as f64,
        max,
    }
}

#[test]
fn relaxed_fft_tracks_exact_variance() {
    let s = relaxed_fft_error(10, 0.05);
    println!(
        "buffer 10, kappa2 0.05: mean {:.4e}, max {:.4e}",
        s.mean, s.max
    );
    assert!(s.mean <= 1e-3);
    assert!(s.max <= 0.02);

    let rough = relaxed_fft_error(10, 1.0);
    println!(
        "buffer 10, kappa2 1: mean {:.4e}, max {:.4e}",
        rough.mean, rough.max
    );
    assert!(rough.max <= 0.05);

    let bare = relaxed_fft_error(0, 0.05);
    println!(
        "buffer 0, kappa2 0.05: mean {:.4e}, max {:.4e}",
        bare.mean, bare.max
    );
    assert!(bare.max >= 5.0 * s.max);
}

#[test]
fn strict_fft_with_either_coarse_solver() {
    let domain = Domain::square(0.0, 1.0).unwrap();
    let fine = FineGrid::new(domain, 193).unwrap();
    let geo = make_level_geometry(domain, 13, 10, 2.5).unwrap();
    let coarse = make_coarse_grid(&fine, &geo, NTildeRule::FourR, CoarseMode::Strict).unwrap();
    assert_eq!(coarse.scale() * (coarse.n_tilde() - 1), 192);
    let sys = build_sar(&geo, 0.05).unwrap();
    let eig = eigendecompose(&build_tridiagonal(geo.r_total(), 0.05).unwrap()).unwrap();
    let a = variance_fft(&geo, &fine, &coarse, CoarseSolver::Exact(&sys)).unwrap();
    let b = variance_fft(&geo, &fine, &coarse, CoarseSolver::Kronecker(&eig)).unwrap();
    let exact = variance_exact(&regression_matrix(&fine, &geo).unwrap(), &sys).unwrap();
    for ((x, y), z) in a.values().iter().zip(b.values()).zip(exact.values()) {
        assert!(((x - y) / y).abs() < 1e-9);
        assert!(((x - z) / z).abs() < 0.02);
    }
    // coarse points reproduce the exact values
    let m = coarse.scale();
    for p in 0..coarse.n_tilde() {
        for q in 0..coarse.n_tilde() {
            let (i, j) = (p * m, q * m);
            let rel = (a.values()[[i, j]] - exact.values()[[i, j]]) / exact.values()[[i, j]];
            assert!(rel.abs() < 1e-9);
        }
    }
}

#[test]
fn exact_and_kronecker_agree_on_large_lattice() {
    // 45 x 45 centers
    let domain = Domain::square(-1.0, 1.0).unwrap();
    let fine = FineGrid::new(domain, 180).unwrap();
    let geo = make_level_geometry(domain, 25, 10, 2.5).unwrap();
    assert_eq!(geo.r_total(), 45);
    let phi = regression_matrix(&fine, &geo).unwrap();
    let exact = variance_exact(&phi, &build_sar(&geo, 0.05).unwrap()).unwrap();
    let eig = eigendecompose(&build_tridiagonal(45, 0.05).unwrap()).unwrap();
    let kron = variance_kronecker(&phi, &eig).unwrap();
    for (a, b) in exact.values().iter().zip(kron.values()) {
        assert!(((a - b) / a).abs() < 1e-8);
    }
}
