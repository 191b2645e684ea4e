use compositeflow::analysis::energy_identity_gap;
use compositeflow::dynamics::{mean_half_width, path_energy, simulate, weak_error, FlowConfig, FlowKind, TestFunction, WeakErrorConfig};
use compositeflow::problems::{build_operator, generate_data, least_squares_problem, OperatorKind};
use compositeflow::rng::{mix_seed, Purpose, Stream};
use compositeflow::stats::{mean, variance};
use compositeflow::{CompositeProblem, LinearMap, Penalty};
use nalgebra::{DMatrix, DVector};

/// `H_mu(x) = x^2 / 2`.
fn unit_quadratic() -> CompositeProblem {
    least_squares_problem(
        DMatrix::from_element(1, 1, 1.0),
        DVector::zeros(1),
        Penalty::L1 { weight: 0.0 },
        LinearMap::identity(1),
        0.5,
    )
    .unwrap()
}

fn mcp_problem(seed: u64) -> CompositeProblem {
    let (d, b) = generate_data(6, 10, 0.1, seed);
    let a = build_operator(&OperatorKind::Gaussian { sigma_min: 0.5, sigma_max: 1.5 }, 4, 6, seed + 1).unwrap();
    least_squares_problem(d, b, Penalty::Mcp { weight: 0.5, gamma: 2.0 }, a, 0.1).unwrap()
}

#[test]
fn energy_gap_matches_ornstein_uhlenbeck_ito_term() {
    // dx = -(x/lambda) dt - sigma dW with sigma^2 = 1/(lambda^2 rho), x0 = 0.
    // E[x_T^2]/2 + (1/lambda) int_0^T E[x_t^2] dt is the whole gap.
    let p = unit_quadratic();
    let (lambda, rho, horizon) = (2.0, 100.0, 0.5);
    let mut cfg = FlowConfig::new(lambda, 1e-3, horizon);
    cfg.rho = rho;
    cfg.x0 = Some(vec![0.0]);
    let paths: Vec<_> = (0..2000u64)
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = mix_seed(11, i);
            simulate(FlowKind::Sde1, &p, &c).unwrap()
        })
        .collect();
    let r = energy_identity_gap(&paths, 0.0, horizon, 1.0, 3).unwrap();

    let s2 = 1.0 / (lambda * lambda * rho);
    let decay = 1.0 - (-2.0 * horizon / lambda).exp();
    let var_t = s2 * lambda / 2.0 * decay;
    let integral = s2 * lambda / 2.0 * (horizon - lambda / 2.0 * decay);
    let oracle = var_t / 2.0 + integral / lambda;
    assert!(
        (r.gap - oracle).abs() <= 4.0 * r.std_error + 0.02 * oracle,
        "gap {} vs oracle {} (se {})",
        r.gap,
        oracle,
        r.std_error
    );
}

#[test]
fn smoothed_flow_descends_per_step() {
    for seed in 0..5 {
        let p = mcp_problem(seed);
        let lambda = 1.1 * p.operator().gram_norm() + 1.0;
        let mut cfg = FlowConfig::new(lambda, lambda / (2.0 * p.smoothness()), 5.0);
        cfg.x0 = Some(Stream::new(seed, Purpose::Aux(3), 0).normal_vec(6));
        let path = simulate(FlowKind::Flow, &p, &cfg).unwrap();
        for w in path.h_mu.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "seed {seed}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn path_energy_is_finite_and_bounded_by_descent() {
    let p = mcp_problem(9);
    let lambda = 1.1 * p.operator().gram_norm() + 1.0;
    let dt = lambda / (2.0 * p.smoothness());
    let run = |horizon: f64| {
        let mut cfg = FlowConfig::new(lambda, dt, horizon);
        cfg.x0 = Some(vec![2.0; 6]);
        simulate(FlowKind::Flow, &p, &cfg).unwrap()
    };
    let long = run(4000.0 * dt);
    let (e0, e1, e2) = (path_energy(&run(1000.0 * dt)), path_energy(&run(2000.0 * dt)), path_energy(&long));
    let h0 = long.h_mu[0];
    let h_end = *long.h_mu.last().unwrap();
    // With L dt / lambda <= 1/2 each step removes at least 3/4 of lambda ||dx||^2 / dt.
    assert!(lambda * e2 <= 4.0 / 3.0 * (h0 - h_end) + 1e-12);
    assert!(e0 <= e1 && e1 <= e2);
    assert!(e2 - e1 <= 0.5 * (e1 - e0), "tails {} then {}", e1 - e0, e2 - e1);
    assert!(e2 - e1 <= 1e-3 * e2, "tail energy {} of {}", e2 - e1, e2);
}

#[test]
fn brownian_increments_are_white() {
    let p = unit_quadratic();
    let mut cfg = FlowConfig::new(2.0, 1e-3, 100.0);
    cfg.rho = 25.0;
    cfg.seed = 77;
    let path = simulate(FlowKind::Sde1, &p, &cfg).unwrap();
    let w: Vec<f64> = path.noise.iter().map(|v| v[0]).collect();
    let n = w.len() as f64;
    let expected_var = cfg.dt / (cfg.lambda * cfg.lambda * cfg.rho);
    let m = mean(&w);
    let v = variance(&w);
    assert!(m.abs() <= 4.0 * (expected_var / n).sqrt(), "mean {m}");
    assert!((v / expected_var - 1.0).abs() <= 4.0 * (2.0 / n).sqrt(), "variance {v} vs {expected_var}");
    let lag: Vec<f64> = w.windows(2).map(|p| (p[0] - m) * (p[1] - m)).collect();
    let corr = mean(&lag) / v;
    assert!(corr.abs() <= 4.0 / n.sqrt(), "lag-1 correlation {corr}");
    let fourth: Vec<f64> = w.iter().map(|x| (x - m).powi(4)).collect();
    let kurtosis = mean(&fourth) / (v * v);
    assert!((kurtosis - 3.0).abs() <= 4.0 * (24.0 / n).sqrt(), "kurtosis {kurtosis}");
}

#[test]
fn drift_free_weak_error_sits_in_noise_band() {
    let p = least_squares_problem(
        DMatrix::zeros(1, 2),
        DVector::zeros(1),
        Penalty::L1 { weight: 0.0 },
        LinearMap::identity(2),
        0.5,
    )
    .unwrap();
    let cfg = WeakErrorConfig {
        rho_grid: vec![10.0, 20.0],
        horizon: 1.0,
        seeds: 512,
        test_functions: vec![TestFunction::SquaredNorm],
        master_seed: 8,
        noise_scale: 1.0,
        substeps: 10,
        eta: 1.0,
        x0: Some(vec![1.0, -1.0]),
    };
    let tables = weak_error(&p, &cfg).unwrap();
    for row in &tables[0].rows {
        assert!(row.max_error <= 4.0 * row.std_error, "rho {}: {} vs se {}", row.rho, row.max_error, row.std_error);
    }
}

#[test]
fn doubling_seeds_shrinks_half_width() {
    let sample = |m: usize| -> Vec<f64> { (0..m as u64).map(|i| Stream::new(5, Purpose::Aux(4), i).normal()).collect() };
    let ratio = mean_half_width(&sample(4096)) / mean_half_width(&sample(8192));
    assert!((ratio - 2f64.sqrt()).abs() <= 0.1, "ratio {ratio}");
}
