use std::f64::consts::PI;

use fracopt::fracquad::{
    beta_incomplete, beta_segment, double_singular_cell, gamma_fn, riesz_weights, terminal_weights, Order,
};
use fracopt::TimeGrid;
use quadrature::double_exponential;
use statrs::function::beta::{beta, beta_reg};
use statrs::function::gamma::gamma;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn order(a: f64) -> Order {
    Order::new(a).unwrap()
}

#[test]
fn gamma_matches_statrs_and_recurrence() {
    for x in [0.05, 0.3, 0.5, 0.9, 1.0, 1.7, 2.0, 2.6, 3.3, 4.9] {
        assert!(rel(gamma_fn(x).unwrap(), gamma(x)) < 1e-13, "x = {x}");
    }
    for x in [0.3, 0.5, 0.9, 1.7] {
        let lhs = gamma_fn(x + 1.0).unwrap();
        assert!(rel(lhs, x * gamma_fn(x).unwrap()) < 1e-12);
    }
    assert!(rel(gamma_fn(0.5).unwrap(), 1.772453850905516) < 1e-14);
    assert!(gamma_fn(0.0).is_err() && gamma_fn(-1.5).is_err());
}

/// `B_z(a, a) = z^a sum_n (1 - a)_n z^n / (n! (a + n))` for `z <= 1/2`.
fn beta_series(a: f64, z: f64) -> f64 {
    let mut coef = 1.0;
    let mut sum = 0.0;
    for n in 0..200 {
        let nf = n as f64;
        sum += coef * z.powf(nf) / (a + nf);
        coef *= (nf + 1.0 - a) / (nf + 1.0);
    }
    z.powf(a) * sum
}

#[test]
fn incomplete_beta_against_two_oracles() {
    assert!(rel(beta_incomplete(order(0.5), 1.0).unwrap(), PI) < 1e-13);
    assert!(rel(beta_incomplete(order(0.5), 0.5).unwrap(), PI / 2.0) < 1e-13);
    for (a, z) in [(0.3, 0.2), (0.3, 0.95), (0.7, 0.4), (0.45, 0.999)] {
        let ours = beta_incomplete(order(a), z).unwrap();
        let reg = beta_reg(a, a, z) * beta(a, a);
        let series = if z <= 0.5 {
            beta_series(a, z)
        } else {
            beta(a, a) - beta_series(a, 1.0 - z)
        };
        assert!(rel(ours, reg) < 1e-11, "a={a} z={z}: {ours} vs {reg}");
        assert!(rel(ours, series) < 1e-12, "a={a} z={z}: {ours} vs {series}");
    }
    assert!(beta_incomplete(order(0.5), 1.2).is_err());
    assert!(beta_segment(0.5, 0.5, 0.6, 0.4).is_err());
}

#[test]
fn double_cell_against_quadrature() {
    let a = 0.7;
    let v = double_singular_cell(0.1, 0.3, 0.5, 0.9, order(a)).unwrap();
    let oracle = double_exponential::integrate(
        |s: f64| (0.9 - s).powf(a - 1.0) * (s - 0.1).powf(a - 1.0),
        0.3,
        0.5,
        1e-14,
    )
    .integral;
    assert!(rel(v, oracle) < 1e-11);
    assert!(rel(double_singular_cell(0.0, 0.0, 1.0, 1.0, order(0.5)).unwrap(), PI) < 1e-13);
    assert!(rel(double_singular_cell(0.0, 0.0, 0.5, 1.0, order(0.5)).unwrap(), PI / 2.0) < 1e-13);
    assert!(double_singular_cell(0.2, 0.1, 0.5, 1.0, order(0.5)).is_err());
    assert!(double_singular_cell(0.0, 0.1, 1.1, 1.0, order(0.5)).is_err());
}

#[test]
fn double_cell_partitions_sum_to_beta() {
    for a in [0.2, 0.35, 0.5, 0.8] {
        let (t, t_eff) = (0.15f64, 1.3);
        let full = (t_eff - t).powf(2.0 * a - 1.0) * gamma(a).powi(2) / gamma(2.0 * a);
        for cells in [1usize, 7, 64, 301] {
            let h = (t_eff - t) / cells as f64;
            let sum: f64 = (0..cells)
                .map(|k| {
                    let lo = t + k as f64 * h;
                    let hi = if k + 1 == cells { t_eff } else { lo + h };
                    double_singular_cell(t, lo, hi, t_eff, order(a)).unwrap()
                })
                .sum();
            assert!(rel(sum, full) < 1e-10, "a={a} cells={cells}");
        }
    }
}

#[test]
fn riesz_rows_exact_on_linears() {
    for a in [0.1, 0.3, 0.5, 0.9] {
        let grid = TimeGrid::new(2.0, 0.5, 64).unwrap();
        for i in 1..=64 {
            let row = riesz_weights(&grid, order(a), i).unwrap();
            let t = grid.node(i);
            let ones = vec![1.0; i + 1];
            let lin: Vec<f64> = (0..=i).map(|j| grid.node(j)).collect();
            assert!(rel(row.apply(&ones), t.powf(a) / a) < 1e-12);
            assert!(rel(row.apply(&lin), t.powf(a + 1.0) / (a * (a + 1.0))) < 1e-12);
        }
        assert!(riesz_weights(&grid, order(a), 0).unwrap().weights.is_empty());
        assert!(riesz_weights(&grid, order(a), 65).is_err());
    }
}

#[test]
fn terminal_weights_exact_on_linears() {
    let grid = TimeGrid::new(1.0, 0.25, 64).unwrap();
    for b in [0.5, 0.8, 1.4] {
        let w = terminal_weights(&grid, Order::cost(b).unwrap());
        let ones = vec![1.0; 65];
        let down: Vec<f64> = grid.nodes().map(|t| 1.0 - t).collect();
        let up: Vec<f64> = grid.nodes().collect();
        assert!(rel(w.apply(&ones), 1.0 / b) < 1e-12);
        assert!(rel(w.apply(&down), 1.0 / (b + 1.0)) < 1e-12);
        assert!(rel(w.apply(&up), 1.0 / (b * (b + 1.0))) < 1e-12);
    }
    let w = terminal_weights(&grid, Order::cost(0.5).unwrap());
    let up: Vec<f64> = grid.nodes().collect();
    assert!(rel(w.apply(&up), 4.0 / 3.0) < 1e-12);
}

/// `int_0^t (t - s)^(a-1) cos(s) ds` by its power series.
fn cos_series(a: f64, t: f64) -> f64 {
    let mut sum = 0.0;
    for k in 0..40 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * t.powf(2.0 * k as f64 + a) * gamma(a) / gamma(2.0 * k as f64 + 1.0 + a);
    }
    sum
}

#[test]
fn riesz_second_order_on_cosine() {
    let a = 0.5;
    let t = 1.5;
    let exact = cos_series(a, t);
    // w = (t - s)^a removes the kernel singularity
    let de = double_exponential::integrate(|w: f64| (t - w.powf(1.0 / a)).cos() / a, 0.0, t.powf(a), 1e-14)
        .integral;
    assert!(rel(exact, de) < 1e-10);
    let mut errs = Vec::new();
    for n in [20usize, 40, 80, 160] {
        let grid = TimeGrid::new(t, 0.5 * t, n).unwrap();
        let row = riesz_weights(&grid, order(a), n).unwrap();
        let g: Vec<f64> = grid.nodes().map(f64::cos).collect();
        errs.push((row.apply(&g) - exact).abs());
    }
    for w in errs.windows(2) {
        assert!((w[0] / w[1]).log2() >= 1.8, "{errs:?}");
    }
}

#[test]
fn riesz_quadratic_closed_form() {
    let a = 0.5;
    let mut prev = f64::INFINITY;
    for n in [16usize, 32, 64] {
        let grid = TimeGrid::new(1.0, 0.5, n).unwrap();
        let row = riesz_weights(&grid, order(a), n).unwrap();
        let g: Vec<f64> = grid.nodes().map(|s| s * s).collect();
        let err = (row.apply(&g) - 16.0 / 15.0).abs();
        assert!(err * (n * n) as f64 <= 1.0);
        assert!(err < prev);
        prev = err;
    }
}
