use fracopt::adjoint::solve_adjoint;
use fracopt::conditions::{check_conditions, Process, Scan, Tolerances};
use fracopt::config::{load_problem, render};
use fracopt::export::{control_table, fmt12, read_control};
use fracopt::forward::{solve_fdde, solve_fdde_resume};
use fracopt::fracquad::{double_singular_cell, riesz_weights, Order};
use fracopt::fundmatrix::solve_f;
use fracopt::problem::{builtin_example, spike_control, Matrix, Vector};
use fracopt::variation::{run_spike, SpikeShape};
use fracopt::{ControlSignal, Example, ProblemSpec, TimeGrid};
use proptest::prelude::*;
use statrs::function::gamma::gamma;

fn example() -> impl Strategy<Value = Example> {
    prop_oneof![Just(Example::Ex1), Just(Example::Ex2)]
}

fn constant(spec: &ProblemSpec, v: f64) -> ControlSignal {
    ControlSignal::constant(spec.grid.steps(), Vector::from_element(1, v))
}

fn bumpy(spec: &ProblemSpec, amp: f64, freq: f64) -> ControlSignal {
    ControlSignal::from_fn(&spec.grid, |t| Vector::from_element(1, (amp * (freq * t).sin()).clamp(-1.0, 1.0)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn riesz_rows_reproduce_linears(a in 0.05f64..0.95, n in 2usize..64, c0 in -3.0f64..3.0, c1 in -3.0f64..3.0, t_end in 0.2f64..4.0) {
        let grid = TimeGrid::new(t_end, t_end / 2.0, 2 * n).unwrap();
        let i = n + n / 2;
        let row = riesz_weights(&grid, Order::new(a).unwrap(), i).unwrap();
        let g: Vec<f64> = (0..=i).map(|j| c0 + c1 * grid.node(j)).collect();
        let t = grid.node(i);
        let exact = c0 * t.powf(a) / a + c1 * t.powf(a + 1.0) / (a * (a + 1.0));
        prop_assert!((row.apply(&g) - exact).abs() <= 1e-12 * (1.0 + exact.abs()));
    }

    #[test]
    fn double_cells_partition_the_beta_integral(
        a in 0.1f64..0.95,
        t in 0.0f64..1.0,
        len in 0.05f64..3.0,
        mut cuts in prop::collection::vec(0.0f64..1.0, 0..12),
    ) {
        let t_eff = t + len;
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut pts = vec![t];
        pts.extend(cuts.iter().map(|c| t + c * len).filter(|&p| p > t && p < t_eff));
        pts.push(t_eff);
        let order = Order::new(a).unwrap();
        let sum: f64 = pts.windows(2).map(|w| double_singular_cell(t, w[0], w[1], t_eff, order).unwrap()).sum();
        let full = len.powf(2.0 * a - 1.0) * gamma(a).powi(2) / gamma(2.0 * a);
        prop_assert!((sum - full).abs() <= 1e-10 * full);
        for w in pts.windows(2) {
            prop_assert!(double_singular_cell(t, w[0], w[1], t_eff, order).unwrap() > 0.0);
        }
    }

    #[test]
    fn fundamental_matrix_is_identity_on_the_diagonal(entries in prop::array::uniform8(-1.0f64..1.0), a in 0.2f64..0.9, k in 1usize..40) {
        let grid = TimeGrid::new(1.0, 0.25, 40).unwrap();
        let am = Matrix::from_row_slice(2, 2, &entries[..4]);
        let bm = Matrix::from_row_slice(2, 2, &entries[4..]);
        let fm = solve_f(k, &|_| am.clone(), &|_| bm.clone(), Order::new(a).unwrap(), &grid).unwrap();
        prop_assert_eq!(fm.at(k), Matrix::identity(2, 2));
    }

    #[test]
    fn first_order_gap_is_nonnegative(ex in example(), a in 0.2f64..0.9, amp in 0.0f64..1.5, freq in 0.0f64..12.0) {
        let spec = builtin_example(ex, Order::new(a).unwrap(), 40).unwrap();
        let u = bumpy(&spec, amp, freq);
        let traj = solve_fdde(&spec, &u).unwrap();
        let psi = solve_adjoint(&spec, &traj, &u).unwrap();
        let report = check_conditions(&Process::new(&spec, &traj, &u, &psi).unwrap(), &Scan::default(), &Tolerances::default());
        prop_assert!(report.first.gap.iter().all(|&g| g >= 0.0));
        for (i, s) in report.singularity.singular.iter().enumerate() {
            prop_assert_eq!(*s, report.singularity.max_abs_delta[i] <= report.singularity.tol);
        }
    }

    #[test]
    fn adjoint_scales_with_terminal_cost(ex in example(), a in 0.2f64..0.9, v in -1.0f64..1.0) {
        let spec = builtin_example(ex, Order::new(a).unwrap(), 40).unwrap();
        let mut scaled = spec.clone();
        scaled.cost.terminal = spec.cost.terminal.scaled(2.0);
        let u = constant(&spec, v);
        let traj = solve_fdde(&spec, &u).unwrap();
        let p1 = solve_adjoint(&spec, &traj, &u).unwrap();
        let p2 = solve_adjoint(&scaled, &traj, &u).unwrap();
        for i in 0..=40 {
            for k in 0..2 {
                let (x, y) = (p1.psi(i)[k], p2.psi(i)[k]);
                prop_assert!((y - 2.0 * x).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn second_order_form_scales_and_keeps_verdicts(a in 0.25f64..0.9, c in 0.1f64..10.0) {
        let spec = builtin_example(Example::Ex2, Order::new(a).unwrap(), 40).unwrap();
        let mut scaled = spec.clone();
        scaled.cost.terminal = spec.cost.terminal.scaled(c);
        let u = spec.zero_control();
        let traj = solve_fdde(&spec, &u).unwrap();
        let p1 = solve_adjoint(&spec, &traj, &u).unwrap();
        let p2 = solve_adjoint(&scaled, &traj, &u).unwrap();
        let q1 = Process::new(&spec, &traj, &u, &p1).unwrap();
        let q2 = Process::new(&scaled, &traj, &u, &p2).unwrap();
        for i in 0..40 {
            for v in [-1.0, -0.3, 0.6] {
                let (s1, s2) = (q1.second_order_form(i, &[v]), q2.second_order_form(i, &[v]));
                prop_assert!((s2 - c * s1).abs() <= 1e-9 * (1.0 + s1.abs() * c));
            }
        }
        let r1 = check_conditions(&q1, &Scan::default(), &Tolerances::default());
        let r2 = check_conditions(&q2, &Scan::default(), &Tolerances::default());
        prop_assert_eq!(r1.verdict(), r2.verdict());
        prop_assert_eq!(r1.singular_everywhere(), r2.singular_everywhere());
    }

    #[test]
    fn spike_at_base_value_changes_nothing(ex in example(), v in -1.0f64..1.0, start in 1usize..30, cells in 1usize..8) {
        let spec = builtin_example(ex, Order::new(0.5).unwrap(), 40).unwrap();
        let u = constant(&spec, v);
        let theta = spec.grid.node(start);
        let exp = run_spike(&spec, &u, theta, &[v], &[spec.grid.node(cells)], SpikeShape::Single).unwrap();
        let r = exp.records[0];
        prop_assert_eq!((r.dj_actual, r.dj_first, r.dj_second, r.residual_ratio), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn resumed_solve_matches_full_solve(ex in example(), a in 0.2f64..0.9, v in -1.0f64..1.0, start in 1usize..35, cells in 1usize..5) {
        let spec = builtin_example(ex, Order::new(a).unwrap(), 40).unwrap();
        let base_u = bumpy(&spec, 0.7, 5.0);
        let base = solve_fdde(&spec, &base_u).unwrap();
        let theta = spec.grid.node(start);
        let u = spike_control(&base_u, &spec.grid, &spec.controls, theta, spec.grid.node(cells), &[v]).unwrap();
        let resumed = solve_fdde_resume(&spec, &u, &base, &base_u, start).unwrap();
        let full = solve_fdde(&spec, &u).unwrap();
        prop_assert_eq!(resumed, full);
    }

    #[test]
    fn control_csv_round_trips(values in prop::collection::vec(-1.0f64..1.0, 20)) {
        let grid = TimeGrid::new(1.0, 0.5, 20).unwrap();
        let u = ControlSignal::new(values.iter().map(|&x| Vector::from_element(1, x)).collect()).unwrap();
        let back = read_control(&control_table(&u, &grid).to_string(), &grid).unwrap();
        for (a, b) in u.values().iter().zip(back.values()) {
            prop_assert!((a[0] - b[0]).abs() <= 1e-11 * (1.0 + a[0].abs()));
        }
    }

    #[test]
    fn twelve_digit_output_parses_back(x in -1e6f64..1e6, e in -12i32..12) {
        let y = x * 10f64.powi(e);
        let back: f64 = fmt12(y).parse().unwrap();
        prop_assert!((back - y).abs() <= 1e-11 * y.abs());
    }

    #[test]
    fn rendered_config_loads_back(ex in example(), a in 0.1f64..0.95, half in 2usize..60) {
        let spec = builtin_example(ex, Order::new(a).unwrap(), 2 * half).unwrap();
        let back = load_problem(&render(&spec).unwrap()).unwrap();
        prop_assert_eq!(back, spec);
    }
}
