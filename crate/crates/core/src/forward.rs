//! Forward solver for the Caputo delay equation in its Volterra form
//! `y(t) = y0 + I^a f(., y, y(. - h), u)(t)` and evaluation of the cost.
//!
//! Every cell `[t_j, t_{j+1}]` carries its own control value, so the right
//! hand side is sampled one-sidedly at both ends of a cell: `f` at `t_j+`
//! and at `t_{j+1}-`, both with the cell's control. For continuous data the
//! two samples at a node coincide; for piecewise-constant controls the
//! product rule stays exact on each cell.

use crate::error::{Error, Result};
use crate::export::{indexed, Table};
use crate::fracquad::{gamma, Order, RieszTable};
use crate::grid::TimeGrid;
use crate::problem::{manufactured_problem, ControlSignal, HistorySegment, ProblemSpec};

const CORRECTOR_TOL: f64 = 1e-12;
const CORRECTOR_MAX_ITER: usize = 50;

/// State values at the grid nodes together with the one-sided right hand
/// side samples used by the quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    n: usize,
    states: Vec<f64>,
    history: HistorySegment,
    g_left: Vec<f64>,
    g_right: Vec<f64>,
}

impl Trajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn history(&self) -> &HistorySegment {
        &self.history
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.n..(i + 1) * self.n]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.grid.steps())
    }

    /// Node values computed elsewhere (no quadrature samples attached, so
    /// the result cannot seed [`solve_fdde_resume`]).
    pub fn from_states(grid: TimeGrid, history: HistorySegment, states: &[crate::problem::Vector]) -> Self {
        let n = history.dim();
        assert_eq!(states.len(), grid.steps() + 1, "one state per node");
        Self {
            grid,
            n,
            states: states.iter().flat_map(|s| s.iter().copied()).collect(),
            history,
            g_left: Vec::new(),
            g_right: Vec::new(),
        }
    }

    /// `y(t_i - h)` as seen from the cell that starts at `t_i`.
    pub fn delayed(&self, i: usize) -> &[f64] {
        let m = self.grid.delay_steps();
        if i < m {
            self.history.sample(i).as_slice()
        } else {
            self.state(i - m)
        }
    }

    /// `y(t_i - h)` as seen from the cell that ends at `t_i`.
    pub fn delayed_from_left(&self, i: usize) -> &[f64] {
        let m = self.grid.delay_steps();
        if i <= m {
            self.history.sample(i).as_slice()
        } else {
            self.state(i - m)
        }
    }

    /// Component `k` at every node.
    pub fn component(&self, k: usize) -> Vec<f64> {
        (0..=self.grid.steps()).map(|i| self.state(i)[k]).collect()
    }

    /// Largest node-wise sup-norm difference to another trajectory.
    pub fn max_diff(&self, other: &Trajectory) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_table(&self) -> Table {
        let mut header = vec!["t".to_string()];
        header.extend(indexed("y", self.n));
        let mut t = Table::new("trajectory", header);
        for i in 0..=self.grid.steps() {
            let mut row = vec![self.grid.node(i)];
            row.extend_from_slice(self.state(i));
            t.push_numbers(&row);
        }
        t
    }
}

fn check_inputs(spec: &ProblemSpec, u: &ControlSignal) -> Result<()> {
    if u.cells() != spec.grid.steps() || u.dim() != spec.r() {
        return Err(Error::Shape(format!(
            "control has {} cells of dimension {}, problem needs {} cells of dimension {}",
            u.cells(),
            u.dim(),
            spec.grid.steps(),
            spec.r()
        )));
    }
    u.check_admissible(&spec.controls)
}

/// Solve the state equation on the whole grid.
pub fn solve_fdde(spec: &ProblemSpec, u: &ControlSignal) -> Result<Trajectory> {
    check_inputs(spec, u)?;
    let grid = spec.grid;
    let n = spec.n();
    let steps = grid.steps();
    let mut traj = Trajectory {
        grid,
        n,
        states: vec![0.0; (steps + 1) * n],
        history: spec.history.clone(),
        g_left: vec![0.0; steps * n],
        g_right: vec![0.0; steps * n],
    };
    traj.states[..n].copy_from_slice(spec.history.y0().as_slice());
    let g0 = spec.dynamics.eval(0.0, traj.state(0), traj.delayed(0), u.cell(0).as_slice());
    traj.g_left[..n].copy_from_slice(g0.as_slice());
    march(spec, u, traj, 1)
}

/// Re-solve after a control change that leaves cells `0..keep` untouched.
///
/// Nodes `0..=keep` of `base` are reused verbatim; the result is
/// bit-identical to a full [`solve_fdde`] with the same control.
pub fn solve_fdde_resume(
    spec: &ProblemSpec,
    u: &ControlSignal,
    base: &Trajectory,
    base_u: &ControlSignal,
    keep: usize,
) -> Result<Trajectory> {
    check_inputs(spec, u)?;
    let steps = spec.grid.steps();
    if keep == 0 || keep > steps || base.grid != spec.grid || base.g_left.len() != steps * spec.n() {
        return solve_fdde(spec, u);
    }
    if (0..keep).any(|j| u.cell(j) != base_u.cell(j)) {
        return Err(Error::Domain(format!(
            "control differs from the base control before cell {keep}"
        )));
    }
    let n = spec.n();
    let mut traj = base.clone();
    // the left sample of cell `keep` uses that cell's (possibly new) control
    if keep < steps {
        let g = spec.dynamics.eval(
            spec.grid.node(keep),
            traj.state(keep),
            traj.delayed(keep),
            u.cell(keep).as_slice(),
        );
        traj.g_left[keep * n..(keep + 1) * n].copy_from_slice(g.as_slice());
    }
    march(spec, u, traj, keep + 1)
}

fn march(spec: &ProblemSpec, u: &ControlSignal, mut traj: Trajectory, start: usize) -> Result<Trajectory> {
    let grid = spec.grid;
    let n = spec.n();
    let steps = grid.steps();
    let alpha = spec.alpha.value();
    let table = RieszTable::new(&grid, alpha);
    let c = table.scale() / gamma(alpha);
    let r1 = table.cell(1).1;
    let y0 = spec.history.y0().clone();
    let mut acc = vec![0.0; n];

    for i in start..=steps {
        let t = grid.node(i);
        acc.iter_mut().for_each(|a| *a = 0.0);
        for j in 0..i {
            let (l, r) = table.cell(i - j);
            let gl = &traj.g_left[j * n..(j + 1) * n];
            for k in 0..n {
                acc[k] += l * gl[k];
            }
            if j + 1 < i {
                let gr = &traj.g_right[j * n..(j + 1) * n];
                for k in 0..n {
                    acc[k] += r * gr[k];
                }
            }
        }
        let yh = traj.delayed_from_left(i).to_vec();
        let ucell = u.cell(i - 1).as_slice();
        let mut y = traj.state(i - 1).to_vec();
        let mut converged = false;
        let mut residual = f64::INFINITY;
        for _ in 0..CORRECTOR_MAX_ITER {
            let f = spec.dynamics.eval(t, &y, &yh, ucell);
            let mut next = vec![0.0; n];
            residual = 0.0;
            let mut scale: f64 = 1.0;
            for k in 0..n {
                next[k] = y0[k] + c * (acc[k] + r1 * f[k]);
                residual = residual.max((next[k] - y[k]).abs());
                scale = scale.max(next[k].abs());
            }
            y = next;
            if !residual.is_finite() {
                break;
            }
            if residual <= CORRECTOR_TOL * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::SolverDiverged {
                step: i,
                residual,
                iterations: CORRECTOR_MAX_ITER,
            });
        }
        traj.states[i * n..(i + 1) * n].copy_from_slice(&y);
        let gr = spec.dynamics.eval(t, &y, &yh, ucell);
        traj.g_right[(i - 1) * n..i * n].copy_from_slice(gr.as_slice());
        if i < steps {
            let gl = spec
                .dynamics
                .eval(t, &y, traj.delayed(i), u.cell(i).as_slice());
            traj.g_left[i * n..(i + 1) * n].copy_from_slice(gl.as_slice());
        }
    }
    Ok(traj)
}

/// `J = Phi(y(T)) + (1/Gamma(b)) int_0^T (T - t)^(b-1) f0 dt`.
pub fn evaluate_cost(spec: &ProblemSpec, traj: &Trajectory, u: &ControlSignal) -> Result<f64> {
    if traj.grid != spec.grid || traj.n != spec.n() {
        return Err(Error::Shape("trajectory does not belong to this problem".into()));
    }
    if u.cells() != spec.grid.steps() {
        return Err(Error::Shape("control does not match the grid".into()));
    }
    let terminal = spec.cost.terminal.value(traj.terminal());
    if spec.cost.running.is_zero() {
        return Ok(terminal);
    }
    let grid = spec.grid;
    let steps = grid.steps();
    let beta = spec.cost.beta.value();
    let table = RieszTable::new(&grid, beta);
    let mut sum = 0.0;
    for j in 0..steps {
        let uj = u.cell(j).as_slice();
        let left = spec
            .cost
            .running
            .value(grid.node(j), traj.state(j), traj.delayed(j), uj);
        let right = spec.cost.running.value(
            grid.node(j + 1),
            traj.state(j + 1),
            traj.delayed_from_left(j + 1),
            uj,
        );
        let (l, r) = table.cell(steps - j);
        sum += l * left + r * right;
    }
    Ok(terminal + sum * table.scale() / gamma(beta))
}

/// Solve and evaluate the cost in one call.
pub fn cost_of(spec: &ProblemSpec, u: &ControlSignal) -> Result<(Trajectory, f64)> {
    let traj = solve_fdde(spec, u)?;
    let j = evaluate_cost(spec, &traj, u)?;
    Ok((traj, j))
}

/// Max-node error of the solver on a problem with exact solution
/// `y(t) = t^2`, for each grid size of the ladder.
pub fn manufactured_convergence(alpha: Order, ladder: &[usize]) -> Result<Vec<(usize, f64)>> {
    if ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("grid ladder must be strictly increasing".into()));
    }
    ladder
        .iter()
        .map(|&steps| {
            let spec = manufactured_problem(alpha, steps)?;
            let traj = solve_fdde(&spec, &spec.zero_control())?;
            let err = (0..=steps)
                .map(|i| (traj.state(i)[0] - spec.grid.node(i).powi(2)).abs())
                .fold(0.0, f64::max);
            Ok((steps, err))
        })
        .collect()
}

/// Observed orders `log2(e_k / e_{k+1})` along a ladder of doubling grids.
pub fn observed_orders(errors: &[(usize, f64)]) -> Vec<f64> {
    errors
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[1].0 as f64 / w[0].0 as f64).ln())
        .collect()
}
