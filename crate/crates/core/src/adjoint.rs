//! Backward solver for the conjugate equation
//!
//! ```text
//! Psi(t) = -Phi_y(y(T))
//!        + (T-t)^(1-a)/Gamma(a) * int_t^T     (T-s)^(a-1) (s-t)^(a-1)   H_y(s)   ds
//!        + (T-t)^(1-a)/Gamma(a) * int_{t+h}^T (T-s)^(a-1) (s-t-h)^(a-1) H_yh(s)  ds
//! ```
//!
//! with `Psi = 0` on `(T, T + h]`. `H_y` and `H_yh` are linear in `Psi`, so
//! marching from `T` down to `0` only couples the unknown `Psi(t_i)` to
//! itself through the first cell of the first integral, giving an `n x n`
//! linear system per node.

use nalgebra::{DMatrix, DVectorView};

use crate::error::{Error, Result};
use crate::export::{indexed, Table};
use crate::forward::Trajectory;
use crate::fracquad::{gamma, DoubleKernelTable};
use crate::problem::{ControlSignal, Matrix, ProblemSpec, Vector};

const DAMPING: f64 = 0.5;
const DAMPED_SWEEPS: usize = 500;
const DAMPED_TOL: f64 = 1e-10;

/// `(Gamma(a)/Gamma(b)) (T - t)^(b - a)`, the running-cost weight inside `H`.
pub fn running_weight(spec: &ProblemSpec, t: f64) -> f64 {
    let (a, b) = (spec.alpha.value(), spec.cost.beta.value());
    if a == b {
        return 1.0;
    }
    gamma(a) / gamma(b) * (spec.grid.horizon() - t).max(0.0).powf(b - a)
}

/// `H = Psi' f - (Gamma(a)/Gamma(b)) (T - t)^(b - a) f0`.
pub fn hamiltonian(spec: &ProblemSpec, t: f64, y: &[f64], yh: &[f64], u: &[f64], psi: &[f64]) -> f64 {
    let f = spec.dynamics.eval(t, y, yh, u);
    let mut h = f.dot(&DVectorView::from_slice(psi, psi.len()));
    if !spec.cost.running.is_zero() {
        h -= running_weight(spec, t) * spec.cost.running.value(t, y, yh, u);
    }
    h
}

/// `H_y = f_y' Psi - w f0_y`.
pub fn hamiltonian_y(spec: &ProblemSpec, t: f64, y: &[f64], yh: &[f64], u: &[f64], psi: &[f64]) -> Vector {
    let mut g = spec.dynamics.jac_y(t, y, yh, u).tr_mul(&DVectorView::from_slice(psi, psi.len()));
    if !spec.cost.running.is_zero() {
        g -= spec.cost.running.grad_y(t, y, yh, u) * running_weight(spec, t);
    }
    g
}

/// `H_yh = f_yh' Psi - w f0_yh`.
pub fn hamiltonian_yh(spec: &ProblemSpec, t: f64, y: &[f64], yh: &[f64], u: &[f64], psi: &[f64]) -> Vector {
    let mut g = spec.dynamics.jac_yh(t, y, yh, u).tr_mul(&DVectorView::from_slice(psi, psi.len()));
    if !spec.cost.running.is_zero() {
        g -= spec.cost.running.grad_yh(t, y, yh, u) * running_weight(spec, t);
    }
    g
}

/// Adjoint values at the grid nodes; zero beyond `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointPath {
    grid: crate::grid::TimeGrid,
    n: usize,
    values: Vec<f64>,
    zero: Vec<f64>,
}

impl AdjointPath {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &crate::grid::TimeGrid {
        &self.grid
    }

    /// `Psi(t_i)`; indices past `N` fall in the zero extension.
    pub fn psi(&self, i: usize) -> &[f64] {
        if i > self.grid.steps() {
            &self.zero
        } else {
            &self.values[i * self.n..(i + 1) * self.n]
        }
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        (0..=self.grid.steps()).map(|i| self.psi(i)[k]).collect()
    }

    pub fn max_diff(&self, other: &AdjointPath) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_table(&self) -> Table {
        let mut header = vec!["t".to_string()];
        header.extend(indexed("psi", self.n));
        let mut t = Table::new("adjoint", header);
        for i in 0..=self.grid.steps() {
            let mut row = vec![self.grid.node(i)];
            row.extend_from_slice(self.psi(i));
            t.push_numbers(&row);
        }
        t
    }
}

/// Transposed Jacobians and running-cost gradients at both ends of a cell.
struct CellLinearization {
    jy: [Matrix; 2],
    jyh: [Matrix; 2],
    gy: [Vector; 2],
    gyh: [Vector; 2],
}

fn linearize(spec: &ProblemSpec, traj: &Trajectory, u: &ControlSignal, j: usize) -> CellLinearization {
    let grid = &spec.grid;
    let uj = u.cell(j).as_slice();
    let ends = [
        (grid.node(j), traj.state(j), traj.delayed(j)),
        (grid.node(j + 1), traj.state(j + 1), traj.delayed_from_left(j + 1)),
    ];
    let n = spec.n();
    let mk = |e: usize| {
        let (t, y, yh) = ends[e];
        let w = running_weight(spec, t);
        let (gy, gyh) = if spec.cost.running.is_zero() {
            (Vector::zeros(n), Vector::zeros(n))
        } else {
            (
                spec.cost.running.grad_y(t, y, yh, uj) * w,
                spec.cost.running.grad_yh(t, y, yh, uj) * w,
            )
        };
        (
            spec.dynamics.jac_y(t, y, yh, uj).transpose(),
            spec.dynamics.jac_yh(t, y, yh, uj).transpose(),
            gy,
            gyh,
        )
    };
    let (a0, b0, c0, d0) = mk(0);
    let (a1, b1, c1, d1) = mk(1);
    CellLinearization {
        jy: [a0, a1],
        jyh: [b0, b1],
        gy: [c0, c1],
        gyh: [d0, d1],
    }
}

/// Solve the conjugate equation along a process.
pub fn solve_adjoint(spec: &ProblemSpec, traj: &Trajectory, u: &ControlSignal) -> Result<AdjointPath> {
    let table = DoubleKernelTable::new(spec.grid.dt(), spec.alpha, spec.grid.steps());
    solve_adjoint_with(spec, traj, u, &table)
}

/// As [`solve_adjoint`] with a prebuilt kernel table (reusable across
/// processes on the same grid and order).
pub fn solve_adjoint_with(
    spec: &ProblemSpec,
    traj: &Trajectory,
    u: &ControlSignal,
    table: &DoubleKernelTable,
) -> Result<AdjointPath> {
    let grid = spec.grid;
    let n = spec.n();
    let steps = grid.steps();
    let m = grid.delay_steps();
    let alpha = spec.alpha.value();
    if traj.grid() != &grid || traj.dim() != n || u.cells() != steps {
        return Err(Error::Shape("process does not belong to this problem".into()));
    }
    if table.max_span() < steps || (table.alpha() - alpha).abs() > 0.0 || (table.scale() - grid.dt().powf(2.0 * alpha - 1.0)).abs() > 1e-15 * table.scale() {
        return Err(Error::Shape("kernel table does not match grid and order".into()));
    }
    let lin: Vec<CellLinearization> = (0..steps).map(|j| linearize(spec, traj, u, j)).collect();
    let ga = gamma(alpha);
    let horizon = grid.horizon();

    let mut values = vec![0.0; (steps + 1) * n];
    // H_y and H_yh at the left (index 0) and right (index 1) end of each cell
    let mut hy = vec![[Vector::zeros(n), Vector::zeros(n)]; steps];
    let mut hyh = vec![[Vector::zeros(n), Vector::zeros(n)]; steps];

    let terminal = -spec.cost.terminal.gradient(traj.terminal());
    values[steps * n..].copy_from_slice(terminal.as_slice());
    let fill = |j: usize, end: usize, psi: &Vector, hy: &mut Vec<[Vector; 2]>, hyh: &mut Vec<[Vector; 2]>| {
        let l = &lin[j];
        hy[j][end] = &l.jy[end] * psi - &l.gy[end];
        hyh[j][end] = &l.jyh[end] * psi - &l.gyh[end];
    };
    fill(steps - 1, 1, &terminal, &mut hy, &mut hyh);

    let scale = table.scale();
    for i in (0..steps).rev() {
        let t = grid.node(i);
        let pref = (horizon - t).powf(1.0 - alpha) / ga * scale;
        let span = steps - i;
        let row = table.row(span);
        // explicit part of the first integral: everything except the left end of cell i
        let mut rhs = terminal.clone();
        let mut acc = Vector::zeros(n);
        for (q, &(l, r)) in row.iter().enumerate() {
            let j = i + q;
            if q > 0 {
                acc.axpy(l, &hy[j][0], 1.0);
            }
            acc.axpy(r, &hy[j][1], 1.0);
        }
        // the unknown's own cell: H_y(t_i+) = Jy' Psi_i - gy
        let l0 = row[0].0;
        acc.axpy(-l0, &lin[i].gy[0], 1.0);
        if span > m {
            let span2 = span - m;
            for (q, &(l, r)) in table.row(span2).iter().enumerate() {
                let j = i + m + q;
                acc.axpy(l, &hyh[j][0], 1.0);
                acc.axpy(r, &hyh[j][1], 1.0);
            }
        }
        rhs.axpy(pref, &acc, 1.0);
        let k = &lin[i].jy[0] * (pref * l0);
        let psi = solve_block(&k, &rhs, i)?;
        values[i * n..(i + 1) * n].copy_from_slice(psi.as_slice());
        fill(i, 0, &psi, &mut hy, &mut hyh);
        if i > 0 {
            fill(i - 1, 1, &psi, &mut hy, &mut hyh);
        }
    }

    Ok(AdjointPath {
        grid,
        n,
        values,
        zero: vec![0.0; n],
    })
}

/// Solve `Psi = rhs + K Psi`, falling back to damped fixed-point sweeps.
fn solve_block(k: &Matrix, rhs: &Vector, node: usize) -> Result<Vector> {
    let n = rhs.len();
    if k.iter().all(|&x| x == 0.0) {
        return Ok(rhs.clone());
    }
    let system = DMatrix::identity(n, n) - k;
    if let Some(x) = system.lu().solve(rhs) {
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x);
        }
    }
    let mut x = rhs.clone();
    for _ in 0..DAMPED_SWEEPS {
        let next = (rhs + k * &x) * DAMPING + &x * (1.0 - DAMPING);
        let diff = (&next - &x).amax();
        x = next;
        if !diff.is_finite() {
            break;
        }
        if diff <= DAMPED_TOL {
            return Ok(x);
        }
    }
    Err(Error::SingularBlock { node })
}
