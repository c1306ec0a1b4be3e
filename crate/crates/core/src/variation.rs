//! Spike-variation experiments: re-simulate needle perturbations of a base
//! control and compare the cost increment with its first- and second-order
//! expansions.

use crate::adjoint::{hamiltonian, solve_adjoint, AdjointPath};
use crate::conditions::Process;
use crate::error::{Error, Result};
use crate::export::Table;
use crate::forward::{evaluate_cost, solve_fdde, solve_fdde_resume, Trajectory};
use crate::fracquad::{gamma, kernel_moments, RieszTable};
use crate::grid::TimeGrid;
use crate::problem::{spike_control, ControlSignal, ProblemSpec};

/// Where the control is replaced by `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpikeShape {
    /// `[theta, theta + eps)`.
    #[default]
    Single,
    /// `[theta, theta + eps)` and its delayed copy `[theta + h, theta + h + eps)`.
    DelayPaired,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeRecord {
    pub eps: f64,
    pub dj_actual: f64,
    pub dj_first: f64,
    pub dj_second: f64,
    pub residual_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeExperiment {
    pub theta: f64,
    pub v: Vec<f64>,
    pub shape: SpikeShape,
    pub base_cost: f64,
    pub records: Vec<SpikeRecord>,
}

impl SpikeExperiment {
    pub fn to_table(&self) -> Table {
        let header = ["eps", "dJ_actual", "dJ_first", "dJ_second", "residual_ratio"]
            .map(String::from)
            .to_vec();
        let mut t = Table::new("spike", header);
        t.comment(format!("theta = {}", crate::export::fmt12(self.theta)));
        t.comment(format!(
            "v = {}",
            self.v.iter().map(|&x| crate::export::fmt12(x)).collect::<Vec<_>>().join(" ")
        ));
        if self.shape == SpikeShape::DelayPaired {
            t.comment("shape = delay-paired");
        }
        t.comment(format!("J_base = {}", crate::export::fmt12(self.base_cost)));
        for r in &self.records {
            t.push_numbers(&[r.eps, r.dj_actual, r.dj_first, r.dj_second, r.residual_ratio]);
        }
        t
    }
}

/// Base process shared by every entry of a ladder.
struct Base {
    traj: Trajectory,
    psi: AdjointPath,
    cost: f64,
}

fn solve_base(spec: &ProblemSpec, u: &ControlSignal) -> Result<Base> {
    let traj = solve_fdde(spec, u)?;
    let cost = evaluate_cost(spec, &traj, u)?;
    let psi = solve_adjoint(spec, &traj, u)?;
    Ok(Base { traj, psi, cost })
}

fn check_ladder(grid: &TimeGrid, theta: f64, ladder: &[f64], reach: f64) -> Result<usize> {
    let start = grid
        .index_of(theta)
        .ok_or_else(|| Error::Domain(format!("spike start {theta} is not a grid node")))?;
    if ladder.is_empty() {
        return Err(Error::Domain("empty eps ladder".into()));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("eps ladder must be strictly decreasing".into()));
    }
    for &eps in ladder {
        if grid.index_of(eps).is_none() || eps <= 0.0 {
            return Err(Error::Domain(format!("eps = {eps} is not a positive multiple of dt")));
        }
        if theta + reach + eps >= grid.horizon() - 0.5 * grid.dt() {
            return Err(Error::Domain(format!(
                "spike of width {eps} at {theta} leaves [0, T)"
            )));
        }
    }
    Ok(start)
}

fn spiked(spec: &ProblemSpec, base_u: &ControlSignal, theta: f64, eps: f64, v: &[f64], shape: SpikeShape) -> Result<ControlSignal> {
    let once = spike_control(base_u, &spec.grid, &spec.controls, theta, eps, v)?;
    match shape {
        SpikeShape::Single => Ok(once),
        SpikeShape::DelayPaired => {
            spike_control(&once, &spec.grid, &spec.controls, theta + spec.grid.delay(), eps, v)
        }
    }
}

/// `-(1/Gamma(a)) int (T - t)^(a-1) Delta_v H dt` over the cells
/// `start..end`, along the base process.
fn first_order_term(spec: &ProblemSpec, base: &Base, u: &ControlSignal, start: usize, end: usize, v: &[f64]) -> f64 {
    let grid = &spec.grid;
    let steps = grid.steps();
    let a = spec.alpha.value();
    let table = RieszTable::new(grid, a);
    let dh = |i: usize, yh: &[f64], uj: &[f64]| {
        let (t, y, psi) = (grid.node(i), base.traj.state(i), base.psi.psi(i));
        hamiltonian(spec, t, y, yh, v, psi) - hamiltonian(spec, t, y, yh, uj, psi)
    };
    let mut sum = 0.0;
    for j in start..end {
        let uj = u.cell(j).as_slice();
        let (l, r) = table.cell(steps - j);
        sum += l * dh(j, base.traj.delayed(j), uj) + r * dh(j + 1, base.traj.delayed_from_left(j + 1), uj);
    }
    -sum * table.scale() / gamma(a)
}

/// Re-simulate the spiked control for every width of the ladder.
pub fn run_spike(
    spec: &ProblemSpec,
    base_u: &ControlSignal,
    theta: f64,
    v: &[f64],
    ladder: &[f64],
    shape: SpikeShape,
) -> Result<SpikeExperiment> {
    let grid = spec.grid;
    let reach = match shape {
        SpikeShape::Single => 0.0,
        SpikeShape::DelayPaired => grid.delay(),
    };
    let start = check_ladder(&grid, theta, ladder, reach)?;
    let base = solve_base(spec, base_u)?;
    let process = Process::new(spec, &base.traj, base_u, &base.psi)?;
    let a = spec.alpha.value();
    let bracket = process.second_order_form(start, v);
    let m = grid.delay_steps();

    let mut records = Vec::with_capacity(ladder.len());
    for &eps in ladder {
        let cells = grid.index_of(eps).expect("checked above");
        let u = spiked(spec, base_u, theta, eps, v, shape)?;
        let traj = solve_fdde_resume(spec, &u, &base.traj, base_u, start)?;
        let dj_actual = evaluate_cost(spec, &traj, &u)? - base.cost;
        let mut dj_first = first_order_term(spec, &base, base_u, start, start + cells, v);
        if shape == SpikeShape::DelayPaired {
            dj_first += first_order_term(spec, &base, base_u, start + m, start + m + cells, v);
        }
        let dj_second = -eps.powf(a + 1.0) / (gamma(a) * gamma(a + 1.0)) * bracket;
        records.push(SpikeRecord {
            eps,
            dj_actual,
            dj_first,
            dj_second,
            residual_ratio: (dj_actual - dj_first - dj_second) / eps.powf(1.0 + a),
        });
    }
    Ok(SpikeExperiment {
        theta,
        v: v.to_vec(),
        shape,
        base_cost: base.cost,
        records,
    })
}

/// Widths `eps0, eps0/2, ...` rounded to whole cells; stops early if two
/// widths would round to the same cell count.
pub fn halving_ladder(grid: &TimeGrid, eps0: f64, count: usize) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::with_capacity(count);
    for k in 0..count {
        let cells = (eps0 / 2f64.powi(k as i32) / grid.dt()).round() as usize;
        if cells == 0 {
            break;
        }
        let eps = grid.node(cells);
        if out.last().is_some_and(|&prev| prev <= eps) {
            break;
        }
        out.push(eps);
    }
    if out.is_empty() {
        return Err(Error::Domain(format!("eps0 = {eps0} is below one grid cell")));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GronwallRecord {
    pub eps: f64,
    /// `max_t |Delta y(t)|` over the whole horizon.
    pub max_dy: f64,
    pub ratio_eps: f64,
    pub ratio_eps_alpha: f64,
    /// `max |Delta y(t)|` over `[theta, theta + eps]`.
    pub max_dy_spike: f64,
    /// `max |Delta y(t)| / (t - theta)^a` over `(theta, theta + eps]`.
    pub local_ratio: f64,
}

/// Trajectory increments under spikes of decreasing width.
pub fn gronwall_probe(
    spec: &ProblemSpec,
    base_u: &ControlSignal,
    theta: f64,
    v: &[f64],
    ladder: &[f64],
) -> Result<Vec<GronwallRecord>> {
    let grid = spec.grid;
    let start = check_ladder(&grid, theta, ladder, 0.0)?;
    let a = spec.alpha.value();
    let base = solve_fdde(spec, base_u)?;
    let n = spec.n();
    ladder
        .iter()
        .map(|&eps| {
            let cells = grid.index_of(eps).expect("checked above");
            let u = spike_control(base_u, &grid, &spec.controls, theta, eps, v)?;
            let traj = solve_fdde_resume(spec, &u, &base, base_u, start)?;
            let dy = |i: usize| {
                (0..n)
                    .map(|k| (traj.state(i)[k] - base.state(i)[k]).abs())
                    .fold(0.0, f64::max)
            };
            let max_dy = (0..=grid.steps()).map(dy).fold(0.0, f64::max);
            let max_dy_spike = (start..=start + cells).map(dy).fold(0.0, f64::max);
            let local_ratio = (start + 1..=start + cells)
                .map(|i| dy(i) / (grid.node(i) - theta).powf(a))
                .fold(0.0, f64::max);
            Ok(GronwallRecord {
                eps,
                max_dy,
                ratio_eps: max_dy / eps,
                ratio_eps_alpha: max_dy / eps.powf(a),
                max_dy_spike,
                local_ratio,
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_exponent(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

const LEBESGUE_CELLS: usize = 64;

/// `int_theta^{theta+eps} (T - t)^(a-1) (t - theta)^a g(t) dt`, with `g`
/// interpolated linearly on a uniform subdivision.
pub fn weighted_spike_integral(g: &dyn Fn(f64) -> f64, theta: f64, alpha: f64, horizon: f64, eps: f64) -> f64 {
    let len = horizon - theta;
    let dx = eps / LEBESGUE_CELLS as f64;
    (0..LEBESGUE_CELLS)
        .map(|k| {
            let (x0, x1) = (k as f64 * dx, (k + 1) as f64 * dx);
            let [m0, m1] = kernel_moments(alpha + 1.0, alpha, x0, x1, len - x0, len - x1);
            let right = m1 / dx;
            (m0 - right) * g(theta + x0) + right * g(theta + x1)
        })
        .sum()
}

/// Ratio of the weighted spike integral to its leading term
/// `(T - theta)^(a-1) g(theta) eps^(a+1) / (a + 1)` for each width. When
/// `g(theta) = 0` the raw integral divided by `eps^(a+1)` is returned.
pub fn lebesgue_asymptotic_check(
    g: &dyn Fn(f64) -> f64,
    theta: f64,
    alpha: f64,
    horizon: f64,
    ladder: &[f64],
) -> Result<Vec<f64>> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Domain(format!("order must lie in (0, 1), got {alpha}")));
    }
    ladder
        .iter()
        .map(|&eps| {
            if !(eps > 0.0 && theta + eps < horizon) {
                return Err(Error::Domain(format!("[{theta}, {theta} + {eps}] must lie inside [0, T)")));
            }
            let raw = weighted_spike_integral(g, theta, alpha, horizon, eps);
            let lead = (horizon - theta).powf(alpha - 1.0) * g(theta) / (alpha + 1.0);
            let scale = if lead == 0.0 { 1.0 } else { lead };
            Ok(raw / (scale * eps.powf(alpha + 1.0)))
        })
        .collect()
}
