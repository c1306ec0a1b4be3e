//! Data model of a fractional delay optimal control problem.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::fracquad::{gamma, Order};
use crate::grid::TimeGrid;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

fn view(x: &[f64]) -> DVectorView<'_, f64> {
    DVectorView::from_slice(x, x.len())
}

/// Initial state and history samples on `[-h, 0)`.
///
/// Sample `l` holds `phi(-h + l dt)` for `l = 0..m`, where the last sample
/// is the left limit `phi(0-)`; `y(0) = y0` is kept apart from the history.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySegment {
    y0: Vector,
    samples: Vec<Vector>,
}

impl HistorySegment {
    pub fn zero(n: usize, grid: &TimeGrid) -> Self {
        Self::constant(Vector::zeros(n), Vector::zeros(n), grid)
    }

    pub fn constant(y0: Vector, phi: Vector, grid: &TimeGrid) -> Self {
        Self {
            samples: vec![phi; grid.delay_steps() + 1],
            y0,
        }
    }

    pub fn from_fn(y0: Vector, grid: &TimeGrid, phi: impl Fn(f64) -> Vector) -> Self {
        let m = grid.delay_steps();
        let samples = (0..=m)
            .map(|l| phi(-grid.delay() + l as f64 * grid.dt()))
            .collect();
        Self { y0, samples }
    }

    pub fn y0(&self) -> &Vector {
        &self.y0
    }

    pub fn sample(&self, l: usize) -> &Vector {
        &self.samples[l]
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.y0.len()
    }

    /// The common value if every sample is the same vector.
    pub fn constant_value(&self) -> Option<&Vector> {
        let first = self.samples.first()?;
        self.samples.iter().all(|s| s == first).then_some(first)
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|s| s.iter().all(|&x| x == 0.0))
    }

    /// Re-sample a constant history on another grid.
    pub(crate) fn regrid(&self, grid: &TimeGrid) -> Result<Self> {
        let phi = self.constant_value().cloned().ok_or_else(|| {
            Error::Unsupported("only constant histories can be moved to another grid".into())
        })?;
        Ok(Self::constant(self.y0.clone(), phi, grid))
    }
}

/// `f = A0 y + A1 y_h + B u + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDelay {
    pub a0: Matrix,
    pub a1: Matrix,
    pub b: Matrix,
    pub c: Vector,
}

/// `f = (A + sum_i y_h[i] B_i) u + A0 y + A1 y_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearDelay {
    pub a: Matrix,
    pub b: Vec<Matrix>,
    pub a0: Matrix,
    pub a1: Matrix,
}

/// Named right-hand sides that are not linear or bilinear.
#[derive(Debug, Clone, PartialEq)]
pub enum Builtin {
    /// Scalar `f = rate * y * (1 - y_h) + u`.
    Logistic { rate: f64 },
    /// Scalar `f = a y + b y_h + g(t) + u` with `g` chosen so that
    /// `y(t) = t^2` solves the equation for history `phi(s) = s^2`.
    Manufactured {
        alpha: f64,
        a: f64,
        b: f64,
        delay: f64,
    },
}

impl Builtin {
    pub fn name(&self) -> &'static str {
        match self {
            Builtin::Logistic { .. } => "logistic",
            Builtin::Manufactured { .. } => "manufactured",
        }
    }

    fn forcing(&self, t: f64) -> f64 {
        match *self {
            Builtin::Logistic { .. } => 0.0,
            Builtin::Manufactured { alpha, a, b, delay } => {
                2.0 * t.powf(2.0 - alpha) / gamma(3.0 - alpha)
                    - a * t * t
                    - b * (t - delay) * (t - delay)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    LinearDelay(LinearDelay),
    BilinearDelay(BilinearDelay),
    Builtin(Builtin),
}

impl Dynamics {
    pub fn kind(&self) -> &'static str {
        match self {
            Dynamics::LinearDelay(_) => "linear_delay",
            Dynamics::BilinearDelay(_) => "bilinear_delay",
            Dynamics::Builtin(_) => "builtin",
        }
    }

    /// `(n, r)`.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Dynamics::LinearDelay(l) => (l.a0.nrows(), l.b.ncols()),
            Dynamics::BilinearDelay(b) => (b.a0.nrows(), b.a.ncols()),
            Dynamics::Builtin(_) => (1, 1),
        }
    }

    fn check_shapes(&self) -> Result<()> {
        let (n, r) = self.dims();
        let sq = |m: &Matrix, name: &str| {
            if m.nrows() == n && m.ncols() == n {
                Ok(())
            } else {
                Err(Error::config(
                    format!("dynamics.{name}"),
                    format!("expected {n}x{n}, got {}x{}", m.nrows(), m.ncols()),
                ))
            }
        };
        let nr = |m: &Matrix, name: &str| {
            if m.nrows() == n && m.ncols() == r {
                Ok(())
            } else {
                Err(Error::config(
                    format!("dynamics.{name}"),
                    format!("expected {n}x{r}, got {}x{}", m.nrows(), m.ncols()),
                ))
            }
        };
        match self {
            Dynamics::LinearDelay(l) => {
                sq(&l.a0, "A0")?;
                sq(&l.a1, "A1")?;
                nr(&l.b, "B")?;
                if l.c.len() != n {
                    return Err(Error::config("dynamics.c", format!("expected {n} entries")));
                }
            }
            Dynamics::BilinearDelay(b) => {
                sq(&b.a0, "A0")?;
                sq(&b.a1, "A1")?;
                nr(&b.a, "A")?;
                if b.b.len() != n {
                    return Err(Error::config(
                        "dynamics.B",
                        format!("expected {n} matrices, got {}", b.b.len()),
                    ));
                }
                for (i, m) in b.b.iter().enumerate() {
                    nr(m, &format!("B[{i}]"))?;
                }
            }
            Dynamics::Builtin(_) => {}
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, y: &[f64], yh: &[f64], u: &[f64]) -> Vector {
        match self {
            Dynamics::LinearDelay(l) => &l.a0 * view(y) + &l.a1 * view(yh) + &l.b * view(u) + &l.c,
            Dynamics::BilinearDelay(b) => {
                let mut g = b.a.clone();
                for (i, bi) in b.b.iter().enumerate() {
                    g += bi * yh[i];
                }
                g * view(u) + &b.a0 * view(y) + &b.a1 * view(yh)
            }
            Dynamics::Builtin(bi) => {
                let v = match *bi {
                    Builtin::Logistic { rate } => rate * y[0] * (1.0 - yh[0]) + u[0],
                    Builtin::Manufactured { a, b, .. } => a * y[0] + b * yh[0] + u[0],
                };
                Vector::from_element(1, v + bi.forcing(t))
            }
        }
    }

    /// `df/dy`, an `n x n` matrix.
    pub fn jac_y(&self, _t: f64, _y: &[f64], yh: &[f64], _u: &[f64]) -> Matrix {
        match self {
            Dynamics::LinearDelay(l) => l.a0.clone(),
            Dynamics::BilinearDelay(b) => b.a0.clone(),
            Dynamics::Builtin(bi) => {
                let v = match *bi {
                    Builtin::Logistic { rate } => rate * (1.0 - yh[0]),
                    Builtin::Manufactured { a, .. } => a,
                };
                Matrix::from_element(1, 1, v)
            }
        }
    }

    /// `df/dy_h`, an `n x n` matrix.
    pub fn jac_yh(&self, _t: f64, y: &[f64], _yh: &[f64], u: &[f64]) -> Matrix {
        match self {
            Dynamics::LinearDelay(l) => l.a1.clone(),
            Dynamics::BilinearDelay(b) => {
                let mut j = b.a1.clone();
                for (i, bi) in b.b.iter().enumerate() {
                    let col = bi * view(u);
                    for k in 0..j.nrows() {
                        j[(k, i)] += col[k];
                    }
                }
                j
            }
            Dynamics::Builtin(bi) => {
                let v = match *bi {
                    Builtin::Logistic { rate } => -rate * y[0],
                    Builtin::Manufactured { b, .. } => b,
                };
                Matrix::from_element(1, 1, v)
            }
        }
    }

    /// `df/du`, an `n x r` matrix.
    pub fn jac_u(&self, _t: f64, _y: &[f64], yh: &[f64], _u: &[f64]) -> Matrix {
        match self {
            Dynamics::LinearDelay(l) => l.b.clone(),
            Dynamics::BilinearDelay(b) => {
                let mut g = b.a.clone();
                for (i, bi) in b.b.iter().enumerate() {
                    g += bi * yh[i];
                }
                g
            }
            Dynamics::Builtin(_) => Matrix::from_element(1, 1, 1.0),
        }
    }

    /// `f` does not depend on the control at all.
    pub fn is_control_free(&self) -> bool {
        match self {
            Dynamics::LinearDelay(l) => l.b.iter().all(|&x| x == 0.0),
            Dynamics::BilinearDelay(b) => {
                b.a.iter().all(|&x| x == 0.0) && b.b.iter().all(|m| m.iter().all(|&x| x == 0.0))
            }
            Dynamics::Builtin(_) => false,
        }
    }
}

/// Terminal part `Phi(y(T))` of the cost.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalCost {
    /// `Phi = coef . y`
    Linear { coef: Vector },
    /// `Phi = 1/2 y' Q y + coef . y`
    Quadratic { matrix: Matrix, coef: Vector },
}

impl TerminalCost {
    pub fn value(&self, y: &[f64]) -> f64 {
        let y = view(y);
        match self {
            TerminalCost::Linear { coef } => coef.dot(&y),
            TerminalCost::Quadratic { matrix, coef } => 0.5 * y.dot(&(matrix * y)) + coef.dot(&y),
        }
    }

    pub fn gradient(&self, y: &[f64]) -> Vector {
        match self {
            TerminalCost::Linear { coef } => coef.clone(),
            TerminalCost::Quadratic { matrix, coef } => {
                let sym = (matrix + matrix.transpose()) * 0.5;
                sym * view(y) + coef
            }
        }
    }

    pub fn hessian(&self, n: usize) -> Matrix {
        match self {
            TerminalCost::Linear { .. } => Matrix::zeros(n, n),
            TerminalCost::Quadratic { matrix, .. } => (matrix + matrix.transpose()) * 0.5,
        }
    }

    fn dim(&self) -> usize {
        match self {
            TerminalCost::Linear { coef } | TerminalCost::Quadratic { coef, .. } => coef.len(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        match self {
            TerminalCost::Linear { coef } => TerminalCost::Linear { coef: coef * c },
            TerminalCost::Quadratic { matrix, coef } => TerminalCost::Quadratic {
                matrix: matrix * c,
                coef: coef * c,
            },
        }
    }
}

/// Running integrand `f0(t, y, y_h, u)`.
#[derive(Debug, Clone, PartialEq)]
pub enum RunningCost {
    Zero,
    /// `f0 = 1/2 (y' Qy y + u' Qu u)`
    Quadratic { qy: Matrix, qu: Matrix },
}

impl RunningCost {
    pub fn is_zero(&self) -> bool {
        matches!(self, RunningCost::Zero)
    }

    pub fn value(&self, _t: f64, y: &[f64], _yh: &[f64], u: &[f64]) -> f64 {
        match self {
            RunningCost::Zero => 0.0,
            RunningCost::Quadratic { qy, qu } => {
                let (y, u) = (view(y), view(u));
                0.5 * (y.dot(&(qy * y)) + u.dot(&(qu * u)))
            }
        }
    }

    pub fn grad_y(&self, _t: f64, y: &[f64], _yh: &[f64], _u: &[f64]) -> Vector {
        match self {
            RunningCost::Zero => Vector::zeros(y.len()),
            RunningCost::Quadratic { qy, .. } => ((qy + qy.transpose()) * 0.5) * view(y),
        }
    }

    pub fn grad_yh(&self, _t: f64, _y: &[f64], yh: &[f64], _u: &[f64]) -> Vector {
        Vector::zeros(yh.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub terminal: TerminalCost,
    pub running: RunningCost,
    pub beta: Order,
}

/// Compact box `lower <= u <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    lower: Vector,
    upper: Vector,
}

impl ControlSet {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::config(
                "control",
                "lower and upper must be non-empty vectors of equal length",
            ));
        }
        for k in 0..lower.len() {
            if !(lower[k].is_finite() && upper[k].is_finite()) {
                return Err(Error::config("control", "bounds must be finite"));
            }
            if lower[k] > upper[k] {
                return Err(Error::config(
                    format!("control.lower[{k}]"),
                    format!("lower {} exceeds upper {}", lower[k], upper[k]),
                ));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn symmetric(r: usize, bound: f64) -> Self {
        Self {
            lower: Vector::from_element(r, -bound),
            upper: Vector::from_element(r, bound),
        }
    }

    pub fn lower(&self) -> &Vector {
        &self.lower
    }

    pub fn upper(&self) -> &Vector {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim()
            && v.iter()
                .enumerate()
                .all(|(k, &x)| x >= self.lower[k] && x <= self.upper[k])
    }

    pub fn is_singleton(&self) -> bool {
        self.lower == self.upper
    }
}

/// Piecewise-constant control: one value per cell `[t_i, t_{i+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    values: Vec<Vector>,
}

impl ControlSignal {
    pub fn new(values: Vec<Vector>) -> Result<Self> {
        let r = values.first().map(|v| v.len()).unwrap_or(0);
        if values.is_empty() || values.iter().any(|v| v.len() != r) {
            return Err(Error::Shape("control signal needs at least one cell and a fixed dimension".into()));
        }
        Ok(Self { values })
    }

    pub fn constant(cells: usize, value: Vector) -> Self {
        Self {
            values: vec![value; cells],
        }
    }

    pub fn from_fn(grid: &TimeGrid, f: impl Fn(f64) -> Vector) -> Self {
        Self {
            values: (0..grid.steps()).map(|i| f(grid.node(i))).collect(),
        }
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn cell(&self, i: usize) -> &Vector {
        &self.values[i]
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    /// Value on `[t_i, t_{i+1})`; the last node reads the last cell.
    pub fn at_node(&self, i: usize) -> &Vector {
        &self.values[i.min(self.values.len() - 1)]
    }

    pub fn check_admissible(&self, set: &ControlSet) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            if !set.contains(v.as_slice()) {
                return Err(Error::Inadmissible(format!(
                    "cell {i} value {:?} outside the control set",
                    v.as_slice()
                )));
            }
        }
        Ok(())
    }
}

/// Full description of one control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub alpha: Order,
    pub grid: TimeGrid,
    pub history: HistorySegment,
    pub dynamics: Dynamics,
    pub cost: CostSpec,
    pub controls: ControlSet,
}

impl ProblemSpec {
    pub fn new(
        alpha: Order,
        grid: TimeGrid,
        history: HistorySegment,
        dynamics: Dynamics,
        cost: CostSpec,
        controls: ControlSet,
    ) -> Result<Self> {
        let spec = Self {
            alpha,
            grid,
            history,
            dynamics,
            cost,
            controls,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cost.beta.value() < self.alpha.value() {
            return Err(Error::config(
                "beta",
                format!(
                    "beta must be >= alpha (beta = {}, alpha = {})",
                    self.cost.beta.value(),
                    self.alpha.value()
                ),
            ));
        }
        self.dynamics.check_shapes()?;
        let (n, r) = self.dims();
        if self.history.dim() != n || self.history.len() != self.grid.delay_steps() + 1 {
            return Err(Error::config(
                "history",
                format!("expected {} samples of dimension {n}", self.grid.delay_steps() + 1),
            ));
        }
        if self.cost.terminal.dim() != n {
            return Err(Error::config("cost.terminal", format!("expected dimension {n}")));
        }
        if self.controls.dim() != r {
            return Err(Error::config("control", format!("expected dimension {r}")));
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dynamics.dims()
    }

    pub fn n(&self) -> usize {
        self.dims().0
    }

    pub fn r(&self) -> usize {
        self.dims().1
    }

    /// Same problem on a grid with a different number of steps.
    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        let grid = self.grid.with_steps(steps)?;
        let history = self.history.regrid(&grid)?;
        Ok(Self {
            grid,
            history,
            ..self.clone()
        })
    }

    pub fn with_alpha(&self, alpha: Order) -> Result<Self> {
        let mut out = self.clone();
        let tied = self.cost.beta == self.alpha;
        out.alpha = alpha;
        if tied {
            out.cost.beta = alpha;
        }
        if let Dynamics::Builtin(Builtin::Manufactured { alpha: a, .. }) = &mut out.dynamics {
            *a = alpha.value();
        }
        out.validate()?;
        Ok(out)
    }

    pub fn zero_control(&self) -> ControlSignal {
        ControlSignal::constant(self.grid.steps(), Vector::zeros(self.r()))
    }

    /// Finite-difference Lipschitz estimate of `f` over a lattice of the box
    /// `[-radius, radius]^n x [-radius, radius]^n x U` (three points per
    /// axis). A local surface check only; it cannot certify a global bound.
    pub fn local_lipschitz_estimate(&self, radius: f64) -> f64 {
        let (n, r) = self.dims();
        let dim = 2 * n + r;
        let lo: Vec<f64> = (0..dim)
            .map(|k| if k < 2 * n { -radius } else { self.controls.lower[k - 2 * n] })
            .collect();
        let hi: Vec<f64> = (0..dim)
            .map(|k| if k < 2 * n { radius } else { self.controls.upper[k - 2 * n] })
            .collect();
        let delta = 1e-6;
        let t = 0.5 * self.grid.horizon();
        let mut best: f64 = 0.0;
        let total = 3usize.pow(dim as u32);
        let mut p = vec![0.0; dim];
        for code in 0..total {
            let mut c = code;
            for k in 0..dim {
                p[k] = lo[k] + 0.5 * (c % 3) as f64 * (hi[k] - lo[k]);
                c /= 3;
            }
            let base = self.dynamics.eval(t, &p[..n], &p[n..2 * n], &p[2 * n..]);
            for k in 0..dim {
                let mut q = p.clone();
                q[k] += delta;
                let moved = self.dynamics.eval(t, &q[..n], &q[n..2 * n], &q[2 * n..]);
                best = best.max((moved - &base).amax() / delta);
            }
        }
        best
    }
}

/// The two closed-form examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    /// `D^a y = A y(t-h) + B u`, `J = y1(1)`.
    Ex1,
    /// `D^a y = [A + B y1(t-h)] u`, `J = y2(1)`.
    Ex2,
}

impl std::str::FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ex1" => Ok(Example::Ex1),
            "ex2" => Ok(Example::Ex2),
            other => Err(Error::Domain(format!("unknown example `{other}` (expected ex1 or ex2)"))),
        }
    }
}

impl Example {
    pub fn name(self) -> &'static str {
        match self {
            Example::Ex1 => "ex1",
            Example::Ex2 => "ex2",
        }
    }
}

/// Built-in registry: both examples on `T = 1`, `h = 1/2`, `|u| <= 1`,
/// zero history, `f0 = 0` and `beta = alpha`.
pub fn builtin_example(example: Example, alpha: Order, steps: usize) -> Result<ProblemSpec> {
    if !steps.is_multiple_of(2) {
        return Err(Error::Grid(format!("N must be even so that h = 1/2 is a node, got {steps}")));
    }
    let grid = TimeGrid::new(1.0, 0.5, steps)?;
    let dynamics = match example {
        Example::Ex1 => Dynamics::LinearDelay(LinearDelay {
            a0: Matrix::zeros(2, 2),
            a1: Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            b: Matrix::from_row_slice(2, 1, &[1.0, 1.0]),
            c: Vector::zeros(2),
        }),
        Example::Ex2 => Dynamics::BilinearDelay(BilinearDelay {
            a: Matrix::from_row_slice(2, 1, &[1.0, 0.0]),
            b: vec![
                Matrix::from_row_slice(2, 1, &[0.0, -1.0]),
                Matrix::zeros(2, 1),
            ],
            a0: Matrix::zeros(2, 2),
            a1: Matrix::zeros(2, 2),
        }),
    };
    let coef = match example {
        Example::Ex1 => Vector::from_vec(vec![1.0, 0.0]),
        Example::Ex2 => Vector::from_vec(vec![0.0, 1.0]),
    };
    ProblemSpec::new(
        alpha,
        grid,
        HistorySegment::zero(2, &grid),
        dynamics,
        CostSpec {
            terminal: TerminalCost::Linear { coef },
            running: RunningCost::Zero,
            beta: alpha,
        },
        ControlSet::symmetric(1, 1.0),
    )
}

/// Scalar problem with exact solution `y(t) = t^2` (forcing built in).
pub fn manufactured_problem(alpha: Order, steps: usize) -> Result<ProblemSpec> {
    let grid = TimeGrid::new(1.0, 0.5, steps)?;
    let history = HistorySegment::from_fn(Vector::zeros(1), &grid, |s| Vector::from_element(1, s * s));
    ProblemSpec::new(
        alpha,
        grid,
        history,
        Dynamics::Builtin(Builtin::Manufactured {
            alpha: alpha.value(),
            a: -1.0,
            b: 0.5,
            delay: grid.delay(),
        }),
        CostSpec {
            terminal: TerminalCost::Linear {
                coef: Vector::from_element(1, 1.0),
            },
            running: RunningCost::Zero,
            beta: alpha,
        },
        ControlSet::symmetric(1, 0.0),
    )
}

/// Replace the control on `[theta, theta + eps)` by `v`.
pub fn spike_control(
    base: &ControlSignal,
    grid: &TimeGrid,
    controls: &ControlSet,
    theta: f64,
    eps: f64,
    v: &[f64],
) -> Result<ControlSignal> {
    if !controls.contains(v) {
        return Err(Error::Inadmissible(format!("spike value {v:?} outside the control set")));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Domain(format!("spike width must be positive, got {eps}")));
    }
    if base.cells() != grid.steps() {
        return Err(Error::Shape("control signal does not match the grid".into()));
    }
    let start = grid
        .index_of(theta)
        .ok_or_else(|| Error::Domain(format!("spike start {theta} is not a grid node")))?;
    let end = grid
        .index_of(theta + eps)
        .ok_or_else(|| Error::Domain(format!("spike end {} is not a grid node", theta + eps)))?;
    if end >= grid.steps() || end <= start {
        return Err(Error::Domain(format!(
            "spike [{theta}, {}) must lie inside [0, T) with T = {}",
            theta + eps,
            grid.horizon()
        )));
    }
    let mut values = base.values.clone();
    for cell in &mut values[start..end] {
        *cell = Vector::from_column_slice(v);
    }
    Ok(ControlSignal { values })
}
