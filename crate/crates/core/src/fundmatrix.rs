//! Fundamental matrix of the linear delay system
//! `D^a y = a(t) y + b(t) y(t - h) + f(t)` and the representation
//! `y(t) = (1/Gamma(a)) int_0^t (t - s)^(a-1) F(t, s) f(s) ds + F1(t) y0`.
//!
//! `F(t, .)` solves a backward Volterra equation in its second argument for
//! every fixed `t`, so a full trajectory costs `O(N^3)`. This path exists to
//! cross-check the forward solver, not to replace it.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::export::Table;
use crate::forward::Trajectory;
use crate::fracquad::{gamma, DoubleKernelTable, Order, RieszTable};
use crate::grid::TimeGrid;
use crate::problem::{HistorySegment, LinearDelay, Matrix, Vector};

/// How the history on `[-h, 0)` relates to `y0`. The representation with
/// `F1 = E + I^a[F (a + b)]` holds when the history equals `y0`; for a zero
/// history the delayed coefficient only acts once `s >= h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryMode {
    ConstantInitial,
    Zero,
}

/// `F(t_k, tau_j)` for `j = 0..=k`.
///
/// With `x = t - tau`, `L1 = t - h - tau` and `L2 = t - 2h - tau`, the
/// matrix is split as `F = R + K` where
///
/// ```text
/// K = k3 x^(2a) A(t)^2
///   + x^(1-a) [k2 L1^(2a-1) B(t) + k3 L1^(3a-1) (A(t) B(t) + B(t) A(t-h))]   (L1 > 0)
///   + x^(1-a) k3 L2^(3a-1) B(t) B(t-h)                                       (L2 > 0)
/// ```
///
/// with `k2 = Gamma(a)/Gamma(2a)` and `k3 = Gamma(a)/Gamma(3a)`. These are
/// the leading non-smooth terms of `F` at `tau = t`, `t - h` and `t - 2h`;
/// every integral of `K` is evaluated exactly and only the remainder `R`
/// goes through the product rules.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalMatrix {
    t_index: usize,
    n: usize,
    dt: f64,
    values: Vec<f64>,
    regular: Vec<f64>,
    parts: Parts,
}

/// Coefficient matrices of `K`, row-major.
#[derive(Debug, Clone, PartialEq)]
struct Parts {
    diag: Vec<f64>,
    lag1: Vec<f64>,
    lag1b: Vec<f64>,
    lag2: Vec<f64>,
}

impl Parts {
    fn at(k: usize, m: usize, coef: &Coefficients) -> Self {
        let n = coef.n;
        let nn = n * n;
        let back = k.saturating_sub(m);
        let mut diag = vec![0.0; nn];
        matmul(n, coef.a(k), coef.a(k), &mut diag);
        let mut lag1b = vec![0.0; nn];
        let mut tmp = vec![0.0; nn];
        matmul(n, coef.a(k), coef.b(k), &mut lag1b);
        matmul(n, coef.b(k), coef.a(back), &mut tmp);
        axpy(1.0, &tmp, &mut lag1b);
        let mut lag2 = vec![0.0; nn];
        matmul(n, coef.b(k), coef.b(back), &mut lag2);
        Self {
            diag,
            lag1: coef.b(k).to_vec(),
            lag1b,
            lag2,
        }
    }

    /// `K` at the node `span` steps before `t`.
    fn value(&self, span: usize, m: usize, dt: f64, tab: &Tables) -> Vec<f64> {
        let a = tab.alpha;
        let x = span as f64 * dt;
        let mut out: Vec<f64> = self.diag.iter().map(|v| tab.kappa3 * x.powf(2.0 * a) * v).collect();
        let lead = x.powf(1.0 - a);
        if span > m {
            let l1 = (span - m) as f64 * dt;
            axpy(lead * tab.kappa2 * l1.powf(2.0 * a - 1.0), &self.lag1, &mut out);
            axpy(lead * tab.kappa3 * l1.powf(3.0 * a - 1.0), &self.lag1b, &mut out);
        }
        if span > 2 * m {
            let l2 = (span - 2 * m) as f64 * dt;
            axpy(lead * tab.kappa3 * l2.powf(3.0 * a - 1.0), &self.lag2, &mut out);
        }
        out
    }
}

impl FundamentalMatrix {
    pub fn t_index(&self) -> usize {
        self.t_index
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `F(t, tau_j)`.
    pub fn at(&self, j: usize) -> Matrix {
        let nn = self.n * self.n;
        Matrix::from_row_slice(self.n, self.n, &self.values[j * nn..(j + 1) * nn])
    }

    fn flat(&self, j: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.values[j * nn..(j + 1) * nn]
    }

    fn regular(&self, j: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.regular[j * nn..(j + 1) * nn]
    }

    pub fn to_table(&self) -> Table {
        let mut header = vec!["tau".to_string()];
        for r in 1..=self.n {
            for c in 1..=self.n {
                header.push(format!("F_{r}{c}"));
            }
        }
        let mut t = Table::new("fundamental", header);
        t.comment(format!("t = {}", crate::export::fmt12(self.t_index as f64 * self.dt)));
        for j in 0..=self.t_index {
            let mut row = vec![j as f64 * self.dt];
            row.extend_from_slice(self.flat(j));
            t.push_numbers(&row);
        }
        t
    }
}

/// Coefficients sampled at the grid nodes, row-major.
struct Coefficients {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Coefficients {
    fn sample(grid: &TimeGrid, n: usize, a: &dyn Fn(f64) -> Matrix, b: &dyn Fn(f64) -> Matrix) -> Result<Self> {
        let mut out = Self {
            n,
            a: Vec::with_capacity((grid.steps() + 1) * n * n),
            b: Vec::with_capacity((grid.steps() + 1) * n * n),
        };
        for t in grid.nodes() {
            for (m, dst) in [(a(t), &mut out.a), (b(t), &mut out.b)] {
                if m.nrows() != n || m.ncols() != n {
                    return Err(Error::Shape(format!("coefficient at t = {t} is not {n}x{n}")));
                }
                dst.extend(m.transpose().iter());
            }
        }
        Ok(out)
    }

    fn a(&self, j: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.a[j * nn..(j + 1) * nn]
    }

    fn b(&self, j: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.b[j * nn..(j + 1) * nn]
    }

    /// `a + b` at node `j`, with `b` switched off before `h` for a zero
    /// history; `left` asks for the limit from the left at node `j`.
    fn homogeneous(&self, j: usize, m: usize, mode: HistoryMode, left: bool) -> Vec<f64> {
        let on = match mode {
            HistoryMode::ConstantInitial => true,
            HistoryMode::Zero => j > m || (j == m && !left),
        };
        let mut out = self.a(j).to_vec();
        if on {
            axpy(1.0, self.b(j), &mut out);
        }
        out
    }
}

/// Quadrature tables shared by every evaluation time on one grid.
struct Tables {
    alpha: f64,
    gamma_a: f64,
    kappa2: f64,
    kappa3: f64,
    /// `(t - s)^(a-1) (s - tau)^(a-1)`, graded towards `t`
    double: DoubleKernelTable,
    /// `(s - tau)^(a-1) (c - s)^(2a-1)`, linear
    singular2: DoubleKernelTable,
    /// `(s - tau)^(a-1) (c - s)^(3a-1)`, linear
    singular3: DoubleKernelTable,
    /// `(t - s)^(a-1)`, graded towards `t`
    riesz: RieszTable,
    /// `(c - s)^(2a-1)` and `(c - s)^(3a-1)`, linear
    riesz2: RieszTable,
    riesz3: RieszTable,
}

impl Tables {
    fn new(grid: &TimeGrid, alpha: Order, max_span: usize) -> Self {
        let a = alpha.value();
        let dt = grid.dt();
        Self {
            alpha: a,
            gamma_a: gamma(a),
            kappa2: gamma(a) / gamma(2.0 * a),
            kappa3: gamma(a) / gamma(3.0 * a),
            double: DoubleKernelTable::new(dt, alpha, max_span),
            singular2: DoubleKernelTable::linear(dt, a, 2.0 * a, max_span),
            singular3: DoubleKernelTable::linear(dt, a, 3.0 * a, max_span),
            riesz: RieszTable::graded(dt, max_span, a, a),
            riesz2: RieszTable::with_len(dt, max_span, 2.0 * a),
            riesz3: RieszTable::with_len(dt, max_span, 3.0 * a),
        }
    }
}

fn matmul(n: usize, x: &[f64], y: &[f64], out: &mut [f64]) {
    for r in 0..n {
        for c in 0..n {
            out[r * n + c] = (0..n).map(|k| x[r * n + k] * y[k * n + c]).sum();
        }
    }
}

fn axpy(alpha: f64, x: &[f64], acc: &mut [f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += alpha * v;
    }
}

fn identity(n: usize) -> Vec<f64> {
    (0..n * n).map(|i| if i % (n + 1) == 0 { 1.0 } else { 0.0 }).collect()
}

/// `int (s - s0)^(a-1) (s1 - s)^(q-1) c(s) ds` over `span` cells starting
/// at node `first` (so `s1` is node `first + span`), for node-sampled
/// matrices `c`.
fn singular_integral<'c>(table: &DoubleKernelTable, span: usize, first: usize, c: &dyn Fn(usize) -> &'c [f64], nn: usize) -> Vec<f64> {
    let mut acc = vec![0.0; nn];
    for (q, &(l, r)) in table.row(span).iter().enumerate() {
        axpy(l, c(first + q), &mut acc);
        axpy(r, c(first + q + 1), &mut acc);
    }
    acc.iter_mut().for_each(|x| *x *= table.scale());
    acc
}

/// `acc += weight * left * right` for square matrices.
fn add_product(n: usize, weight: f64, left: &[f64], right: &[f64], acc: &mut [f64]) {
    for r in 0..n {
        for c in 0..n {
            let v: f64 = (0..n).map(|k| left[r * n + k] * right[k * n + c]).sum();
            acc[r * n + c] += weight * v;
        }
    }
}

/// Backward march for `F(t_k, .)`.
fn march(k: usize, grid: &TimeGrid, coef: &Coefficients, tab: &Tables) -> Result<FundamentalMatrix> {
    let n = coef.n;
    let nn = n * n;
    let m = grid.delay_steps();
    let alpha = tab.alpha;
    let t = grid.node(k);
    let eye = identity(n);
    let parts = Parts::at(k, m, coef);
    let mut values = vec![0.0; (k + 1) * nn];
    let mut regular = vec![0.0; (k + 1) * nn];
    let mut ra = vec![0.0; (k + 1) * nn];
    let mut rb = vec![0.0; (k + 1) * nn];

    values[k * nn..].copy_from_slice(&eye);
    regular[k * nn..].copy_from_slice(&eye);
    ra[k * nn..].copy_from_slice(coef.a(k));
    rb[k * nn..].copy_from_slice(coef.b(k));

    let ca = |i: usize| coef.a(i);
    let cb = |i: usize| coef.b(i);
    let (s2, s3) = (&tab.singular2, &tab.singular3);
    let mut acc = vec![0.0; nn];
    let mut lift = vec![0.0; nn];
    for j in (0..k).rev() {
        let span = k - j;
        let row = tab.double.row(span);
        acc.iter_mut().for_each(|x| *x = 0.0);
        for (q, &(l, r)) in row.iter().enumerate() {
            let s = j + q;
            if q > 0 {
                axpy(l, &ra[s * nn..(s + 1) * nn], &mut acc);
            }
            axpy(r, &ra[(s + 1) * nn..(s + 2) * nn], &mut acc);
        }
        if span > m {
            for (q, &(l, r)) in tab.double.row(span - m).iter().enumerate() {
                let s = j + m + q;
                axpy(l, &rb[s * nn..(s + 1) * nn], &mut acc);
                axpy(r, &rb[(s + 1) * nn..(s + 2) * nn], &mut acc);
            }
        }
        let p = (t - grid.node(j)).powf(1.0 - alpha) / tab.gamma_a;
        let ps = p * tab.double.scale();
        let mut rhs = eye.clone();
        axpy(ps, &acc, &mut rhs);

        // K against both kernels; (t - s)^(a-1) cancels the x^(1-a) factors
        lift.iter_mut().for_each(|x| *x = 0.0);
        let (k2, k3) = (tab.kappa2, tab.kappa3);
        add_product(n, k3, &parts.diag, &singular_integral(s3, span, j, &ca, nn), &mut lift);
        if span > m {
            add_product(n, k3, &parts.diag, &singular_integral(s3, span - m, j + m, &cb, nn), &mut lift);
            add_product(n, k2, &parts.lag1, &singular_integral(s2, span - m, j, &ca, nn), &mut lift);
            add_product(n, k3, &parts.lag1b, &singular_integral(s3, span - m, j, &ca, nn), &mut lift);
        }
        if span > 2 * m {
            add_product(n, k2, &parts.lag1, &singular_integral(s2, span - 2 * m, j + m, &cb, nn), &mut lift);
            add_product(n, k3, &parts.lag1b, &singular_integral(s3, span - 2 * m, j + m, &cb, nn), &mut lift);
            add_product(n, k3, &parts.lag2, &singular_integral(s3, span - 2 * m, j, &ca, nn), &mut lift);
        }
        if span > 3 * m {
            add_product(n, k3, &parts.lag2, &singular_integral(s3, span - 3 * m, j + m, &cb, nn), &mut lift);
        }
        axpy(p, &lift, &mut rhs);

        // the product rule sees only R = F - K at the unknown's own node
        let l0 = row[0].0;
        let known = parts.value(span, m, grid.dt(), tab);
        add_product(n, -ps * l0, &known, coef.a(j), &mut rhs);

        // F_j (E - ps l0 a_j) = rhs
        let block = DMatrix::from_fn(n, n, |r, c| eye[r * n + c] - ps * l0 * coef.a(j)[r * n + c]);
        let inv = block.try_inverse().ok_or(Error::SingularBlock { node: j })?;
        let fj = DMatrix::from_row_slice(n, n, &rhs) * inv;
        if fj.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularBlock { node: j });
        }
        let fj_flat: Vec<f64> = fj.transpose().iter().copied().collect();
        let mut rj = fj_flat.clone();
        axpy(-1.0, &known, &mut rj);
        matmul(n, &rj, coef.a(j), &mut ra[j * nn..(j + 1) * nn]);
        matmul(n, &rj, coef.b(j), &mut rb[j * nn..(j + 1) * nn]);
        values[j * nn..(j + 1) * nn].copy_from_slice(&fj_flat);
        regular[j * nn..(j + 1) * nn].copy_from_slice(&rj);
    }
    Ok(FundamentalMatrix {
        t_index: k,
        n,
        dt: grid.dt(),
        values,
        regular,
        parts,
    })
}

/// `F(t_k, tau_j)` for all `tau_j <= t_k`.
pub fn solve_f(
    t_index: usize,
    a: &dyn Fn(f64) -> Matrix,
    b: &dyn Fn(f64) -> Matrix,
    alpha: Order,
    grid: &TimeGrid,
) -> Result<FundamentalMatrix> {
    if t_index == 0 || t_index > grid.steps() {
        return Err(Error::Domain(format!(
            "evaluation index must lie in 1..={}, got {t_index}",
            grid.steps()
        )));
    }
    let n = a(0.0).nrows();
    let coef = Coefficients::sample(grid, n, a, b)?;
    let tab = Tables::new(grid, alpha, t_index);
    march(t_index, grid, &coef, &tab)
}

/// `(1/Gamma(a)) int_0^t (t - s)^(a-1) F(t, s) phi(s) ds` for node-sampled
/// `phi` with `cols` columns; `phi(j, left)` gives the value at node `j`
/// (from the left when `left`).
fn apply_integral(fm: &FundamentalMatrix, grid: &TimeGrid, tab: &Tables, cols: usize, phi: &dyn Fn(usize, bool) -> Vec<f64>) -> Vec<f64> {
    let n = fm.n;
    let k = fm.t_index;
    let m = grid.delay_steps();
    let mut out = vec![0.0; n * cols];
    let mut tmp = vec![0.0; n * cols];
    let mul = |x: &[f64], y: &[f64], out: &mut [f64]| {
        for r in 0..n {
            for c in 0..cols {
                out[r * cols + c] = (0..n).map(|i| x[r * n + i] * y[i * cols + c]).sum();
            }
        }
    };
    let c = tab.riesz.scale() / tab.gamma_a;
    for j in 0..k {
        let (l, r) = tab.riesz.cell(k - j);
        mul(fm.regular(j), &phi(j, false), &mut tmp);
        axpy(c * l, &tmp, &mut out);
        mul(fm.regular(j + 1), &phi(j + 1, true), &mut tmp);
        axpy(c * r, &tmp, &mut out);
    }
    // each piece of K times (t - s)^(a-1) is a plain Riesz kernel ending at node `end`
    let mut term = |end: usize, table: &RieszTable, weight: f64, coefm: &[f64]| {
        let mut acc = vec![0.0; n * cols];
        for j in 0..end {
            let (l, r) = table.cell(end - j);
            axpy(l, &phi(j, false), &mut acc);
            axpy(r, &phi(j + 1, true), &mut acc);
        }
        mul(coefm, &acc, &mut tmp);
        axpy(table.scale() * weight / tab.gamma_a, &tmp, &mut out);
    };
    term(k, &tab.riesz3, tab.kappa3, &fm.parts.diag);
    if k > m {
        term(k - m, &tab.riesz2, tab.kappa2, &fm.parts.lag1);
        term(k - m, &tab.riesz3, tab.kappa3, &fm.parts.lag1b);
    }
    if k > 2 * m {
        term(k - 2 * m, &tab.riesz3, tab.kappa3, &fm.parts.lag2);
    }
    out
}

fn f1_flat(fm: &FundamentalMatrix, grid: &TimeGrid, coef: &Coefficients, tab: &Tables, mode: HistoryMode) -> Vec<f64> {
    let m = grid.delay_steps();
    let mut out = identity(fm.n);
    let integral = apply_integral(fm, grid, tab, fm.n, &|j, left| coef.homogeneous(j, m, mode, left));
    axpy(1.0, &integral, &mut out);
    out
}

/// `F1(t_k) = E + (1/Gamma(a)) int_0^t (t - s)^(a-1) F(t, s) [a(s) + b(s)] ds`,
/// with `b` restricted to `s >= h` for a zero history.
pub fn solve_f1(
    fm: &FundamentalMatrix,
    a: &dyn Fn(f64) -> Matrix,
    b: &dyn Fn(f64) -> Matrix,
    alpha: Order,
    grid: &TimeGrid,
    mode: HistoryMode,
) -> Result<Matrix> {
    if fm.t_index > grid.steps() || (fm.dt - grid.dt()).abs() > 1e-15 {
        return Err(Error::Shape("fundamental matrix does not belong to this grid".into()));
    }
    let coef = Coefficients::sample(grid, fm.n, a, b)?;
    let tab = Tables::new(grid, alpha, fm.t_index);
    let flat = f1_flat(fm, grid, &coef, &tab, mode);
    Ok(Matrix::from_row_slice(fm.n, fm.n, &flat))
}

/// Solution of `D^a y = A0 y + A1 y(t - h) + forcing` assembled node by node
/// from the representation formula. `forcing` holds one vector per node.
pub fn representation_solution(
    lin: &LinearDelay,
    forcing: &[Vector],
    y0: &Vector,
    alpha: Order,
    grid: &TimeGrid,
    mode: HistoryMode,
) -> Result<Trajectory> {
    let n = lin.a0.nrows();
    if forcing.len() != grid.steps() + 1 || forcing.iter().any(|f| f.len() != n) || y0.len() != n {
        return Err(Error::Shape(format!(
            "representation needs {} forcing vectors and y0 of dimension {n}",
            grid.steps() + 1
        )));
    }
    let (a0, a1) = (lin.a0.clone(), lin.a1.clone());
    let coef = Coefficients::sample(grid, n, &|_| a0.clone(), &|_| a1.clone())?;
    let tab = Tables::new(grid, alpha, grid.steps());
    let mut states = vec![y0.clone()];
    for k in 1..=grid.steps() {
        let fm = march(k, grid, &coef, &tab)?;
        let f1 = Matrix::from_row_slice(n, n, &f1_flat(&fm, grid, &coef, &tab, mode));
        let forced = apply_integral(&fm, grid, &tab, 1, &|j, _| forcing[j].as_slice().to_vec());
        states.push(&f1 * y0 + Vector::from_vec(forced));
    }
    let history = match mode {
        HistoryMode::Zero => HistorySegment::zero(n, grid),
        HistoryMode::ConstantInitial => HistorySegment::constant(y0.clone(), y0.clone(), grid),
    };
    Ok(Trajectory::from_states(*grid, history, &states))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero2(_: f64) -> Matrix {
        Matrix::zeros(2, 2)
    }

    #[test]
    fn zero_coefficients_give_identity() {
        let grid = TimeGrid::new(1.0, 0.25, 40).unwrap();
        let alpha = Order::new(0.5).unwrap();
        let fm = solve_f(40, &zero2, &zero2, alpha, &grid).unwrap();
        for j in 0..=40 {
            assert_eq!(fm.at(j), Matrix::identity(2, 2));
        }
        let f1 = solve_f1(&fm, &zero2, &zero2, alpha, &grid, HistoryMode::Zero).unwrap();
        assert_eq!(f1, Matrix::identity(2, 2));
    }

    #[test]
    fn endpoint_is_identity() {
        let grid = TimeGrid::new(1.0, 0.25, 20).unwrap();
        let a = |_: f64| Matrix::from_row_slice(2, 2, &[0.3, -1.0, 0.5, 0.2]);
        let b = |_: f64| Matrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, -0.4]);
        let fm = solve_f(13, &a, &b, Order::new(0.6).unwrap(), &grid).unwrap();
        assert_eq!(fm.at(13), Matrix::identity(2, 2));
        assert!(solve_f(0, &a, &b, Order::new(0.6).unwrap(), &grid).is_err());
    }

    #[test]
    fn delay_term_inactive_within_one_delay() {
        // with t - tau <= h the b-integral is empty, so b has no effect there
        let grid = TimeGrid::new(1.0, 0.5, 40).unwrap();
        let alpha = Order::new(0.5).unwrap();
        let a = |_: f64| Matrix::from_element(1, 1, 0.8);
        let b0 = |_: f64| Matrix::zeros(1, 1);
        let b1 = |_: f64| Matrix::from_element(1, 1, -3.0);
        let f0 = solve_f(40, &a, &b0, alpha, &grid).unwrap();
        let f1 = solve_f(40, &a, &b1, alpha, &grid).unwrap();
        for j in 20..=40 {
            assert_eq!(f0.at(j), f1.at(j));
        }
        assert!((f0.at(0)[(0, 0)] - f1.at(0)[(0, 0)]).abs() > 1e-3);
    }

    #[test]
    fn strictly_lower_triangular_structure_is_kept() {
        let grid = TimeGrid::new(1.0, 0.25, 40).unwrap();
        let alpha = Order::new(0.5).unwrap();
        let a = |_: f64| Matrix::from_row_slice(2, 2, &[0.0, 0.0, 1.3, 0.0]);
        let fm = solve_f(40, &a, &zero2, alpha, &grid).unwrap();
        let f1 = solve_f1(&fm, &a, &zero2, alpha, &grid, HistoryMode::ConstantInitial).unwrap();
        assert_eq!(f1[(0, 0)], 1.0);
        assert_eq!(f1[(1, 1)], 1.0);
        assert_eq!(f1[(0, 1)], 0.0);
        assert!(f1[(1, 0)] > 0.0);
    }

    #[test]
    fn csv_has_flattened_columns() {
        let grid = TimeGrid::new(1.0, 0.5, 2).unwrap();
        let fm = solve_f(2, &zero2, &zero2, Order::new(0.5).unwrap(), &grid).unwrap();
        let text = fm.to_table().to_string();
        assert!(text.contains("tau,F_11,F_12,F_21,F_22\n0,1,0,0,1\n"), "{text}");
    }
}
