//! Pointwise necessary-condition screens along a solved process: the
//! maximum condition, the singularity test and the second-order inequality
//! for singular controls.

use crate::adjoint::{hamiltonian, hamiltonian_y, hamiltonian_yh, AdjointPath};
use crate::error::{Error, Result};
use crate::export::{fmt12, indexed, Table};
use crate::forward::Trajectory;
use crate::problem::{ControlSignal, ProblemSpec, Vector};

/// Quantities that admit a control increment `Delta_v g = g(.., v) - g(.., u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Hamiltonian,
    HamiltonianY,
    HamiltonianYh,
    Dynamics,
}

/// A trajectory, its control and its adjoint, checked for consistency.
#[derive(Clone, Copy)]
pub struct Process<'a> {
    pub spec: &'a ProblemSpec,
    pub traj: &'a Trajectory,
    pub u: &'a ControlSignal,
    pub psi: &'a AdjointPath,
}

impl<'a> Process<'a> {
    pub fn new(
        spec: &'a ProblemSpec,
        traj: &'a Trajectory,
        u: &'a ControlSignal,
        psi: &'a AdjointPath,
    ) -> Result<Self> {
        if traj.grid() != &spec.grid || psi.grid() != &spec.grid {
            return Err(Error::Shape("trajectory or adjoint on a different grid".into()));
        }
        if traj.dim() != spec.n() || psi.dim() != spec.n() {
            return Err(Error::Shape("state dimension mismatch".into()));
        }
        if u.cells() != spec.grid.steps() || u.dim() != spec.r() {
            return Err(Error::Shape("control does not match the problem".into()));
        }
        Ok(Self { spec, traj, u, psi })
    }

    fn eval(&self, q: Quantity, i: usize, v: &[f64]) -> Vector {
        let t = self.spec.grid.node(i);
        let (y, yh, psi) = (self.traj.state(i), self.traj.delayed(i), self.psi.psi(i));
        match q {
            Quantity::Hamiltonian => Vector::from_element(1, hamiltonian(self.spec, t, y, yh, v, psi)),
            Quantity::HamiltonianY => hamiltonian_y(self.spec, t, y, yh, v, psi),
            Quantity::HamiltonianYh => hamiltonian_yh(self.spec, t, y, yh, v, psi),
            Quantity::Dynamics => self.spec.dynamics.eval(t, y, yh, v),
        }
    }

    /// `Delta_v g` at node `i`. For [`Quantity::Hamiltonian`] the result has
    /// length one.
    pub fn delta_v(&self, q: Quantity, i: usize, v: &[f64]) -> Vector {
        let base = self.u.at_node(i).as_slice();
        self.eval(q, i, v) - self.eval(q, i, base)
    }

    fn delta_h(&self, i: usize, v: &[f64]) -> f64 {
        self.delta_v(Quantity::Hamiltonian, i, v)[0]
    }

    /// Left side of the second-order inequality at node `i < N` for spike
    /// value `v`.
    pub fn second_order_form(&self, i: usize, v: &[f64]) -> f64 {
        let grid = &self.spec.grid;
        let steps = grid.steps();
        let m = grid.delay_steps();
        let a = self.spec.alpha.value();
        let t = grid.node(i);
        let df = self.delta_v(Quantity::Dynamics, i, v);
        let mut s = (grid.horizon() - t).powf(a - 1.0) * self.delta_v(Quantity::HamiltonianY, i, v).dot(&df);
        if i + m < steps {
            // the control argument of H_yh at t + h is replaced by v as well
            let k = i + m;
            let base = self.u.at_node(k).as_slice();
            let dh = self.eval(Quantity::HamiltonianYh, k, v) - self.eval(Quantity::HamiltonianYh, k, base);
            s += (grid.horizon() - t - grid.delay()).powf(a - 1.0) * dh.dot(&df);
        }
        s
    }

    /// `max_i |H(t_i, .., u(t_i), Psi(t_i))|`.
    pub fn max_abs_hamiltonian(&self) -> f64 {
        (0..=self.spec.grid.steps())
            .map(|i| self.eval(Quantity::Hamiltonian, i, self.u.at_node(i).as_slice())[0].abs())
            .fold(0.0, f64::max)
    }
}

/// How the control set is searched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scan {
    /// Points per control dimension in the coarse scan.
    pub points: usize,
    /// Golden-section refinement around the best scan point.
    pub refine: bool,
    /// Coordinate sweeps for vector controls.
    pub sweeps: usize,
}

impl Default for Scan {
    fn default() -> Self {
        Self {
            points: 201,
            refine: true,
            sweeps: 8,
        }
    }
}

const GOLDEN_ITERS: usize = 80;

fn golden(lo: f64, hi: f64, f: &dyn Fn(f64) -> f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Best point of `f` on `[lo, hi]`, starting from the given candidates
/// (earlier candidates win ties).
fn scan_line(lo: f64, hi: f64, seeds: &[f64], scan: &Scan, f: &dyn Fn(f64) -> f64) -> (f64, f64) {
    let mut best = (seeds[0], f(seeds[0]));
    for &s in &seeds[1..] {
        let val = f(s);
        if val > best.1 {
            best = (s, val);
        }
    }
    if hi <= lo {
        return best;
    }
    let p = scan.points.max(2);
    let step = (hi - lo) / (p - 1) as f64;
    let mut best_k = None;
    for k in 0..p {
        let x = if k + 1 == p { hi } else { lo + k as f64 * step };
        let val = f(x);
        if val > best.1 {
            best = (x, val);
            best_k = Some(k);
        }
    }
    if scan.refine {
        if let Some(k) = best_k {
            let a = (lo + (k as f64 - 1.0) * step).max(lo);
            let b = (lo + (k as f64 + 1.0) * step).min(hi);
            let cand = golden(a, b, f);
            if cand.1 > best.1 {
                best = cand;
            }
        }
    }
    best
}

/// Maximize `f` over the box `[lo, hi]`; `start` is always a candidate.
pub fn maximize(lo: &[f64], hi: &[f64], start: &[f64], scan: &Scan, f: &dyn Fn(&[f64]) -> f64) -> (f64, Vector) {
    let r = lo.len();
    if r == 1 {
        let (x, val) = scan_line(lo[0], hi[0], &[start[0]], scan, &|x| f(&[x]));
        return (val, Vector::from_element(1, x));
    }
    let mut x = start.to_vec();
    let mut best = f(&x);
    let consider = |cand: Vec<f64>, x: &mut Vec<f64>, best: &mut f64| {
        let val = f(&cand);
        if val > *best {
            *best = val;
            *x = cand;
        }
    };
    consider(lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(), &mut x, &mut best);
    if r <= 10 {
        for mask in 0..(1usize << r) {
            let v = (0..r).map(|k| if mask >> k & 1 == 1 { hi[k] } else { lo[k] }).collect();
            consider(v, &mut x, &mut best);
        }
    }
    for _ in 0..scan.sweeps {
        let before = best;
        for k in 0..r {
            let base = x.clone();
            let g = |s: f64| {
                let mut p = base.clone();
                p[k] = s;
                f(&p)
            };
            let (s, val) = scan_line(lo[k], hi[k], &[base[k]], scan, &g);
            if val > best {
                best = val;
                x[k] = s;
            }
        }
        if best <= before {
            break;
        }
    }
    (best, Vector::from_vec(x))
}

/// Tolerances of the three screens. `None` selects `1e-6 (1 + max |H|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub pmp: Option<f64>,
    pub sing: Option<f64>,
    pub second: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            pmp: None,
            sing: None,
            second: 1e-8,
        }
    }
}

impl Tolerances {
    fn resolve(&self, max_h: f64) -> (f64, f64, f64) {
        let rel = 1e-6 * (1.0 + max_h);
        (self.pmp.unwrap_or(rel), self.sing.unwrap_or(rel), self.second)
    }
}

/// Maximum-condition gaps per node.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrder {
    pub gap: Vec<f64>,
    pub argmax: Vec<Vector>,
    pub tol: f64,
    pub satisfied: bool,
}

pub fn check_pmp(p: &Process, scan: &Scan, tol: f64) -> FirstOrder {
    let set = &p.spec.controls;
    let mut gap = Vec::new();
    let mut argmax = Vec::new();
    for i in 0..=p.spec.grid.steps() {
        let u = p.u.at_node(i).as_slice();
        let (g, v) = maximize(set.lower().as_slice(), set.upper().as_slice(), u, scan, &|v| p.delta_h(i, v));
        gap.push(g.max(0.0));
        argmax.push(v);
    }
    let satisfied = gap.iter().all(|&g| g <= tol);
    FirstOrder {
        gap,
        argmax,
        tol,
        satisfied,
    }
}

/// Singularity flags per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Singularity {
    pub max_abs_delta: Vec<f64>,
    pub singular: Vec<bool>,
    pub tol: f64,
    pub everywhere: bool,
}

pub fn check_singular(p: &Process, scan: &Scan, tol: f64) -> Singularity {
    let set = &p.spec.controls;
    let max_abs_delta: Vec<f64> = (0..=p.spec.grid.steps())
        .map(|i| {
            let u = p.u.at_node(i).as_slice();
            maximize(set.lower().as_slice(), set.upper().as_slice(), u, scan, &|v| p.delta_h(i, v).abs()).0
        })
        .collect();
    let singular: Vec<bool> = max_abs_delta.iter().map(|&d| d <= tol).collect();
    let everywhere = singular.iter().all(|&s| s);
    Singularity {
        max_abs_delta,
        singular,
        tol,
        everywhere,
    }
}

/// Second-order maxima per node; the terminal node has no entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrder {
    pub max: Vec<Option<(f64, Vector)>>,
    pub tol: f64,
    /// Worst value over singular nodes.
    pub worst: f64,
    pub satisfied: bool,
    /// True when no node is singular, so the screen carries no verdict.
    pub advisory: bool,
}

pub fn check_second_order(p: &Process, scan: &Scan, tol: f64, singularity: &Singularity) -> SecondOrder {
    let set = &p.spec.controls;
    let steps = p.spec.grid.steps();
    let mut max = Vec::with_capacity(steps + 1);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..steps {
        let u = p.u.at_node(i).as_slice();
        let (s, v) = maximize(set.lower().as_slice(), set.upper().as_slice(), u, scan, &|v| {
            p.second_order_form(i, v)
        });
        if singularity.singular[i] {
            worst = worst.max(s);
        }
        max.push(Some((s, v)));
    }
    max.push(None);
    let advisory = !singularity.singular[..steps].iter().any(|&s| s);
    SecondOrder {
        max,
        tol,
        worst,
        satisfied: advisory || worst <= tol,
        advisory,
    }
}

/// Outcome of the full screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Passed,
    FirstOrderViolated,
    SecondOrderViolated,
}

impl Verdict {
    pub fn reason(self) -> &'static str {
        match self {
            Verdict::Passed => "all necessary conditions hold",
            Verdict::FirstOrderViolated => "first-order maximum condition violated",
            Verdict::SecondOrderViolated => "second-order condition violated on singular control",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub times: Vec<f64>,
    pub first: FirstOrder,
    pub singularity: Singularity,
    pub second: SecondOrder,
    pub max_abs_hamiltonian: f64,
}

impl ConditionReport {
    pub fn pmp_satisfied(&self) -> bool {
        self.first.satisfied
    }

    pub fn singular_everywhere(&self) -> bool {
        self.singularity.everywhere
    }

    pub fn second_order_satisfied(&self) -> bool {
        self.second.satisfied
    }

    pub fn verdict(&self) -> Verdict {
        if !self.first.satisfied {
            Verdict::FirstOrderViolated
        } else if !self.second.satisfied {
            Verdict::SecondOrderViolated
        } else {
            Verdict::Passed
        }
    }

    /// Summary lines, also written as comments at the top of the CSV.
    pub fn summary(&self) -> Vec<String> {
        let max_gap = self.first.gap.iter().copied().fold(0.0, f64::max);
        vec![
            format!("verdict = {}", self.verdict().reason()),
            format!("pmp_satisfied = {}", self.first.satisfied),
            format!("singular_everywhere = {}", self.singularity.everywhere),
            format!(
                "second_order_satisfied = {}{}",
                self.second.satisfied,
                if self.second.advisory { " (advisory: no singular node)" } else { "" }
            ),
            format!("max_gap = {}", fmt12(max_gap)),
            format!("max_second_order = {}", fmt12(self.second.worst.max(f64::MIN))),
            format!("max_abs_H = {}", fmt12(self.max_abs_hamiltonian)),
            format!("tol_pmp = {}", fmt12(self.first.tol)),
            format!("tol_sing = {}", fmt12(self.singularity.tol)),
            format!("tol_2nd = {}", fmt12(self.second.tol)),
        ]
    }

    pub fn to_table(&self) -> Table {
        let r = self.first.argmax.first().map_or(1, |v| v.len());
        let (av, sv) = if r == 1 {
            (vec!["argmax_v".to_string()], vec!["S_argmax".to_string()])
        } else {
            (indexed("argmax_v", r), indexed("S_argmax", r))
        };
        let mut header = vec!["t".to_string(), "gap".to_string()];
        header.extend(av);
        header.push("singular".into());
        header.push("S_max".into());
        header.extend(sv);
        let mut table = Table::new("conditions", header);
        for line in self.summary() {
            table.comment(line);
        }
        for (i, &t) in self.times.iter().enumerate() {
            let mut row = vec![fmt12(t), fmt12(self.first.gap[i])];
            row.extend(self.first.argmax[i].iter().map(|&x| fmt12(x)));
            row.push(u8::from(self.singularity.singular[i]).to_string());
            match &self.second.max[i] {
                Some((s, v)) => {
                    row.push(fmt12(*s));
                    row.extend(v.iter().map(|&x| fmt12(x)));
                }
                None => row.extend(std::iter::repeat_n(String::new(), r + 1)),
            }
            table.push(row);
        }
        table
    }
}

/// Run all three screens.
pub fn check_conditions(p: &Process, scan: &Scan, tol: &Tolerances) -> ConditionReport {
    let max_h = p.max_abs_hamiltonian();
    let (tp, ts, t2) = tol.resolve(max_h);
    let first = check_pmp(p, scan, tp);
    let singularity = check_singular(p, scan, ts);
    let second = check_second_order(p, scan, t2, &singularity);
    ConditionReport {
        times: p.spec.grid.nodes().collect(),
        first,
        singularity,
        second,
        max_abs_hamiltonian: max_h,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::solve_adjoint;
    use crate::forward::solve_fdde;
    use crate::fracquad::{gamma, Order};
    use crate::problem::{builtin_example, ControlSet, Example};

    struct Solved {
        spec: ProblemSpec,
        traj: Trajectory,
        u: ControlSignal,
        psi: AdjointPath,
    }

    fn solved(ex: Example, alpha: f64, steps: usize) -> Solved {
        let spec = builtin_example(ex, Order::new(alpha).unwrap(), steps).unwrap();
        let u = spec.zero_control();
        let traj = solve_fdde(&spec, &u).unwrap();
        let psi = solve_adjoint(&spec, &traj, &u).unwrap();
        Solved { spec, traj, u, psi }
    }

    impl Solved {
        fn process(&self) -> Process<'_> {
            Process::new(&self.spec, &self.traj, &self.u, &self.psi).unwrap()
        }
    }

    #[test]
    fn delta_at_base_control_vanishes() {
        let s = solved(Example::Ex1, 0.5, 40);
        let p = s.process();
        for q in [Quantity::Hamiltonian, Quantity::HamiltonianY, Quantity::HamiltonianYh, Quantity::Dynamics] {
            assert!(p.delta_v(q, 7, &[0.0]).iter().all(|&x| x == 0.0));
        }
        assert_eq!(p.second_order_form(7, &[0.0]), 0.0);
    }

    #[test]
    fn example1_hamiltonian_increment() {
        let s = solved(Example::Ex1, 0.5, 40);
        let p = s.process();
        for i in [0, 5, 20] {
            let psi = s.psi.psi(i);
            let d = p.delta_v(Quantity::Hamiltonian, i, &[-0.4])[0];
            assert!((d - (psi[0] + psi[1]) * -0.4).abs() < 1e-14);
        }
    }

    #[test]
    fn example2_dynamics_increment() {
        let s = solved(Example::Ex2, 0.5, 40);
        let d = s.process().delta_v(Quantity::Dynamics, 10, &[0.7]);
        assert_eq!(d.as_slice(), &[0.7, 0.0]);
    }

    #[test]
    fn example1_gap_and_verdict() {
        let alpha = 0.5;
        let s = solved(Example::Ex1, alpha, 200);
        let rep = check_conditions(&s.process(), &Scan::default(), &Tolerances::default());
        assert_eq!(rep.verdict(), Verdict::FirstOrderViolated);
        assert!(!rep.singular_everywhere());
        let c = gamma(alpha) / gamma(2.0 * alpha);
        for i in 0..100 {
            let t = s.spec.grid.node(i);
            let expect = 1.0 + c * (1.0 - t).powf(1.0 - alpha) * (0.5 - t).powf(2.0 * alpha - 1.0);
            assert!((rep.first.gap[i] - expect).abs() < 1e-2, "t = {t}");
            assert_eq!(rep.first.argmax[i][0], -1.0);
            assert!(!rep.singularity.singular[i]);
        }
    }

    #[test]
    fn example2_singular_second_order_fails() {
        for alpha in [0.3, 0.5, 0.7] {
            let s = solved(Example::Ex2, alpha, 100);
            let p = s.process();
            let rep = check_conditions(&p, &Scan::default(), &Tolerances::default());
            assert!(rep.pmp_satisfied());
            assert!(rep.singular_everywhere());
            assert_eq!(rep.verdict(), Verdict::SecondOrderViolated);
            let grid = &s.spec.grid;
            for i in 0..grid.steps() - grid.delay_steps() {
                let t = grid.node(i);
                let expect = (1.0 - t - 0.5).powf(alpha - 1.0);
                let (smax, _) = rep.second.max[i].as_ref().unwrap();
                assert!((smax - expect).abs() < 1e-9 * expect, "alpha {alpha} t {t}");
                let v = 0.3;
                assert!((p.second_order_form(i, &[v]) - expect * v * v).abs() < 1e-12 * expect);
            }
        }
    }

    #[test]
    fn singleton_set_passes() {
        let mut s = solved(Example::Ex1, 0.5, 40);
        s.spec.controls = ControlSet::symmetric(1, 0.0);
        let rep = check_conditions(&s.process(), &Scan::default(), &Tolerances::default());
        assert_eq!(rep.verdict(), Verdict::Passed);
        assert!(rep.first.gap.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn maximizer_on_box() {
        let f = |v: &[f64]| -(v[0] - 0.3).powi(2) - (v[1] + 0.7).powi(2);
        let (val, x) = maximize(&[-1.0, -1.0], &[1.0, 1.0], &[0.0, 0.0], &Scan::default(), &f);
        assert!(val > -1e-12);
        assert!((x[0] - 0.3).abs() < 1e-6 && (x[1] + 0.7).abs() < 1e-6);
        let g = |v: &[f64]| -(v[0] - 0.123_456).powi(2);
        let (_, x) = maximize(&[-1.0], &[1.0], &[0.0], &Scan::default(), &g);
        assert!((x[0] - 0.123_456).abs() < 1e-7);
    }

    #[test]
    fn report_csv_layout() {
        let s = solved(Example::Ex2, 0.5, 20);
        let rep = check_conditions(&s.process(), &Scan::default(), &Tolerances::default());
        let text = rep.to_table().to_string();
        assert!(text.starts_with("# fracopt conditions v1\n# verdict = second-order"));
        assert!(text.contains("\nt,gap,argmax_v,singular,S_max,S_argmax\n"));
        assert!(text.trim_end().ends_with(",,"));
    }
}
