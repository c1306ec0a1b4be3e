//! Browser bindings. Every entry point takes the example name, the order,
//! the number of steps and a constant control value, and returns a JSON
//! string the page plots directly.

use fracopt::adjoint::solve_adjoint;
use fracopt::cli::{example1_psi2, example2_cost};
use fracopt::conditions::{check_conditions, Process, Scan, Tolerances};
use fracopt::forward::{evaluate_cost, solve_fdde, Trajectory};
use fracopt::problem::{builtin_example, Vector};
use fracopt::{ControlSignal, Example, Order, ProblemSpec};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Upper bound on `N`; the condition screen is quadratic in it.
pub const MAX_STEPS: usize = 4000;

struct Setup {
    example: Example,
    alpha: f64,
    spec: ProblemSpec,
    u: ControlSignal,
    traj: Trajectory,
}

fn setup(example: &str, alpha: f64, steps: usize, control: f64) -> fracopt::Result<Setup> {
    if steps > MAX_STEPS {
        return Err(fracopt::Error::Domain(format!("N is capped at {MAX_STEPS} in the demo")));
    }
    let ex: Example = example.parse()?;
    let spec = builtin_example(ex, Order::new(alpha)?, steps)?;
    let u = ControlSignal::constant(steps, Vector::from_element(1, control));
    let traj = solve_fdde(&spec, &u)?;
    Ok(Setup {
        example: ex,
        alpha,
        spec,
        u,
        traj,
    })
}

fn times(spec: &ProblemSpec) -> Vec<f64> {
    spec.grid.nodes().collect()
}

/// States and cost under the constant control.
pub fn trajectory_json(example: &str, alpha: f64, steps: usize, control: f64) -> fracopt::Result<Value> {
    let s = setup(example, alpha, steps, control)?;
    let cost = evaluate_cost(&s.spec, &s.traj, &s.u)?;
    let reference = match s.example {
        Example::Ex2 if control == -0.5 => Some(example2_cost(s.alpha)),
        _ => None,
    };
    Ok(json!({
        "t": times(&s.spec),
        "y": (0..s.traj.dim()).map(|k| s.traj.component(k)).collect::<Vec<_>>(),
        "cost": cost,
        "reference_cost": reference,
    }))
}

/// Adjoint path; for the first example the closed form of the second
/// component is attached where it applies (`t < 1/2`).
pub fn adjoint_json(example: &str, alpha: f64, steps: usize, control: f64) -> fracopt::Result<Value> {
    let s = setup(example, alpha, steps, control)?;
    let psi = solve_adjoint(&s.spec, &s.traj, &s.u)?;
    let t = times(&s.spec);
    let reference: Option<Vec<Option<f64>>> = match s.example {
        Example::Ex1 => Some(
            t.iter()
                .map(|&x| (x < 0.5).then(|| example1_psi2(s.alpha, x)))
                .collect(),
        ),
        Example::Ex2 => None,
    };
    Ok(json!({
        "t": t,
        "psi": (0..psi.dim()).map(|k| psi.component(k)).collect::<Vec<_>>(),
        "reference_psi2": reference,
    }))
}

/// First- and second-order screening of the constant control.
pub fn screen_json(example: &str, alpha: f64, steps: usize, control: f64) -> fracopt::Result<Value> {
    let s = setup(example, alpha, steps, control)?;
    let psi = solve_adjoint(&s.spec, &s.traj, &s.u)?;
    let process = Process::new(&s.spec, &s.traj, &s.u, &psi)?;
    let scan = Scan {
        points: 41,
        ..Scan::default()
    };
    let report = check_conditions(&process, &scan, &Tolerances::default());
    let second: Vec<Option<f64>> = report.second.max.iter().map(|m| m.as_ref().map(|(v, _)| *v)).collect();
    Ok(json!({
        "t": report.times,
        "gap": report.first.gap,
        "singular": report.singularity.singular,
        "second": second,
        "verdict": report.verdict().reason(),
        "pmp_satisfied": report.pmp_satisfied(),
        "singular_everywhere": report.singular_everywhere(),
        "second_order_satisfied": report.second_order_satisfied(),
        "summary": report.summary(),
    }))
}

fn to_js(v: fracopt::Result<Value>) -> Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn trajectory(example: &str, alpha: f64, steps: usize, control: f64) -> Result<String, JsError> {
    to_js(trajectory_json(example, alpha, steps, control))
}

#[wasm_bindgen]
pub fn adjoint(example: &str, alpha: f64, steps: usize, control: f64) -> Result<String, JsError> {
    to_js(adjoint_json(example, alpha, steps, control))
}

#[wasm_bindgen]
pub fn screen(example: &str, alpha: f64, steps: usize, control: f64) -> Result<String, JsError> {
    to_js(screen_json(example, alpha, steps, control))
}
