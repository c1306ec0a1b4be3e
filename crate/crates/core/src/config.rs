//! Plain-text problem configuration (TOML, schema version 1).
//!
//! ```toml
//! version = 1
//! alpha = 0.5
//! beta = 0.5          # optional, defaults to alpha
//! T = 1.0
//! h = 0.5
//! N = 200
//! n = 2
//! r = 1
//! y0 = [0.0, 0.0]     # optional, defaults to zeros
//! history = [0.0, 0.0] # optional constant history on [-h, 0)
//!
//! [dynamics]
//! kind = "linear_delay"   # or "bilinear_delay" / "builtin"
//! A0 = [0.0, 0.0, 0.0, 0.0]   # row-major n x n
//! A1 = [0.0, 1.0, 0.0, 0.0]
//! B = [1.0, 1.0]              # row-major n x r
//! c = [0.0, 0.0]
//!
//! [cost.terminal]
//! form = "linear"             # or "quadratic" with Q (row-major n x n)
//! coef = [1.0, 0.0]
//!
//! [cost.running]              # optional
//! form = "quadratic"
//! Qy = [1.0, 0.0, 0.0, 1.0]
//! Qu = [1.0]
//!
//! [control]
//! lower = [-1.0]
//! upper = [1.0]
//! ```
//!
//! For `bilinear_delay` the keys are `A` (n x r), `B` (a list of n matrices,
//! each n x r) and optional `A0`, `A1`. For `builtin` the key `name`
//! selects `logistic` (with `rate`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracquad::Order;
use crate::grid::TimeGrid;
use crate::problem::{
    BilinearDelay, Builtin, ControlSet, CostSpec, Dynamics, HistorySegment, LinearDelay, Matrix,
    ProblemSpec, RunningCost, TerminalCost, Vector,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    version: u32,
    alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(rename = "T")]
    horizon: f64,
    h: f64,
    #[serde(rename = "N")]
    steps: usize,
    n: usize,
    r: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    history: Option<Vec<f64>>,
    dynamics: RawDynamics,
    cost: RawCost,
    control: RawControl,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
enum RawDynamics {
    #[serde(rename = "linear_delay")]
    Linear {
        #[serde(rename = "A0", default, skip_serializing_if = "Option::is_none")]
        a0: Option<Vec<f64>>,
        #[serde(rename = "A1", default, skip_serializing_if = "Option::is_none")]
        a1: Option<Vec<f64>>,
        #[serde(rename = "B")]
        b: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<Vec<f64>>,
    },
    #[serde(rename = "bilinear_delay")]
    Bilinear {
        #[serde(rename = "A")]
        a: Vec<f64>,
        #[serde(rename = "B")]
        b: Vec<Vec<f64>>,
        #[serde(rename = "A0", default, skip_serializing_if = "Option::is_none")]
        a0: Option<Vec<f64>>,
        #[serde(rename = "A1", default, skip_serializing_if = "Option::is_none")]
        a1: Option<Vec<f64>>,
    },
    #[serde(rename = "builtin")]
    Builtin {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rate: Option<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    terminal: RawTerminal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    running: Option<RawRunning>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "form", deny_unknown_fields)]
enum RawTerminal {
    #[serde(rename = "linear")]
    Linear { coef: Vec<f64> },
    #[serde(rename = "quadratic")]
    Quadratic {
        #[serde(rename = "Q")]
        q: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coef: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "form", deny_unknown_fields)]
enum RawRunning {
    #[serde(rename = "zero")]
    Zero,
    #[serde(rename = "quadratic")]
    Quadratic {
        #[serde(rename = "Qy")]
        qy: Vec<f64>,
        #[serde(rename = "Qu")]
        qu: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControl {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

fn matrix(path: &str, data: &[f64], rows: usize, cols: usize) -> Result<Matrix> {
    if data.len() != rows * cols {
        return Err(Error::config(
            path,
            format!(
                "expected {} entries ({rows}x{cols} row-major), got {}",
                rows * cols,
                data.len()
            ),
        ));
    }
    Ok(Matrix::from_row_slice(rows, cols, data))
}

fn vector(path: &str, data: &[f64], len: usize) -> Result<Vector> {
    if data.len() != len {
        return Err(Error::config(
            path,
            format!("expected {len} entries, got {}", data.len()),
        ));
    }
    Ok(Vector::from_column_slice(data))
}

fn opt_matrix(path: &str, data: &Option<Vec<f64>>, rows: usize, cols: usize) -> Result<Matrix> {
    match data {
        Some(d) => matrix(path, d, rows, cols),
        None => Ok(Matrix::zeros(rows, cols)),
    }
}

fn row_major(m: &Matrix) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Parse and validate a configuration text.
pub fn load_problem(text: &str) -> Result<ProblemSpec> {
    let raw: RawProblem = toml::from_str(text)?;
    build(&raw)
}

/// Read a configuration file from disk.
pub fn load_problem_file(path: &std::path::Path) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path)?;
    load_problem(&text)
}

fn build(raw: &RawProblem) -> Result<ProblemSpec> {
    if raw.version != SCHEMA_VERSION {
        return Err(Error::config(
            "version",
            format!("unsupported schema version {} (expected {SCHEMA_VERSION})", raw.version),
        ));
    }
    let alpha = Order::new(raw.alpha).map_err(|e| Error::config("alpha", e.to_string()))?;
    let beta = match raw.beta {
        Some(b) => Order::cost(b).map_err(|e| Error::config("beta", e.to_string()))?,
        None => alpha,
    };
    let grid = TimeGrid::new(raw.horizon, raw.h, raw.steps)?;
    let (n, r) = (raw.n, raw.r);
    if n == 0 || r == 0 {
        return Err(Error::config("n", "state and control dimensions must be positive"));
    }

    let dynamics = match &raw.dynamics {
        RawDynamics::Linear { a0, a1, b, c } => Dynamics::LinearDelay(LinearDelay {
            a0: opt_matrix("dynamics.A0", a0, n, n)?,
            a1: opt_matrix("dynamics.A1", a1, n, n)?,
            b: matrix("dynamics.B", b, n, r)?,
            c: match c {
                Some(c) => vector("dynamics.c", c, n)?,
                None => Vector::zeros(n),
            },
        }),
        RawDynamics::Bilinear { a, b, a0, a1 } => {
            if b.len() != n {
                return Err(Error::config(
                    "dynamics.B",
                    format!("expected {n} matrices (one per delayed state), got {}", b.len()),
                ));
            }
            let bs = b
                .iter()
                .enumerate()
                .map(|(i, bi)| matrix(&format!("dynamics.B[{i}]"), bi, n, r))
                .collect::<Result<Vec<_>>>()?;
            Dynamics::BilinearDelay(BilinearDelay {
                a: matrix("dynamics.A", a, n, r)?,
                b: bs,
                a0: opt_matrix("dynamics.A0", a0, n, n)?,
                a1: opt_matrix("dynamics.A1", a1, n, n)?,
            })
        }
        RawDynamics::Builtin { name, rate } => match name.as_str() {
            "logistic" => {
                if (n, r) != (1, 1) {
                    return Err(Error::config("n", "builtin `logistic` is scalar (n = r = 1)"));
                }
                Dynamics::Builtin(Builtin::Logistic {
                    rate: rate.unwrap_or(1.0),
                })
            }
            other => {
                return Err(Error::config(
                    "dynamics.name",
                    format!("unknown builtin `{other}` (available: logistic)"),
                ))
            }
        },
    };

    let terminal = match &raw.cost.terminal {
        RawTerminal::Linear { coef } => TerminalCost::Linear {
            coef: vector("cost.terminal.coef", coef, n)?,
        },
        RawTerminal::Quadratic { q, coef } => TerminalCost::Quadratic {
            matrix: matrix("cost.terminal.Q", q, n, n)?,
            coef: match coef {
                Some(c) => vector("cost.terminal.coef", c, n)?,
                None => Vector::zeros(n),
            },
        },
    };
    let running = match &raw.cost.running {
        None | Some(RawRunning::Zero) => RunningCost::Zero,
        Some(RawRunning::Quadratic { qy, qu }) => RunningCost::Quadratic {
            qy: matrix("cost.running.Qy", qy, n, n)?,
            qu: matrix("cost.running.Qu", qu, r, r)?,
        },
    };

    let controls = ControlSet::new(
        vector("control.lower", &raw.control.lower, r)?,
        vector("control.upper", &raw.control.upper, r)?,
    )?;

    let y0 = match &raw.y0 {
        Some(v) => vector("y0", v, n)?,
        None => Vector::zeros(n),
    };
    let phi = match &raw.history {
        Some(v) => vector("history", v, n)?,
        None => Vector::zeros(n),
    };

    ProblemSpec::new(
        alpha,
        grid,
        HistorySegment::constant(y0, phi, &grid),
        dynamics,
        CostSpec {
            terminal,
            running,
            beta,
        },
        controls,
    )
}

/// Render a specification back to configuration text.
///
/// Fails for problems that the schema cannot express (sampled histories
/// and the manufactured test problem).
pub fn render(spec: &ProblemSpec) -> Result<String> {
    let (n, r) = spec.dims();
    let phi = spec.history.constant_value().cloned().ok_or_else(|| {
        Error::Unsupported("configuration files only hold constant histories".into())
    })?;
    let dynamics = match &spec.dynamics {
        Dynamics::LinearDelay(l) => RawDynamics::Linear {
            a0: Some(row_major(&l.a0)),
            a1: Some(row_major(&l.a1)),
            b: row_major(&l.b),
            c: Some(l.c.as_slice().to_vec()),
        },
        Dynamics::BilinearDelay(b) => RawDynamics::Bilinear {
            a: row_major(&b.a),
            b: b.b.iter().map(row_major).collect(),
            a0: Some(row_major(&b.a0)),
            a1: Some(row_major(&b.a1)),
        },
        Dynamics::Builtin(Builtin::Logistic { rate }) => RawDynamics::Builtin {
            name: "logistic".into(),
            rate: Some(*rate),
        },
        Dynamics::Builtin(other) => {
            return Err(Error::Unsupported(format!(
                "builtin `{}` has no configuration form",
                other.name()
            )))
        }
    };
    let terminal = match &spec.cost.terminal {
        TerminalCost::Linear { coef } => RawTerminal::Linear {
            coef: coef.as_slice().to_vec(),
        },
        TerminalCost::Quadratic { matrix, coef } => RawTerminal::Quadratic {
            q: row_major(matrix),
            coef: Some(coef.as_slice().to_vec()),
        },
    };
    let running = match &spec.cost.running {
        RunningCost::Zero => None,
        RunningCost::Quadratic { qy, qu } => Some(RawRunning::Quadratic {
            qy: row_major(qy),
            qu: row_major(qu),
        }),
    };
    let raw = RawProblem {
        version: SCHEMA_VERSION,
        alpha: spec.alpha.value(),
        beta: Some(spec.cost.beta.value()),
        horizon: spec.grid.horizon(),
        h: spec.grid.delay(),
        steps: spec.grid.steps(),
        n,
        r,
        y0: Some(spec.history.y0().as_slice().to_vec()),
        history: Some(phi.as_slice().to_vec()),
        dynamics,
        cost: RawCost { terminal, running },
        control: RawControl {
            lower: spec.controls.lower().as_slice().to_vec(),
            upper: spec.controls.upper().as_slice().to_vec(),
        },
    };
    toml::to_string(&raw).map_err(|e| Error::Unsupported(format!("cannot render config: {e}")))
}
