//! Special functions and product-integration quadrature for the weakly
//! singular kernels `(t - s)^(a-1)` and `(T - s)^(a-1) (s - t)^(a-1)`.
//!
//! Every integral against a singular kernel in this crate is taken cell by
//! cell: the smooth factor is replaced by its linear interpolant on the cell
//! and the kernel moments are integrated exactly (closed form for the single
//! kernel, substitution plus adaptive Gauss-Kronrod for the product kernel).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Fractional order.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Order(f64);

impl Order {
    /// Order of a Caputo derivative, restricted to `0 < value < 1`.
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::Domain(format!("order must lie in (0, 1), got {value}")))
        }
    }

    /// Order of the Riemann-Liouville integral in the running cost; any
    /// positive value is accepted here, `beta >= alpha` is checked by the
    /// problem constructor.
    pub fn cost(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::Domain(format!("cost order must be positive, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn gamma(self) -> f64 {
        gamma(self.0)
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Euler's gamma function for `x > 0`.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(gamma(x))
    } else {
        Err(Error::Domain(format!("gamma requires x > 0, got {x}")))
    }
}

pub(crate) fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + k as f64);
    }
    let w = x + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * w.powf(x + 0.5) * (-w).exp() * acc
}

/// `B_z(alpha, alpha) = int_0^z s^(alpha-1) (1-s)^(alpha-1) ds`.
pub fn beta_incomplete(alpha: Order, z: f64) -> Result<f64> {
    beta_segment(alpha.value(), alpha.value(), 0.0, z)
}

/// `int_{z0}^{z1} s^(p-1) (1-s)^(q-1) ds` for `0 <= z0 <= z1 <= 1`.
pub fn beta_segment(p: f64, q: f64, z0: f64, z1: f64) -> Result<f64> {
    if !(p > 0.0 && q > 0.0) {
        return Err(Error::Domain(format!("beta exponents must be positive, got ({p}, {q})")));
    }
    if !(0.0..=1.0).contains(&z0) || !(0.0..=1.0).contains(&z1) || z0 > z1 {
        return Err(Error::Domain(format!(
            "beta segment requires 0 <= z0 <= z1 <= 1, got [{z0}, {z1}]"
        )));
    }
    if z0 == z1 {
        return Ok(0.0);
    }
    Ok(kernel_moments(p, q, z0, z1, 1.0 - z0, 1.0 - z1)[0])
}

/// Exact value of `int_a^b (t_eff - s)^(alpha-1) (s - t)^(alpha-1) ds`.
pub fn double_singular_cell(t: f64, a: f64, b: f64, t_eff: f64, alpha: Order) -> Result<f64> {
    if !(t <= a && a < b && b <= t_eff) {
        return Err(Error::Domain(format!(
            "double singular cell requires t <= a < b <= T_eff, got t={t}, a={a}, b={b}, T_eff={t_eff}"
        )));
    }
    let p = alpha.value();
    Ok(kernel_moments(p, p, a - t, b - t, t_eff - a, t_eff - b)[0])
}

/// Zeroth and first moments of `x^(p-1) (L - x)^(q-1)` over `[a, b]`, where
/// `L = a + ra` and `rb = L - b` are supplied separately so that distances
/// to the right endpoint keep full precision. The first moment is taken
/// about `a`: `int_a^b (x - a) x^(p-1) (L - x)^(q-1) dx`.
pub(crate) fn kernel_moments(p: f64, q: f64, a: f64, b: f64, ra: f64, rb: f64) -> [f64; 2] {
    kernel_moments_with(p, q, a, b, ra, rb, &|d, _| d)
}

/// Like [`kernel_moments`] with the first moment replaced by
/// `int_a^b g(x - a, L - x) x^(p-1) (L - x)^(q-1) dx`; both distances are
/// passed so that `g` can use whichever is accurate.
pub(crate) fn kernel_moments_with(
    p: f64,
    q: f64,
    a: f64,
    b: f64,
    ra: f64,
    rb: f64,
    g: &impl Fn(f64, f64) -> f64,
) -> [f64; 2] {
    let len = a + ra;
    let mid = 0.5 * len;
    if b <= mid {
        left_piece(p, q, a, b, len, g)
    } else if a >= mid {
        right_piece(p, q, ra, rb, len, 0.0, g)
    } else {
        let l = left_piece(p, q, a, mid, len, g);
        let r = right_piece(p, q, len - mid, rb, len, mid - a, g);
        [l[0] + r[0], l[1] + r[1]]
    }
}

/// `(left, right)` weights of one cell when the smooth factor is
/// interpolated linearly in `(L - x)^gamma` rather than in `x`.
///
/// Functions of the form `c0 + c1 (L - x)^gamma + ...` are typical next to
/// the right end of a Volterra kernel; interpolating in that variable keeps
/// the rule accurate there.
pub(crate) fn graded_cell(p: f64, q: f64, a: f64, b: f64, ra: f64, rb: f64, gamma: f64) -> (f64, f64) {
    // psi = 1 - (r / ra)^gamma with d = ra - r
    let psi = |d: f64, r: f64| {
        let log = if d < 0.5 * ra { (-d / ra).ln_1p() } else { (r / ra).ln() };
        -(gamma * log).exp_m1()
    };
    let [m0, mg] = kernel_moments_with(p, q, a, b, ra, rb, &psi);
    let psi_b = if rb == 0.0 { 1.0 } else { psi(b - a, rb) };
    let right = mg / psi_b;
    (m0 - right, right)
}

const MOMENT_RTOL: f64 = 1e-14;

// Piece with the singular point x = 0 nearby; w = x^p absorbs x^(p-1).
fn left_piece(p: f64, q: f64, a: f64, b: f64, len: f64, g: &impl Fn(f64, f64) -> f64) -> [f64; 2] {
    if p < 1.0 {
        let inv = 1.0 / p;
        adaptive_gk(
            &|w: f64| {
                let x = w.powf(inv);
                let k = (len - x).powf(q - 1.0) * inv;
                [k, k * g(x - a, len - x)]
            },
            a.powf(p),
            b.powf(p),
            MOMENT_RTOL,
        )
    } else {
        adaptive_gk(
            &|x: f64| {
                let k = x.powf(p - 1.0) * (len - x).powf(q - 1.0);
                [k, k * g(x - a, len - x)]
            },
            a,
            b,
            MOMENT_RTOL,
        )
    }
}

// Mirror image in r = L - x over r in [rb, ra]; the distance to the cell's
// left end is `offset + ra - r`.
fn right_piece(
    p: f64,
    q: f64,
    ra: f64,
    rb: f64,
    len: f64,
    offset: f64,
    g: &impl Fn(f64, f64) -> f64,
) -> [f64; 2] {
    if q < 1.0 {
        let inv = 1.0 / q;
        adaptive_gk(
            &|w: f64| {
                let r = w.powf(inv);
                let k = (len - r).powf(p - 1.0) * inv;
                [k, k * g(offset + (ra - r), r)]
            },
            rb.powf(q),
            ra.powf(q),
            MOMENT_RTOL,
        )
    } else {
        adaptive_gk(
            &|r: f64| {
                let k = (len - r).powf(p - 1.0) * r.powf(q - 1.0);
                [k, k * g(offset + (ra - r), r)]
            },
            rb,
            ra,
            MOMENT_RTOL,
        )
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<const K: usize>(f: &impl Fn(f64) -> [f64; K], a: f64, b: f64) -> ([f64; K], [f64; K]) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = [0.0; K];
    let mut gauss = [0.0; K];
    let mut fvals = [[0.0; K]; 15];
    fvals[7] = fc;
    for k in 0..K {
        kron[k] = WGK[7] * fc[k];
        gauss[k] = WG[3] * fc[k];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fvals[j] = f1;
        fvals[14 - j] = f2;
        for k in 0..K {
            kron[k] += WGK[j] * (f1[k] + f2[k]);
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * (f1[k] + f2[k]);
            }
        }
    }
    let mut result = [0.0; K];
    let mut err = [0.0; K];
    for k in 0..K {
        let mean = 0.5 * kron[k];
        let mut asc = WGK[7] * (fc[k] - mean).abs();
        for j in 0..7 {
            asc += WGK[j] * ((fvals[j][k] - mean).abs() + (fvals[14 - j][k] - mean).abs());
        }
        let asc = asc * h.abs();
        result[k] = kron[k] * h;
        let mut e = ((kron[k] - gauss[k]) * h).abs();
        if asc != 0.0 && e != 0.0 {
            e = asc * (200.0 * e / asc).powf(1.5).min(1.0);
        }
        err[k] = e;
    }
    (result, err)
}

/// Adaptive Gauss-Kronrod (7/15) on a vector-valued integrand; each
/// subinterval is accepted once every component meets the relative tolerance
/// against its own local value.
pub(crate) fn adaptive_gk<const K: usize>(
    f: &impl Fn(f64) -> [f64; K],
    a: f64,
    b: f64,
    rtol: f64,
) -> [f64; K] {
    let mut total = [0.0; K];
    if a == b {
        return total;
    }
    let mut stack = vec![(a, b, 0u32)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = gk15(f, lo, hi);
        let ok = (0..K).all(|k| err[k] <= rtol * val[k].abs() + 1e-300);
        if ok || depth >= 48 {
            for k in 0..K {
                total[k] += val[k];
            }
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    total
}

/// Node weights of the product rule for `int_0^{t_i} (t_i - s)^(a-1) g(s) ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularWeightRow {
    pub target_index: usize,
    pub weights: Vec<f64>,
    pub exponent: f64,
}

impl SingularWeightRow {
    pub fn apply(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, g)| w * g).sum()
    }
}

/// Cell weights of the product trapezoidal rule for the kernel
/// `(t_n - s)^(a-1)` on a uniform grid.
///
/// The rule integrates the piecewise-linear interpolant of the smooth factor
/// exactly. Cell `[t_j, t_{j+1}]` of row `n` has lag `k = n - j >= 1` and
/// contributes `dt^a * (left[k] * g(t_j+) + right[k] * g(t_{j+1}-))`, so the
/// smooth factor may take different one-sided values on either side of a
/// node. Storage is `O(N)`.
#[derive(Debug, Clone)]
pub struct RieszTable {
    order: f64,
    dt: f64,
    scale: f64,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl RieszTable {
    pub fn new(grid: &TimeGrid, order: f64) -> Self {
        Self::with_len(grid.dt(), grid.steps(), order)
    }

    pub fn with_len(dt: f64, max_lag: usize, order: f64) -> Self {
        let mut left = vec![0.0; max_lag + 1];
        let mut right = vec![0.0; max_lag + 1];
        for k in 1..=max_lag {
            let kf = k as f64;
            let km = kf - 1.0;
            let i0 = (kf.powf(order) - km.powf(order)) / order;
            let i1 = (kf.powf(order + 1.0) - km.powf(order + 1.0)) / (order + 1.0);
            left[k] = i1 - km * i0;
            right[k] = kf * i0 - i1;
        }
        Self {
            order,
            dt,
            scale: dt.powf(order),
            left,
            right,
        }
    }

    /// Same kernel, with the smooth factor interpolated linearly in
    /// `(t_n - s)^gamma` on every cell.
    pub fn graded(dt: f64, max_lag: usize, order: f64, gamma: f64) -> Self {
        let mut left = vec![0.0; max_lag + 1];
        let mut right = vec![0.0; max_lag + 1];
        for k in 1..=max_lag {
            let kf = k as f64;
            (left[k], right[k]) = graded_cell(1.0, order, 0.0, 1.0, kf, kf - 1.0, gamma);
        }
        Self {
            order,
            dt,
            scale: dt.powf(order),
            left,
            right,
        }
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn max_lag(&self) -> usize {
        self.left.len() - 1
    }

    /// `dt^a`, the common factor of every cell weight.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Unscaled (left, right) weights for a cell at lag `k >= 1`.
    #[inline]
    pub fn cell(&self, k: usize) -> (f64, f64) {
        (self.left[k], self.right[k])
    }

    /// Node weights (scaled) for the row ending at node `i`.
    pub fn row(&self, i: usize) -> SingularWeightRow {
        let mut weights = vec![0.0; i + 1];
        for j in 0..i {
            let (l, r) = self.cell(i - j);
            weights[j] += l * self.scale;
            weights[j + 1] += r * self.scale;
        }
        SingularWeightRow {
            target_index: i,
            weights,
            exponent: self.order - 1.0,
        }
    }
}

/// Row `i` of the product rule for `int_0^{t_i} (t_i - s)^(a-1) g(s) ds`.
/// Row 0 is empty.
pub fn riesz_weights(grid: &TimeGrid, alpha: Order, i: usize) -> Result<SingularWeightRow> {
    if i > grid.steps() {
        return Err(Error::Domain(format!(
            "row index {i} beyond grid with {} steps",
            grid.steps()
        )));
    }
    if i == 0 {
        return Ok(SingularWeightRow {
            target_index: 0,
            weights: Vec::new(),
            exponent: alpha.value() - 1.0,
        });
    }
    Ok(RieszTable::with_len(grid.dt(), i, alpha.value()).row(i))
}

/// Weights for `int_0^T (T - t)^(b-1) g(t) dt`.
pub fn terminal_weights(grid: &TimeGrid, beta: Order) -> SingularWeightRow {
    RieszTable::new(grid, beta.value()).row(grid.steps())
}

/// Cell weights for the product kernel `(T_eff - s)^(a-1) (s - t0)^(a-1)`
/// where `T_eff - t0 = M dt` spans `M` whole cells.
///
/// For span `M` and cell offset `q` (the cell `[t0 + q dt, t0 + (q+1) dt]`)
/// the table holds unscaled `(left, right)` weights; the scaled cell
/// integral is `dt^(2a-1) * (left g(a+) + right g(b-))`. The smooth factor
/// is interpolated linearly in `(T_eff - s)^a`, which is exact for
/// constants and for `c0 + c1 (T_eff - s)^a`, the leading behaviour of the
/// backward equations near `T_eff`. Storage is `M_max (M_max + 1) / 2`
/// pairs.
#[derive(Debug, Clone)]
pub struct DoubleKernelTable {
    alpha: f64,
    scale: f64,
    max_span: usize,
    data: Vec<(f64, f64)>,
}

impl DoubleKernelTable {
    pub fn new(dt: f64, alpha: Order, max_span: usize) -> Self {
        let a = alpha.value();
        let mut data = vec![(0.0, 0.0); max_span * (max_span + 1) / 2];
        for span in 1..=max_span {
            let base = span * (span - 1) / 2;
            for q in 0..span {
                let ra = (span - q) as f64;
                data[base + q] = graded_cell(a, a, q as f64, q as f64 + 1.0, ra, ra - 1.0, a);
            }
        }
        Self {
            alpha: a,
            scale: dt.powf(2.0 * a - 1.0),
            max_span,
            data,
        }
    }

    /// Plain linear interpolation against `x^(p-1) (M - x)^(q-1)` in unit
    /// coordinates; the scale is `dt^(p+q-1)`.
    pub fn linear(dt: f64, p: f64, q: f64, max_span: usize) -> Self {
        let mut data = vec![(0.0, 0.0); max_span * (max_span + 1) / 2];
        for span in 1..=max_span {
            let base = span * (span - 1) / 2;
            for c in 0..span {
                let ra = (span - c) as f64;
                let [m0, m1] = kernel_moments(p, q, c as f64, c as f64 + 1.0, ra, ra - 1.0);
                data[base + c] = (m0 - m1, m1);
            }
        }
        Self {
            alpha: p,
            scale: dt.powf(p + q - 1.0),
            max_span,
            data,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn max_span(&self) -> usize {
        self.max_span
    }

    /// Common factor of every cell weight: `dt^(2a-1)`, or `dt^(p+q-1)`
    /// for [`DoubleKernelTable::linear`].
    pub fn scale(&self) -> f64 {
        self.scale
    }

    #[inline]
    pub fn cell(&self, span: usize, q: usize) -> (f64, f64) {
        debug_assert!(span >= 1 && span <= self.max_span && q < span);
        self.data[span * (span - 1) / 2 + q]
    }

    /// Row of cell weights for span `M`.
    pub fn row(&self, span: usize) -> &[(f64, f64)] {
        let base = span * (span - 1) / 2;
        &self.data[base..base + span]
    }
}
