//! Adaptive quadrature used for continuous-time functionals and as the
//! independent oracle for double integrals of kernels.
//!
//! Two routines live here:
//!
//! * [`integrate`]: adaptive Simpson with Richardson correction on `[a, b]`,
//!   split at caller-supplied breakpoints (kinks of the integrand).
//! * [`integrate_2d`]: globally adaptive tensor-product trapezoid on a
//!   rectangle, Richardson-extrapolated per cell, refining the cell with the
//!   largest error estimate until the total estimate meets a relative target.
//!
//! Neither routine knows anything about dyadic Riemann sums, so both can be
//! used to check them.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::numeric::CompensatedSum;

/// Value of a quadrature together with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

const MAX_SIMPSON_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`, splitting first at every breakpoint that falls strictly inside.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> Quadrature {
    if !(b > a) {
        return Quadrature {
            value: 0.0,
            error: 0.0,
        };
    }
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.sort_by(|x, y| x.total_cmp(y));
    cuts.dedup();
    let mut nodes = Vec::with_capacity(cuts.len() + 2);
    nodes.push(a);
    nodes.extend(cuts);
    nodes.push(b);

    let total = b - a;
    let mut value = CompensatedSum::new();
    let mut error = 0.0;
    for w in nodes.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let piece_tol = tol * (hi - lo) / total;
        let fa = f(lo);
        let fm = f(0.5 * (lo + hi));
        let fb = f(hi);
        let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        let (v, e) = simpson_step(&f, lo, hi, fa, fm, fb, whole, piece_tol, 0);
        value.add(v);
        error += e;
    }
    Quadrature {
        value: value.value(),
        error,
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> (f64, f64) {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth >= MAX_SIMPSON_DEPTH || delta.abs() <= 15.0 * tol {
        return (left + right + delta / 15.0, delta.abs() / 15.0);
    }
    let (lv, le) = simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1);
    let (rv, re) = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
    (lv + rv, le + re)
}

/// Iterated integral `∫_{x0}^{x1} ∫_{y0}^{y1} f(x, y) dy dx` with the inner
/// integral split at `y = x` and the outer split at the inner box edges.
///
/// This is the natural order-of-integration oracle for kernels whose only
/// kink is the diagonal.
pub fn integrate_iterated<F: Fn(f64, f64) -> f64>(
    f: F,
    x: (f64, f64),
    y: (f64, f64),
    tol: f64,
) -> Quadrature {
    let inner_tol = tol / (x.1 - x.0).abs().max(1.0) * 1e-2;
    let inner_err = std::cell::Cell::new(0.0);
    let outer = integrate(
        |xv| {
            let q = integrate(|yv| f(xv, yv), y.0, y.1, &[xv], inner_tol);
            inner_err.set(inner_err.get() + q.error);
            q.value
        },
        x.0,
        x.1,
        &[y.0, y.1],
        tol,
    );
    Quadrature {
        value: outer.value,
        error: outer.error + inner_tol * (x.1 - x.0).abs(),
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn trapezoid_cell<F: Fn(f64, f64) -> f64>(f: &F, x0: f64, x1: f64, y0: f64, y1: f64) -> Cell {
    let xm = 0.5 * (x0 + x1);
    let ym = 0.5 * (y0 + y1);
    let area = (x1 - x0) * (y1 - y0);
    let corners = f(x0, y0) + f(x0, y1) + f(x1, y0) + f(x1, y1);
    let edges = f(xm, y0) + f(xm, y1) + f(x0, ym) + f(x1, ym);
    let centre = f(xm, ym);
    let coarse = area / 4.0 * corners;
    let fine = area / 16.0 * (corners + 2.0 * edges + 4.0 * centre);
    let extrapolated = fine + (fine - coarse) / 3.0;
    Cell {
        x0,
        x1,
        y0,
        y1,
        value: extrapolated,
        error: (fine - coarse).abs() / 3.0,
    }
}

/// Cap on refinement steps for [`integrate_2d`].
pub const MAX_2D_CELLS: usize = 1 << 20;

/// Globally adaptive tensor-product trapezoid rule with Richardson
/// extrapolation on `[x0, x1] × [y0, y1]`, stopping when the summed error
/// estimate is at most `rel_tol · |value|` (or `abs_floor`).
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    x: (f64, f64),
    y: (f64, f64),
    rel_tol: f64,
    abs_floor: f64,
) -> Quadrature {
    let (x0, x1) = x;
    let (y0, y1) = y;
    if !(x1 > x0) || !(y1 > y0) {
        return Quadrature {
            value: 0.0,
            error: 0.0,
        };
    }
    let mut heap = BinaryHeap::new();
    let seed = 4;
    let hx = (x1 - x0) / seed as f64;
    let hy = (y1 - y0) / seed as f64;
    for i in 0..seed {
        for j in 0..seed {
            let cx0 = x0 + i as f64 * hx;
            let cx1 = if i + 1 == seed {
                x1
            } else {
                x0 + (i + 1) as f64 * hx
            };
            let cy0 = y0 + j as f64 * hy;
            let cy1 = if j + 1 == seed {
                y1
            } else {
                y0 + (j + 1) as f64 * hy
            };
            heap.push(trapezoid_cell(&f, cx0, cx1, cy0, cy1));
        }
    }
    let mut total_value: f64 = heap.iter().map(|c| c.value).sum();
    let mut total_error: f64 = heap.iter().map(|c| c.error).sum();
    let mut steps = 0;
    while total_error > (rel_tol * total_value.abs()).max(abs_floor) && steps < MAX_2D_CELLS {
        let Some(cell) = heap.pop() else { break };
        total_value -= cell.value;
        total_error -= cell.error;
        let xm = 0.5 * (cell.x0 + cell.x1);
        let ym = 0.5 * (cell.y0 + cell.y1);
        for (a0, a1) in [(cell.x0, xm), (xm, cell.x1)] {
            for (b0, b1) in [(cell.y0, ym), (ym, cell.y1)] {
                let child = trapezoid_cell(&f, a0, a1, b0, b1);
                total_value += child.value;
                total_error += child.error;
                heap.push(child);
            }
        }
        steps += 1;
        // Running totals drift; resync occasionally.
        if steps % 4096 == 0 {
            total_value = heap.iter().map(|c| c.value).sum();
            total_error = heap.iter().map(|c| c.error).sum();
        }
    }
    let mut cells: Vec<Cell> = heap.into_vec();
    cells.sort_by(|a, b| {
        (a.x0, a.y0)
            .partial_cmp(&(b.x0, b.y0))
            .unwrap_or(Ordering::Equal)
    });
    let value = cells
        .iter()
        .map(|c| c.value)
        .collect::<CompensatedSum>()
        .value();
    let error = cells.iter().map(|c| c.error).sum();
    Quadrature { value, error }
}
