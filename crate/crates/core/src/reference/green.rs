//! `-kappa u'' + c u' = f` on `[0, 1]`, `u(0) = u(1) = 0`, for a general
//! forcing, by quadrature against the Green's function.
//!
//! With `r = c / kappa >= 0` the particular solution
//!
//! ```text
//! P(x) = (1/kappa) [ int_0^x f(s) E0(s) ds + E0(x) int_x^1 f(s) exp(-r (s - x)) ds ],
//! E0(t) = (1 - exp(-r t)) / r,
//! ```
//!
//! satisfies `P(0) = 0`, and `u = P - P(1) h` with the layer profile `h`.
//! Every exponential has a non-positive argument. Negative `r` is handled by
//! reflecting `x -> 1 - x`.

use crate::field::ScalarField;
use crate::quadrature::gauss_legendre;

use super::closed_form::layer_profile;

const PANEL_POINTS: usize = 16;
const MAX_PANEL: f64 = 1.0 / 64.0;
/// Panels never span more than this many layer widths `1 / r`.
const LAYER_WIDTHS: f64 = 8.0;

fn e0(r: f64, t: f64) -> f64 {
    if r == 0.0 {
        t
    } else {
        -(-r * t).exp_m1() / r
    }
}

/// Solution values at `points` (any order, inside `[0, 1]`).
///
/// `breaks` are interior points where `f` loses smoothness; panels are split
/// there.
pub fn solve_values(
    f: &dyn ScalarField,
    breaks: &[f64],
    kappa: f64,
    c: f64,
    points: &[f64],
) -> Vec<f64> {
    if c < 0.0 {
        let reflected = crate::field::FnField::new(1, |s: &[f64]| f.value(&[1.0 - s[0]]));
        let rb: Vec<f64> = breaks.iter().map(|b| 1.0 - b).collect();
        let rp: Vec<f64> = points.iter().map(|x| 1.0 - x).collect();
        return solve_values(&reflected, &rb, kappa, -c, &rp);
    }
    let r = c / kappa;

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].total_cmp(&points[b]));

    let mut knots: Vec<f64> = Vec::with_capacity(points.len() + breaks.len() + 2);
    knots.push(0.0);
    knots.push(1.0);
    knots.extend(points.iter().map(|x| x.clamp(0.0, 1.0)));
    knots.extend(breaks.iter().filter(|b| **b > 0.0 && **b < 1.0));
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let hmax = if r > 0.0 { MAX_PANEL.min(LAYER_WIDTHS / r) } else { MAX_PANEL };
    let gl = gauss_legendre(PANEL_POINTS, 0.0, 1.0).expect("valid rule");
    let (t, w) = (gl.nodes(), gl.weights());

    // per knot interval: int f E0 and int f exp(-r (s - left))
    let m = knots.len() - 1;
    let mut i1 = vec![0.0; m];
    let mut jl = vec![0.0; m];
    let mut s_buf = Vec::with_capacity(PANEL_POINTS);
    for k in 0..m {
        let (a, b) = (knots[k], knots[k + 1]);
        let pieces = ((b - a) / hmax).ceil().max(1.0) as usize;
        let h = (b - a) / pieces as f64;
        for p in 0..pieces {
            let lo = a + p as f64 * h;
            s_buf.clear();
            s_buf.extend(t.iter().map(|ti| lo + h * ti));
            let fv = f.values(&s_buf);
            for q in 0..PANEL_POINTS {
                let s = s_buf[q];
                let wf = h * w[q] * fv[q];
                i1[k] += wf * e0(r, s);
                jl[k] += wf * (-r * (s - a)).exp();
            }
        }
    }

    let mut cum_i1 = vec![0.0; m + 1];
    for k in 0..m {
        cum_i1[k + 1] = cum_i1[k] + i1[k];
    }
    let mut j = vec![0.0; m + 1];
    for k in (0..m).rev() {
        j[k] = (-r * (knots[k + 1] - knots[k])).exp() * j[k + 1] + jl[k];
    }
    let p1 = cum_i1[m] / kappa;

    let mut out = vec![0.0; points.len()];
    let mut k = 0;
    for &idx in &order {
        let x = points[idx].clamp(0.0, 1.0);
        while knots[k] < x {
            k += 1;
        }
        let p = (cum_i1[k] + e0(r, x) * j[k]) / kappa;
        out[idx] = p - p1 * layer_profile(r, x).0;
    }
    out
}
