//! Vector-valued adaptive Gauss-Kronrod (7/15) quadrature over the real line.
//!
//! Every component shares the same subdivision. The finite window
//! `[-omega_max, omega_max]` is split at user breakpoints; the two tails are
//! mapped to `(0, 1]` with `omega = omega_max / u`, which is smooth for
//! integrands decaying at least as fast as `1/omega^2`.

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
/// Gauss weights for the odd Kronrod nodes (indices 1, 3, 5, 7).
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Per-component relative tolerance on the total integral.
    pub rel_tol: f64,
    /// Components are resolved at least to `abs_floor * max_c |I_c|`.
    pub abs_floor: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-8, abs_floor: 1e-20, max_intervals: 200_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureResult {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub intervals: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    Finite,
    /// `omega = sign * omega_max / u`, `u` in `(0, 1]`.
    Tail {
        sign: f64,
        omega_max: f64,
    },
}

struct Interval {
    a: f64,
    b: f64,
    seg: Segment,
    value: Vec<f64>,
    error: Vec<f64>,
}

struct Evaluator<'f, F> {
    f: &'f F,
    dim: usize,
    buf: Vec<f64>,
    evaluations: usize,
}

impl<F: Fn(f64, &mut [f64])> Evaluator<'_, F> {
    fn sample(&mut self, seg: Segment, u: f64, out_k: &mut [f64], out_g: &mut [f64], wk: f64, wg: f64) {
        let (omega, jac) = match seg {
            Segment::Finite => (u, 1.0),
            Segment::Tail { sign, omega_max } => (sign * omega_max / u, omega_max / (u * u)),
        };
        (self.f)(omega, &mut self.buf);
        self.evaluations += 1;
        for c in 0..self.dim {
            let v = self.buf[c] * jac;
            out_k[c] += wk * v;
            out_g[c] += wg * v;
        }
    }

    fn rule(&mut self, a: f64, b: f64, seg: Segment) -> Interval {
        let center = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut k = vec![0.0; self.dim];
        let mut g = vec![0.0; self.dim];
        for j in 0..7 {
            let wg = if j % 2 == 1 { WG[j / 2] } else { 0.0 };
            let dx = half * XGK[j];
            self.sample(seg, center - dx, &mut k, &mut g, WGK[j], wg);
            self.sample(seg, center + dx, &mut k, &mut g, WGK[j], wg);
        }
        self.sample(seg, center, &mut k, &mut g, WGK[7], WG[3]);
        let error = k.iter().zip(&g).map(|(kv, gv)| ((kv - gv) * half).abs()).collect();
        let value = k.iter().map(|v| v * half).collect();
        Interval { a, b, seg, value, error }
    }
}

/// Integrate `f` over the whole real line. `f(omega, out)` fills `dim`
/// components. `breakpoints` inside the window seed the initial split.
pub fn integrate_real_line<F>(
    f: &F,
    dim: usize,
    omega_max: f64,
    breakpoints: &[f64],
    opts: &QuadratureOptions,
) -> Result<QuadratureResult>
where
    F: Fn(f64, &mut [f64]),
{
    let mut ev = Evaluator { f, dim, buf: vec![0.0; dim], evaluations: 0 };
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|p| p.is_finite() && p.abs() < omega_max).collect();
    cuts.push(-omega_max);
    cuts.push(omega_max);
    cuts.push(0.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * omega_max);

    let mut intervals: Vec<Interval> = cuts.windows(2).map(|w| ev.rule(w[0], w[1], Segment::Finite)).collect();
    for sign in [-1.0, 1.0] {
        intervals.push(ev.rule(0.0, 1.0, Segment::Tail { sign, omega_max }));
    }

    let mut total = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    loop {
        total.iter_mut().for_each(|v| *v = 0.0);
        err.iter_mut().for_each(|v| *v = 0.0);
        for iv in &intervals {
            for c in 0..dim {
                total[c] += iv.value[c];
                err[c] += iv.error[c];
            }
        }
        let scale = total.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tol: Vec<f64> =
            total.iter().map(|v| (opts.rel_tol * v.abs()).max(opts.abs_floor * scale).max(f64::MIN_POSITIVE)).collect();
        let worst = err.iter().zip(&tol).fold(0.0_f64, |m, (e, t)| m.max(e / t));
        if worst <= 1.0 {
            return Ok(QuadratureResult {
                values: total,
                errors: err,
                intervals: intervals.len(),
                evaluations: ev.evaluations,
            });
        }
        if intervals.len() >= opts.max_intervals {
            return Err(Error::QuadratureNotConverged { intervals: intervals.len(), worst });
        }
        // If every interval scores at most 1/n, the summed error meets tol.
        let threshold = 1.0 / intervals.len() as f64;
        let mut next = Vec::with_capacity(intervals.len() * 2);
        for iv in intervals {
            let score = iv.error.iter().zip(&tol).fold(0.0_f64, |m, (e, t)| m.max(e / t));
            if score > threshold && (iv.b - iv.a) > 1e-14 * (iv.a.abs() + iv.b.abs()).max(1e-300) {
                let mid = 0.5 * (iv.a + iv.b);
                next.push(ev.rule(iv.a, mid, iv.seg));
                next.push(ev.rule(mid, iv.b, iv.seg));
            } else {
                next.push(iv);
            }
        }
        intervals = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorentzians_over_real_line() {
        // int dw / (w^2 + a^2) = pi / a ; int dw / (w^2 + a^2)^2 = pi / (2 a^3)
        let f = |w: f64, out: &mut [f64]| {
            out[0] = 1.0 / (w * w + 0.01);
            out[1] = 1.0 / (w * w + 4.0).powi(2);
            out[2] = 1.0 / ((w - 0.7).powi(2) + 1e-4);
        };
        let r = integrate_real_line(&f, 3, 5.0, &[0.7], &QuadratureOptions::default()).unwrap();
        let pi = std::f64::consts::PI;
        assert!((r.values[0] / (pi / 0.1) - 1.0).abs() < 1e-9);
        assert!((r.values[1] / (pi / 16.0) - 1.0).abs() < 1e-9);
        assert!((r.values[2] / (pi / 0.01) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn interval_cap_reports_failure() {
        let f = |w: f64, out: &mut [f64]| out[0] = 1.0 / (w * w + 1e-12);
        let opts = QuadratureOptions { max_intervals: 8, ..Default::default() };
        assert!(matches!(integrate_real_line(&f, 1, 1.0, &[], &opts), Err(Error::QuadratureNotConverged { .. })));
    }
}
