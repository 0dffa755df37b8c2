//! Quadrature on a truncated real interval: double-exponential (tanh-sinh)
//! for the moment table and uniform trapezoid grids for the discretized
//! measure.

use rayon::prelude::*;
use rug::float::Constant;
use rug::Float;

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::real::{self, Real};

const MIN_LEVEL: u32 = 3;
pub const MAX_LEVEL: u32 = 13;

/// Half-width `X` of the interval `[-X, X]` outside of which `|x|^power e^{-V(x)}`
/// is below `2^{-bits}` times the peak of the weight, times a further `10^{-10}`.
///
/// The search runs in `f64` log space: only the location matters, not digits.
pub fn truncation_radius(p: &Potential, power: usize, bits: u32) -> f64 {
    let coeffs: Vec<(f64, f64)> = p
        .terms()
        .map(|(k, c)| (k as f64, c.to_f64()))
        .collect();
    let v = |x: f64| -> f64 { coeffs.iter().map(|&(k, c)| c / k * x.powf(k)).sum() };
    let log_integrand = |x: f64| -> f64 {
        let ax = x.abs().max(1.0);
        power as f64 * ax.ln() - v(x)
    };
    // Beyond `r0` the leading term dominates every other term of V.
    let dv = p.degree() as f64;
    let lead = p.u(p.degree()).to_f64();
    let mut r0: f64 = 1.0;
    for &(k, c) in &coeffs {
        if k < dv {
            let ratio = (c.abs() * dv / (k * lead)) * (coeffs.len() as f64);
            r0 = r0.max(ratio.powf(1.0 / (dv - k)));
        }
    }
    let log_cut = -(bits as f64) * std::f64::consts::LN_2 - 10.0 * std::f64::consts::LN_10;

    let step = 0.01 * r0.max(1.0);
    let mut peak = f64::NEG_INFINITY;
    let mut x: f64 = 0.0;
    loop {
        peak = peak.max(-v(x)).max(-v(-x));
        let ok = log_integrand(x) - peak < log_cut && log_integrand(-x) - peak < log_cut;
        if x >= r0 && ok {
            return x;
        }
        x += step;
    }
}

/// Nodes of the tanh-sinh rule at step `2^{-level}` that are new at that level.
fn level_nodes(prec: u32, radius: &Real, level: u32, t_max: f64) -> Vec<(Real, Real)> {
    let h = real::pow2(prec, -(level as i32));
    let half_pi = Float::with_val(prec, Constant::Pi) / 2u32;
    let count = (t_max * f64::from(1u32 << level)).ceil() as i64;
    let stride = if level == 0 { 1 } else { 2 };
    let first = if level == 0 { 0 } else { 1 };
    let mut js: Vec<i64> = Vec::new();
    let mut j = first;
    while j <= count {
        js.push(j);
        if j != 0 {
            js.push(-j);
        }
        j += stride;
    }
    js.par_iter()
        .map(|&j| {
            let t = Float::with_val(prec, &h * j);
            let s = Float::with_val(prec, t.sinh_ref()) * &half_pi;
            let x = Float::with_val(prec, s.tanh_ref()) * radius;
            let c = Float::with_val(prec, s.cosh_ref());
            let w = Float::with_val(prec, radius * &half_pi) * t.cosh() / c.square();
            (x, w)
        })
        .collect()
}

/// Smallest `t` at which the transformed weight falls below `2^{-(bits+20)}`.
fn tanh_sinh_extent(bits: u32) -> f64 {
    let target = -((bits + 20) as f64) * std::f64::consts::LN_2;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut t: f64 = 0.0;
    loop {
        // log(pi/2 cosh t / cosh^2(pi/2 sinh t)) ~ log(2 pi cosh t) - pi sinh t
        let lw = (2.0 * std::f64::consts::PI * t.cosh()).ln() - 2.0 * half_pi * t.sinh();
        if lw < target {
            return t;
        }
        t += 0.05;
    }
}

/// Outcome of an adaptive vector-valued tanh-sinh integration.
#[derive(Debug, Clone)]
pub struct Integral {
    pub values: Vec<Real>,
    /// Componentwise `|I_L - I_{L-1}|` at the accepted level.
    pub differences: Vec<Real>,
    pub level: u32,
    pub evaluations: usize,
}

/// Integrates a vector of functions over `[-radius, radius]` with tanh-sinh,
/// halving the step until every component changes by less than
/// `rel_target * scale[i]`, where `scale` is returned by `f` alongside the
/// values (components `0..dim` are the integrands, `dim..2*dim` their
/// magnitudes, used as scales).
pub fn tanh_sinh_adaptive<F>(
    prec: u32,
    radius: &Real,
    dim: usize,
    rel_target: &Real,
    what: &str,
    f: F,
) -> Result<Integral>
where
    F: Fn(&Real) -> Vec<Real> + Sync,
{
    let t_max = tanh_sinh_extent(prec);
    let mut raw = vec![real::zero(prec); 2 * dim];
    let mut evaluations = 0;
    let mut prev: Option<Vec<Real>> = None;
    let mut last_diff = Vec::new();
    for level in 0..=MAX_LEVEL {
        let nodes = level_nodes(prec, radius, level, t_max);
        evaluations += nodes.len();
        let contributions: Vec<Vec<Real>> = nodes
            .par_iter()
            .map(|(x, w)| f(x).into_iter().map(|v| v * w).collect())
            .collect();
        for c in contributions {
            for (acc, v) in raw.iter_mut().zip(c) {
                *acc += v;
            }
        }
        let h = real::pow2(prec, -(level as i32));
        let current: Vec<Real> = raw.iter().map(|s| Float::with_val(prec, s * &h)).collect();
        if let Some(p) = &prev {
            let diffs: Vec<Real> = (0..dim)
                .map(|i| Float::with_val(prec, &current[i] - &p[i]).abs())
                .collect();
            let ok = (0..dim).all(|i| {
                let allowed = Float::with_val(prec, &current[dim + i] * rel_target);
                diffs[i] <= allowed
            });
            last_diff = diffs;
            if ok && level >= MIN_LEVEL {
                return Ok(Integral {
                    values: current[..dim].to_vec(),
                    differences: last_diff,
                    level,
                    evaluations,
                });
            }
        }
        prev = Some(current);
    }
    let worst = last_diff
        .iter()
        .zip(prev.unwrap_or_default().iter().skip(dim))
        .map(|(d, s)| {
            if s.is_zero() {
                d.clone()
            } else {
                Float::with_val(prec, d / s)
            }
        })
        .fold(real::zero(prec), |a, b| if b > a { b } else { a });
    Err(Error::PrecisionUnreachable {
        what: what.to_string(),
        estimate: real::to_sci(&worst),
        target: real::to_sci(rel_target),
    })
}

/// Uniform trapezoid grid on `[-radius, radius]` with `nodes` points:
/// returns `(x_i, w_i)` with `w_i = dx * e^{-V(x_i)}` (halved at the ends).
pub fn trapezoid_measure(p: &Potential, prec: u32, radius: &Real, nodes: usize) -> Vec<(Real, Real)> {
    assert!(nodes >= 2, "trapezoid grid needs at least two nodes");
    let p = p.with_prec(prec);
    let span = Float::with_val(prec, radius * 2u32);
    let dx = Float::with_val(prec, &span / (nodes as u64 - 1));
    (0..nodes)
        .into_par_iter()
        .map(|i| {
            let x = Float::with_val(prec, &dx * i as u64) - radius;
            let mut w = Float::with_val(prec, -p.eval_v(&x)).exp() * &dx;
            if i == 0 || i == nodes - 1 {
                w /= 2u32;
            }
            (x, w)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_integral() {
        let prec = 200;
        let p = Potential::from_f64(prec, &[(2, 2.0)]).unwrap();
        let r = real::from_f64(prec, truncation_radius(&p, 0, prec));
        let target = real::pow2(prec, -180);
        let res = tanh_sinh_adaptive(prec, &r, 1, &target, "test", |x| {
            let e = Float::with_val(prec, -p.eval_v(x)).exp();
            vec![e.clone(), e]
        })
        .unwrap();
        let sqrt_pi = Float::with_val(prec, Constant::Pi).sqrt();
        let err = Float::with_val(prec, &res.values[0] - &sqrt_pi).abs();
        assert!(err < real::pow2(prec, -170), "err = {}", real::to_sci(&err));
    }

    #[test]
    fn radius_grows_with_power_and_bits() {
        let p = Potential::from_f64(64, &[(4, 1.0)]).unwrap();
        let a = truncation_radius(&p, 0, 64);
        let b = truncation_radius(&p, 40, 64);
        let c = truncation_radius(&p, 0, 512);
        assert!(b > a && c > a);
        // x^4/4 > (64 ln 2 + 10 ln 10) at the cut
        assert!(a.powi(4) / 4.0 > 64.0 * 0.69 + 23.0);
    }

    #[test]
    fn trapezoid_weights_sum_to_mass() {
        let prec = 128;
        let p = Potential::from_f64(prec, &[(2, 2.0)]).unwrap();
        let r = real::from_f64(prec, truncation_radius(&p, 0, prec));
        let grid = trapezoid_measure(&p, prec, &r, 801);
        let total: Real = grid.iter().fold(real::zero(prec), |a, (_, w)| a + w);
        let sqrt_pi = Float::with_val(prec, Constant::Pi).sqrt();
        assert!(Float::with_val(prec, total - sqrt_pi).abs() < real::pow2(prec, -120));
    }
}
