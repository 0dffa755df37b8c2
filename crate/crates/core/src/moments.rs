//! Moments of `e^{-V}` and the three-term recurrence coefficients.
//!
//! Two independent routes produce `(gamma_n, beta_n, h_n)`:
//!
//! * [`recurrence_from_moments`]: Chebyshev's algorithm on the moment table
//!   built by tanh-sinh quadrature. Exponentially ill-conditioned in `N`, so
//!   it runs with extra guard bits.
//! * [`recurrence_stieltjes`]: the Stieltjes procedure (orthonormal form) on a
//!   uniform trapezoid discretization of the measure.
//!
//! [`certified_recurrence`] runs both and only returns a result when they agree.

use rayon::prelude::*;
use rug::Float;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::quadrature;
use crate::real::{self, Real};

/// Bits of the working precision the quadrature is allowed to give up.
pub const MOMENT_GUARD_BITS: u32 = 16;

#[derive(Debug, Clone)]
pub struct MomentTable {
    pub prec: u32,
    /// `m[j] = int x^j e^{-V(x)} dx`.
    pub m: Vec<Real>,
    /// Per-moment quadrature change at the accepted level.
    pub error_estimate: Vec<Real>,
    pub radius: f64,
    pub level: u32,
}

impl MomentTable {
    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// `det[m_{i+j}]_{0<=i,j<=n}` by Gaussian elimination (no pivoting; the
    /// Hankel matrix of a positive measure is positive definite).
    pub fn hankel_determinant(&self, n: usize) -> Real {
        let prec = self.prec;
        let size = n + 1;
        assert!(2 * n < self.m.len(), "not enough moments for order {n}");
        let mut a: Vec<Vec<Real>> = (0..size)
            .map(|i| (0..size).map(|j| self.m[i + j].clone()).collect())
            .collect();
        let mut det = real::one(prec);
        for c in 0..size {
            let pivot = a[c][c].clone();
            det *= &pivot;
            if pivot.is_zero() {
                return det;
            }
            for r in (c + 1)..size {
                let f = Float::with_val(prec, &a[r][c] / &pivot);
                let (top, bottom) = a.split_at_mut(r);
                for (dst, src) in bottom[0][c..].iter_mut().zip(&top[c][c..]) {
                    *dst -= Float::with_val(prec, &f * src);
                }
            }
        }
        det
    }
}

/// Moments `m_0..m_J` of `e^{-V}` on the real line at `prec` bits.
///
/// Each moment is accurate to about `2^{-(prec - MOMENT_GUARD_BITS)}` relative
/// to `int |x|^j e^{-V}` (so odd moments of even weights are meaningful).
pub fn compute_moments(p: &Potential, max_power: usize, prec: u32) -> Result<MomentTable> {
    p.check_admissible()?;
    let pw = p.with_prec(prec);
    let radius_f = quadrature::truncation_radius(&pw, max_power, prec);
    let radius = real::from_f64(prec, radius_f);
    let dim = max_power + 1;
    let target = real::pow2(prec, -((prec - MOMENT_GUARD_BITS) as i32));
    let res = quadrature::tanh_sinh_adaptive(prec, &radius, dim, &target, "moment quadrature", |x| {
        let w = Float::with_val(prec, -pw.eval_v(x)).exp();
        let ax = Float::with_val(prec, x.abs_ref());
        let mut vals = Vec::with_capacity(2 * dim);
        let mut xp = w.clone();
        for _ in 0..dim {
            vals.push(xp.clone());
            xp *= x;
        }
        let mut ap = w;
        for _ in 0..dim {
            vals.push(ap.clone());
            ap *= &ax;
        }
        vals
    })?;
    Ok(MomentTable {
        prec,
        m: res.values,
        error_estimate: res.differences,
        radius: radius_f,
        level: res.level,
    })
}

/// Coefficients of `x p_n = p_{n+1} + beta_n p_n + gamma_n^2 p_{n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceCoefficients {
    pub prec: u32,
    /// `gamma[0] = 0` by convention, then `gamma_1..gamma_N`.
    pub gamma: Vec<Real>,
    /// `beta_0..beta_{N-1}`.
    pub beta: Vec<Real>,
    /// `h_0..h_{N-1}`.
    pub h: Vec<Real>,
}

impl RecurrenceCoefficients {
    /// Number of `beta` values, i.e. the truncation order `N`.
    pub fn order(&self) -> usize {
        self.beta.len()
    }

    pub fn gamma(&self, n: usize) -> &Real {
        &self.gamma[n]
    }

    pub fn beta(&self, n: usize) -> &Real {
        &self.beta[n]
    }

    pub fn h(&self, n: usize) -> &Real {
        &self.h[n]
    }

    /// Keeps `beta_0..beta_{n-1}`, `gamma_1..gamma_n`, `h_0..h_{n-1}`.
    pub fn truncated(&self, n: usize) -> Self {
        assert!(n <= self.order());
        RecurrenceCoefficients {
            prec: self.prec,
            gamma: self.gamma[..=n].to_vec(),
            beta: self.beta[..n].to_vec(),
            h: self.h[..n].to_vec(),
        }
    }

    pub fn rounded(&self, prec: u32) -> Self {
        let r = |v: &Vec<Real>| v.iter().map(|x| real::round_to(x, prec)).collect();
        RecurrenceCoefficients {
            prec,
            gamma: r(&self.gamma),
            beta: r(&self.beta),
            h: r(&self.h),
        }
    }

    /// Copy with `gamma_n <- gamma_n + delta` (fault injection; `h` is left alone).
    pub fn with_gamma_shift(&self, n: usize, delta: &Real) -> Result<Self> {
        if n == 0 || n >= self.gamma.len() {
            return Err(Error::InvalidIndex(format!(
                "gamma index {n} outside 1..={}",
                self.gamma.len() - 1
            )));
        }
        let mut out = self.clone();
        out.gamma[n] += delta;
        Ok(out)
    }

    /// Copy with `beta_n <- beta_n + delta`.
    pub fn with_beta_shift(&self, n: usize, delta: &Real) -> Result<Self> {
        if n >= self.beta.len() {
            return Err(Error::InvalidIndex(format!(
                "beta index {n} outside 0..{}",
                self.beta.len()
            )));
        }
        let mut out = self.clone();
        out.beta[n] += delta;
        Ok(out)
    }
}

/// Chebyshev's algorithm on the raw moments. Needs `m_0..m_{2N}`.
pub fn recurrence_from_moments(mt: &MomentTable, order: usize) -> Result<RecurrenceCoefficients> {
    let prec = mt.prec;
    if order == 0 {
        return Err(Error::InvalidIndex("order N must be at least 1".into()));
    }
    if mt.m.len() < 2 * order + 1 {
        return Err(Error::InvalidIndex(format!(
            "order {order} needs {} moments, table has {}",
            2 * order + 1,
            mt.m.len()
        )));
    }
    if mt.m[0] <= 0 {
        return Err(Error::HankelSingular { n: 0 });
    }
    let floor = real::pow2(prec, -((prec - 16) as i32));
    let top = 2 * order;

    // sigma[k][l] for l in 0..=top (entries below l = k unused)
    let mut prev2: Vec<Real> = vec![real::zero(prec); top + 2];
    let mut prev: Vec<Real> = mt.m.iter().take(top + 1).cloned().collect();
    prev.push(real::zero(prec));

    let mut a = vec![Float::with_val(prec, &mt.m[1] / &mt.m[0])];
    let mut b = vec![mt.m[0].clone()];
    let mut h = vec![mt.m[0].clone()];
    let mut gamma = vec![real::zero(prec)];

    for k in 1..=order {
        let mut cur = vec![real::zero(prec); top + 2];
        let mut scale = real::zero(prec);
        for l in k..=(top - k) {
            let t1 = prev[l + 1].clone();
            let t2 = Float::with_val(prec, &a[k - 1] * &prev[l]);
            let t3 = if k >= 2 {
                Float::with_val(prec, &b[k - 1] * &prev2[l])
            } else {
                real::zero(prec)
            };
            if l == k {
                scale = Float::with_val(prec, t1.abs_ref())
                    + Float::with_val(prec, t2.abs_ref())
                    + Float::with_val(prec, t3.abs_ref());
            }
            cur[l] = t1 - t2 - t3;
        }
        let skk = cur[k].clone();
        if skk <= 0 || skk < Float::with_val(prec, &scale * &floor) {
            return Err(Error::HankelSingular { n: k });
        }
        let bk = Float::with_val(prec, &skk / &prev[k - 1]);
        gamma.push(Float::with_val(prec, bk.sqrt_ref()));
        b.push(bk);
        if k < order {
            let ak = Float::with_val(prec, &cur[k + 1] / &skk)
                - Float::with_val(prec, &prev[k] / &prev[k - 1]);
            a.push(ak);
            h.push(skk);
        }
        prev2 = prev;
        prev = cur;
    }
    Ok(RecurrenceCoefficients {
        prec,
        gamma,
        beta: a,
        h,
    })
}

/// Orthonormal Stieltjes procedure on the trapezoid discretization with `nodes` points.
pub fn recurrence_stieltjes(
    p: &Potential,
    order: usize,
    nodes: usize,
    prec: u32,
) -> Result<RecurrenceCoefficients> {
    p.check_admissible()?;
    if order == 0 {
        return Err(Error::InvalidIndex("order N must be at least 1".into()));
    }
    let radius = real::from_f64(prec, quadrature::truncation_radius(p, 2 * order + 1, prec));
    let grid = quadrature::trapezoid_measure(p, prec, &radius, nodes);
    stieltjes_on_grid(&grid, order, prec)
}

fn stieltjes_on_grid(
    grid: &[(Real, Real)],
    order: usize,
    prec: u32,
) -> Result<RecurrenceCoefficients> {
    let floor = real::pow2(prec, -((prec - 8) as i32));
    let h0: Real = grid.iter().fold(real::zero(prec), |acc, (_, w)| acc + w);
    if h0 <= 0 {
        return Err(Error::BreakdownAtStep { n: 0 });
    }
    let inv = Float::with_val(prec, h0.sqrt_ref()).recip();
    let mut q_prev: Vec<Real> = vec![real::zero(prec); grid.len()];
    let mut q: Vec<Real> = vec![inv; grid.len()];
    let mut gamma = vec![real::zero(prec)];
    let mut beta = Vec::with_capacity(order);
    let mut h = vec![h0];

    for n in 0..order {
        let bn: Real = grid
            .par_iter()
            .zip(q.par_iter())
            .map(|((x, w), qn)| Float::with_val(prec, w * qn) * qn * x)
            .collect::<Vec<_>>()
            .into_iter()
            .fold(real::zero(prec), |a, b| a + b);
        let gn = gamma[n].clone();
        let r: Vec<Real> = grid
            .par_iter()
            .zip(q.par_iter().zip(q_prev.par_iter()))
            .map(|((x, _), (qn, qp))| {
                Float::with_val(prec, x - &bn) * qn - Float::with_val(prec, &gn * qp)
            })
            .collect();
        let norm2: Real = grid
            .par_iter()
            .zip(r.par_iter())
            .map(|((_, w), rn)| Float::with_val(prec, w * rn) * rn)
            .collect::<Vec<_>>()
            .into_iter()
            .fold(real::zero(prec), |a, b| a + b);
        beta.push(bn);
        if norm2 <= 0 || norm2 < floor {
            return Err(Error::BreakdownAtStep { n: n + 1 });
        }
        let g = Float::with_val(prec, norm2.sqrt_ref());
        if n + 1 < order {
            let hn = Float::with_val(prec, &h[n] * &norm2);
            h.push(hn);
        }
        q_prev = q;
        q = r.into_iter().map(|v| v / &g).collect();
        gamma.push(g);
    }
    Ok(RecurrenceCoefficients {
        prec,
        gamma,
        beta,
        h,
    })
}

/// Per-index relative discrepancies between two coefficient sets.
#[derive(Debug, Clone, Serialize)]
pub struct CrossValidation {
    /// `(n, rel diff of gamma_n, rel diff of beta_n)`; `gamma_0` is reported as 0.
    pub per_n: Vec<(usize, f64, f64)>,
    pub max: f64,
    pub worst_n: usize,
}

/// Relative discrepancy over the shared indices. `beta_n` is measured against
/// the local scale `max(|beta|, gamma_n, gamma_{n+1})` because it vanishes for
/// even weights.
pub fn cross_validate(a: &RecurrenceCoefficients, b: &RecurrenceCoefficients) -> CrossValidation {
    let prec = a.prec.max(b.prec);
    let shared = a.order().min(b.order());
    let mut per_n = Vec::with_capacity(shared);
    let mut max = 0.0;
    let mut worst_n = 0;
    for n in 0..shared {
        let dg = if n == 0 {
            0.0
        } else {
            real::rel_diff(&a.gamma[n], &b.gamma[n], &real::zero(prec)).to_f64()
        };
        let mut local = a.gamma[n + 1].clone();
        if a.gamma[n] > local {
            local = a.gamma[n].clone();
        }
        let db = real::rel_diff(&a.beta[n], &b.beta[n], &local).to_f64();
        let worst = dg.max(db);
        if worst > max {
            max = worst;
            worst_n = n;
        }
        per_n.push((n, dg, db));
    }
    CrossValidation {
        per_n,
        max,
        worst_n,
    }
}

/// Knobs for [`certified_recurrence`].
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Extra bits for the (ill-conditioned) moment route, on top of the working precision.
    pub moment_guard_bits: u32,
    /// Extra bits per unit of `N` for the moment route.
    pub moment_guard_bits_per_order: u32,
    /// Extra bits for the Stieltjes route.
    pub stieltjes_guard_bits: u32,
    /// Required agreement, as a power of two relative to the working precision:
    /// backends must agree to `2^{-prec * agreement_fraction}`.
    pub agreement_fraction: f64,
    pub initial_nodes: usize,
    pub max_nodes: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            moment_guard_bits: 48,
            moment_guard_bits_per_order: 4,
            stieltjes_guard_bits: 32,
            agreement_fraction: 0.5,
            initial_nodes: 256,
            max_nodes: 1 << 16,
        }
    }
}

/// Result of [`certified_recurrence`]: exported coefficients plus both raw backends.
#[derive(Debug, Clone)]
pub struct CertifiedRecurrence {
    pub coefficients: RecurrenceCoefficients,
    pub from_moments: RecurrenceCoefficients,
    pub from_stieltjes: RecurrenceCoefficients,
    pub agreement: CrossValidation,
    pub stieltjes_nodes: usize,
    pub moment_prec: u32,
}

/// Discrete Stieltjes with node doubling until two successive grids agree.
pub fn stieltjes_converged(
    p: &Potential,
    order: usize,
    prec: u32,
    opts: &SolveOptions,
) -> Result<(RecurrenceCoefficients, usize)> {
    let mut nodes = opts.initial_nodes;
    let mut prev = recurrence_stieltjes(p, order, nodes + 1, prec)?;
    let target = 2f64.powi(-(prec.saturating_sub(opts.stieltjes_guard_bits + 8) as i32));
    loop {
        let next_nodes = nodes * 2;
        let next = recurrence_stieltjes(p, order, next_nodes + 1, prec)?;
        let cv = cross_validate(&prev, &next);
        if cv.max <= target {
            return Ok((next, next_nodes + 1));
        }
        if next_nodes >= opts.max_nodes {
            return Err(Error::PrecisionUnreachable {
                what: format!("discrete Stieltjes with {} nodes", next_nodes + 1),
                estimate: format!("{:.3e}", cv.max),
                target: format!("{target:.3e}"),
            });
        }
        prev = next;
        nodes = next_nodes;
    }
}

/// Recurrence coefficients `gamma_1..gamma_N`, `beta_0..beta_{N-1}`,
/// `h_0..h_{N-1}` at `prec` bits, certified by agreement of both backends.
pub fn certified_recurrence(
    p: &Potential,
    order: usize,
    prec: u32,
    opts: &SolveOptions,
) -> Result<CertifiedRecurrence> {
    p.check_admissible()?;
    let moment_prec =
        prec + opts.moment_guard_bits + opts.moment_guard_bits_per_order * order as u32;
    let stieltjes_prec = prec + opts.stieltjes_guard_bits;
    let (from_moments, stieltjes) = rayon::join(
        || {
            let mt = compute_moments(p, 2 * order, moment_prec)?;
            recurrence_from_moments(&mt, order)
        },
        || stieltjes_converged(p, order, stieltjes_prec, opts),
    );
    let from_moments = from_moments?;
    let (from_stieltjes, stieltjes_nodes) = stieltjes?;
    let agreement = cross_validate(&from_moments, &from_stieltjes);
    let tol = 2f64.powf(-(prec as f64) * opts.agreement_fraction);
    if agreement.max > tol {
        return Err(Error::BackendDisagreement {
            n: agreement.worst_n,
            discrepancy: format!("{:.3e}", agreement.max),
            tolerance: format!("{tol:.3e}"),
        });
    }
    let mut coefficients = from_stieltjes.rounded(prec);
    if p.is_even() {
        // beta_n = 0 exactly for symmetric weights; drop the quadrature noise.
        for b in &mut coefficients.beta {
            *b = real::zero(prec);
        }
    }
    Ok(CertifiedRecurrence {
        coefficients,
        from_moments,
        from_stieltjes,
        agreement,
        stieltjes_nodes,
        moment_prec,
    })
}
