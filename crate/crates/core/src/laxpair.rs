//! The 2x2 polynomial systems acting on `(psi_{n-1}, psi_n)`.
//!
//! With `R(x) = (V'(Q) - V'(x)) / (Q - x)` and `g = gamma_n`,
//!
//! ```text
//! D_n(x) = V'(x)/2 diag(1, -1) + [[R_{n-1,n-1}, R_{n-1,n}], [R_{n,n-1}, R_{n,n}]] [[0, -g], [g, 0]]
//! ```
//!
//! gives `d/dx (psi_{n-1}, psi_n) = D_n (psi_{n-1}, psi_n)`, and with
//! `S_k(x) = (x^k - Q^k) / (x - Q)`,
//!
//! ```text
//! U_k(x) = 1/(2k) diag(x^k - Q^k_{n-1,n-1}, Q^k_{n,n} - x^k)
//!        + g/k [[S_{n,n-1}, -S_{n-1,n-1}], [S_{n,n}, -S_{n,n-1}]]
//! ```
//!
//! gives `d/du_k (psi_{n-1}, psi_n) = U_k (psi_{n-1}, psi_n)`.
//!
//! `u_n(x) = R_{n,n-1}(x)` and `v_n(x) = R_{n,n}(x)` are stored without the
//! `gamma_n` prefactor; it is applied when the 2x2 blocks are assembled.

use rug::Float;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jacobi::{divided_difference_entry, trim_threshold, BandedOperator, Powers};
use crate::moments::RecurrenceCoefficients;
use crate::poly::Poly;
use crate::potential::Potential;
use crate::real::{self, Real};

/// 2x2 matrix with polynomial entries, attached to the index `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrix2x2 {
    pub n: usize,
    /// `entries[row][col]`.
    pub entries: [[Poly; 2]; 2],
    /// Degree the entries are guaranteed not to exceed.
    pub degree_bound: usize,
}

/// JSON form: coefficient arrays in ascending powers as decimal strings.
#[derive(Debug, Clone, Serialize)]
pub struct PolyMatrixJson {
    pub n: usize,
    pub degree_bound: usize,
    pub entries: [[Vec<String>; 2]; 2],
}

impl PolyMatrix2x2 {
    pub fn prec(&self) -> u32 {
        self.entries[0][0].prec()
    }

    pub fn eval(&self, x: &Real) -> [[Real; 2]; 2] {
        let e = &self.entries;
        [
            [e[0][0].eval(x), e[0][1].eval(x)],
            [e[1][0].eval(x), e[1][1].eval(x)],
        ]
    }

    /// `M(x) v`.
    pub fn apply(&self, x: &Real, v: &[Real; 2]) -> [Real; 2] {
        let m = self.eval(x);
        let prec = self.prec();
        [
            Float::with_val(prec, &m[0][0] * &v[0]) + Float::with_val(prec, &m[0][1] * &v[1]),
            Float::with_val(prec, &m[1][0] * &v[0]) + Float::with_val(prec, &m[1][1] * &v[1]),
        ]
    }

    pub fn trace(&self) -> Poly {
        self.entries[0][0].add(&self.entries[1][1])
    }

    pub fn det(&self) -> Poly {
        let e = &self.entries;
        e[0][0].mul(&e[1][1]).sub(&e[0][1].mul(&e[1][0]))
    }

    fn zip(&self, other: &PolyMatrix2x2, f: impl Fn(&Poly, &Poly) -> Poly) -> PolyMatrix2x2 {
        let a = &self.entries;
        let b = &other.entries;
        PolyMatrix2x2 {
            n: self.n,
            entries: [
                [f(&a[0][0], &b[0][0]), f(&a[0][1], &b[0][1])],
                [f(&a[1][0], &b[1][0]), f(&a[1][1], &b[1][1])],
            ],
            degree_bound: self.degree_bound.max(other.degree_bound),
        }
    }

    pub fn add(&self, other: &PolyMatrix2x2) -> PolyMatrix2x2 {
        self.zip(other, Poly::add)
    }

    pub fn sub(&self, other: &PolyMatrix2x2) -> PolyMatrix2x2 {
        self.zip(other, Poly::sub)
    }

    pub fn scale(&self, s: &Real) -> PolyMatrix2x2 {
        self.zip(self, |a, _| a.scale(s))
    }

    /// Multiplies every entry by `x`.
    pub fn shift(&self) -> PolyMatrix2x2 {
        let mut out = self.zip(self, |a, _| a.shift());
        out.degree_bound += 1;
        out
    }

    pub fn max_abs_coeff(&self) -> Real {
        let prec = self.prec();
        let mut m = real::zero(prec);
        for row in &self.entries {
            for e in row {
                let c = e.max_abs_coeff();
                if c > m {
                    m = c;
                }
            }
        }
        m
    }

    /// Largest coefficientwise difference over all four entries.
    pub fn max_abs_diff(&self, other: &PolyMatrix2x2) -> Real {
        self.sub(other).max_abs_coeff()
    }

    /// Largest entry degree after trimming relative roundoff.
    pub fn trimmed_degree(&self) -> Option<usize> {
        let thr = trim_threshold(self.prec());
        self.entries
            .iter()
            .flatten()
            .filter_map(|e| e.trimmed_degree(&thr))
            .max()
    }

    pub fn to_json(&self) -> PolyMatrixJson {
        let e = &self.entries;
        PolyMatrixJson {
            n: self.n,
            degree_bound: self.degree_bound,
            entries: [
                [e[0][0].to_decimal_strings(), e[0][1].to_decimal_strings()],
                [e[1][0].to_decimal_strings(), e[1][1].to_decimal_strings()],
            ],
        }
    }
}

/// `u_n = R_{n,n-1}` and `v_n = R_{n,n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeData {
    pub n: usize,
    pub u: Poly,
    pub v: Poly,
    pub gamma: Real,
}

/// `Q`, its powers and `V'(Q)` for one potential, plus every object built from them.
#[derive(Debug, Clone)]
pub struct LaxSystem {
    potential: Potential,
    rc: RecurrenceCoefficients,
    vprime: Vec<Real>,
    powers: Powers,
    vprime_q: BandedOperator,
    prec: u32,
}

impl LaxSystem {
    /// Caches `Q^0..Q^K` with `K = max(deg V', max_k + 1)`.
    pub fn new(potential: &Potential, rc: &RecurrenceCoefficients, max_k: usize) -> Self {
        let prec = rc.prec;
        let potential = potential.with_prec(prec);
        let vprime = potential.vprime_coeffs();
        let d = potential.vprime_degree();
        let q = BandedOperator::from_recurrence(rc);
        let powers = Powers::new(&q, d.max(max_k + 1));
        // Summing exactly symmetric powers keeps V'(Q) exactly symmetric.
        let mut vprime_q = BandedOperator::zeros(q.size(), d, prec).with_trust(q.trust());
        for (j, c) in vprime.iter().enumerate() {
            if !c.is_zero() {
                vprime_q = vprime_q.add(&powers.get(j).scale(c));
            }
        }
        LaxSystem {
            potential,
            rc: rc.clone(),
            vprime,
            powers,
            vprime_q,
            prec,
        }
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn recurrence(&self) -> &RecurrenceCoefficients {
        &self.rc
    }

    pub fn q(&self) -> &BandedOperator {
        self.powers.q()
    }

    pub fn powers(&self) -> &Powers {
        &self.powers
    }

    /// `V'(Q)`.
    pub fn vprime_q(&self) -> &BandedOperator {
        &self.vprime_q
    }

    /// `d = deg V'`.
    pub fn d(&self) -> usize {
        self.potential.vprime_degree()
    }

    pub fn gamma(&self, n: usize) -> &Real {
        self.rc.gamma(n)
    }

    pub fn beta(&self, n: usize) -> &Real {
        self.rc.beta(n)
    }

    /// Largest `n` for which `D_n`, `U_k` (`k <= max_k`) and the recurrence checks are available.
    pub fn max_n(&self) -> usize {
        let trust_r = self.powers.get(self.d().saturating_sub(1)).trust();
        // recurrence checks touch R_{n+1,n+1}
        trust_r.saturating_sub(2)
    }

    fn require_n(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidIndex(
                "the 2x2 systems act on (psi_{n-1}, psi_n) and need n >= 1".into(),
            ));
        }
        Ok(())
    }

    /// `eta_{k,n} = V'(Q)_{n,n+k}`.
    pub fn eta(&self, k: usize, n: usize) -> Result<Real> {
        if k == 0 || k > self.d() {
            return Err(Error::InvalidIndex(format!("eta offset k = {k} outside 1..={}", self.d())));
        }
        self.vprime_q.entry(n, n + k)
    }

    /// `P = -1/2 (V'(Q)_+ - V'(Q)_-)`, antisymmetric by construction.
    pub fn p_matrix(&self) -> BandedOperator {
        antisymmetric_from_upper(&self.vprime_q, &real::from_f64(self.prec, -0.5))
    }

    /// `U_k = -1/(2k) ((Q^k)_+ - (Q^k)_-)`, antisymmetric by construction.
    pub fn u_k_matrix(&self, k: usize) -> Result<BandedOperator> {
        if k == 0 || k > self.powers.max_power() {
            return Err(Error::InvalidIndex(format!(
                "U_k needs 1 <= k <= {}, got {k}",
                self.powers.max_power()
            )));
        }
        let s = Float::with_val(self.prec, -1) / (2 * k as u32);
        Ok(antisymmetric_from_upper(self.powers.get(k), &s))
    }

    /// `R(x)_{n,m}`.
    pub fn r_entry(&self, n: usize, m: usize) -> Result<Poly> {
        divided_difference_entry(&self.vprime, &self.powers, n, m)
    }

    /// `S_k(x)_{n,m} = ((x^k - Q^k)/(x - Q))_{n,m}`.
    pub fn s_entry(&self, k: usize, n: usize, m: usize) -> Result<Poly> {
        let mut c = vec![real::zero(self.prec); k + 1];
        c[k] = real::one(self.prec);
        divided_difference_entry(&c, &self.powers, n, m)
    }

    pub fn derivative_data(&self, n: usize) -> Result<DerivativeData> {
        self.require_n(n)?;
        Ok(DerivativeData {
            n,
            u: self.r_entry(n, n - 1)?,
            v: self.r_entry(n, n)?,
            gamma: self.gamma(n).clone(),
        })
    }

    /// `D_n(x)`, degree at most `d`.
    pub fn d_matrix(&self, n: usize) -> Result<PolyMatrix2x2> {
        self.require_n(n)?;
        let g = self.gamma(n).clone();
        let half_vp = Poly::from_coeffs(self.prec, self.vprime.clone())
            .scale(&real::from_f64(self.prec, 0.5));
        let r_pp = self.r_entry(n - 1, n - 1)?;
        let r_pn = self.r_entry(n - 1, n)?;
        let r_np = self.r_entry(n, n - 1)?;
        let r_nn = self.r_entry(n, n)?;
        Ok(PolyMatrix2x2 {
            n,
            entries: [
                [half_vp.add(&r_pn.scale(&g)), r_pp.scale(&g).neg()],
                [r_nn.scale(&g), half_vp.neg().sub(&r_np.scale(&g))],
            ],
            degree_bound: self.d(),
        })
    }

    /// `U_k(x)` for the pair `(psi_{n-1}, psi_n)`, degree at most `k`.
    pub fn cal_u_matrix(&self, k: usize, n: usize) -> Result<PolyMatrix2x2> {
        self.require_n(n)?;
        if k == 0 || k > self.powers.max_power() {
            return Err(Error::InvalidIndex(format!(
                "U_k needs 1 <= k <= {}, got {k}",
                self.powers.max_power()
            )));
        }
        let prec = self.prec;
        let g = self.gamma(n).clone();
        let qk = self.powers.get(k);
        let xk = Poly::monomial(real::one(prec), k);
        let half_inv_k = Float::with_val(prec, 1) / (2 * k as u32);
        let g_over_k = Float::with_val(prec, &g / k as u32);
        let top = xk.sub(&Poly::constant(qk.entry(n - 1, n - 1)?)).scale(&half_inv_k);
        let bottom = Poly::constant(qk.entry(n, n)?).sub(&xk).scale(&half_inv_k);
        let s_np = self.s_entry(k, n, n - 1)?;
        let s_pp = self.s_entry(k, n - 1, n - 1)?;
        let s_nn = self.s_entry(k, n, n)?;
        Ok(PolyMatrix2x2 {
            n,
            entries: [
                [top.add(&s_np.scale(&g_over_k)), s_pp.scale(&g_over_k).neg()],
                [s_nn.scale(&g_over_k), bottom.sub(&s_np.scale(&g_over_k))],
            ],
            degree_bound: k,
        })
    }

    /// `sum_{k=1}^{d} u_{k+1} k U_k(x)`.
    pub fn d_from_flows(&self, n: usize) -> Result<PolyMatrix2x2> {
        self.require_n(n)?;
        let prec = self.prec;
        let zero = Poly::zero(prec);
        let mut acc = PolyMatrix2x2 {
            n,
            entries: [[zero.clone(), zero.clone()], [zero.clone(), zero]],
            degree_bound: self.d(),
        };
        for k in 1..=self.d() {
            let c = self.potential.u(k + 1);
            if c.is_zero() {
                continue;
            }
            let w = Float::with_val(prec, &c * k as u32);
            acc = acc.add(&self.cal_u_matrix(k, n)?.scale(&w));
        }
        acc.degree_bound = self.d();
        Ok(acc)
    }

    /// Both sides of the recursion
    /// `-2(k+1) U_{k+1} + 2k x U_k = diag(-(x Q^k - Q^{k+1})_{n-1,n-1}, (x Q^k - Q^{k+1})_{n,n})
    ///   + 2 gamma_n [[-Q^k_{n-1,n}, Q^k_{n-1,n-1}], [-Q^k_{n,n}, Q^k_{n,n-1}]]`.
    pub fn flow_recursion_sides(&self, k: usize, n: usize) -> Result<(PolyMatrix2x2, PolyMatrix2x2)> {
        let prec = self.prec;
        let lhs = self
            .cal_u_matrix(k + 1, n)?
            .scale(&Float::with_val(prec, -2 * (k as i64 + 1)))
            .add(&self.cal_u_matrix(k, n)?.shift().scale(&Float::with_val(prec, 2 * k as i64)));
        let qk = self.powers.get(k);
        let qk1 = self.powers.get(k + 1);
        let two_g = Float::with_val(prec, self.gamma(n) * 2u32);
        let x = Poly::monomial(real::one(prec), 1);
        let diag = |i: usize| -> Result<Poly> {
            Ok(x.scale(&qk.entry(i, i)?).sub(&Poly::constant(qk1.entry(i, i)?)))
        };
        let c = |i: usize, j: usize, sign: i32| -> Result<Poly> {
            let v = Float::with_val(prec, &two_g * &qk.entry(i, j)?) * sign;
            Ok(Poly::constant(v))
        };
        let zero = Poly::zero(prec);
        let rhs = PolyMatrix2x2 {
            n,
            entries: [
                [diag(n - 1)?.neg().add(&c(n - 1, n, -1)?), zero.add(&c(n - 1, n - 1, 1)?)],
                [zero.add(&c(n, n, -1)?), diag(n)?.add(&c(n, n - 1, 1)?)],
            ],
            degree_bound: k + 1,
        };
        Ok((lhs, rhs))
    }

    /// Residual polynomials of
    /// `0 = V' + g_n u_n + g_{n+1} u_{n+1} + (beta_n - x) v_n` and
    /// `1 = (beta_n - x)(g_{n+1} u_{n+1} - g_n u_n) + g_{n+1}^2 v_{n+1} - g_n^2 v_{n-1}`.
    pub fn uv_recurrence_residuals(&self, n: usize) -> Result<(Poly, Poly)> {
        self.require_n(n)?;
        let prec = self.prec;
        let gn = self.gamma(n).clone();
        let gn1 = self.gamma(n + 1).clone();
        let u_n = self.r_entry(n, n - 1)?;
        let u_n1 = self.r_entry(n + 1, n)?;
        let v_n = self.r_entry(n, n)?;
        let v_n1 = self.r_entry(n + 1, n + 1)?;
        let v_p = self.r_entry(n - 1, n - 1)?;
        let beta_minus_x = Poly::from_coeffs(prec, vec![self.beta(n).clone(), real::from_f64(prec, -1.0)]);
        let vp = Poly::from_coeffs(prec, self.vprime.clone());

        let first = vp
            .add(&u_n.scale(&gn))
            .add(&u_n1.scale(&gn1))
            .add(&beta_minus_x.mul(&v_n));
        let gn_sq = Float::with_val(prec, gn.square_ref());
        let gn1_sq = Float::with_val(prec, gn1.square_ref());
        let second = beta_minus_x
            .mul(&u_n1.scale(&gn1).sub(&u_n.scale(&gn)))
            .add(&v_n1.scale(&gn1_sq))
            .sub(&v_p.scale(&gn_sq))
            .sub(&Poly::constant(real::one(prec)));
        Ok((first, second))
    }
}

/// `s * (A_+ - A_-)` built from the upper triangle of `a` so the result is
/// exactly antisymmetric even when `a` is symmetric only up to rounding.
fn antisymmetric_from_upper(a: &BandedOperator, s: &Real) -> BandedOperator {
    let size = a.size();
    let b = a.bandwidth();
    let mut out = BandedOperator::zeros(size, b, a.prec()).with_trust(a.trust());
    for n in 0..size {
        for m in (n + 1)..=(n + b).min(size - 1) {
            let v = Float::with_val(a.prec(), &a.get(n, m) * s);
            out.set(m, n, Float::with_val(a.prec(), -&v));
            out.set(n, m, v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hermite(order: usize, prec: u32) -> (Potential, RecurrenceCoefficients) {
        let p = Potential::from_f64(prec, &[(2, 2.0)]).unwrap();
        let gamma = (0..=order)
            .map(|n| Float::with_val(prec, n as f64 / 2.0).sqrt())
            .collect();
        let rc = RecurrenceCoefficients {
            prec,
            gamma,
            beta: vec![real::zero(prec); order],
            h: vec![real::one(prec); order],
        };
        (p, rc)
    }

    #[test]
    fn hermite_objects() {
        let (p, rc) = hermite(12, 128);
        let lax = LaxSystem::new(&p, &rc, 2);
        assert_eq!(lax.d(), 1);
        let g3 = rc.gamma(3).clone();
        // eta_{1,n} = 2 gamma_{n+1}
        assert_eq!(lax.eta(1, 2).unwrap(), Float::with_val(128, &g3 * 2u32));
        assert!(lax.eta(2, 2).is_err());
        let pm = lax.p_matrix();
        assert_eq!(pm.get(2, 3), Float::with_val(128, -&g3));
        assert_eq!(pm.get(3, 2), g3);
        assert_eq!(pm.max_antisymmetry_defect(), 0.0);

        let dd = lax.derivative_data(3).unwrap();
        assert!(dd.u.is_empty());
        assert_eq!(dd.v.coeff(0), 2.0);

        let d = lax.d_matrix(3).unwrap();
        assert_eq!(d.entries[0][0].coeff(1), 1.0);
        assert_eq!(d.entries[0][1].coeff(0), Float::with_val(128, &g3 * -2i32));
        assert_eq!(d.entries[1][0].coeff(0), Float::with_val(128, &g3 * 2u32));
        assert_eq!(d.entries[1][1].coeff(1), -1.0);
        assert!(d.trace().max_abs_coeff().is_zero());
        assert!(lax.d_matrix(0).is_err());
    }

    #[test]
    fn u1_matches_closed_form() {
        let (p, rc) = hermite(10, 128);
        let lax = LaxSystem::new(&p, &rc, 3);
        let u1 = lax.cal_u_matrix(1, 1).unwrap();
        let g = rc.gamma(1).clone();
        // -1/2 [[beta_0 - x, 2 g], [-2 g, x - beta_1]]
        assert_eq!(u1.entries[0][0].coeff(1), 0.5);
        assert_eq!(u1.entries[0][1].coeff(0), Float::with_val(128, -&g));
        assert_eq!(u1.entries[1][0].coeff(0), g);
        assert_eq!(u1.entries[1][1].coeff(1), -0.5);
        let um = lax.u_k_matrix(1).unwrap();
        assert_eq!(um.get(0, 1), Float::with_val(128, -&g) / 2u32);
        let u2 = lax.u_k_matrix(2).unwrap();
        let expect = Float::with_val(128, rc.gamma(1) * rc.gamma(2)) / -4i32;
        assert!(Float::with_val(128, u2.get(0, 2) - expect).abs() < real::pow2(128, -120));
    }

    #[test]
    fn hermite_flow_sum_is_d() {
        let (p, rc) = hermite(10, 128);
        let lax = LaxSystem::new(&p, &rc, 2);
        for n in 1..5 {
            let a = lax.d_matrix(n).unwrap();
            let b = lax.d_from_flows(n).unwrap();
            assert!(a.max_abs_diff(&b).is_zero());
        }
    }

    #[test]
    fn trust_window_enforced() {
        let (p, rc) = hermite(6, 128);
        let lax = LaxSystem::new(&p, &rc, 3);
        assert!(matches!(
            lax.cal_u_matrix(3, 6),
            Err(Error::OutsideTrustWindow { .. })
        ));
    }
}
