//! Monic polynomials `p_n`, wavefunctions `psi_n = p_n e^{-V/2} / sqrt(h_n)`
//! and finite-difference derivatives used as oracles.

use rug::Float;

use crate::error::{Error, Result};
use crate::moments::RecurrenceCoefficients;
use crate::potential::Potential;
use crate::quadrature;
use crate::real::{self, Real};

#[derive(Debug, Clone)]
pub struct WaveState {
    pub rc: RecurrenceCoefficients,
    pub potential: Potential,
    prec: u32,
}

impl WaveState {
    pub fn new(potential: &Potential, rc: &RecurrenceCoefficients) -> Result<Self> {
        if rc.h.is_empty() || rc.h[0] <= 0 {
            return Err(Error::InvalidIndex("h_0 must be positive".into()));
        }
        Ok(WaveState {
            rc: rc.clone(),
            potential: potential.with_prec(rc.prec),
            prec: rc.prec,
        })
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    /// Largest `n` for which `psi_n` can be evaluated (needs `gamma_n`).
    pub fn max_n(&self) -> usize {
        self.rc.order()
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n > self.max_n() {
            return Err(Error::InvalidIndex(format!(
                "n = {n} exceeds available recurrence order {}",
                self.max_n()
            )));
        }
        Ok(())
    }

    /// `h_n = h_0 prod_{i<=n} gamma_i^2`.
    pub fn h(&self, n: usize) -> Real {
        if n < self.rc.h.len() {
            return self.rc.h[n].clone();
        }
        let mut h = self.rc.h[0].clone();
        for i in 1..=n {
            h *= Float::with_val(self.prec, self.rc.gamma[i].square_ref());
        }
        h
    }

    /// `p_n(x)` from `p_{n+1} = (x - beta_n) p_n - gamma_n^2 p_{n-1}`.
    pub fn eval_monic(&self, n: usize, x: &Real) -> Result<Real> {
        self.check_n(n)?;
        let prec = self.prec;
        let mut prev = real::zero(prec);
        let mut cur = real::one(prec);
        for i in 0..n {
            let g2 = Float::with_val(prec, self.rc.gamma[i].square_ref());
            let next = Float::with_val(prec, x - &self.rc.beta[i]) * &cur - g2 * &prev;
            prev = cur;
            cur = next;
        }
        Ok(cur)
    }

    /// `psi_0(x) .. psi_n(x)` by the orthonormal recurrence
    /// `gamma_{i+1} psi_{i+1} = (x - beta_i) psi_i - gamma_i psi_{i-1}`.
    pub fn eval_psi_all(&self, n: usize, x: &Real) -> Result<Vec<Real>> {
        self.check_n(n)?;
        let prec = self.prec;
        let weight = Float::with_val(prec, -self.potential.eval_v(x) / 2u32).exp();
        let mut out = Vec::with_capacity(n + 1);
        out.push(weight / Float::with_val(prec, self.rc.h[0].sqrt_ref()));
        let mut prev = real::zero(prec);
        for i in 0..n {
            let cur = &out[i];
            let num = Float::with_val(prec, x - &self.rc.beta[i]) * cur
                - Float::with_val(prec, &self.rc.gamma[i] * &prev);
            let next = num / &self.rc.gamma[i + 1];
            prev = cur.clone();
            out.push(next);
        }
        Ok(out)
    }

    pub fn eval_psi(&self, n: usize, x: &Real) -> Result<Real> {
        Ok(self.eval_psi_all(n, x)?.pop().unwrap())
    }

    /// `p_n(x) e^{-V(x)/2} / sqrt(h_n)`: the direct route, for cross-checks.
    pub fn eval_psi_monic_route(&self, n: usize, x: &Real) -> Result<Real> {
        let prec = self.prec;
        let pn = self.eval_monic(n, x)?;
        let weight = Float::with_val(prec, -self.potential.eval_v(x) / 2u32).exp();
        Ok(pn * weight / Float::with_val(prec, self.h(n).sqrt_ref()))
    }

    /// Central difference `(psi_n(x+h) - psi_n(x-h)) / 2h`.
    pub fn fd_derivative(&self, n: usize, x: &Real, h: &Real) -> Result<Real> {
        central_difference(h, |t| self.eval_psi(n, t), x)
    }

    /// One Richardson step on the central difference: `(4 D(h/2) - D(h)) / 3`.
    pub fn fd_derivative_richardson(&self, n: usize, x: &Real, h: &Real) -> Result<Real> {
        richardson(h, |t| self.eval_psi(n, t), x)
    }

    /// Derivative of the whole vector `psi_0..psi_n`, Richardson-extrapolated.
    pub fn fd_derivative_all(&self, n: usize, x: &Real, h: &Real) -> Result<Vec<Real>> {
        let prec = self.prec;
        let half = Float::with_val(prec, h / 2u32);
        let d = |step: &Real| -> Result<Vec<Real>> {
            let plus = self.eval_psi_all(n, &Float::with_val(prec, x + step))?;
            let minus = self.eval_psi_all(n, &Float::with_val(prec, x - step))?;
            let two_h = Float::with_val(prec, step * 2u32);
            Ok(plus
                .into_iter()
                .zip(minus)
                .map(|(a, b)| (a - b) / &two_h)
                .collect())
        };
        let coarse = d(h)?;
        let fine = d(&half)?;
        Ok(fine
            .into_iter()
            .zip(coarse)
            .map(|(f, c)| (f * 4u32 - c) / 3u32)
            .collect())
    }

    /// `|int psi_n psi_m - delta_nm|` for all `0 <= n <= m <= max_n`, by tanh-sinh.
    /// Entry `[n][m - n]` holds the residual of the pair `(n, m)`.
    pub fn orthonormality_residuals(&self, max_n: usize) -> Result<Vec<Vec<Real>>> {
        self.check_n(max_n)?;
        let prec = self.prec;
        let radius = real::from_f64(
            prec,
            quadrature::truncation_radius(&self.potential, 2 * max_n + 2, prec),
        );
        let pairs: Vec<(usize, usize)> = (0..=max_n)
            .flat_map(|n| (n..=max_n).map(move |m| (n, m)))
            .collect();
        let dim = pairs.len();
        let target = real::pow2(prec, -((prec - 24) as i32));
        let res = quadrature::tanh_sinh_adaptive(prec, &radius, dim, &target, "orthonormality", |x| {
            let psi = self
                .eval_psi_all(max_n, x)
                .expect("index checked above");
            let mut vals: Vec<Real> = pairs
                .iter()
                .map(|&(n, m)| Float::with_val(prec, &psi[n] * &psi[m]))
                .collect();
            let abs: Vec<Real> = vals.iter().map(|v| Float::with_val(prec, v.abs_ref())).collect();
            vals.extend(abs);
            vals
        })?;
        let mut out: Vec<Vec<Real>> = (0..=max_n).map(|_| Vec::new()).collect();
        for ((n, m), v) in pairs.into_iter().zip(res.values) {
            let r = if n == m { v - 1u32 } else { v };
            out[n].push(r.abs());
        }
        Ok(out)
    }

    pub fn orthonormality_residual(&self, n: usize, m: usize) -> Result<Real> {
        let (a, b) = if n <= m { (n, m) } else { (m, n) };
        let all = self.orthonormality_residuals(b)?;
        Ok(all[a][b - a].clone())
    }
}

/// Default finite-difference step `2^{-prec/3} (1 + |x|)`.
pub fn default_fd_step(prec: u32, x: &Real) -> Real {
    let base = real::pow2(prec, -((prec / 3) as i32));
    base * (Float::with_val(prec, x.abs_ref()) + 1u32)
}

pub fn central_difference<F>(h: &Real, f: F, x: &Real) -> Result<Real>
where
    F: Fn(&Real) -> Result<Real>,
{
    let prec = x.prec().max(h.prec());
    let plus = f(&Float::with_val(prec, x + h))?;
    let minus = f(&Float::with_val(prec, x - h))?;
    Ok((plus - minus) / Float::with_val(prec, h * 2u32))
}

pub fn richardson<F>(h: &Real, f: F, x: &Real) -> Result<Real>
where
    F: Fn(&Real) -> Result<Real>,
{
    let prec = x.prec().max(h.prec());
    let coarse = central_difference(h, &f, x)?;
    let fine = central_difference(&Float::with_val(prec, h / 2u32), &f, x)?;
    Ok((fine * 4u32 - coarse) / 3u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::float::Constant;
    use rug::ops::Pow;

    fn hermite_state(prec: u32, order: usize) -> WaveState {
        let p = Potential::from_f64(prec, &[(2, 2.0)]).unwrap();
        let sqrt_pi = Float::with_val(prec, Constant::Pi).sqrt();
        let gamma: Vec<Real> = (0..=order)
            .map(|n| Float::with_val(prec, n as f64 / 2.0).sqrt())
            .collect();
        let mut h = vec![sqrt_pi];
        for n in 1..order {
            let next = Float::with_val(prec, &h[n - 1] * n as u32) / 2u32;
            h.push(next);
        }
        let rc = RecurrenceCoefficients {
            prec,
            gamma,
            beta: vec![real::zero(prec); order],
            h,
        };
        WaveState::new(&p, &rc).unwrap()
    }

    #[test]
    fn monic_polynomials() {
        let w = hermite_state(128, 6);
        let x = real::from_f64(128, 0.7);
        assert_eq!(w.eval_monic(0, &x).unwrap(), 1.0);
        assert_eq!(w.eval_monic(1, &x).unwrap(), x);
        // p_2 = x^2 - 1/2
        let p2 = w.eval_monic(2, &x).unwrap();
        let expect = Float::with_val(128, x.square_ref()) - 0.5;
        assert!(Float::with_val(128, p2 - expect).abs() < real::pow2(128, -120));
        // monic: p_5(x) / x^5 -> 1
        let big = real::from_f64(128, 1e12);
        let ratio = w.eval_monic(5, &big).unwrap() / Float::with_val(128, big.clone().pow(5u32));
        assert!((ratio.to_f64() - 1.0).abs() < 1e-20);
    }

    #[test]
    fn hermite_psi1_closed_form() {
        let prec = 160;
        let w = hermite_state(prec, 4);
        let x = real::from_f64(prec, -1.3);
        // sqrt 2 x e^{-x^2/2} / pi^{1/4}
        let pi = Float::with_val(prec, Constant::Pi);
        let expect = Float::with_val(prec, 2).sqrt() * &x
            * (-Float::with_val(prec, x.square_ref()) / 2u32).exp()
            / pi.root(4);
        let got = w.eval_psi(1, &x).unwrap();
        assert!(Float::with_val(prec, got - expect).abs() < real::pow2(prec, -150));
    }

    #[test]
    fn routes_agree_and_recurrence_holds() {
        let prec = 128;
        let w = hermite_state(prec, 10);
        let x = real::from_f64(prec, 0.37);
        let psi = w.eval_psi_all(10, &x).unwrap();
        for (n, p) in psi.iter().enumerate().take(10) {
            let mono = w.eval_psi_monic_route(n, &x).unwrap();
            assert!(Float::with_val(prec, &mono - p).abs() < real::pow2(prec, -110));
        }
        for n in 1..9 {
            let lhs = Float::with_val(prec, &x * &psi[n]);
            let rhs = Float::with_val(prec, &w.rc.gamma[n + 1] * &psi[n + 1])
                + Float::with_val(prec, &w.rc.gamma[n] * &psi[n - 1]);
            assert!(Float::with_val(prec, lhs - rhs).abs() < real::pow2(prec, -115));
        }
        assert!(w.eval_psi(11, &x).is_err());
    }

    #[test]
    fn fd_order_two() {
        let prec = 128;
        let w = hermite_state(prec, 3);
        let x = real::from_f64(prec, 0.4);
        // psi_0' = -V'/2 psi_0 = -x psi_0
        let exact = -Float::with_val(prec, &x * &w.eval_psi(0, &x).unwrap());
        let e1 = Float::with_val(prec, w.fd_derivative(0, &x, &real::from_f64(prec, 1e-3)).unwrap() - &exact).abs();
        let e2 = Float::with_val(prec, w.fd_derivative(0, &x, &real::from_f64(prec, 5e-4)).unwrap() - &exact).abs();
        let ratio = (e1 / e2).to_f64();
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
        let rich = w.fd_derivative_richardson(0, &x, &real::from_f64(prec, 1e-3)).unwrap();
        assert!(Float::with_val(prec, rich - &exact).abs() < real::pow2(prec, -40));
    }

    #[test]
    fn orthonormal_hermite() {
        let prec = 128;
        let w = hermite_state(prec, 6);
        let res = w.orthonormality_residuals(5).unwrap();
        for row in &res {
            for r in row {
                assert!(*r < real::pow2(prec, -90));
            }
        }
        assert!(w.orthonormality_residual(3, 1).unwrap() < real::pow2(prec, -90));
    }
}
