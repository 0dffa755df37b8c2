//! Univariate polynomials with high-precision coefficients (ascending powers).

use std::fmt;

use rug::Float;

use crate::real::{self, Real};

#[derive(Clone, PartialEq)]
pub struct Poly {
    prec: u32,
    coeffs: Vec<Real>,
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cs: Vec<String> = self.coeffs.iter().map(real::to_sci).collect();
        write!(f, "Poly{cs:?}")
    }
}

impl Poly {
    pub fn zero(prec: u32) -> Self {
        Poly {
            prec,
            coeffs: Vec::new(),
        }
    }

    pub fn constant(c: Real) -> Self {
        let prec = c.prec();
        Poly {
            prec,
            coeffs: vec![c],
        }
    }

    /// `c * x^k`.
    pub fn monomial(c: Real, k: usize) -> Self {
        let prec = c.prec();
        let mut coeffs = vec![real::zero(prec); k];
        coeffs.push(c);
        Poly { prec, coeffs }
    }

    pub fn from_coeffs(prec: u32, coeffs: Vec<Real>) -> Self {
        let coeffs = coeffs.into_iter().map(|c| real::round_to(&c, prec)).collect();
        Poly { prec, coeffs }
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn coeffs(&self) -> &[Real] {
        &self.coeffs
    }

    /// Coefficient of `x^i` (zero past the stored length).
    pub fn coeff(&self, i: usize) -> Real {
        self.coeffs
            .get(i)
            .cloned()
            .unwrap_or_else(|| real::zero(self.prec))
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree ignoring exactly-zero trailing coefficients; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|c| !c.is_zero())
    }

    /// Degree after discarding coefficients with `|c| < threshold * max|c|`.
    pub fn trimmed_degree(&self, rel_threshold: &Real) -> Option<usize> {
        let scale = self.max_abs_coeff();
        if scale.is_zero() {
            return None;
        }
        let cut = Float::with_val(self.prec, &scale * rel_threshold);
        self.coeffs
            .iter()
            .rposition(|c| Float::with_val(self.prec, c.abs_ref()) >= cut)
    }

    /// Zeroes coefficients below `rel_threshold * max|c|` and drops trailing zeros.
    pub fn trim(&mut self, rel_threshold: &Real) {
        let scale = self.max_abs_coeff();
        let cut = Float::with_val(self.prec, &scale * rel_threshold);
        for c in &mut self.coeffs {
            if Float::with_val(self.prec, c.abs_ref()) < cut {
                *c = real::zero(self.prec);
            }
        }
        while self.coeffs.last().is_some_and(|c| c.is_zero()) {
            self.coeffs.pop();
        }
    }

    pub fn max_abs_coeff(&self) -> Real {
        real::max_abs(self.prec, &self.coeffs)
    }

    pub fn eval(&self, x: &Real) -> Real {
        let mut acc = real::zero(self.prec.max(x.prec()));
        for c in self.coeffs.iter().rev() {
            acc *= x;
            acc += c;
        }
        acc
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let prec = self.prec.max(other.prec);
        let n = self.len().max(other.len());
        let coeffs = (0..n)
            .map(|i| Float::with_val(prec, &self.coeff(i) + &other.coeff(i)))
            .collect();
        Poly { prec, coeffs }
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let prec = self.prec.max(other.prec);
        let n = self.len().max(other.len());
        let coeffs = (0..n)
            .map(|i| Float::with_val(prec, &self.coeff(i) - &other.coeff(i)))
            .collect();
        Poly { prec, coeffs }
    }

    pub fn neg(&self) -> Poly {
        Poly {
            prec: self.prec,
            coeffs: self.coeffs.iter().map(|c| Float::with_val(self.prec, -c)).collect(),
        }
    }

    pub fn scale(&self, s: &Real) -> Poly {
        Poly {
            prec: self.prec,
            coeffs: self
                .coeffs
                .iter()
                .map(|c| Float::with_val(self.prec, c * s))
                .collect(),
        }
    }

    /// Multiplies by `x`.
    pub fn shift(&self) -> Poly {
        if self.coeffs.is_empty() {
            return self.clone();
        }
        let mut coeffs = Vec::with_capacity(self.len() + 1);
        coeffs.push(real::zero(self.prec));
        coeffs.extend(self.coeffs.iter().cloned());
        Poly {
            prec: self.prec,
            coeffs,
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let prec = self.prec.max(other.prec);
        if self.is_empty() || other.is_empty() {
            return Poly::zero(prec);
        }
        let mut coeffs = vec![real::zero(prec); self.len() + other.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += Float::with_val(prec, a * b);
            }
        }
        Poly { prec, coeffs }
    }

    /// Largest coefficient-wise difference `max_i |a_i - b_i|`.
    pub fn max_abs_diff(&self, other: &Poly) -> Real {
        self.sub(other).max_abs_coeff()
    }

    pub fn to_decimal_strings(&self) -> Vec<String> {
        self.coeffs.iter().map(real::to_decimal).collect()
    }
}
