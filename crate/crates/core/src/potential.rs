//! Polynomial potentials `V(x) = sum_k (1/k) u_k x^k`.
//!
//! The coefficients `u_k` double as deformation coordinates, so this
//! normalization is used everywhere (text, JSON and CLI input alike). A
//! constant term would only rescale every norm and is not represented.

use std::collections::BTreeMap;
use std::fmt;

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{self, Real};

#[derive(Clone, PartialEq)]
pub struct Potential {
    prec: u32,
    /// `u[k - 1]` holds `u_k`; no trailing zeros.
    u: Vec<Real>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Potential({})", self.to_text_short())
    }
}

/// JSON wire form: `{"u": {"2": "1.0", "4": "0.25"}}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PotentialJson {
    pub u: BTreeMap<String, String>,
}

impl Potential {
    /// Builds a potential from `(k, u_k)` pairs. Only finiteness is checked;
    /// see [`Potential::check_admissible`] for the convergence conditions.
    pub fn new(prec: u32, coeffs: impl IntoIterator<Item = (usize, Real)>) -> Result<Self> {
        let mut u: Vec<Real> = Vec::new();
        for (k, val) in coeffs {
            if k == 0 {
                return Err(Error::InvalidPotential(
                    "u_0 (constant term) is not part of the parameterization; indices start at 1"
                        .into(),
                ));
            }
            if !val.is_finite() {
                return Err(Error::InvalidPotential(format!("u_{k} is not finite")));
            }
            if u.len() < k {
                u.resize(k, real::zero(prec));
            }
            u[k - 1] += &val;
        }
        let mut p = Potential { prec, u };
        p.normalize();
        Ok(p)
    }

    /// Convenience constructor from `f64` pairs.
    pub fn from_f64(prec: u32, coeffs: &[(usize, f64)]) -> Result<Self> {
        Self::new(prec, coeffs.iter().map(|&(k, v)| (k, real::from_f64(prec, v))))
    }

    /// Like [`Potential::new`] but also requires an admissible weight.
    pub fn admissible(prec: u32, coeffs: impl IntoIterator<Item = (usize, Real)>) -> Result<Self> {
        let p = Self::new(prec, coeffs)?;
        p.check_admissible()?;
        Ok(p)
    }

    fn normalize(&mut self) {
        while self.u.last().is_some_and(|c| c.is_zero()) {
            self.u.pop();
        }
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    /// Same coefficients, different working precision.
    pub fn with_prec(&self, prec: u32) -> Self {
        Potential {
            prec,
            u: self.u.clone(),
        }
    }

    /// `deg V`.
    pub fn degree(&self) -> usize {
        self.u.len()
    }

    /// `d = deg V'`.
    pub fn vprime_degree(&self) -> usize {
        self.u.len().saturating_sub(1)
    }

    /// `u_k` (zero when absent).
    pub fn u(&self, k: usize) -> Real {
        if k == 0 {
            return real::zero(self.prec);
        }
        self.u
            .get(k - 1)
            .cloned()
            .unwrap_or_else(|| real::zero(self.prec))
    }

    /// Nonzero `(k, u_k)` pairs in increasing `k`.
    pub fn terms(&self) -> impl Iterator<Item = (usize, &Real)> {
        self.u
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| (i + 1, c))
    }

    pub fn is_even(&self) -> bool {
        self.terms().all(|(k, _)| k % 2 == 0)
    }

    /// Even degree with positive leading coefficient, i.e. `e^{-V}` is integrable on the real line.
    pub fn check_admissible(&self) -> Result<()> {
        let dv = self.degree();
        if dv == 0 {
            return Err(Error::InvalidPotential("potential is identically zero".into()));
        }
        if !dv.is_multiple_of(2) {
            return Err(Error::InvalidPotential(format!(
                "degree {dv} is odd; e^(-V) is not integrable on the real line"
            )));
        }
        if self.u[dv - 1] <= 0 {
            return Err(Error::InvalidPotential(format!(
                "leading coefficient u_{dv} = {} must be positive",
                real::to_sci(&self.u[dv - 1])
            )));
        }
        Ok(())
    }

    pub fn is_admissible(&self) -> bool {
        self.check_admissible().is_ok()
    }

    /// `V(x) = sum_k (1/k) u_k x^k`.
    pub fn eval_v(&self, x: &Real) -> Real {
        let prec = self.prec.max(x.prec());
        // Horner on the coefficients u_k / k of x^k.
        let mut acc = real::zero(prec);
        for (i, uk) in self.u.iter().enumerate().rev() {
            let k = (i + 1) as u32;
            acc += Float::with_val(prec, uk / k);
            acc *= x;
        }
        acc
    }

    /// `V'(x) = sum_k u_k x^(k-1)`.
    pub fn eval_vprime(&self, x: &Real) -> Real {
        let prec = self.prec.max(x.prec());
        let mut acc = real::zero(prec);
        for uk in self.u.iter().rev() {
            acc *= x;
            acc += uk;
        }
        acc
    }

    /// Coefficients `c_0..c_d` of `V'(x) = sum_j c_j x^j`, with `c_{k-1} = u_k`.
    pub fn vprime_coeffs(&self) -> Vec<Real> {
        self.u.iter().map(|c| real::round_to(c, self.prec)).collect()
    }

    /// Returns a copy with `u_k <- u_k + delta`.
    ///
    /// The sum is formed exactly (the result may carry more mantissa bits
    /// than the working precision), so perturbing by `delta` and then by
    /// `-delta` restores the original coefficients bit for bit.
    pub fn perturb(&self, k: usize, delta: &Real) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidIndex("perturbation index k must be >= 1".into()));
        }
        if !delta.is_finite() {
            return Err(Error::InvalidPotential("perturbation is not finite".into()));
        }
        let mut u = self.u.clone();
        if u.len() < k {
            u.resize(k, real::zero(self.prec));
        }
        u[k - 1] = exact_sum(&u[k - 1], delta);
        let mut out = Potential { prec: self.prec, u };
        out.normalize();
        if let Err(e) = out.check_admissible() {
            return Err(Error::PerturbationBreaksConvergence {
                k,
                delta: real::to_sci(delta),
                reason: e.to_string(),
            });
        }
        Ok(out)
    }

    /// Canonical text form `k=value,...` with values that round-trip exactly.
    pub fn to_text(&self) -> String {
        self.terms()
            .map(|(k, c)| format!("{k}={}", real::to_exact_decimal(c)))
            .collect::<Vec<_>>()
            .join(",")
    }

    fn to_text_short(&self) -> String {
        self.terms()
            .map(|(k, c)| format!("{k}={}", real::to_decimal_digits(c, 10)))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Parses `"2=1.0,4=0.25"`. Whitespace around items is ignored.
    pub fn parse_text(prec: u32, s: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(|| {
                Error::Parse(format!("expected k=value, got {item:?} (e.g. \"2=1.0,4=0.25\")"))
            })?;
            let k: usize = k
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad index {:?} in {item:?}", k.trim())))?;
            pairs.push((k, real::parse(prec, v)?));
        }
        Self::new(prec, pairs)
    }

    pub fn to_json(&self) -> PotentialJson {
        PotentialJson {
            u: self
                .terms()
                .map(|(k, c)| (k.to_string(), real::to_exact_decimal(c)))
                .collect(),
        }
    }

    pub fn from_json(prec: u32, json: &PotentialJson) -> Result<Self> {
        let mut pairs = Vec::new();
        for (k, v) in &json.u {
            let k: usize = k
                .parse()
                .map_err(|_| Error::Parse(format!("bad index {k:?} in potential JSON")))?;
            pairs.push((k, real::parse(prec, v)?));
        }
        Self::new(prec, pairs)
    }

    pub fn parse_json(prec: u32, s: &str) -> Result<Self> {
        let json: PotentialJson =
            serde_json::from_str(s).map_err(|e| Error::Parse(format!("potential JSON: {e}")))?;
        Self::from_json(prec, &json)
    }
}

/// `a + b` with enough mantissa bits that no rounding occurs.
fn exact_sum(a: &Real, b: &Real) -> Real {
    if a.is_zero() {
        return b.clone();
    }
    if b.is_zero() {
        return a.clone();
    }
    let top = a.get_exp().unwrap().max(b.get_exp().unwrap()) as i64 + 1;
    let bottom = (a.get_exp().unwrap() as i64 - a.prec() as i64)
        .min(b.get_exp().unwrap() as i64 - b.prec() as i64);
    let bits = (top - bottom + 1).max(a.prec().max(b.prec()) as i64) as u32;
    Float::with_val(bits, a + b)
}
