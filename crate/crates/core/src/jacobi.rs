//! Truncated banded operators: the Jacobi matrix `Q`, its powers and
//! polynomial functions, triangular splits and divided differences.
//!
//! Every operator carries a trust index `T`: entries `(n, m)` with
//! `max(n, m) < T` are the same as those of the corresponding semi-infinite
//! matrix. A product `A B` is trusted up to `min(T_A, T_B) - min(b_A, b_B)`,
//! since the summation index of `(AB)_{n,m}` reaches `max(n, m) + min(b_A, b_B)`.

use rug::Float;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::moments::RecurrenceCoefficients;
use crate::poly::Poly;
use crate::real::{self, Real};

/// Polynomial-in-`x` entry of a divided-difference matrix.
pub type PolyBandEntry = Poly;

#[derive(Clone, PartialEq)]
pub struct BandedOperator {
    size: usize,
    bandwidth: usize,
    trust: usize,
    prec: u32,
    /// Row-major; row `n` stores offsets `-b..=b` at `n * (2b + 1) + (offset + b)`.
    data: Vec<Real>,
}

impl std::fmt::Debug for BandedOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "BandedOperator {{ size: {}, bandwidth: {}, trust: {} }}",
            self.size, self.bandwidth, self.trust
        )
    }
}

/// Strictly lower, diagonal and strictly upper parts.
#[derive(Debug, Clone)]
pub struct TriangularSplit {
    pub lower: BandedOperator,
    pub diagonal: BandedOperator,
    pub upper: BandedOperator,
}

/// Debug dump: `rows[n][offset + bandwidth] = A[n][n + offset]` as decimal strings.
#[derive(Debug, Clone, Serialize)]
pub struct BandJson {
    pub size: usize,
    pub bandwidth: usize,
    pub trust: usize,
    pub precision: u32,
    pub layout: &'static str,
    pub rows: Vec<Vec<String>>,
}

impl BandedOperator {
    pub fn zeros(size: usize, bandwidth: usize, prec: u32) -> Self {
        assert!(size > 0, "operators need at least one row");
        let bandwidth = bandwidth.min(size - 1);
        BandedOperator {
            size,
            bandwidth,
            trust: size,
            prec,
            data: vec![real::zero(prec); size * (2 * bandwidth + 1)],
        }
    }

    pub fn identity(size: usize, prec: u32) -> Self {
        let mut id = Self::zeros(size, 0, prec);
        for n in 0..size {
            id.set(n, n, real::one(prec));
        }
        id
    }

    /// The Jacobi operator: `Q_{n,n} = beta_n`, `Q_{n,n-1} = Q_{n-1,n} = gamma_n`.
    pub fn from_recurrence(rc: &RecurrenceCoefficients) -> Self {
        let size = rc.order();
        let mut q = Self::zeros(size, 1, rc.prec);
        for n in 0..size {
            q.set(n, n, rc.beta[n].clone());
            if n > 0 {
                q.set(n, n - 1, rc.gamma[n].clone());
                q.set(n - 1, n, rc.gamma[n].clone());
            }
        }
        q
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn trust(&self) -> usize {
        self.trust
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn with_trust(mut self, trust: usize) -> Self {
        self.trust = trust.min(self.size);
        self
    }

    #[inline]
    fn slot(&self, n: usize, m: usize) -> Option<usize> {
        if n >= self.size || m >= self.size || n.abs_diff(m) > self.bandwidth {
            return None;
        }
        let b = self.bandwidth;
        Some(n * (2 * b + 1) + (m + b - n))
    }

    /// Raw entry; zero outside the band or the matrix. No trust check.
    pub fn get(&self, n: usize, m: usize) -> Real {
        self.slot(n, m)
            .map(|i| self.data[i].clone())
            .unwrap_or_else(|| real::zero(self.prec))
    }

    pub(crate) fn get_ref(&self, n: usize, m: usize) -> Option<&Real> {
        self.slot(n, m).map(|i| &self.data[i])
    }

    /// Sets an entry inside the band. Panics outside it.
    pub fn set(&mut self, n: usize, m: usize, v: Real) {
        let i = self
            .slot(n, m)
            .unwrap_or_else(|| panic!("({n}, {m}) is outside the band"));
        self.data[i] = real::round_to(&v, self.prec);
    }

    pub fn in_trust(&self, n: usize, m: usize) -> bool {
        n.max(m) < self.trust
    }

    /// Trust-checked entry.
    pub fn entry(&self, n: usize, m: usize) -> Result<Real> {
        if !self.in_trust(n, m) {
            return Err(Error::OutsideTrustWindow {
                n,
                m,
                trust: self.trust,
            });
        }
        Ok(self.get(n, m))
    }

    /// `(n, m, value)` for every stored in-matrix slot.
    pub fn band_entries(&self) -> impl Iterator<Item = (usize, usize, &Real)> + '_ {
        let b = self.bandwidth as isize;
        (0..self.size).flat_map(move |n| {
            (-b..=b).filter_map(move |off| {
                let m = n as isize + off;
                if m < 0 || m >= self.size as isize {
                    return None;
                }
                let m = m as usize;
                self.get_ref(n, m).map(|v| (n, m, v))
            })
        })
    }

    pub fn multiply(&self, other: &BandedOperator) -> BandedOperator {
        assert_eq!(self.size, other.size, "operator sizes differ");
        let prec = self.prec.max(other.prec);
        let mut out = BandedOperator::zeros(self.size, self.bandwidth + other.bandwidth, prec);
        for n in 0..self.size {
            let jlo = n.saturating_sub(self.bandwidth);
            let jhi = (n + self.bandwidth).min(self.size - 1);
            for j in jlo..=jhi {
                let Some(a) = self.get_ref(n, j) else { continue };
                if a.is_zero() {
                    continue;
                }
                let mlo = j.saturating_sub(other.bandwidth);
                let mhi = (j + other.bandwidth).min(self.size - 1);
                for m in mlo..=mhi {
                    let Some(b) = other.get_ref(j, m) else { continue };
                    let i = out.slot(n, m).expect("product band covers both factors");
                    let t = Float::with_val(prec, a * b);
                    out.data[i] += t;
                }
            }
        }
        let shrink = self.bandwidth.min(other.bandwidth);
        out.trust = self.trust.min(other.trust).saturating_sub(shrink);
        out
    }

    fn combine(&self, other: &BandedOperator, sign: i32) -> BandedOperator {
        assert_eq!(self.size, other.size, "operator sizes differ");
        let prec = self.prec.max(other.prec);
        let mut out = BandedOperator::zeros(self.size, self.bandwidth.max(other.bandwidth), prec);
        for (n, m, v) in self.band_entries() {
            let i = out.slot(n, m).unwrap();
            out.data[i] += v;
        }
        for (n, m, v) in other.band_entries() {
            let i = out.slot(n, m).unwrap();
            if sign > 0 {
                out.data[i] += v;
            } else {
                out.data[i] -= v;
            }
        }
        out.trust = self.trust.min(other.trust);
        out
    }

    pub fn add(&self, other: &BandedOperator) -> BandedOperator {
        self.combine(other, 1)
    }

    pub fn sub(&self, other: &BandedOperator) -> BandedOperator {
        self.combine(other, -1)
    }

    pub fn scale(&self, s: &Real) -> BandedOperator {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    /// `A + c I`.
    pub fn add_identity(&self, c: &Real) -> BandedOperator {
        let mut out = self.clone();
        for n in 0..self.size {
            let i = out.slot(n, n).unwrap();
            out.data[i] += c;
        }
        out
    }

    pub fn transpose(&self) -> BandedOperator {
        let mut out = BandedOperator::zeros(self.size, self.bandwidth, self.prec);
        for (n, m, v) in self.band_entries() {
            out.set(m, n, v.clone());
        }
        out.trust = self.trust;
        out
    }

    /// `A^k` by repeated multiplication; `A^0 = I` with `A`'s trust.
    pub fn power(&self, k: usize) -> BandedOperator {
        let mut acc = BandedOperator::identity(self.size, self.prec).with_trust(self.trust);
        for _ in 0..k {
            acc = acc.multiply(self);
        }
        acc
    }

    /// `sum_j c_j A^j` by Horner's rule in operator arithmetic.
    pub fn apply_polynomial(&self, coeffs: &[Real]) -> BandedOperator {
        let mut acc = BandedOperator::zeros(self.size, 0, self.prec).with_trust(self.trust);
        for (i, c) in coeffs.iter().enumerate().rev() {
            if i + 1 < coeffs.len() {
                acc = acc.multiply(self);
            }
            acc = acc.add_identity(c);
        }
        acc
    }

    pub fn triangular_split(&self) -> TriangularSplit {
        let b = self.bandwidth;
        let mut lower = BandedOperator::zeros(self.size, b, self.prec).with_trust(self.trust);
        let mut diagonal = BandedOperator::zeros(self.size, 0, self.prec).with_trust(self.trust);
        let mut upper = BandedOperator::zeros(self.size, b, self.prec).with_trust(self.trust);
        for (n, m, v) in self.band_entries() {
            match n.cmp(&m) {
                std::cmp::Ordering::Greater => lower.set(n, m, v.clone()),
                std::cmp::Ordering::Equal => diagonal.set(n, m, v.clone()),
                std::cmp::Ordering::Less => upper.set(n, m, v.clone()),
            }
        }
        TriangularSplit {
            lower,
            diagonal,
            upper,
        }
    }

    /// Copies the upper triangle onto the lower one. Powers of a symmetric
    /// operator are symmetric in exact arithmetic; this makes it bitwise true.
    pub fn symmetrized_from_upper(mut self) -> BandedOperator {
        for n in 0..self.size {
            for m in (n + 1)..=(n + self.bandwidth).min(self.size - 1) {
                let v = self.get(n, m);
                self.set(m, n, v);
            }
        }
        self
    }

    /// `max |A_{n,m} + A_{m,n}|` over the whole band (exact zero for antisymmetric input).
    pub fn max_antisymmetry_defect(&self) -> Real {
        let mut worst = real::zero(self.prec);
        for (n, m, v) in self.band_entries() {
            let d = Float::with_val(self.prec, v + &self.get(m, n)).abs();
            if d > worst {
                worst = d;
            }
        }
        worst
    }

    /// `max |A_{n,m} - A_{m,n}|`.
    pub fn max_symmetry_defect(&self) -> Real {
        let mut worst = real::zero(self.prec);
        for (n, m, v) in self.band_entries() {
            let d = Float::with_val(self.prec, v - &self.get(m, n)).abs();
            if d > worst {
                worst = d;
            }
        }
        worst
    }

    /// Largest `|A_{n,m}|` with `|n - m| > k` (stored slots only).
    pub fn max_outside_band(&self, k: usize) -> Real {
        let mut worst = real::zero(self.prec);
        for (n, m, v) in self.band_entries() {
            if n.abs_diff(m) > k {
                let a = Float::with_val(self.prec, v.abs_ref());
                if a > worst {
                    worst = a;
                }
            }
        }
        worst
    }

    pub fn to_band_json(&self) -> BandJson {
        let b = self.bandwidth as isize;
        let rows = (0..self.size)
            .map(|n| {
                (-b..=b)
                    .map(|off| {
                        let m = n as isize + off;
                        if m < 0 || m >= self.size as isize {
                            "0".to_string()
                        } else {
                            real::to_decimal(&self.get(n, m as usize))
                        }
                    })
                    .collect()
            })
            .collect();
        BandJson {
            size: self.size,
            bandwidth: self.bandwidth,
            trust: self.trust,
            precision: self.prec,
            layout: "rows[n][offset + bandwidth] = A[n][n + offset]",
            rows,
        }
    }
}

/// Cached powers `Q^0..Q^K` of a Jacobi operator.
#[derive(Debug, Clone)]
pub struct Powers {
    pows: Vec<BandedOperator>,
}

impl Powers {
    pub fn new(q: &BandedOperator, max_power: usize) -> Self {
        let mut pows = vec![BandedOperator::identity(q.size(), q.prec()).with_trust(q.trust())];
        for k in 1..=max_power {
            let next = pows[k - 1].multiply(q).symmetrized_from_upper();
            pows.push(next);
        }
        Powers { pows }
    }

    pub fn max_power(&self) -> usize {
        self.pows.len() - 1
    }

    pub fn get(&self, k: usize) -> &BandedOperator {
        &self.pows[k]
    }

    pub fn q(&self) -> &BandedOperator {
        &self.pows[1]
    }
}

/// Entry `(n, m)` of `(f(Q) - f(x)) / (Q - x)` for `f = sum_j c_j x^j`, as a
/// polynomial in `x`: the coefficient of `x^i` is `sum_{j>i} c_j (Q^{j-1-i})_{n,m}`.
pub fn divided_difference_entry(
    coeffs: &[Real],
    powers: &Powers,
    n: usize,
    m: usize,
) -> Result<PolyBandEntry> {
    let prec = powers.q().prec();
    let deg = coeffs.len().saturating_sub(1);
    if deg == 0 {
        return Ok(Poly::zero(prec));
    }
    if deg - 1 > powers.max_power() {
        return Err(Error::InvalidIndex(format!(
            "divided difference of degree {deg} needs Q^{} but only Q^{} is cached",
            deg - 1,
            powers.max_power()
        )));
    }
    let mut out = vec![real::zero(prec); deg];
    for (i, slot) in out.iter_mut().enumerate() {
        for (j, c) in coeffs.iter().enumerate().skip(i + 1) {
            if c.is_zero() {
                continue;
            }
            let e = powers.get(j - 1 - i).entry(n, m)?;
            *slot += Float::with_val(prec, c * &e);
        }
    }
    let mut p = Poly::from_coeffs(prec, out);
    p.trim(&trim_threshold(prec));
    Ok(p)
}

/// Relative cut below which polynomial coefficients count as roundoff.
pub fn trim_threshold(prec: u32) -> Real {
    real::pow2(prec, -((prec.saturating_sub(16)) as i32))
}

/// Dense square matrices, kept as an independent oracle for the banded
/// arithmetic on small sizes. Not used by the production code paths.
pub mod dense {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    pub struct DenseMatrix {
        pub prec: u32,
        pub rows: Vec<Vec<Real>>,
    }

    impl DenseMatrix {
        pub fn zeros(size: usize, prec: u32) -> Self {
            DenseMatrix {
                prec,
                rows: vec![vec![real::zero(prec); size]; size],
            }
        }

        pub fn identity(size: usize, prec: u32) -> Self {
            let mut d = Self::zeros(size, prec);
            for i in 0..size {
                d.rows[i][i] = real::one(prec);
            }
            d
        }

        pub fn from_banded(a: &BandedOperator) -> Self {
            let mut d = Self::zeros(a.size(), a.prec());
            for (i, row) in d.rows.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = a.get(i, j);
                }
            }
            d
        }

        pub fn size(&self) -> usize {
            self.rows.len()
        }

        pub fn mul(&self, other: &DenseMatrix) -> DenseMatrix {
            let n = self.size();
            let mut out = Self::zeros(n, self.prec);
            for i in 0..n {
                for j in 0..n {
                    let mut acc = real::zero(self.prec);
                    for k in 0..n {
                        acc += Float::with_val(self.prec, &self.rows[i][k] * &other.rows[k][j]);
                    }
                    out.rows[i][j] = acc;
                }
            }
            out
        }

        pub fn pow(&self, k: usize) -> DenseMatrix {
            let mut acc = Self::identity(self.size(), self.prec);
            for _ in 0..k {
                acc = acc.mul(self);
            }
            acc
        }

        /// `max |A_{ij} - B_{ij}|` over `i, j < limit`.
        pub fn max_diff_within(&self, banded: &BandedOperator, limit: usize) -> Real {
            let mut worst = real::zero(self.prec);
            for i in 0..limit.min(self.size()) {
                for j in 0..limit.min(self.size()) {
                    let d = Float::with_val(self.prec, &self.rows[i][j] - &banded.get(i, j)).abs();
                    if d > worst {
                        worst = d;
                    }
                }
            }
            worst
        }
    }
}
