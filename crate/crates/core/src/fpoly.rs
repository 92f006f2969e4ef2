//! Sparse polynomials in the covering components and their conjugates.
//!
//! A term is `c * f^a * conj(f)^b` for a coefficient `c` and exponent pairs
//! `a`, `b`; the polynomial is a map from `(a, b)` to `c` holding no zero
//! coefficients. Because the boundary measure integrates any such monomial
//! exactly (a rational times the sheet count), inner products and the
//! holomorphic projection are computed symbolically, not by quadrature.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use serde::de::Deserializer;
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::covering::{ComplexPoint2, CoveringMap};
use crate::error::Error;
use crate::measure::monomial_integral_f64;
pub use crate::measure::MultiIndex;

/// Products refuse to materialize more terms than this unless a larger cap is
/// passed explicitly.
pub const DEFAULT_TERM_CAP: usize = 100_000;

thread_local! {
    static MOMENT_CACHE: std::cell::RefCell<std::collections::HashMap<MultiIndex, f64>> =
        std::cell::RefCell::new(std::collections::HashMap::new());
}

/// Spherical moment of `|z^gamma|^2` as f64, memoized; the exact rational is
/// computed once per exponent pair.
fn moment_weight(gamma: MultiIndex) -> f64 {
    MOMENT_CACHE.with(|cache| {
        *cache
            .borrow_mut()
            .entry(gamma)
            .or_insert_with(|| monomial_integral_f64(gamma))
    })
}

/// Homogeneity classification of a polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Homogeneity {
    /// No terms at all.
    Zero,
    /// Purely holomorphic with every term of the stated total degree.
    Homogeneous(u32),
    /// Anything else.
    Inhomogeneous,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FPolynomial {
    terms: BTreeMap<(MultiIndex, MultiIndex), Complex64>,
}

impl FPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Complex64) -> Self {
        let mut p = Self::zero();
        p.add_term(MultiIndex::new(0, 0), MultiIndex::new(0, 0), c);
        p
    }

    pub fn monomial(a: MultiIndex, b: MultiIndex, c: Complex64) -> Self {
        let mut p = Self::zero();
        p.add_term(a, b, c);
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (MultiIndex, MultiIndex, Complex64)>>(
        iter: I,
    ) -> Self {
        let mut p = Self::zero();
        for (a, b, c) in iter {
            p.add_term(a, b, c);
        }
        p
    }

    /// Adds `c * f^a conj(f)^b`, merging with an existing term and dropping
    /// the entry if the merged coefficient is exactly zero.
    pub fn add_term(&mut self, a: MultiIndex, b: MultiIndex, c: Complex64) {
        if c == Complex64::new(0.0, 0.0) {
            return;
        }
        let entry = self.terms.entry((a, b)).or_insert(Complex64::new(0.0, 0.0));
        *entry += c;
        if *entry == Complex64::new(0.0, 0.0) {
            self.terms.remove(&(a, b));
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(MultiIndex, MultiIndex), &Complex64)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, a: MultiIndex, b: MultiIndex) -> Complex64 {
        self.terms.get(&(a, b)).copied().unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (&(a, b), &c) in other.terms.iter() {
            out.add_term(a, b, c);
        }
        out
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        if factor == Complex64::new(0.0, 0.0) {
            return Self::zero();
        }
        Self { terms: self.terms.iter().map(|(&k, &c)| (k, c * factor)).collect() }
    }

    /// Swaps holomorphic and antiholomorphic exponents and conjugates the
    /// coefficients, so that the new polynomial evaluates to the conjugate.
    pub fn conjugate(&self) -> Self {
        Self {
            terms: self.terms.iter().map(|(&(a, b), &c)| ((b, a), c.conj())).collect(),
        }
    }

    pub fn multiply(&self, other: &Self) -> Result<Self, Error> {
        self.multiply_capped(other, DEFAULT_TERM_CAP)
    }

    pub fn multiply_capped(&self, other: &Self, cap: usize) -> Result<Self, Error> {
        let mut out = Self::zero();
        for (&(a1, b1), &c1) in self.terms.iter() {
            for (&(a2, b2), &c2) in other.terms.iter() {
                out.add_term(a1.plus(&a2), b1.plus(&b2), c1 * c2);
                if out.num_terms() > cap {
                    return Err(Error::TermBudget { terms: out.num_terms(), cap });
                }
            }
        }
        Ok(out)
    }

    fn power_tables(&self, point: &ComplexPoint2) -> (Vec<Complex64>, Vec<Complex64>) {
        let (mut m1, mut m2) = (0u32, 0u32);
        for (a, b) in self.terms.keys() {
            m1 = m1.max(a.a1).max(b.a1);
            m2 = m2.max(a.a2).max(b.a2);
        }
        let mut t1 = Vec::with_capacity(m1 as usize + 1);
        let mut t2 = Vec::with_capacity(m2 as usize + 1);
        let mut acc = Complex64::new(1.0, 0.0);
        for _ in 0..=m1 {
            t1.push(acc);
            acc *= point.z1;
        }
        acc = Complex64::new(1.0, 0.0);
        for _ in 0..=m2 {
            t2.push(acc);
            acc *= point.z2;
        }
        (t1, t2)
    }

    /// Evaluates at a point of the closed ball (coordinates are the covering
    /// components themselves).
    pub fn eval_ball(&self, eta: &ComplexPoint2) -> Complex64 {
        let (t1, t2) = self.power_tables(eta);
        let mut acc = Complex64::new(0.0, 0.0);
        for (&(a, b), &c) in self.terms.iter() {
            let hol = t1[a.a1 as usize] * t2[a.a2 as usize];
            let anti = (t1[b.a1 as usize] * t2[b.a2 as usize]).conj();
            acc += c * hol * anti;
        }
        acc
    }

    /// Evaluates the pullback at a boundary point of the domain.
    pub fn eval_boundary(
        &self,
        z: &ComplexPoint2,
        map: &CoveringMap,
    ) -> Result<Complex64, Error> {
        map.require_boundary(z)?;
        Ok(self.eval_ball(&map.apply(z)))
    }

    /// Exact boundary pairing `<p, q> = integral of p * conj(q)`.
    ///
    /// A product term `f^(a+b') conj(f)^(b+a')` integrates to zero unless the
    /// exponents balance, so only balanced pairs contribute, each weighted by
    /// the exact moment times the sheet count.
    pub fn inner_product(&self, other: &Self, map: &CoveringMap) -> Complex64 {
        let n = f64::from(map.sheet_count());
        let holomorphic = |p: &Self| p.terms.keys().all(|(_, b)| b.degree() == 0);
        if holomorphic(self) && holomorphic(other) {
            // Merge join over the shared holomorphic keys.
            let mut acc = Complex64::new(0.0, 0.0);
            let mut it = other.terms.iter().peekable();
            for (&(a, _), &c) in self.terms.iter() {
                while let Some((&(a2, _), _)) = it.peek() {
                    if a2 < a {
                        it.next();
                    } else {
                        break;
                    }
                }
                if let Some(&(&(a2, _), &d)) = it.peek() {
                    if a2 == a {
                        acc += c * d.conj() * (n * moment_weight(a));
                    }
                }
            }
            return acc;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (&(a1, b1), &c1) in self.terms.iter() {
            for (&(a2, b2), &c2) in other.terms.iter() {
                let hol = a1.plus(&b2);
                let anti = b1.plus(&a2);
                if hol == anti {
                    acc += c1 * c2.conj() * (n * moment_weight(hol));
                }
            }
        }
        acc
    }

    /// Exact squared boundary norm.
    pub fn norm_sqr(&self, map: &CoveringMap) -> f64 {
        self.inner_product(self, map).re
    }

    /// Orthogonal projection onto the holomorphic span.
    ///
    /// A mixed term `f^a conj(f)^b` projects to zero unless `a >= b`
    /// componentwise; otherwise it lands on `f^(a-b)` with the moment ratio
    /// `moment(a) / moment(a-b)` as coefficient factor. Purely holomorphic
    /// input is reproduced unchanged.
    pub fn szego_project(&self, _map: &CoveringMap) -> Self {
        // The sheet count cancels in the moment ratio, so the projection is
        // the same on every covering of the family.
        let mut out = Self::zero();
        for (&(a, b), &c) in self.terms.iter() {
            if let Some(gamma) = a.checked_sub(&b) {
                let factor = moment_weight(a) / moment_weight(gamma);
                out.add_term(gamma, MultiIndex::new(0, 0), c * factor);
            }
        }
        out
    }

    pub fn homogeneity(&self) -> Homogeneity {
        if self.terms.is_empty() {
            return Homogeneity::Zero;
        }
        let mut degree = None;
        for (a, b) in self.terms.keys() {
            if b.degree() != 0 {
                return Homogeneity::Inhomogeneous;
            }
            match degree {
                None => degree = Some(a.degree()),
                Some(d) if d == a.degree() => {}
                _ => return Homogeneity::Inhomogeneous,
            }
        }
        Homogeneity::Homogeneous(degree.unwrap())
    }

    /// Total degrees present among holomorphic terms; `None` if any term has
    /// an antiholomorphic factor.
    pub fn holomorphic_degrees(&self) -> Option<BTreeSet<u32>> {
        let mut degrees = BTreeSet::new();
        for (a, b) in self.terms.keys() {
            if b.degree() != 0 {
                return None;
            }
            degrees.insert(a.degree());
        }
        Some(degrees)
    }
}

/// Total degree of the projection of (degree-k homogeneous) * `f^alpha
/// conj(f)^beta`: `k + |alpha| - |beta|`. A negative value means the product
/// is annihilated by the projection.
pub fn cauchy_transform_degree(k: u32, alpha: MultiIndex, beta: MultiIndex) -> i64 {
    i64::from(k) + i64::from(alpha.degree()) - i64::from(beta.degree())
}

#[derive(Serialize, Deserialize)]
struct TermRecord {
    a: [u32; 2],
    b: [u32; 2],
    re: f64,
    im: f64,
}

impl Serialize for FPolynomial {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.terms.len()))?;
        for (&(a, b), &c) in self.terms.iter() {
            seq.serialize_element(&TermRecord {
                a: [a.a1, a.a2],
                b: [b.a1, b.a2],
                re: c.re,
                im: c.im,
            })?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for FPolynomial {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let records = Vec::<TermRecord>::deserialize(deserializer)?;
        Ok(Self::from_terms(records.into_iter().map(|t| {
            (
                MultiIndex::new(t.a[0], t.a[1]),
                MultiIndex::new(t.b[0], t.b[1]),
                Complex64::new(t.re, t.im),
            )
        })))
    }
}
