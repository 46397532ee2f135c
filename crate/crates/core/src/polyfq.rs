//! Univariate polynomials over F_q, the primes of A = F_q[t], and residue
//! fields F_p = A/(p) with their trace and power-basis bookkeeping.
//!
//! Residue fields never get factored further: elements of F_p tensor
//! products are always tracked along the power basis 1, zeta, ...,
//! zeta^{deg-1} where zeta is the class of t.

use crate::ff::{embed, embed_root, FElem, Field};
use crate::{Error, Result};
use std::fmt;
use std::sync::Arc;

/// Dense polynomial over Fq in one variable, ascending coefficients,
/// no trailing zeros (zero polynomial has an empty vector).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyFq {
    pub field: Arc<Field>,
    pub c: Vec<FElem>,
}

impl std::hash::Hash for PolyFq {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.c.hash(state);
    }
}

impl PolyFq {
    pub fn zero(field: &Arc<Field>) -> Self {
        PolyFq { field: field.clone(), c: vec![] }
    }

    pub fn from_coeffs(field: &Arc<Field>, mut c: Vec<FElem>) -> Self {
        while c.last().map_or(false, |x| x.is_zero()) {
            c.pop();
        }
        PolyFq { field: field.clone(), c }
    }

    pub fn from_ints(field: &Arc<Field>, v: &[i64]) -> Self {
        Self::from_coeffs(field, v.iter().map(|&n| field.from_int(n)).collect())
    }

    pub fn var(field: &Arc<Field>) -> Self {
        Self::from_ints(field, &[0, 1])
    }

    pub fn constant(x: FElem) -> Self {
        let field = x.field.clone();
        Self::from_coeffs(&field, vec![x])
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    /// Degree; the zero polynomial reports -1.
    pub fn deg(&self) -> i64 {
        self.c.len() as i64 - 1
    }

    pub fn lead(&self) -> Option<&FElem> {
        self.c.last()
    }

    pub fn is_monic(&self) -> bool {
        self.lead().map_or(false, |x| x.equals(&self.field.one()))
    }

    pub fn coeff(&self, i: usize) -> FElem {
        self.c.get(i).cloned().unwrap_or_else(|| self.field.zero())
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.c.len().max(other.c.len());
        let c = (0..n).map(|i| self.coeff(i).add(&other.coeff(i))).collect();
        Self::from_coeffs(&self.field, c)
    }

    pub fn sub(&self, other: &Self) -> Self {
        let n = self.c.len().max(other.c.len());
        let c = (0..n).map(|i| self.coeff(i).sub(&other.coeff(i))).collect();
        Self::from_coeffs(&self.field, c)
    }

    pub fn neg(&self) -> Self {
        Self::from_coeffs(&self.field, self.c.iter().map(|x| x.neg()).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero(&self.field);
        }
        let mut c = vec![self.field.zero(); self.c.len() + other.c.len() - 1];
        for (i, a) in self.c.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.c.iter().enumerate() {
                c[i + j] = c[i + j].add(&a.mul(b));
            }
        }
        Self::from_coeffs(&self.field, c)
    }

    pub fn scale(&self, k: &FElem) -> Self {
        Self::from_coeffs(&self.field, self.c.iter().map(|x| x.mul(k)).collect())
    }

    pub fn pow(&self, mut e: u64) -> Self {
        let mut acc = Self::from_ints(&self.field, &[1]);
        let mut b = self.clone();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&b);
            }
            b = b.mul(&b);
            e >>= 1;
        }
        acc
    }

    /// Quotient and remainder; divisor must be nonzero.
    pub fn divrem(&self, d: &Self) -> (Self, Self) {
        assert!(!d.is_zero(), "division by the zero polynomial");
        let mut r = self.clone();
        let mut q = Self::zero(&self.field);
        let dl = d.lead().unwrap().inv().expect("nonzero lead");
        while !r.is_zero() && r.deg() >= d.deg() {
            let k = (r.deg() - d.deg()) as usize;
            let f = r.lead().unwrap().mul(&dl);
            let mut t = vec![self.field.zero(); k + 1];
            t[k] = f;
            let t = Self::from_coeffs(&self.field, t);
            q = q.add(&t);
            r = r.sub(&t.mul(d));
        }
        (q, r)
    }

    pub fn gcd(&self, other: &Self) -> Self {
        let (mut a, mut b) = (self.clone(), other.clone());
        while !b.is_zero() {
            let (_, r) = a.divrem(&b);
            a = b;
            b = r;
        }
        if let Some(l) = a.lead() {
            let li = l.inv().unwrap();
            a = a.scale(&li);
        }
        a
    }

    pub fn derivative(&self) -> Self {
        let c = self
            .c
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, x)| x.scale(i as i64))
            .collect();
        Self::from_coeffs(&self.field, c)
    }

    pub fn pow_mod(&self, mut e: u64, m: &Self) -> Self {
        let mut acc = Self::from_ints(&self.field, &[1]);
        let mut b = self.divrem(m).1;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&b).divrem(m).1;
            }
            b = b.mul(&b).divrem(m).1;
            e >>= 1;
        }
        acc
    }

    /// Rabin's test over Fq: t^{q^d} = t mod f, and gcd(t^{q^{d/r}} - t, f) = 1
    /// for every prime r | d.
    pub fn is_irreducible(&self) -> bool {
        let d = self.deg();
        if d <= 0 {
            return false;
        }
        if d == 1 {
            return true;
        }
        let d = d as u32;
        let q = self.field.order();
        let x = Self::var(&self.field);
        let frob = |e: u32| -> Self {
            // t^{q^e} mod self by repeated q-powering.
            let mut acc = x.divrem(self).1;
            for _ in 0..e {
                acc = acc.pow_mod(q, self);
            }
            acc
        };
        if !frob(d).sub(&x).divrem(self).1.is_zero() {
            return false;
        }
        let mut r = 2u32;
        let mut n = d;
        while r <= n {
            if n % r == 0 {
                let g = frob(d / r).sub(&x).gcd(self);
                if g.deg() != 0 {
                    return false;
                }
                while n % r == 0 {
                    n /= r;
                }
            }
            r += 1;
        }
        true
    }

    /// Evaluate at a point of an extension field, mapping coefficients
    /// through the embedding with generator image `root`.
    pub fn eval_embedded(&self, point: &FElem, root: &FElem) -> FElem {
        let big = point.field.clone();
        let mut acc = big.zero();
        for co in self.c.iter().rev() {
            acc = acc.mul(point).add(&embed(co, &big, root));
        }
        acc
    }

    pub fn eval(&self, point: &FElem) -> FElem {
        let mut acc = point.field.zero();
        for co in self.c.iter().rev() {
            acc = acc.mul(point).add(co);
        }
        acc
    }

    /// Enumeration of all monic polynomials of the given degree, ordered by
    /// index (coefficient of t^i is digit i base q).
    pub fn monic_of_degree(field: &Arc<Field>, d: usize) -> impl Iterator<Item = PolyFq> + '_ {
        let q = field.order();
        let field = field.clone();
        (0..q.pow(d as u32)).map(move |mut idx| {
            let mut c = Vec::with_capacity(d + 1);
            for _ in 0..d {
                c.push(field.from_index(idx % q));
                idx /= q;
            }
            c.push(field.one());
            PolyFq { field: field.clone(), c }
        })
    }

    /// First monic irreducible factor found by trial division, degree 1 up.
    pub fn find_factor(&self) -> Option<PolyFq> {
        let d = self.deg();
        if d <= 1 {
            return None;
        }
        for dd in 1..=(d as usize / 2) {
            for cand in Self::monic_of_degree(&self.field, dd) {
                if self.divrem(&cand).1.is_zero() {
                    return Some(cand);
                }
            }
        }
        None
    }
}

impl fmt::Display for PolyFq {
    /// Prints in the manifest grammar, e.g. "t^3+2*t+1". Extension-field
    /// coefficients are parenthesized.
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(fm, "0");
        }
        let mut first = true;
        for i in (0..self.c.len()).rev() {
            let co = &self.c[i];
            if co.is_zero() {
                continue;
            }
            if !first {
                write!(fm, "+")?;
            }
            first = false;
            let cs = co.to_string();
            let is_one = co.equals(&self.field.one());
            let needs_paren = cs.contains('+') || cs.contains('*');
            match i {
                0 => {
                    if needs_paren {
                        write!(fm, "({cs})")?;
                    } else {
                        write!(fm, "{cs}")?;
                    }
                }
                _ => {
                    if !is_one {
                        if needs_paren {
                            write!(fm, "({cs})*")?;
                        } else {
                            write!(fm, "{cs}*")?;
                        }
                    }
                    if i == 1 {
                        write!(fm, "t")?;
                    } else {
                        write!(fm, "t^{i}")?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// A maximal ideal of Fq[t], generated by a monic irreducible polynomial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeIdeal {
    pub poly: PolyFq,
}

/// Validate a monic irreducible generator. On failure the error carries a
/// proper monic factor.
pub fn make_prime(poly: PolyFq) -> Result<PrimeIdeal> {
    if poly.deg() < 1 {
        return Err(Error::InvalidInput("a prime generator must have degree >= 1".into()));
    }
    if !poly.is_monic() {
        return Err(Error::InvalidInput(format!("prime generator {poly} is not monic")));
    }
    if !poly.is_irreducible() {
        let factor = poly
            .find_factor()
            .expect("reducible polynomial of degree >= 2 has a factor");
        return Err(Error::NotIrreducible { factor: factor.to_string() });
    }
    Ok(PrimeIdeal { poly })
}

impl PrimeIdeal {
    pub fn deg(&self) -> usize {
        self.poly.deg() as usize
    }
}

/// The residue field F_p = Fq[t]/(p) realized inside F_{q^deg}, with the
/// class zeta of t chosen as the minimal-index root of p. Carries the
/// precomputed tables needed to move between the abstract field and the
/// power basis 1, zeta, ..., zeta^{deg-1} with Fq coordinates.
pub struct ResidueField {
    pub prime: PrimeIdeal,
    /// Base field Fq.
    pub base: Arc<Field>,
    /// F_{q^deg} as an abstract field over F_p.
    pub big: Arc<Field>,
    /// Image of the Fq generator in `big`.
    pub base_root: FElem,
    /// zeta, the class of t.
    pub zeta: FElem,
    /// zeta^k in power-basis Fq coordinates for k < 2*deg - 1.
    pub zeta_pow_coords: Vec<Vec<FElem>>,
    /// Inverse of the Fp-matrix whose columns are zeta^l * base_j, used to
    /// decompose elements of `big` over the power basis.
    decomp: Vec<Vec<u32>>,
}

impl ResidueField {
    pub fn new(prime: &PrimeIdeal) -> Arc<ResidueField> {
        let base = prime.poly.field.clone();
        let d = prime.deg();
        let e = base.deg;
        let p = base.p;
        let big = Field::new(p, e * d).expect("validated parameters");
        let base_root = embed_root(&base, &big);
        // Minimal-index root of the prime in big.
        let mut zeta = None;
        for cand in big.elements() {
            if prime.poly.eval_embedded(&cand, &base_root).is_zero() {
                zeta = Some(cand);
                break;
            }
        }
        let zeta = zeta.expect("an irreducible polynomial splits in its residue field");

        // Fp-basis of big along (l, j) -> zeta^l * base_root^j.
        let n = e * d;
        let mut cols: Vec<Vec<u32>> = Vec::with_capacity(n);
        let mut zl = big.one();
        for _l in 0..d {
            let mut bj = zl.clone();
            for _j in 0..e {
                cols.push(bj.coeffs().iter().map(|&v| v as u32).collect());
                bj = bj.mul(&base_root);
            }
            zl = zl.mul(&zeta);
        }
        let decomp = invert_mod_p(p, &cols, n);

        // Power coordinates of zeta^k for k up to 2d-2 (products of two
        // basis vectors stay below that bound).
        let this = ResidueField {
            prime: prime.clone(),
            base: base.clone(),
            big: big.clone(),
            base_root,
            zeta,
            zeta_pow_coords: vec![],
            decomp,
        };
        let mut zp = Vec::with_capacity(2 * d - 1);
        let mut acc = big.one();
        for _ in 0..(2 * d - 1).max(1) {
            zp.push(this.to_power_basis(&acc));
            acc = acc.mul(&this.zeta);
        }
        let mut this = this;
        this.zeta_pow_coords = zp;
        Arc::new(this)
    }

    pub fn deg(&self) -> usize {
        self.prime.deg()
    }

    /// Reduction Fq[t] -> F_p, i.e. evaluation at zeta.
    pub fn reduce(&self, f: &PolyFq) -> FElem {
        f.eval_embedded(&self.zeta, &self.base_root)
    }

    /// Decompose x over the power basis: x = sum_l coords[l] * zeta^l with
    /// coords in Fq.
    pub fn to_power_basis(&self, x: &FElem) -> Vec<FElem> {
        let n = self.big.deg;
        let p = self.big.p;
        let mut out = vec![0u32; n];
        for (r, row) in self.decomp.iter().enumerate() {
            let mut acc = 0u32;
            for (&cc, &m) in x.coeffs().iter().zip(row) {
                acc = (acc + cc as u32 * m) % p;
            }
            out[r] = acc;
        }
        let e = self.base.deg;
        (0..self.deg())
            .map(|l| FElem::from_digits(&self.base, &out[l * e..(l + 1) * e]))
            .collect()
    }

    /// Assemble an element from power-basis Fq coordinates.
    pub fn from_power_basis(&self, coords: &[FElem]) -> FElem {
        let mut acc = self.big.zero();
        let mut zl = self.big.one();
        for co in coords {
            acc = acc.add(&embed(co, &self.big, &self.base_root).mul(&zl));
            zl = zl.mul(&self.zeta);
        }
        acc
    }

    /// Trace to the base: x -> sum_{i<deg} x^{q^i}, landing in Fq.
    pub fn trace_to_base(&self, x: &FElem) -> FElem {
        let q = self.base.order();
        let mut acc = x.clone();
        let mut pw = x.clone();
        for _ in 1..self.deg() {
            pw = pw.pow(q);
            acc = acc.add(&pw);
        }
        let coords = self.to_power_basis(&acc);
        for hi in &coords[1..] {
            assert!(hi.is_zero(), "trace landed outside the base field");
        }
        coords[0].clone()
    }

    /// Traces of the power basis, tr(zeta^l) for l < deg, in Fq.
    pub fn trace_weights(&self) -> Vec<FElem> {
        let mut out = Vec::with_capacity(self.deg());
        let mut zl = self.big.one();
        for _ in 0..self.deg() {
            out.push(self.trace_to_base(&zl));
            zl = zl.mul(&self.zeta);
        }
        out
    }

    /// p-adic digits of f: f = sum_k digits[k] * p^k with digits in F_p,
    /// truncated to `count` digits.
    pub fn padic_digits(&self, f: &PolyFq, count: usize) -> Vec<FElem> {
        let mut out = Vec::with_capacity(count);
        let mut cur = f.clone();
        for _ in 0..count {
            let (q, r) = cur.divrem(&self.prime.poly);
            out.push(self.reduce(&r));
            cur = q;
        }
        out
    }

    /// Multiplication matrix of alpha on power-basis coordinates: column l
    /// holds the coordinates of alpha * zeta^l.
    pub fn mult_matrix(&self, alpha: &FElem) -> Vec<Vec<FElem>> {
        let d = self.deg();
        let mut cols = Vec::with_capacity(d);
        let mut zl = self.big.one();
        for _ in 0..d {
            cols.push(self.to_power_basis(&alpha.mul(&zl)));
            zl = zl.mul(&self.zeta);
        }
        cols
    }
}

/// Invert an n x n matrix over F_p given by columns; returns rows of the
/// inverse. Panics if singular (callers pass bases).
fn invert_mod_p(p: u32, cols: &[Vec<u32>], n: usize) -> Vec<Vec<u32>> {
    let mut a = vec![vec![0u32; 2 * n]; n];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            a[i][j] = col[i];
        }
    }
    for i in 0..n {
        a[i][n + i] = 1;
    }
    for col in 0..n {
        let piv = (col..n).find(|&r| a[r][col] != 0).expect("basis matrix is invertible");
        a.swap(col, piv);
        let inv = {
            let mut r = 1u32;
            let mut b = a[col][col] % p;
            let mut e = p - 2;
            while e > 0 {
                if e & 1 == 1 {
                    r = r * b % p;
                }
                b = b * b % p;
                e >>= 1;
            }
            r
        };
        for j in 0..2 * n {
            a[col][j] = a[col][j] * inv % p;
        }
        for r in 0..n {
            if r != col && a[r][col] != 0 {
                let f = a[r][col];
                for j in 0..2 * n {
                    a[r][j] = (a[r][j] + p * p - f * a[col][j] % p) % p;
                }
            }
        }
    }
    a.into_iter().map(|row| row[n..].to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f3() -> Arc<Field> {
        Field::new(3, 1).unwrap()
    }

    #[test]
    fn divrem_and_gcd() {
        let f = f3();
        let a = PolyFq::from_ints(&f, &[1, 0, 2, 1]); // t^3+2t^2+1
        let b = PolyFq::from_ints(&f, &[2, 1]); // t+2
        let (q, r) = a.divrem(&b);
        assert_eq!(q.mul(&b).add(&r), a);
        assert!(r.deg() < b.deg());
        let g = a.mul(&b).gcd(&b);
        assert_eq!(g, b);
    }

    #[test]
    fn irreducibility_brute_force_oracle() {
        // Compare Rabin's criterion against trial division for all monic
        // polynomials of degree <= 4 over F_3.
        let f = f3();
        for d in 1..=4usize {
            for cand in PolyFq::monic_of_degree(&f, d) {
                let brute = cand.find_factor().is_none();
                assert_eq!(
                    cand.is_irreducible(),
                    brute,
                    "disagreement at {cand}"
                );
            }
        }
    }

    #[test]
    fn make_prime_rejects_with_factor() {
        let f = f3();
        // t^2+2 = (t+1)(t+2) over F_3.
        let bad = PolyFq::from_ints(&f, &[2, 0, 1]);
        match make_prime(bad) {
            Err(Error::NotIrreducible { factor }) => assert_eq!(factor, "t+1"),
            other => panic!("expected NotIrreducible, got {other:?}"),
        }
        let good = make_prime(PolyFq::from_ints(&f, &[1, 0, 1])).unwrap();
        assert_eq!(good.deg(), 2);
    }

    #[test]
    fn residue_field_reduction_is_a_ring_hom() {
        let f = f3();
        let pr = make_prime(PolyFq::from_ints(&f, &[1, 0, 1])).unwrap(); // t^2+1
        let rf = ResidueField::new(&pr);
        // zeta^2 + 1 = 0.
        let z2 = rf.zeta.mul(&rf.zeta);
        assert!(z2.add(&rf.big.one()).is_zero());
        // Reduction is multiplicative and kills exactly multiples of p.
        for i in 0..40u64 {
            for j in 0..10u64 {
                let a = PolyFq::from_ints(&f, &[(i % 3) as i64, (i / 3 % 3) as i64, (i / 9 % 3) as i64]);
                let b = PolyFq::from_ints(&f, &[(j % 3) as i64, (j / 3) as i64]);
                assert!(rf
                    .reduce(&a.mul(&b))
                    .equals(&rf.reduce(&a).mul(&rf.reduce(&b))));
            }
        }
        let multiple = pr.poly.mul(&PolyFq::from_ints(&f, &[2, 1]));
        assert!(rf.reduce(&multiple).is_zero());
    }

    #[test]
    fn trace_examples_and_linearity() {
        let f = f3();
        let pr = make_prime(PolyFq::from_ints(&f, &[1, 0, 1])).unwrap(); // t^2+1
        let rf = ResidueField::new(&pr);
        // tr(zeta) = zeta + zeta^3 = 0 and tr(1) = 2.
        assert!(rf.trace_to_base(&rf.zeta).is_zero());
        assert!(rf.trace_to_base(&rf.big.one()).equals(&f.from_int(2)));
        // Fq-linearity and surjectivity onto Fq.
        let mut image = std::collections::BTreeSet::new();
        for x in rf.big.elements() {
            image.insert(rf.trace_to_base(&x).index());
        }
        assert_eq!(image.len(), 3);
    }

    #[test]
    fn power_basis_roundtrip_and_digits() {
        let f = f3();
        let pr = make_prime(PolyFq::from_ints(&f, &[1, 0, 1])).unwrap();
        let rf = ResidueField::new(&pr);
        for x in rf.big.elements() {
            let coords = rf.to_power_basis(&x);
            assert!(rf.from_power_basis(&coords).equals(&x));
        }
        // t^2 = -1 + (t^2+1): digits [-1 mod p, 1, 0, ...] at t^2+1.
        let t2 = PolyFq::from_ints(&f, &[0, 0, 1]);
        let digs = rf.padic_digits(&t2, 3);
        assert!(digs[0].equals(&rf.big.from_int(-1)));
        assert!(digs[1].equals(&rf.big.one()));
        assert!(digs[2].is_zero());
    }
}
