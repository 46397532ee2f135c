//! Small finite fields F_{p^n}, p <= 7.
//!
//! A field is pinned down by (p, n) alone: the modulus is always the
//! lexicographically smallest monic irreducible of degree n over F_p,
//! comparing coefficients from x^{n-1} down to the constant term. Equal
//! parameters therefore give identical representations, elements can be
//! compared across independently constructed fields, and every embedding
//! below is deterministic.
//!
//! Elements are coefficient vectors over F_p in the basis 1, g, ..., g^{n-1}
//! where g is the class of x. The enumeration index of an element is
//! sum c_i p^i; "minimal" choices (roots, Artin-Schreier solutions) always
//! refer to this index.

use crate::{Error, Result};
use std::fmt;
use std::sync::Arc;

const SMALL_PRIMES: [u32; 4] = [2, 3, 5, 7];

/// F_{p^deg} as F_p[x]/(modulus).
#[derive(Debug, PartialEq, Eq)]
pub struct Field {
    pub p: u32,
    pub deg: usize,
    /// Monic, length deg+1, ascending coefficients in 0..p.
    pub modulus: Vec<u32>,
}

/// Field degrees stay small, so elements live inline. Arithmetic on these
/// sits at the bottom of every polynomial loop in the crate; a heap
/// allocation per element would dominate everything above it.
pub const ELEM_CAP: usize = 16;

/// An element of a [`Field`], carrying its field. Coefficients ascend in
/// powers of the generator; entries at field.deg and beyond stay zero.
#[derive(Debug, Clone)]
pub struct FElem {
    pub field: Arc<Field>,
    c: [u8; ELEM_CAP],
}

// Dense polynomials over F_p, ascending, used only for modulus bookkeeping.
fn ptrim(v: &mut Vec<u32>) {
    while v.last() == Some(&0) {
        v.pop();
    }
}

fn pmul(p: u32, a: &[u32], b: &[u32]) -> Vec<u32> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![0u32; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = (out[i + j] + x * y) % p;
        }
    }
    ptrim(&mut out);
    out
}

fn prem(p: u32, a: &[u32], m: &[u32]) -> Vec<u32> {
    let mut r: Vec<u32> = a.to_vec();
    ptrim(&mut r);
    let dm = m.len() - 1;
    let lead_inv = mod_inv(p, m[dm]);
    while r.len() > dm {
        let k = r.len() - 1 - dm;
        let f = (r[r.len() - 1] * lead_inv) % p;
        for (i, &mc) in m.iter().enumerate() {
            r[k + i] = (r[k + i] + p * p - (f * mc) % p) % p;
        }
        ptrim(&mut r);
        if r.is_empty() {
            break;
        }
    }
    r
}

fn pgcd(p: u32, a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut x, mut y) = (a.to_vec(), b.to_vec());
    ptrim(&mut x);
    ptrim(&mut y);
    while !y.is_empty() {
        let r = prem(p, &x, &y);
        x = y;
        y = r;
    }
    x
}

fn ppowmod(p: u32, base: &[u32], mut e: u64, m: &[u32]) -> Vec<u32> {
    let mut acc = vec![1u32];
    let mut b = prem(p, base, m);
    while e > 0 {
        if e & 1 == 1 {
            acc = prem(p, &pmul(p, &acc, &b), m);
        }
        b = prem(p, &pmul(p, &b, &b), m);
        e >>= 1;
    }
    acc
}

fn mod_inv(p: u32, a: u32) -> u32 {
    // p is prime and tiny; Fermat is fine.
    let mut r = 1u32;
    let mut b = a % p;
    let mut e = p - 2;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    r
}

/// Irreducibility over F_p: x^{p^d} = x mod f, and x^{p^{d/r}} - x coprime
/// to f for every prime r dividing d.
fn irreducible_mod_p(p: u32, f: &[u32]) -> bool {
    let d = f.len() - 1;
    let x = vec![0u32, 1];
    let xq = ppowmod(p, &x, (p as u64).pow(d as u32), f);
    let mut diff = xq;
    // xq - x
    if diff.len() < 2 {
        diff.resize(2, 0);
    }
    diff[1] = (diff[1] + p - 1) % p;
    ptrim(&mut diff);
    if !diff.is_empty() {
        return false;
    }
    let mut r = 2;
    let mut n = d;
    while r <= n {
        if n % r == 0 {
            let mut sub = ppowmod(p, &x, (p as u64).pow((d / r) as u32), f);
            if sub.len() < 2 {
                sub.resize(2, 0);
            }
            sub[1] = (sub[1] + p - 1) % p;
            ptrim(&mut sub);
            let g = pgcd(p, f, &sub);
            if g.len() != 1 {
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

impl Field {
    /// The field F_{p^deg} with its canonical modulus.
    pub fn new(p: u32, deg: usize) -> Result<Arc<Field>> {
        if !SMALL_PRIMES.contains(&p) {
            return Err(Error::InvalidInput(format!(
                "characteristic {p} not supported (p must be 2, 3, 5 or 7)"
            )));
        }
        if deg == 0 || deg > 16 {
            return Err(Error::InvalidInput(format!("field degree {deg} out of range")));
        }
        if deg == 1 {
            // Any monic linear works; x itself is canonical.
            return Ok(Arc::new(Field { p, deg, modulus: vec![0, 1] }));
        }
        let total = (p as u64).pow(deg as u32);
        for idx in 0..total {
            // Digit i of idx is the coefficient of x^i, so increasing idx is
            // lexicographic order on (c_{deg-1}, ..., c_0).
            let mut f = vec![0u32; deg + 1];
            f[deg] = 1;
            let mut v = idx;
            for i in 0..deg {
                f[i] = (v % p as u64) as u32;
                v /= p as u64;
            }
            if irreducible_mod_p(p, &f) {
                return Ok(Arc::new(Field { p, deg, modulus: f }));
            }
        }
        unreachable!("irreducible polynomials exist in every degree");
    }

    pub fn order(&self) -> u64 {
        (self.p as u64).pow(self.deg as u32)
    }

    pub fn zero(self: &Arc<Self>) -> FElem {
        FElem { field: self.clone(), c: [0; ELEM_CAP] }
    }

    pub fn one(self: &Arc<Self>) -> FElem {
        self.from_int(1)
    }

    pub fn from_int(self: &Arc<Self>, n: i64) -> FElem {
        let p = self.p as i64;
        let mut c = [0; ELEM_CAP];
        c[0] = n.rem_euclid(p) as u8;
        FElem { field: self.clone(), c }
    }

    /// The class of x (for deg 1 this is the image of 0, i.e. zero).
    pub fn gen(self: &Arc<Self>) -> FElem {
        let mut c = [0; ELEM_CAP];
        if self.deg > 1 {
            c[1] = 1;
        }
        FElem { field: self.clone(), c }
    }

    /// Element with the given enumeration index sum c_i p^i.
    pub fn from_index(self: &Arc<Self>, mut idx: u64) -> FElem {
        let mut c = [0; ELEM_CAP];
        for ci in c.iter_mut().take(self.deg) {
            *ci = (idx % self.p as u64) as u8;
            idx /= self.p as u64;
        }
        FElem { field: self.clone(), c }
    }

    /// All elements in enumeration order.
    pub fn elements(self: &Arc<Self>) -> impl Iterator<Item = FElem> + '_ {
        (0..self.order()).map(move |i| self.from_index(i))
    }
}

impl FElem {
    /// Digits over F_p, ascending; the slice length must equal the field
    /// degree and values must already lie in 0..p.
    pub fn from_digits(field: &Arc<Field>, digits: &[u32]) -> FElem {
        assert_eq!(digits.len(), field.deg);
        let mut c = [0; ELEM_CAP];
        for (ci, &d) in c.iter_mut().zip(digits) {
            debug_assert!(d < field.p);
            *ci = d as u8;
        }
        FElem { field: field.clone(), c }
    }

    /// Coefficients 1, g, ..., g^{deg-1}.
    pub fn coeffs(&self) -> &[u8] {
        &self.c[..self.field.deg]
    }

    pub fn is_zero(&self) -> bool {
        self.c == [0; ELEM_CAP]
    }

    pub fn index(&self) -> u64 {
        let mut idx = 0u64;
        for &ci in self.coeffs().iter().rev() {
            idx = idx * self.field.p as u64 + ci as u64;
        }
        idx
    }

    fn same_field(&self, other: &FElem) {
        debug_assert_eq!(
            (self.field.p, self.field.deg),
            (other.field.p, other.field.deg),
            "mixed fields in FElem arithmetic"
        );
    }

    pub fn add(&self, other: &FElem) -> FElem {
        self.same_field(other);
        let p = self.field.p as u8;
        let mut c = [0; ELEM_CAP];
        for i in 0..self.field.deg {
            let s = self.c[i] + other.c[i];
            c[i] = if s >= p { s - p } else { s };
        }
        FElem { field: self.field.clone(), c }
    }

    pub fn sub(&self, other: &FElem) -> FElem {
        self.same_field(other);
        let p = self.field.p as u8;
        let mut c = [0; ELEM_CAP];
        for i in 0..self.field.deg {
            let s = self.c[i] + p - other.c[i];
            c[i] = if s >= p { s - p } else { s };
        }
        FElem { field: self.field.clone(), c }
    }

    pub fn neg(&self) -> FElem {
        let p = self.field.p as u16;
        let mut c = [0; ELEM_CAP];
        for i in 0..self.field.deg {
            c[i] = ((p - self.c[i] as u16) % p) as u8;
        }
        FElem { field: self.field.clone(), c }
    }

    pub fn mul(&self, other: &FElem) -> FElem {
        self.same_field(other);
        let p = self.field.p as u32;
        let d = self.field.deg;
        if d == 1 {
            let mut c = [0; ELEM_CAP];
            c[0] = (self.c[0] as u32 * other.c[0] as u32 % p) as u8;
            return FElem { field: self.field.clone(), c };
        }
        // Convolution then reduction by the monic modulus, top down. The
        // raw sums stay far below u32 range for p <= 7 and deg <= 16, so
        // one reduction per output digit suffices.
        let mut conv = [0u32; 2 * ELEM_CAP];
        for i in 0..d {
            if self.c[i] == 0 {
                continue;
            }
            let a = self.c[i] as u32;
            for j in 0..d {
                conv[i + j] += a * other.c[j] as u32;
            }
        }
        let m = &self.field.modulus;
        for k in (d..2 * d - 1).rev() {
            let f = conv[k] % p;
            if f == 0 {
                continue;
            }
            for i in 0..d {
                conv[k - d + i] += f * (p - m[i]);
            }
        }
        let mut c = [0; ELEM_CAP];
        for i in 0..d {
            c[i] = (conv[i] % p) as u8;
        }
        FElem { field: self.field.clone(), c }
    }

    pub fn scale(&self, k: i64) -> FElem {
        let p = self.field.p;
        let k = k.rem_euclid(p as i64) as u32;
        let mut c = [0; ELEM_CAP];
        for i in 0..self.field.deg {
            c[i] = (self.c[i] as u32 * k % p) as u8;
        }
        FElem { field: self.field.clone(), c }
    }

    pub fn pow(&self, mut e: u64) -> FElem {
        let mut acc = self.field.one();
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

    pub fn inv(&self) -> Result<FElem> {
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(self.pow(self.field.order() - 2))
    }

    /// x -> x^{p^k}, any integer k (negative means p-th roots; the Frobenius
    /// of F_{p^deg} has order deg, so k is reduced mod deg).
    pub fn frobenius_p(&self, k: i64) -> FElem {
        let d = self.field.deg as i64;
        let k = k.rem_euclid(d) as u32;
        if k == 0 {
            return self.clone();
        }
        // deg <= 16 and p <= 7, so p^k fits comfortably in u64.
        self.pow((self.field.p as u64).pow(k))
    }

    /// Trace to F_p is not needed; traces are taken at the Fq level in
    /// `polyfq`. Equality ignores Arc identity.
    pub fn equals(&self, other: &FElem) -> bool {
        self.field.p == other.field.p && self.field.deg == other.field.deg && self.c == other.c
    }
}

impl PartialEq for FElem {
    fn eq(&self, other: &Self) -> bool {
        self.equals(other)
    }
}
impl Eq for FElem {}

impl std::hash::Hash for FElem {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.field.p.hash(state);
        self.field.deg.hash(state);
        self.c.hash(state);
    }
}

impl fmt::Display for FElem {
    /// Prime fields print as integers; extensions as polynomials in g with
    /// descending powers, e.g. "2*g^3+g+1".
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.deg == 1 {
            return write!(fm, "{}", self.c[0]);
        }
        if self.is_zero() {
            return write!(fm, "0");
        }
        let mut first = true;
        for i in (0..self.field.deg).rev() {
            let ci = self.c[i] as u32;
            if ci == 0 {
                continue;
            }
            if !first {
                write!(fm, "+")?;
            }
            first = false;
            match (i, ci) {
                (0, c) => write!(fm, "{c}")?,
                (1, 1) => write!(fm, "g")?,
                (1, c) => write!(fm, "{c}*g")?,
                (i, 1) => write!(fm, "g^{i}")?,
                (i, c) => write!(fm, "{c}*g^{i}")?,
            }
        }
        Ok(())
    }
}

/// Deterministic embedding of `sub` into `big` (sub.deg must divide big.deg):
/// the generator of `sub` maps to the minimal-index root of sub's modulus.
pub fn embed_root(sub: &Arc<Field>, big: &Arc<Field>) -> FElem {
    assert_eq!(sub.p, big.p);
    assert_eq!(big.deg % sub.deg, 0, "no embedding between these fields");
    if sub.deg == 1 {
        return big.zero();
    }
    for cand in big.elements() {
        // Evaluate sub.modulus at cand.
        let mut acc = big.zero();
        for &co in sub.modulus.iter().rev() {
            acc = acc.mul(&cand).add(&big.from_int(co as i64));
        }
        if acc.is_zero() {
            return cand;
        }
    }
    unreachable!("subfield modulus always splits in the extension");
}

/// Apply the embedding with the given generator image.
pub fn embed(x: &FElem, big: &Arc<Field>, root: &FElem) -> FElem {
    let mut acc = big.zero();
    for &co in x.coeffs().iter().rev() {
        acc = acc.mul(root).add(&big.from_int(co as i64));
    }
    acc
}

/// Minimal-index solution of z - z^q = y in `field` viewed over F_q
/// (q = p^{qdeg}, qdeg divides field.deg), or None when there is none.
pub fn artin_schreier_const(field: &Arc<Field>, y: &FElem, qdeg: usize) -> Option<FElem> {
    let q = (field.p as u64).pow(qdeg as u32);
    for z in field.elements() {
        if z.sub(&z.pow(q)).equals(y) {
            return Some(z);
        }
    }
    None
}

/// Minimal-index n-th root in `field`, or None.
pub fn nth_root_const(field: &Arc<Field>, y: &FElem, n: u64) -> Option<FElem> {
    for z in field.elements() {
        if z.pow(n).equals(y) {
            return Some(z);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_moduli() {
        // F_9 = F_3[x]/(x^2+1); F_4 = F_2[x]/(x^2+x+1); F_27 = F_3[x]/(x^3+2x+1).
        assert_eq!(Field::new(3, 2).unwrap().modulus, vec![1, 0, 1]);
        assert_eq!(Field::new(2, 2).unwrap().modulus, vec![1, 1, 1]);
        assert_eq!(Field::new(3, 3).unwrap().modulus, vec![1, 2, 0, 1]);
    }

    #[test]
    fn field_axioms_f9() {
        let f9 = Field::new(3, 2).unwrap();
        let els: Vec<FElem> = f9.elements().collect();
        assert_eq!(els.len(), 9);
        // g^2 = -1 in F_9.
        let g = f9.gen();
        assert!(g.mul(&g).equals(&f9.from_int(-1)));
        for a in &els {
            for b in &els {
                assert!(a.add(b).equals(&b.add(a)));
                assert!(a.mul(b).equals(&b.mul(a)));
                if !b.is_zero() {
                    let r = a.mul(b).mul(&b.inv().unwrap());
                    assert!(r.equals(a));
                }
            }
        }
    }

    #[test]
    fn frobenius_fixes_prime_field_and_has_right_order() {
        let f9 = Field::new(3, 2).unwrap();
        for a in f9.elements() {
            assert!(a.frobenius_p(2).equals(&a));
            assert!(a.frobenius_p(1).equals(&a.pow(3)));
            assert!(a.frobenius_p(-1).frobenius_p(1).equals(&a));
        }
    }

    #[test]
    fn embedding_is_a_ring_hom() {
        let f3 = Field::new(3, 1).unwrap();
        let f9 = Field::new(3, 2).unwrap();
        let f81 = Field::new(3, 4).unwrap();
        let r = embed_root(&f9, &f81);
        for a in f9.elements() {
            for b in f9.elements() {
                let ea = embed(&a, &f81, &r);
                let eb = embed(&b, &f81, &r);
                assert!(embed(&a.add(&b), &f81, &r).equals(&ea.add(&eb)));
                assert!(embed(&a.mul(&b), &f81, &r).equals(&ea.mul(&eb)));
            }
        }
        let r3 = embed_root(&f3, &f9);
        assert!(embed(&f3.from_int(2), &f9, &r3).equals(&f9.from_int(2)));
    }

    #[test]
    fn artin_schreier_and_roots_in_constants() {
        let f9 = Field::new(3, 2).unwrap();
        // z - z^3 = 0 has minimal solution 0.
        assert!(artin_schreier_const(&f9, &f9.zero(), 1).unwrap().is_zero());
        // x^2 = -1 is solvable in F_9 (by g), not in F_3.
        let f3 = Field::new(3, 1).unwrap();
        assert!(nth_root_const(&f3, &f3.from_int(-1), 2).is_none());
        let r = nth_root_const(&f9, &f9.from_int(-1), 2).unwrap();
        assert!(r.mul(&r).equals(&f9.from_int(-1)));
    }
}
