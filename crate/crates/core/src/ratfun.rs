//! The coefficient field for twisted polynomial arithmetic: rational
//! functions in t and th over Fq, where th may carry p-power roots.
//!
//! An element is stored as num/den of bivariate polynomials in (t, y) at a
//! root level e, meaning y stands for th^(1/p^e). Invariants kept by every
//! constructor: den nonzero, gcd(num, den) = 1, den has leading coefficient
//! 1 under the (t-degree, y-degree) ordering, and the level is minimal (at
//! level e > 0 not every y-exponent of num and den is divisible by p).
//! Equality is therefore structural.
//!
//! y-exponents are kept sparse: Frobenius twists multiply them by powers of
//! q, which is harmless for a map and fatal for a dense vector.

use crate::ff::{FElem, Field};
use crate::polyfq::PolyFq;
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

const YEXP_LIMIT: u64 = 1 << 58;

type GcdCacheKey = (u64, u64);
type GcdCacheEntry = (Poly2, Poly2, Poly2);
thread_local! {
    static GCD_CACHE: std::cell::RefCell<std::collections::HashMap<GcdCacheKey, GcdCacheEntry>> =
        std::cell::RefCell::new(std::collections::HashMap::new());
    static FIELD_CACHE: std::cell::RefCell<BTreeMap<(u32, usize), Arc<Field>>> =
        std::cell::RefCell::new(BTreeMap::new());
}

fn cached_field(p: u32, deg: usize) -> Option<Arc<Field>> {
    FIELD_CACHE.with(|c| {
        let mut c = c.borrow_mut();
        if let Some(f) = c.get(&(p, deg)) {
            return Some(f.clone());
        }
        let f = Field::new(p, deg).ok()?;
        c.insert((p, deg), f.clone());
        Some(f)
    })
}

/// Bivariate polynomial over Fq: the value at key j is the coefficient of
/// y^j, a nonzero polynomial in t.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly2 {
    pub field: Arc<Field>,
    pub yc: BTreeMap<u64, PolyFq>,
}

impl std::hash::Hash for Poly2 {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        for (j, c) in &self.yc {
            j.hash(state);
            c.hash(state);
        }
    }
}

fn exact_div_fq(a: &PolyFq, d: &PolyFq) -> PolyFq {
    let (q, r) = a.divrem(d);
    assert!(r.is_zero(), "inexact polynomial division");
    q
}

fn gcd_u64(a: u64, b: u64) -> u64 {
    let (mut a, mut b) = (a, b);
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Inverse of a modulo m, where gcd(a, m) = 1. Extended Euclid tracking
/// one cofactor.
fn inv_mod_fq(a: &PolyFq, m: &PolyFq) -> Option<PolyFq> {
    let field = &a.field;
    let mut r0 = m.clone();
    let mut r1 = a.divrem(m).1;
    let mut s0 = PolyFq::zero(field);
    let mut s1 = PolyFq::from_ints(field, &[1]);
    while !r1.is_zero() {
        let (q, r2) = r0.divrem(&r1);
        let s2 = s0.sub(&q.mul(&s1));
        r0 = r1;
        r1 = r2;
        s0 = s1;
        s1 = s2;
    }
    if r0.deg() != 0 {
        return None;
    }
    let li = r0.lead().unwrap().inv().ok()?;
    Some(s0.scale(&li).divrem(m).1)
}

/// Monic gcd of dense univariate polynomials with coefficients in
/// Fq[t]/(m), m irreducible. Coefficients are kept as reduced
/// representatives; zero is the empty vector.
fn gcd_dense_mod(mut x: Vec<PolyFq>, mut y: Vec<PolyFq>, m: &PolyFq) -> Option<Vec<PolyFq>> {
    let trim = |v: &mut Vec<PolyFq>| {
        while v.last().is_some_and(|c| c.is_zero()) {
            v.pop();
        }
    };
    trim(&mut x);
    trim(&mut y);
    while !y.is_empty() {
        if x.len() < y.len() {
            std::mem::swap(&mut x, &mut y);
            continue;
        }
        let li = inv_mod_fq(y.last().unwrap(), m)?;
        let dy = y.len() - 1;
        while x.len() >= y.len() {
            let f = x.last().unwrap().mul(&li).divrem(m).1;
            let off = x.len() - 1 - dy;
            for (i, c) in y.iter().enumerate().take(dy) {
                let v = x[off + i].sub(&f.mul(c).divrem(m).1);
                x[off + i] = v;
            }
            x.pop();
            trim(&mut x);
        }
        std::mem::swap(&mut x, &mut y);
    }
    if !x.is_empty() {
        let li = inv_mod_fq(x.last().unwrap(), m)?;
        for c in &mut x {
            *c = c.mul(&li).divrem(m).1;
        }
    }
    Some(x)
}

/// Monic gcd of two dense univariate polynomials, coefficients ascending.
/// Zero is the empty vector after trimming.
fn gcd_dense_fq(mut x: Vec<FElem>, mut y: Vec<FElem>) -> Vec<FElem> {
    let trim = |v: &mut Vec<FElem>| {
        while v.last().is_some_and(|c| c.is_zero()) {
            v.pop();
        }
    };
    trim(&mut x);
    trim(&mut y);
    while !y.is_empty() {
        if x.len() < y.len() {
            std::mem::swap(&mut x, &mut y);
            continue;
        }
        let li = y.last().unwrap().inv().unwrap();
        let dy = y.len() - 1;
        while x.len() >= y.len() {
            let f = x.last().unwrap().mul(&li);
            let off = x.len() - 1 - dy;
            for (i, c) in y.iter().enumerate().take(dy) {
                let v = x[off + i].sub(&f.mul(c));
                x[off + i] = v;
            }
            x.pop();
            trim(&mut x);
        }
        std::mem::swap(&mut x, &mut y);
    }
    if let Some(li) = x.last().and_then(|c| c.inv().ok()) {
        for c in &mut x {
            *c = c.mul(&li);
        }
    }
    x
}

impl Poly2 {
    pub fn zero(field: &Arc<Field>) -> Self {
        Poly2 { field: field.clone(), yc: BTreeMap::new() }
    }

    pub fn one(field: &Arc<Field>) -> Self {
        Self::from_t_poly(PolyFq::from_ints(field, &[1]))
    }

    pub fn from_t_poly(f: PolyFq) -> Self {
        let field = f.field.clone();
        let mut yc = BTreeMap::new();
        if !f.is_zero() {
            yc.insert(0, f);
        }
        Poly2 { field, yc }
    }

    /// c * t^i * y^j.
    pub fn monomial(field: &Arc<Field>, c: FElem, i: usize, j: u64) -> Self {
        if c.is_zero() {
            return Self::zero(field);
        }
        assert!(j < YEXP_LIMIT);
        let mut tp = vec![field.zero(); i + 1];
        tp[i] = c;
        let mut yc = BTreeMap::new();
        yc.insert(j, PolyFq::from_coeffs(field, tp));
        Poly2 { field: field.clone(), yc }
    }

    pub fn is_zero(&self) -> bool {
        self.yc.is_empty()
    }

    pub fn deg_y(&self) -> i64 {
        self.yc.keys().next_back().map_or(-1, |&j| j as i64)
    }

    pub fn deg_t(&self) -> i64 {
        self.yc.values().map(|f| f.deg()).max().unwrap_or(-1)
    }

    pub fn coeff_y(&self, j: u64) -> PolyFq {
        self.yc.get(&j).cloned().unwrap_or_else(|| PolyFq::zero(&self.field))
    }

    fn insert_add(yc: &mut BTreeMap<u64, PolyFq>, j: u64, f: PolyFq) {
        if f.is_zero() {
            return;
        }
        assert!(j < YEXP_LIMIT);
        match yc.get_mut(&j) {
            Some(g) => {
                let s = g.add(&f);
                if s.is_zero() {
                    yc.remove(&j);
                } else {
                    *g = s;
                }
            }
            None => {
                yc.insert(j, f);
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut yc = self.yc.clone();
        for (&j, f) in &other.yc {
            Self::insert_add(&mut yc, j, f.clone());
        }
        Poly2 { field: self.field.clone(), yc }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        let yc = self.yc.iter().map(|(&j, f)| (j, f.neg())).collect();
        Poly2 { field: self.field.clone(), yc }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut yc = BTreeMap::new();
        for (&i, a) in &self.yc {
            for (&j, b) in &other.yc {
                Self::insert_add(&mut yc, i + j, a.mul(b));
            }
        }
        Poly2 { field: self.field.clone(), yc }
    }

    pub fn mul_t_poly(&self, f: &PolyFq) -> Self {
        if f.is_zero() {
            return Self::zero(&self.field);
        }
        let yc = self.yc.iter().map(|(&j, g)| (j, g.mul(f))).collect();
        Poly2 { field: self.field.clone(), yc }
    }

    pub fn scale(&self, k: &FElem) -> Self {
        if k.is_zero() {
            return Self::zero(&self.field);
        }
        let yc = self.yc.iter().map(|(&j, g)| (j, g.scale(k))).collect();
        Poly2 { field: self.field.clone(), yc }
    }

    pub fn pow(&self, mut e: u64) -> Self {
        let mut acc = Self::one(&self.field);
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

    /// Leading monomial position under lexicographic (t-degree, y-degree),
    /// t-degree dominant. None for zero.
    pub fn lead_key(&self) -> Option<(i64, u64)> {
        self.yc
            .iter()
            .map(|(&j, f)| (f.deg(), j))
            .max()
    }

    pub fn lead_fq(&self) -> Option<FElem> {
        self.lead_key().map(|(_, j)| self.yc[&j].lead().unwrap().clone())
    }

    pub fn is_one(&self) -> bool {
        self.yc.len() == 1
            && self
                .yc
                .get(&0)
                .map_or(false, |f| f.deg() == 0 && f.coeff(0).equals(&self.field.one()))
    }

    /// Scale so the leading coefficient is 1.
    pub fn monic(&self) -> Self {
        match self.lead_fq() {
            None => self.clone(),
            Some(c) => self.scale(&c.inv().unwrap()),
        }
    }

    /// Content with respect to y: monic gcd in Fq[t] of the coefficients.
    pub fn content_y(&self) -> PolyFq {
        let mut g = PolyFq::zero(&self.field);
        for f in self.yc.values() {
            g = g.gcd(f);
            if g.deg() == 0 {
                break;
            }
        }
        g
    }

    pub fn divide_by_t_poly(&self, d: &PolyFq) -> Self {
        let yc = self.yc.iter().map(|(&j, f)| (j, exact_div_fq(f, d))).collect();
        Poly2 { field: self.field.clone(), yc }
    }

    /// Pseudo-remainder in the variable y. Coefficient content is stripped
    /// periodically; the ambient gcd computation treats content separately,
    /// so scaling by polynomials in t alone is harmless and keeps t-degrees
    /// near their reduced size.
    fn prem_y(&self, d: &Self) -> Self {
        let mut r = self.clone();
        let (&dj, lb) = d.yc.last_key_value().unwrap();
        let lb = lb.clone();
        let mut steps = 0usize;
        while let Some((&rj, lr)) = r.yc.last_key_value() {
            if rj < dj {
                break;
            }
            let lr = lr.clone();
            // lb * r - lr * y^{rj-dj} * d
            let shift = Poly2 {
                field: self.field.clone(),
                yc: std::iter::once((rj - dj, lr)).collect(),
            };
            r = r.mul_t_poly(&lb).sub(&shift.mul(d));
            steps += 1;
            if steps % 8 == 0 {
                let c = r.content_y();
                if c.deg() > 0 {
                    r = r.divide_by_t_poly(&c);
                }
            }
        }
        r
    }

    /// Lowest y-exponent carrying a term; 0 for the zero polynomial.
    fn y_val(&self) -> u64 {
        self.yc.keys().next().copied().unwrap_or(0)
    }

    /// Shift every y-exponent down by v; requires v at most the valuation.
    fn shift_y_down(&self, v: u64) -> Self {
        if v == 0 {
            return self.clone();
        }
        let yc = self.yc.iter().map(|(&j, f)| (j - v, f.clone())).collect();
        Poly2 { field: self.field.clone(), yc }
    }

    /// Gcd of the nonzero y-exponents; 0 when no term has positive degree.
    fn exp_gcd(&self) -> u64 {
        let mut g = 0u64;
        for &j in self.yc.keys() {
            g = gcd_u64(g, j);
            if g == 1 {
                break;
            }
        }
        g
    }

    fn compress_y(&self, g: u64) -> Self {
        let yc = self.yc.iter().map(|(&j, f)| (j / g, f.clone())).collect();
        Poly2 { field: self.field.clone(), yc }
    }

    /// Gcd, leading coefficient 1. The pseudo-remainder walk only runs on
    /// t-primitive parts with the y-exponent lattice compressed: common
    /// divisors respect the substitution y -> y^g, so dividing all
    /// exponents by their gcd first keeps the walk short on the sparse
    /// high-twist polynomials this ring is full of.
    fn content_hash(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.hash(&mut h);
        h.finish()
    }

    pub fn gcd(&self, other: &Self) -> Self {
        // Certificate verification replays products whose simplification
        // already ran once; memoizing the heavyweight calls turns those
        // replays into lookups. The result only depends on the operands up
        // to scalars, so keys are content hashes of the monic forms,
        // checked for real equality on a hit.
        let keyed = (self.yc.len().min(other.yc.len()) >= 8)
            .then(|| (self.monic(), other.monic()));
        let key = keyed
            .as_ref()
            .map(|(ma, mb)| (ma.content_hash(), mb.content_hash()));
        if let (Some(k), Some((ma, mb))) = (key, keyed.as_ref()) {
            let hit = GCD_CACHE.with(|c| {
                let c = c.borrow();
                if let Some((a, b, r)) = c.get(&k) {
                    if a == ma && b == mb {
                        return Some(r.clone());
                    }
                }
                if let Some((a, b, r)) = c.get(&(k.1, k.0)) {
                    if a == mb && b == ma {
                        return Some(r.clone());
                    }
                }
                None
            });
            if let Some(r) = hit {
                return r;
            }
        }
        let r = self.gcd_inner(other);
        if let (Some(k), Some((ma, mb))) = (key, keyed) {
            GCD_CACHE.with(|c| {
                let mut c = c.borrow_mut();
                if c.len() >= 512 {
                    // Keep the heavyweight entries across wipes; those are
                    // the ones worth a lookup.
                    c.retain(|_, (a, b, _)| a.yc.len().min(b.yc.len()) >= 256);
                    if c.len() >= 512 {
                        c.clear();
                    }
                }
                c.insert(k, (ma, mb, r.clone()));
            });
        }
        r
    }

    fn gcd_inner(&self, other: &Self) -> Self {
        if self.is_zero() {
            return other.monic();
        }
        if other.is_zero() {
            return self.monic();
        }
        if self == other {
            return self.monic();
        }
        let ca = self.content_y();
        let cb = other.content_y();
        let cg = ca.gcd(&cb);
        let a = self.divide_by_t_poly(&ca);
        let b = other.divide_by_t_poly(&cb);
        let va = a.y_val();
        let vb = b.y_val();
        let a = a.shift_y_down(va);
        let b = b.shift_y_down(vb);
        let mut core = if a.deg_y() == 0 || b.deg_y() == 0 {
            // A t-primitive polynomial constant in y shares no
            // nonconstant factor with anything.
            Self::one(&self.field)
        } else {
            let g = gcd_u64(a.exp_gcd(), b.exp_gcd()).max(1);
            let (ca2, cb2) = (a.compress_y(g), b.compress_y(g));
            let dense_ok = ca2.deg_y().max(cb2.deg_y()) <= (1 << 14);
            let c = if dense_ok && (ca2.deg_t() == 0 || cb2.deg_t() == 0) {
                Self::gcd_with_t_free(&ca2, &cb2)
            } else if dense_ok {
                match Self::gcd_modular(&ca2, &cb2) {
                    Some(g) => g,
                    None => Self::gcd_primitive(ca2, cb2),
                }
            } else {
                Self::gcd_primitive(ca2, cb2)
            };
            if g > 1 {
                c.stretch_y(g)
            } else {
                c
            }
        };
        let v = va.min(vb);
        if v > 0 {
            core = core.mul(&Poly2::monomial(&self.field, self.field.one(), 0, v));
        }
        core.mul_t_poly(&cg).monic()
    }

    /// Gcd when one operand is free of t. Divisors of a t-free polynomial
    /// are themselves t-free, and a t-free polynomial divides f exactly
    /// when it divides every t-slice of f, so the whole computation drops
    /// to univariate gcds in y.
    fn gcd_with_t_free(a: &Self, b: &Self) -> Self {
        let (tf, other) = if a.deg_t() == 0 { (a, b) } else { (b, a) };
        let field = tf.field.clone();
        let mut g: Vec<FElem> = vec![field.zero(); tf.deg_y() as usize + 1];
        for (&j, c) in &tf.yc {
            g[j as usize] = c.coeff(0);
        }
        let dy = other.deg_y() as usize;
        let mut slices: Vec<Vec<FElem>> =
            vec![vec![field.zero(); dy + 1]; other.deg_t() as usize + 1];
        for (&j, c) in &other.yc {
            for (i, co) in c.c.iter().enumerate() {
                if !co.is_zero() {
                    slices[i][j as usize] = co.clone();
                }
            }
        }
        for s in slices {
            if g.len() == 1 {
                break;
            }
            g = gcd_dense_fq(g, s);
        }
        let mut out = Self::zero(&field);
        for (j, c) in g.into_iter().enumerate() {
            if !c.is_zero() {
                out.yc.insert(j as u64, PolyFq::constant(c));
            }
        }
        out
    }

    /// Primitive pseudo-remainder sequence on t-primitive inputs of
    /// positive y-degree.
    fn gcd_primitive(mut a: Self, mut b: Self) -> Self {
        if a.deg_y() < b.deg_y() {
            std::mem::swap(&mut a, &mut b);
        }
        while !b.is_zero() {
            let mut r = a.prem_y(&b);
            if !r.is_zero() {
                let c = r.content_y();
                r = r.divide_by_t_poly(&c);
            }
            a = b;
            b = r;
        }
        let c = a.content_y();
        a.divide_by_t_poly(&c)
    }

    /// Exact division; panics if the divisor does not divide.
    pub fn divide_exact(&self, d: &Self) -> Self {
        self.divide_exact_inner(d)
    }

    fn divide_exact_inner(&self, d: &Self) -> Self {
        assert!(!d.is_zero(), "division by zero polynomial");
        if !self.is_zero() && self.deg_y() <= (1 << 14) {
            return self.divide_dense(d).expect("inexact bivariate division");
        }
        let mut r = self.clone();
        let mut q = Self::zero(&self.field);
        let (&dj, lb) = d.yc.last_key_value().unwrap();
        let lb = lb.clone();
        while let Some((&rj, lr)) = r.yc.last_key_value() {
            assert!(rj >= dj, "inexact bivariate division");
            let qc = exact_div_fq(lr, &lb);
            let term = Poly2 {
                field: self.field.clone(),
                yc: std::iter::once((rj - dj, qc)).collect(),
            };
            q = q.add(&term);
            r = r.sub(&term.mul(d));
        }
        q
    }

    /// Long division over a dense y-vector, cheap when the quotient has
    /// many terms. None on any inexact step. Exactness bounds the
    /// quotient's t-degree by the degree difference, so any step past that
    /// bound also proves inexactness; without this check a spurious
    /// divisor with unit leading coefficient grinds through an unbounded
    /// coefficient blowup before failing.
    fn divide_dense(&self, d: &Self) -> Option<Self> {
        let (&dj, lb) = d.yc.last_key_value().unwrap();
        let n = self.deg_y() as usize;
        if (n as u64) < dj {
            return None;
        }
        let qlimit = self.deg_t() - d.deg_t();
        let mut r: Vec<PolyFq> = vec![PolyFq::zero(&self.field); n + 1];
        for (&j, c) in &self.yc {
            r[j as usize] = c.clone();
        }
        let mut q = BTreeMap::new();
        for idx in (0..=n).rev() {
            if r[idx].is_zero() {
                continue;
            }
            if (idx as u64) < dj {
                return None;
            }
            let (qc, rem) = r[idx].divrem(lb);
            if !rem.is_zero() || qc.deg() > qlimit {
                return None;
            }
            let off = idx - dj as usize;
            for (&e, ce) in &d.yc {
                if e == dj {
                    continue;
                }
                let slot = off + e as usize;
                r[slot] = r[slot].sub(&qc.mul(ce));
            }
            q.insert(off as u64, qc);
        }
        Some(Poly2 { field: self.field.clone(), yc: q })
    }

    /// Division that reports failure instead of panicking, for use as a
    /// certificate check.
    fn try_divide_exact(&self, d: &Self) -> Option<Self> {
        if self.is_zero() {
            return Some(Self::zero(&self.field));
        }
        if self.deg_y() <= (1 << 14) {
            return self.divide_dense(d);
        }
        let qlimit = self.deg_t() - d.deg_t();
        let (&dj, lb) = d.yc.last_key_value().unwrap();
        let lb = lb.clone();
        let mut r = self.clone();
        let mut q = Self::zero(&self.field);
        while let Some((&rj, lr)) = r.yc.last_key_value() {
            if rj < dj {
                return None;
            }
            let (qc, rem) = lr.divrem(&lb);
            if !rem.is_zero() || qc.deg() > qlimit {
                return None;
            }
            let term = Poly2 {
                field: self.field.clone(),
                yc: std::iter::once((rj - dj, qc)).collect(),
            };
            q = q.add(&term);
            r = r.sub(&term.mul(d));
        }
        Some(q)
    }

    /// Gcd of t-primitive operands by reduction modulo one irreducible
    /// m(t). Choosing deg(m) above every t-degree the answer (scaled to
    /// leading coefficient gamma) can have makes the reduced computation a
    /// single dense univariate gcd whose lift already carries the true
    /// coefficients. Trial division certifies the candidate outright, so a
    /// degenerate reduction costs a retry, never a wrong answer.
    fn gcd_modular(a: &Self, b: &Self) -> Option<Self> {
        let field = &a.field;
        let la = a.yc.last_key_value().unwrap().1;
        let lb = b.yc.last_key_value().unwrap().1;
        let gamma = la.gcd(lb);
        let bound = (gamma.deg() + a.deg_t().min(b.deg_t())) as usize;
        // Degenerate primes divide a t-polynomial of roughly resultant
        // size, so a prime degree comfortably past its logarithm makes
        // them unlikely; below that threshold a pass can still win but
        // proves nothing when it loses.
        let q = field.order();
        let obstruction =
            (a.deg_y().max(b.deg_y()) as u64) * ((a.deg_t() + b.deg_t()) as u64) + 2;
        let mut k_size = 1usize;
        let mut pw = q;
        while pw < obstruction.saturating_mul(8) {
            k_size += 1;
            pw = pw.saturating_mul(q);
        }
        // Trial division is the actual proof: a certified candidate divides
        // the true gcd while its y-degree, inherited from the residue gcd,
        // cannot fall below it. The coefficient bound only marks the prime
        // degree beyond which the lift is guaranteed exact, so smaller
        // degrees are fair game and failures merely escalate.
        let k_lift = bound + 1;
        // A tiny prime degree goes first as a screen: most calls are
        // coprime pairs, and a constant residue gcd settles those at any
        // prime degree, for a fraction of the cost of a size-safe one.
        let mut ks: Vec<usize> = vec![2, 3, 4];
        if k_lift + 2 <= k_size {
            // Cheap second try: coefficients this small certify instantly
            // when the prime cooperates.
            ks.push(k_lift);
        }
        let k_top = k_size.max(k_lift.min(crate::ff::ELEM_CAP));
        ks.extend([k_top, k_top + 1, k_top + 2]);
        {
            let mut seen: Vec<usize> = Vec::new();
            ks.retain(|k| {
                if seen.contains(k) {
                    false
                } else {
                    seen.push(*k);
                    true
                }
            });
        }
        let trace = std::env::var("GCD_TRACE").is_ok();
        for k in ks {
            let t0 = std::time::Instant::now();
            let cand = match Self::residue_pass(a, b, &gamma, la, lb, k) {
                // No prime of this degree keeps both leading coefficients
                // nonzero; a larger degree may still work.
                None => continue,
                Some(None) => {
                    // The gcd's top y-coefficient divides la, which the
                    // chosen prime does not divide, so the gcd keeps its
                    // y-degree under reduction. A constant reduced gcd
                    // settles coprimality at any prime degree.
                    return Some(Self::one(field));
                }
                Some(Some(c)) => c,
            };
            let t1 = std::time::Instant::now();
            let ok = a.try_divide_exact(&cand).is_some() && b.try_divide_exact(&cand).is_some();
            if trace && (!ok || t1.duration_since(t0).as_millis() > 200) {
                eprintln!(
                    "[modular k={k} bound={bound} pass={:?} cert={:?} ok={ok} hdeg={}]",
                    t1.duration_since(t0),
                    t1.elapsed(),
                    cand.deg_y()
                );
            }
            if ok {
                return Some(cand);
            }
        }
        None
    }

    /// One reduction pass at prime degree k: Some(None) reports a constant
    /// residue gcd, Some(Some(c)) the t-primitive lift of gamma times the
    /// monic residue gcd, None that no usable prime was found.
    fn residue_pass(
        a: &Self,
        b: &Self,
        gamma: &PolyFq,
        la: &PolyFq,
        lb: &PolyFq,
        k: usize,
    ) -> Option<Option<Self>> {
        let field = &a.field;
        // Over a prime base field the canonical extension modulus doubles
        // as the prime, turning coefficient arithmetic into inline field
        // elements and both transfer maps into digit copies: t goes to the
        // generator, a residue's digits are the lifted coefficients.
        if field.deg == 1 && k <= crate::ff::ELEM_CAP {
            if let Some(big) = cached_field(field.p, k) {
                let m = PolyFq::from_coeffs(
                    field,
                    big.modulus.iter().map(|&d| field.from_int(d as i64)).collect(),
                );
                if !la.divrem(&m).1.is_zero() && !lb.divrem(&m).1.is_zero() {
                    let gen = big.gen();
                    let ev = |f: &PolyFq| -> FElem {
                        let mut acc = big.zero();
                        for co in f.c.iter().rev() {
                            acc = acc.mul(&gen).add(&big.from_int(co.coeffs()[0] as i64));
                        }
                        acc
                    };
                    let image = |f: &Self| -> Vec<FElem> {
                        let mut v = vec![big.zero(); f.deg_y() as usize + 1];
                        for (&j, c) in &f.yc {
                            v[j as usize] = ev(c);
                        }
                        v
                    };
                    let h = gcd_dense_fq(image(a), image(b));
                    if h.len() <= 1 {
                        return Some(None);
                    }
                    let gm = ev(gamma);
                    let lift = |x: &FElem| -> PolyFq {
                        let c = x
                            .coeffs()
                            .iter()
                            .take(k)
                            .map(|&d| field.from_int(d as i64))
                            .collect();
                        PolyFq::from_coeffs(field, c)
                    };
                    let mut cand = Self::zero(field);
                    for (j, c) in h.iter().enumerate() {
                        let cc = lift(&c.mul(&gm));
                        if !cc.is_zero() {
                            cand.yc.insert(j as u64, cc);
                        }
                    }
                    let ct = cand.content_y();
                    return Some(Some(cand.divide_by_t_poly(&ct)));
                }
            }
        }
        let m = PolyFq::monic_of_degree(field, k).find(|c| {
            c.is_irreducible() && !la.divrem(c).1.is_zero() && !lb.divrem(c).1.is_zero()
        })?;
        let image = |f: &Self| -> Vec<PolyFq> {
            let mut v = vec![PolyFq::zero(field); f.deg_y() as usize + 1];
            for (&j, c) in &f.yc {
                v[j as usize] = c.divrem(&m).1;
            }
            v
        };
        let h = gcd_dense_mod(image(a), image(b), &m)?;
        if h.len() <= 1 {
            return Some(None);
        }
        let gm = gamma.divrem(&m).1;
        let mut cand = Self::zero(field);
        for (j, c) in h.iter().enumerate() {
            let cc = c.mul(&gm).divrem(&m).1;
            if !cc.is_zero() {
                cand.yc.insert(j as u64, cc);
            }
        }
        let ct = cand.content_y();
        Some(Some(cand.divide_by_t_poly(&ct)))
    }

    pub fn deriv_t(&self) -> Self {
        let mut yc = BTreeMap::new();
        for (&j, f) in &self.yc {
            Self::insert_add(&mut yc, j, f.derivative());
        }
        Poly2 { field: self.field.clone(), yc }
    }

    pub fn deriv_y(&self) -> Self {
        let p = self.field.p as u64;
        let mut yc = BTreeMap::new();
        for (&j, f) in &self.yc {
            if j == 0 {
                continue;
            }
            let jm = self.field.from_int((j % p) as i64);
            Self::insert_add(&mut yc, j - 1, f.scale(&jm));
        }
        Poly2 { field: self.field.clone(), yc }
    }

    /// True when every monomial has both exponents divisible by p, which in
    /// characteristic p over a perfect coefficient field means the
    /// polynomial is a p-th power.
    pub fn is_pth_power(&self) -> bool {
        let p = self.field.p as u64;
        self.yc.iter().all(|(&j, f)| {
            j % p == 0 && f.c.iter().enumerate().all(|(i, c)| c.is_zero() || i % p as usize == 0)
        })
    }

    pub fn pth_root(&self) -> Self {
        let p = self.field.p as usize;
        assert!(self.is_pth_power(), "not a p-th power");
        let mut yc = BTreeMap::new();
        for (&j, f) in &self.yc {
            let mut c = vec![self.field.zero(); f.c.len() / p + 1];
            for (i, co) in f.c.iter().enumerate() {
                if !co.is_zero() {
                    c[i / p] = co.frobenius_p(-1);
                }
            }
            yc.insert(j / p as u64, PolyFq::from_coeffs(&self.field, c));
        }
        Poly2 { field: self.field.clone(), yc }
    }

    /// Product of the distinct irreducible factors, leading coefficient 1.
    pub fn radical(&self) -> Self {
        assert!(!self.is_zero(), "radical of zero");
        if self.lead_key() == Some((0, 0)) {
            return Self::one(&self.field);
        }
        let g3 = self.gcd(&self.deriv_t()).gcd(&self.deriv_y());
        if g3 == self.monic() {
            // Both partials vanish, so this is a p-th power.
            return self.pth_root().radical();
        }
        let w = self.monic().divide_exact(&g3);
        let rg = g3.radical();
        let overlap = w.gcd(&rg);
        w.mul(&rg).divide_exact(&overlap).monic()
    }

    /// Multiply every y-exponent by m (level raising).
    pub fn stretch_y(&self, m: u64) -> Self {
        assert!(m >= 1);
        if m == 1 {
            return self.clone();
        }
        let yc = self
            .yc
            .iter()
            .map(|(&j, f)| {
                let jj = j.checked_mul(m).expect("y-exponent overflow");
                assert!(jj < YEXP_LIMIT, "y-exponent overflow");
                (jj, f.clone())
            })
            .collect();
        Poly2 { field: self.field.clone(), yc }
    }

    /// Divide every y-exponent by p; requires divisibility.
    fn shrink_y(&self, p: u64) -> Self {
        let yc = self
            .yc
            .iter()
            .map(|(&j, f)| {
                assert!(j % p == 0);
                (j / p, f.clone())
            })
            .collect();
        Poly2 { field: self.field.clone(), yc }
    }

    fn y_exponents_all_div(&self, p: u64) -> bool {
        self.yc.keys().all(|&j| j % p == 0)
    }

    /// Divisibility by a polynomial in t alone.
    pub fn divisible_by_t_poly(&self, d: &PolyFq) -> bool {
        self.yc.values().all(|f| f.divrem(d).1.is_zero())
    }

    /// The coefficient polynomial in t when there is no y-dependence.
    pub fn as_t_poly(&self) -> Option<PolyFq> {
        if self.is_zero() {
            return Some(PolyFq::zero(&self.field));
        }
        if self.deg_y() == 0 {
            Some(self.coeff_y(0))
        } else {
            None
        }
    }

    pub fn fmt_with_level(&self, fm: &mut fmt::Formatter<'_>, level: u32) -> fmt::Result {
        if self.is_zero() {
            return write!(fm, "0");
        }
        // Terms in descending (t-degree, y-degree) order.
        let mut terms: Vec<(i64, u64, FElem)> = vec![];
        for (&j, f) in &self.yc {
            for (i, c) in f.c.iter().enumerate() {
                if !c.is_zero() {
                    terms.push((i as i64, j, c.clone()));
                }
            }
        }
        terms.sort_by(|a, b| (b.0, b.1).cmp(&(a.0, a.1)));
        let p = self.field.p as u64;
        for (n, (i, j, c)) in terms.iter().enumerate() {
            if n > 0 {
                write!(fm, "+")?;
            }
            let mut pieces: Vec<String> = vec![];
            let cs = c.to_string();
            if !(c.equals(&self.field.one()) && (*i > 0 || *j > 0)) {
                if cs.contains('+') || cs.contains('*') {
                    pieces.push(format!("({cs})"));
                } else {
                    pieces.push(cs);
                }
            }
            if *i == 1 {
                pieces.push("t".into());
            } else if *i > 1 {
                pieces.push(format!("t^{i}"));
            }
            if *j > 0 {
                let mut jj = *j;
                let mut e = level;
                while e > 0 && jj % p == 0 {
                    jj /= p;
                    e -= 1;
                }
                if e == 0 {
                    if jj == 1 {
                        pieces.push("th".into());
                    } else {
                        pieces.push(format!("th^{jj}"));
                    }
                } else {
                    let den = p.checked_pow(e).expect("level overflow");
                    pieces.push(format!("th^({jj}/{den})"));
                }
            }
            write!(fm, "{}", pieces.join("*"))?;
        }
        Ok(())
    }
}

impl fmt::Display for Poly2 {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_with_level(fm, 0)
    }
}

/// Rational function in t and th over Fq, th carrying p-power roots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerfRatFun {
    pub level: u32,
    pub num: Poly2,
    pub den: Poly2,
}

impl PerfRatFun {
    pub fn field(&self) -> &Arc<Field> {
        &self.num.field
    }

    pub fn from_parts(level: u32, num: Poly2, den: Poly2) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::DivisionByZero);
        }
        let g = num.gcd(&den);
        let (num, den) = if g.lead_key() == Some((0, 0)) {
            (num, den)
        } else {
            (num.divide_exact(&g), den.divide_exact(&g))
        };
        Ok(Self::finalize(level, num, den))
    }

    /// Normalization for parts already known coprime: minimize the level
    /// and make the denominator's leading coefficient 1.
    fn finalize(mut level: u32, mut num: Poly2, mut den: Poly2) -> Self {
        let p = num.field.p as u64;
        while level > 0 && num.y_exponents_all_div(p) && den.y_exponents_all_div(p) {
            num = num.shrink_y(p);
            den = den.shrink_y(p);
            level -= 1;
        }
        let c = den.lead_fq().unwrap().inv().unwrap();
        PerfRatFun { level, num: num.scale(&c), den: den.scale(&c) }
    }

    pub fn zero(field: &Arc<Field>) -> Self {
        PerfRatFun { level: 0, num: Poly2::zero(field), den: Poly2::one(field) }
    }

    pub fn one(field: &Arc<Field>) -> Self {
        Self::from_t_poly(PolyFq::from_ints(field, &[1]))
    }

    pub fn constant(c: FElem) -> Self {
        let field = c.field.clone();
        PerfRatFun {
            level: 0,
            num: Poly2::from_t_poly(PolyFq::constant(c)),
            den: Poly2::one(&field),
        }
    }

    pub fn from_t_poly(f: PolyFq) -> Self {
        let field = f.field.clone();
        PerfRatFun { level: 0, num: Poly2::from_t_poly(f), den: Poly2::one(&field) }
    }

    pub fn var_t(field: &Arc<Field>) -> Self {
        Self::from_t_poly(PolyFq::var(field))
    }

    pub fn theta(field: &Arc<Field>) -> Self {
        PerfRatFun {
            level: 0,
            num: Poly2::monomial(field, field.one(), 0, 1),
            den: Poly2::one(field),
        }
    }

    /// th^(j / p^level), normalized.
    pub fn theta_root(field: &Arc<Field>, j: u64, level: u32) -> Self {
        let num = Poly2::monomial(field, field.one(), 0, j);
        Self::from_parts(level, num, Poly2::one(field)).unwrap()
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.num == self.den
    }

    /// Both num and den constant in t and y.
    pub fn as_fq(&self) -> Option<FElem> {
        if self.num.deg_t() <= 0 && self.num.deg_y() <= 0 && self.den.is_one() {
            Some(self.num.coeff_y(0).coeff(0))
        } else {
            None
        }
    }

    pub fn as_t_poly(&self) -> Option<PolyFq> {
        if self.den.is_one() && self.num.deg_y() <= 0 {
            Some(self.num.coeff_y(0))
        } else {
            None
        }
    }

    /// No t-dependence anywhere (coefficients of twisted polynomials acting
    /// on module points are of this shape).
    pub fn is_t_free(&self) -> bool {
        self.num.deg_t() <= 0 && self.den.deg_t() <= 0
    }

    fn unify(a: &Self, b: &Self) -> (u32, Poly2, Poly2, Poly2, Poly2) {
        let p = a.num.field.p as u64;
        let level = a.level.max(b.level);
        let ma = p.checked_pow(level - a.level).expect("level overflow");
        let mb = p.checked_pow(level - b.level).expect("level overflow");
        (
            level,
            a.num.stretch_y(ma),
            a.den.stretch_y(ma),
            b.num.stretch_y(mb),
            b.den.stretch_y(mb),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        let (level, an, ad, bn, bd) = Self::unify(self, other);
        if ad == bd {
            let num = an.add(&bn);
            if num.is_zero() {
                return Self::zero(self.field());
            }
            return Self::from_parts(level, num, ad).unwrap();
        }
        let g0 = ad.gcd(&bd);
        if g0.is_one() {
            // Coprime denominators: the combined fraction is already
            // reduced, no gcd pass needed.
            let num = an.mul(&bd).add(&bn.mul(&ad));
            Self::finalize(level, num, ad.mul(&bd))
        } else {
            let dr = bd.divide_exact(&g0);
            let cl = ad.divide_exact(&g0);
            let num = an.mul(&dr).add(&bn.mul(&cl));
            Self::from_parts(level, num, ad.mul(&dr)).unwrap()
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        PerfRatFun { level: self.level, num: self.num.neg(), den: self.den.clone() }
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero(self.field());
        }
        if self.is_one() {
            return other.clone();
        }
        if other.is_one() {
            return self.clone();
        }
        if self == other {
            // Squaring a reduced fraction: gcd(n, d) = 1 forces
            // gcd(n^2, d^2) = 1, so both cross-gcds are free.
            return Self::finalize(self.level, self.num.mul(&self.num), self.den.mul(&self.den));
        }
        let (level, an, ad, bn, bd) = Self::unify(self, other);
        // Cross-cancel: each factor is reduced, so after removing
        // gcd(an, bd) and gcd(bn, ad) the product is reduced too.
        let g1 = an.gcd(&bd);
        let g2 = bn.gcd(&ad);
        let (an, bd) = if g1.is_one() { (an, bd) } else { (an.divide_exact(&g1), bd.divide_exact(&g1)) };
        let (bn, ad) = if g2.is_one() { (bn, ad) } else { (bn.divide_exact(&g2), ad.divide_exact(&g2)) };
        Self::finalize(level, an.mul(&bn), ad.mul(&bd))
    }

    pub fn inv(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(Self::finalize(self.level, self.den.clone(), self.num.clone()))
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        Ok(self.mul(&other.inv()?))
    }

    pub fn pow(&self, e: i64) -> Result<Self> {
        if e < 0 {
            return self.inv()?.pow(-e);
        }
        let mut acc = Self::one(self.field());
        let mut b = self.clone();
        let mut e = e as u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&b);
            }
            b = b.mul(&b);
            e >>= 1;
        }
        Ok(acc)
    }

    /// The q-power Frobenius twist, k times (negative k takes q-power
    /// roots). Fixes t and the Fq coefficients; th goes to th^(q^k).
    /// Twisting is a field automorphism here, so a reduced fraction stays
    /// reduced and no gcd is involved.
    pub fn frobenius(&self, k: i64) -> Self {
        if k == 0 || self.is_zero() {
            return self.clone();
        }
        if self.num.deg_y() <= 0 && self.den.deg_y() <= 0 {
            return self.clone();
        }
        let a = self.field().deg as u32;
        if k > 0 {
            let p = self.field().p as u64;
            let m = p.checked_pow(a * k as u32).expect("twist overflow");
            Self::finalize(self.level, self.num.stretch_y(m), self.den.stretch_y(m))
        } else {
            let level = self.level + a * (-k) as u32;
            Self::finalize(level, self.num.clone(), self.den.clone())
        }
    }
}

impl fmt::Display for PerfRatFun {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_one() {
            self.num.fmt_with_level(fm, self.level)
        } else {
            write!(fm, "(")?;
            self.num.fmt_with_level(fm, self.level)?;
            write!(fm, ")/(")?;
            self.den.fmt_with_level(fm, self.level)?;
            write!(fm, ")")
        }
    }
}

// ---- expression grammar ----
//
// expr   := term (('+'|'-') term)*
// term   := unary (('*'|'/') unary)*
// unary  := '-' unary | power
// power  := atom ('^' exponent)?
// atom   := integer | 't' | 'th' | 'g' | '(' expr ')'
// exponent := integer | '(' '-'? integer ('/' integer)? ')'
//
// Fractional exponents are only meaningful on th and must have a p-power
// denominator. 'g' is the multiplicative generator of Fq when q is not
// prime.

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LPar,
    RPar,
}

fn lex(s: &str) -> Result<Vec<Tok>> {
    let mut out = vec![];
    let b = s.as_bytes();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        match c {
            ' ' | '\t' | '\n' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                out.push(Tok::Star);
                i += 1;
            }
            '/' => {
                out.push(Tok::Slash);
                i += 1;
            }
            '^' => {
                out.push(Tok::Caret);
                i += 1;
            }
            '(' => {
                out.push(Tok::LPar);
                i += 1;
            }
            ')' => {
                out.push(Tok::RPar);
                i += 1;
            }
            '0'..='9' => {
                let start = i;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
                let v: i64 = s[start..i]
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("integer out of range in '{s}'")))?;
                out.push(Tok::Int(v));
            }
            'a'..='z' => {
                let start = i;
                while i < b.len() && b[i].is_ascii_alphabetic() {
                    i += 1;
                }
                out.push(Tok::Ident(s[start..i].to_string()));
            }
            _ => return Err(Error::InvalidInput(format!("unexpected character '{c}' in '{s}'"))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    field: &'a Arc<Field>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        match self.bump() {
            Some(x) if x == t => Ok(()),
            other => Err(Error::InvalidInput(format!("expected {t:?}, found {other:?}"))),
        }
    }

    fn expr(&mut self) -> Result<PerfRatFun> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    acc = acc.add(&self.term()?);
                }
                Some(Tok::Minus) => {
                    self.bump();
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<PerfRatFun> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    acc = acc.mul(&self.unary()?);
                }
                Some(Tok::Slash) => {
                    self.bump();
                    acc = acc.div(&self.unary()?)?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<PerfRatFun> {
        if self.peek() == Some(&Tok::Minus) {
            self.bump();
            return Ok(self.unary()?.neg());
        }
        self.power()
    }

    fn power(&mut self) -> Result<PerfRatFun> {
        let (base, bare_th) = self.atom()?;
        if self.peek() != Some(&Tok::Caret) {
            return Ok(base);
        }
        self.bump();
        let (a, bden) = self.exponent()?;
        if bden == 1 {
            return base.pow(a);
        }
        if !bare_th {
            return Err(Error::InvalidInput(
                "fractional exponents are only supported on th".into(),
            ));
        }
        // th^(a/bden) with bden = p^e after reduction.
        let p = self.field.p as i64;
        let (mut a, mut bden) = (a, bden);
        while a % p == 0 && bden % p == 0 {
            a /= p;
            bden /= p;
        }
        let mut e = 0u32;
        let mut m = bden;
        while m > 1 {
            if m % p != 0 || e > 24 {
                return Err(Error::InvalidInput(format!(
                    "exponent denominator {bden} is not a power of {p}"
                )));
            }
            m /= p;
            e += 1;
        }
        let v = PerfRatFun::theta_root(self.field, a.unsigned_abs(), e);
        if a < 0 {
            v.inv()
        } else {
            Ok(v)
        }
    }

    /// Returns the value and whether it is the bare token 'th'.
    fn atom(&mut self) -> Result<(PerfRatFun, bool)> {
        match self.bump() {
            Some(Tok::Int(v)) => Ok((PerfRatFun::constant(self.field.from_int(v)), false)),
            Some(Tok::Ident(id)) => match id.as_str() {
                "t" => Ok((PerfRatFun::var_t(self.field), false)),
                "th" => Ok((PerfRatFun::theta(self.field), true)),
                "g" => {
                    if self.field.deg == 1 {
                        return Err(Error::InvalidInput(
                            "'g' requires a non-prime coefficient field".into(),
                        ));
                    }
                    Ok((PerfRatFun::constant(self.field.gen()), false))
                }
                other => Err(Error::InvalidInput(format!("unknown identifier '{other}'"))),
            },
            Some(Tok::LPar) => {
                let v = self.expr()?;
                self.expect(Tok::RPar)?;
                Ok((v, false))
            }
            other => Err(Error::InvalidInput(format!("unexpected token {other:?}"))),
        }
    }

    fn exponent(&mut self) -> Result<(i64, i64)> {
        match self.bump() {
            Some(Tok::Int(v)) => Ok((v, 1)),
            Some(Tok::LPar) => {
                let neg = if self.peek() == Some(&Tok::Minus) {
                    self.bump();
                    true
                } else {
                    false
                };
                let a = match self.bump() {
                    Some(Tok::Int(v)) => v,
                    other => {
                        return Err(Error::InvalidInput(format!(
                            "expected integer exponent, found {other:?}"
                        )))
                    }
                };
                let bden = if self.peek() == Some(&Tok::Slash) {
                    self.bump();
                    match self.bump() {
                        Some(Tok::Int(v)) if v > 0 => v,
                        other => {
                            return Err(Error::InvalidInput(format!(
                                "expected positive exponent denominator, found {other:?}"
                            )))
                        }
                    }
                } else {
                    1
                };
                self.expect(Tok::RPar)?;
                Ok((if neg { -a } else { a }, bden))
            }
            other => Err(Error::InvalidInput(format!("expected exponent, found {other:?}"))),
        }
    }
}

/// Parse an expression in t and th over the given Fq.
pub fn parse(field: &Arc<Field>, s: &str) -> Result<PerfRatFun> {
    let toks = lex(s)?;
    if toks.is_empty() {
        return Err(Error::InvalidInput("empty expression".into()));
    }
    let mut p = Parser { toks, pos: 0, field };
    let v = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(Error::InvalidInput(format!(
            "trailing input after position {} in expression",
            p.pos
        )));
    }
    Ok(v)
}

/// Parse an expression that must be a polynomial in t alone.
pub fn parse_t_poly(field: &Arc<Field>, s: &str) -> Result<PolyFq> {
    let v = parse(field, s)?;
    v.as_t_poly()
        .ok_or_else(|| Error::InvalidInput(format!("'{s}' is not a polynomial in t")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f3() -> Arc<Field> {
        Field::new(3, 1).unwrap()
    }

    fn pf(s: &str) -> PerfRatFun {
        parse(&f3(), s).unwrap()
    }

    #[test]
    fn poly2_gcd_of_planted_product() {
        let a = pf("t+th").num.clone();
        let b = pf("t^2+2*th").num.clone();
        let c = pf("th^2+t+1").num.clone();
        let left = a.mul(&b);
        let right = a.mul(&c);
        let g = left.gcd(&right);
        assert_eq!(g, a.monic());
        assert_eq!(left.divide_exact(&g), b.scale(&a.lead_fq().unwrap()));
    }

    #[test]
    fn radical_strips_multiplicity_across_char_p() {
        // (t+1)^3 = t^3+1 over F_3: derivative vanishes, p-th root path.
        let cube = pf("t^3+1").num.clone();
        assert_eq!(cube.radical(), pf("t+1").num);
        // Mixed multiplicities including one divisible by p.
        let f = pf("t").num.mul(&pf("t+1").num.pow(3)).mul(&pf("t^2+1").num.pow(2));
        let rad = f.radical();
        assert_eq!(rad, pf("t*(t+1)*(t^2+1)").num.monic());
        // Bivariate: (t+th)^3 * th.
        let g = pf("(t+th)^3*th").num.clone();
        assert_eq!(g.radical(), pf("(t+th)*th").num.monic());
    }

    #[test]
    fn ratfun_field_axioms_randomized() {
        use rand::{rngs::StdRng, Rng, SeedableRng};
        let f = f3();
        let mut rng = StdRng::seed_from_u64(7);
        let rand_el = |rng: &mut StdRng| -> PerfRatFun {
            let mut num = Poly2::zero(&f);
            for _ in 0..3 {
                let c = f.from_index(rng.gen_range(0..3));
                num = num.add(&Poly2::monomial(
                    &f,
                    c,
                    rng.gen_range(0..3usize),
                    rng.gen_range(0..3u64),
                ));
            }
            let mut den = Poly2::zero(&f);
            while den.is_zero() {
                den = Poly2::monomial(
                    &f,
                    f.from_index(rng.gen_range(1..3)),
                    rng.gen_range(0..2usize),
                    rng.gen_range(0..2u64),
                )
                .add(&Poly2::one(&f));
            }
            PerfRatFun::from_parts(rng.gen_range(0..2), num, den).unwrap()
        };
        for _ in 0..60 {
            let a = rand_el(&mut rng);
            let b = rand_el(&mut rng);
            let c = rand_el(&mut rng);
            assert_eq!(a.add(&b), b.add(&a));
            assert_eq!(a.mul(&b), b.mul(&a));
            assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
            assert_eq!(a.sub(&a), PerfRatFun::zero(&f));
            if !a.is_zero() {
                assert!(a.mul(&a.inv().unwrap()).is_one());
            }
        }
    }

    #[test]
    fn normalization_gives_structural_equality() {
        let a = pf("(t^2+2*t+1)/(t+1)");
        let b = pf("t+1");
        assert_eq!(a, b);
        let c = pf("(2*t+2)/(2)");
        assert_eq!(c, b);
        // Denominator leading coefficient is normalized away.
        let d = pf("(t+th)/(2*t+1)");
        assert!(d.den.lead_fq().unwrap().equals(&f3().one()));
    }

    #[test]
    fn frobenius_twist_and_roots() {
        let th = pf("th");
        // tau(th) = th^3, tau^{-1}(th) = th^(1/3).
        assert_eq!(th.frobenius(1), pf("th^3"));
        assert_eq!(th.frobenius(-1), pf("th^(1/3)"));
        assert_eq!(th.frobenius(-1).frobenius(1), th);
        assert_eq!(th.frobenius(1).frobenius(-1), th);
        // Levels minimize: (th^(1/3))^3 is back at level 0.
        let r = pf("th^(1/3)");
        assert_eq!(r.pow(3).unwrap(), th);
        assert_eq!(r.level, 1);
        assert_eq!(r.pow(3).unwrap().level, 0);
        // Fq constants are fixed by every twist.
        let two = pf("2");
        assert_eq!(two.frobenius(5), two);
        assert_eq!(two.frobenius(-5), two);
        // t is fixed.
        let t = pf("t");
        assert_eq!(t.frobenius(2), t);
        // Twist is a ring homomorphism.
        let x = pf("(t+th)/(th^2+1)");
        let y = pf("th^(1/3)+2*t");
        assert_eq!(x.mul(&y).frobenius(1), x.frobenius(1).mul(&y.frobenius(1)));
        assert_eq!(x.add(&y).frobenius(-1), x.frobenius(-1).add(&y.frobenius(-1)));
    }

    #[test]
    fn print_parse_round_trip() {
        let samples = [
            "0",
            "1",
            "2*t^3+t+1",
            "th^2+2*th+1",
            "(t+th)/(t^2+1)",
            "th^(1/3)+t",
            "(th^(2/9)+2)/(t^3+2*t)",
            "(2*t^2*th^3+1)/(t*th+2)",
        ];
        let f = f3();
        for s in samples {
            let v = parse(&f, s).unwrap();
            let printed = v.to_string();
            let back = parse(&f, &printed).unwrap();
            assert_eq!(v, back, "round trip failed for '{s}' printed as '{printed}'");
        }
        // Canonical pins.
        assert_eq!(pf("(t+1)*(t+2)").to_string(), "t^2+2");
        assert_eq!(pf("th^(3/9)").to_string(), "th^(1/3)");
        assert_eq!(pf("1/t").to_string(), "(1)/(t)");
    }

    #[test]
    fn parser_rejects_malformed_input() {
        let f = f3();
        assert!(parse(&f, "t^(1/3)").is_err()); // fractional power off th
        assert!(parse(&f, "th^(1/2)").is_err()); // denominator not a p power
        assert!(parse(&f, "x+1").is_err());
        assert!(parse(&f, "(t+1").is_err());
        assert!(parse(&f, "t t").is_err());
        assert!(parse(&f, "1/0").is_err());
        assert!(parse_t_poly(&f, "t+th").is_err());
        assert_eq!(parse_t_poly(&f, "(t^2+t)/(t)").unwrap(), PolyFq::from_ints(&f, &[1, 1]));
    }

    #[test]
    fn pth_power_detection() {
        // (t+th+2)^3 = t^3+th^3+2 over F_3.
        let c = pf("t^3+th^3+2").num.clone();
        assert!(c.is_pth_power());
        assert_eq!(c.pth_root(), pf("t+th+2").num);
        assert!(!pf("t^3+th").num.is_pth_power());
        assert_eq!(pf("t+1").num.pow(3), pf("t^3+1").num);
    }

    #[test]
    fn sparse_exponents_survive_deep_twists() {
        // Ten twists push y-exponents to 3^10 without trouble.
        let x = pf("(th^2+1)/(th+t)");
        let tw = x.frobenius(10);
        assert_eq!(tw.num.deg_y(), 2 * 59049);
        assert_eq!(tw.frobenius(-10), x);
    }
}
