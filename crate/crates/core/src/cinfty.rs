//! Truncated Puiseux series at the infinite place.
//!
//! A value is a finite sum of terms c * u^e where u = th^(-1/m) for a
//! ramification index m, together with a precision cutoff: terms with
//! exponent >= prec have been discarded and are unknown. |th| = q, so a
//! leading term at exponent e has absolute value q^(-e/m). The sentinel
//! precision EXACT means no term was ever discarded; a series that is empty
//! at EXACT precision is certifiably zero, an empty series at finite
//! precision is merely indistinguishable from zero at that scale.

use crate::ff::{artin_schreier_const, embed, embed_root, nth_root_const, FElem, Field};
use crate::ratfun::PerfRatFun;
use crate::{Error, Result};
use std::fmt;
use std::sync::Arc;

const EXACT: i64 = i64::MAX / 4;
const EXP_LIMIT: i64 = 1 << 40;

fn gcd64(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

fn lcm_u32(a: u32, b: u32) -> u32 {
    a / (gcd64(a as i64, b as i64) as u32) * b
}

/// Exponent of q in a norm statement, as an exact rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rat {
    pub num: i64,
    pub den: i64,
}

impl Rat {
    pub fn new(num: i64, den: i64) -> Rat {
        assert!(den != 0);
        let s = if den < 0 { -1 } else { 1 };
        let g = gcd64(num, den).max(1);
        Rat { num: s * num / g, den: s * den / g }
    }

    pub fn from_int(n: i64) -> Rat {
        Rat { num: n, den: 1 }
    }
}

impl PartialOrd for Rat {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rat {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.num as i128 * other.den as i128).cmp(&(other.num as i128 * self.den as i128))
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// What is known about |x|: exactly zero, exactly q^r, or at most q^r.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormBound {
    Zero,
    Exact(Rat),
    AtMost(Rat),
}

impl NormBound {
    /// Upper bound on the q-exponent, None for zero.
    pub fn exponent_ub(&self) -> Option<Rat> {
        match self {
            NormBound::Zero => None,
            NormBound::Exact(r) | NormBound::AtMost(r) => Some(*r),
        }
    }

    /// |x| <= q^floor, guaranteed.
    pub fn le(&self, floor: Rat) -> bool {
        match self.exponent_ub() {
            None => true,
            Some(r) => r <= floor,
        }
    }

    /// |x| = q^r exactly with r > floor.
    pub fn exceeds(&self, floor: Rat) -> bool {
        matches!(self, NormBound::Exact(r) if *r > floor)
    }
}

impl fmt::Display for NormBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormBound::Zero => write!(f, "0"),
            NormBound::Exact(r) => write!(f, "q^({r})"),
            NormBound::AtMost(r) => write!(f, "<=q^({r})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CInf {
    pub field: Arc<Field>,
    /// Ramification: u = th^(-1/m).
    pub m: u32,
    /// (exponent, coefficient), exponents strictly increasing, coefficients
    /// nonzero, exponents < prec.
    pub terms: Vec<(i64, FElem)>,
    pub prec: i64,
}

impl PartialEq for CInf {
    fn eq(&self, other: &Self) -> bool {
        self.field.p == other.field.p
            && self.field.deg == other.field.deg
            && self.m == other.m
            && self.prec == other.prec
            && self.terms.len() == other.terms.len()
            && self
                .terms
                .iter()
                .zip(&other.terms)
                .all(|(a, b)| a.0 == b.0 && a.1.equals(&b.1))
    }
}

impl CInf {
    pub fn zero(field: &Arc<Field>, m: u32) -> CInf {
        CInf { field: field.clone(), m, terms: vec![], prec: EXACT }
    }

    pub fn from_fq(c: FElem, m: u32) -> CInf {
        let field = c.field.clone();
        Self::normalize(field, m, vec![(0, c)], EXACT)
    }

    pub fn theta(field: &Arc<Field>, m: u32) -> CInf {
        Self::normalize(field.clone(), m, vec![(-(m as i64), field.one())], EXACT)
    }

    pub fn monomial(c: FElem, e: i64, m: u32) -> CInf {
        let field = c.field.clone();
        Self::normalize(field, m, vec![(e, c)], EXACT)
    }

    pub fn from_terms(field: &Arc<Field>, m: u32, terms: &[(i64, i64)], prec: i64) -> CInf {
        let t = terms.iter().map(|&(e, c)| (e, field.from_int(c))).collect();
        Self::normalize(field.clone(), m, t, prec)
    }

    fn normalize(field: Arc<Field>, m: u32, mut terms: Vec<(i64, FElem)>, prec: i64) -> CInf {
        terms.sort_by_key(|t| t.0);
        let mut out: Vec<(i64, FElem)> = vec![];
        for (e, c) in terms {
            assert!(e.abs() < EXP_LIMIT, "exponent overflow");
            if e >= prec || c.is_zero() {
                continue;
            }
            match out.last_mut() {
                Some(last) if last.0 == e => {
                    last.1 = last.1.add(&c);
                    if last.1.is_zero() {
                        out.pop();
                    }
                }
                _ => out.push((e, c)),
            }
        }
        CInf { field, m, terms: out, prec }
    }

    pub fn is_exact(&self) -> bool {
        self.prec == EXACT
    }

    /// Provably the zero element.
    pub fn certified_zero(&self) -> bool {
        self.terms.is_empty() && self.is_exact()
    }

    /// Leading exponent; None when no term is known.
    pub fn val(&self) -> Option<i64> {
        self.terms.first().map(|t| t.0)
    }

    pub fn norm_bound(&self) -> NormBound {
        match self.terms.first() {
            Some(&(e, _)) => NormBound::Exact(Rat::new(-e, self.m as i64)),
            None if self.is_exact() => NormBound::Zero,
            None => NormBound::AtMost(Rat::new(-self.prec, self.m as i64)),
        }
    }

    pub fn truncated(&self, prec: i64) -> CInf {
        let p = self.prec.min(prec);
        Self::normalize(self.field.clone(), self.m, self.terms.clone(), p)
    }

    /// Reinterpret at ramification k*m.
    pub fn with_ram_factor(&self, k: u32) -> CInf {
        assert!(k >= 1);
        if k == 1 {
            return self.clone();
        }
        let k = k as i64;
        let terms = self.terms.iter().map(|(e, c)| (e * k, c.clone())).collect();
        let prec = if self.is_exact() { EXACT } else { self.prec * k };
        CInf { field: self.field.clone(), m: self.m * k as u32, terms, prec }
    }

    fn lift_field(&self, big: &Arc<Field>) -> CInf {
        if self.field.deg == big.deg && self.field.p == big.p {
            return self.clone();
        }
        let root = embed_root(&self.field, big);
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| (*e, embed(c, big, &root)))
            .collect();
        CInf { field: big.clone(), m: self.m, terms, prec: self.prec }
    }

    /// Common ramification and coefficient field.
    fn align(a: &CInf, b: &CInf) -> (CInf, CInf) {
        let m = lcm_u32(a.m, b.m);
        let mut x = a.with_ram_factor(m / a.m);
        let mut y = b.with_ram_factor(m / b.m);
        if x.field.deg != y.field.deg {
            let d = {
                let (da, db) = (x.field.deg as i64, y.field.deg as i64);
                (da / gcd64(da, db) * db) as usize
            };
            let big = Field::new(x.field.p, d).expect("coefficient field extension");
            x = x.lift_field(&big);
            y = y.lift_field(&big);
        }
        (x, y)
    }

    pub fn add(&self, other: &CInf) -> CInf {
        let (a, b) = Self::align(self, other);
        let mut terms = a.terms;
        terms.extend(b.terms);
        Self::normalize(a.field, a.m, terms, a.prec.min(b.prec))
    }

    pub fn sub(&self, other: &CInf) -> CInf {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> CInf {
        let terms = self.terms.iter().map(|(e, c)| (*e, c.neg())).collect();
        CInf { field: self.field.clone(), m: self.m, terms, prec: self.prec }
    }

    pub fn scale(&self, k: &FElem) -> CInf {
        if k.field.deg == self.field.deg {
            let terms = self.terms.iter().map(|(e, c)| (*e, c.mul(k))).collect();
            Self::normalize(self.field.clone(), self.m, terms, self.prec)
        } else {
            self.mul(&CInf::from_fq(k.clone(), self.m))
        }
    }

    pub fn mul(&self, other: &CInf) -> CInf {
        let (a, b) = Self::align(self, other);
        if a.certified_zero() || b.certified_zero() {
            return CInf::zero(&a.field, a.m);
        }
        let va = a.val().unwrap_or(a.prec);
        let vb = b.val().unwrap_or(b.prec);
        let prec = if a.is_exact() && b.is_exact() {
            EXACT
        } else {
            (a.prec.saturating_add(vb)).min(b.prec.saturating_add(va)).min(EXACT)
        };
        let mut terms = Vec::with_capacity(a.terms.len() * b.terms.len());
        for (ea, ca) in &a.terms {
            for (eb, cb) in &b.terms {
                terms.push((ea + eb, ca.mul(cb)));
            }
        }
        Self::normalize(a.field, a.m, terms, prec)
    }

    pub fn pow(&self, mut e: u64) -> CInf {
        let mut acc = CInf::from_fq(self.field.one(), self.m);
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

    pub fn inv(&self) -> Result<CInf> {
        if self.certified_zero() {
            return Err(Error::DivisionByZero);
        }
        let Some(&(e0, ref c0)) = self.terms.first() else {
            return Err(Error::Indeterminate(
                "inverting a quantity indistinguishable from zero".into(),
            ));
        };
        // x = c0 u^{e0} (1 + r), 1/x = c0^{-1} u^{-e0} sum (-r)^k.
        let window = if self.is_exact() {
            if self.terms.len() == 1 {
                return Ok(CInf::monomial(c0.inv()?, -e0, self.m));
            }
            return Err(Error::Indeterminate(
                "inverse of an exact multi-term series is not finite; truncate first".into(),
            ));
        } else {
            self.prec - e0
        };
        let lead_inv = CInf::monomial(c0.inv()?, -e0, self.m);
        let mut r = self.mul(&lead_inv).sub(&CInf::from_fq(self.field.one(), self.m));
        r = r.truncated(window);
        let mut acc = CInf::from_fq(self.field.one(), self.m).truncated(window);
        let mut pw = CInf::from_fq(self.field.one(), self.m);
        let step = r.val().unwrap_or(window).max(1);
        let mut k = 0i64;
        while k * step < window && !pw.terms.is_empty() {
            pw = pw.mul(&r).neg().truncated(window);
            acc = acc.add(&pw);
            k += 1;
            if k > 100_000 {
                return Err(Error::PrecisionExhausted("series inversion did not close".into()));
            }
        }
        Ok(acc.mul(&lead_inv))
    }

    pub fn div(&self, other: &CInf) -> Result<CInf> {
        if self.certified_zero() {
            let (a, _) = Self::align(self, other);
            return Ok(CInf::zero(&a.field, a.m));
        }
        Ok(self.mul(&other.inv()?))
    }

    /// q-power Frobenius twist applied k times; q must be a power of the
    /// characteristic. Negative k takes q-power roots, raising the
    /// ramification when exponents do not divide.
    pub fn frobenius(&self, q: u64, k: i64) -> CInf {
        let p = self.field.p as u64;
        let mut a = 0u32;
        let mut qq = q;
        while qq > 1 {
            assert!(qq % p == 0, "twist base must be a power of the characteristic");
            qq /= p;
            a += 1;
        }
        assert!(a >= 1);
        if k == 0 {
            return self.clone();
        }
        if k > 0 {
            let f = (q as i64).checked_pow(k as u32).expect("twist overflow");
            let terms = self
                .terms
                .iter()
                .map(|(e, c)| (e * f, c.frobenius_p((a as i64) * k)))
                .collect();
            let prec = if self.is_exact() {
                EXACT
            } else {
                let p2 = self.prec.checked_mul(f).expect("precision overflow");
                assert!(p2 < EXACT / 2);
                p2
            };
            CInf { field: self.field.clone(), m: self.m, terms, prec }
        } else {
            // Raise ramification by q^{-k} so exponents stay integral.
            let f = (q as u32).checked_pow((-k) as u32).expect("twist overflow");
            let x = self.with_ram_factor(f);
            let g = (q as i64).pow((-k) as u32);
            let terms = x
                .terms
                .iter()
                .map(|(e, c)| (e / g, c.frobenius_p((a as i64) * k)))
                .collect();
            let prec = if x.is_exact() { EXACT } else { x.prec / g };
            CInf { field: x.field, m: x.m, terms, prec }
        }
    }

    /// Exact n-th root. The p-part of n is handled coefficientwise; for the
    /// rest a Hensel iteration runs against the leading monomial, extending
    /// the coefficient field when the leading coefficient requires it.
    /// Exact multi-term input must be truncated first unless n is a power
    /// of p.
    pub fn root(&self, n: u64) -> Result<CInf> {
        assert!(n >= 1);
        if self.certified_zero() || n == 1 {
            return Ok(self.clone());
        }
        if self.terms.is_empty() {
            return Err(Error::Indeterminate(
                "root of a quantity indistinguishable from zero".into(),
            ));
        }
        let p = self.field.p as u64;
        let mut n = n;
        let mut x = self.clone();
        while n % p == 0 {
            // p-th root: coefficientwise inverse Frobenius at ramification m*p.
            let y = x.with_ram_factor(p as u32);
            let terms: Vec<(i64, FElem)> = y
                .terms
                .iter()
                .map(|(e, c)| {
                    assert!(e % p as i64 == 0);
                    (e / p as i64, c.frobenius_p(-1))
                })
                .collect();
            let prec = if y.is_exact() { EXACT } else { y.prec / p as i64 };
            x = CInf { field: y.field, m: y.m, terms, prec };
            n /= p;
        }
        if n == 1 {
            return Ok(x);
        }
        if x.is_exact() && x.terms.len() > 1 {
            return Err(Error::Indeterminate(
                "root of an exact multi-term series is not finite; truncate first".into(),
            ));
        }
        // Coprime part: raise ramification by n, then Hensel against the
        // leading monomial.
        let x = x.with_ram_factor(n as u32);
        let (e0, c0) = (x.terms[0].0, x.terms[0].1.clone());
        assert!(e0 % n as i64 == 0);
        let (croot, big) = const_root_extending(&c0, n)?;
        let x = x.lift_field(&big);
        let mut z = CInf::monomial(croot, e0 / n as i64, x.m);
        if x.terms.len() == 1 && x.is_exact() {
            return Ok(z);
        }
        let ninv = CInf::from_fq(x.field.from_int(n as i64), x.m).inv()?;
        for _ in 0..64 {
            let r = z.pow(n).sub(&x);
            if r.terms.is_empty() {
                // z + eps solves exactly with n z^{n-1} eps ~ r, so z is
                // good to the residual window shifted by the root's lead.
                let zprec = if x.is_exact() {
                    EXACT
                } else {
                    r.prec - (n as i64 - 1) * (e0 / n as i64)
                };
                return Ok(z.truncated(zprec));
            }
            let corr = r.div(&z.pow(n - 1))?.mul(&ninv);
            z = z.sub(&corr);
        }
        Err(Error::PrecisionExhausted("root iteration did not close".into()))
    }
}

/// n-th root of a constant, extending the coefficient field as needed.
/// Returns the root together with the (possibly larger) field.
fn const_root_extending(c: &FElem, n: u64) -> Result<(FElem, Arc<Field>)> {
    for j in 1..=n as usize {
        let deg = c.field.deg * j;
        if deg > 16 {
            break;
        }
        let big = if j == 1 { c.field.clone() } else { Field::new(c.field.p, deg)? };
        let cc = if j == 1 {
            c.clone()
        } else {
            let root = embed_root(&c.field, &big);
            embed(c, &big, &root)
        };
        if let Some(z) = nth_root_const(&big, &cc, n) {
            return Ok((z, big));
        }
    }
    Err(Error::Unsupported(format!(
        "no {n}-th root within the supported field tower"
    )))
}

/// Additive-polynomial evaluation: (sum_k A_k x^{q^k})_i over series.
pub fn apply_additive(a: &[Vec<Vec<CInf>>], x: &[CInf], q: u64) -> Vec<CInf> {
    let d = x.len();
    let m = x.iter().map(|v| v.m).fold(1, lcm_u32);
    let field = &x[0].field;
    let mut out = vec![CInf::zero(field, m); d];
    for (k, ak) in a.iter().enumerate() {
        let xq: Vec<CInf> = x.iter().map(|v| v.frobenius(q, k as i64)).collect();
        for i in 0..d {
            for (j, xqj) in xq.iter().enumerate() {
                if !ak[i][j].certified_zero() {
                    out[i] = out[i].add(&ak[i][j].mul(xqj));
                }
            }
        }
    }
    out
}

fn max_norm_exp(v: &[CInf]) -> NormBound {
    let mut best = NormBound::Zero;
    for x in v {
        let nb = x.norm_bound();
        best = match (best.exponent_ub(), nb.exponent_ub()) {
            (None, _) => nb,
            (_, None) => best,
            (Some(a), Some(b)) => {
                if b > a {
                    nb
                } else {
                    best
                }
            }
        };
    }
    best
}

/// Invert a matrix of series by Gauss elimination with largest-norm
/// pivoting.
pub fn invert_series_matrix(a: &[Vec<CInf>]) -> Result<Vec<Vec<CInf>>> {
    let d = a.len();
    let field = a[0][0].field.clone();
    let m = a.iter().flatten().map(|x| x.m).fold(1, lcm_u32);
    let mut w: Vec<Vec<CInf>> = a.iter().map(|row| row.to_vec()).collect();
    let mut inv: Vec<Vec<CInf>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    if i == j {
                        CInf::from_fq(field.one(), m)
                    } else {
                        CInf::zero(&field, m)
                    }
                })
                .collect()
        })
        .collect();
    for col in 0..d {
        let mut piv = None;
        let mut piv_exp: Option<Rat> = None;
        for r in col..d {
            if let NormBound::Exact(e) = w[r][col].norm_bound() {
                if piv_exp.map_or(true, |b| e > b) {
                    piv = Some(r);
                    piv_exp = Some(e);
                }
            }
        }
        let piv = piv.ok_or_else(|| {
            Error::SingularInput("matrix of series has no usable pivot".into())
        })?;
        w.swap(col, piv);
        inv.swap(col, piv);
        let pi = w[col][col].inv()?;
        for j in 0..d {
            w[col][j] = w[col][j].mul(&pi);
            inv[col][j] = inv[col][j].mul(&pi);
        }
        for r in 0..d {
            if r == col {
                continue;
            }
            // An entry that is merely indistinguishable from zero still gets
            // eliminated so its uncertainty window lands in the row.
            let f = w[r][col].clone();
            if f.certified_zero() {
                continue;
            }
            for j in 0..d {
                w[r][j] = w[r][j].sub(&f.mul(&w[col][j]));
                inv[r][j] = inv[r][j].sub(&f.mul(&inv[col][j]));
            }
        }
    }
    Ok(inv)
}

/// Solve sum_k A_k x^{q^k} = c by the contraction x <- x - A_0^{-1}(rho(x)-c)
/// from the given starting point. The first step must strictly shrink the
/// residual, otherwise the starting point is outside the contraction region.
pub fn newton_additive(
    a: &[Vec<Vec<CInf>>],
    c: &[CInf],
    x0: &[CInf],
    q: u64,
    floor: Rat,
) -> Result<Vec<CInf>> {
    let a0: Vec<Vec<CInf>> = a[0].clone();
    let a0inv = invert_series_matrix(&a0)?;
    let d = c.len();
    let mut x = x0.to_vec();
    let resid = |x: &[CInf]| -> Vec<CInf> {
        let r = apply_additive(a, x, q);
        (0..d).map(|i| r[i].sub(&c[i])).collect()
    };
    let mut r = resid(&x);
    let mut cur = max_norm_exp(&r);
    for it in 0..200 {
        if cur.le(floor) {
            return Ok(x);
        }
        let mut step = vec![];
        for i in 0..d {
            let mut s = CInf::zero(&r[0].field, r[0].m);
            for j in 0..d {
                s = s.add(&a0inv[i][j].mul(&r[j]));
            }
            step.push(s);
        }
        let next: Vec<CInf> = (0..d).map(|i| x[i].sub(&step[i])).collect();
        let rn = resid(&next);
        let nxt = max_norm_exp(&rn);
        if it == 0 {
            let strictly_less = match (nxt.exponent_ub(), cur.exponent_ub()) {
                (None, _) => true,
                (Some(_), None) => false,
                (Some(b), Some(a)) => b < a,
            };
            if !strictly_less {
                return Err(Error::NoContraction(format!(
                    "residual did not shrink: {cur} -> {nxt}"
                )));
            }
        }
        x = next;
        r = rn;
        cur = nxt;
    }
    if cur.le(floor) {
        Ok(x)
    } else {
        Err(Error::NoContraction(format!(
            "residual stalled at {cur} above floor q^({floor})"
        )))
    }
}

/// Solve x - x^q = y termwise from the leading exponent up. Positive
/// exponents are absorbed directly, constant terms through the coefficient
/// field (extending it when the trace obstruction demands), negative
/// exponents through q-th roots (raising ramification as needed). The
/// residual's leading exponent strictly increases, so the loop reaches the
/// precision cutoff. y must carry finite precision.
pub fn solve_artin_schreier(y: &CInf, q: u64) -> Result<CInf> {
    if y.certified_zero() {
        return Ok(CInf::zero(&y.field, y.m));
    }
    if y.is_exact() {
        return Err(Error::Indeterminate(
            "termwise descent needs a finite precision cutoff; truncate first".into(),
        ));
    }
    let a_log = {
        let mut a = 0usize;
        let mut qq = q;
        while qq > 1 {
            assert!(qq % y.field.p as u64 == 0);
            qq /= y.field.p as u64;
            a += 1;
        }
        a
    };
    let mut y = y.clone();
    let mut x = CInf::zero(&y.field, y.m).truncated(y.prec);
    let mut guard = 0;
    loop {
        let r = y.sub(&x.sub(&x.frobenius(q, 1)));
        let Some(&(e, ref c)) = r.terms.first() else {
            return Ok(x);
        };
        let c = c.clone();
        if e > 0 {
            x = x.add(&CInf::monomial(c, e, r.m).truncated(r.prec));
        } else if e == 0 {
            // z - z^q = c in the constants; extend the field if the trace
            // obstruction does not vanish.
            let z = match artin_schreier_const(&x.field, &c, a_log) {
                Some(z) => z,
                None => {
                    let bigdeg = x.field.deg * x.field.p as usize;
                    if bigdeg > 16 {
                        return Err(Error::Unsupported(format!(
                            "constant-term descent needs an extension of degree {bigdeg}, beyond the supported tower"
                        )));
                    }
                    let big = Field::new(x.field.p, bigdeg)?;
                    let root = embed_root(&x.field, &big);
                    let cbig = embed(&c, &big, &root);
                    x = x.lift_field(&big);
                    y = y.lift_field(&big);
                    artin_schreier_const(&big, &cbig, a_log).ok_or_else(|| {
                        Error::AlgorithmFailure("trace obstruction persisted after extension".into())
                    })?
                }
            };
            x = x.add(&CInf::from_fq(z, x.m).truncated(y.prec));
        } else {
            // -delta^q must cancel c u^e: delta = (-c)^{1/q} u^{e/q}.
            if e % q as i64 != 0 {
                let f = q as u32;
                x = x.with_ram_factor(f);
                y = y.with_ram_factor(f);
                continue;
            }
            let delta = CInf::monomial(c.neg().frobenius_p(-(a_log as i64)), e / q as i64, r.m);
            x = x.add(&delta.truncated(r.prec));
        }
        guard += 1;
        if guard > 100_000 {
            return Err(Error::PrecisionExhausted("termwise descent did not close".into()));
        }
    }
}

/// Series value of a rational function in th alone: substitute th = u^{-M}
/// at a ramification M divisible enough for the root level. A monomial
/// denominator gives an exact value; otherwise the result is truncated at
/// |error| <= q^{-prec_q}.
pub fn theta_ratfun_series(x: &PerfRatFun, min_ram: u32, prec_q: i64) -> Result<CInf> {
    if !x.is_t_free() {
        return Err(Error::InvalidInput(
            "series evaluation needs a t-free rational function".into(),
        ));
    }
    let field = x.field().clone();
    let p = field.p as u32;
    let pe = p.checked_pow(x.level).ok_or_else(|| Error::InvalidInput("level too deep".into()))?;
    let m = lcm_u32(min_ram, pe);
    if x.is_zero() {
        return Ok(CInf::zero(&field, m));
    }
    let build = |poly: &crate::ratfun::Poly2| -> CInf {
        let mut terms = vec![];
        for (&j, f) in poly.yc.iter() {
            let e = -(m as i64) * (j as i64) / (pe as i64);
            terms.push((e, f.coeff(0)));
        }
        CInf::normalize(field.clone(), m, terms, EXACT)
    };
    let num = build(&x.num);
    let den = build(&x.den);
    if den.terms.len() == 1 {
        return num.div(&den);
    }
    let cut = prec_q
        .checked_mul(m as i64)
        .ok_or_else(|| Error::InvalidInput("requested precision overflows".into()))?;
    let vn = num.val().unwrap();
    let vd = den.val().unwrap();
    num.truncated(cut + vd).div(&den.truncated(cut + 2 * vd - vn))
}

impl fmt::Display for CInf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            write!(f, "0")?;
        } else {
            for (i, (e, c)) in self.terms.iter().enumerate() {
                if i > 0 {
                    write!(f, " + ")?;
                }
                let cs = c.to_string();
                if cs.contains('+') || cs.contains('*') {
                    write!(f, "({cs})*u^{e}")?;
                } else {
                    write!(f, "{cs}*u^{e}")?;
                }
            }
        }
        if self.is_exact() {
            write!(f, " [exact, m {}]", self.m)
        } else {
            write!(f, " [prec {}, m {}]", self.prec, self.m)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f3() -> Arc<Field> {
        Field::new(3, 1).unwrap()
    }

    #[test]
    fn exact_polynomial_arithmetic() {
        let f = f3();
        let th = CInf::theta(&f, 1);
        let one = CInf::from_fq(f.one(), 1);
        let lhs = th.add(&one).mul(&th.sub(&one));
        let rhs = th.mul(&th).sub(&one);
        assert!(lhs.sub(&rhs).certified_zero());
        assert_eq!(th.norm_bound(), NormBound::Exact(Rat::from_int(1)));
        assert_eq!(
            th.add(&one).inv().unwrap_err().to_string().contains("truncate"),
            true
        );
    }

    #[test]
    fn geometric_inversion_and_division() {
        let f = f3();
        // 1/(1 - u) = 1 + u + u^2 + ... to the window.
        let x = CInf::from_terms(&f, 1, &[(0, 1), (1, -1)], 12);
        let inv = x.inv().unwrap();
        for k in 0..12 {
            assert!(inv.terms.iter().any(|(e, c)| *e == k && c.equals(&f.one())));
        }
        assert_eq!(inv.prec, 12);
        // Round trip stays within the window.
        let back = inv.mul(&x);
        let err = back.sub(&CInf::from_fq(f.one(), 1));
        assert!(err.terms.is_empty());
        assert!(err.prec >= 12);
    }

    #[test]
    fn norms_and_precision_propagation() {
        let f = f3();
        let th = CInf::theta(&f, 1);
        let x = th.truncated(20); // th with finite window
        let y = x.mul(&x);
        assert_eq!(y.val(), Some(-2));
        // prec: min(20 + (-1), 20 + (-1)) = 19.
        assert_eq!(y.prec, 19);
        let empty = CInf::zero(&f, 1).truncated(5);
        assert_eq!(empty.norm_bound(), NormBound::AtMost(Rat::new(-5, 1)));
        assert!(empty.norm_bound().le(Rat::new(-5, 1)));
        assert!(!empty.certified_zero());
        assert!(CInf::zero(&f, 1).certified_zero());
    }

    #[test]
    fn frobenius_round_trip_and_ramification() {
        let f = f3();
        let th = CInf::theta(&f, 1);
        let r = th.frobenius(3, -1);
        assert_eq!(r.m, 3);
        assert_eq!(r.val(), Some(-1));
        assert!(r.frobenius(3, 1).sub(&th).certified_zero());
        assert!(r.pow(3).sub(&th).certified_zero());
        // A truncated series round trips too.
        let x = CInf::from_terms(&f, 1, &[(-2, 1), (0, 2), (3, 1)], 10);
        let y = x.frobenius(3, 1).frobenius(3, -1);
        assert!(y.sub(&x.with_ram_factor(y.m / x.m)).terms.is_empty());
    }

    #[test]
    fn roots_exact_and_hensel() {
        let f = f3();
        // Cube root is coefficientwise: (1+u)^3 = 1+u^3.
        let x = CInf::from_terms(&f, 1, &[(0, 1), (3, 1)], EXACT);
        let r = x.root(3).unwrap();
        assert!(r.pow(3).sub(&x.with_ram_factor(r.m / x.m)).certified_zero());
        // Square root by Hensel on a truncated series.
        let y = CInf::from_terms(&f, 1, &[(0, 1), (1, 2), (2, 1)], 15); // (1+u)^2
        let s = y.root(2).unwrap();
        let back = s.pow(2).sub(&y.with_ram_factor(s.m / y.m));
        assert!(back.terms.is_empty(), "residual {back}");
        // Monomial roots extend the coefficient field when needed:
        // (-th)^{1/2} over F_3 lands in F_9.
        let mth = CInf::theta(&f, 1).neg();
        let s2 = mth.root(2).unwrap();
        assert_eq!(s2.field.deg, 2);
        assert!(s2.pow(2).sub(&mth.with_ram_factor(s2.m / mth.m)).certified_zero());
    }

    #[test]
    fn artin_schreier_planted_solutions() {
        let f = f3();
        let q = 3u64;
        // Plant x with mixed exponents, solve, compare up to an F_q shift.
        let x = CInf::from_terms(&f, 1, &[(-9, 1), (2, 2), (5, 1)], 40);
        let y = x.sub(&x.frobenius(q, 1));
        let sol = solve_artin_schreier(&y, q).unwrap();
        let resid = y.sub(&sol.sub(&sol.frobenius(q, 1)));
        assert!(resid.terms.is_empty());
        let diff = sol.sub(&x.with_ram_factor(sol.m / x.m));
        for (e, _) in &diff.terms {
            assert_eq!(*e, 0, "solutions differ beyond a constant: {diff}");
        }
        // A constant term with nonzero trace forces a field extension.
        let y2 = CInf::from_terms(&f, 1, &[(0, 1), (4, 1)], 30);
        let sol2 = solve_artin_schreier(&y2, q).unwrap();
        assert!(sol2.field.deg > 1);
        let r2 = y2.lift_field(&sol2.field).sub(&sol2.sub(&sol2.frobenius(q, 1)));
        assert!(r2.terms.is_empty());
    }

    #[test]
    fn newton_solves_twisted_linear_equations() {
        let f = f3();
        let q = 3u64;
        // Carlitz action: th x + x^3 = c, solved near the small-x branch.
        let th = CInf::theta(&f, 1).truncated(30);
        let a = vec![
            vec![vec![th.clone()]],
            vec![vec![CInf::from_fq(f.one(), 1).truncated(30)]],
        ];
        let planted = CInf::from_terms(&f, 1, &[(2, 1), (3, 2)], 30);
        let c = apply_additive(&a, &[planted.clone()], q);
        let x0 = vec![CInf::zero(&f, 1).truncated(30)];
        let sol = newton_additive(&a, &c, &x0, q, Rat::new(-25, 1)).unwrap();
        let diff = sol[0].sub(&planted);
        assert!(diff.norm_bound().le(Rat::new(-20, 1)), "{}", diff.norm_bound());
    }

    #[test]
    fn series_of_theta_rational_functions() {
        let f = f3();
        let x = crate::ratfun::parse(&f, "(th^2+1)/(th)").unwrap();
        let s = theta_ratfun_series(&x, 1, 30).unwrap();
        // th + th^{-1} exactly.
        assert!(s.is_exact());
        assert_eq!(s.terms.len(), 2);
        assert_eq!(s.val(), Some(-1));
        // 1/(th - 1) = th^{-1} + th^{-2} + ... truncated.
        let y = crate::ratfun::parse(&f, "1/(th-1)").unwrap();
        let sy = theta_ratfun_series(&y, 1, 10).unwrap();
        for k in 1..=5 {
            assert!(sy.terms.iter().any(|(e, c)| *e == k && c.equals(&f.one())), "{sy}");
        }
        // Fractional powers of th pick up ramification.
        let z = crate::ratfun::parse(&f, "th^(1/3)+th").unwrap();
        let sz = theta_ratfun_series(&z, 1, 30).unwrap();
        assert_eq!(sz.m, 3);
        assert_eq!(sz.val(), Some(-3));
        assert!(sz.terms.iter().any(|(e, _)| *e == -1));
    }
}
