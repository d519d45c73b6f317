//! Exact truncated arithmetic over k' = F_q((π)) and its unramified quadratic
//! extension k = k'(j), j² = ε with ε a fixed non-square unit.
//!
//! Every element carries a certified state: an exact zero, a certified leading
//! digit (so its valuation is proven), or an unresolved tail O(π^b) whose
//! valuation is only known to be ≥ b. All operations propagate these states
//! conservatively; nothing is ever rounded. τ is the nontrivial k'-automorphism
//! of k (τ(j) = −j), and η(x) = (−1)^{val x} is the quadratic character of
//! k'^× attached to the extension.

use crate::error::{Error, Result};
use rand::Rng;

/// Field context: the residue prime q, the fixed non-square unit ε, and the
/// default working precision (number of certified digits).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ctx {
    pub q: u32,
    pub eps: u32,
    pub prec: usize,
}

/// Default number of certified digits carried by inexact elements.
pub const DEFAULT_PREC: usize = 32;

/// Primes accepted for the residue field in this engine.
pub const SUPPORTED_PRIMES: [u32; 5] = [3, 5, 7, 11, 13];

fn legendre_is_square(c: u32, q: u32) -> bool {
    // c^((q-1)/2) mod q == 1
    let mut acc: u64 = 1;
    let mut base: u64 = (c % q) as u64;
    let mut e = (q - 1) / 2;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base % q as u64;
        }
        base = base * base % q as u64;
        e >>= 1;
    }
    acc == 1
}

impl Ctx {
    /// Context for the given odd prime q at the default precision.
    pub fn new(q: u32) -> Result<Self> {
        Self::with_prec(q, DEFAULT_PREC)
    }

    /// Context with an explicit working precision.
    pub fn with_prec(q: u32, prec: usize) -> Result<Self> {
        if !SUPPORTED_PRIMES.contains(&q) {
            return Err(Error::Input(format!(
                "residue characteristic must be an odd prime ≤ 13, got {q}"
            )));
        }
        if prec == 0 {
            return Err(Error::Input("precision must be positive".into()));
        }
        let eps = (2..q)
            .find(|&c| !legendre_is_square(c, q))
            .expect("every odd prime has a non-residue");
        Ok(Ctx { q, eps, prec })
    }

    /// Same field, different working precision.
    pub fn at_prec(&self, prec: usize) -> Ctx {
        Ctx { prec, ..*self }
    }
}

/// Certified valuation information.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Val {
    /// Exact zero (valuation +∞).
    Bottom,
    /// Certified valuation: the leading digit is a proven unit.
    Exact(i64),
    /// Only a lower bound is known: the element is O(π^b).
    AtLeast(i64),
}

impl Val {
    /// min of two valuation states, as certified as possible.
    pub fn min(self, other: Val) -> Val {
        use Val::*;
        match (self, other) {
            (Bottom, v) | (v, Bottom) => v,
            (Exact(a), Exact(b)) => Exact(a.min(b)),
            (Exact(a), AtLeast(b)) | (AtLeast(b), Exact(a)) => {
                if a < b {
                    Exact(a)
                } else {
                    AtLeast(b)
                }
            }
            (AtLeast(a), AtLeast(b)) => AtLeast(a.min(b)),
        }
    }

    /// Certified value, or a precision error.
    pub fn certified(self, what: &str) -> Result<i64> {
        match self {
            Val::Exact(v) => Ok(v),
            Val::Bottom => Err(Error::DivisionByZero(format!(
                "{what}: valuation of exact zero requested"
            ))),
            Val::AtLeast(b) => Err(Error::PrecisionExhausted(format!(
                "{what}: valuation only bounded below by {b}"
            ))),
        }
    }
}

/// Outcome of asking "is this element zero?".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroCheck {
    /// Exactly zero.
    ExactZero,
    /// All digits up to π^b are known to vanish; nothing known beyond.
    ZeroToPrecision(i64),
    /// A digit at π^v is a certified unit: the element is provably nonzero.
    CertifiedNonzero(i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct SeriesBody {
    /// Position of the first stored digit. If `digits` is nonempty its first
    /// entry is nonzero, so `val` is the certified valuation. If `digits` is
    /// empty the element is an unresolved O(π^val).
    val: i64,
    digits: Vec<u32>,
    /// All digits beyond the stored window are exactly zero.
    exact: bool,
}

/// Element of k' = F_q((π)) with certified truncation state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Series {
    q: u32,
    body: Option<SeriesBody>,
}

fn normalize(q: u32, mut val: i64, mut digits: Vec<u32>, exact: bool) -> Series {
    debug_assert!(digits.iter().all(|&d| d < q));
    let lead = digits.iter().position(|&d| d != 0);
    match lead {
        Some(0) => {}
        Some(k) => {
            digits.drain(..k);
            val += k as i64;
        }
        None => {
            // no nonzero digit in the window
            if exact {
                return Series { q, body: None };
            }
            let bound = val + digits.len() as i64;
            return Series {
                q,
                body: Some(SeriesBody {
                    val: bound,
                    digits: Vec::new(),
                    exact: false,
                }),
            };
        }
    }
    if exact {
        // drop trailing zeros of exact values: they carry no information
        while digits.last() == Some(&0) {
            digits.pop();
        }
    }
    Series {
        q,
        body: Some(SeriesBody { val, digits, exact }),
    }
}

impl Series {
    // ----- constructors -----

    /// Exact zero.
    pub fn zero(ctx: &Ctx) -> Series {
        Series {
            q: ctx.q,
            body: None,
        }
    }

    /// Exact one.
    pub fn one(ctx: &Ctx) -> Series {
        Series::from_int(ctx, 1)
    }

    /// Exact image of a rational integer.
    pub fn from_int(ctx: &Ctx, n: i64) -> Series {
        let d = n.rem_euclid(ctx.q as i64) as u32;
        normalize(ctx.q, 0, vec![d], true)
    }

    /// Exact c·π^v with c a digit.
    pub fn monomial(ctx: &Ctx, c: i64, v: i64) -> Series {
        let d = c.rem_euclid(ctx.q as i64) as u32;
        normalize(ctx.q, v, vec![d], true)
    }

    /// Element from an explicit digit window starting at π^v.
    pub fn from_digits(ctx: &Ctx, v: i64, digits: Vec<u32>, exact: bool) -> Series {
        let digits = digits.into_iter().map(|d| d % ctx.q).collect();
        normalize(ctx.q, v, digits, exact)
    }

    /// Unresolved O(π^b): all digits below b vanish, nothing known beyond.
    pub fn unresolved(ctx: &Ctx, b: i64) -> Series {
        Series {
            q: ctx.q,
            body: Some(SeriesBody {
                val: b,
                digits: Vec::new(),
                exact: false,
            }),
        }
    }

    // ----- state inspection -----

    pub fn q(&self) -> u32 {
        self.q
    }

    /// Certified valuation state.
    pub fn val(&self) -> Val {
        match &self.body {
            None => Val::Bottom,
            Some(b) if b.digits.is_empty() => Val::AtLeast(b.val),
            Some(b) => Val::Exact(b.val),
        }
    }

    /// Zero test with certification state.
    pub fn zero_check(&self) -> ZeroCheck {
        match &self.body {
            None => ZeroCheck::ExactZero,
            Some(b) if b.digits.is_empty() => ZeroCheck::ZeroToPrecision(b.val),
            Some(b) => ZeroCheck::CertifiedNonzero(b.val),
        }
    }

    pub fn is_exact_zero(&self) -> bool {
        self.body.is_none()
    }

    /// True iff the element is exactly represented (finite digit support).
    pub fn is_exact(&self) -> bool {
        match &self.body {
            None => true,
            Some(b) => b.exact,
        }
    }

    /// Absolute precision: digits are certified strictly below this exponent
    /// (None = all digits known).
    pub fn abs_prec(&self) -> Option<i64> {
        match &self.body {
            None => None,
            Some(b) if b.exact => None,
            Some(b) => Some(b.val + b.digits.len() as i64),
        }
    }

    /// The digit of π^k, if it is certified.
    pub fn digit(&self, k: i64) -> Option<u32> {
        match &self.body {
            None => Some(0),
            Some(b) => {
                if k < b.val {
                    Some(0)
                } else {
                    let idx = (k - b.val) as usize;
                    match b.digits.get(idx) {
                        Some(&d) => Some(d),
                        None if b.exact => Some(0),
                        None => None,
                    }
                }
            }
        }
    }

    /// Certified integrality: Ok(true)/Ok(false) when provable either way.
    pub fn is_integral(&self) -> Result<bool> {
        match self.val() {
            Val::Bottom => Ok(true),
            Val::Exact(v) => Ok(v >= 0),
            Val::AtLeast(b) if b >= 0 => Ok(true),
            Val::AtLeast(b) => Err(Error::PrecisionExhausted(format!(
                "integrality undecidable: valuation only bounded below by {b}"
            ))),
        }
    }

    // ----- arithmetic -----

    fn assert_same_q(&self, other: &Series) {
        assert_eq!(self.q, other.q, "mixed residue characteristics");
    }

    pub fn add(&self, other: &Series) -> Series {
        self.assert_same_q(other);
        let q = self.q;
        let (a, b) = match (&self.body, &other.body) {
            (None, _) => return other.clone(),
            (_, None) => return self.clone(),
            (Some(a), Some(b)) => (a, b),
        };
        // absolute precision of the sum
        let prec = match (self.abs_prec(), other.abs_prec()) {
            (None, None) => None,
            (Some(p), None) | (None, Some(p)) => Some(p),
            (Some(p), Some(r)) => Some(p.min(r)),
        };
        let lo = a.val.min(b.val);
        let hi_data = (a.val + a.digits.len() as i64).max(b.val + b.digits.len() as i64);
        let hi = match prec {
            None => hi_data,
            Some(p) => p,
        };
        if hi <= lo {
            // nothing certifiable at all
            return Series {
                q,
                body: Some(SeriesBody {
                    val: hi,
                    digits: Vec::new(),
                    exact: false,
                }),
            };
        }
        let mut digits = vec![0u32; (hi - lo) as usize];
        for (body, _) in [(a, 0), (b, 1)] {
            for (i, &d) in body.digits.iter().enumerate() {
                let k = body.val + i as i64;
                if k < hi {
                    let slot = &mut digits[(k - lo) as usize];
                    *slot = (*slot + d) % q;
                }
            }
        }
        normalize(q, lo, digits, prec.is_none())
    }

    pub fn neg(&self) -> Series {
        let q = self.q;
        match &self.body {
            None => self.clone(),
            Some(b) => Series {
                q,
                body: Some(SeriesBody {
                    val: b.val,
                    digits: b.digits.iter().map(|&d| (q - d) % q).collect(),
                    exact: b.exact,
                }),
            },
        }
    }

    pub fn sub(&self, other: &Series) -> Series {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Series) -> Series {
        self.assert_same_q(other);
        let q = self.q as u64;
        let (a, b) = match (&self.body, &other.body) {
            (None, _) | (_, None) => {
                return Series {
                    q: self.q,
                    body: None,
                }
            }
            (Some(a), Some(b)) => (a, b),
        };
        let val = a.val + b.val;
        if a.digits.is_empty() || b.digits.is_empty() {
            // O(π^x)·y is O(π^{x + val y}); no certified leading digit survives
            return Series {
                q: self.q,
                body: Some(SeriesBody {
                    val,
                    digits: Vec::new(),
                    exact: false,
                }),
            };
        }
        let exact = a.exact && b.exact;
        let full = a.digits.len() + b.digits.len() - 1;
        let keep = if exact {
            full
        } else {
            let ra = if a.exact { usize::MAX } else { a.digits.len() };
            let rb = if b.exact { usize::MAX } else { b.digits.len() };
            full.min(ra.min(rb))
        };
        let mut digits = vec![0u32; keep];
        for (i, &da) in a.digits.iter().enumerate() {
            if i >= keep {
                break;
            }
            for (jj, &db) in b.digits.iter().enumerate() {
                let k = i + jj;
                if k >= keep {
                    break;
                }
                digits[k] = ((digits[k] as u64 + da as u64 * db as u64) % q) as u32;
            }
        }
        normalize(self.q, val, digits, exact)
    }

    /// Multiply by the exact monomial π^k.
    pub fn shift(&self, k: i64) -> Series {
        match &self.body {
            None => self.clone(),
            Some(b) => Series {
                q: self.q,
                body: Some(SeriesBody {
                    val: b.val + k,
                    digits: b.digits.clone(),
                    exact: b.exact,
                }),
            },
        }
    }

    /// Multiply by an exact digit c.
    pub fn scale(&self, c: u32) -> Series {
        let q = self.q;
        let c = c % q;
        if c == 0 {
            return Series { q, body: None };
        }
        match &self.body {
            None => self.clone(),
            Some(b) => normalize(
                q,
                b.val,
                b.digits
                    .iter()
                    .map(|&d| (d as u64 * c as u64 % q as u64) as u32)
                    .collect(),
                b.exact,
            ),
        }
    }

    /// Inverse carrying (at least) n certified digits; exact monomials invert
    /// exactly.
    pub fn inv_to(&self, n: usize) -> Result<Series> {
        let q = self.q as u64;
        let body = match &self.body {
            None => return Err(Error::DivisionByZero("inverse of exact zero".into())),
            Some(b) if b.digits.is_empty() => {
                return Err(Error::PrecisionExhausted(format!(
                    "inverse of unresolved O(pi^{})",
                    b.val
                )))
            }
            Some(b) => b,
        };
        if body.exact && body.digits.len() == 1 {
            let c = inv_digit(body.digits[0], self.q);
            return Ok(normalize(self.q, -body.val, vec![c], true));
        }
        let keep = if body.exact {
            n.max(1)
        } else {
            n.max(1).min(body.digits.len())
        };
        let u0inv = inv_digit(body.digits[0], self.q) as u64;
        let mut w = vec![0u32; keep];
        w[0] = u0inv as u32;
        for k in 1..keep {
            let mut s: u64 = 0;
            for i in 1..=k {
                let ui = *body.digits.get(i).unwrap_or(&0) as u64;
                s = (s + ui * w[k - i] as u64) % q;
            }
            w[k] = (u0inv * ((q - s) % q) % q) as u32;
        }
        Ok(normalize(self.q, -body.val, w, false))
    }

    /// Exact division where possible, at precision n otherwise.
    pub fn div_to(&self, other: &Series, n: usize) -> Result<Series> {
        Ok(self.mul(&other.inv_to(n)?))
    }

    /// Truncate to absolute precision b (marks the element inexact).
    pub fn truncate_abs(&self, b: i64) -> Series {
        match &self.body {
            None => Series {
                q: self.q,
                body: Some(SeriesBody {
                    val: b,
                    digits: Vec::new(),
                    exact: false,
                }),
            },
            Some(body) => {
                let keep = (b - body.val).max(0) as usize;
                let mut digits = body.digits.clone();
                digits.truncate(keep);
                while digits.len() < keep && body.exact {
                    digits.push(0);
                }
                normalize(self.q, body.val, digits, false)
            }
        }
    }

    /// The quadratic character η(x) = (−1)^{val x}; needs a certified
    /// valuation.
    pub fn eta(&self) -> Result<i32> {
        let v = self.val().certified("eta")?;
        Ok(if v % 2 == 0 { 1 } else { -1 })
    }

    /// Integer power (negative powers use precision n).
    pub fn pow_to(&self, e: i64, n: usize) -> Result<Series> {
        let mut base = if e < 0 { self.inv_to(n)? } else { self.clone() };
        let mut e = e.unsigned_abs();
        let ctx_one = Series {
            q: self.q,
            body: Some(SeriesBody {
                val: 0,
                digits: vec![1],
                exact: true,
            }),
        };
        let mut acc = ctx_one;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        Ok(acc)
    }

    // ----- randomness -----

    /// Uniform unit known to `prec` digits.
    pub fn random_unit<R: Rng>(ctx: &Ctx, rng: &mut R) -> Series {
        let mut digits = vec![0u32; ctx.prec];
        digits[0] = rng.gen_range(1..ctx.q);
        for d in digits.iter_mut().skip(1) {
            *d = rng.gen_range(0..ctx.q);
        }
        normalize(ctx.q, 0, digits, false)
    }

    /// π^v times a uniform unit.
    pub fn random_with_val<R: Rng>(ctx: &Ctx, rng: &mut R, v: i64) -> Series {
        Series::random_unit(ctx, rng).shift(v)
    }

    /// Haar-like random integral element (uniform digit window at val ≥ 0).
    pub fn random_integral<R: Rng>(ctx: &Ctx, rng: &mut R) -> Series {
        let digits: Vec<u32> = (0..ctx.prec).map(|_| rng.gen_range(0..ctx.q)).collect();
        normalize(ctx.q, 0, digits, false)
    }

    // ----- rendering -----

    /// Canonical textual rendering; `parse` inverts it exactly.
    pub fn render(&self) -> String {
        match &self.body {
            None => "0".into(),
            Some(b) if b.digits.is_empty() => format!("O(pi^{})", b.val),
            Some(b) => {
                let mut terms: Vec<String> = Vec::new();
                for (i, &d) in b.digits.iter().enumerate() {
                    if d == 0 {
                        continue;
                    }
                    terms.push(match (d, i) {
                        (d, 0) => format!("{d}"),
                        (1, 1) => "pi".into(),
                        (d, 1) => format!("{d}*pi"),
                        (1, i) => format!("pi^{i}"),
                        (d, i) => format!("{d}*pi^{i}"),
                    });
                }
                if !b.exact {
                    terms.push(format!("O(pi^{})", b.digits.len()));
                }
                let inner = terms.join(" + ");
                if b.val == 0 {
                    inner
                } else if terms.len() == 1 && b.exact {
                    // single monomial: fold the shift in
                    let d = b.digits[0];
                    let pi = if b.val == 1 {
                        "pi".into()
                    } else {
                        format!("pi^{}", b.val)
                    };
                    if d == 1 {
                        pi
                    } else {
                        format!("{d}*{pi}")
                    }
                } else {
                    format!("pi^{} * ({inner})", b.val)
                }
            }
        }
    }
}

fn inv_digit(d: u32, q: u32) -> u32 {
    // Fermat inverse in F_q
    let mut acc: u64 = 1;
    let mut base = d as u64 % q as u64;
    let mut e = q - 2;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base % q as u64;
        }
        base = base * base % q as u64;
        e >>= 1;
    }
    acc as u32
}

macro_rules! ref_ops {
    ($t:ty) => {
        impl std::ops::Add for &$t {
            type Output = $t;
            fn add(self, rhs: &$t) -> $t {
                <$t>::add(self, rhs)
            }
        }
        impl std::ops::Sub for &$t {
            type Output = $t;
            fn sub(self, rhs: &$t) -> $t {
                <$t>::sub(self, rhs)
            }
        }
        impl std::ops::Mul for &$t {
            type Output = $t;
            fn mul(self, rhs: &$t) -> $t {
                <$t>::mul(self, rhs)
            }
        }
        impl std::ops::Neg for &$t {
            type Output = $t;
            fn neg(self) -> $t {
                <$t>::neg(self)
            }
        }
    };
}
ref_ops!(Series);

/// Element of k = k'(j): re + j·im with re, im ∈ k'.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ext {
    pub re: Series,
    pub im: Series,
    eps: u32,
}

impl Ext {
    pub fn new(ctx: &Ctx, re: Series, im: Series) -> Ext {
        assert_eq!(re.q(), ctx.q);
        assert_eq!(im.q(), ctx.q);
        Ext {
            re,
            im,
            eps: ctx.eps,
        }
    }

    pub fn from_series(ctx: &Ctx, re: Series) -> Ext {
        let im = Series::zero(ctx);
        Ext::new(ctx, re, im)
    }

    pub fn zero(ctx: &Ctx) -> Ext {
        Ext::from_series(ctx, Series::zero(ctx))
    }

    pub fn one(ctx: &Ctx) -> Ext {
        Ext::from_series(ctx, Series::one(ctx))
    }

    pub fn from_int(ctx: &Ctx, n: i64) -> Ext {
        Ext::from_series(ctx, Series::from_int(ctx, n))
    }

    /// The generator j.
    pub fn j(ctx: &Ctx) -> Ext {
        Ext::new(ctx, Series::zero(ctx), Series::one(ctx))
    }

    pub fn q(&self) -> u32 {
        self.re.q()
    }

    fn ctx_like(&self) -> Ctx {
        Ctx {
            q: self.re.q(),
            eps: self.eps,
            prec: DEFAULT_PREC,
        }
    }

    /// Valuation of re + j·im is min(val re, val im): {1, j} is a basis of the
    /// integers of the unramified extension, so no cross-cancellation can
    /// occur at the leading digit.
    pub fn val(&self) -> Val {
        self.re.val().min(self.im.val())
    }

    pub fn zero_check(&self) -> ZeroCheck {
        use ZeroCheck::*;
        match (self.re.zero_check(), self.im.zero_check()) {
            (ExactZero, ExactZero) => ExactZero,
            (CertifiedNonzero(v), CertifiedNonzero(w)) => CertifiedNonzero(v.min(w)),
            (CertifiedNonzero(v), _) | (_, CertifiedNonzero(v)) => CertifiedNonzero(v),
            (ExactZero, ZeroToPrecision(b)) | (ZeroToPrecision(b), ExactZero) => ZeroToPrecision(b),
            (ZeroToPrecision(a), ZeroToPrecision(b)) => ZeroToPrecision(a.min(b)),
        }
    }

    pub fn is_exact_zero(&self) -> bool {
        self.re.is_exact_zero() && self.im.is_exact_zero()
    }

    /// True iff the element provably lies in k' (im exactly zero).
    pub fn is_base(&self) -> bool {
        self.im.is_exact_zero()
    }

    pub fn is_integral(&self) -> Result<bool> {
        Ok(self.re.is_integral()? && self.im.is_integral()?)
    }

    pub fn add(&self, o: &Ext) -> Ext {
        Ext {
            re: self.re.add(&o.re),
            im: self.im.add(&o.im),
            eps: self.eps,
        }
    }

    pub fn sub(&self, o: &Ext) -> Ext {
        Ext {
            re: self.re.sub(&o.re),
            im: self.im.sub(&o.im),
            eps: self.eps,
        }
    }

    pub fn neg(&self) -> Ext {
        Ext {
            re: self.re.neg(),
            im: self.im.neg(),
            eps: self.eps,
        }
    }

    pub fn mul(&self, o: &Ext) -> Ext {
        // (a + jb)(c + jd) = (ac + ε bd) + j(ad + bc)
        let ac = self.re.mul(&o.re);
        let bd = self.im.mul(&o.im);
        let ad = self.re.mul(&o.im);
        let bc = self.im.mul(&o.re);
        Ext {
            re: ac.add(&bd.scale(self.eps)),
            im: ad.add(&bc),
            eps: self.eps,
        }
    }

    pub fn shift(&self, k: i64) -> Ext {
        Ext {
            re: self.re.shift(k),
            im: self.im.shift(k),
            eps: self.eps,
        }
    }

    /// Galois conjugate τ(a + jb) = a − jb.
    pub fn tau(&self) -> Ext {
        Ext {
            re: self.re.clone(),
            im: self.im.neg(),
            eps: self.eps,
        }
    }

    /// Trace to k': z + τ(z) = 2a.
    pub fn trace(&self) -> Series {
        self.re.scale(2)
    }

    /// Norm to k': z·τ(z) = a² − ε b².
    pub fn norm(&self) -> Series {
        let a2 = self.re.mul(&self.re);
        let b2 = self.im.mul(&self.im);
        a2.sub(&b2.scale(self.eps))
    }

    /// Inverse via τ(z)/N(z), carrying n certified digits.
    pub fn inv_to(&self, n: usize) -> Result<Ext> {
        let nz = self.norm();
        match nz.zero_check() {
            ZeroCheck::CertifiedNonzero(_) => {}
            ZeroCheck::ExactZero => {
                return Err(Error::DivisionByZero("inverse of exact zero in k".into()))
            }
            ZeroCheck::ZeroToPrecision(b) => {
                return Err(Error::PrecisionExhausted(format!(
                    "inverse: norm unresolved O(pi^{b})"
                )))
            }
        }
        let ninv = nz.inv_to(n)?;
        let conj = self.tau();
        Ok(Ext {
            re: conj.re.mul(&ninv),
            im: conj.im.mul(&ninv),
            eps: self.eps,
        })
    }

    pub fn div_to(&self, o: &Ext, n: usize) -> Result<Ext> {
        Ok(self.mul(&o.inv_to(n)?))
    }

    pub fn pow_to(&self, e: i64, n: usize) -> Result<Ext> {
        let ctx = self.ctx_like();
        let mut base = if e < 0 { self.inv_to(n)? } else { self.clone() };
        let mut e = e.unsigned_abs();
        let mut acc = Ext::one(&ctx);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        Ok(acc)
    }

    pub fn random_integral<R: Rng>(ctx: &Ctx, rng: &mut R) -> Ext {
        Ext::new(
            ctx,
            Series::random_integral(ctx, rng),
            Series::random_integral(ctx, rng),
        )
    }

    pub fn random_unit<R: Rng>(ctx: &Ctx, rng: &mut R) -> Ext {
        // leading digit of (re, im) nonzero in at least one component
        loop {
            let z = Ext::random_integral(ctx, rng);
            if matches!(z.val(), Val::Exact(0)) {
                return z;
            }
        }
    }

    /// Canonical textual rendering; `parse` inverts it exactly.
    pub fn render(&self) -> String {
        if self.im.is_exact_zero() {
            return self.re.render();
        }
        if self.re.is_exact_zero() {
            return format!("j*({})", self.im.render());
        }
        format!("({}) + j*({})", self.re.render(), self.im.render())
    }
}

ref_ops!(Ext);

// ===== parsing =====

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Pi,
    J,
    BigO,
    Plus,
    Minus,
    Star,
    Caret,
    LPar,
    RPar,
}

fn tokenize(s: &str) -> Result<Vec<Tok>> {
    let mut toks = Vec::new();
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                toks.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                toks.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                toks.push(Tok::Star);
                i += 1;
            }
            '^' => {
                toks.push(Tok::Caret);
                i += 1;
            }
            '(' => {
                toks.push(Tok::LPar);
                i += 1;
            }
            ')' => {
                toks.push(Tok::RPar);
                i += 1;
            }
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let n: i64 = s[start..i]
                    .parse()
                    .map_err(|_| Error::Input(format!("integer overflow in '{s}'")))?;
                toks.push(Tok::Int(n));
            }
            'p' if s[i..].starts_with("pi") => {
                toks.push(Tok::Pi);
                i += 2;
            }
            'j' => {
                toks.push(Tok::J);
                i += 1;
            }
            'O' => {
                toks.push(Tok::BigO);
                i += 1;
            }
            _ => return Err(Error::Input(format!("unexpected character '{c}' in '{s}'"))),
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: &'a [Tok],
    pos: usize,
    ctx: Ctx,
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
            Some(got) if got == t => Ok(()),
            got => Err(Error::Input(format!("expected {t:?}, found {got:?}"))),
        }
    }

    fn parse_exponent(&mut self) -> Result<i64> {
        let neg = matches!(self.peek(), Some(Tok::Minus));
        if neg {
            self.bump();
        }
        match self.bump() {
            Some(Tok::Int(n)) => Ok(if neg { -n } else { n }),
            got => Err(Error::Input(format!("expected exponent, found {got:?}"))),
        }
    }

    // factor := INT | pi [^ exp] | j | O(pi^exp) | ( expr )
    fn parse_factor(&mut self) -> Result<Ext> {
        match self.bump() {
            Some(Tok::Int(n)) => Ok(Ext::from_int(&self.ctx, n)),
            Some(Tok::Pi) => {
                let e = if matches!(self.peek(), Some(Tok::Caret)) {
                    self.bump();
                    self.parse_exponent()?
                } else {
                    1
                };
                Ok(Ext::from_series(
                    &self.ctx,
                    Series::monomial(&self.ctx, 1, e),
                ))
            }
            Some(Tok::J) => Ok(Ext::j(&self.ctx)),
            Some(Tok::BigO) => {
                self.expect(Tok::LPar)?;
                self.expect(Tok::Pi)?;
                self.expect(Tok::Caret)?;
                let e = self.parse_exponent()?;
                self.expect(Tok::RPar)?;
                Ok(Ext::from_series(
                    &self.ctx,
                    Series::unresolved(&self.ctx, e),
                ))
            }
            Some(Tok::LPar) => {
                let e = self.parse_expr()?;
                self.expect(Tok::RPar)?;
                Ok(e)
            }
            got => Err(Error::Input(format!("expected factor, found {got:?}"))),
        }
    }

    // term := factor (* factor)*
    fn parse_term(&mut self) -> Result<Ext> {
        let mut acc = self.parse_factor()?;
        while matches!(self.peek(), Some(Tok::Star)) {
            self.bump();
            let f = self.parse_factor()?;
            acc = acc.mul(&f);
        }
        Ok(acc)
    }

    // expr := [-] term ((+|-) term)*
    fn parse_expr(&mut self) -> Result<Ext> {
        let mut neg = false;
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            neg = true;
        }
        let mut acc = self.parse_term()?;
        if neg {
            acc = acc.neg();
        }
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    let t = self.parse_term()?;
                    acc = acc.add(&t);
                }
                Some(Tok::Minus) => {
                    self.bump();
                    let t = self.parse_term()?;
                    acc = acc.sub(&t);
                }
                _ => break,
            }
        }
        Ok(acc)
    }
}

/// Parse the textual element format over k (superset of the k' format).
pub fn parse_ext(ctx: &Ctx, s: &str) -> Result<Ext> {
    let toks = tokenize(s)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        ctx: *ctx,
    };
    let e = p.parse_expr()?;
    if p.pos != p.toks.len() {
        return Err(Error::Input(format!("trailing tokens in '{s}'")));
    }
    Ok(e)
}

/// Parse an element required to lie in k'.
pub fn parse_series(ctx: &Ctx, s: &str) -> Result<Series> {
    let e = parse_ext(ctx, s)?;
    if !e.is_base() {
        return Err(Error::Input(format!(
            "'{s}' does not lie in the base field"
        )));
    }
    Ok(e.re)
}
