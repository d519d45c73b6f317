//! Exact arithmetic in the truncated valuation rings 𝔬'/π^N and 𝔬/π^N, plus
//! Smith normal form over them with unimodular transforms.
//!
//! Elements are fixed windows of N base-q digits — no floating state at all.
//! The SNF pivots on entries of minimal valuation; with that choice every
//! division that occurs is by π^d with d the minimal valuation of the
//! remaining block, and the digits lost to that division can only ever be
//! multiplied back into positions ≥ N, so fixed-window arithmetic stays exact
//! mod π^N throughout. Transforms are certified by reconstruction.

use crate::error::{Error, Result};
use crate::localfield::{Ctx, Ext, Series, Val};

/// Context for the truncated rings: residue prime q, non-square ε, window N.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RCtx {
    pub q: u32,
    pub eps: u32,
    pub nw: usize,
}

impl RCtx {
    pub fn new(ctx: &Ctx, nw: usize) -> RCtx {
        RCtx {
            q: ctx.q,
            eps: ctx.eps,
            nw,
        }
    }
}

/// Common interface of the two truncated local rings.
pub trait Ring: Clone + PartialEq + std::fmt::Debug {
    fn zero_like(&self) -> Self;
    fn one_like(&self) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    /// Valuation within the window; None means ≡ 0 mod π^N.
    fn val(&self) -> Option<usize>;
    /// Inverse, when the element is a unit.
    fn inv(&self) -> Option<Self>;
    /// Multiply by π^k.
    fn shift_up(&self, k: usize) -> Self;
    /// Divide by π^k (digits below k are dropped; valid when val ≥ k).
    fn shift_down(&self, k: usize) -> Self;

    fn is_zero(&self) -> bool {
        self.val().is_none()
    }

    fn is_unit(&self) -> bool {
        self.val() == Some(0)
    }

    /// π^k as an element shaped like self.
    fn pi_pow_like(&self, k: usize) -> Self {
        self.one_like().shift_up(k)
    }
}

/// Element of 𝔬'/π^N.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RPol {
    pub q: u32,
    pub d: Vec<u32>,
}

impl RPol {
    pub fn zero(rc: &RCtx) -> RPol {
        RPol {
            q: rc.q,
            d: vec![0; rc.nw],
        }
    }

    pub fn one(rc: &RCtx) -> RPol {
        let mut x = RPol::zero(rc);
        x.d[0] = 1;
        x
    }

    pub fn from_int(rc: &RCtx, n: i64) -> RPol {
        let mut x = RPol::zero(rc);
        x.d[0] = n.rem_euclid(rc.q as i64) as u32;
        x
    }

    pub fn nw(&self) -> usize {
        self.d.len()
    }

    /// Reduce an integral field element into the window; requires all digits
    /// below N to be certified.
    pub fn from_series(rc: &RCtx, s: &Series) -> Result<RPol> {
        let mut x = RPol::zero(rc);
        for k in 0..rc.nw {
            match s.digit(k as i64) {
                Some(d) => x.d[k] = d,
                None => {
                    return Err(Error::PrecisionExhausted(format!(
                        "digit pi^{k} of reduced element not certified"
                    )))
                }
            }
        }
        match s.val() {
            Val::Exact(v) if v < 0 => return Err(Error::Input("element is not integral".into())),
            Val::AtLeast(b) if b < 0 => {
                return Err(Error::PrecisionExhausted(
                    "integrality of reduced element not certified".into(),
                ))
            }
            _ => {}
        }
        Ok(x)
    }

    /// Lift back to a field element (inexact, window-bounded).
    pub fn to_series(&self, ctx: &Ctx) -> Series {
        Series::from_digits(ctx, 0, self.d.clone(), false)
    }

    /// Lift to the exact polynomial representative. The window only knows the
    /// element mod π^N; this *chooses* the unique representative of degree
    /// < N as an exact field element, for callers that go on to do exact
    /// arithmetic with a fixed choice of lift.
    pub fn lift_exact(&self, ctx: &Ctx) -> Series {
        Series::from_digits(ctx, 0, self.d.clone(), true)
    }
}

impl Ring for RPol {
    fn zero_like(&self) -> Self {
        RPol {
            q: self.q,
            d: vec![0; self.d.len()],
        }
    }

    fn one_like(&self) -> Self {
        let mut x = self.zero_like();
        x.d[0] = 1;
        x
    }

    fn add(&self, o: &Self) -> Self {
        debug_assert_eq!(self.d.len(), o.d.len());
        RPol {
            q: self.q,
            d: self
                .d
                .iter()
                .zip(&o.d)
                .map(|(&a, &b)| (a + b) % self.q)
                .collect(),
        }
    }

    fn sub(&self, o: &Self) -> Self {
        RPol {
            q: self.q,
            d: self
                .d
                .iter()
                .zip(&o.d)
                .map(|(&a, &b)| (a + self.q - b) % self.q)
                .collect(),
        }
    }

    fn neg(&self) -> Self {
        RPol {
            q: self.q,
            d: self.d.iter().map(|&a| (self.q - a) % self.q).collect(),
        }
    }

    fn mul(&self, o: &Self) -> Self {
        let n = self.d.len();
        let q = self.q as u64;
        let mut out = vec![0u64; n];
        for (i, &a) in self.d.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in o.d.iter().enumerate() {
                if i + j >= n {
                    break;
                }
                out[i + j] = (out[i + j] + a as u64 * b as u64) % q;
            }
        }
        RPol {
            q: self.q,
            d: out.into_iter().map(|x| x as u32).collect(),
        }
    }

    fn val(&self) -> Option<usize> {
        self.d.iter().position(|&x| x != 0)
    }

    fn inv(&self) -> Option<Self> {
        if self.d[0] == 0 {
            return None;
        }
        let n = self.d.len();
        let q = self.q as u64;
        let u0inv = mod_inv(self.d[0], self.q) as u64;
        let mut w = vec![0u32; n];
        w[0] = u0inv as u32;
        for k in 1..n {
            let mut s: u64 = 0;
            for i in 1..=k {
                s = (s + self.d[i] as u64 * w[k - i] as u64) % q;
            }
            w[k] = (u0inv * ((q - s) % q) % q) as u32;
        }
        Some(RPol { q: self.q, d: w })
    }

    fn shift_up(&self, k: usize) -> Self {
        let n = self.d.len();
        let mut d = vec![0u32; n];
        let keep = n.saturating_sub(k);
        d[k..k + keep].copy_from_slice(&self.d[..keep]);
        RPol { q: self.q, d }
    }

    fn shift_down(&self, k: usize) -> Self {
        let n = self.d.len();
        let mut d = vec![0u32; n];
        if k < n {
            d[..n - k].copy_from_slice(&self.d[k..]);
        }
        RPol { q: self.q, d }
    }
}

fn mod_inv(d: u32, q: u32) -> u32 {
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

/// Element of 𝔬/π^N = (𝔬'/π^N)[j], j² = ε.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RExt {
    pub eps: u32,
    pub re: RPol,
    pub im: RPol,
}

impl RExt {
    pub fn zero(rc: &RCtx) -> RExt {
        RExt {
            eps: rc.eps,
            re: RPol::zero(rc),
            im: RPol::zero(rc),
        }
    }

    pub fn one(rc: &RCtx) -> RExt {
        RExt {
            eps: rc.eps,
            re: RPol::one(rc),
            im: RPol::zero(rc),
        }
    }

    pub fn from_rpol(eps: u32, re: RPol) -> RExt {
        let im = re.zero_like();
        RExt { eps, re, im }
    }

    pub fn from_ext(rc: &RCtx, z: &Ext) -> Result<RExt> {
        Ok(RExt {
            eps: rc.eps,
            re: RPol::from_series(rc, &z.re)?,
            im: RPol::from_series(rc, &z.im)?,
        })
    }

    pub fn to_ext(&self, ctx: &Ctx) -> Ext {
        Ext::new(ctx, self.re.to_series(ctx), self.im.to_series(ctx))
    }

    /// Exact polynomial lift; see [`RPol::lift_exact`].
    pub fn lift_exact(&self, ctx: &Ctx) -> Ext {
        Ext::new(ctx, self.re.lift_exact(ctx), self.im.lift_exact(ctx))
    }

    /// Galois conjugate (j ↦ −j), π-digit-wise.
    pub fn tau(&self) -> RExt {
        RExt {
            eps: self.eps,
            re: self.re.clone(),
            im: self.im.neg(),
        }
    }

    /// True iff provably in 𝔬'/π^N (j-part ≡ 0).
    pub fn is_base(&self) -> bool {
        self.im.is_zero()
    }
}

impl Ring for RExt {
    fn zero_like(&self) -> Self {
        RExt {
            eps: self.eps,
            re: self.re.zero_like(),
            im: self.im.zero_like(),
        }
    }

    fn one_like(&self) -> Self {
        RExt {
            eps: self.eps,
            re: self.re.one_like(),
            im: self.im.zero_like(),
        }
    }

    fn add(&self, o: &Self) -> Self {
        RExt {
            eps: self.eps,
            re: self.re.add(&o.re),
            im: self.im.add(&o.im),
        }
    }

    fn sub(&self, o: &Self) -> Self {
        RExt {
            eps: self.eps,
            re: self.re.sub(&o.re),
            im: self.im.sub(&o.im),
        }
    }

    fn neg(&self) -> Self {
        RExt {
            eps: self.eps,
            re: self.re.neg(),
            im: self.im.neg(),
        }
    }

    fn mul(&self, o: &Self) -> Self {
        let eps = RPol {
            q: self.re.q,
            d: {
                let mut d = vec![0u32; self.re.d.len()];
                d[0] = self.eps;
                d
            },
        };
        let re = self.re.mul(&o.re).add(&self.im.mul(&o.im).mul(&eps));
        let im = self.re.mul(&o.im).add(&self.im.mul(&o.re));
        RExt {
            eps: self.eps,
            re,
            im,
        }
    }

    /// val in the unramified extension: min over the two 𝔬'-coordinates.
    fn val(&self) -> Option<usize> {
        match (self.re.val(), self.im.val()) {
            (None, v) | (v, None) => v,
            (Some(a), Some(b)) => Some(a.min(b)),
        }
    }

    fn inv(&self) -> Option<Self> {
        // z^{-1} = τ(z)/N(z); N(z) = re² − ε im² is a unit iff z is
        let eps = {
            let mut e = self.re.zero_like();
            e.d[0] = self.eps;
            e
        };
        let norm = self.re.mul(&self.re).sub(&self.im.mul(&self.im).mul(&eps));
        let ninv = norm.inv()?;
        let conj = self.tau();
        Some(RExt {
            eps: self.eps,
            re: conj.re.mul(&ninv),
            im: conj.im.mul(&ninv),
        })
    }

    fn shift_up(&self, k: usize) -> Self {
        RExt {
            eps: self.eps,
            re: self.re.shift_up(k),
            im: self.im.shift_up(k),
        }
    }

    fn shift_down(&self, k: usize) -> Self {
        RExt {
            eps: self.eps,
            re: self.re.shift_down(k),
            im: self.im.shift_down(k),
        }
    }
}

/// Dense matrix over a truncated local ring.
#[derive(Debug, Clone, PartialEq)]
pub struct RMat<R: Ring> {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<R>,
}

impl<R: Ring> RMat<R> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> R) -> RMat<R> {
        let mut a = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                a.push(f(i, j));
            }
        }
        RMat { rows, cols, a }
    }

    pub fn identity_like(n: usize, sample: &R) -> RMat<R> {
        RMat::from_fn(n, n, |i, j| {
            if i == j {
                sample.one_like()
            } else {
                sample.zero_like()
            }
        })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &R {
        &self.a[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: R) {
        self.a[i * self.cols + j] = v;
    }

    pub fn mul(&self, o: &RMat<R>) -> RMat<R> {
        assert_eq!(self.cols, o.rows);
        RMat::from_fn(self.rows, o.cols, |i, j| {
            let mut s = self.a[0].zero_like();
            for k in 0..self.cols {
                s = s.add(&self.at(i, k).mul(o.at(k, j)));
            }
            s
        })
    }

    pub fn apply(&self, v: &[R]) -> Vec<R> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let mut s = self.a[0].zero_like();
                for k in 0..self.cols {
                    s = s.add(&self.at(i, k).mul(&v[k]));
                }
                s
            })
            .collect()
    }

    pub fn transpose(&self) -> RMat<R> {
        RMat::from_fn(self.cols, self.rows, |i, j| self.at(j, i).clone())
    }

    pub fn col(&self, j: usize) -> Vec<R> {
        (0..self.rows).map(|i| self.at(i, j).clone()).collect()
    }

    /// Inverse by Gauss–Jordan; succeeds iff the matrix is unimodular
    /// (every pivot a unit), which keeps the computation exact mod π^N.
    pub fn inverse(&self) -> Option<RMat<R>> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut m = self.clone();
        let mut inv = RMat::identity_like(n, &self.a[0]);
        for k in 0..n {
            let pr = (k..n).find(|&i| m.at(i, k).is_unit())?;
            if pr != k {
                for j in 0..n {
                    m.a.swap(k * n + j, pr * n + j);
                    inv.a.swap(k * n + j, pr * n + j);
                }
            }
            let piv_inv = m.at(k, k).inv()?;
            for j in 0..n {
                m.set(k, j, m.at(k, j).mul(&piv_inv));
                inv.set(k, j, inv.at(k, j).mul(&piv_inv));
            }
            for i in 0..n {
                if i == k || m.at(i, k).is_zero() {
                    continue;
                }
                let f = m.at(i, k).clone();
                for j in 0..n {
                    m.set(i, j, m.at(i, j).sub(&f.mul(m.at(k, j))));
                    inv.set(i, j, inv.at(i, j).sub(&f.mul(inv.at(k, j))));
                }
            }
        }
        Some(inv)
    }

    /// Determinant by cofactor expansion (small matrices only).
    pub fn det(&self) -> R {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        if n == 0 {
            return self.a[0].one_like();
        }
        if n == 1 {
            return self.a[0].clone();
        }
        let mut acc = self.a[0].zero_like();
        for j in 0..n {
            let minor = RMat::from_fn(n - 1, n - 1, |r, c| {
                self.at(r + 1, if c < j { c } else { c + 1 }).clone()
            });
            let term = self.at(0, j).mul(&minor.det());
            acc = if j % 2 == 0 {
                acc.add(&term)
            } else {
                acc.sub(&term)
            };
        }
        acc
    }

    /// Adjugate matrix: adj(A)·A = det(A)·I (small matrices only).
    pub fn adjugate(&self) -> RMat<R> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        if n == 1 {
            return RMat::identity_like(1, &self.a[0]);
        }
        RMat::from_fn(n, n, |i, j| {
            // cofactor C_{ji}
            let minor = RMat::from_fn(n - 1, n - 1, |r, c| {
                self.at(if r < j { r } else { r + 1 }, if c < i { c } else { c + 1 })
                    .clone()
            });
            let d = minor.det();
            if (i + j) % 2 == 0 {
                d
            } else {
                d.neg()
            }
        })
    }
}

/// Smith normal form A = U·D·V over a truncated local ring.
#[derive(Debug, Clone)]
pub struct Snf<R: Ring> {
    pub u: RMat<R>,
    pub d: RMat<R>,
    pub v: RMat<R>,
    /// Elementary-divisor exponents, ascending; None = divisor ≥ π^N.
    pub divisors: Vec<Option<usize>>,
}

impl<R: Ring> Snf<R> {
    /// Sum of the finite divisor exponents (= val det for full-rank square).
    pub fn finite_divisor_sum(&self) -> Option<usize> {
        let mut s = 0;
        for d in &self.divisors {
            s += (*d)?;
        }
        Some(s)
    }
}

/// Compute the SNF with min-valuation pivoting and unit-normalized pivots:
/// the diagonal of D is exactly π^{d_1} | π^{d_2} | …
pub fn snf<R: Ring>(a0: &RMat<R>) -> Snf<R> {
    let (rows, cols) = (a0.rows, a0.cols);
    let sample = &a0.a[0];
    let mut a = a0.clone();
    let mut u = RMat::identity_like(rows, sample);
    let mut v = RMat::identity_like(cols, sample);
    let steps = rows.min(cols);
    let mut divisors: Vec<Option<usize>> = vec![None; steps];

    for k in 0..steps {
        // pivot of minimal valuation in the remaining block
        let mut best: Option<(usize, usize, usize)> = None;
        for i in k..rows {
            for j in k..cols {
                if let Some(val) = a.at(i, j).val() {
                    if best.is_none_or(|(_, _, bv)| val < bv) {
                        best = Some((i, j, val));
                    }
                }
            }
        }
        let Some((pi, pj, pv)) = best else {
            break; // remaining block ≡ 0 mod π^N
        };
        // move pivot to (k, k)
        if pi != k {
            for j in 0..cols {
                a.a.swap(k * cols + j, pi * cols + j);
            }
            for j in 0..rows {
                // U ← U · (row swap)^{-1} = column swap on U
                u.a.swap(j * rows + k, j * rows + pi);
            }
        }
        if pj != k {
            for i in 0..rows {
                a.a.swap(i * cols + k, i * cols + pj);
            }
            for j in 0..cols {
                // V ← (col swap)^{-1} · V = row swap on V
                v.a.swap(k * cols + j, pj * cols + j);
            }
        }
        // normalize pivot to exactly π^{pv}: scale row k by unit^{-1}
        let unit = a.at(k, k).shift_down(pv);
        let unit_inv = unit.inv().expect("pivot unit part invertible");
        for j in 0..cols {
            a.set(k, j, a.at(k, j).mul(&unit_inv));
        }
        for i in 0..rows {
            // U ← U · diag(..unit..)
            u.set(i, k, u.at(i, k).mul(&unit));
        }
        // clear column k below/above
        for i in 0..rows {
            if i == k || a.at(i, k).is_zero() {
                continue;
            }
            let f = a.at(i, k).shift_down(pv); // a_ik / π^{pv}, exact: val ≥ pv
            for j in 0..cols {
                let t = a.at(i, j).sub(&f.mul(a.at(k, j)));
                a.set(i, j, t);
            }
            // U ← U · E^{-1}: col_k(U) += f · col_i(U)
            for r in 0..rows {
                let t = u.at(r, k).add(&f.mul(u.at(r, i)));
                u.set(r, k, t);
            }
        }
        // clear row k to the right
        for j in 0..cols {
            if j == k || a.at(k, j).is_zero() {
                continue;
            }
            let f = a.at(k, j).shift_down(pv);
            for i in 0..rows {
                let t = a.at(i, j).sub(&f.mul(a.at(i, k)));
                a.set(i, j, t);
            }
            // V ← F^{-1} · V: row_k(V) += f · row_j(V)
            for c in 0..cols {
                let t = v.at(k, c).add(&f.mul(v.at(j, c)));
                v.set(k, c, t);
            }
        }
        divisors[k] = Some(pv);
    }

    Snf {
        u,
        d: a,
        v,
        divisors,
    }
}

/// Certify U·D·V ≡ A mod π^{N − loss}, where loss is the sum of finite
/// divisors (the precision spent on pivot divisions inside the transforms).
pub fn certify_snf<R: Ring>(a: &RMat<R>, s: &Snf<R>, nw: usize) -> Result<()> {
    let loss: usize = s.divisors.iter().flatten().sum();
    if loss + 4 > nw {
        return Err(Error::PrecisionExhausted(format!(
            "SNF certification window empty: divisors consume {loss} of {nw} digits"
        )));
    }
    let keep = nw - loss;
    let recon = s.u.mul(&s.d).mul(&s.v);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let diff = recon.at(i, j).sub(a.at(i, j));
            if let Some(v) = diff.val() {
                if v < keep {
                    return Err(Error::PrecisionExhausted(format!(
                        "SNF reconstruction differs at ({i},{j}) from pi^{v} (certified window {keep})"
                    )));
                }
            }
        }
    }
    Ok(())
}
