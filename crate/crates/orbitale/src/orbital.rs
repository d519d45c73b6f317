//! Orbital integrals as finite lattice counts, evaluated by direct
//! enumeration of admissible lattices.
//!
//! Both sides reduce to submodule enumeration in a finite quotient
//! Λ_max/Λ_min built from a cyclic-vector Krylov frame:
//!
//! * split side, datum [ζ, x, y] with ζ norm-one: admissible lattices are
//!   𝔬'-lattices L ⊆ k'^n stable under the ϑ-fixed form of 𝔬[ζ, ζ^{-1}]
//!   with y ∈ L and xL ⊆ 𝔬'; each contributes (−1)^{[L : standard]}.
//!   Λ_min = R·y and Λ_max = {v : x·u(ζ)·v ∈ 𝔬'} bound every admissible L,
//!   and Λ_max/Λ_min has length val Δ.
//! * unitary side, datum [ζ⁺, z] on U(β): admissible lattices are the
//!   β-self-dual 𝔬-lattices with ζ⁺Λ = Λ and z* ∈ Λ, counted without weight;
//!   Λ_min = 𝔬[ζ⁺]·z* and Λ_max = Λ_min^⊥.
//!
//! The enumeration window is controlled by a bound B (lattices containing
//! π^B·Λ_max); every count is recomputed at B+1 and a mismatch is reported
//! as BoundUnstable rather than silently returned.
//!
//! [`verify_fl`] cross-checks four independently computed quantities per
//! instance: the two direct counts above and the two abstract lattice counts
//! from the coefficient-algebra route, together with the matching identity
//! between the split alternating sum and the unitary count.

use crate::error::{Error, Result};
use crate::fqlin::Subspace;
use crate::lattice::{build_algebra_windowed, lattice_counts, FinModule};
use crate::localfield::{Ctx, Ext, ZeroCheck};
use crate::matching::match_sym_to_uni;
use crate::matspace::{
    certify_ext_eq, invariants_sym, invariants_uni, Case, Mat, SymDatum, UniDatum,
};
use crate::par;
use crate::residue::{certify_snf, snf, RCtx, RExt, RMat, RPol, Ring};

// ---------------------------------------------------------------------------
// shared plumbing
// ---------------------------------------------------------------------------

fn certified_val(x: &Ext, what: &str) -> Result<i64> {
    match x.zero_check() {
        ZeroCheck::CertifiedNonzero(v) => Ok(v),
        ZeroCheck::ExactZero => Err(Error::NotRegular(format!("{what} vanishes"))),
        ZeroCheck::ZeroToPrecision(b) => Err(Error::PrecisionExhausted(format!(
            "{what} unresolved at O(pi^{b})"
        ))),
    }
}

fn zeta_powers(zeta: &Mat, n: usize) -> Vec<Mat> {
    let ctx = zeta.ctx;
    let mut out = Vec::with_capacity(n);
    let mut p = Mat::identity(&ctx, zeta.rows);
    for _ in 0..n {
        out.push(p.clone());
        p = p.mul(zeta);
    }
    out
}

fn e_last_col(ctx: &Ctx, n: usize) -> Mat {
    Mat::from_fn(ctx, n, 1, |i, _| {
        if i == n - 1 {
            Ext::one(ctx)
        } else {
            Ext::zero(ctx)
        }
    })
}

/// Window a k-valued matrix, certifying integrality digit by digit.
fn mat_to_rext(rc: &RCtx, m: &Mat, what: &str) -> Result<RMat<RExt>> {
    let mut out = Vec::with_capacity(m.rows * m.cols);
    for i in 0..m.rows {
        for j in 0..m.cols {
            out.push(
                RExt::from_ext(rc, m.at(i, j)).map_err(|e| {
                    Error::PrecisionExhausted(format!("{what} entry ({i},{j}): {e}"))
                })?,
            );
        }
    }
    Ok(RMat {
        rows: m.rows,
        cols: m.cols,
        a: out,
    })
}

/// Window a matrix that must land in the base ring k'.
fn mat_to_rpol(rc: &RCtx, m: &Mat, what: &str) -> Result<RMat<RPol>> {
    let r = mat_to_rext(rc, m, what)?;
    let mut out = Vec::with_capacity(r.a.len());
    for (k, e) in r.a.iter().enumerate() {
        if !e.is_base() {
            return Err(Error::Degenerate(format!(
                "{what} entry {k} has a nonzero j-part in the window"
            )));
        }
        out.push(e.re.clone());
    }
    Ok(RMat {
        rows: m.rows,
        cols: m.cols,
        a: out,
    })
}

fn rmat_conj_transpose(m: &RMat<RExt>) -> RMat<RExt> {
    RMat::from_fn(m.cols, m.rows, |i, j| m.at(j, i).tau())
}

/// Unwrap SNF divisors, requiring total length d.
fn finite_divisors(divs: &[Option<usize>], d: usize, what: &str) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(divs.len());
    for dv in divs {
        match dv {
            Some(e) => out.push(*e),
            None => {
                return Err(Error::PrecisionExhausted(format!(
                    "{what}: elementary divisor exceeds the window"
                )))
            }
        }
    }
    let sum: usize = out.iter().sum();
    if sum != d {
        return Err(Error::Degenerate(format!(
            "{what}: divisor sum {sum} differs from val Delta = {d}"
        )));
    }
    Ok(out)
}

/// The subspace of classes divisible by π^b (image of π^b·Λ_max).
fn tail_space(fm: &FinModule, b: usize) -> Subspace {
    let vecs: Vec<Vec<u32>> = fm
        .basis
        .iter()
        .enumerate()
        .filter(|(_, &(_, s, _))| s >= b)
        .map(|(idx, _)| {
            let mut v = vec![0u32; fm.dim];
            v[idx] = 1;
            v
        })
        .collect();
    if vecs.is_empty() {
        Subspace::zero(fm.q, fm.dim)
    } else {
        Subspace::from_vectors(fm.q, fm.dim, vecs)
    }
}

// ---------------------------------------------------------------------------
// split side
// ---------------------------------------------------------------------------

/// Direct split-side orbital count.
#[derive(Debug, Clone)]
pub struct SymOrbital {
    /// Σ over admissible lattices of (−1)^{[L : standard lattice]}.
    pub value: i64,
    /// Length of the enumeration quotient (= val Δ).
    pub d: usize,
    pub val_t: i64,
    /// [Λ_min : standard lattice] — the valuation of the y-Krylov frame.
    pub v_min: i64,
    /// counts_by_len[s] = number of admissible lattices with leng(L/Λ_min) = s.
    pub counts_by_len: Vec<u64>,
    /// Window bound the count was taken at (stable against bound+1).
    pub bound: usize,
}

/// Direct unitary-side orbital count.
#[derive(Debug, Clone)]
pub struct UniOrbital {
    /// Number of admissible self-dual lattices.
    pub value: u64,
    pub d: usize,
    pub bound: usize,
}

fn effective_xy(datum: &SymDatum) -> (Mat, Mat) {
    let ctx = datum.zeta.ctx;
    let n = datum.zeta.rows;
    match datum.case {
        Case::FJ => (datum.x.clone().unwrap(), datum.y.clone().unwrap()),
        Case::Bessel => (e_last_col(&ctx, n).transpose(), e_last_col(&ctx, n)),
    }
}

/// Evaluate the split-side orbital integral of an r = 0 datum by enumerating
/// admissible lattices; `bound` defaults to the largest elementary divisor
/// (the smallest complete window).
pub fn orbital_sym(datum: &SymDatum, bound: Option<usize>, cap: u64) -> Result<SymOrbital> {
    if datum.r != 0 {
        return Err(Error::Input(
            "direct enumeration handles r = 0 data only".into(),
        ));
    }
    let ctx = datum.zeta.ctx;
    let inv = invariants_sym(datum)?;
    if inv.val_delta < 0 {
        return Err(Error::Input(
            "val Delta < 0: datum is outside the integral model".into(),
        ));
    }
    let n = datum.zeta.rows;
    let d = inv.val_delta as usize;
    let (x, y) = effective_xy(datum);

    // window sized by the quotient scale: inverse frames lose certified
    // digits, so demanding the full ambient precision here is both
    // unnecessary and unattainable
    let nw = (2 * d + 12).max(16);
    let alg = build_algebra_windowed(&ctx, &inv.a, nw)?;
    // u_k(ζ) from the certified fixed-form basis. The basis is a window
    // representative; changing the lift moves Λ_min by π^nw-dust, invisible
    // at quotient scale d < nw.
    let zp = zeta_powers(&datum.zeta, n);
    let u_mats: Vec<Mat> = (0..n)
        .map(|k| {
            let mut m = Mat::from_fn(&ctx, n, n, |_, _| Ext::zero(&ctx));
            for (l, zpl) in zp.iter().enumerate() {
                let c = alg.b_o.at(l, k).lift_exact(&ctx);
                m = m.add(&zpl.scale(&c));
            }
            m
        })
        .collect();

    // Krylov frames: Λ_min columns u_k(ζ)·y, Λ_max cut out by rows x·u_k(ζ)
    let k_cols: Vec<Mat> = u_mats.iter().map(|u| u.mul(&y)).collect();
    let k_u = Mat::from_fn(&ctx, n, n, |i, k| k_cols[k].at(i, 0).clone());
    let w_rows: Vec<Mat> = u_mats.iter().map(|u| x.mul(u)).collect();
    let w_u = Mat::from_fn(&ctx, n, n, |k, j| w_rows[k].at(0, j).clone());
    let p_u = w_u.mul(&k_u);

    let v_min = certified_val(&k_u.det(), "y-Krylov determinant")?;
    let w_val = certified_val(&w_u.det(), "x-Krylov determinant")?;
    if w_val != inv.val_big_t || v_min + w_val != inv.val_delta {
        return Err(Error::Degenerate(format!(
            "Krylov frame valuations ({v_min}, {w_val}) disagree with the invariants"
        )));
    }

    let rc = &alg.rc;
    let p_r = mat_to_rpol(rc, &p_u, "relative lattice matrix")?;
    let s = snf(&p_r);
    certify_snf(&p_r, &s, rc.nw)?;
    let divisors = finite_divisors(&s.divisors, d, "relative lattice matrix")?;
    let u_inv =
        s.u.inverse()
            .ok_or_else(|| Error::PrecisionExhausted("SNF transform not invertible".into()))?;
    let w_inv = w_u.inverse()?;

    let mut fm = FinModule::new(rc.q, rc.eps, divisors.clone(), 1);
    let mut ops = vec![fm.pi_op()];
    for u in &u_mats {
        // action on Λ_max coordinates, then on the quotient-adapted basis
        let a_k = w_u.mul(u).mul(&w_inv);
        let a_r = mat_to_rpol(rc, &a_k, "stability operator")?;
        let m_k = u_inv.mul(&a_r).mul(&s.u);
        ops.push(fm.op_from_rpol(&m_k));
    }
    fm.ops = ops;

    let subs = fm.enumerate_stable_submodules(cap)?;
    let b = bound.unwrap_or_else(|| divisors.iter().copied().max().unwrap_or(0));
    let value_at = |bb: usize| -> (i64, Vec<u64>) {
        let tail = tail_space(&fm, bb);
        let mut counts = vec![0u64; d + 1];
        let mut val = 0i64;
        for sub in &subs {
            if tail.is_subspace_of(sub) {
                counts[sub.dim()] += 1;
                val += if (v_min + sub.dim() as i64).rem_euclid(2) == 0 {
                    1
                } else {
                    -1
                };
            }
        }
        (val, counts)
    };
    let (val_b, counts_b) = value_at(b);
    let (val_b1, _) = value_at(b + 1);
    if val_b != val_b1 {
        return Err(Error::BoundUnstable {
            b: b as i64,
            count_b: val_b,
            count_b1: val_b1,
        });
    }
    Ok(SymOrbital {
        value: val_b,
        d,
        val_t: inv.val_big_t,
        v_min,
        counts_by_len: counts_b,
        bound: b,
    })
}

// ---------------------------------------------------------------------------
// unitary side
// ---------------------------------------------------------------------------

/// Evaluate the unitary-side orbital integral of an r = 0 datum: the number
/// of self-dual stable lattices through the distinguished vector.
pub fn orbital_uni(datum: &UniDatum, bound: Option<usize>, cap: u64) -> Result<UniOrbital> {
    if datum.r != 0 {
        return Err(Error::Input(
            "direct enumeration handles r = 0 data only".into(),
        ));
    }
    let ctx = datum.zeta.ctx;
    let inv = invariants_uni(datum)?;
    if inv.val_delta < 0 {
        return Err(Error::Input(
            "val Delta < 0: datum is outside the integral model".into(),
        ));
    }
    let n = datum.zeta.rows;
    let d = inv.val_delta as usize;
    let bc = datum.beta_central();
    let zstar = match datum.case {
        Case::FJ => datum.z_star()?,
        Case::Bessel => e_last_col(&ctx, n),
    };

    let zp = zeta_powers(&datum.zeta, n);
    let k_cols: Vec<Mat> = zp.iter().map(|p| p.mul(&zstar)).collect();
    let k_z = Mat::from_fn(&ctx, n, n, |i, k| k_cols[k].at(i, 0).clone());
    let w_z = k_z.conj_transpose().mul(&bc);
    let p_z = w_z.mul(&k_z);

    // the hermitian Gram of the Krylov frame must reproduce the moments:
    // ⟨ζ^k z*, ζ^l z*⟩ = b_{l−k}
    for k in 0..n {
        for l in 0..n {
            let expected = if l >= k {
                inv.b_ext[l - k].clone()
            } else {
                inv.b_ext[k - l].tau()
            };
            certify_ext_eq(
                p_z.at(k, l),
                &expected,
                &format!("hermitian moment ({k},{l})"),
            )?;
        }
    }

    // windows sized by the quotient scale, not the ambient precision: matched
    // data carries solved entries whose certified digits fall short of prec
    let nw = (2 * d + 12).max(16);
    let rc = RCtx::new(&ctx, nw);
    let p_r = mat_to_rext(&rc, &p_z, "hermitian relative matrix")?;
    let s = snf(&p_r);
    certify_snf(&p_r, &s, rc.nw)?;
    let divisors = finite_divisors(&s.divisors, d, "hermitian relative matrix")?;
    let det_p = p_r.det();
    if det_p.val() != Some(d) {
        return Err(Error::PrecisionExhausted(
            "hermitian determinant valuation drifted in the window".into(),
        ));
    }
    let unit_inv = det_p.shift_down(d).inv().ok_or_else(|| {
        Error::PrecisionExhausted("hermitian determinant unit not invertible".into())
    })?;
    let u_inv =
        s.u.inverse()
            .ok_or_else(|| Error::PrecisionExhausted("SNF transform not invertible".into()))?;

    let a_z = w_z.mul(&datum.zeta).mul(&w_z.inverse()?);
    let a_r = mat_to_rext(&rc, &a_z, "unitary stability operator")?;
    let m_z = u_inv.mul(&a_r).mul(&s.u);

    let mut fm = FinModule::new(rc.q, rc.eps, divisors.clone(), 2);
    fm.ops = vec![fm.pi_op(), fm.j_op(), fm.op_from_rext(&m_z)];

    // pairing on quotient coordinates: ⟨Uω, Uω'⟩ = ω^{conjT}·(U^{conjT} P^{-1} U)·ω',
    // τ-linear in the first slot; P^{-1} = adj(P)·unit^{-1}·π^{-d}
    let t0 = rmat_conj_transpose(&s.u).mul(&p_r.adjugate()).mul(&s.u);
    let tn = RMat::from_fn(n, n, |i, j| t0.at(i, j).mul(&unit_inv));
    let jj = RExt {
        eps: rc.eps,
        re: RPol::zero(&rc),
        im: RPol::one(&rc),
    };
    let gp = [RExt::one(&rc), jj];
    let mut pair = vec![vec![Vec::new(); fm.dim]; fm.dim];
    for (ai, &(i, sa, pa)) in fm.basis.iter().enumerate() {
        for (bi, &(j, sb, pb)) in fm.basis.iter().enumerate() {
            let z = gp[pa].tau().mul(&gp[pb]).mul(tn.at(i, j));
            let mut digits = vec![0u32; 2 * d];
            for l in 0..d {
                let m = d as i64 - (l as i64 + 1) - (sa + sb) as i64;
                if m >= 0 && (m as usize) < rc.nw {
                    digits[l] = z.re.d[m as usize];
                    digits[d + l] = z.im.d[m as usize];
                }
            }
            pair[ai][bi] = digits;
        }
    }
    fm.pair = Some(pair);
    if fm.dim > 0 {
        let zero_s = Subspace::zero(fm.q, fm.dim);
        let full_s = Subspace::full(fm.q, fm.dim);
        if fm.dual_submodule(&zero_s) != full_s || fm.dual_submodule(&full_s) != zero_s {
            return Err(Error::Degenerate(
                "induced hermitian pairing is not perfect".into(),
            ));
        }
    }

    let subs = fm.enumerate_stable_submodules(cap)?;
    let b = bound.unwrap_or_else(|| divisors.iter().copied().max().unwrap_or(0));
    let count_at = |bb: usize| -> u64 {
        let tail = tail_space(&fm, bb);
        subs.iter()
            .filter(|sub| tail.is_subspace_of(sub) && fm.is_self_dual(sub))
            .count() as u64
    };
    let c_b = count_at(b);
    let c_b1 = count_at(b + 1);
    if c_b != c_b1 {
        return Err(Error::BoundUnstable {
            b: b as i64,
            count_b: c_b as i64,
            count_b1: c_b1 as i64,
        });
    }
    Ok(UniOrbital {
        value: c_b,
        d,
        bound: b,
    })
}

// ---------------------------------------------------------------------------
// the comparison driver
// ---------------------------------------------------------------------------

/// Four-way verification record for one r = 0 instance.
#[derive(Debug, Clone)]
pub struct FlReport {
    pub q: u32,
    pub case: Case,
    pub n: usize,
    pub val_delta: i64,
    pub val_t: i64,
    pub parity: u8,
    pub transfer_sign: i32,
    /// ε of the matched hermitian form.
    pub epsilon: i32,
    /// Direct split-side signed count.
    pub sym_direct: i64,
    /// Σ (−1)^i |M_i| from the coefficient-algebra route.
    pub alt_m: i64,
    /// Direct unitary-side count.
    pub uni_direct: u64,
    /// |N| from the coefficient-algebra route.
    pub n_lattice: u64,
    /// |M_i| by colength.
    pub m_counts: Vec<u64>,
    /// sym_direct == (−1)^{val T} · alt_m.
    pub stage_sym_vs_lattice: bool,
    /// uni_direct == n_lattice.
    pub stage_uni_vs_lattice: bool,
    /// alt_m == n_lattice (None when p ≤ max(n, 2) leaves it unproved).
    pub stage_identity: Option<bool>,
    /// The matching identity across all four quantities.
    pub fl_holds: bool,
}

/// Verify the matching identity on one split-side datum: compute the direct
/// counts on both sides (matching the unitary datum constructively) and the
/// two abstract lattice counts, and compare.
pub fn verify_fl(datum: &SymDatum, cap: u64) -> Result<FlReport> {
    let ctx = datum.zeta.ctx;
    if datum.r != 0 {
        return Err(Error::Input("verification covers r = 0 data only".into()));
    }
    let inv = invariants_sym(datum)?;
    let n = datum.zeta.rows;
    let b_n = inv.b_ext[..n].to_vec();
    let lat = lattice_counts(&ctx, &inv.a, &b_n, cap)?;
    let sym = orbital_sym(datum, None, cap)?;
    let (hc, uni_datum, _cert) = match_sym_to_uni(datum)?;
    let uni = orbital_uni(&uni_datum, None, cap)?;

    let sign_t = if inv.val_big_t.rem_euclid(2) == 0 {
        1i64
    } else {
        -1i64
    };
    let stage_sym_vs_lattice = sym.value == sign_t * lat.alt_sum;
    let stage_uni_vs_lattice = uni.value == lat.n_count;
    let stage_identity = lat.identity_holds;
    let fl_holds = stage_sym_vs_lattice
        && stage_uni_vs_lattice
        && stage_identity.unwrap_or(true)
        && sym.value == sign_t * (uni.value as i64);

    Ok(FlReport {
        q: ctx.q,
        case: datum.case,
        n,
        val_delta: inv.val_delta,
        val_t: inv.val_big_t,
        parity: inv.parity,
        transfer_sign: inv.transfer_sign,
        epsilon: hc.epsilon,
        sym_direct: sym.value,
        alt_m: lat.alt_sum,
        uni_direct: uni.value,
        n_lattice: lat.n_count,
        m_counts: lat.m_counts,
        stage_sym_vs_lattice,
        stage_uni_vs_lattice,
        stage_identity,
        fl_holds,
    })
}

/// Verify a batch of data, fanned out over the worker pool (or sequentially
/// without the `parallel` feature); output order matches input order.
pub fn verify_fl_batch(data: Vec<SymDatum>, cap: u64) -> Vec<Result<FlReport>> {
    par::par_map(data, move |d| verify_fl(&d, cap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::DEFAULT_CAP;
    use crate::localfield::{parse_ext, Series};
    use crate::matspace::cayley;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx3() -> Ctx {
        Ctx::new(3).unwrap()
    }

    fn scalar_datum(ctx: &Ctx, zeta: &str, x: &str, y: &str) -> SymDatum {
        let z = Mat::from_fn(ctx, 1, 1, |_, _| parse_ext(ctx, zeta).unwrap());
        let xv = Mat::from_fn(ctx, 1, 1, |_, _| parse_ext(ctx, x).unwrap());
        let yv = Mat::from_fn(ctx, 1, 1, |_, _| parse_ext(ctx, y).unwrap());
        SymDatum::new(Case::FJ, 1, 0, z, Some(xv), Some(yv)).unwrap()
    }

    fn random_integral_datum<R: Rng>(ctx: &Ctx, rng: &mut R, n: usize) -> Option<SymDatum> {
        let a = Mat::from_fn(ctx, n, n, |_, _| {
            Ext::from_series(ctx, Series::random_integral(ctx, rng))
        });
        let ja = a.scale(&Ext::j(ctx));
        let minus = Mat::identity(ctx, n).sub(&ja);
        if !matches!(minus.det().zero_check(), ZeroCheck::CertifiedNonzero(0)) {
            return None;
        }
        let zeta = cayley(&a).ok()?;
        let xv = Mat::from_fn(ctx, 1, n, |_, _| {
            Ext::from_series(ctx, Series::random_integral(ctx, rng))
        });
        let yv = Mat::from_fn(ctx, n, 1, |_, _| {
            Ext::from_series(ctx, Series::random_integral(ctx, rng))
        });
        SymDatum::new(Case::FJ, n, 0, zeta, Some(xv), Some(yv)).ok()
    }

    #[test]
    fn scalar_anchors() {
        let ctx = ctx3();
        let s = orbital_sym(&scalar_datum(&ctx, "1", "1", "1"), None, DEFAULT_CAP).unwrap();
        assert_eq!((s.value, s.d, s.counts_by_len.clone()), (1, 0, vec![1]));

        let s = orbital_sym(&scalar_datum(&ctx, "1", "1", "pi^2"), None, DEFAULT_CAP).unwrap();
        assert_eq!((s.value, s.d, s.v_min), (1, 2, 2));
        assert_eq!(s.counts_by_len, vec![1, 1, 1]);

        let s = orbital_sym(&scalar_datum(&ctx, "1", "1", "pi"), None, DEFAULT_CAP).unwrap();
        assert_eq!((s.value, s.d), (0, 1));
    }

    #[test]
    fn verify_fl_scalar_anchors() {
        let ctx = ctx3();
        for (y, want_sym, want_n) in [("1", 1i64, 1u64), ("pi^2", 1, 1), ("pi", 0, 0)] {
            let r = verify_fl(&scalar_datum(&ctx, "1", "1", y), DEFAULT_CAP).unwrap();
            assert!(r.fl_holds, "fl must hold at y = {y}: {r:?}");
            assert_eq!(r.sym_direct, want_sym, "split count at y = {y}");
            assert_eq!(r.uni_direct, want_n, "unitary count at y = {y}");
            assert_eq!(r.stage_identity, Some(true));
        }
    }

    #[test]
    fn verify_fl_random_data_n2() {
        let ctx = ctx3();
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let mut done = 0;
        let mut seen_odd = false;
        let mut seen_d2 = false;
        while done < 6 {
            let Some(datum) = random_integral_datum(&ctx, &mut rng, 2) else {
                continue;
            };
            let Ok(inv) = invariants_sym(&datum) else {
                continue;
            };
            if !(0..=3).contains(&inv.val_delta) {
                continue;
            }
            let r = match verify_fl(&datum, DEFAULT_CAP) {
                Ok(r) => r,
                Err(Error::NotRegular(_)) | Err(Error::Degenerate(_)) => continue,
                Err(e) => panic!("unexpected failure: {e:?}"),
            };
            assert!(r.fl_holds, "fl must hold: {r:?}");
            seen_odd |= r.parity == 1;
            seen_d2 |= r.val_delta >= 2;
            done += 1;
        }
        assert!(seen_odd, "no odd-parity instance sampled");
        assert!(seen_d2, "no instance with val Delta >= 2 sampled");
    }

    #[test]
    fn verify_fl_bessel_n2() {
        let ctx = ctx3();
        let mut rng = ChaCha8Rng::seed_from_u64(505);
        let mut done = 0;
        while done < 3 {
            let a = Mat::from_fn(&ctx, 2, 2, |_, _| {
                Ext::from_series(&ctx, Series::random_integral(&ctx, &mut rng))
            });
            let ja = a.scale(&Ext::j(&ctx));
            let minus = Mat::identity(&ctx, 2).sub(&ja);
            if !matches!(minus.det().zero_check(), ZeroCheck::CertifiedNonzero(0)) {
                continue;
            }
            let Ok(zeta) = cayley(&a) else { continue };
            let Ok(datum) = SymDatum::new(Case::Bessel, 1, 0, zeta, None, None) else {
                continue;
            };
            let Ok(inv) = invariants_sym(&datum) else {
                continue;
            };
            if !(0..=3).contains(&inv.val_delta) {
                continue;
            }
            let r = match verify_fl(&datum, DEFAULT_CAP) {
                Ok(r) => r,
                Err(Error::NotRegular(_)) | Err(Error::Degenerate(_)) => continue,
                Err(e) => panic!("unexpected failure: {e:?}"),
            };
            assert!(r.fl_holds, "odd-case fl must hold: {r:?}");
            done += 1;
        }
    }

    #[test]
    fn translation_covariance() {
        let ctx = ctx3();
        // exact diagonal norm-one datum with val Delta = 2
        let zeta = Mat::from_fn(&ctx, 2, 2, |i, j| {
            if i != j {
                Ext::zero(&ctx)
            } else if i == 0 {
                Ext::one(&ctx)
            } else {
                Ext::from_int(&ctx, -1)
            }
        });
        let x = Mat::from_fn(&ctx, 1, 2, |_, _| Ext::one(&ctx));
        let y = Mat::from_fn(&ctx, 2, 1, |i, _| {
            if i == 0 {
                Ext::one(&ctx)
            } else {
                parse_ext(&ctx, "pi^2").unwrap()
            }
        });
        let datum = SymDatum::new(
            Case::FJ,
            2,
            0,
            zeta.clone(),
            Some(x.clone()),
            Some(y.clone()),
        )
        .unwrap();
        let base = orbital_sym(&datum, None, DEFAULT_CAP).unwrap();
        assert_ne!(base.value, 0, "anchor instance should have a nonzero count");

        // translation by h = diag(π, 1): x' = x·h, y' = h^{-1}·y, ζ diagonal
        // commutes — the signed count flips with η(det h)
        let pi = parse_ext(&ctx, "pi").unwrap();
        let pi_inv = parse_ext(&ctx, "pi^-1").unwrap();
        let x2 = Mat::from_fn(&ctx, 1, 2, |_, j| {
            if j == 0 {
                x.at(0, 0).mul(&pi)
            } else {
                x.at(0, 1).clone()
            }
        });
        let y2 = Mat::from_fn(&ctx, 2, 1, |i, _| {
            if i == 0 {
                y.at(0, 0).mul(&pi_inv)
            } else {
                y.at(1, 0).clone()
            }
        });
        let datum2 = SymDatum::new(Case::FJ, 2, 0, zeta, Some(x2), Some(y2)).unwrap();
        let moved = orbital_sym(&datum2, None, DEFAULT_CAP).unwrap();
        assert_eq!(moved.value, -base.value, "odd translation flips the sign");
        assert_eq!(moved.val_t, base.val_t + 1);
        assert_eq!(moved.v_min, base.v_min - 1);
        assert_eq!(moved.d, base.d);

        // unimodular translation leaves everything unchanged
        let h = Mat::from_fn(&ctx, 2, 2, |i, j| match (i, j) {
            (0, 0) | (1, 1) => Ext::one(&ctx),
            (0, 1) => pi.clone(),
            _ => Ext::zero(&ctx),
        });
        let h_inv = h.inverse().unwrap();
        let datum3 = SymDatum::new(
            Case::FJ,
            2,
            0,
            h_inv.mul(&datum.zeta).mul(&h),
            Some(x.mul(&h)),
            Some(h_inv.mul(&y)),
        )
        .unwrap();
        let same = orbital_sym(&datum3, None, DEFAULT_CAP).unwrap();
        assert_eq!(same.value, base.value);
        assert_eq!(same.val_t, base.val_t);
    }

    #[test]
    fn undersized_bound_is_detected() {
        let ctx = ctx3();
        let datum = scalar_datum(&ctx, "1", "1", "pi^2");
        match orbital_sym(&datum, Some(0), DEFAULT_CAP) {
            Err(Error::BoundUnstable { b, .. }) => assert_eq!(b, 0),
            other => panic!("expected BoundUnstable, got {other:?}"),
        }
        // an oversized bound reproduces the default count
        let s = orbital_sym(&datum, Some(7), DEFAULT_CAP).unwrap();
        assert_eq!(s.value, 1);
    }

    #[test]
    fn batch_matches_single_runs() {
        let ctx = ctx3();
        let data = vec![
            scalar_datum(&ctx, "1", "1", "1"),
            scalar_datum(&ctx, "1", "1", "pi"),
            scalar_datum(&ctx, "1", "1", "pi^2"),
        ];
        let batch = verify_fl_batch(data.clone(), DEFAULT_CAP);
        for (d, r) in data.iter().zip(batch) {
            let single = verify_fl(d, DEFAULT_CAP).unwrap();
            let r = r.unwrap();
            assert_eq!(r.sym_direct, single.sym_direct);
            assert_eq!(r.uni_direct, single.uni_direct);
            assert!(r.fl_holds);
        }
    }
}
