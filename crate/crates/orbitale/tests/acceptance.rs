//! Acceptance suite: one test per advertised criterion, each ending in a
//! single `criterion N: PASS — ...` line (run with `--nocapture` to see the
//! lines on success; a failed criterion fails its test).
//!
//! Criteria 1–3, 5, and 9 share two seeded instance pools (the core pool at
//! n ∈ {1,2}, q ∈ {3,5}, and an n = 3 slice at q ∈ {5,7}), built once.

use std::sync::OnceLock;
use std::time::Instant;

use orbitale::lattice::{build_algebra, build_gram, build_uni_module, lattice_counts};
use orbitale::localfield::{parse_ext, Ctx, Ext};
use orbitale::matching::{match_sym_to_uni, match_uni_to_sym};
use orbitale::matspace::{certify_ext_eq, invariants_sym, invariants_uni, Case, Mat, SymDatum};
use orbitale::orbital::{orbital_sym, orbital_uni, verify_fl, FlReport, SymOrbital};
use orbitale::sample::{rng_from_seed, sample_matched_pair, sample_sym};
use orbitale::whittaker::{lfactor, random_params, verify_whittaker, zeta0};

const CAP: u64 = 1 << 20;
/// Sampling precision: high enough that no matched-side window ever runs
/// out of certified digits on the tested ranges.
const PREC: usize = 64;
const TRIES: u32 = 2000;

fn ctx_at(q: u32) -> Ctx {
    let mut c = Ctx::new(q).unwrap();
    c.prec = PREC;
    c
}

struct Inst {
    datum: SymDatum,
    rep: FlReport,
    sym: SymOrbital,
}

static CORE: OnceLock<Vec<Inst>> = OnceLock::new();
static N3: OnceLock<Vec<Inst>> = OnceLock::new();
static BESSEL: OnceLock<Vec<Inst>> = OnceLock::new();

fn build_pool(specs: &[(u32, Case, usize, i64, u32, u64)]) -> Vec<Inst> {
    let mut out = Vec::new();
    for &(q, case, n, vmax, count, seed) in specs {
        let ctx = ctx_at(q);
        let m = match case {
            Case::FJ => n,
            Case::Bessel => n - 1,
        };
        let mut rng = rng_from_seed(seed);
        for _ in 0..count {
            let (datum, _) =
                sample_sym(&ctx, case, m, vmax, TRIES, &mut rng).expect("sampling budget");
            let rep = verify_fl(&datum, CAP).expect("verification pipeline");
            let sym = orbital_sym(&datum, None, CAP).expect("split-side oracle");
            out.push(Inst { datum, rep, sym });
        }
    }
    out
}

/// 50 instances per (q, n) ∈ {3,5} × {1,2}, val Δ ≤ 4.
fn core() -> &'static [Inst] {
    CORE.get_or_init(|| {
        build_pool(&[
            (3, Case::FJ, 1, 4, 50, 31),
            (3, Case::FJ, 2, 4, 50, 32),
            (5, Case::FJ, 1, 4, 50, 51),
            (5, Case::FJ, 2, 4, 50, 52),
        ])
    })
}

/// n = 3 slice where the lattice identity is proved (p > n): q ∈ {5, 7}.
fn n3() -> &'static [Inst] {
    N3.get_or_init(|| build_pool(&[(5, Case::FJ, 3, 3, 10, 53), (7, Case::FJ, 3, 3, 10, 73)]))
}

/// Odd-case pool: n = 2 (m = 1), q ∈ {3, 5}, 20 instances each.
fn bessel() -> &'static [Inst] {
    BESSEL.get_or_init(|| {
        build_pool(&[
            (3, Case::Bessel, 2, 4, 20, 131),
            (5, Case::Bessel, 2, 4, 20, 151),
        ])
    })
}

fn sign_of(val_t: i64) -> i64 {
    if val_t.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

#[test]
fn criterion_1_fundamental_lemma() {
    let t0 = Instant::now();
    let insts = core();
    assert_eq!(insts.len(), 200);
    for i in insts {
        let sign = sign_of(i.rep.val_t);
        if i.rep.val_delta.rem_euclid(2) == 0 {
            assert_eq!(
                i.rep.sym_direct,
                sign * i.rep.uni_direct as i64,
                "even val Δ: split = (−1)^val T × unitary must hold: {:?}",
                i.rep
            );
        } else {
            assert_eq!(
                i.rep.sym_direct, 0,
                "odd val Δ: split side must vanish: {:?}",
                i.rep
            );
            assert_eq!(
                i.rep.uni_direct, 0,
                "odd val Δ: unitary side must vanish: {:?}",
                i.rep
            );
        }
        assert!(i.rep.fl_holds, "full four-way identity: {:?}", i.rep);
    }
    println!(
        "criterion 1: PASS — matching identity exact on 200 instances, (q,n) ∈ {{3,5}}×{{1,2}}, val Δ ≤ 4, {:.1?}",
        t0.elapsed()
    );
}

#[test]
fn criterion_2_alternating_sum_identity() {
    for i in core() {
        assert_eq!(
            i.rep.stage_identity,
            Some(true),
            "core identity stage: {:?}",
            i.rep
        );
        assert_eq!(
            i.rep.alt_m, i.rep.n_lattice as i64,
            "Σ(−1)^i|M_i| = |N|: {:?}",
            i.rep
        );
    }
    let slice = n3();
    assert!(slice.len() >= 20);
    let mut nonzero_d = 0;
    for i in slice {
        assert_eq!(i.rep.n, 3);
        assert_eq!(
            i.rep.stage_identity,
            Some(true),
            "n=3 identity stage: {:?}",
            i.rep
        );
        assert_eq!(i.rep.alt_m, i.rep.n_lattice as i64);
        if i.rep.val_delta > 0 {
            nonzero_d += 1;
        }
    }
    assert!(
        nonzero_d > 0,
        "the n=3 slice must include nontrivial quotients"
    );
    println!(
        "criterion 2: PASS — alternating-sum identity exact on 200 core + {} n=3 instances (q ∈ {{5,7}})",
        slice.len()
    );
}

#[test]
fn criterion_3_four_way_consistency() {
    for i in core().iter().chain(n3()) {
        let sign = sign_of(i.rep.val_t);
        // all four quantities pairwise consistent
        assert!(
            i.rep.stage_sym_vs_lattice,
            "split oracle vs lattice count: {:?}",
            i.rep
        );
        assert!(
            i.rep.stage_uni_vs_lattice,
            "unitary oracle vs lattice count: {:?}",
            i.rep
        );
        assert_eq!(i.rep.sym_direct, sign * i.rep.alt_m, "{:?}", i.rep);
        assert_eq!(i.rep.uni_direct, i.rep.n_lattice, "{:?}", i.rep);
        assert_eq!(
            i.rep.sym_direct,
            sign * i.rep.uni_direct as i64,
            "{:?}",
            i.rep
        );
    }
    println!(
        "criterion 3: PASS — four independent computations pairwise consistent on {} instances",
        core().len() + n3().len()
    );
}

#[test]
fn criterion_4_odd_rank_one_case() {
    let insts = bessel();
    assert_eq!(insts.len(), 40);
    let mut odd = 0;
    for i in insts {
        assert!(i.rep.fl_holds, "odd-case identity: {:?}", i.rep);
        let sign = sign_of(i.rep.val_t);
        if i.rep.val_delta.rem_euclid(2) == 0 {
            assert_eq!(i.rep.sym_direct, sign * i.rep.uni_direct as i64);
        } else {
            assert_eq!(i.rep.sym_direct, 0, "odd val Δ vanishing: {:?}", i.rep);
            odd += 1;
        }
    }
    assert!(odd > 0, "the pool must exercise the vanishing branch");
    println!(
        "criterion 4: PASS — rank-one odd case exact on 40 instances (q ∈ {{3,5}}), {odd} with odd val Δ"
    );
}

#[test]
fn criterion_5_duality() {
    for i in core().iter().chain(n3()).chain(bessel()) {
        let d = i.rep.val_delta as usize;
        let mc = &i.rep.m_counts;
        assert_eq!(mc.len(), d + 1);
        for s in 0..=d {
            assert_eq!(
                mc[s],
                mc[d - s],
                "|M_{s}| = |M_{}| fails: {:?}",
                d - s,
                i.rep
            );
        }
    }
    // self-dual lattices sit exactly at the middle colength: verify on the
    // even-val Δ core instances with a nontrivial quotient
    let mut checked = 0;
    for i in core() {
        let d = i.rep.val_delta;
        if d <= 0 || d.rem_euclid(2) != 0 || checked >= 6 {
            continue;
        }
        let inv = invariants_sym(&i.datum).unwrap();
        let alg = build_algebra(&i.datum.zeta.ctx, &inv.a).unwrap();
        let gram = build_gram(&alg, &inv.b_ext[..i.rep.n]).unwrap();
        let fm = build_uni_module(&alg, &gram).unwrap();
        let mut self_dual = 0u64;
        for s in fm.enumerate_stable_submodules(CAP).unwrap() {
            if fm.is_self_dual(&s) {
                assert_eq!(
                    s.dim() as i64,
                    d,
                    "a self-dual lattice away from the middle colength"
                );
                self_dual += 1;
            }
        }
        assert_eq!(self_dual, i.rep.n_lattice);
        checked += 1;
    }
    assert!(
        checked >= 3,
        "need even-val Δ instances to exercise the middle-colength law"
    );
    println!(
        "criterion 5: PASS — |M_i| = |M_(d−i)| on {} instances; self-dual lattices at middle colength on {checked} even-val Δ instances",
        core().len() + n3().len() + bessel().len()
    );
}

#[test]
fn criterion_6_matching_coherence() {
    let mut pairs = 0;
    for (q, count, seed) in [(3u32, 60u32, 61u64), (5, 40, 62)] {
        let ctx = ctx_at(q);
        let mut rng = rng_from_seed(seed);
        for _ in 0..count {
            let (datum, hc, uni, cert) =
                sample_matched_pair(&ctx, Case::FJ, 2, 4, TRIES, &mut rng).unwrap();
            assert!(cert.verified, "certificate must verify entrywise");
            let inv_s = invariants_sym(&datum).unwrap();
            let inv_u = invariants_uni(&uni).unwrap();
            assert_eq!(inv_s.val_delta, inv_u.val_delta);
            assert_eq!(inv_s.parity, inv_u.parity);
            for (k, (a_s, a_u)) in inv_s.a.iter().zip(&inv_u.a).enumerate() {
                certify_ext_eq(a_s, a_u, &format!("matched a_{k}")).unwrap();
            }
            for (k, (b_s, b_u)) in inv_s.b_ext.iter().zip(&inv_u.b_ext).enumerate() {
                certify_ext_eq(b_s, b_u, &format!("matched b_{k}")).unwrap();
            }
            let want_eps = if inv_s.parity == 0 { 1 } else { -1 };
            assert_eq!(hc.epsilon, want_eps, "ε(β) = (−1)^val Δ");

            // round trip: back to the split side, invariants intact
            let (back, cert2) = match_uni_to_sym(&uni).unwrap();
            assert!(cert2.verified);
            let inv_b = invariants_sym(&back).unwrap();
            assert_eq!(inv_b.val_delta, inv_s.val_delta);
            for (k, (b_s, b_b)) in inv_s.b_ext.iter().zip(&inv_b.b_ext).enumerate() {
                certify_ext_eq(b_s, b_b, &format!("round-trip b_{k}")).unwrap();
            }
            pairs += 1;
        }
    }
    assert_eq!(pairs, 100);
    println!("criterion 6: PASS — 100 matched pairs with equal invariant records, ε = (−1)^val Δ, verified round trips");
}

#[test]
fn criterion_7_spectral_identity() {
    let t0 = Instant::now();
    let mut rng = rng_from_seed(777);
    let mut sets = 0;
    for n in 1..=3usize {
        for m in 1..=n {
            for _ in 0..10 {
                let alpha = random_params(n, &mut rng);
                let beta = random_params(m, &mut rng);
                let rep = verify_whittaker(&alpha, &beta, 8).unwrap();
                assert!(
                    rep.holds,
                    "spectral identity failed at n={n}, m={m}, α={alpha:?}, β={beta:?}, order {:?}",
                    rep.first_mismatch
                );
                // the two series are equal as whole objects, not just stage-wise
                assert_eq!(zeta0(&alpha, &beta, 8), lfactor(&alpha, &beta, 8));
                sets += 1;
            }
        }
    }
    let dt = t0.elapsed();
    assert_eq!(sets, 60);
    assert!(dt.as_secs() < 60, "runtime budget exceeded: {dt:.1?}");
    println!("criterion 7: PASS — spectral sum = L-factor to order 8 on 60 parameter sets (m ≤ n ≤ 3), {dt:.1?}");
}

#[test]
fn criterion_8_rank_one_closed_forms() {
    let ctx = ctx_at(3);
    let one = Ext::one(&ctx);
    for d in 0..=5usize {
        let y = parse_ext(&ctx, &format!("pi^{d}")).unwrap();
        let a = vec![one.clone()];
        let b = vec![y.clone()];
        let rep = lattice_counts(&ctx, &a, &b, CAP).unwrap();
        let indicator = u64::from(d % 2 == 0);
        assert_eq!(rep.d, d);
        assert_eq!(rep.m_counts, vec![1u64; d + 1], "|M_i| = 1 along the chain");
        assert_eq!(
            rep.alt_sum, indicator as i64,
            "alternating sum = parity indicator"
        );
        assert_eq!(rep.n_count, indicator, "self-dual count = parity indicator");

        // both oracles against the closed form
        let zeta = Mat::from_fn(&ctx, 1, 1, |_, _| one.clone());
        let x = Mat::from_fn(&ctx, 1, 1, |_, _| one.clone());
        let ym = Mat::from_fn(&ctx, 1, 1, |_, _| y.clone());
        let datum = SymDatum::new(Case::FJ, 1, 0, zeta, Some(x), Some(ym)).unwrap();
        let fl = verify_fl(&datum, CAP).unwrap();
        assert!(fl.fl_holds);
        assert_eq!(fl.sym_direct, indicator as i64);
        assert_eq!(fl.uni_direct, indicator);
    }
    println!("criterion 8: PASS — rank-one closed forms exact for d ∈ {{0..5}}");
}

#[test]
fn criterion_9_bound_stability_and_colength_window() {
    // every reported count is already bound-stable by construction (a B vs
    // B+1 mismatch surfaces as BoundUnstable); verify the window shape and
    // re-run a sample at an enlarged bound
    for i in core() {
        let d = i.sym.d;
        assert_eq!(i.sym.counts_by_len.len(), d + 1);
        assert_eq!(
            i.sym.v_min + i.sym.val_t,
            d as i64,
            "colength window endpoints [val T − val Δ, val T] must match the quotient"
        );
        let recount: i64 = i
            .sym
            .counts_by_len
            .iter()
            .enumerate()
            .map(|(s, &c)| {
                let sgn = if (i.sym.v_min + s as i64).rem_euclid(2) == 0 {
                    1
                } else {
                    -1
                };
                sgn * c as i64
            })
            .sum();
        assert_eq!(recount, i.sym.value);
    }
    for i in core().iter().take(10) {
        let again = orbital_sym(&i.datum, Some(i.sym.bound + 2), CAP).unwrap();
        assert_eq!(
            again.value, i.sym.value,
            "split count must be stable in the bound"
        );
        assert_eq!(again.counts_by_len, i.sym.counts_by_len);
    }
    for i in core().iter().filter(|i| i.rep.val_delta > 0).take(5) {
        let (_, uni, _) = match_sym_to_uni(&i.datum).unwrap();
        let u0 = orbital_uni(&uni, None, CAP).unwrap();
        let u1 = orbital_uni(&uni, Some(u0.bound + 2), CAP).unwrap();
        assert_eq!(
            u0.value, u1.value,
            "unitary count must be stable in the bound"
        );
        assert_eq!(u0.value, i.rep.uni_direct);
    }
    println!(
        "criterion 9: PASS — bound-stable counts, colengths confined to [val T − val Δ, val T] on {} instances",
        core().len()
    );
}
