//! Dense linear algebra over the residue field F_q (q an odd prime).
//!
//! Everything here is exact. Subspaces are kept in reduced row echelon form,
//! which doubles as a canonical fingerprint for deduplication; the closure
//! enumerator below lists all subspaces stable under a set of linear
//! operators (the engine behind the module-lattice counts).

use crate::error::{Error, Result};

/// Dense row-major matrix over F_q.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FqMat {
    pub q: u32,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u32>,
}

fn inv_mod(d: u32, q: u32) -> u32 {
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

impl FqMat {
    pub fn zeros(q: u32, rows: usize, cols: usize) -> FqMat {
        FqMat {
            q,
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(q: u32, n: usize) -> FqMat {
        let mut m = FqMat::zeros(q, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    pub fn from_rows(q: u32, rows: Vec<Vec<u32>>) -> FqMat {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c);
            data.extend(row.into_iter().map(|d| d % q));
        }
        FqMat {
            q,
            rows: r,
            cols: c,
            data,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> u32 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: u32) {
        self.data[i * self.cols + j] = v % self.q;
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Matrix–vector product.
    pub fn apply(&self, v: &[u32]) -> Vec<u32> {
        assert_eq!(v.len(), self.cols);
        let q = self.q as u64;
        (0..self.rows)
            .map(|i| {
                let mut s: u64 = 0;
                for j in 0..self.cols {
                    s += self.at(i, j) as u64 * v[j] as u64;
                }
                (s % q) as u32
            })
            .collect()
    }

    pub fn mul(&self, other: &FqMat) -> FqMat {
        assert_eq!(self.cols, other.rows);
        let q = self.q as u64;
        let mut out = FqMat::zeros(self.q, self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k) as u64;
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    let cur = out.at(i, j) as u64;
                    out.data[i * other.cols + j] = ((cur + a * other.at(k, j) as u64) % q) as u32;
                }
            }
        }
        out
    }

    /// In-place reduction to reduced row echelon form; returns pivot columns.
    pub fn rref(&mut self) -> Vec<usize> {
        let q = self.q;
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let Some(pr) = (r..self.rows).find(|&i| self.at(i, c) != 0) else {
                continue;
            };
            if pr != r {
                for j in 0..self.cols {
                    self.data.swap(r * self.cols + j, pr * self.cols + j);
                }
            }
            let inv = inv_mod(self.at(r, c), q);
            for j in 0..self.cols {
                let v = self.at(r, j) as u64 * inv as u64 % q as u64;
                self.data[r * self.cols + j] = v as u32;
            }
            for i in 0..self.rows {
                if i != r && self.at(i, c) != 0 {
                    let f = self.at(i, c) as u64;
                    for j in 0..self.cols {
                        let v = (self.at(i, j) as u64
                            + (q as u64 - f % q as u64) * self.at(r, j) as u64)
                            % q as u64;
                        self.data[i * self.cols + j] = v as u32;
                    }
                }
            }
            pivots.push(c);
            r += 1;
        }
        self.rows = r;
        self.data.truncate(r * self.cols);
        pivots
    }

    pub fn rank(mut self) -> usize {
        self.rref().len()
    }

    /// Basis of the right kernel {v : Av = 0}.
    pub fn kernel(&self) -> Vec<Vec<u32>> {
        let q = self.q;
        let mut m = self.clone();
        let pivots = m.rref();
        let pivot_set: std::collections::HashSet<usize> = pivots.iter().copied().collect();
        let mut basis = Vec::new();
        for free in 0..self.cols {
            if pivot_set.contains(&free) {
                continue;
            }
            let mut v = vec![0u32; self.cols];
            v[free] = 1;
            for (r, &pc) in pivots.iter().enumerate() {
                let coef = m.at(r, free);
                if coef != 0 {
                    v[pc] = (q - coef) % q;
                }
            }
            basis.push(v);
        }
        basis
    }
}

/// A subspace of F_q^n in canonical (RREF) form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Subspace {
    pub basis: FqMat,
}

impl Subspace {
    pub fn zero(q: u32, ambient: usize) -> Subspace {
        Subspace {
            basis: FqMat::zeros(q, 0, ambient),
        }
    }

    pub fn full(q: u32, ambient: usize) -> Subspace {
        Subspace {
            basis: FqMat::identity(q, ambient),
        }
    }

    pub fn from_vectors(q: u32, ambient: usize, vecs: Vec<Vec<u32>>) -> Subspace {
        let mut m = FqMat::from_rows(q, vecs);
        m.cols = ambient.max(m.cols);
        m.rref();
        Subspace { basis: m }
    }

    pub fn dim(&self) -> usize {
        self.basis.rows
    }

    pub fn ambient(&self) -> usize {
        self.basis.cols
    }

    pub fn contains(&self, v: &[u32]) -> bool {
        // reduce v against the RREF basis
        let q = self.basis.q as u64;
        let mut v = v.to_vec();
        for r in 0..self.basis.rows {
            let pc = (0..self.basis.cols)
                .find(|&j| self.basis.at(r, j) != 0)
                .expect("RREF row nonzero");
            let f = v[pc] as u64;
            if f != 0 {
                for j in 0..self.basis.cols {
                    v[j] = ((v[j] as u64 + (q - f % q) * self.basis.at(r, j) as u64) % q) as u32;
                }
            }
        }
        v.iter().all(|&d| d == 0)
    }

    pub fn is_subspace_of(&self, other: &Subspace) -> bool {
        (0..self.basis.rows).all(|r| other.contains(self.basis.row(r)))
    }

    /// Smallest subspace containing both (their join).
    pub fn join(&self, other: &Subspace) -> Subspace {
        let mut rows: Vec<Vec<u32>> = Vec::with_capacity(self.dim() + other.dim());
        for r in 0..self.basis.rows {
            rows.push(self.basis.row(r).to_vec());
        }
        for r in 0..other.basis.rows {
            rows.push(other.basis.row(r).to_vec());
        }
        Subspace::from_vectors(self.basis.q, self.ambient(), rows)
    }

    /// Intersection via kernels of the stacked dual conditions.
    pub fn intersect(&self, other: &Subspace) -> Subspace {
        // v in both spans: solve with the joint coordinate trick — a vector is
        // in the intersection iff it is orthogonal to both annihilators.
        let a1 = self.annihilator();
        let a2 = other.annihilator();
        let mut rows = Vec::new();
        for r in 0..a1.rows {
            rows.push(a1.row(r).to_vec());
        }
        for r in 0..a2.rows {
            rows.push(a2.row(r).to_vec());
        }
        if rows.is_empty() {
            return Subspace::full(self.basis.q, self.ambient());
        }
        let m = FqMat::from_rows(self.basis.q, rows);
        Subspace::from_vectors(self.basis.q, self.ambient(), m.kernel())
    }

    /// Matrix whose kernel is this subspace (rows span the annihilator of the
    /// span under the standard dot product).
    pub fn annihilator(&self) -> FqMat {
        let mut rows = self.basis.kernel();
        if rows.is_empty() {
            rows.push(vec![0; self.ambient()]);
            let mut m = FqMat::from_rows(self.basis.q, rows);
            m.rows = 0;
            m.data.clear();
            return m;
        }
        FqMat::from_rows(self.basis.q, rows)
    }

    /// Close under the listed operators (matrices ambient×ambient).
    pub fn close_under(&self, ops: &[FqMat]) -> Subspace {
        let mut cur = self.clone();
        loop {
            let mut rows: Vec<Vec<u32>> = (0..cur.basis.rows)
                .map(|r| cur.basis.row(r).to_vec())
                .collect();
            let before = cur.dim();
            for r in 0..cur.basis.rows {
                for op in ops {
                    rows.push(op.apply(cur.basis.row(r)));
                }
            }
            let next = Subspace::from_vectors(self.basis.q, self.ambient(), rows);
            if next.dim() == before {
                return next;
            }
            cur = next;
        }
    }

    pub fn is_stable_under(&self, ops: &[FqMat]) -> bool {
        ops.iter()
            .all(|op| (0..self.basis.rows).all(|r| self.contains(&op.apply(self.basis.row(r)))))
    }
}

/// Iterate all vectors of F_q^n (q^n of them) in lexicographic order.
pub struct VecIter {
    q: u32,
    cur: Vec<u32>,
    done: bool,
}

pub fn all_vectors(q: u32, n: usize) -> VecIter {
    VecIter {
        q,
        cur: vec![0; n],
        done: false,
    }
}

impl Iterator for VecIter {
    type Item = Vec<u32>;
    fn next(&mut self) -> Option<Vec<u32>> {
        if self.done {
            return None;
        }
        let out = self.cur.clone();
        let mut i = 0;
        loop {
            if i == self.cur.len() {
                self.done = true;
                break;
            }
            self.cur[i] += 1;
            if self.cur[i] < self.q {
                break;
            }
            self.cur[i] = 0;
            i += 1;
        }
        Some(out)
    }
}

/// All subspaces of F_q^n stable under every operator in `ops`.
///
/// Strategy: collect the distinct operator-closures of single vectors
/// (cyclic submodules), then close the set under joins — every stable
/// subspace is a join of cyclic ones. The cap bounds both the ambient
/// element count and the number of stable subspaces.
pub fn all_stable_subspaces(q: u32, n: usize, ops: &[FqMat], cap: u64) -> Result<Vec<Subspace>> {
    let total = (q as u128).pow(n as u32);
    if total > cap as u128 {
        return Err(Error::CapExceeded { needed: total, cap });
    }
    // distinct cyclic closures (projective representatives suffice)
    let mut cyclic: Vec<Subspace> = Vec::new();
    let mut seen: std::collections::HashSet<Subspace> = std::collections::HashSet::new();
    for v in all_vectors(q, n) {
        // normalize: first nonzero coordinate = 1 (scalar multiples span alike)
        match v.iter().find(|&&d| d != 0) {
            None => continue,
            Some(&lead) if lead != 1 => continue,
            _ => {}
        }
        let s = Subspace::from_vectors(q, n, vec![v]).close_under(ops);
        if seen.insert(s.clone()) {
            cyclic.push(s);
        }
    }
    // joins, breadth-first
    let mut out: Vec<Subspace> = vec![Subspace::zero(q, n)];
    let mut known: std::collections::HashSet<Subspace> = out.iter().cloned().collect();
    let mut frontier = out.clone();
    while let Some(s) = frontier.pop() {
        for c in &cyclic {
            if c.is_subspace_of(&s) {
                continue;
            }
            let t = s.join(c);
            if known.insert(t.clone()) {
                if known.len() as u64 > cap {
                    return Err(Error::CapExceeded {
                        needed: known.len() as u128,
                        cap,
                    });
                }
                out.push(t.clone());
                frontier.push(t);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rref_and_kernel() {
        let m = FqMat::from_rows(3, vec![vec![1, 2, 0], vec![0, 1, 1]]);
        assert_eq!(m.clone().rank(), 2);
        let k = m.kernel();
        assert_eq!(k.len(), 1);
        assert_eq!(k[0], vec![2, 2, 1]);
        assert_eq!(m.apply(&k[0]), vec![0, 0]);
    }

    #[test]
    fn subspace_canonical_join() {
        let a = Subspace::from_vectors(3, 3, vec![vec![1, 1, 0]]);
        let b = Subspace::from_vectors(3, 3, vec![vec![2, 2, 0]]);
        assert_eq!(a, b, "scalar multiples span the same line");
        let c = Subspace::from_vectors(3, 3, vec![vec![0, 0, 1]]);
        let j = a.join(&c);
        assert_eq!(j.dim(), 2);
        assert!(a.is_subspace_of(&j) && c.is_subspace_of(&j));
    }

    #[test]
    fn stable_subspace_counts_match_classical_formulas() {
        // identity operator: all subspaces of F_3^2 → 0, 4 lines, full = 6
        let id = FqMat::identity(3, 2);
        let all = all_stable_subspaces(3, 2, std::slice::from_ref(&id), 1 << 16).unwrap();
        assert_eq!(all.len(), 6);
        // non-split semisimple operator on F_3^2: x^2 - x - 1 irreducible
        let t = FqMat::from_rows(3, vec![vec![0, 1], vec![1, 1]]);
        let st = all_stable_subspaces(3, 2, &[t], 1 << 16).unwrap();
        assert_eq!(st.len(), 2, "only 0 and the full space");
    }

    #[test]
    fn cap_is_enforced() {
        let id = FqMat::identity(3, 12);
        let err = all_stable_subspaces(3, 12, &[id], 1 << 16).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { .. }));
    }

    #[test]
    fn intersect_meets_join() {
        let a = Subspace::from_vectors(5, 3, vec![vec![1, 0, 0], vec![0, 1, 0]]);
        let b = Subspace::from_vectors(5, 3, vec![vec![0, 1, 0], vec![0, 0, 1]]);
        let i = a.intersect(&b);
        assert_eq!(i.dim(), 1);
        assert!(i.contains(&[0, 1, 0]));
    }
}
