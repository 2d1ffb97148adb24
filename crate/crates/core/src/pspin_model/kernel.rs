//! Packed symmetrised tensor for batched evaluation.
//!
//! Rows are the non-decreasing `(p-1)`-tuples in lexicographic order and the
//! last axis is kept whole, so the packed array has `C(N+p-2, p-1) * N`
//! entries. One matrix product contracts the last axis against every
//! replica; the per-replica local matrix `S[x^{p-2}, ., .]` is then gathered
//! through `unpack`.

use super::{check_budget, CouplingTensor, LocalJet, SpherePoint};
use crate::linalg::{contract_axis, gemm};
use crate::Result;

#[derive(Debug, Clone)]
pub struct SymmetricKernel {
    p: usize,
    n: usize,
    scale: f64,
    rows: usize,
    packed: Vec<f64>,
    unpack: Vec<u32>,
}

fn sorted_tuples(n: usize, len: usize) -> Vec<usize> {
    let mut out = Vec::new();
    if len == 0 {
        return out;
    }
    let mut t = vec![0usize; len];
    loop {
        out.extend_from_slice(&t);
        let mut k = len;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if t[k] + 1 < n {
                t[k] += 1;
                let v = t[k];
                for s in t.iter_mut().skip(k + 1) {
                    *s = v;
                }
                break;
            }
        }
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for sub in permutations(k - 1) {
        for pos in 0..=sub.len() {
            let mut v = sub.clone();
            v.insert(pos, k - 1);
            out.push(v);
        }
    }
    out
}

impl SymmetricKernel {
    pub fn new(model: &CouplingTensor) -> Result<Self> {
        let (p, n) = (model.p(), model.n());
        let m = p - 1;
        let tuples = sorted_tuples(n, m);
        let rows = tuples.len() / m;
        let bytes = (rows as u128) * (n as u128) * 8 + (n as u128).pow(m as u32) * 4;
        check_budget(format!("packed symmetric tensor ({rows} x {n})"), bytes, model.budget())?;

        let j = model.entries();
        let pow: Vec<usize> = (0..p).map(|a| n.pow((p - 1 - a) as u32)).collect();
        let perms = permutations(p);
        let inv = 1.0 / perms.len() as f64;
        let mut packed = vec![0.0; rows * n];
        let mut idx = vec![0usize; p];
        for (r, t) in tuples.chunks_exact(m).enumerate() {
            idx[..m].copy_from_slice(t);
            let dst = &mut packed[r * n..(r + 1) * n];
            for sigma in &perms {
                // position a of the permuted index reads idx[sigma[a]]; slot m is the free k
                let mut base = 0;
                let mut stride = 0;
                for (a, &s) in sigma.iter().enumerate() {
                    if s == m {
                        stride = pow[a];
                    } else {
                        base += idx[s] * pow[a];
                    }
                }
                for (k, d) in dst.iter_mut().enumerate() {
                    *d += j[base + k * stride];
                }
            }
            dst.iter_mut().for_each(|d| *d *= inv);
        }

        let mpow: Vec<usize> = (0..m).map(|a| n.pow((m - 1 - a) as u32)).collect();
        let mut unpack = vec![0u32; n.pow(m as u32)];
        let mperms = permutations(m);
        for (r, t) in tuples.chunks_exact(m).enumerate() {
            for tau in &mperms {
                let flat: usize = tau.iter().enumerate().map(|(a, &s)| t[s] * mpow[a]).sum();
                unpack[flat] = r as u32;
            }
        }
        Ok(Self { p, n, scale: model.scale(), rows, packed, unpack })
    }

    pub fn p(&self) -> usize {
        self.p
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Contracts the last axis against every replica. `xs` holds `R` points
    /// back to back; `work` receives `R x rows` values (replica-major).
    pub fn contract_last(&self, xs: &[f64], work: &mut Vec<f64>) {
        let r = xs.len() / self.n;
        assert_eq!(r * self.n, xs.len());
        if self.p == 2 {
            work.clear();
            return;
        }
        work.resize(r * self.rows, 0.0);
        // work (R x rows) = X (R x n) * packed^T (n x rows)
        gemm(r, self.n, self.rows, xs, self.n, 1, &self.packed, 1, self.n, work);
    }

    /// Local matrix `S[x^{p-2}, ., .]` for replica `r` after [`Self::contract_last`].
    pub fn local_matrix(&self, work: &[f64], r: usize, x: &[f64], out: &mut Vec<f64>) {
        let n = self.n;
        out.resize(n * n, 0.0);
        match self.p {
            2 => out.copy_from_slice(&self.packed),
            3 => {
                let col = &work[r * self.rows..(r + 1) * self.rows];
                for (o, &u) in out.iter_mut().zip(&self.unpack) {
                    *o = col[u as usize];
                }
            }
            _ => {
                let col = &work[r * self.rows..(r + 1) * self.rows];
                let t: Vec<f64> = self.unpack.iter().map(|&u| col[u as usize]).collect();
                let mut cur = t;
                for _ in 0..(self.p - 3) {
                    let inner = cur.len() / n;
                    cur = contract_axis(&cur, 1, n, inner, x);
                }
                out.copy_from_slice(&cur);
            }
        }
    }

    /// Jets for a batch of points stored back to back.
    pub fn jets(&self, xs: &[f64]) -> Vec<LocalJet> {
        let mut work = Vec::new();
        self.contract_last(xs, &mut work);
        let mut m = Vec::new();
        xs.chunks_exact(self.n)
            .enumerate()
            .map(|(r, x)| {
                self.local_matrix(&work, r, x, &mut m);
                LocalJet::from_local_matrix(self.p, self.scale, x, m.clone())
            })
            .collect()
    }

    pub fn jet(&self, x: &SpherePoint) -> LocalJet {
        self.jets(x.coords()).pop().expect("one replica")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_tuples_count() {
        assert_eq!(sorted_tuples(4, 2).len() / 2, 10);
        assert_eq!(sorted_tuples(5, 3).len() / 3, 35);
        assert_eq!(sorted_tuples(3, 1), vec![0, 1, 2]);
    }

    #[test]
    fn permutation_count() {
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(permutations(4).len(), 24);
    }
}
