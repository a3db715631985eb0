//! Sparse operator kernels for the integration hot loop.
//!
//! The joint-space generator decomposes into a diagonal Hamiltonian +
//! anticommutator part (one fused elementwise pass), a handful of off-diagonal
//! Hamiltonian terms with O(d) nonzeros, and jump-operator sandwiches that are
//! local to the system block. Everything here works on the column-major raw
//! storage of a square complex matrix and costs O(nnz * d) or O(d^2) per pass
//! instead of the O(d^3) of dense products.
//!
//! Each parallel path assigns every output element to exactly one worker and
//! applies additions in the same order as the sequential path, so results are
//! bit-identical either way.

use crate::exec;
use crate::qmath::{C64, QOperator};

/// Minimum number of matrix elements before the parallel paths engage.
const PAR_MIN_ELEMS: usize = 1 << 15;

/// Square sparse operator on the joint space, COO entries kept in two
/// orderings: by (row, col) for left products and grouped by column for right
/// products.
#[derive(Clone, Debug)]
pub struct SparseOp {
    dim: usize,
    entries: Vec<(u32, u32, C64)>,
    /// Entry indices grouped by column: (col, range into `by_col_entries`).
    col_groups: Vec<(u32, usize, usize)>,
    by_col_entries: Vec<(u32, C64)>,
}

impl SparseOp {
    pub fn from_entries(dim: usize, mut entries: Vec<(u32, u32, C64)>) -> Self {
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut by_col = entries.clone();
        by_col.sort_by_key(|&(r, c, _)| (c, r));
        let mut col_groups = Vec::new();
        let mut by_col_entries = Vec::with_capacity(by_col.len());
        let mut i = 0;
        while i < by_col.len() {
            let col = by_col[i].1;
            let start = by_col_entries.len();
            while i < by_col.len() && by_col[i].1 == col {
                by_col_entries.push((by_col[i].0, by_col[i].2));
                i += 1;
            }
            col_groups.push((col, start, by_col_entries.len()));
        }
        Self {
            dim,
            entries,
            col_groups,
            by_col_entries,
        }
    }

    /// Extracts entries with modulus above `drop_rel * max_entry`. A zero
    /// threshold keeps every exact nonzero.
    pub fn from_qoperator(op: &QOperator, drop_rel: f64) -> Self {
        let d = op.dim();
        let maxabs = op.max_norm();
        let thr2 = if maxabs == 0.0 {
            f64::INFINITY
        } else {
            let t = drop_rel * maxabs;
            t * t
        };
        let mut entries = Vec::new();
        for col in 0..d {
            for row in 0..d {
                let v = op.data()[(row, col)];
                let keep = if drop_rel == 0.0 {
                    v != C64::new(0.0, 0.0)
                } else {
                    v.norm_sqr() > thr2
                };
                if keep {
                    entries.push((row as u32, col as u32, v));
                }
            }
        }
        Self::from_entries(d, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn adjoint(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|&(r, c, v)| (c, r, v.conj()))
            .collect();
        Self::from_entries(self.dim, entries)
    }

    /// out += scale * S * rho
    pub fn apply_left_acc(&self, scale: C64, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        debug_assert_eq!(rho.len(), d * d);
        debug_assert_eq!(out.len(), d * d);
        let body = |jcol: usize, col_out: &mut [C64], col_in: &[C64]| {
            let _ = jcol;
            for &(r, c, v) in &self.entries {
                col_out[r as usize] += scale * v * col_in[c as usize];
            }
        };
        #[cfg(feature = "parallel")]
        if exec::parallel_enabled() && d * d >= PAR_MIN_ELEMS {
            use rayon::prelude::*;
            out.par_chunks_mut(d)
                .enumerate()
                .for_each(|(j, col_out)| body(j, col_out, &rho[j * d..(j + 1) * d]));
            return;
        }
        for j in 0..d {
            let (a, b) = (j * d, (j + 1) * d);
            // Split borrows: out column j, rho column j.
            body(j, &mut out[a..b], &rho[a..b]);
        }
    }

    /// out += scale * rho * S
    pub fn apply_right_acc(&self, scale: C64, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        debug_assert_eq!(rho.len(), d * d);
        debug_assert_eq!(out.len(), d * d);
        let body = |col: u32, start: usize, end: usize, out_col: &mut [C64]| {
            let _ = col;
            for &(r, v) in &self.by_col_entries[start..end] {
                let s = scale * v;
                let x = &rho[r as usize * d..r as usize * d + d];
                for (yo, xi) in out_col.iter_mut().zip(x) {
                    *yo += s * *xi;
                }
            }
        };
        #[cfg(feature = "parallel")]
        if exec::parallel_enabled() && d * d >= PAR_MIN_ELEMS && self.col_groups.len() > 1 {
            use rayon::prelude::*;
            // Column groups touch disjoint output columns.
            let out_ptr = SendPtr(out.as_mut_ptr());
            self.col_groups.par_iter().for_each(|&(col, start, end)| {
                let out_col = unsafe {
                    std::slice::from_raw_parts_mut(out_ptr.get().add(col as usize * d), d)
                };
                body(col, start, end, out_col);
            });
            return;
        }
        for &(col, start, end) in &self.col_groups {
            let a = col as usize * d;
            body(col, start, end, &mut out[a..a + d]);
        }
    }

    /// out += scale * (S rho - rho S), the building block of -i[H, rho].
    pub fn commutator_acc(&self, scale: C64, rho: &[C64], out: &mut [C64]) {
        self.apply_left_acc(scale, rho, out);
        self.apply_right_acc(-scale, rho, out);
    }

    /// Dense reconstruction, for tests and assembly-time checks.
    pub fn to_dense(&self, dims: &[usize]) -> QOperator {
        let mut out = QOperator::zeros(dims);
        for &(r, c, v) in &self.entries {
            out.data_mut()[(r as usize, c as usize)] += v;
        }
        out
    }
}

/// Wrapper making a raw pointer Send for the column-disjoint parallel writes.
#[cfg(feature = "parallel")]
struct SendPtr(*mut C64);
#[cfg(feature = "parallel")]
unsafe impl Send for SendPtr {}
#[cfg(feature = "parallel")]
unsafe impl Sync for SendPtr {}
#[cfg(feature = "parallel")]
impl SendPtr {
    fn get(&self) -> *mut C64 {
        self.0
    }
}

/// Jump-operator sandwich out += rate * (A x I_B) rho (A x I_B)^dag for an
/// operator A living on the leading (system) block of the factor layout.
/// Working block-wise keeps the cost at nnz(A)^2 * db^2 contiguous updates,
/// with db the total bath dimension.
#[derive(Clone, Debug)]
pub struct SandwichOp {
    /// Joint dimension.
    dim: usize,
    /// Bath-block dimension (joint = system * bath, system most significant).
    db: usize,
    /// Entries of A in system indices.
    entries: Vec<(u32, u32, C64)>,
    /// Entries grouped by row index of A (disjoint output column blocks).
    row_groups: Vec<(u32, Vec<(u32, C64)>)>,
}

impl SandwichOp {
    pub fn new(sys_op: &QOperator, db: usize, drop_rel: f64) -> Self {
        let ds = sys_op.dim();
        let dim = ds * db;
        let maxabs = sys_op.max_norm();
        let thr2 = if maxabs == 0.0 {
            f64::INFINITY
        } else {
            let t = drop_rel * maxabs;
            t * t
        };
        let mut entries = Vec::new();
        for col in 0..ds {
            for row in 0..ds {
                let v = sys_op.data()[(row, col)];
                let keep = if drop_rel == 0.0 {
                    v != C64::new(0.0, 0.0)
                } else {
                    v.norm_sqr() > thr2
                };
                if keep {
                    entries.push((row as u32, col as u32, v));
                }
            }
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_groups: Vec<(u32, Vec<(u32, C64)>)> = Vec::new();
        for &(r, c, v) in &entries {
            match row_groups.last_mut() {
                Some((rr, list)) if *rr == r => list.push((c, v)),
                _ => row_groups.push((r, vec![(c, v)])),
            }
        }
        Self {
            dim,
            db,
            entries,
            row_groups,
        }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// out += rate * L rho L^dag with L = A x I_B.
    pub fn apply_acc(&self, rate: f64, rho: &[C64], out: &mut [C64]) {
        let (d, db) = (self.dim, self.db);
        debug_assert_eq!(rho.len(), d * d);
        debug_assert_eq!(out.len(), d * d);
        let scale = C64::new(rate, 0.0);
        let body = |a2: u32, ents2: &[(u32, C64)], out: &mut [C64], out_base: usize| {
            // `out` here is the full slice or the column block for row a2;
            // out_base is the offset already removed from column indices.
            for &(c2, v2) in ents2 {
                for &(a1, b1, v1) in &self.entries {
                    let s = scale * v1 * v2.conj();
                    for t2 in 0..db {
                        let oc = (a2 as usize * db + t2) * d + a1 as usize * db - out_base;
                        let ic = (c2 as usize * db + t2) * d + b1 as usize * db;
                        let dst = &mut out[oc..oc + db];
                        let src = &rho[ic..ic + db];
                        for (y, x) in dst.iter_mut().zip(src) {
                            *y += s * *x;
                        }
                    }
                }
            }
        };
        #[cfg(feature = "parallel")]
        if exec::parallel_enabled() && d * d >= PAR_MIN_ELEMS && self.row_groups.len() > 1 {
            use rayon::prelude::*;
            let out_ptr = SendPtr(out.as_mut_ptr());
            self.row_groups.par_iter().for_each(|(a2, ents2)| {
                // Row group a2 writes only columns [a2*db, (a2+1)*db).
                let base = *a2 as usize * db * d;
                let block =
                    unsafe { std::slice::from_raw_parts_mut(out_ptr.get().add(base), db * d) };
                body(*a2, ents2, block, base);
            });
            return;
        }
        for (a2, ents2) in &self.row_groups {
            body(*a2, ents2, out, 0);
        }
    }
}

// Slice kernels for the integrator bookkeeping.

pub fn fill_zero(out: &mut [C64]) {
    for z in out.iter_mut() {
        *z = C64::new(0.0, 0.0);
    }
}

/// dst = base + a * k, single fused pass.
pub fn copy_add_scaled(dst: &mut [C64], base: &[C64], a: f64, k: &[C64]) {
    let body = |dst: &mut [C64], base: &[C64], k: &[C64]| {
        for ((d, b), x) in dst.iter_mut().zip(base).zip(k) {
            *d = *b + a * *x;
        }
    };
    #[cfg(feature = "parallel")]
    if exec::parallel_enabled() && dst.len() >= PAR_MIN_ELEMS {
        use rayon::prelude::*;
        const CHUNK: usize = 1 << 13;
        dst.par_chunks_mut(CHUNK)
            .zip(base.par_chunks(CHUNK).zip(k.par_chunks(CHUNK)))
            .for_each(|(d, (b, x))| body(d, b, x));
        return;
    }
    body(dst, base, k);
}

/// dst += a * k.
pub fn axpy_real(dst: &mut [C64], a: f64, k: &[C64]) {
    let body = |dst: &mut [C64], k: &[C64]| {
        for (d, x) in dst.iter_mut().zip(k) {
            *d += a * *x;
        }
    };
    #[cfg(feature = "parallel")]
    if exec::parallel_enabled() && dst.len() >= PAR_MIN_ELEMS {
        use rayon::prelude::*;
        const CHUNK: usize = 1 << 13;
        dst.par_chunks_mut(CHUNK)
            .zip(k.par_chunks(CHUNK))
            .for_each(|(d, x)| body(d, x));
        return;
    }
    body(dst, k);
}

/// Elementwise out = coeff(i, j) * rho with
/// coeff(i, j) = -i (h_i - h_j) - (k_i + k_j) / 2
/// computed on the fly from the Hamiltonian diagonal h and the folded
/// anticommutator diagonal k. This is the fused diagonal part of the GKSL
/// right-hand side.
pub fn diag_generator_assign(out: &mut [C64], rho: &[C64], h: &[f64], k: &[f64]) {
    let d = h.len();
    debug_assert_eq!(k.len(), d);
    debug_assert_eq!(out.len(), d * d);
    let body = |j: usize, out_col: &mut [C64], rho_col: &[C64]| {
        let (hj, kj) = (h[j], k[j]);
        for i in 0..d {
            let cij = C64::new(-0.5 * (k[i] + kj), -(h[i] - hj));
            out_col[i] = cij * rho_col[i];
        }
    };
    #[cfg(feature = "parallel")]
    if exec::parallel_enabled() && d * d >= PAR_MIN_ELEMS {
        use rayon::prelude::*;
        out.par_chunks_mut(d)
            .enumerate()
            .for_each(|(j, col)| body(j, col, &rho[j * d..(j + 1) * d]));
        return;
    }
    for j in 0..d {
        let (a, b) = (j * d, (j + 1) * d);
        body(j, &mut out[a..b], &rho[a..b]);
    }
}

/// rho = (rho + rho^dag) / 2 in place; returns the (real) trace before any
/// renormalization.
pub fn hermitize_and_trace(rho: &mut [C64], d: usize) -> f64 {
    debug_assert_eq!(rho.len(), d * d);
    let mut trace = 0.0;
    for j in 0..d {
        let jd = j * d;
        let diag = rho[jd + j];
        let dv = C64::new(diag.re, 0.0);
        rho[jd + j] = dv;
        trace += diag.re;
        for i in (j + 1)..d {
            let a = rho[jd + i];
            let b = rho[i * d + j];
            let m = C64::new(0.5 * (a.re + b.re), 0.5 * (a.im - b.im));
            rho[jd + i] = m;
            rho[i * d + j] = m.conj();
        }
    }
    trace
}

pub fn scale_real(rho: &mut [C64], s: f64) {
    for z in rho.iter_mut() {
        *z *= s;
    }
}
