//! Sparse real-symmetric operators with scalar time envelopes.
//!
//! All model Hamiltonians decompose as `H(t) = H_static + sum_k f_k(t) V_k`
//! where every matrix is real symmetric and every `f_k` is a real scalar
//! envelope. Matrices are stored in CSR with `f64` entries; they act on
//! `Complex64` state vectors by scaling real and imaginary parts
//! independently, which keeps the hot matvec loop in real arithmetic.

use num_complex::Complex64;

use crate::fock::BasisLayout;

/// Compressed sparse row matrix over `f64`, square, zero-based indices.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from unsorted triplets, summing duplicates and
    /// dropping entries that cancel to exactly zero.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Self {
        assert!(dim <= u32::MAX as usize, "dimension exceeds u32 column index range");
        let mut counts = vec![0usize; dim + 1];
        for &(r, c, _) in triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside dim {dim}");
            counts[r + 1] += 1;
        }
        for i in 0..dim {
            counts[i + 1] += counts[i];
        }
        // Bucket by row, then sort each row by column and merge duplicates.
        let mut cols = vec![0u32; triplets.len()];
        let mut vals = vec![0f64; triplets.len()];
        let mut fill = counts.clone();
        for &(r, c, v) in triplets {
            let slot = fill[r];
            cols[slot] = c as u32;
            vals[slot] = v;
            fill[r] += 1;
        }
        let mut out_row_ptr = vec![0usize; dim + 1];
        let mut out_cols = Vec::with_capacity(triplets.len());
        let mut out_vals = Vec::with_capacity(triplets.len());
        let mut scratch: Vec<(u32, f64)> = Vec::new();
        for r in 0..dim {
            scratch.clear();
            scratch.extend(
                cols[counts[r]..counts[r + 1]]
                    .iter()
                    .copied()
                    .zip(vals[counts[r]..counts[r + 1]].iter().copied()),
            );
            scratch.sort_unstable_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < scratch.len() {
                let c = scratch[i].0;
                let mut v = scratch[i].1;
                i += 1;
                while i < scratch.len() && scratch[i].0 == c {
                    v += scratch[i].1;
                    i += 1;
                }
                if v != 0.0 {
                    out_cols.push(c);
                    out_vals.push(v);
                }
            }
            out_row_ptr[r + 1] = out_cols.len();
        }
        CsrMatrix { dim, row_ptr: out_row_ptr, cols: out_cols, vals: out_vals }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `y += scale * A x` over complex vectors.
    pub fn apply_add(&self, scale: f64, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        if scale == 0.0 {
            return;
        }
        for r in 0..self.dim {
            let mut acc_re = 0.0;
            let mut acc_im = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let xv = x[self.cols[k] as usize];
                let a = self.vals[k];
                acc_re += a * xv.re;
                acc_im += a * xv.im;
            }
            y[r].re += scale * acc_re;
            y[r].im += scale * acc_im;
        }
    }

    /// `y += scale * A x` over real vectors.
    pub fn apply_add_real(&self, scale: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        if scale == 0.0 {
            return;
        }
        for r in 0..self.dim {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            y[r] += scale * acc;
        }
    }

    /// Real expectation value `Re <x| A |x>` of a symmetric matrix.
    pub fn expectation(&self, x: &[Complex64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut acc = 0.0;
        for r in 0..self.dim {
            let xr = x[r];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let xc = x[self.cols[k] as usize];
                // Re(conj(xr) * xc)
                acc += self.vals[k] * (xr.re * xc.re + xr.im * xc.im);
            }
        }
        acc
    }

    /// Densifies into a row-major `dim x dim` array.
    pub fn to_dense(&self) -> ndarray::Array2<f64> {
        let mut out = ndarray::Array2::zeros((self.dim, self.dim));
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[[r, self.cols[k] as usize]] += self.vals[k];
            }
        }
        out
    }

    /// Largest `|A_ij - A_ji|` over all stored entries; zero for an exactly
    /// symmetric matrix.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k] as usize;
                let transposed = self.get(c, r);
                worst = worst.max((self.vals[k] - transposed).abs());
            }
        }
        worst
    }

    /// Stored value at `(r, c)`, zero when absent.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[range.clone()].binary_search(&(c as u32)) {
            Ok(pos) => self.vals[range.start + pos],
            Err(_) => 0.0,
        }
    }

    /// Iterates stored entries as `(row, col, value)`.
    pub fn iter_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(move |k| (r, self.cols[k] as usize, self.vals[k]))
        })
    }
}

/// Scalar time-dependence attached to one sparse term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Envelope {
    Constant(f64),
    /// `amplitude * exp(-rate * t)`.
    ExpDecay { amplitude: f64, rate: f64 },
    /// `amplitude * cos(omega * t)`.
    Cosine { amplitude: f64, omega: f64 },
}

impl Envelope {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Envelope::Constant(a) => a,
            Envelope::ExpDecay { amplitude, rate } => amplitude * (-rate * t).exp(),
            Envelope::Cosine { amplitude, omega } => amplitude * (omega * t).cos(),
        }
    }
}

/// A real-symmetric operator `H(t) = H_static + sum_k f_k(t) V_k` over a
/// tensor-product basis.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub layout: BasisLayout,
    pub static_part: CsrMatrix,
    pub envelope_terms: Vec<(CsrMatrix, Envelope)>,
}

impl OperatorMatrix {
    pub fn time_independent(layout: BasisLayout, static_part: CsrMatrix) -> Self {
        OperatorMatrix { layout, static_part, envelope_terms: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.static_part.dim()
    }

    /// `y = H(t) x`.
    pub fn apply(&self, t: f64, x: &[Complex64], y: &mut [Complex64]) {
        y.fill(Complex64::new(0.0, 0.0));
        self.static_part.apply_add(1.0, x, y);
        for (term, env) in &self.envelope_terms {
            term.apply_add(env.value(t), x, y);
        }
    }

    /// `y = (H_static + sum_k c_k V_k) x` with caller-chosen coefficients,
    /// one per envelope term. Used when envelopes depend on trajectory state
    /// rather than on time alone.
    pub fn apply_with_coefficients(&self, coeffs: &[f64], x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(coeffs.len(), self.envelope_terms.len());
        y.fill(Complex64::new(0.0, 0.0));
        self.static_part.apply_add(1.0, x, y);
        for ((term, _), &c) in self.envelope_terms.iter().zip(coeffs) {
            term.apply_add(c, x, y);
        }
    }

    /// Single element of `H(t)` without materializing anything.
    pub fn entry(&self, t: f64, r: usize, c: usize) -> f64 {
        let mut v = self.static_part.get(r, c);
        for (term, env) in &self.envelope_terms {
            v += env.value(t) * term.get(r, c);
        }
        v
    }

    /// Dense snapshot of `H(t)`.
    pub fn materialize(&self, t: f64) -> ndarray::Array2<f64> {
        let mut out = self.static_part.to_dense();
        for (term, env) in &self.envelope_terms {
            let f = env.value(t);
            if f == 0.0 {
                continue;
            }
            for (r, c, v) in term.iter_entries() {
                out[[r, c]] += f * v;
            }
        }
        out
    }

    /// Worst asymmetry across the static part and every envelope term.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = self.static_part.max_asymmetry();
        for (term, _) in &self.envelope_terms {
            worst = worst.max(term.max_asymmetry());
        }
        worst
    }

    /// Crude upper bound on the spectral norm of `H(t)` via the max row sum
    /// of absolute values, maximizing each envelope over `|f| <= |amplitude|`.
    pub fn norm_bound(&self) -> f64 {
        let mut row_sums = vec![0.0f64; self.dim()];
        let mut add = |m: &CsrMatrix, w: f64| {
            for (r, _, v) in m.iter_entries() {
                row_sums[r] += w * v.abs();
            }
        };
        add(&self.static_part, 1.0);
        for (term, env) in &self.envelope_terms {
            let amp = match *env {
                Envelope::Constant(a) => a.abs(),
                Envelope::ExpDecay { amplitude, .. } => amplitude.abs(),
                Envelope::Cosine { amplitude, .. } => amplitude.abs(),
            };
            add(term, amp);
        }
        row_sums.iter().fold(0.0, |a, &b| a.max(b))
    }
}

/// Expands a product of per-factor operators to triplets on the full tensor
/// space. `dims` lists every factor dimension in layout order; `ops` holds
/// `(factor_index, entries)` pairs for the factors that act nontrivially,
/// each `entries` being local `(row, col, value)` triplets. Factors not
/// listed act as identity. Flat indices are row-major with the last factor
/// fastest.
pub fn kron_triplets(
    dims: &[usize],
    ops: &[(usize, &[(usize, usize, f64)])],
) -> Vec<(usize, usize, f64)> {
    let n = dims.len();
    let mut strides = vec![1usize; n];
    for i in (0..n.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    for &(f, _) in ops {
        assert!(f < n, "factor index {f} out of range");
    }
    let mut active = std::collections::HashSet::new();
    for &(f, _) in ops {
        assert!(active.insert(f), "factor {f} listed twice");
    }

    // Start from the scalar identity and expand one active factor at a time,
    // then fan out over identity factors by offsetting flat indices.
    let mut partial: Vec<(usize, usize, f64)> = vec![(0, 0, 1.0)];
    for &(f, entries) in ops {
        let stride = strides[f];
        let mut next = Vec::with_capacity(partial.len() * entries.len());
        for &(pr, pc, pv) in &partial {
            for &(r, c, v) in entries {
                assert!(r < dims[f] && c < dims[f], "entry ({r}, {c}) outside factor dim {}", dims[f]);
                next.push((pr + r * stride, pc + c * stride, pv * v));
            }
        }
        partial = next;
    }

    // Enumerate all joint states of the identity factors.
    let idle: Vec<usize> = (0..n).filter(|f| !active.contains(f)).collect();
    let mut offsets = vec![0usize];
    for &f in &idle {
        let mut next = Vec::with_capacity(offsets.len() * dims[f]);
        for &base in &offsets {
            for i in 0..dims[f] {
                next.push(base + i * strides[f]);
            }
        }
        offsets = next;
    }

    let mut out = Vec::with_capacity(partial.len() * offsets.len());
    for &off in &offsets {
        for &(r, c, v) in &partial {
            out.push((r + off, c + off, v));
        }
    }
    out
}

/// Local triplets for the number operator `diag(0, 1, ..., dim-1)`.
pub fn number_operator(dim: usize) -> Vec<(usize, usize, f64)> {
    (1..dim).map(|n| (n, n, n as f64)).collect()
}

/// Local triplets for the position quadrature `a^dag + a` on a truncated
/// ladder: entries `sqrt(n)` on both off-diagonals.
pub fn ladder_quadrature(dim: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(2 * dim.saturating_sub(1));
    for n in 1..dim {
        let v = (n as f64).sqrt();
        out.push((n - 1, n, v));
        out.push((n, n - 1, v));
    }
    out
}
