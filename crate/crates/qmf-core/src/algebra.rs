//! Dense complex linear algebra on tensor products of d-dimensional site
//! spaces: configuration bases, embeddings, normalized partial traces,
//! Hermitian matrix exponentials.
//!
//! # Conventions
//!
//! * A value lives on an ordered `support`: a list of distinct vertices in
//!   the canonical (level, lexicographic) order from [`crate::graph`].
//! * Configurations assign a 1-based value in {1, ..., d} to each site.
//!   They are encoded as mixed-radix integers in support order with the
//!   **last site varying fastest**: site p of m carries weight d^(m-1-p).
//! * The normalized trace of the identity is 1; the normalized partial
//!   trace divides by the dimension of the traced factor.
//! * Inner products are conjugate-linear in the first slot.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::Vertex;

/// Practical cap on dense state-vector dimension (16 qubit-sized sites).
pub const MAX_VECTOR_DIM: usize = 1 << 16;
/// Practical cap on dense operator dimension (9 qubit-sized sites).
pub const MAX_OPERATOR_DIM: usize = 1 << 9;

/// Default tolerance for operator equality checks.
pub const TOL_EQ: f64 = 1e-10;
/// Default tolerance for trace identities.
pub const TOL_TRACE: f64 = 1e-12;

fn checked_dim(d: usize, sites: usize, cap: usize) -> Result<usize> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!(
            "site dimension d = {d} must be >= 2"
        )));
    }
    let mut dim = 1usize;
    for _ in 0..sites {
        dim = dim.saturating_mul(d);
        if dim > cap {
            return Err(Error::DimensionCap { dim, cap });
        }
    }
    Ok(dim)
}

fn check_support(support: &[Vertex]) -> Result<()> {
    for w in support.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::SupportMismatch(format!(
                "support must be sorted and duplicate-free; found {} before {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Positions of `sub` inside `sup`; fails unless `sub` ⊆ `sup`.
fn positions(sub: &[Vertex], sup: &[Vertex]) -> Result<Vec<usize>> {
    let mut pos = Vec::with_capacity(sub.len());
    for s in sub {
        match sup.binary_search(s) {
            Ok(p) => pos.push(p),
            Err(_) => {
                return Err(Error::SupportMismatch(format!(
                    "site {s} not contained in the target support"
                )))
            }
        }
    }
    Ok(pos)
}

/// For every index of a d^|positions| space, the contribution of its digits
/// placed at `positions` of an ambient support with `m` sites.
fn placement_table(d: usize, m: usize, positions: &[usize]) -> Vec<usize> {
    let weights: Vec<usize> = (0..m).map(|p| d.pow((m - 1 - p) as u32)).collect();
    let sub_dim = d.pow(positions.len() as u32);
    let mut table = vec![0usize; sub_dim];
    for (idx, slot) in table.iter_mut().enumerate() {
        let mut rem = idx;
        let mut acc = 0usize;
        for &p in positions.iter().rev() {
            let digit = rem % d;
            rem /= d;
            acc += digit * weights[p];
        }
        *slot = acc;
    }
    table
}

/// A vector on the tensor product of the site spaces over its support.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    support: Vec<Vertex>,
    d: usize,
    amp: DVector<C64>,
}

impl StateVector {
    pub fn new(support: Vec<Vertex>, d: usize, amp: DVector<C64>) -> Result<Self> {
        check_support(&support)?;
        let dim = checked_dim(d, support.len(), MAX_VECTOR_DIM)?;
        if amp.len() != dim {
            return Err(Error::SupportMismatch(format!(
                "amplitude length {} != d^sites = {dim}",
                amp.len()
            )));
        }
        Ok(StateVector { support, d, amp })
    }

    /// The basis vector e_ω for a 1-based configuration ω.
    pub fn basis_state(support: Vec<Vertex>, d: usize, config: &[usize]) -> Result<Self> {
        check_support(&support)?;
        let dim = checked_dim(d, support.len(), MAX_VECTOR_DIM)?;
        if config.len() != support.len() {
            return Err(Error::SupportMismatch(
                "configuration length != support length".into(),
            ));
        }
        let mut idx = 0usize;
        for &c in config {
            if c == 0 || c > d {
                return Err(Error::InvalidParameter(format!(
                    "configuration value {c} outside 1..={d}"
                )));
            }
            idx = idx * d + (c - 1);
        }
        let mut amp = DVector::zeros(dim);
        amp[idx] = C64::new(1.0, 0.0);
        StateVector::new(support, d, amp)
    }

    /// The unnormalized uniform superposition Σ_i e_i on a single site.
    pub fn sum_basis(site: Vertex, d: usize) -> Result<Self> {
        let dim = checked_dim(d, 1, MAX_VECTOR_DIM)?;
        StateVector::new(vec![site], d, DVector::from_element(dim, C64::new(1.0, 0.0)))
    }

    pub fn support(&self) -> &[Vertex] {
        &self.support
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.amp.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amp
    }

    pub fn norm_squared(&self) -> f64 {
        self.amp.iter().map(|z| z.norm_sqr()).sum()
    }

    /// ⟨self, other⟩, conjugate-linear in `self`. Supports must agree.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.support != other.support || self.d != other.d {
            return Err(Error::SupportMismatch(
                "inner product requires identical supports".into(),
            ));
        }
        Ok(self.amp.dotc(&other.amp))
    }

    pub fn scaled(&self, s: C64) -> StateVector {
        StateVector {
            support: self.support.clone(),
            d: self.d,
            amp: &self.amp * s,
        }
    }

    pub fn max_abs_diff(&self, other: &StateVector) -> Result<f64> {
        if self.support != other.support {
            return Err(Error::SupportMismatch(
                "difference requires identical supports".into(),
            ));
        }
        Ok((&self.amp - &other.amp)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max))
    }

    /// The reduced density matrix (1/normalization) Tr_rest |ψ⟩⟨ψ| on
    /// `keep` ⊆ support, with the *unnormalized* partial trace: choosing
    /// `normalization = ‖ψ‖²` yields a unit-trace density matrix.
    pub fn reduced_density(&self, keep: &[Vertex], normalization: f64) -> Result<LocalOperator> {
        check_support(keep)?;
        let keep_pos = positions(keep, &self.support)?;
        let rest: Vec<Vertex> = self
            .support
            .iter()
            .filter(|v| keep.binary_search(v).is_err())
            .cloned()
            .collect();
        let rest_pos = positions(&rest, &self.support)?;
        let keep_table = placement_table(self.d, self.support.len(), &keep_pos);
        let rest_table = placement_table(self.d, self.support.len(), &rest_pos);
        let keep_dim = keep_table.len();
        if keep_dim > MAX_OPERATOR_DIM {
            return Err(Error::DimensionCap {
                dim: keep_dim,
                cap: MAX_OPERATOR_DIM,
            });
        }
        let scale = 1.0 / normalization;
        let mut mat = DMatrix::zeros(keep_dim, keep_dim);
        for (r, &row_base) in keep_table.iter().enumerate() {
            for (c, &col_base) in keep_table.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for &t in &rest_table {
                    acc += self.amp[row_base + t] * self.amp[col_base + t].conj();
                }
                mat[(r, c)] = acc * C64::new(scale, 0.0);
            }
        }
        LocalOperator::new(keep.to_vec(), self.d, mat)
    }
}

/// A dense operator on the tensor product of the site spaces over its
/// support. Row index = output configuration, column = input.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    support: Vec<Vertex>,
    d: usize,
    mat: DMatrix<C64>,
}

impl LocalOperator {
    pub fn new(support: Vec<Vertex>, d: usize, mat: DMatrix<C64>) -> Result<Self> {
        check_support(&support)?;
        let dim = checked_dim(d, support.len(), MAX_OPERATOR_DIM)?;
        if mat.nrows() != dim || mat.ncols() != dim {
            return Err(Error::SupportMismatch(format!(
                "matrix is {}x{}, expected {dim}x{dim}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(LocalOperator { support, d, mat })
    }

    pub fn identity(support: Vec<Vertex>, d: usize) -> Result<Self> {
        check_support(&support)?;
        let dim = checked_dim(d, support.len(), MAX_OPERATOR_DIM)?;
        Ok(LocalOperator {
            support,
            d,
            mat: DMatrix::identity(dim, dim),
        })
    }

    /// The matrix unit e_ij at one site (i, j are 1-based).
    pub fn matrix_unit(site: Vertex, d: usize, i: usize, j: usize) -> Result<Self> {
        let dim = checked_dim(d, 1, MAX_OPERATOR_DIM)?;
        if i == 0 || i > d || j == 0 || j > d {
            return Err(Error::InvalidParameter(format!(
                "matrix unit indices ({i},{j}) outside 1..={d}"
            )));
        }
        let mut mat = DMatrix::zeros(dim, dim);
        mat[(i - 1, j - 1)] = C64::new(1.0, 0.0);
        Ok(LocalOperator {
            support: vec![site],
            d,
            mat,
        })
    }

    /// A single-site operator from its d×d matrix.
    pub fn from_site_matrix(site: Vertex, d: usize, mat: DMatrix<C64>) -> Result<Self> {
        LocalOperator::new(vec![site], d, mat)
    }

    /// A two-site operator from its d²×d² matrix; the first tensor leg is
    /// `first`, the second `second`. The two vertices must already be in
    /// canonical order.
    pub fn two_site(first: Vertex, second: Vertex, d: usize, mat: DMatrix<C64>) -> Result<Self> {
        if first >= second {
            return Err(Error::SupportMismatch(format!(
                "two-site legs must be in canonical order: {first} !< {second}"
            )));
        }
        LocalOperator::new(vec![first, second], d, mat)
    }

    pub fn support(&self) -> &[Vertex] {
        &self.support
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    /// j_Λ: tensor with the identity on `target` \ support and permute the
    /// legs into the canonical order of `target`.
    pub fn embed(&self, target: &[Vertex]) -> Result<LocalOperator> {
        check_support(target)?;
        if target == self.support.as_slice() {
            return Ok(self.clone());
        }
        let dim = checked_dim(self.d, target.len(), MAX_OPERATOR_DIM)?;
        let own_pos = positions(&self.support, target)?;
        let rest: Vec<Vertex> = target
            .iter()
            .filter(|v| self.support.binary_search(v).is_err())
            .cloned()
            .collect();
        let rest_pos = positions(&rest, target)?;
        let own_table = placement_table(self.d, target.len(), &own_pos);
        let rest_table = placement_table(self.d, target.len(), &rest_pos);
        let mut mat = DMatrix::zeros(dim, dim);
        for (r, &row_base) in own_table.iter().enumerate() {
            for (c, &col_base) in own_table.iter().enumerate() {
                let val = self.mat[(r, c)];
                if val == C64::new(0.0, 0.0) {
                    continue;
                }
                for &t in &rest_table {
                    mat[(row_base + t, col_base + t)] = val;
                }
            }
        }
        LocalOperator::new(target.to_vec(), self.d, mat)
    }

    /// Normalized partial trace onto `keep` ⊆ support: contracts the
    /// complement legs and divides by their dimension, so the identity maps
    /// to the identity.
    pub fn partial_trace_normalized(&self, keep: &[Vertex]) -> Result<LocalOperator> {
        check_support(keep)?;
        let keep_pos = positions(keep, &self.support)?;
        let traced: Vec<Vertex> = self
            .support
            .iter()
            .filter(|v| keep.binary_search(v).is_err())
            .cloned()
            .collect();
        let traced_pos = positions(&traced, &self.support)?;
        let keep_table = placement_table(self.d, self.support.len(), &keep_pos);
        let traced_table = placement_table(self.d, self.support.len(), &traced_pos);
        let keep_dim = keep_table.len();
        let norm = 1.0 / traced_table.len() as f64;
        let mut mat = DMatrix::zeros(keep_dim, keep_dim);
        for (r, &row_base) in keep_table.iter().enumerate() {
            for (c, &col_base) in keep_table.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for &t in &traced_table {
                    acc += self.mat[(row_base + t, col_base + t)];
                }
                mat[(r, c)] = acc * norm;
            }
        }
        LocalOperator::new(keep.to_vec(), self.d, mat)
    }

    /// Product, with both operands embedded into the union of supports.
    pub fn mul(&self, other: &LocalOperator) -> Result<LocalOperator> {
        if self.d != other.d {
            return Err(Error::SupportMismatch(
                "operands have different site dimensions".into(),
            ));
        }
        let union = support_union(&self.support, &other.support);
        let a = self.embed(&union)?;
        let b = other.embed(&union)?;
        LocalOperator::new(union, self.d, a.mat * b.mat)
    }

    pub fn add(&self, other: &LocalOperator) -> Result<LocalOperator> {
        if self.d != other.d {
            return Err(Error::SupportMismatch(
                "operands have different site dimensions".into(),
            ));
        }
        let union = support_union(&self.support, &other.support);
        let a = self.embed(&union)?;
        let b = other.embed(&union)?;
        LocalOperator::new(union, self.d, a.mat + b.mat)
    }

    pub fn sub(&self, other: &LocalOperator) -> Result<LocalOperator> {
        self.add(&other.scaled(C64::new(-1.0, 0.0)))
    }

    pub fn scaled(&self, s: C64) -> LocalOperator {
        LocalOperator {
            support: self.support.clone(),
            d: self.d,
            mat: &self.mat * s,
        }
    }

    pub fn adjoint(&self) -> LocalOperator {
        LocalOperator {
            support: self.support.clone(),
            d: self.d,
            mat: self.mat.adjoint(),
        }
    }

    /// Apply to a state vector whose support contains this operator's
    /// support; legs outside the operator's support are untouched.
    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        if self.d != v.d {
            return Err(Error::SupportMismatch(
                "operator and vector have different site dimensions".into(),
            ));
        }
        let own_pos = positions(&self.support, &v.support)?;
        let rest: Vec<Vertex> = v
            .support
            .iter()
            .filter(|s| self.support.binary_search(s).is_err())
            .cloned()
            .collect();
        let rest_pos = positions(&rest, &v.support)?;
        let own_table = placement_table(self.d, v.support.len(), &own_pos);
        let rest_table = placement_table(self.d, v.support.len(), &rest_pos);
        let mut out = DVector::zeros(v.dim());
        for &base in &rest_table {
            for (r, &ri) in own_table.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (c, &ci) in own_table.iter().enumerate() {
                    let m = self.mat[(r, c)];
                    if m != C64::new(0.0, 0.0) {
                        acc += m * v.amp[base + ci];
                    }
                }
                out[base + ri] = acc;
            }
        }
        StateVector::new(v.support.clone(), self.d, out)
    }

    /// Normalized trace: trace divided by the full dimension, so the
    /// identity has trace 1.
    pub fn normalized_trace(&self) -> C64 {
        self.mat.trace() / C64::new(self.dim() as f64, 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Max entry deviation after aligning both operators on the support
    /// union.
    pub fn max_abs_diff(&self, other: &LocalOperator) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        (&self.mat - self.mat.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() <= tol
    }

    /// Eigenvalues of a Hermitian operator, ascending.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        let dev = self.hermiticity_deviation();
        if dev > TOL_EQ {
            return Err(Error::NonHermitian { deviation: dev });
        }
        let mut evs: Vec<f64> = self
            .mat
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .collect();
        evs.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        Ok(evs)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.hermitian_eigenvalues()?[0])
    }

    /// U f(λ) U† for a Hermitian operator with eigendecomposition UλU†.
    pub fn hermitian_map(&self, f: impl Fn(f64) -> C64) -> Result<LocalOperator> {
        let dev = self.hermiticity_deviation();
        if dev > TOL_EQ {
            return Err(Error::NonHermitian { deviation: dev });
        }
        let eig = self.mat.clone().symmetric_eigen();
        let dim = self.dim();
        let mut diag = DMatrix::zeros(dim, dim);
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            diag[(i, i)] = f(l);
        }
        let mat = &eig.eigenvectors * diag * eig.eigenvectors.adjoint();
        LocalOperator::new(self.support.clone(), self.d, mat)
    }

    /// Hermitian square root; eigenvalues below -tol are rejected, small
    /// negative rounding is clamped to zero.
    pub fn sqrt_psd(&self) -> Result<LocalOperator> {
        let min = self.min_eigenvalue()?;
        if min < -TOL_EQ {
            return Err(Error::NotPositive {
                min_eigenvalue: min,
            });
        }
        self.hermitian_map(|l| C64::new(l.max(0.0).sqrt(), 0.0))
    }

    /// Hermitian inverse square root; fails on (near-)singular input.
    pub fn inv_sqrt_pd(&self) -> Result<LocalOperator> {
        let min = self.min_eigenvalue()?;
        if min < 1e-12 {
            return Err(Error::Singular(format!(
                "inverse square root needs a positive-definite operator (min eigenvalue {min:.3e})"
            )));
        }
        self.hermitian_map(|l| C64::new(1.0 / l.sqrt(), 0.0))
    }

    /// Apply a d²×d² superoperator to one site leg. The superoperator is
    /// indexed row-major on (row digit, column digit) pairs: the matrix
    /// element S[(a,b),(a',b')] maps |a'⟩⟨b'| to the (a,b) component.
    pub fn apply_single_site_map(&self, site: &Vertex, s: &DMatrix<C64>) -> Result<LocalOperator> {
        let d = self.d;
        if s.nrows() != d * d || s.ncols() != d * d {
            return Err(Error::SupportMismatch(format!(
                "superoperator is {}x{}, expected {}x{}",
                s.nrows(),
                s.ncols(),
                d * d,
                d * d
            )));
        }
        let p = positions(std::slice::from_ref(site), &self.support)?[0];
        let site_table = placement_table(d, self.support.len(), &[p]);
        let rest_pos: Vec<usize> = (0..self.support.len()).filter(|&q| q != p).collect();
        let rest_table = placement_table(d, self.support.len(), &rest_pos);
        let mut mat = DMatrix::zeros(self.dim(), self.dim());
        for &rr in &rest_table {
            for &rc in &rest_table {
                for a in 0..d {
                    for b in 0..d {
                        let mut acc = C64::new(0.0, 0.0);
                        for ap in 0..d {
                            for bp in 0..d {
                                let w = s[(a * d + b, ap * d + bp)];
                                if w != C64::new(0.0, 0.0) {
                                    acc += w * self.mat[(rr + site_table[ap], rc + site_table[bp])];
                                }
                            }
                        }
                        mat[(rr + site_table[a], rc + site_table[b])] = acc;
                    }
                }
            }
        }
        LocalOperator::new(self.support.clone(), d, mat)
    }
}

/// exp(βH) for Hermitian H, by eigendecomposition. β may be complex.
pub fn herm_exp(h: &LocalOperator, beta: C64) -> Result<LocalOperator> {
    if beta == C64::new(0.0, 0.0) {
        return LocalOperator::identity(h.support().to_vec(), h.d());
    }
    h.hermitian_map(|l| (beta * l).exp())
}

pub fn support_union(a: &[Vertex], b: &[Vertex]) -> Vec<Vertex> {
    let mut u: Vec<Vertex> = a.iter().chain(b.iter()).cloned().collect();
    u.sort();
    u.dedup();
    u
}

// JSON form shared by operators and vectors:
// {"support": [[...], ...], "d": n, "re": [...], "im": [...]}
// with entries flattened row-major.
#[derive(Serialize, Deserialize)]
struct DenseJson {
    support: Vec<Vertex>,
    d: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Serialize for LocalOperator {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        DenseJson {
            support: self.support.clone(),
            d: self.d,
            re: self.mat.transpose().iter().map(|z| z.re).collect(),
            im: self.mat.transpose().iter().map(|z| z.im).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LocalOperator {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = DenseJson::deserialize(deserializer)?;
        if raw.re.len() != raw.im.len() {
            return Err(D::Error::custom("re/im length mismatch"));
        }
        let dim2 = raw.re.len();
        let dim = (dim2 as f64).sqrt().round() as usize;
        if dim * dim != dim2 {
            return Err(D::Error::custom("entry count is not a perfect square"));
        }
        let mat = DMatrix::from_fn(dim, dim, |r, c| {
            C64::new(raw.re[r * dim + c], raw.im[r * dim + c])
        });
        LocalOperator::new(raw.support, raw.d, mat).map_err(D::Error::custom)
    }
}

impl Serialize for StateVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        DenseJson {
            support: self.support.clone(),
            d: self.d,
            re: self.amp.iter().map(|z| z.re).collect(),
            im: self.amp.iter().map(|z| z.im).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StateVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = DenseJson::deserialize(deserializer)?;
        if raw.re.len() != raw.im.len() {
            return Err(D::Error::custom("re/im length mismatch"));
        }
        let amp = DVector::from_fn(raw.re.len(), |i, _| C64::new(raw.re[i], raw.im[i]));
        StateVector::new(raw.support, raw.d, amp).map_err(D::Error::custom)
    }
}
