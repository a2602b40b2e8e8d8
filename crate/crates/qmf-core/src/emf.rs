//! Entangled Markov fields on trees.
//!
//! An [`AmplitudeField`] attaches to every edge of a tree a d×d complex
//! amplitude matrix whose squared moduli form a bi-stochastic matrix.
//! Products of amplitudes over the internal edges of a region Λ define the
//! vector ψ_Λ; on a tree, ‖ψ_Λ‖² = d for every connected Λ with at least
//! two vertices, and
//!
//! ```text
//! φ(a) = (1/d) ⟨ψ_Λ, a ψ_Λ⟩      for Λ large enough around support(a)
//! ```
//!
//! is independent of Λ and defines a state: the entangled Markov field.
//! [`EntangledField`] certifies the tree structure and exposes three
//! evaluation routes that must agree — the direct contraction
//! ([`EntangledField::expect`]), the chain of boundary isometries
//! ([`EntangledField::expect_as_chain`]), and, for uniform-modulus fields,
//! the boundary-state reconstruction ([`EntangledField::gqms_reconstruct`])
//! — plus diagnostics for how classical the restriction to a path segment
//! looks ([`EntangledField::classicality_report`]).
//!
//! Amplitudes are stored per ordered (parent, child) edge; the entry
//! ψ(i, j) has i indexing the vertex closer to the root. The accessor
//! [`AmplitudeField::amplitude`] reorients on demand, so formulas can be
//! written exactly as printed.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{LocalOperator, StateVector, MAX_VECTOR_DIM, TOL_EQ};
use crate::error::{Error, Result};
use crate::graph::{Region, Tree, Vertex};

fn r(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Max |row sum - 1|, |column sum - 1| of the squared moduli.
fn bistochastic_deviation(m: &DMatrix<C64>) -> f64 {
    let d = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..d {
        let row: f64 = (0..d).map(|j| m[(i, j)].norm_sqr()).sum();
        let col: f64 = (0..d).map(|j| m[(j, i)].norm_sqr()).sum();
        dev = dev.max((row - 1.0).abs()).max((col - 1.0).abs());
    }
    dev
}

/// One edge of an amplitude field, in the JSON schema used by the CLI.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeAmplitude {
    pub parent: Vertex,
    pub child: Vertex,
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Vec<Vec<f64>>,
}

impl EdgeAmplitude {
    pub fn matrix(&self, d: usize) -> Result<DMatrix<C64>> {
        if self.re.len() != d || self.re.iter().any(|row| row.len() != d) {
            return Err(Error::InvalidParameter(format!(
                "edge {}~{}: re is not {d}x{d}",
                self.parent, self.child
            )));
        }
        if !self.im.is_empty() && (self.im.len() != d || self.im.iter().any(|row| row.len() != d))
        {
            return Err(Error::InvalidParameter(format!(
                "edge {}~{}: im is not {d}x{d}",
                self.parent, self.child
            )));
        }
        Ok(DMatrix::from_fn(d, d, |i, j| {
            let im = if self.im.is_empty() { 0.0 } else { self.im[i][j] };
            C64::new(self.re[i][j], im)
        }))
    }
}

/// Per-edge amplitude matrices over a stored graph.
///
/// Construction validates that every stored edge carries a matrix and that
/// each squared-modulus matrix is bi-stochastic. The graph is *not*
/// required to be a tree here; the tree-only identities are certified by
/// [`EntangledField`].
#[derive(Clone, Debug)]
pub struct AmplitudeField {
    tree: Tree,
    d: usize,
    amps: BTreeMap<(Vertex, Vertex), DMatrix<C64>>,
}

impl AmplitudeField {
    pub fn new(
        tree: Tree,
        d: usize,
        mut amps: BTreeMap<(Vertex, Vertex), DMatrix<C64>>,
    ) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!("d = {d} must be >= 2")));
        }
        // Reorient keys onto the stored edge orientation.
        let mut oriented = BTreeMap::new();
        for (a, b) in tree.edges() {
            let m = if let Some(m) = amps.remove(&(a.clone(), b.clone())) {
                m
            } else if let Some(m) = amps.remove(&(b.clone(), a.clone())) {
                m.transpose()
            } else {
                return Err(Error::MissingAmplitude(format!("{a}~{b}")));
            };
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::InvalidParameter(format!(
                    "edge {a}~{b}: amplitude matrix is {}x{}, expected {d}x{d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            let dev = bistochastic_deviation(&m);
            if dev > TOL_EQ {
                return Err(Error::NotBistochastic { deviation: dev });
            }
            oriented.insert((a.clone(), b.clone()), m);
        }
        if let Some(((a, b), _)) = amps.into_iter().next() {
            return Err(Error::InvalidParameter(format!(
                "amplitude given for non-edge {a}~{b}"
            )));
        }
        Ok(AmplitudeField {
            tree,
            d,
            amps: oriented,
        })
    }

    /// The same amplitude matrix on every edge, oriented (parent, child).
    pub fn homogeneous(tree: Tree, d: usize, m: DMatrix<C64>) -> Result<Self> {
        let amps = tree
            .edges()
            .iter()
            .map(|(a, b)| ((a.clone(), b.clone()), m.clone()))
            .collect();
        AmplitudeField::new(tree, d, amps)
    }

    /// Independent random bi-stochastic-modulus amplitudes on every edge.
    pub fn random<R: Rng + ?Sized>(tree: Tree, d: usize, rng: &mut R) -> Result<Self> {
        let amps = tree
            .edges()
            .iter()
            .map(|(a, b)| {
                (
                    (a.clone(), b.clone()),
                    random_bistochastic_amplitudes(rng, d),
                )
            })
            .collect();
        AmplitudeField::new(tree, d, amps)
    }

    /// Random amplitudes of uniform modulus d^(-1/2) (random phases only).
    pub fn random_uniform_modulus<R: Rng + ?Sized>(
        tree: Tree,
        d: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let scale = 1.0 / (d as f64).sqrt();
        let amps = tree
            .edges()
            .iter()
            .map(|(a, b)| {
                let m = DMatrix::from_fn(d, d, |_, _| {
                    C64::from_polar(scale, rng.gen_range(0.0..std::f64::consts::TAU))
                });
                ((a.clone(), b.clone()), m)
            })
            .collect();
        AmplitudeField::new(tree, d, amps)
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// ψ_xy(i, j) with i indexing `x` and j indexing `y`, for an edge of
    /// the stored graph in either orientation.
    pub fn amplitude(&self, x: &Vertex, y: &Vertex) -> Result<DMatrix<C64>> {
        if let Some(m) = self.amps.get(&(x.clone(), y.clone())) {
            Ok(m.clone())
        } else if let Some(m) = self.amps.get(&(y.clone(), x.clone())) {
            Ok(m.transpose())
        } else {
            Err(Error::MissingAmplitude(format!("{x}~{y}")))
        }
    }

    /// Max deviation of every |ψ(i,j)|² from 1/d over all edges.
    pub fn uniform_modulus_deviation(&self) -> f64 {
        let target = 1.0 / self.d as f64;
        self.amps
            .values()
            .flat_map(|m| m.iter())
            .map(|z| (z.norm_sqr() - target).abs())
            .fold(0.0, f64::max)
    }

    /// ψ_Λ for a connected region: amplitudes are products of the edge
    /// amplitudes over the region-internal edges.
    pub fn psi_vector(&self, region: &Region) -> Result<StateVector> {
        if !self.tree.is_connected_region(region)? {
            return Err(Error::Disconnected(
                "the norm law requires a connected region".into(),
            ));
        }
        self.psi_any_region(region)
    }

    /// ψ over an arbitrary (possibly disconnected) region; the norm law
    /// does not apply, but the product formula still makes sense and is
    /// what the shell states of the reconstruction route are built from.
    fn psi_any_region(&self, region: &Region) -> Result<StateVector> {
        let sites = region.sites();
        let m = sites.len();
        if m == 0 {
            return Err(Error::InvalidParameter("empty region".into()));
        }
        let d = self.d;
        let mut dim = 1usize;
        for _ in 0..m {
            dim = dim.saturating_mul(d);
            if dim > MAX_VECTOR_DIM {
                return Err(Error::DimensionCap {
                    dim,
                    cap: MAX_VECTOR_DIM,
                });
            }
        }
        let pos: BTreeMap<&Vertex, usize> =
            sites.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let edges: Vec<(usize, usize, DMatrix<C64>)> = self
            .tree
            .edges_within(region)
            .into_iter()
            .map(|(a, b)| {
                let pa = pos[&a];
                let pb = pos[&b];
                let m = self.amps[&(a, b)].clone();
                (pa, pb, m)
            })
            .collect();
        let mut amp = DVector::from_element(dim, r(1.0));
        let mut digits = vec![0usize; m];
        for idx in 0..dim {
            let mut rem = idx;
            for p in (0..m).rev() {
                digits[p] = rem % d;
                rem /= d;
            }
            let mut val = r(1.0);
            for (pa, pb, mat) in &edges {
                val *= mat[(digits[*pa], digits[*pb])];
                if val == r(0.0) {
                    break;
                }
            }
            amp[idx] = val;
        }
        StateVector::new(sites, d, amp)
    }
}

/// The boundary isometry V_(z|x): H_z → H_{x,z} attached to an inside
/// vertex z and an outside neighbour x:
///
/// ```text
/// V e_j(z) = Σ_i ψ_xz(i, j) e_i(x) ⊗ e_j(z)
/// ```
#[derive(Clone, Debug)]
pub struct BoundaryIsometry {
    inside: Vertex,
    outside: Vertex,
    d: usize,
    /// ψ_xz(i, j): rows indexed by the outside vertex, columns inside.
    amp: DMatrix<C64>,
}

impl BoundaryIsometry {
    pub fn inside(&self) -> &Vertex {
        &self.inside
    }

    pub fn outside(&self) -> &Vertex {
        &self.outside
    }

    /// The d²×d matrix of the isometry, with the two-site rows in
    /// canonical site order.
    pub fn matrix(&self) -> DMatrix<C64> {
        let d = self.d;
        let mut m = DMatrix::zeros(d * d, d);
        let inside_first = self.inside < self.outside;
        for j in 0..d {
            for i in 0..d {
                let row = if inside_first { j * d + i } else { i * d + j };
                m[(row, j)] = self.amp[(i, j)];
            }
        }
        m
    }

    /// Deviation of V†V from the identity.
    pub fn isometry_deviation(&self) -> f64 {
        let m = self.matrix();
        let gram = m.adjoint() * &m;
        (gram - DMatrix::<C64>::identity(self.d, self.d))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Apply to a vector whose support contains the inside vertex but not
    /// the outside one; the result gains the outside leg.
    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        let d = self.d;
        if v.d() != d {
            return Err(Error::SupportMismatch(
                "isometry and vector have different site dimensions".into(),
            ));
        }
        let old_sites = v.support().to_vec();
        let pos_inside = old_sites
            .binary_search(&self.inside)
            .map_err(|_| Error::SupportMismatch(format!("{} not in support", self.inside)))?;
        if old_sites.binary_search(&self.outside).is_ok() {
            return Err(Error::SupportMismatch(format!(
                "{} already in support",
                self.outside
            )));
        }
        let mut new_sites = old_sites.clone();
        new_sites.push(self.outside.clone());
        new_sites.sort();
        let m_old = old_sites.len();
        let m_new = new_sites.len();
        let new_weights: Vec<usize> = (0..m_new).map(|p| d.pow((m_new - 1 - p) as u32)).collect();
        let old_to_new: Vec<usize> = old_sites
            .iter()
            .map(|s| new_sites.binary_search(s).expect("subset"))
            .collect();
        let out_pos = new_sites.binary_search(&self.outside).expect("added");
        let w_inside_old = d.pow((m_old - 1 - pos_inside) as u32);
        let mut dim_new = 1usize;
        for _ in 0..m_new {
            dim_new = dim_new.saturating_mul(d);
            if dim_new > MAX_VECTOR_DIM {
                return Err(Error::DimensionCap {
                    dim: dim_new,
                    cap: MAX_VECTOR_DIM,
                });
            }
        }
        let mut out = DVector::zeros(dim_new);
        let mut digits = vec![0usize; m_old];
        for idx in 0..v.dim() {
            let a = v.amplitudes()[idx];
            if a == r(0.0) {
                continue;
            }
            let mut rem = idx;
            for p in (0..m_old).rev() {
                digits[p] = rem % d;
                rem /= d;
            }
            let base: usize = digits
                .iter()
                .enumerate()
                .map(|(p, &dig)| dig * new_weights[old_to_new[p]])
                .sum();
            let j = (idx / w_inside_old) % d;
            for i in 0..d {
                out[base + i * new_weights[out_pos]] += self.amp[(i, j)] * a;
            }
        }
        StateVector::new(new_sites, d, out)
    }
}

/// Report on how classical the restriction of the field to a path segment
/// looks. The partial-transpose test is an external criterion, exact for a
/// pair of qubits.
#[derive(Clone, Debug, Serialize)]
pub struct ClassicalityReport {
    pub segment: Vec<Vertex>,
    /// Eigenvalues of the restricted density matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Count of eigenvalues above 1e-10 × the largest.
    pub rank: usize,
    /// max |φ(ab) - φ(a)φ(b)| over single-site matrix units a, b supported
    /// on the two halves of the segment.
    pub product_deviation: f64,
    pub ppt: Option<PptReport>,
    pub density: LocalOperator,
}

#[derive(Clone, Debug, Serialize)]
pub struct PptReport {
    pub min_eigenvalue: f64,
    /// Partial transpose is positive semidefinite (within 1e-10).
    pub positive: bool,
    /// True when the test is decisive (two sites of dimension 2).
    pub conclusive: bool,
}

/// An amplitude field whose underlying graph is certified to be a rooted
/// tree with canonical vertex labels; carries the state φ.
#[derive(Clone, Debug)]
pub struct EntangledField {
    field: AmplitudeField,
}

impl EntangledField {
    pub fn new(field: AmplitudeField) -> Result<Self> {
        let tree = field.tree();
        if tree.edges().len() + 1 != tree.vertex_count() {
            return Err(Error::NotATree(format!(
                "{} edges on {} vertices",
                tree.edges().len(),
                tree.vertex_count()
            )));
        }
        for v in tree.vertices() {
            if let Some(p) = v.parent() {
                if !tree.contains(&p) || !tree.neighbors(v)?.contains(&p) {
                    return Err(Error::NotATree(format!(
                        "vertex {v} is not adjacent to its coordinate parent"
                    )));
                }
            }
        }
        Ok(EntangledField { field })
    }

    pub fn field(&self) -> &AmplitudeField {
        &self.field
    }

    pub fn tree(&self) -> &Tree {
        self.field.tree()
    }

    pub fn d(&self) -> usize {
        self.field.d()
    }

    /// The evaluation region for an observable: two closures around the
    /// connected hull of its support.
    pub fn evaluation_region(&self, support: &[Vertex]) -> Result<Region> {
        let tree = self.tree();
        let hull = tree.connected_hull(&support.iter().cloned().collect())?;
        tree.closure(&tree.closure(&hull)?)
    }

    /// Some stored vertex adjacent to the region but outside it, if any.
    fn stored_boundary_sample(&self, region: &Region) -> Result<Option<Vertex>> {
        let tree = self.tree();
        for v in region {
            for n in tree.neighbors(v)? {
                if !region.contains(n) {
                    return Ok(Some(n.clone()));
                }
            }
        }
        Ok(None)
    }

    /// φ(a) = (1/d) ⟨ψ_Λ, a ψ_Λ⟩ with Λ two closures around the support
    /// hull. The volume independence that makes this well defined is
    /// asserted by recomputing with one extra boundary vertex adjoined.
    pub fn expect(&self, a: &LocalOperator) -> Result<C64> {
        let region = self.evaluation_region(a.support())?;
        let value = self.expect_on(a, &region)?;
        if let Some(extra) = self.stored_boundary_sample(&region)? {
            let mut bigger = region.clone();
            bigger.insert(extra);
            let check = self.expect_on(a, &bigger)?;
            let dev = (value - check).norm();
            if dev > TOL_EQ {
                return Err(Error::InvarianceAssertion { deviation: dev });
            }
        }
        Ok(value)
    }

    /// (1/d) ⟨ψ_Λ, a ψ_Λ⟩ for an explicit region Λ ⊇ support(a).
    pub fn expect_on(&self, a: &LocalOperator, region: &Region) -> Result<C64> {
        let psi = self.field.psi_vector(region)?;
        let apsi = a.apply(&psi)?;
        Ok(psi.inner(&apsi)? / r(self.d() as f64))
    }

    /// The boundary isometry V_(z|x) for an inside vertex z and an
    /// adjacent outside vertex x.
    pub fn boundary_isometry(&self, inside: &Vertex, outside: &Vertex) -> Result<BoundaryIsometry> {
        let tree = self.tree();
        if !tree.neighbors(inside)?.contains(outside) {
            return Err(Error::SupportMismatch(format!(
                "{inside} and {outside} are not adjacent"
            )));
        }
        Ok(BoundaryIsometry {
            inside: inside.clone(),
            outside: outside.clone(),
            d: self.d(),
            amp: self.field.amplitude(outside, inside)?,
        })
    }

    /// Evaluate φ(a) through the chain route: grow balls Λ_0 ⊂ Λ_1 ⊂ ...
    /// from the root by applying the commuting boundary isometries of each
    /// shell to the uniform root vector, then contract with `a`.
    ///
    /// `support(a)` must lie inside the ball of radius `n_max - 1`.
    pub fn expect_as_chain(&self, n_max: usize, a: &LocalOperator) -> Result<C64> {
        if n_max == 0 {
            return Err(Error::InvalidParameter("n_max must be >= 1".into()));
        }
        let tree = self.tree();
        for s in a.support() {
            if s.level() + 1 > n_max {
                return Err(Error::SupportMismatch(format!(
                    "support vertex {s} outside the ball of radius {}",
                    n_max - 1
                )));
            }
        }
        let mut region = Region::singleton(Vertex::root());
        let mut v = StateVector::sum_basis(Vertex::root(), self.d())?;
        for _ in 0..n_max {
            let shell = tree.boundary(&region)?;
            if shell.is_empty() {
                break;
            }
            for y in &shell {
                let inside: Vec<&Vertex> = tree
                    .neighbors(y)?
                    .iter()
                    .filter(|n| region.contains(n))
                    .collect();
                let z = match inside.as_slice() {
                    [z] => (*z).clone(),
                    other => {
                        return Err(Error::NotATree(format!(
                            "boundary vertex {y} has {} inside neighbours",
                            other.len()
                        )))
                    }
                };
                let iso = self.boundary_isometry(&z, y)?;
                v = iso.apply(&v)?;
            }
            for y in shell {
                region.insert(y);
            }
        }
        let av = a.apply(&v)?;
        Ok(v.inner(&av)? / r(self.d() as f64))
    }

    /// Evaluate φ(a) through the boundary-state route available for
    /// uniform-modulus fields: start from the normalized two-shell product
    /// vector outside the ball of radius `n`, then grow the amplitudes
    /// inward one level at a time with the local isometries
    ///
    /// ```text
    /// U_y (⊗_l e_{i_l}(x_l)) = d^((m-1)/2) Σ_j Π_l ψ_{x_l y}(i_l, j) e_j(y) ⊗ (⊗_l e_{i_l}(x_l))
    /// ```
    ///
    /// for each vertex y with children x_1, ..., x_m.
    pub fn gqms_reconstruct(&self, a: &LocalOperator, n: usize) -> Result<C64> {
        let dev = self.field.uniform_modulus_deviation();
        if dev > TOL_EQ {
            return Err(Error::NonUniformModulus { deviation: dev });
        }
        let tree = self.tree();
        for s in a.support() {
            if s.level() > n {
                return Err(Error::SupportMismatch(format!(
                    "support vertex {s} outside the ball of radius {n}"
                )));
            }
        }
        if tree.is_truncated() && tree.depth() < n + 2 {
            return Err(Error::Truncation(format!(
                "reconstruction at radius {n} needs depth {}",
                n + 2
            )));
        }
        let (w_out1, _) = tree.levels(n + 1)?;
        let (w_out2, _) = tree.levels(n + 2)?;
        if w_out1.is_empty() {
            return Err(Error::Truncation(format!(
                "no vertices at level {} to carry the boundary state",
                n + 1
            )));
        }
        let shell = w_out1.union(&w_out2);
        let psi_shell = self.field.psi_any_region(&shell)?;
        let mut v = psi_shell.scaled(r(1.0 / psi_shell.norm_squared().sqrt()));
        for level in (0..=n).rev() {
            let (w, _) = tree.levels(level)?;
            for y in &w {
                v = self.grow_vertex(&v, y)?;
            }
        }
        let av = a.apply(&v)?;
        v.inner(&av)
    }

    /// Apply U_y: adds the `y` leg, with amplitudes built from the edges to
    /// its children (all of which must already be in the support).
    fn grow_vertex(&self, v: &StateVector, y: &Vertex) -> Result<StateVector> {
        let d = self.d();
        let tree = self.tree();
        let children = tree.successors(y)?;
        let old_sites = v.support().to_vec();
        let mut child_pos = Vec::with_capacity(children.len());
        let mut child_amp = Vec::with_capacity(children.len());
        for c in &children {
            let p = old_sites
                .binary_search(c)
                .map_err(|_| Error::SupportMismatch(format!("child {c} not in support")))?;
            child_pos.push(p);
            // ψ_{xy}(i_x, j_y): rows indexed by the child.
            child_amp.push(self.field.amplitude(c, y)?);
        }
        let m = children.len();
        let scale = r((d as f64).powf((m as f64 - 1.0) / 2.0));
        let mut new_sites = old_sites.clone();
        new_sites.push(y.clone());
        new_sites.sort();
        let m_old = old_sites.len();
        let m_new = new_sites.len();
        let new_weights: Vec<usize> = (0..m_new).map(|p| d.pow((m_new - 1 - p) as u32)).collect();
        let old_to_new: Vec<usize> = old_sites
            .iter()
            .map(|s| new_sites.binary_search(s).expect("subset"))
            .collect();
        let y_pos = new_sites.binary_search(y).expect("added");
        let mut dim_new = 1usize;
        for _ in 0..m_new {
            dim_new = dim_new.saturating_mul(d);
            if dim_new > MAX_VECTOR_DIM {
                return Err(Error::DimensionCap {
                    dim: dim_new,
                    cap: MAX_VECTOR_DIM,
                });
            }
        }
        let mut out = DVector::zeros(dim_new);
        let mut digits = vec![0usize; m_old];
        for idx in 0..v.dim() {
            let a = v.amplitudes()[idx];
            if a == r(0.0) {
                continue;
            }
            let mut rem = idx;
            for p in (0..m_old).rev() {
                digits[p] = rem % d;
                rem /= d;
            }
            let base: usize = digits
                .iter()
                .enumerate()
                .map(|(p, &dig)| dig * new_weights[old_to_new[p]])
                .sum();
            for j in 0..d {
                let mut factor = scale * a;
                for (c, amp) in child_pos.iter().zip(&child_amp) {
                    factor *= amp[(digits[*c], j)];
                    if factor == r(0.0) {
                        break;
                    }
                }
                if factor != r(0.0) {
                    out[base + j * new_weights[y_pos]] += factor;
                }
            }
        }
        StateVector::new(new_sites, d, out)
    }

    /// The density matrix of the restriction of φ to a region, in the
    /// standard (unnormalized-trace) convention: trace 1.
    pub fn density_matrix(&self, region: &Region) -> Result<LocalOperator> {
        let sites = region.sites();
        let ambient = self.evaluation_region(&sites)?;
        let psi = self.field.psi_vector(&ambient)?;
        psi.reduced_density(&sites, self.d() as f64)
    }

    /// Diagnostics for the restriction to an n-site segment of the longest
    /// path in the tree: density-matrix spectrum and rank, deviation from a
    /// product state across the middle cut, and (for a qubit pair) the
    /// partial-transpose test.
    pub fn classicality_report(&self, n: usize) -> Result<ClassicalityReport> {
        if n == 0 {
            return Err(Error::InvalidParameter("segment length must be >= 1".into()));
        }
        let path = longest_path(self.tree())?;
        if path.len() < n + 2 {
            return Err(Error::PathNotEmbeddable {
                needed: n + 2,
                available: path.len(),
            });
        }
        let start = (path.len() - n) / 2;
        let segment: Vec<Vertex> = {
            let mut s = path[start..start + n].to_vec();
            s.sort();
            s
        };
        let region: Region = segment.iter().cloned().collect();
        let density = self.density_matrix(&region)?;
        let mut eigenvalues = density.hermitian_eigenvalues()?;
        eigenvalues.reverse();
        let cutoff = 1e-10 * eigenvalues[0].max(0.0);
        let rank = eigenvalues.iter().filter(|&&l| l > cutoff).count();

        // Product deviation across the middle cut, probed on single-site
        // matrix units; expectations are read off the one density matrix.
        let d = self.d();
        let half = n.div_ceil(2);
        let (first, second) = segment.split_at(half);
        let mut product_deviation = 0.0f64;
        let phi = |op: &LocalOperator| -> Result<C64> {
            let e = op.embed(&segment)?;
            Ok((density.matrix() * e.matrix()).trace())
        };
        for sa in first {
            for sb in second {
                for i in 1..=d {
                    for j in 1..=d {
                        for k in 1..=d {
                            for l in 1..=d {
                                let a = LocalOperator::matrix_unit(sa.clone(), d, i, j)?;
                                let b = LocalOperator::matrix_unit(sb.clone(), d, k, l)?;
                                let joint = phi(&a.mul(&b)?)?;
                                let split = phi(&a)? * phi(&b)?;
                                product_deviation = product_deviation.max((joint - split).norm());
                            }
                        }
                    }
                }
            }
        }

        let ppt = if n == 2 && d == 2 {
            let rho = density.matrix();
            let mut pt = DMatrix::zeros(4, 4);
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        for l in 0..2 {
                            // Transpose the second leg.
                            pt[(i * 2 + l, k * 2 + j)] = rho[(i * 2 + j, k * 2 + l)];
                        }
                    }
                }
            }
            let herm = LocalOperator::new(segment.clone(), d, pt)?;
            let min_eigenvalue = herm.min_eigenvalue()?;
            Some(PptReport {
                min_eigenvalue,
                positive: min_eigenvalue > -TOL_EQ,
                conclusive: true,
            })
        } else {
            None
        };

        Ok(ClassicalityReport {
            segment,
            eigenvalues,
            rank,
            product_deviation,
            ppt,
            density,
        })
    }
}

/// A longest path in the stored graph (double breadth-first search; exact
/// on trees).
fn longest_path(tree: &Tree) -> Result<Vec<Vertex>> {
    let start = tree
        .vertices()
        .next()
        .ok_or_else(|| Error::InvalidParameter("empty tree".into()))?
        .clone();
    let far = bfs_farthest(tree, &start)?.0;
    let (_, path) = bfs_farthest(tree, &far)?;
    Ok(path)
}

fn bfs_farthest(tree: &Tree, from: &Vertex) -> Result<(Vertex, Vec<Vertex>)> {
    use std::collections::VecDeque;
    let mut parent: BTreeMap<Vertex, Option<Vertex>> = BTreeMap::new();
    parent.insert(from.clone(), None);
    let mut queue = VecDeque::from([from.clone()]);
    let mut last = from.clone();
    while let Some(u) = queue.pop_front() {
        last = u.clone();
        for v in tree.neighbors(&u)? {
            if !parent.contains_key(v) {
                parent.insert(v.clone(), Some(u.clone()));
                queue.push_back(v.clone());
            }
        }
    }
    let mut path = vec![last.clone()];
    let mut cur = last.clone();
    while let Some(Some(p)) = parent.get(&cur) {
        path.push(p.clone());
        cur = p.clone();
    }
    path.reverse();
    Ok((last, path))
}

/// A random d×d matrix whose squared moduli are bi-stochastic: Sinkhorn
/// iteration on a random positive matrix, then independent random phases.
pub fn random_bistochastic_amplitudes<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DMatrix<C64> {
    let mut p = DMatrix::from_fn(d, d, |_, _| rng.gen_range(0.2..1.2f64));
    for _ in 0..2000 {
        for i in 0..d {
            let s: f64 = (0..d).map(|j| p[(i, j)]).sum();
            for j in 0..d {
                p[(i, j)] /= s;
            }
        }
        for j in 0..d {
            let s: f64 = (0..d).map(|i| p[(i, j)]).sum();
            for i in 0..d {
                p[(i, j)] /= s;
            }
        }
        let dev = (0..d)
            .map(|i| {
                let row: f64 = (0..d).map(|j| p[(i, j)]).sum();
                (row - 1.0).abs()
            })
            .fold(0.0, f64::max);
        if dev < 1e-14 {
            break;
        }
    }
    DMatrix::from_fn(d, d, |i, j| {
        C64::from_polar(p[(i, j)].sqrt(), rng.gen_range(0.0..std::f64::consts::TAU))
    })
}

/// The amplitude matrix with moduli-squared 1/3 on the diagonal and 2/3 off
/// it: the homogeneous field whose two-site restriction has rank 4 and is
/// visibly not a product state.
pub fn sqrt_third_amplitudes() -> DMatrix<C64> {
    let a = r(1.0 / 3f64.sqrt());
    let b = r((2f64 / 3.0).sqrt());
    DMatrix::from_row_slice(2, 2, &[a, b, b, a])
}

/// Uniform positive amplitudes 1/√d: the product (classical, rank-one)
/// field.
pub fn uniform_amplitudes(d: usize) -> DMatrix<C64> {
    DMatrix::from_element(d, d, r(1.0 / (d as f64).sqrt()))
}

/// Real Hadamard-phase amplitudes (±1/√2): uniform modulus with a sign
/// pattern.
pub fn hadamard_amplitudes() -> DMatrix<C64> {
    let s = 1.0 / 2f64.sqrt();
    DMatrix::from_row_slice(2, 2, &[r(s), r(s), r(s), r(-s)])
}
