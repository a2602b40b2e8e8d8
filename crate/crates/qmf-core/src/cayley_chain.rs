//! Markov chains on Cayley trees from a homogeneous edge kernel.
//!
//! A [`ChainSpec`] bundles an order-k Cayley tree, a two-site kernel K, a
//! positive boundary weight h, and a positive root weight w0 subject to the
//! two compatibility equations (normalized traces throughout):
//!
//! ```text
//! (root)  NTr(w0 h) = 1
//! (bulk)  NTr_x( Π_i K_<x,(x,i)>  ·  Π_i h_(x,i)  ·  Π_i K*_<x,(x,k+1-i)> ) = h_x
//! ```
//!
//! From these the finite-volume functionals
//! φ⁽ⁿ⁾(a) = NTr(W_{n+1]} (a ⊗ 1)) with W_{n]} = K_n* K_n are compatible
//! across n and define one state on the infinite tree. The module builds
//! the K_n products explicitly at small n, reduces the outermost layer
//! through the exactly equivalent local collapse map when the dense
//! operator would be too large, implements the quasi-conditional
//! expectations E_n, and packages the one-level action on a single-site
//! observable as a d²×d² [`TransferSuperoperator`] whose subleading
//! eigenvalue governs clustering.
//!
//! Kernel products within one vertex block are ordered by ascending child
//! index, with the adjoint product reversed; the order matters for kernels
//! that do not commute with their siblings.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::algebra::{LocalOperator, TOL_EQ};
use crate::error::{Error, Result};
use crate::graph::{Tree, Vertex};

fn r(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// An order-k Cayley tree with a homogeneous edge kernel and solved (or
/// supplied) boundary and root weights. Construction validates positivity
/// and both compatibility equations; the initial (shift-invariance)
/// condition is *not* required and can be probed separately.
#[derive(Clone, Debug)]
pub struct ChainSpec {
    tree: Tree,
    k: usize,
    d: usize,
    kernel: DMatrix<C64>,
    h: DMatrix<C64>,
    w0: DMatrix<C64>,
    alpha: Option<f64>,
    h_sqrt: DMatrix<C64>,
    w0_sqrt: DMatrix<C64>,
}

impl ChainSpec {
    pub fn new(
        k: usize,
        depth: usize,
        d: usize,
        kernel: DMatrix<C64>,
        h: DMatrix<C64>,
        w0: DMatrix<C64>,
    ) -> Result<Self> {
        if depth < 2 {
            return Err(Error::InvalidParameter(
                "chain trees need depth >= 2".into(),
            ));
        }
        let tree = Tree::cayley(k, depth)?;
        let dd = d * d;
        if kernel.nrows() != dd || kernel.ncols() != dd {
            return Err(Error::InvalidParameter(format!(
                "kernel is {}x{}, expected {dd}x{dd}",
                kernel.nrows(),
                kernel.ncols()
            )));
        }
        let h_sqrt = hermitian_sqrt(&h)?;
        let w0_sqrt = hermitian_sqrt(&w0)?;
        let alpha = scalar_multiple_of_identity(&h);
        let spec = ChainSpec {
            tree,
            k,
            d,
            kernel,
            h,
            w0,
            alpha,
            h_sqrt,
            w0_sqrt,
        };
        let root_res = spec.root_weight_residual();
        if root_res > TOL_EQ {
            return Err(Error::InvalidParameter(format!(
                "root pairing NTr(w0 h) = 1 violated by {root_res:.3e}"
            )));
        }
        let bulk_res = spec.boundary_weight_residual()?;
        if bulk_res > TOL_EQ {
            return Err(Error::InvalidParameter(format!(
                "bulk boundary-weight equation violated by {bulk_res:.3e}"
            )));
        }
        Ok(spec)
    }

    /// Solve for h (and α when scalar) and w0, then assemble the spec.
    pub fn solve(k: usize, depth: usize, d: usize, kernel: DMatrix<C64>) -> Result<Self> {
        let (h, alpha) = solve_boundary_weight(&kernel, d, k)?;
        let w0 = solve_root_weight(&kernel, &h, d, k)?;
        let mut spec = ChainSpec::new(k, depth, d, kernel, h, w0)?;
        spec.alpha = alpha.or(spec.alpha);
        Ok(spec)
    }

    /// The same chain with a different root weight (rescaled so the root
    /// pairing holds). The bulk equation does not involve w0, so the
    /// result is a valid spec; shift invariance is generally lost.
    pub fn with_root_weight(&self, w0: DMatrix<C64>) -> Result<Self> {
        let pairing = (&w0 * &self.h).trace() / r(self.d as f64);
        if pairing.norm() < 1e-12 {
            return Err(Error::Singular(
                "replacement root weight is orthogonal to h".into(),
            ));
        }
        let w0 = w0 / pairing;
        ChainSpec::new(
            self.k,
            self.tree.depth(),
            self.d,
            self.kernel.clone(),
            self.h.clone(),
            w0,
        )
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn kernel(&self) -> &DMatrix<C64> {
        &self.kernel
    }

    pub fn h(&self) -> &DMatrix<C64> {
        &self.h
    }

    pub fn w0(&self) -> &DMatrix<C64> {
        &self.w0
    }

    /// α when h = αI.
    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    fn kernel_op(&self, parent: &Vertex, child: &Vertex) -> Result<LocalOperator> {
        LocalOperator::two_site(parent.clone(), child.clone(), self.d, self.kernel.clone())
    }

    fn site_op(&self, site: &Vertex, m: &DMatrix<C64>) -> Result<LocalOperator> {
        LocalOperator::from_site_matrix(site.clone(), self.d, m.clone())
    }

    fn h_inv_sqrt(&self) -> Result<DMatrix<C64>> {
        hermitian_inv_sqrt(&self.h, "boundary weight h")
    }

    /// |NTr(w0 h) - 1|.
    pub fn root_weight_residual(&self) -> f64 {
        ((&self.w0 * &self.h).trace() / r(self.d as f64) - r(1.0)).norm()
    }

    /// Max deviation of NTr_x(ΠK Πh ΠK*) from h on one vertex block.
    pub fn boundary_weight_residual(&self) -> Result<f64> {
        let m = bulk_map_image(&self.kernel, &self.h, self.d, self.k)?;
        Ok(max_abs(&(m - &self.h)))
    }

    /// Max over child index i of the deviation of
    /// NTr_(i)(w0 ΠK Πh (ΠK)*) from h^{1/2} w0 h^{1/2}.
    pub fn initial_condition_residual(&self) -> Result<f64> {
        let rhs = &self.h_sqrt * &self.w0 * &self.h_sqrt;
        let mut worst = 0.0f64;
        for i in 1..=self.k {
            let lhs = initial_map_image(&self.kernel, &self.h, &self.w0, self.d, self.k, i)?;
            worst = worst.max(max_abs(&(lhs - &rhs)));
        }
        Ok(worst)
    }

    /// NPTr onto the parent of the literal kernel square on one edge.
    pub fn parent_trace_of_kernel_squared(&self) -> Result<DMatrix<C64>> {
        let root = Vertex::root();
        let child = root.child(1);
        let k_op = self.kernel_op(&root, &child)?;
        let sq = k_op.mul(&k_op)?;
        Ok(sq
            .partial_trace_normalized(std::slice::from_ref(&root))?
            .into_matrix())
    }

    /// NPTr_x(K_<x,y> K_<x,z> e_ij^(y) K*_<x,z> K*_<x,y>) with y the first
    /// child: the undressed one-level trace behind the clustering argument
    /// (1-based unit indices).
    pub fn raw_transfer_trace(&self, i: usize, j: usize) -> Result<DMatrix<C64>> {
        let root = Vertex::root();
        let block = self.root_block()?;
        let unit = LocalOperator::matrix_unit(root.child(1), self.d, i, j)?.embed(&block)?;
        let prod = self.block_kernel_product(&root)?;
        let sandwich = prod.mul(&unit)?.mul(&prod.adjoint())?;
        Ok(sandwich
            .partial_trace_normalized(std::slice::from_ref(&root))?
            .into_matrix())
    }

    fn root_block(&self) -> Result<Vec<Vertex>> {
        let root = Vertex::root();
        let mut block = vec![root.clone()];
        block.extend(self.tree.successors(&root)?);
        block.sort();
        Ok(block)
    }

    /// Π_i K_<x,(x,i)> over the children of x, ascending child order,
    /// embedded on the block {x} ∪ S(x).
    fn block_kernel_product(&self, x: &Vertex) -> Result<LocalOperator> {
        let children = self.tree.successors(x)?;
        let mut block = vec![x.clone()];
        block.extend(children.iter().cloned());
        block.sort();
        let mut acc = LocalOperator::identity(block.clone(), self.d)?;
        for c in &children {
            acc = acc.mul(&self.kernel_op(x, c)?.embed(&block)?)?;
        }
        Ok(acc)
    }

    /// The dense product K_N = w0^{1/2} Π_{E_1}K ··· Π_{E_N \ E_{N-1}}K on
    /// the ball of radius `levels` (without the outermost h^{1/2} factors).
    fn kernel_chain(&self, levels: usize) -> Result<LocalOperator> {
        let (_, ball) = self.tree.levels(levels)?;
        let sites = ball.sites();
        let mut acc = self
            .site_op(&Vertex::root(), &self.w0_sqrt)?
            .embed(&sites)?;
        for m in 1..=levels {
            let (w_prev, _) = self.tree.levels(m - 1)?;
            for x in &w_prev {
                for c in self.tree.successors(x)? {
                    acc = acc.mul(&self.kernel_op(x, &c)?.embed(&sites)?)?;
                }
            }
        }
        Ok(acc)
    }

    /// W_{n+1]} = K_{n+1}* K_{n+1} as a dense operator on the ball of
    /// radius n+1. Fails with a dimension-cap error beyond desk scale.
    pub fn weight_operator(&self, n: usize) -> Result<LocalOperator> {
        let mut k_chain = self.kernel_chain(n + 1)?;
        let sites = k_chain.support().to_vec();
        let (w_outer, _) = self.tree.levels(n + 1)?;
        for x in &w_outer {
            k_chain = k_chain.mul(&self.site_op(x, &self.h_sqrt)?.embed(&sites)?)?;
        }
        k_chain.adjoint().mul(&k_chain)
    }

    /// The d²×d² collapse superoperator of the outermost layer: on one
    /// vertex block, c ↦ NPTr_x( (ΠK Πh^{1/2})† (c ⊗ 1) (ΠK Πh^{1/2}) ).
    fn outer_collapse_superop(&self) -> Result<DMatrix<C64>> {
        let root = Vertex::root();
        let block = self.root_block()?;
        let mut dressing = self.block_kernel_product(&root)?;
        for c in self.tree.successors(&root)? {
            dressing = dressing.mul(&self.site_op(&c, &self.h_sqrt)?.embed(&block)?)?;
        }
        let d = self.d;
        let mut s = DMatrix::zeros(d * d, d * d);
        for p in 0..d {
            for q in 0..d {
                let unit = LocalOperator::matrix_unit(root.clone(), d, p + 1, q + 1)?
                    .embed(&block)?;
                let image = dressing
                    .adjoint()
                    .mul(&unit)?
                    .mul(&dressing)?
                    .partial_trace_normalized(std::slice::from_ref(&root))?;
                for a in 0..d {
                    for b in 0..d {
                        s[(a * d + b, p * d + q)] = image.matrix()[(a, b)];
                    }
                }
            }
        }
        Ok(s)
    }

    /// The reduced representative of φ⁽ⁿ⁾ on the ball of radius n: the
    /// dense middle chain with the outermost dressed layer collapsed onto
    /// the level-n legs through the exact local map. One radius cheaper
    /// than `weight_operator`.
    pub fn reduced_weight_operator(&self, n: usize) -> Result<LocalOperator> {
        let g = self.kernel_chain(n)?;
        let mut y = g.adjoint().mul(&g)?;
        let superop = self.outer_collapse_superop()?;
        let (w_n, _) = self.tree.levels(n)?;
        for x in &w_n {
            y = y.apply_single_site_map(x, &superop)?;
        }
        Ok(y)
    }

    /// φ⁽ⁿ⁾(a) = NTr(W_{n+1]}(a ⊗ 1)) for a supported in the ball of
    /// radius n, through the cheapest exact route.
    pub fn phi_n(&self, n: usize, a: &LocalOperator) -> Result<C64> {
        match self.phi_n_explicit(n, a) {
            Err(Error::DimensionCap { .. }) => self.phi_n_reduced(n, a),
            other => other,
        }
    }

    fn check_ball_support(&self, n: usize, a: &LocalOperator) -> Result<()> {
        for s in a.support() {
            if s.level() > n {
                return Err(Error::SupportMismatch(format!(
                    "support vertex {s} outside the ball of radius {n}"
                )));
            }
        }
        Ok(())
    }

    /// φ⁽ⁿ⁾ through the dense W_{n+1]} product.
    pub fn phi_n_explicit(&self, n: usize, a: &LocalOperator) -> Result<C64> {
        self.check_ball_support(n, a)?;
        let w = self.weight_operator(n)?;
        let embedded = a.embed(w.support())?;
        Ok(w.mul(&embedded)?.normalized_trace())
    }

    /// φ⁽ⁿ⁾ through the reduced representative.
    pub fn phi_n_reduced(&self, n: usize, a: &LocalOperator) -> Result<C64> {
        self.check_ball_support(n, a)?;
        let red = self.reduced_weight_operator(n)?;
        let embedded = a.embed(red.support())?;
        Ok(red.mul(&embedded)?.normalized_trace())
    }

    /// The quasi-conditional expectation E_n: operators on the ball of
    /// radius n+1 to operators on the ball of radius n,
    ///
    /// ```text
    /// E_n(a) = NTr_{n]}( Π h^{-1/2}_{W_n} ΠK Π h^{1/2}_{W_{n+1}} · a · adjoint )
    /// ```
    ///
    /// built densely; requires invertible h.
    pub fn quasi_cond_expectation(&self, n: usize, a: &LocalOperator) -> Result<LocalOperator> {
        self.check_ball_support(n + 1, a)?;
        let h_inv_sqrt = self.h_inv_sqrt()?;
        let (_, outer_ball) = self.tree.levels(n + 1)?;
        let sites = outer_ball.sites();
        let (w_n, inner_ball) = self.tree.levels(n)?;
        let mut dressing = LocalOperator::identity(sites.clone(), self.d)?;
        for x in &w_n {
            dressing = dressing.mul(&self.site_op(x, &h_inv_sqrt)?.embed(&sites)?)?;
        }
        for x in &w_n {
            for c in self.tree.successors(x)? {
                dressing = dressing.mul(&self.kernel_op(x, &c)?.embed(&sites)?)?;
            }
        }
        let (w_next, _) = self.tree.levels(n + 1)?;
        for y in &w_next {
            dressing = dressing.mul(&self.site_op(y, &self.h_sqrt)?.embed(&sites)?)?;
        }
        let sandwich = dressing
            .mul(&a.embed(&sites)?)?
            .mul(&dressing.adjoint())?;
        sandwich.partial_trace_normalized(&inner_ball.sites())
    }

    /// One E-step applied blockwise to a small-support operator: for every
    /// level-`l` parent whose block meets the support, conjugate by the
    /// local dressing and trace the children out. Exactly E_l restricted
    /// to small supports.
    fn expectation_step(&self, op: LocalOperator, l: usize) -> Result<LocalOperator> {
        let h_inv_sqrt = self.h_inv_sqrt()?;
        let (w_l, _) = self.tree.levels(l)?;
        let mut acc = op;
        for x in &w_l {
            let children = self.tree.successors(x)?;
            let touches = acc.support().iter().any(|s| {
                s == x || children.contains(s)
            });
            if !touches {
                continue;
            }
            let mut region: Vec<Vertex> = acc.support().to_vec();
            region.push(x.clone());
            region.extend(children.iter().cloned());
            region.sort();
            region.dedup();
            let mut dressing = self.site_op(x, &h_inv_sqrt)?.embed(&region)?;
            for c in &children {
                dressing = dressing.mul(&self.kernel_op(x, c)?.embed(&region)?)?;
            }
            for c in &children {
                dressing = dressing.mul(&self.site_op(c, &self.h_sqrt)?.embed(&region)?)?;
            }
            let sandwich = dressing
                .mul(&acc.embed(&region)?)?
                .mul(&dressing.adjoint())?;
            let keep: Vec<Vertex> = region
                .iter()
                .filter(|s| !children.contains(s))
                .cloned()
                .collect();
            acc = sandwich.partial_trace_normalized(&keep)?;
        }
        Ok(acc)
    }

    /// The chain evaluation: with m the support radius,
    /// NTr(h^{1/2} w0 h^{1/2} · E_0 ∘ E_1 ∘ ... ∘ E_m(a)).
    pub fn chain_expect(&self, a: &LocalOperator) -> Result<C64> {
        let m = a.support().iter().map(Vertex::level).max().unwrap_or(0);
        let mut op = a.clone();
        for l in (0..=m).rev() {
            op = self.expectation_step(op, l)?;
        }
        let rho = &self.h_sqrt * &self.w0 * &self.h_sqrt;
        let rho_op = self.site_op(&Vertex::root(), &rho)?;
        Ok(rho_op.mul(&op)?.normalized_trace())
    }

    /// max over the matrix-unit basis of the radius-n ball algebra of
    /// |φ⁽ⁿ⁺¹⁾(a ⊗ 1) - φ⁽ⁿ⁾(a)|.
    pub fn compatibility_check(&self, n: usize) -> Result<f64> {
        let (_, ball) = self.tree.levels(n)?;
        let sites = ball.sites();
        let rho_n = {
            let w = self.phi_weight_any(n)?;
            w.partial_trace_normalized(&sites)?
        };
        let rho_next = {
            let w = self.phi_weight_any(n + 1)?;
            w.partial_trace_normalized(&sites)?
        };
        // On matrix units, |φ'(E_rs) - φ(E_rs)| is an entry difference of
        // the reduced representatives over the ball dimension.
        let dim = rho_n.dim() as f64;
        let mut worst = 0.0f64;
        for s in 0..rho_n.dim() {
            for t in 0..rho_n.dim() {
                let dev = (rho_n.matrix()[(s, t)] - rho_next.matrix()[(s, t)]).norm() / dim;
                worst = worst.max(dev);
            }
        }
        Ok(worst)
    }

    fn phi_weight_any(&self, n: usize) -> Result<LocalOperator> {
        match self.weight_operator(n) {
            Err(Error::DimensionCap { .. }) => self.reduced_weight_operator(n),
            other => other,
        }
    }

    /// The observable shifted into the i-th subtree: every support vertex
    /// gains the prefix i.
    pub fn shift_observable(&self, i: usize, a: &LocalOperator) -> Result<LocalOperator> {
        let mut shifted = Vec::with_capacity(a.support().len());
        for s in a.support() {
            shifted.push(self.tree.shift_vertex(i, s)?);
        }
        LocalOperator::new(shifted, self.d, a.matrix().clone())
    }

    /// max over the samples of |chain(γ_i(a)) - chain(a)|.
    pub fn shift_invariance_check(&self, i: usize, samples: &[LocalOperator]) -> Result<f64> {
        let mut worst = 0.0f64;
        for a in samples {
            let direct = self.chain_expect(a)?;
            let shifted = self.chain_expect(&self.shift_observable(i, a)?)?;
            worst = worst.max((direct - shifted).norm());
        }
        Ok(worst)
    }

    /// One level of the quasi-conditional expectation on a single-site
    /// observable along a first-child path: the descend map
    ///
    /// ```text
    /// T(b) = h^{-1/2} NTr_x( ΠK (1_x ⊗ h^{1/2} b h^{1/2} ⊗ h ⊗ ... ) (ΠK)† ) h^{-1/2}
    /// ```
    ///
    /// with the observable slot on the first child and h on the spectator
    /// children.
    pub fn transfer_superoperator(&self) -> Result<TransferSuperoperator> {
        let root = Vertex::root();
        let first = root.child(1);
        let block = self.root_block()?;
        let h_inv_sqrt = self.h_inv_sqrt()?;
        let prod = self.block_kernel_product(&root)?;
        let d = self.d;
        let mut s = DMatrix::zeros(d * d, d * d);
        for p in 0..d {
            for q in 0..d {
                let unit = LocalOperator::matrix_unit(first.clone(), d, p + 1, q + 1)?;
                let dressed_mat = &self.h_sqrt * unit.matrix() * &self.h_sqrt;
                let mut middle = self.site_op(&first, &dressed_mat)?.embed(&block)?;
                for c in self.tree.successors(&root)? {
                    if c != first {
                        middle = middle.mul(&self.site_op(&c, &self.h)?.embed(&block)?)?;
                    }
                }
                let traced = prod
                    .mul(&middle)?
                    .mul(&prod.adjoint())?
                    .partial_trace_normalized(std::slice::from_ref(&root))?;
                let image = &h_inv_sqrt * traced.matrix() * &h_inv_sqrt;
                for a in 0..d {
                    for b in 0..d {
                        s[(a * d + b, p * d + q)] = image[(a, b)];
                    }
                }
            }
        }
        Ok(TransferSuperoperator { d, mat: s })
    }

    /// The stay map: E_l acting on an observable at a level-l site (both
    /// children dressed with h and traced). Used to start the transfer
    /// pipeline at the observable's own level.
    pub fn stay_superoperator(&self) -> Result<DMatrix<C64>> {
        let root = Vertex::root();
        let d = self.d;
        let mut s = DMatrix::zeros(d * d, d * d);
        for p in 0..d {
            for q in 0..d {
                let unit = LocalOperator::matrix_unit(root.clone(), d, p + 1, q + 1)?;
                let image = self.expectation_step(unit, 0)?;
                let image = image.embed(std::slice::from_ref(&root))?;
                for a in 0..d {
                    for b in 0..d {
                        s[(a * d + b, p * d + q)] = image.matrix()[(a, b)];
                    }
                }
            }
        }
        Ok(s)
    }

    /// The root pairing NTr(h^{1/2} w0 h^{1/2} · E_0(b · c@(1))) that
    /// closes the transfer pipeline; linear in the matrix c carried at the
    /// first child.
    fn joint_root_value(&self, b: &LocalOperator, c: &DMatrix<C64>) -> Result<C64> {
        let c_op = self.site_op(&Vertex::root().child(1), c)?;
        let joint = b.mul(&c_op)?;
        let e0 = self.quasi_cond_expectation(0, &joint)?;
        let rho = &self.h_sqrt * &self.w0 * &self.h_sqrt;
        let rho_op = self.site_op(&Vertex::root(), &rho)?;
        Ok(rho_op.mul(&e0)?.normalized_trace())
    }

    /// Correlation decay between a root observable and its n-fold shift:
    /// δ_n = |φ(γ_1^n(a)·b) - φ(a)φ(b)| for n = 1..=n_max via transfer
    /// powers, cross-checked against the dense functionals at n ≤ 2, with
    /// the subleading transfer eigenvalue reported as the asymptotic rate.
    pub fn clustering_decay(
        &self,
        a: &LocalOperator,
        b: &LocalOperator,
        n_max: usize,
    ) -> Result<ClusteringReport> {
        for op in [a, b] {
            if op.support() != [Vertex::root()] {
                return Err(Error::SupportMismatch(
                    "clustering observables must live on the root site".into(),
                ));
            }
        }
        let transfer = self.transfer_superoperator()?;
        let stay = self.stay_superoperator()?;
        let phi_a = self.chain_expect(a)?;
        let phi_b = self.chain_expect(b)?;
        // Propagate the traceless (connected) part of the observable:
        // φ(γⁿ(a)b) - φ(a)φ(b) is linear in T^{n-1}(T̃(a) - φ(a)·1)
        // because the transfer map is unital, and this form avoids the
        // catastrophic cancellation of subtracting two near-equal
        // expectations once the correlations are small.
        let id = DMatrix::<C64>::identity(self.d, self.d);
        let mut connected = apply_superop(&stay, a.matrix(), self.d) - id * phi_a;
        let mut deltas = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            if n > 1 {
                connected = transfer.apply(&connected);
            }
            let correlation = self.joint_root_value(b, &connected)?;
            deltas.push(DecayPoint {
                n,
                value: correlation + phi_a * phi_b,
                delta: correlation.norm(),
            });
        }
        let mut brute_checks = Vec::new();
        for point in deltas.iter().take(2) {
            let shifted = {
                let mut op = a.clone();
                for _ in 0..point.n {
                    op = self.shift_observable(1, &op)?;
                }
                op
            };
            let product = shifted.mul(b)?;
            let brute = self.phi_n(point.n, &product)?;
            brute_checks.push((point.n, (point.value - brute).norm()));
        }
        let moduli = transfer.eigenvalue_moduli()?;
        let rate = moduli.get(1).copied().unwrap_or(0.0);
        let mut warnings = Vec::new();
        if rate >= 1.0 {
            warnings.push(format!(
                "subleading transfer eigenvalue modulus {rate:.6} is not below 1; \
                 decay of off-diagonal correlations is not guaranteed at this β"
            ));
        }
        Ok(ClusteringReport {
            deltas,
            phi_a,
            phi_b,
            rate,
            eigenvalue_moduli: moduli,
            brute_checks,
            warnings,
        })
    }
}

/// One point of a decay table.
#[derive(Clone, Debug, Serialize)]
pub struct DecayPoint {
    pub n: usize,
    pub value: C64,
    pub delta: f64,
}

/// Clustering diagnostics for a pair of root observables.
#[derive(Clone, Debug, Serialize)]
pub struct ClusteringReport {
    pub deltas: Vec<DecayPoint>,
    pub phi_a: C64,
    pub phi_b: C64,
    /// Modulus of the subleading transfer eigenvalue.
    pub rate: f64,
    pub eigenvalue_moduli: Vec<f64>,
    /// (n, deviation) of the transfer pipeline from the dense functional.
    pub brute_checks: Vec<(usize, f64)>,
    pub warnings: Vec<String>,
}

/// A d²×d² matrix acting on single-site operators through row-major
/// vectorization; one level of the quasi-conditional expectation on a
/// first-child path.
#[derive(Clone, Debug)]
pub struct TransferSuperoperator {
    d: usize,
    mat: DMatrix<C64>,
}

impl TransferSuperoperator {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn apply(&self, b: &DMatrix<C64>) -> DMatrix<C64> {
        apply_superop(&self.mat, b, self.d)
    }

    /// Max deviation of T(1) from 1; zero when the bulk equation holds.
    pub fn unitality_deviation(&self) -> f64 {
        let id = DMatrix::identity(self.d, self.d);
        max_abs(&(self.apply(&id) - id))
    }

    /// Eigenvalues sorted by descending modulus.
    pub fn eigenvalues(&self) -> Result<Vec<C64>> {
        let schur = self.mat.clone().schur();
        let evs = schur.eigenvalues().ok_or(Error::NonConvergence {
            iterations: 0,
            residual: f64::NAN,
        })?;
        let mut out: Vec<C64> = evs.iter().cloned().collect();
        out.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).expect("finite"));
        Ok(out)
    }

    pub fn eigenvalue_moduli(&self) -> Result<Vec<f64>> {
        Ok(self.eigenvalues()?.into_iter().map(|z| z.norm()).collect())
    }
}

fn apply_superop(s: &DMatrix<C64>, b: &DMatrix<C64>, d: usize) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(d, d);
    for a in 0..d {
        for bb in 0..d {
            let mut acc = r(0.0);
            for p in 0..d {
                for q in 0..d {
                    acc += s[(a * d + bb, p * d + q)] * b[(p, q)];
                }
            }
            out[(a, bb)] = acc;
        }
    }
    out
}

fn scalar_multiple_of_identity(m: &DMatrix<C64>) -> Option<f64> {
    let c = m[(0, 0)];
    if c.im.abs() > 1e-12 {
        return None;
    }
    let id = DMatrix::<C64>::identity(m.nrows(), m.ncols());
    if max_abs(&(m - id.scale(c.re))) <= 1e-12 {
        Some(c.re)
    } else {
        None
    }
}

fn hermitian_sqrt(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let dev = max_abs(&(m - m.adjoint()));
    if dev > TOL_EQ {
        return Err(Error::NonHermitian { deviation: dev });
    }
    let eig = m.clone().symmetric_eigen();
    if let Some(&min) = eig
        .eigenvalues
        .iter()
        .min_by(|a, b| a.partial_cmp(b).expect("finite"))
    {
        if min < -TOL_EQ {
            return Err(Error::NotPositive {
                min_eigenvalue: min,
            });
        }
    }
    let n = m.nrows();
    let mut diag = DMatrix::zeros(n, n);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        diag[(i, i)] = r(l.max(0.0).sqrt());
    }
    Ok(&eig.eigenvectors * diag * eig.eigenvectors.adjoint())
}

fn hermitian_inv_sqrt(m: &DMatrix<C64>, what: &str) -> Result<DMatrix<C64>> {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut diag = DMatrix::zeros(n, n);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l < 1e-12 {
            return Err(Error::Singular(format!(
                "{what} must be invertible for quasi-conditional expectations \
                 (eigenvalue {l:.3e})"
            )));
        }
        diag[(i, i)] = r(1.0 / l.sqrt());
    }
    Ok(&eig.eigenvectors * diag * eig.eigenvectors.adjoint())
}

/// NTr_x(ΠK (⊗_i h) ΠK*-reversed) on one vertex block, as a function of h.
fn bulk_map_image(kernel: &DMatrix<C64>, h: &DMatrix<C64>, d: usize, k: usize) -> Result<DMatrix<C64>> {
    let root = Vertex::root();
    let mut block: Vec<Vertex> = vec![root.clone()];
    let children: Vec<Vertex> = (1..=k as u32).map(|i| root.child(i)).collect();
    block.extend(children.iter().cloned());
    block.sort();
    let mut prod = LocalOperator::identity(block.clone(), d)?;
    for c in &children {
        let op = LocalOperator::two_site(root.clone(), c.clone(), d, kernel.clone())?;
        prod = prod.mul(&op.embed(&block)?)?;
    }
    let mut middle = LocalOperator::identity(block.clone(), d)?;
    for c in &children {
        let op = LocalOperator::from_site_matrix(c.clone(), d, h.clone())?;
        middle = middle.mul(&op.embed(&block)?)?;
    }
    let sandwich = prod.mul(&middle)?.mul(&prod.adjoint())?;
    Ok(sandwich
        .partial_trace_normalized(std::slice::from_ref(&root))?
        .into_matrix())
}

/// NTr_(i)(w0 ΠK (⊗h) (ΠK)*) onto the i-th child (1-based).
fn initial_map_image(
    kernel: &DMatrix<C64>,
    h: &DMatrix<C64>,
    w0: &DMatrix<C64>,
    d: usize,
    k: usize,
    i: usize,
) -> Result<DMatrix<C64>> {
    if i == 0 || i > k {
        return Err(Error::InvalidParameter(format!(
            "child index {i} outside 1..={k}"
        )));
    }
    let root = Vertex::root();
    let mut block: Vec<Vertex> = vec![root.clone()];
    let children: Vec<Vertex> = (1..=k as u32).map(|c| root.child(c)).collect();
    block.extend(children.iter().cloned());
    block.sort();
    let w0_op = LocalOperator::from_site_matrix(root.clone(), d, w0.clone())?.embed(&block)?;
    let mut prod = LocalOperator::identity(block.clone(), d)?;
    for c in &children {
        let op = LocalOperator::two_site(root.clone(), c.clone(), d, kernel.clone())?;
        prod = prod.mul(&op.embed(&block)?)?;
    }
    let mut middle = LocalOperator::identity(block.clone(), d)?;
    for c in &children {
        let op = LocalOperator::from_site_matrix(c.clone(), d, h.clone())?;
        middle = middle.mul(&op.embed(&block)?)?;
    }
    let sandwich = w0_op.mul(&prod)?.mul(&middle)?.mul(&prod.adjoint())?;
    let keep = vec![children[i - 1].clone()];
    Ok(sandwich.partial_trace_normalized(&keep)?.into_matrix())
}

/// Solve the bulk equation for a homogeneous boundary weight.
///
/// Scalar mode first: with h = αI the equation fixes α from
/// NTr_x(ΠK ΠK*) = cI through α^(k-1) c = 1. When the traced product is
/// not a multiple of the identity, fall over to a trace-normalized
/// fixed-point iteration on the full matrix; the overall scale is then
/// fixed by the degree-k homogeneity of the map.
pub fn solve_boundary_weight(
    kernel: &DMatrix<C64>,
    d: usize,
    k: usize,
) -> Result<(DMatrix<C64>, Option<f64>)> {
    let id = DMatrix::<C64>::identity(d, d);
    let m = bulk_map_image(kernel, &id, d, k)?;
    if let Some(c) = scalar_multiple_of_identity_tol(&m, TOL_EQ) {
        if c > 0.0 {
            if k >= 2 {
                let alpha = c.powf(-1.0 / (k as f64 - 1.0));
                return Ok((id.scale(alpha), Some(alpha)));
            }
            if (c - 1.0).abs() <= TOL_EQ {
                return Ok((id, Some(1.0)));
            }
        }
    }
    // Full mode: iterate ĥ ↦ NTr_x(ΠK (⊗ĥ) ΠK*)/scale with NTr(ĥ) = 1.
    let mut h_hat = id.clone();
    let mut c_scale = 1.0f64;
    let mut converged = false;
    let mut last_residual = f64::INFINITY;
    const MAX_ITER: usize = 10_000;
    for _ in 0..MAX_ITER {
        let image = bulk_map_image(kernel, &h_hat, d, k)?;
        let c = (image.trace() / r(d as f64)).re;
        if !(c.is_finite() && c > 1e-300) {
            return Err(Error::NonConvergence {
                iterations: MAX_ITER,
                residual: f64::NAN,
            });
        }
        let mut next = image.unscale(c);
        next = (&next + next.adjoint()).unscale(2.0);
        last_residual = max_abs(&(&next - &h_hat));
        h_hat = next;
        c_scale = c;
        if last_residual < 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations: MAX_ITER,
            residual: last_residual,
        });
    }
    let h = if k >= 2 {
        h_hat.scale(c_scale.powf(-1.0 / (k as f64 - 1.0)))
    } else {
        if (c_scale - 1.0).abs() > 1e-8 {
            return Err(Error::NonConvergence {
                iterations: MAX_ITER,
                residual: (c_scale - 1.0).abs(),
            });
        }
        h_hat
    };
    let eig = h.clone().symmetric_eigen();
    if let Some(&min) = eig
        .eigenvalues
        .iter()
        .min_by(|a, b| a.partial_cmp(b).expect("finite"))
    {
        if min < -TOL_EQ {
            return Err(Error::NotPositive {
                min_eigenvalue: min,
            });
        }
    }
    let alpha = scalar_multiple_of_identity(&h);
    Ok((h, alpha))
}

fn scalar_multiple_of_identity_tol(m: &DMatrix<C64>, tol: f64) -> Option<f64> {
    let c = m[(0, 0)];
    if c.im.abs() > tol {
        return None;
    }
    let id = DMatrix::<C64>::identity(m.nrows(), m.ncols());
    if max_abs(&(m - id.scale(c.re))) <= tol {
        Some(c.re)
    } else {
        None
    }
}

/// Solve the initial condition for the root weight: the linear map
/// S(w) = h^{-1/2} NTr_(1)(w ΠK (⊗h) (ΠK)*) h^{-1/2} must fix w; the
/// fixed direction is extracted as the null vector of S - 1 and scaled by
/// the root pairing. A multi-dimensional fixed space is surfaced as an
/// error rather than resolved by an arbitrary choice.
pub fn solve_root_weight(
    kernel: &DMatrix<C64>,
    h: &DMatrix<C64>,
    d: usize,
    k: usize,
) -> Result<DMatrix<C64>> {
    let h_inv_sqrt = hermitian_inv_sqrt(h, "boundary weight h")?;
    let dd = d * d;
    let mut s = DMatrix::<C64>::zeros(dd, dd);
    for p in 0..d {
        for q in 0..d {
            let mut unit = DMatrix::<C64>::zeros(d, d);
            unit[(p, q)] = r(1.0);
            let image_raw = initial_map_image(kernel, h, &unit, d, k, 1)?;
            let image = &h_inv_sqrt * image_raw * &h_inv_sqrt;
            for a in 0..d {
                for b in 0..d {
                    s[(a * d + b, p * d + q)] = image[(a, b)];
                }
            }
        }
    }
    let shifted = &s - DMatrix::<C64>::identity(dd, dd);
    let svd = shifted.svd(false, true);
    let mut null_indices: Vec<usize> = (0..dd)
        .filter(|&i| svd.singular_values[i] <= 1e-8)
        .collect();
    match null_indices.len() {
        0 => Err(Error::Singular(
            "the initial condition has no fixed direction within 1e-8".into(),
        )),
        1 => {
            let idx = null_indices.pop().expect("one element");
            let v_t = svd.v_t.as_ref().expect("requested");
            let v = v_t.row(idx).adjoint();
            let mut w = DMatrix::<C64>::zeros(d, d);
            for p in 0..d {
                for q in 0..d {
                    w[(p, q)] = v[p * d + q];
                }
            }
            // Fix the global phase by the trace, then hermitize.
            let t = w.trace();
            if t.norm() > 1e-10 {
                w = w.scale(1.0) * (t.conj() / t.norm());
            }
            let w = (&w + w.adjoint()).unscale(2.0);
            let eig = w.clone().symmetric_eigen();
            let min = eig
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            let max = eig
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            if min < -1e-8 * max.abs().max(1.0) {
                return Err(Error::NotPositive {
                    min_eigenvalue: min,
                });
            }
            let pairing = ((&w * h).trace() / r(d as f64)).re;
            if pairing <= 1e-12 {
                return Err(Error::Singular(
                    "root pairing of the fixed direction vanishes".into(),
                ));
            }
            Ok(w.unscale(pairing))
        }
        m => Err(Error::DegenerateFixedPoint { multiplicity: m }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::herm_exp;
    use crate::kernels::{
        alpha_closed_form, analytic_oracle, diagonal_kernel, diagonal_projector, hopping_kernel,
        KernelFamily,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const BETA_GRID: [f64; 4] = [0.1, 0.2, 0.5, 1.0];

    fn v(path: &[u32]) -> Vertex {
        Vertex::new(path.to_vec()).unwrap()
    }

    fn unit(site: Vertex, i: usize, j: usize) -> LocalOperator {
        LocalOperator::matrix_unit(site, 2, i, j).unwrap()
    }

    fn unit2(i: usize, j: usize) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(2, 2);
        m[(i - 1, j - 1)] = r(1.0);
        m
    }

    fn solve_family(family: KernelFamily, beta: f64) -> ChainSpec {
        ChainSpec::solve(2, 3, 2, crate::kernels::kernel_matrix(family, beta)).unwrap()
    }

    fn random_hermitian_kernel<R: Rng>(rng: &mut R, scale: f64) -> DMatrix<C64> {
        let raw = DMatrix::from_fn(4, 4, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let herm = (&raw + raw.adjoint()).unscale(2.0);
        let op = LocalOperator::two_site(Vertex::root(), v(&[1]), 2, herm).unwrap();
        herm_exp(&op, r(scale)).unwrap().into_matrix()
    }

    #[test]
    fn hopping_alpha_matches_closed_form() {
        for beta in BETA_GRID {
            let spec = solve_family(KernelFamily::Hopping, beta);
            let alpha = spec.alpha().expect("scalar boundary weight");
            assert!(
                (alpha - beta.cosh().powi(-4)).abs() < 1e-10,
                "beta {beta}: alpha {alpha}"
            );
            // w0 ∝ 1 with the root pairing fixing the scale to 1/α.
            let expected_w0 = DMatrix::<C64>::identity(2, 2).scale(1.0 / alpha);
            assert!(max_abs(&(spec.w0() - expected_w0)) < 1e-10);
            assert!(spec.root_weight_residual() < 1e-10);
            assert!(spec.boundary_weight_residual().unwrap() < 1e-10);
            assert!(spec.initial_condition_residual().unwrap() < 1e-10);
        }
    }

    #[test]
    fn diagonal_alpha_matches_closed_form() {
        for beta in BETA_GRID {
            let spec = solve_family(KernelFamily::Diagonal, beta);
            let alpha = spec.alpha().expect("scalar boundary weight");
            let expected = 4.0 / ((2.0 * beta).exp() + 1.0).powi(2);
            assert!((alpha - expected).abs() < 1e-10, "beta {beta}");
            let expected_w0 = DMatrix::<C64>::identity(2, 2).scale(1.0 / alpha);
            assert!(max_abs(&(spec.w0() - expected_w0)) < 1e-10);
            assert!(spec.initial_condition_residual().unwrap() < 1e-10);
        }
    }

    #[test]
    fn beta_zero_gives_the_trace_state() {
        for family in [KernelFamily::Hopping, KernelFamily::Diagonal] {
            let spec = solve_family(family, 0.0);
            assert!((spec.alpha().unwrap() - 1.0).abs() < 1e-12);
            assert!(max_abs(&(spec.h() - DMatrix::identity(2, 2))) < 1e-12);
            assert!(max_abs(&(spec.w0() - DMatrix::identity(2, 2))) < 1e-12);
            let e11 = unit(Vertex::root(), 1, 1);
            for n in 0..=1 {
                let got = spec.phi_n(n, &e11).unwrap();
                assert!((got - r(0.5)).norm() < 1e-12);
            }
            // The transfer map collapses onto the normalized trace.
            let t = spec.transfer_superoperator().unwrap();
            let b = DMatrix::from_row_slice(
                2,
                2,
                &[r(0.3), r(0.1), r(0.1), r(0.7)],
            );
            let expected = DMatrix::<C64>::identity(2, 2).scale(0.5);
            assert!(max_abs(&(t.apply(&b) - expected)) < 1e-12);
        }
    }

    #[test]
    fn solved_specs_reject_wrong_weights() {
        let kernel = hopping_kernel(0.5);
        let id = DMatrix::<C64>::identity(2, 2);
        assert!(matches!(
            ChainSpec::new(2, 3, 2, kernel, id.clone(), id),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn functionals_are_normalized_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for family in [KernelFamily::Hopping, KernelFamily::Diagonal] {
            let spec = solve_family(family, 0.4);
            for n in 0..=2 {
                let id = LocalOperator::identity(vec![Vertex::root()], 2).unwrap();
                let got = spec.phi_n(n, &id).unwrap();
                assert!((got - r(1.0)).norm() < 1e-10, "n = {n}");
            }
            // Positivity on random a*a.
            for _ in 0..5 {
                let raw = DMatrix::from_fn(4, 4, |_, _| {
                    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                });
                let a = LocalOperator::two_site(Vertex::root(), v(&[1]), 2, raw).unwrap();
                let positive = a.adjoint().mul(&a).unwrap();
                let got = spec.phi_n(1, &positive).unwrap();
                assert!(got.re > -1e-12 && got.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reduced_route_matches_explicit_route() {
        // Order 2: both routes available at n = 1.
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for family in [KernelFamily::Hopping, KernelFamily::Diagonal] {
            let spec = solve_family(family, 0.7);
            for _ in 0..3 {
                let raw = DMatrix::from_fn(4, 4, |_, _| {
                    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                });
                let a = LocalOperator::two_site(Vertex::root(), v(&[2]), 2, raw).unwrap();
                let explicit = spec.phi_n_explicit(1, &a).unwrap();
                let reduced = spec.phi_n_reduced(1, &a).unwrap();
                assert!(
                    (explicit - reduced).norm() < 1e-12,
                    "{explicit} vs {reduced}"
                );
            }
        }
    }

    #[test]
    fn reduced_route_matches_explicit_route_on_a_path() {
        // Order 1 keeps the radius-2 ball tiny, so the dense route reaches
        // one level further and cross-checks the collapse at n = 2.
        let h = {
            // σx ⊗ σx, rescaled so the bulk equation has a solution at k=1.
            let mut m = DMatrix::<C64>::zeros(4, 4);
            m[(0, 3)] = r(1.0);
            m[(1, 2)] = r(1.0);
            m[(2, 1)] = r(1.0);
            m[(3, 0)] = r(1.0);
            m
        };
        let beta = 0.3f64;
        let op = LocalOperator::two_site(Vertex::root(), v(&[1]), 2, h).unwrap();
        let kernel = herm_exp(&op, r(beta))
            .unwrap()
            .into_matrix()
            .unscale((2.0 * beta).cosh().sqrt());
        let spec = ChainSpec::solve(1, 4, 2, kernel).unwrap();
        assert!(max_abs(&(spec.h() - DMatrix::identity(2, 2))) < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..3 {
            let raw = DMatrix::from_fn(4, 4, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let a = LocalOperator::two_site(v(&[1]), v(&[1, 1]), 2, raw).unwrap();
            let explicit = spec.phi_n_explicit(2, &a).unwrap();
            let reduced = spec.phi_n_reduced(2, &a).unwrap();
            assert!((explicit - reduced).norm() < 1e-11);
        }
    }

    #[test]
    fn expectation_is_unital_and_localizes() {
        for family in [KernelFamily::Hopping, KernelFamily::Diagonal] {
            let spec = solve_family(family, 0.6);
            for n in 0..=1 {
                let (_, ball) = spec.tree().levels(n + 1).unwrap();
                let id = LocalOperator::identity(ball.sites(), 2).unwrap();
                let e = spec.quasi_cond_expectation(n, &id).unwrap();
                let id_small = LocalOperator::identity(e.support().to_vec(), 2).unwrap();
                assert!(e.max_abs_diff(&id_small).unwrap() < 1e-12, "n = {n}");
            }
            // An observable on the outermost level lands on its parent:
            // the result is recovered from its single-site restriction.
            let a = unit(v(&[1, 1]), 1, 2);
            let e = spec.quasi_cond_expectation(1, &a).unwrap();
            let restricted = e
                .partial_trace_normalized(std::slice::from_ref(&v(&[1])))
                .unwrap();
            let rebuilt = restricted.embed(e.support()).unwrap();
            assert!(e.max_abs_diff(&rebuilt).unwrap() < 1e-10);
        }
    }

    #[test]
    fn expectation_satisfies_the_module_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let spec = solve_family(KernelFamily::Hopping, 0.5);
        for _ in 0..3 {
            let c_raw = DMatrix::from_fn(2, 2, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let c = LocalOperator::from_site_matrix(Vertex::root(), 2, c_raw).unwrap();
            let a_raw = DMatrix::from_fn(4, 4, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let a = LocalOperator::two_site(v(&[1]), v(&[1, 1]), 2, a_raw).unwrap();
            let lhs = spec.quasi_cond_expectation(1, &c.mul(&a).unwrap()).unwrap();
            let rhs = c.mul(&spec.quasi_cond_expectation(1, &a).unwrap()).unwrap();
            assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-10);
        }
    }

    #[test]
    fn expectation_preserves_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let spec = solve_family(KernelFamily::Diagonal, 0.5);
        for _ in 0..5 {
            let raw = DMatrix::from_fn(4, 4, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let a = LocalOperator::two_site(Vertex::root(), v(&[2]), 2, raw).unwrap();
            let positive = a.adjoint().mul(&a).unwrap();
            let e = spec.quasi_cond_expectation(1, &positive).unwrap();
            assert!(e.min_eigenvalue().unwrap() > -1e-10);
        }
    }

    #[test]
    fn hopping_expectation_scales_offdiagonal_units() {
        // E applied to e12 one level down returns (sinh β / cosh²β) e12 at
        // the parent: α = cosh⁻⁴β times the sandwiched trace
        // cosh²β sinh(β) e12. Both factors are cross-checked against the
        // dense route here.
        for beta in [0.2, 0.5, 1.0] {
            let spec = solve_family(KernelFamily::Hopping, beta);
            let a = unit(v(&[1]), 1, 2);
            let e = spec.quasi_cond_expectation(0, &a).unwrap();
            let scale = beta.sinh() / beta.cosh().powi(2);
            let expected = unit(Vertex::root(), 1, 2).scaled(r(scale));
            assert!(e.max_abs_diff(&expected).unwrap() < 1e-12, "beta {beta}");
        }
    }

    #[test]
    fn transfer_map_matches_dressed_traces() {
        for beta in BETA_GRID {
            let hop = solve_family(KernelFamily::Hopping, beta);
            let t = hop.transfer_superoperator().unwrap();
            assert!(t.unitality_deviation() < 1e-12);
            let half_id = DMatrix::<C64>::identity(2, 2).scale(0.5);
            assert!(max_abs(&(t.apply(&unit2(1, 1)) - half_id)) < 1e-12);
            let expected_off = unit2(1, 2).scale(beta.sinh() / beta.cosh().powi(2));
            assert!(max_abs(&(t.apply(&unit2(1, 2)) - expected_off)) < 1e-12);

            let diag = solve_family(KernelFamily::Diagonal, beta);
            let t = diag.transfer_superoperator().unwrap();
            assert!(t.unitality_deviation() < 1e-12);
            let e2b = (2.0 * beta).exp();
            let expected_11 =
                (unit2(1, 1).scale(e2b) + unit2(2, 2)).unscale(e2b + 1.0);
            assert!(max_abs(&(t.apply(&unit2(1, 1)) - expected_11)) < 1e-12);
            assert!(max_abs(&t.apply(&unit2(1, 2))) < 1e-12);
        }
    }

    #[test]
    fn transfer_map_agrees_with_analytic_table() {
        // T = α × (undressed trace table) for scalar h = αI.
        for family in [KernelFamily::Hopping, KernelFamily::Diagonal] {
            for beta in [0.2, 0.8] {
                let spec = solve_family(family, beta);
                let alpha = alpha_closed_form(family, beta);
                let oracle = analytic_oracle(family, beta);
                let t = spec.transfer_superoperator().unwrap();
                for ((i, j), table) in &oracle.transfer_table {
                    let fast = t.apply(&unit2(*i, *j));
                    let raw = spec.raw_transfer_trace(*i, *j).unwrap();
                    assert!(max_abs(&(&raw - table)) < 1e-12);
                    assert!(max_abs(&(fast - table.scale(alpha))) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn transfer_powers_match_literal_compositions() {
        for family in [KernelFamily::Hopping, KernelFamily::Diagonal] {
            let spec = solve_family(family, 0.45);
            let t = spec.transfer_superoperator().unwrap();
            for (i, j) in [(1, 1), (1, 2), (2, 2)] {
                // One level: E_0 on a site at level 1.
                let a1 = unit(v(&[1]), i, j);
                let literal1 = spec.quasi_cond_expectation(0, &a1).unwrap();
                let fast1 = t.apply(&unit2(i, j));
                let fast1_op =
                    LocalOperator::from_site_matrix(Vertex::root(), 2, fast1.clone()).unwrap();
                assert!(
                    literal1
                        .max_abs_diff(&fast1_op.embed(literal1.support()).unwrap())
                        .unwrap()
                        < 1e-10
                );
                // Two levels: E_0 ∘ E_1 on a site at level 2 along the
                // first-child path.
                let a2 = unit(v(&[1, 1]), i, j);
                let e1 = spec.quasi_cond_expectation(1, &a2).unwrap();
                let literal2 = spec.quasi_cond_expectation(0, &e1).unwrap();
                let fast2 = t.apply(&fast1);
                let fast2_op = LocalOperator::from_site_matrix(Vertex::root(), 2, fast2).unwrap();
                assert!(
                    literal2
                        .max_abs_diff(&fast2_op.embed(literal2.support()).unwrap())
                        .unwrap()
                        < 1e-10,
                    "family {family:?} unit ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn chain_expectation_matches_functionals() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        for family in [KernelFamily::Hopping, KernelFamily::Diagonal] {
            let spec = solve_family(family, 0.35);
            // Root site, a level-1 site, and a mixed product.
            let cases: Vec<LocalOperator> = vec![
                unit(Vertex::root(), 1, 1),
                unit(v(&[2]), 2, 2),
                unit(Vertex::root(), 1, 2)
                    .mul(&unit(v(&[1]), 2, 1))
                    .unwrap(),
                {
                    let raw = DMatrix::from_fn(2, 2, |_, _| {
                        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                    });
                    let herm = (&raw + raw.adjoint()).unscale(2.0);
                    LocalOperator::from_site_matrix(v(&[1, 2]), 2, herm).unwrap()
                },
            ];
            for a in &cases {
                let m = a.support().iter().map(Vertex::level).max().unwrap();
                let weight_route = spec.phi_n(m, a).unwrap();
                let chain_route = spec.chain_expect(a).unwrap();
                assert!(
                    (weight_route - chain_route).norm() < 1e-12,
                    "family {family:?}: {weight_route} vs {chain_route}"
                );
            }
            let id = LocalOperator::identity(vec![Vertex::root()], 2).unwrap();
            assert!((spec.chain_expect(&id).unwrap() - r(1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn diagonal_offdiagonal_observables_vanish() {
        let spec = solve_family(KernelFamily::Diagonal, 0.8);
        let a = unit(Vertex::root(), 1, 2);
        assert!(spec.chain_expect(&a).unwrap().norm() < 1e-12);
    }

    #[test]
    fn compatibility_holds_for_both_families() {
        for family in [KernelFamily::Hopping, KernelFamily::Diagonal] {
            for beta in [0.2, 0.5, 1.0] {
                let spec = solve_family(family, beta);
                for n in 0..=1 {
                    let dev = spec.compatibility_check(n).unwrap();
                    assert!(dev < 1e-10, "family {family:?} beta {beta} n {n}: {dev}");
                }
            }
        }
    }

    #[test]
    fn compatibility_holds_for_random_hermitian_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let mut solved = 0usize;
        for _ in 0..10 {
            let kernel = random_hermitian_kernel(&mut rng, 0.3);
            let spec = match ChainSpec::solve(2, 3, 2, kernel) {
                Ok(s) => s,
                Err(Error::DegenerateFixedPoint { .. }) => continue,
                Err(e) => panic!("solver failed: {e}"),
            };
            assert!(spec.boundary_weight_residual().unwrap() < 1e-10);
            assert!(spec.root_weight_residual() < 1e-10);
            for n in 0..=1 {
                let dev = spec.compatibility_check(n).unwrap();
                assert!(dev < 1e-8, "n {n}: {dev}");
            }
            solved += 1;
        }
        assert!(solved >= 8, "only {solved} random kernels solved");
    }

    #[test]
    fn shift_invariance_holds_and_perturbations_break_it() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let herm = {
            let raw = DMatrix::from_fn(2, 2, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            (&raw + raw.adjoint()).unscale(2.0)
        };
        let samples = vec![
            unit(Vertex::root(), 1, 1),
            unit(Vertex::root(), 1, 2),
            LocalOperator::from_site_matrix(Vertex::root(), 2, herm).unwrap(),
        ];
        for family in [KernelFamily::Hopping, KernelFamily::Diagonal] {
            let spec = solve_family(family, 0.5);
            for i in 1..=2 {
                let dev = spec.shift_invariance_check(i, &samples).unwrap();
                assert!(dev < 1e-10, "family {family:?} shift {i}: {dev}");
            }
            // Must-fail control: a tilted root weight keeps both defining
            // equations but loses the initial condition.
            let tilted = DMatrix::from_row_slice(2, 2, &[r(1.5), r(0.0), r(0.0), r(0.5)]);
            let broken = spec.with_root_weight(tilted).unwrap();
            assert!(broken.initial_condition_residual().unwrap() > 1e-3);
            let dev = broken.shift_invariance_check(1, &samples).unwrap();
            assert!(dev > 1e-3, "family {family:?}: deviation only {dev}");
        }
    }

    #[test]
    fn diagonal_clustering_rate_is_tanh_beta() {
        for beta in BETA_GRID {
            let spec = solve_family(KernelFamily::Diagonal, beta);
            let a = unit(Vertex::root(), 1, 1);
            let report = spec.clustering_decay(&a, &a, 10).unwrap();
            assert!((report.rate - beta.tanh()).abs() < 1e-12, "beta {beta}");
            for (_, dev) in &report.brute_checks {
                assert!(*dev < 1e-9);
            }
            // δ_{n+1}/δ_n = tanh β on the diagonal sector; the rate is
            // extracted from the n = 5..10 window as the geometric mean of
            // the ratios, which averages out the floating-point noise of
            // the smallest deltas.
            let d5 = report.deltas[4].delta;
            let d10 = report.deltas[9].delta;
            assert!(d5 > 0.0 && d10 > 0.0);
            let measured = (d10 / d5).powf(1.0 / 5.0);
            assert!(
                (measured - beta.tanh()).abs() < 1e-6 * beta.tanh(),
                "beta {beta}: measured {measured} vs {}",
                beta.tanh()
            );
            assert!(report.warnings.is_empty());
        }
    }

    #[test]
    fn hopping_clustering_decays_at_small_beta() {
        let spec = solve_family(KernelFamily::Hopping, 0.2);
        let a = unit(Vertex::root(), 1, 1);
        let report = spec.clustering_decay(&a, &a, 8).unwrap();
        let expected_rate = 0.2f64.sinh() / 0.2f64.cosh().powi(2);
        assert!((report.rate - expected_rate).abs() < 1e-12);
        assert!(report.deltas.last().unwrap().delta < 1e-10);
        for (_, dev) in &report.brute_checks {
            assert!(*dev < 1e-9);
        }
        assert!(report.warnings.is_empty());

        // Identity observable: no correlations at any distance.
        let id = LocalOperator::identity(vec![Vertex::root()], 2).unwrap();
        let report = spec.clustering_decay(&id, &a, 5).unwrap();
        for p in &report.deltas {
            assert!(p.delta < 1e-12);
        }
    }

    #[test]
    fn hopping_transfer_contracts_at_every_beta() {
        // sinh β / cosh²β peaks at 1/2 (β = arcsinh 1), so the subleading
        // eigenvalue stays below 1 for every β and no warning is raised.
        for beta in [0.2, 0.549, 0.8815, 2.0, 5.0] {
            let spec = solve_family(KernelFamily::Hopping, beta);
            let a = unit(Vertex::root(), 1, 1);
            let report = spec.clustering_decay(&a, &a, 5).unwrap();
            let expected = beta.sinh() / beta.cosh().powi(2);
            assert!((report.rate - expected).abs() < 1e-11, "beta {beta}");
            assert!(report.rate <= 0.5 + 1e-12);
            assert!(report.warnings.is_empty());
        }
    }

    #[test]
    fn degenerate_root_weight_is_surfaced() {
        // K = 2P makes the chain fully decoupled in the configuration
        // basis; the initial condition then fixes only the diagonal, and
        // the solver must report the two-dimensional fixed space instead
        // of picking a branch.
        let kernel = diagonal_projector().scale(2.0);
        match ChainSpec::solve(2, 3, 2, kernel) {
            Err(Error::DegenerateFixedPoint { multiplicity }) => {
                assert_eq!(multiplicity, 2);
            }
            other => panic!("expected degenerate fixed point, got {other:?}"),
        }
    }

    #[test]
    fn transfer_map_preserves_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        for family in [KernelFamily::Hopping, KernelFamily::Diagonal] {
            let spec = solve_family(family, 0.6);
            let t = spec.transfer_superoperator().unwrap();
            for _ in 0..10 {
                let raw = DMatrix::from_fn(2, 2, |_, _| {
                    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                });
                let psd = &raw * raw.adjoint();
                let image = LocalOperator::from_site_matrix(Vertex::root(), 2, t.apply(&psd))
                    .unwrap();
                assert!(image.min_eigenvalue().unwrap() > -1e-10);
            }
        }
    }

    #[test]
    fn expectations_act_as_identity_below_their_level() {
        // E_k(a) = a for observables supported strictly inside the inner
        // ball: the outer dressing integrates to the boundary weight. This
        // is the exactness that truncates the chain composition, checked
        // through the dense route.
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for family in [KernelFamily::Hopping, KernelFamily::Diagonal] {
            let spec = solve_family(family, 0.5);
            let raw = DMatrix::from_fn(2, 2, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let a = LocalOperator::from_site_matrix(Vertex::root(), 2, raw).unwrap();
            let e = spec.quasi_cond_expectation(1, &a).unwrap();
            let back = a.embed(e.support()).unwrap();
            assert!(e.max_abs_diff(&back).unwrap() < 1e-12);
        }
    }

    #[test]
    fn complex_beta_keeps_positive_weights_for_the_diagonal_family() {
        // Complex β is accepted through the dedicated constructor; the
        // defining equations only see K·(...)·K*, so the solved weights
        // stay positive and compatibility still holds. Positivity is
        // enforced by the ChainSpec constructor.
        let beta = C64::new(0.3, 0.4);
        let kernel = crate::kernels::diagonal_kernel_complex(beta);
        let spec = ChainSpec::solve(2, 3, 2, kernel).unwrap();
        assert!(spec.boundary_weight_residual().unwrap() < 1e-10);
        assert!(spec.root_weight_residual() < 1e-10);
        for n in 0..=1 {
            assert!(spec.compatibility_check(n).unwrap() < 1e-10);
        }
    }

    #[test]
    fn order_three_trees_solve_and_stay_compatible() {
        // At order k each spectator edge contributes cosh²β to the traced
        // product, so α^(k-1) cosh^(2k) β = 1: α = cosh⁻³β at k = 3. The
        // radius-1 functional is too large to store densely there, which
        // exercises the collapsed route inside the compatibility check.
        let beta = 0.4f64;
        let spec = ChainSpec::solve(3, 3, 2, hopping_kernel(beta)).unwrap();
        let alpha = spec.alpha().expect("scalar weight");
        assert!((alpha - beta.cosh().powi(-3)).abs() < 1e-10);
        assert!(spec.initial_condition_residual().unwrap() < 1e-10);
        assert!(spec.compatibility_check(0).unwrap() < 1e-10);
        let t = spec.transfer_superoperator().unwrap();
        assert!(t.unitality_deviation() < 1e-12);
        let samples = [unit(Vertex::root(), 1, 1), unit(Vertex::root(), 1, 2)];
        for i in 1..=3 {
            assert!(spec.shift_invariance_check(i, &samples).unwrap() < 1e-10);
        }
    }

    #[test]
    fn diagonal_kernel_solves_with_full_mode_too() {
        // Forcing the full iteration (by passing through solve) must land
        // on the same scalar solution the closed form predicts.
        let beta = 0.5;
        let (h, alpha) = solve_boundary_weight(&diagonal_kernel(beta), 2, 2).unwrap();
        let expected = 4.0 / ((2.0 * beta).exp() + 1.0).powi(2);
        assert!((alpha.unwrap() - expected).abs() < 1e-10);
        assert!(max_abs(&(h - DMatrix::<C64>::identity(2, 2).scale(expected))) < 1e-10);
    }
}
