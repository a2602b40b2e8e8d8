//! The full invariant suite: every constructive claim the crate certifies,
//! run end to end with a fixed seed and reported as machine-readable
//! pass/fail lines. The CLI `verify` mode is a thin wrapper around
//! [`run_full_suite`].

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::LocalOperator;
use crate::cayley_chain::ChainSpec;
use crate::emf::{
    hadamard_amplitudes, sqrt_third_amplitudes, AmplitudeField, EntangledField,
};
use crate::error::Result;
use crate::graph::{connected_regions_up_to, connected_regions_within, random_tree, Region, Tree, Vertex};
use crate::kernels::{kernel_matrix, oracle_vs_numeric, KernelFamily};

/// Comparison tolerances; the defaults match the crate-wide constants.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Tolerances {
    /// General operator/value equality.
    pub eq: f64,
    /// Trace identities and exactly-reproducible values.
    pub trace: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eq: crate::algebra::TOL_EQ,
            trace: crate::algebra::TOL_TRACE,
        }
    }
}

/// How a single check's observed value relates to its threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Deviation must stay at or below the threshold.
    AtMost,
    /// A control that must *fail* by at least the threshold.
    AtLeast,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    /// Stable identifier of the mathematical claim being certified.
    pub id: String,
    pub passed: bool,
    pub observed: f64,
    pub threshold: f64,
    pub direction: Direction,
    pub detail: String,
}

impl CheckResult {
    fn at_most(id: &str, observed: f64, threshold: f64, detail: impl Into<String>) -> Self {
        CheckResult {
            id: id.into(),
            passed: observed <= threshold,
            observed,
            threshold,
            direction: Direction::AtMost,
            detail: detail.into(),
        }
    }

    fn at_least(id: &str, observed: f64, threshold: f64, detail: impl Into<String>) -> Self {
        CheckResult {
            id: id.into(),
            passed: observed >= threshold,
            observed,
            threshold,
            direction: Direction::AtLeast,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub tolerances: Tolerances,
    pub checks: Vec<CheckResult>,
    pub all_passed: bool,
}

impl VerifyReport {
    /// One line per check, the format the CLI prints.
    pub fn summary_lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                let verdict = if c.passed { "pass" } else { "FAIL" };
                let rel = match c.direction {
                    Direction::AtMost => "<=",
                    Direction::AtLeast => ">=",
                };
                format!(
                    "[{verdict}] {:<42} observed {:>12.3e} {rel} {:>9.1e}  ({})",
                    c.id, c.observed, c.threshold, c.detail
                )
            })
            .collect()
    }
}

fn beta_grid() -> [f64; 4] {
    [0.1, 0.2, 0.5, 1.0]
}

fn unit(site: Vertex, i: usize, j: usize) -> Result<LocalOperator> {
    LocalOperator::matrix_unit(site, 2, i, j)
}

/// Run every check with a deterministic seed. The report is stable across
/// runs for a fixed seed.
pub fn run_full_suite(seed: u64, tol: &Tolerances) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    norm_law_checks(&mut rng, tol, &mut checks)?;
    example_field_checks(tol, &mut checks)?;
    isometry_checks(&mut rng, tol, &mut checks)?;
    route_equivalence_checks(&mut rng, tol, &mut checks)?;
    closed_form_checks(tol, &mut checks)?;
    compatibility_checks(tol, &mut checks)?;
    shift_and_clustering_checks(tol, &mut checks)?;
    tree_property_check(&mut checks)?;

    let all_passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        seed,
        tolerances: *tol,
        checks,
        all_passed,
    })
}

/// ‖ψ_Λ‖² = d on every connected region of ≥ 2 vertices, over random
/// trees × random bi-stochastic fields; and the must-fail cycle control.
fn norm_law_checks(
    rng: &mut ChaCha8Rng,
    tol: &Tolerances,
    checks: &mut Vec<CheckResult>,
) -> Result<()> {
    let mut worst = 0.0f64;
    let mut regions = 0usize;
    for t in 0..50 {
        let n = 2 + (t % 9);
        let tree = random_tree(rng, n)?;
        let field = AmplitudeField::random(tree, 2, rng)?;
        for region in connected_regions_up_to(field.tree(), n)? {
            if region.len() < 2 {
                continue;
            }
            let psi = field.psi_vector(&region)?;
            worst = worst.max((psi.norm_squared() - 2.0).abs());
            regions += 1;
        }
    }
    checks.push(CheckResult::at_most(
        "psi-norm-law",
        worst,
        tol.eq,
        format!("50 random trees, {regions} connected regions"),
    ));

    // Control: the same product formula on a 4-cycle must miss d.
    let cyc: Vec<Vertex> = (1..=4)
        .map(|i| Vertex::new(vec![i]).expect("valid"))
        .collect();
    let cycle = Tree::general(&[
        (cyc[0].clone(), cyc[1].clone()),
        (cyc[1].clone(), cyc[2].clone()),
        (cyc[2].clone(), cyc[3].clone()),
        (cyc[3].clone(), cyc[0].clone()),
    ])?;
    let field = AmplitudeField::homogeneous(cycle, 2, sqrt_third_amplitudes())?;
    let all: Region = field.tree().vertices().cloned().collect();
    let psi = field.psi_vector(&all)?;
    checks.push(CheckResult::at_least(
        "psi-norm-law-cycle-control",
        (psi.norm_squared() - 2.0).abs(),
        1e-3,
        "4-cycle must violate the norm law",
    ));
    Ok(())
}

/// The homogeneous √(1/3) field on a path: the frozen single-site and
/// adjacent-pair values, the rank of the two-site restriction, and the
/// product deviation.
fn example_field_checks(tol: &Tolerances, checks: &mut Vec<CheckResult>) -> Result<()> {
    let tree = Tree::path_graph(8)?;
    let field = EntangledField::new(AmplitudeField::homogeneous(
        tree,
        2,
        sqrt_third_amplitudes(),
    )?)?;
    let site = Vertex::new(vec![1, 1, 1])?;
    let next = Vertex::new(vec![1, 1, 1, 1])?;
    let single = field.expect(&unit(site.clone(), 1, 1)?)?;
    checks.push(CheckResult::at_most(
        "example-field-single-site",
        (single - C64::new(0.5, 0.0)).norm(),
        tol.trace,
        "φ(e11) = 1/2",
    ));
    let pair = field.expect(&unit(site, 1, 1)?.mul(&unit(next, 1, 1)?)?)?;
    checks.push(CheckResult::at_most(
        "example-field-adjacent-pair",
        (pair - C64::new(1.0 / 6.0, 0.0)).norm(),
        tol.trace,
        "φ(e11 ⊗ e11) = 1/6",
    ));
    let report = field.classicality_report(2)?;
    checks.push(CheckResult::at_most(
        "example-field-restriction-rank",
        (report.rank as f64 - 4.0).abs(),
        0.0,
        "two-site density matrix has rank 4",
    ));
    checks.push(CheckResult::at_least(
        "example-field-product-deviation",
        report.product_deviation,
        1.0 / 20.0,
        "restriction is visibly not a product state",
    ));
    Ok(())
}

/// V†V = 1 and sibling commutation on random fields.
fn isometry_checks(
    rng: &mut ChaCha8Rng,
    tol: &Tolerances,
    checks: &mut Vec<CheckResult>,
) -> Result<()> {
    let tree = Tree::cayley(2, 3)?;
    let z = Vertex::new(vec![1])?;
    let outside = [
        Vertex::root(),
        Vertex::new(vec![1, 1])?,
        Vertex::new(vec![1, 2])?,
    ];
    let mut worst_gram = 0.0f64;
    let mut worst_comm = 0.0f64;
    for _ in 0..20 {
        let field = EntangledField::new(AmplitudeField::random(tree.clone(), 2, rng)?)?;
        for x in &outside {
            worst_gram = worst_gram.max(field.boundary_isometry(&z, x)?.isometry_deviation());
        }
        let vx = field.boundary_isometry(&z, &outside[1])?;
        let vy = field.boundary_isometry(&z, &outside[2])?;
        for j in 1..=2 {
            let e = crate::algebra::StateVector::basis_state(vec![z.clone()], 2, &[j])?;
            let xy = vy.apply(&vx.apply(&e)?)?;
            let yx = vx.apply(&vy.apply(&e)?)?;
            worst_comm = worst_comm.max(xy.max_abs_diff(&yx)?);
        }
    }
    checks.push(CheckResult::at_most(
        "boundary-isometry-gram",
        worst_gram,
        tol.trace,
        "V†V = 1, 20 random fields",
    ));
    checks.push(CheckResult::at_most(
        "boundary-isometry-commutation",
        worst_comm,
        tol.trace,
        "sibling isometries commute",
    ));
    Ok(())
}

/// The three evaluation routes agree: direct contraction, the isometry
/// chain, and (for uniform-modulus fields) the boundary-state
/// reconstruction; plus stability under one extra closure.
fn route_equivalence_checks(
    rng: &mut ChaCha8Rng,
    tol: &Tolerances,
    checks: &mut Vec<CheckResult>,
) -> Result<()> {
    let tree = Tree::cayley(2, 3)?;
    let sites = [Vertex::root(), Vertex::new(vec![1])?, Vertex::new(vec![2])?];
    let mut observables = Vec::new();
    for _ in 0..10 {
        let s = &sites[rng.gen_range(0..sites.len())];
        let (i, j) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
        observables.push(unit(s.clone(), i, j)?);
    }
    for _ in 0..10 {
        let a = unit(sites[0].clone(), rng.gen_range(1..=2), rng.gen_range(1..=2))?;
        let b = unit(
            sites[1 + rng.gen_range(0..2)].clone(),
            rng.gen_range(1..=2),
            rng.gen_range(1..=2),
        )?;
        observables.push(a.mul(&b)?);
    }

    let mut worst_chain = 0.0f64;
    for _ in 0..3 {
        let field = EntangledField::new(AmplitudeField::random(tree.clone(), 2, rng)?)?;
        for a in &observables {
            let direct = field.expect(a)?;
            let chained = field.expect_as_chain(2, a)?;
            worst_chain = worst_chain.max((direct - chained).norm());
        }
    }
    checks.push(CheckResult::at_most(
        "chain-route-equivalence",
        worst_chain,
        tol.eq,
        "isometry chain vs direct, 20 observables",
    ));

    let mut worst_rec = 0.0f64;
    let uniform_fields = [
        AmplitudeField::homogeneous(tree.clone(), 2, hadamard_amplitudes())?,
        AmplitudeField::random_uniform_modulus(tree.clone(), 2, rng)?,
    ];
    for f in uniform_fields {
        let field = EntangledField::new(f)?;
        for a in &observables {
            let direct = field.expect(a)?;
            let rec = field.gqms_reconstruct(a, 1)?;
            worst_rec = worst_rec.max((direct - rec).norm());
        }
    }
    checks.push(CheckResult::at_most(
        "reconstruction-route-equivalence",
        worst_rec,
        tol.eq,
        "boundary-state route vs direct, uniform-modulus fields",
    ));

    let field = EntangledField::new(AmplitudeField::random(tree, 2, rng)?)?;
    let a = unit(Vertex::root(), 1, 1)?;
    let base = field.evaluation_region(a.support())?;
    let bigger = field.tree().closure(&base)?;
    let dev = (field.expect_on(&a, &base)? - field.expect_on(&a, &bigger)?).norm();
    checks.push(CheckResult::at_most(
        "expectation-volume-stability",
        dev,
        tol.eq,
        "value unchanged under a full extra shell",
    ));
    Ok(())
}

/// Numeric solvers against the closed forms for both kernel families.
fn closed_form_checks(tol: &Tolerances, checks: &mut Vec<CheckResult>) -> Result<()> {
    for family in [KernelFamily::Hopping, KernelFamily::Diagonal] {
        let report = oracle_vs_numeric(family, &beta_grid())?;
        let name = match family {
            KernelFamily::Hopping => "hopping",
            KernelFamily::Diagonal => "diagonal",
        };
        checks.push(CheckResult::at_most(
            &format!("closed-forms-{name}"),
            report.max_residual,
            tol.eq,
            "α, w0, kernel exponentials, trace tables over the β grid",
        ));
    }
    Ok(())
}

/// Finite-volume compatibility at n = 0, 1 for both families, plus the
/// dimension-8 bulk-equation residual that drives the induction.
fn compatibility_checks(tol: &Tolerances, checks: &mut Vec<CheckResult>) -> Result<()> {
    for family in [KernelFamily::Hopping, KernelFamily::Diagonal] {
        let name = match family {
            KernelFamily::Hopping => "hopping",
            KernelFamily::Diagonal => "diagonal",
        };
        let mut worst = [0.0f64; 2];
        let mut worst_local = 0.0f64;
        for beta in [0.2, 0.5, 1.0] {
            let spec = ChainSpec::solve(2, 3, 2, kernel_matrix(family, beta))?;
            for (slot, dev) in worst.iter_mut().enumerate() {
                *dev = dev.max(spec.compatibility_check(slot)?);
            }
            worst_local = worst_local.max(spec.boundary_weight_residual()?);
        }
        for (n, dev) in worst.iter().enumerate() {
            checks.push(CheckResult::at_most(
                &format!("compatibility-n{n}-{name}"),
                *dev,
                tol.eq,
                "max matrix-unit deviation |φ⁽ⁿ⁺¹⁾(a⊗1) − φ⁽ⁿ⁾(a)|",
            ));
        }
        checks.push(CheckResult::at_most(
            &format!("local-reduction-step-{name}"),
            worst_local,
            tol.eq,
            "dimension-8 bulk-equation residual (induction step)",
        ));
    }
    Ok(())
}

/// Shift invariance (with the perturbed-root control) and clustering.
fn shift_and_clustering_checks(tol: &Tolerances, checks: &mut Vec<CheckResult>) -> Result<()> {
    let hermitian_sample = {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(0.4, 0.0),
                C64::new(0.2, -0.3),
                C64::new(0.2, 0.3),
                C64::new(-0.1, 0.0),
            ],
        );
        LocalOperator::from_site_matrix(Vertex::root(), 2, m)?
    };
    let samples = vec![
        unit(Vertex::root(), 1, 1)?,
        unit(Vertex::root(), 1, 2)?,
        hermitian_sample,
    ];
    for family in [KernelFamily::Hopping, KernelFamily::Diagonal] {
        let name = match family {
            KernelFamily::Hopping => "hopping",
            KernelFamily::Diagonal => "diagonal",
        };
        let spec = ChainSpec::solve(2, 3, 2, kernel_matrix(family, 0.5))?;
        let mut worst = 0.0f64;
        for i in 1..=2 {
            worst = worst.max(spec.shift_invariance_check(i, &samples)?);
        }
        checks.push(CheckResult::at_most(
            &format!("shift-invariance-{name}"),
            worst,
            tol.eq,
            "both subtree shifts, three observables",
        ));
        let tilted = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(1.5, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.5, 0.0),
            ],
        );
        let broken = spec.with_root_weight(tilted)?;
        checks.push(CheckResult::at_least(
            &format!("shift-invariance-control-{name}"),
            broken.shift_invariance_check(1, &samples)?,
            1e-3,
            "perturbed root weight must break invariance",
        ));
    }

    // Diagonal family: measured decay rate = tanh β.
    let e11 = unit(Vertex::root(), 1, 1)?;
    let mut worst_rate = 0.0f64;
    for beta in beta_grid() {
        let spec = ChainSpec::solve(2, 3, 2, kernel_matrix(KernelFamily::Diagonal, beta))?;
        let report = spec.clustering_decay(&e11, &e11, 10)?;
        let measured = (report.deltas[9].delta / report.deltas[4].delta).powf(0.2);
        worst_rate = worst_rate.max((measured - beta.tanh()).abs() / beta.tanh());
        worst_rate = worst_rate.max((report.rate - beta.tanh()).abs());
    }
    checks.push(CheckResult::at_most(
        "clustering-rate-diagonal",
        worst_rate,
        1e-6,
        "measured δ ratios and subleading eigenvalue vs tanh β",
    ));

    // Hopping family at β = 0.2: decay to zero with the reported rate, and
    // the transfer pipeline agreeing with the dense functionals.
    let spec = ChainSpec::solve(2, 3, 2, kernel_matrix(KernelFamily::Hopping, 0.2))?;
    let report = spec.clustering_decay(&e11, &e11, 8)?;
    checks.push(CheckResult::at_most(
        "clustering-decay-hopping",
        report.deltas.last().expect("nonempty").delta,
        tol.eq,
        format!("δ_8 at β = 0.2, reported rate {:.6}", report.rate),
    ));
    let worst_brute = report
        .brute_checks
        .iter()
        .map(|(_, d)| *d)
        .fold(0.0, f64::max);
    checks.push(CheckResult::at_most(
        "clustering-transfer-vs-dense",
        worst_brute,
        1e-9,
        "transfer pipeline vs dense functional at n ≤ 2",
    ));
    Ok(())
}

/// Exhaustive tree-property enumeration at desk scale.
fn tree_property_check(checks: &mut Vec<CheckResult>) -> Result<()> {
    let tree = Tree::cayley(2, 4)?;
    let (_, ball3) = tree.levels(3)?;
    let regions = connected_regions_within(&tree, &ball3, 5)?;
    let mut failures = 0usize;
    for region in &regions {
        if tree.check_tree_property(region).is_err() {
            failures += 1;
        }
    }
    checks.push(CheckResult::at_most(
        "tree-property-enumeration",
        failures as f64,
        0.0,
        format!("{} connected regions of size ≤ 5", regions.len()),
    ));
    Ok(())
}
