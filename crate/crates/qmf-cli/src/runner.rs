//! Mode dispatch and report assembly.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::Serialize;

use qmf_core::cayley_chain::ChainSpec;
use qmf_core::emf::{ClassicalityReport, EntangledField};
use qmf_core::graph::Vertex;
use qmf_core::kernels::{oracle_vs_numeric, OracleResidualReport};
use qmf_core::verify::{run_full_suite, VerifyReport};
use qmf_core::{Error as CoreError, LocalOperator, Region};

use crate::config::{build_observable, Mode, RunConfig, SolveOrMatrix};

#[derive(Serialize)]
struct MatrixOut {
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl MatrixOut {
    fn new(m: &DMatrix<C64>) -> Self {
        let rows = m.nrows();
        let cols = m.ncols();
        MatrixOut {
            re: (0..rows)
                .map(|i| (0..cols).map(|j| m[(i, j)].re).collect())
                .collect(),
            im: (0..rows)
                .map(|i| (0..cols).map(|j| m[(i, j)].im).collect())
                .collect(),
        }
    }
}

#[derive(Serialize)]
struct ComplexOut {
    re: f64,
    im: f64,
}

impl From<C64> for ComplexOut {
    fn from(z: C64) -> Self {
        ComplexOut { re: z.re, im: z.im }
    }
}

#[derive(Serialize)]
struct EmfReport {
    schema: &'static str,
    mode: &'static str,
    seed: u64,
    expectations: Vec<ExpectationOut>,
    norm_check: NormCheckOut,
    classicality: Option<ClassicalityReport>,
    all_passed: bool,
}

#[derive(Serialize)]
struct ExpectationOut {
    observable: String,
    phi: ComplexOut,
}

#[derive(Serialize)]
struct NormCheckOut {
    regions: usize,
    max_deviation: f64,
    tolerance: f64,
    passed: bool,
}

#[derive(Serialize)]
struct ChainReport {
    schema: &'static str,
    mode: &'static str,
    seed: u64,
    k: usize,
    d: usize,
    alpha: Option<f64>,
    h: MatrixOut,
    w0: MatrixOut,
    residuals: ResidualsOut,
    transfer_eigenvalues: Vec<ComplexOut>,
    compatibility: Vec<CompatibilityOut>,
    shift_invariance: Vec<ShiftOut>,
    clustering: Option<ClusteringOut>,
    oracle_residuals: Option<OracleResidualReport>,
    all_passed: bool,
}

#[derive(Serialize)]
struct ResidualsOut {
    root_pairing: f64,
    bulk_equation: f64,
    initial_condition: f64,
}

#[derive(Serialize)]
struct CompatibilityOut {
    n: usize,
    max_deviation: f64,
}

#[derive(Serialize)]
struct ShiftOut {
    shift: usize,
    max_deviation: f64,
}

#[derive(Serialize)]
struct ClusteringOut {
    rate: f64,
    eigenvalue_moduli: Vec<f64>,
    phi_a: ComplexOut,
    phi_b: ComplexOut,
    table: Vec<DecayRowOut>,
    transfer_vs_dense: Vec<(usize, f64)>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct DecayRowOut {
    n: usize,
    delta: f64,
}

#[derive(Serialize)]
struct VerifyEnvelope {
    schema: &'static str,
    mode: &'static str,
    #[serde(flatten)]
    report: VerifyReport,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

/// Run one configuration; returns the process exit code (0 or 1).
/// Schema, truncation, and solver failures surface as errors and are
/// mapped to their exit codes by the caller.
pub fn run(config: &RunConfig, out_dir: &Path) -> anyhow::Result<i32> {
    fs::create_dir_all(out_dir)?;
    match config.mode {
        Mode::Emf => run_emf(config, out_dir),
        Mode::Chain => run_chain(config, out_dir),
        Mode::Verify => run_verify(config, out_dir),
    }
}

fn run_emf(config: &RunConfig, out_dir: &Path) -> anyhow::Result<i32> {
    let tol = config.tolerances.resolve();
    let tree_spec = config
        .tree
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("emf mode needs a `tree`"))?;
    let field_spec = config
        .field
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("emf mode needs a `field`"))?;
    let (tree, relabel) = tree_spec.build()?;
    let amplitude_field = field_spec.build(tree, &relabel)?;
    let field = EntangledField::new(amplitude_field)?;
    let d = field.d();

    let mut expectations = Vec::new();
    for factors in &config.observables {
        let op = build_observable(factors, d, &relabel)?;
        let phi = field.expect(&op)?;
        expectations.push(ExpectationOut {
            observable: describe_observable(&op),
            phi: phi.into(),
        });
    }

    // Norm law over the stored balls (and the whole tree when it fits).
    let mut worst = 0.0f64;
    let mut regions = 0usize;
    for n in 1..=field.tree().depth() {
        let (_, ball) = field.tree().levels(n)?;
        if (d as f64).powi(ball.len() as i32) > qmf_core::MAX_VECTOR_DIM as f64 {
            break;
        }
        let psi = field.field().psi_vector(&ball)?;
        worst = worst.max((psi.norm_squared() - d as f64).abs());
        regions += 1;
    }
    if regions == 0 {
        let all: Region = field.tree().vertices().cloned().collect();
        if all.len() >= 2 {
            let psi = field.field().psi_vector(&all)?;
            worst = worst.max((psi.norm_squared() - d as f64).abs());
            regions = 1;
        }
    }
    let norm_check = NormCheckOut {
        regions,
        max_deviation: worst,
        tolerance: tol.eq,
        passed: worst <= tol.eq,
    };

    let classicality = match field.classicality_report(2) {
        Ok(report) => Some(report),
        Err(CoreError::PathNotEmbeddable { .. }) => None,
        Err(e) => return Err(e.into()),
    };

    let all_passed = norm_check.passed;
    let report = EmfReport {
        schema: crate::config::SCHEMA,
        mode: "emf",
        seed: config.seed,
        expectations,
        norm_check,
        classicality,
        all_passed,
    };
    write_json(out_dir, "report.json", &report)?;
    Ok(if all_passed { 0 } else { 1 })
}

fn describe_observable(op: &LocalOperator) -> String {
    let sites: Vec<String> = op.support().iter().map(|v| v.to_string()).collect();
    format!("unit product on {}", sites.join(" "))
}

fn run_chain(config: &RunConfig, out_dir: &Path) -> anyhow::Result<i32> {
    let tol = config.tolerances.resolve();
    let chain_cfg = config
        .chain
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("chain mode needs a `chain` section"))?;
    let (kernel, d) = chain_cfg.kernel_matrix()?;
    let k = chain_cfg.k;
    let depth = chain_cfg.depth;

    let spec = match (&chain_cfg.h, &chain_cfg.w0) {
        (SolveOrMatrix::Solve(_), SolveOrMatrix::Solve(_)) => {
            ChainSpec::solve(k, depth, d, kernel)?
        }
        (h_spec, w_spec) => {
            let (h, _) = match h_spec {
                SolveOrMatrix::Given(m) => (m.build()?, None::<f64>),
                SolveOrMatrix::Solve(_) => {
                    qmf_core::cayley_chain::solve_boundary_weight(&kernel, d, k)?
                }
            };
            let w0 = match w_spec {
                SolveOrMatrix::Given(m) => m.build()?,
                SolveOrMatrix::Solve(_) => {
                    qmf_core::cayley_chain::solve_root_weight(&kernel, &h, d, k)?
                }
            };
            ChainSpec::new(k, depth, d, kernel, h, w0)?
        }
    };

    let residuals = ResidualsOut {
        root_pairing: spec.root_weight_residual(),
        bulk_equation: spec.boundary_weight_residual()?,
        initial_condition: spec.initial_condition_residual()?,
    };

    let transfer = spec.transfer_superoperator()?;
    let transfer_eigenvalues: Vec<ComplexOut> = transfer
        .eigenvalues()?
        .into_iter()
        .map(ComplexOut::from)
        .collect();

    let mut compatibility = Vec::new();
    let mut all_passed = true;
    for n in 0..=1 {
        let dev = spec.compatibility_check(n)?;
        all_passed &= dev <= tol.eq;
        compatibility.push(CompatibilityOut {
            n,
            max_deviation: dev,
        });
    }

    let samples = [
        LocalOperator::matrix_unit(Vertex::root(), d, 1, 1)?,
        LocalOperator::matrix_unit(Vertex::root(), d, 1, 2)?,
    ];
    let mut shift_invariance = Vec::new();
    for i in 1..=k {
        let dev = spec.shift_invariance_check(i, &samples)?;
        all_passed &= dev <= tol.eq;
        shift_invariance.push(ShiftOut {
            shift: i,
            max_deviation: dev,
        });
    }

    let clustering = if let Some(cfg) = &config.clustering {
        let a = LocalOperator::matrix_unit(Vertex::root(), d, 1, 1)?;
        let report = spec.clustering_decay(&a, &a, cfg.n_max)?;
        let mut csv = String::from("n,delta,ratio\n");
        for (idx, point) in report.deltas.iter().enumerate() {
            let ratio = if idx == 0 || report.deltas[idx - 1].delta == 0.0 {
                String::new()
            } else {
                format!("{:.12e}", point.delta / report.deltas[idx - 1].delta)
            };
            csv.push_str(&format!("{},{:.12e},{}\n", point.n, point.delta, ratio));
        }
        fs::write(out_dir.join("decay.csv"), csv)?;
        for (_, dev) in &report.brute_checks {
            all_passed &= *dev <= 1e-9;
        }
        Some(ClusteringOut {
            rate: report.rate,
            eigenvalue_moduli: report.eigenvalue_moduli.clone(),
            phi_a: report.phi_a.into(),
            phi_b: report.phi_b.into(),
            table: report
                .deltas
                .iter()
                .map(|p| DecayRowOut {
                    n: p.n,
                    delta: p.delta,
                })
                .collect(),
            transfer_vs_dense: report.brute_checks.clone(),
            warnings: report.warnings.clone(),
        })
    } else {
        None
    };

    let oracle_residuals = match chain_cfg.family() {
        Some(family) => {
            let grid = config
                .beta_grid
                .clone()
                .or_else(|| chain_cfg.beta.map(|b| vec![b]))
                .unwrap_or_else(|| vec![0.1, 0.2, 0.5, 1.0]);
            let report = oracle_vs_numeric(family, &grid)?;
            all_passed &= report.max_residual <= tol.eq;
            Some(report)
        }
        None => None,
    };

    all_passed &= residuals.root_pairing <= tol.eq && residuals.bulk_equation <= tol.eq;

    let report = ChainReport {
        schema: crate::config::SCHEMA,
        mode: "chain",
        seed: config.seed,
        k,
        d,
        alpha: spec.alpha(),
        h: MatrixOut::new(spec.h()),
        w0: MatrixOut::new(spec.w0()),
        residuals,
        transfer_eigenvalues,
        compatibility,
        shift_invariance,
        clustering,
        oracle_residuals,
        all_passed,
    };
    write_json(out_dir, "report.json", &report)?;
    Ok(if all_passed { 0 } else { 1 })
}

fn run_verify(config: &RunConfig, out_dir: &Path) -> anyhow::Result<i32> {
    let tol = config.tolerances.resolve();
    let report = run_full_suite(config.seed, &tol)?;
    for line in report.summary_lines() {
        println!("{line}");
    }
    let all_passed = report.all_passed;
    let envelope = VerifyEnvelope {
        schema: crate::config::SCHEMA,
        mode: "verify",
        report,
    };
    write_json(out_dir, "report.json", &envelope)?;
    Ok(if all_passed { 0 } else { 1 })
}
