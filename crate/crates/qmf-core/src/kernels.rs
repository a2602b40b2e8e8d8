//! The two concrete edge-kernel families with closed-form solutions, used
//! as ground truth against the numeric solvers in [`crate::cayley_chain`].
//!
//! Both act on a pair of qubit sites with the parent leg first:
//!
//! * **Hopping**: K = exp(βH) with H = e12⊗e21 + e21⊗e12. Closed forms:
//!   K = 1 + sinh(β)H + (cosh(β)-1)H², α = cosh⁻⁴β, w0 ∝ 1.
//! * **Diagonal**: K = 1 + (e^β - 1)P with P = e11⊗e11 + e22⊗e22.
//!   Closed forms: α = 4/(e^{2β}+1)², w0 ∝ 1.
//!
//! The oracle is authoritative in tests: numeric solvers must match it,
//! never the other way around.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Which closed-form kernel family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Hopping,
    Diagonal,
}

fn r(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// H = e12⊗e21 + e21⊗e12 on a (parent, child) pair of qubits.
pub fn hopping_hamiltonian() -> DMatrix<C64> {
    let mut h = DMatrix::zeros(4, 4);
    h[(1, 2)] = r(1.0); // |12><21|
    h[(2, 1)] = r(1.0); // |21><12|
    h
}

/// H² = e11⊗e22 + e22⊗e11.
pub fn hopping_hamiltonian_squared() -> DMatrix<C64> {
    let mut h2 = DMatrix::zeros(4, 4);
    h2[(1, 1)] = r(1.0);
    h2[(2, 2)] = r(1.0);
    h2
}

/// K = exp(βH) in closed form: 1 + sinh(β)H + (cosh(β)-1)H².
pub fn hopping_kernel(beta: f64) -> DMatrix<C64> {
    DMatrix::identity(4, 4)
        + hopping_hamiltonian().scale(beta.sinh())
        + hopping_hamiltonian_squared().scale(beta.cosh() - 1.0)
}

/// P = e11⊗e11 + e22⊗e22 on a (parent, child) pair of qubits.
pub fn diagonal_projector() -> DMatrix<C64> {
    let mut p = DMatrix::zeros(4, 4);
    p[(0, 0)] = r(1.0);
    p[(3, 3)] = r(1.0);
    p
}

/// K = 1 + (e^β - 1)P for real β.
pub fn diagonal_kernel(beta: f64) -> DMatrix<C64> {
    diagonal_kernel_complex(r(beta))
}

/// K = 1 + (e^β - 1)P for complex β. Positivity of the solved boundary
/// weights is not guaranteed away from the real axis; callers must check.
pub fn diagonal_kernel_complex(beta: C64) -> DMatrix<C64> {
    DMatrix::identity(4, 4) + diagonal_projector() * (beta.exp() - r(1.0))
}

/// The kernel matrix of a family at inverse temperature β.
pub fn kernel_matrix(family: KernelFamily, beta: f64) -> DMatrix<C64> {
    match family {
        KernelFamily::Hopping => hopping_kernel(beta),
        KernelFamily::Diagonal => diagonal_kernel(beta),
    }
}

/// Closed-form α with h = αI solving the bulk boundary-weight equation at
/// order k = 2.
pub fn alpha_closed_form(family: KernelFamily, beta: f64) -> f64 {
    match family {
        KernelFamily::Hopping => beta.cosh().powi(-4),
        KernelFamily::Diagonal => 4.0 / ((2.0 * beta).exp() + 1.0).powi(2),
    }
}

/// Everything the closed forms pin down for one (family, β) point.
#[derive(Clone, Debug)]
pub struct AnalyticOracle {
    pub family: KernelFamily,
    pub beta: f64,
    /// 4×4 kernel matrix, parent leg first.
    pub kernel: DMatrix<C64>,
    /// Scalar boundary weight: h = αI.
    pub alpha: f64,
    pub h: DMatrix<C64>,
    /// Root weight normalized so that NTr(w0·h) = 1; direction is the
    /// identity for both families.
    pub w0: DMatrix<C64>,
    /// Normalized partial trace of K² onto the parent site.
    pub trx_k_squared: DMatrix<C64>,
    /// (i, j) ↦ Tr_x(K_xy K_xz e_ij^(y) K_xz K_xy), the four matrix-unit
    /// traces behind the clustering argument (indices 1-based).
    pub transfer_table: Vec<((usize, usize), DMatrix<C64>)>,
}

/// Closed forms for one (family, β) point at order k = 2, d = 2.
pub fn analytic_oracle(family: KernelFamily, beta: f64) -> AnalyticOracle {
    let alpha = alpha_closed_form(family, beta);
    let id2 = DMatrix::<C64>::identity(2, 2);
    let unit = |i: usize, j: usize| {
        let mut m = DMatrix::<C64>::zeros(2, 2);
        m[(i - 1, j - 1)] = r(1.0);
        m
    };
    let (trx_k_squared, transfer_table) = match family {
        KernelFamily::Hopping => {
            let c = beta.cosh();
            let diag = id2.clone().scale(c.powi(4) / 2.0);
            // Direct evaluation of the sandwiched trace: the spectator
            // edge contributes cosh²β and the observable edge maps e12 to
            // sinh(β) e12 (verified against the dense route and a 40-term
            // series; see the transfer tests).
            let off = c * c * beta.sinh();
            (
                id2.clone().scale(c * c),
                vec![
                    ((1, 1), diag.clone()),
                    ((2, 2), diag),
                    ((1, 2), unit(1, 2).scale(off)),
                    ((2, 1), unit(2, 1).scale(off)),
                ],
            )
        }
        KernelFamily::Diagonal => {
            let e2b = (2.0 * beta).exp();
            let big = e2b * (e2b + 1.0) / 4.0;
            let small = (e2b + 1.0) / 4.0;
            (
                id2.clone().scale((e2b + 1.0) / 2.0),
                vec![
                    ((1, 1), unit(1, 1).scale(big) + unit(2, 2).scale(small)),
                    ((2, 2), unit(1, 1).scale(small) + unit(2, 2).scale(big)),
                    ((1, 2), DMatrix::zeros(2, 2)),
                    ((2, 1), DMatrix::zeros(2, 2)),
                ],
            )
        }
    };
    AnalyticOracle {
        family,
        beta,
        kernel: kernel_matrix(family, beta),
        alpha,
        h: id2.clone().scale(alpha),
        w0: id2.scale(1.0 / alpha),
        trx_k_squared,
        transfer_table,
    }
}

/// Residuals of the numeric solvers and trace computations against the
/// closed forms, per β.
#[derive(Clone, Debug, Serialize)]
pub struct OracleResidualRow {
    pub beta: f64,
    pub alpha_deviation: f64,
    pub w0_deviation: f64,
    pub boundary_weight_residual: f64,
    pub root_weight_residual: f64,
    pub initial_condition_residual: f64,
    pub kernel_exp_deviation: f64,
    pub trx_k_squared_deviation: f64,
    pub transfer_table_deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleResidualReport {
    pub family: KernelFamily,
    pub rows: Vec<OracleResidualRow>,
    pub max_residual: f64,
}

/// Run the numeric solvers of [`crate::cayley_chain`] against the closed
/// forms over a β grid and report every residual.
pub fn oracle_vs_numeric(family: KernelFamily, beta_grid: &[f64]) -> Result<OracleResidualReport> {
    use crate::algebra::{herm_exp, LocalOperator};
    use crate::cayley_chain::ChainSpec;
    use crate::graph::Vertex;

    let mut rows = Vec::new();
    let mut max_residual = 0.0f64;
    for &beta in beta_grid {
        let oracle = analytic_oracle(family, beta);
        let spec = ChainSpec::solve(2, 3, 2, oracle.kernel.clone())?;

        let alpha_deviation = spec
            .alpha()
            .map(|a| (a - oracle.alpha).abs())
            .unwrap_or(f64::INFINITY);
        let w0_deviation = (spec.w0() - &oracle.w0)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        let boundary_weight_residual = spec.boundary_weight_residual()?;
        let root_weight_residual = spec.root_weight_residual();
        let initial_condition_residual = spec.initial_condition_residual()?;

        let generator = match family {
            KernelFamily::Hopping => hopping_hamiltonian(),
            KernelFamily::Diagonal => diagonal_projector(),
        };
        let gen_op = LocalOperator::two_site(Vertex::root(), Vertex::root().child(1), 2, generator)?;
        let kernel_exp_deviation = (herm_exp(&gen_op, r(beta))?.matrix() - &oracle.kernel)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);

        let trx_k_squared_deviation = {
            let num = spec.parent_trace_of_kernel_squared()?;
            (num - &oracle.trx_k_squared)
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
        };

        let transfer_table_deviation = {
            let mut dev = 0.0f64;
            for ((i, j), expected) in &oracle.transfer_table {
                let num = spec.raw_transfer_trace(*i, *j)?;
                dev = dev.max(
                    (num - expected)
                        .iter()
                        .map(|z| z.norm())
                        .fold(0.0, f64::max),
                );
            }
            dev
        };

        for v in [
            alpha_deviation,
            w0_deviation,
            boundary_weight_residual,
            root_weight_residual,
            initial_condition_residual,
            kernel_exp_deviation,
            trx_k_squared_deviation,
            transfer_table_deviation,
        ] {
            max_residual = max_residual.max(v);
        }
        rows.push(OracleResidualRow {
            beta,
            alpha_deviation,
            w0_deviation,
            boundary_weight_residual,
            root_weight_residual,
            initial_condition_residual,
            kernel_exp_deviation,
            trx_k_squared_deviation,
            transfer_table_deviation,
        });
    }
    Ok(OracleResidualReport {
        family,
        rows,
        max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_dev(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn hopping_powers_collapse() {
        // H^(2n) = H², H^(2n-1) = H, exactly.
        let h = hopping_hamiltonian();
        let h2 = hopping_hamiltonian_squared();
        let mut power = h.clone();
        for n in 2..=10 {
            power = &power * &h;
            let expected = if n % 2 == 0 { &h2 } else { &h };
            assert_eq!(max_dev(&power, expected), 0.0, "power {n}");
        }
    }

    #[test]
    fn hopping_kernel_matches_power_series() {
        // Oracle: 40-term power series of exp(βH).
        for beta in [0.1, 0.5, 1.0] {
            let h = hopping_hamiltonian();
            let mut series = DMatrix::<C64>::identity(4, 4);
            let mut term = DMatrix::<C64>::identity(4, 4);
            for n in 1..=40 {
                term = (&term * &h).scale(beta / n as f64);
                series += &term;
            }
            assert!(
                max_dev(&hopping_kernel(beta), &series) < 1e-12,
                "beta {beta}"
            );
        }
    }

    #[test]
    fn diagonal_kernel_matches_projector_exponential() {
        // exp(βP) = 1 + (e^β - 1)P because P is a projector.
        for beta in [0.1, 0.5, 1.0] {
            let p = diagonal_projector();
            let mut series = DMatrix::<C64>::identity(4, 4);
            let mut term = DMatrix::<C64>::identity(4, 4);
            for n in 1..=40 {
                term = (&term * &p).scale(beta / n as f64);
                series += &term;
            }
            assert!(
                max_dev(&diagonal_kernel(beta), &series) < 1e-12,
                "beta {beta}"
            );
        }
    }

    #[test]
    fn hopping_kernel_square_closed_form() {
        // K² = 1 + sinh(2β)H + (cosh(2β) - 1)H², a direct consequence of
        // the collapsing powers of H.
        for beta in [0.1, 0.5, 1.0] {
            let k = hopping_kernel(beta);
            let expected = DMatrix::identity(4, 4)
                + hopping_hamiltonian().scale((2.0 * beta).sinh())
                + hopping_hamiltonian_squared().scale((2.0 * beta).cosh() - 1.0);
            assert!(max_dev(&(&k * &k), &expected) < 1e-14, "beta {beta}");
        }
    }

    #[test]
    fn kernels_are_hermitian() {
        for beta in [0.0, 0.3, 1.0] {
            for family in [KernelFamily::Hopping, KernelFamily::Diagonal] {
                let k = kernel_matrix(family, beta);
                assert_eq!(max_dev(&k, &k.adjoint()), 0.0);
            }
        }
    }

    #[test]
    fn beta_zero_is_identity() {
        for family in [KernelFamily::Hopping, KernelFamily::Diagonal] {
            assert_eq!(
                max_dev(&kernel_matrix(family, 0.0), &DMatrix::identity(4, 4)),
                0.0
            );
            assert!((alpha_closed_form(family, 0.0) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn oracle_residuals_vanish_on_the_grid() {
        for family in [KernelFamily::Hopping, KernelFamily::Diagonal] {
            let report = oracle_vs_numeric(family, &[0.1, 0.5, 1.0]).unwrap();
            assert!(
                report.max_residual < 1e-10,
                "family {family:?}: {:#?}",
                report.rows
            );
            assert_eq!(report.rows.len(), 3);
        }
    }

    #[test]
    fn complex_beta_kernel_agrees_on_the_real_axis() {
        let a = diagonal_kernel(0.7);
        let b = diagonal_kernel_complex(C64::new(0.7, 0.0));
        assert_eq!(max_dev(&a, &b), 0.0);
    }
}
