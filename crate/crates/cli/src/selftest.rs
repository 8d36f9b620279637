//! Small-N oracle and identity suite behind `opsize selftest`.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::Array2;
use serde::Serialize;

use opsize::decomposition::decompose_with_sign_fault;
use opsize::otoc::{exact_otoc, mc_otoc_variance, ResponsePair};
use opsize::quench::rng::{stream, Purpose};
use opsize::quench::{
    exact_variance, exact_variance_doubled, mc_variance, recover_region_distribution, region_variances_all,
    EnsembleSpec, PrepErrorModel, SiteEnsemble,
};
use opsize::{
    decompose, decompose_oracle, eigendecompose, generating_function, region_distribution, site_basis,
    size_from_samples, string_to_matrix, swap_operator, ChainSpec, DenseOperator, PauliString,
    SizeDistribution, C64,
};

use crate::output::VERSION;
use crate::CliError;

/// Deliberate faults for checking that the suite can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// Flip the sign of one coefficient in the fast transform.
    TransformSign,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub version: &'static str,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn check(name: &str, residual: f64, threshold: f64) -> Check {
    Check { name: name.into(), residual, threshold, passed: residual <= threshold }
}

fn random_op(chain: ChainSpec, sample: u64) -> DenseOperator {
    DenseOperator::random_hermitian(chain, &mut stream(0, Purpose::Operator, sample, 0))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn pauli(chain: ChainSpec, text: &str) -> Result<DenseOperator, CliError> {
    crate::config::string_op(&crate::config::parse_string(chain, text)?)
}

pub fn run(fault: Option<Fault>) -> Result<Report, CliError> {
    let mut checks = Vec::new();

    // tr(σ_a σ_b) = d δ_ab and Σ_a σ_a ⊗ σ_a = dX − I over the traceless
    // elements.
    for d in [2usize, 3, 4] {
        let basis = site_basis(d)?;
        let mut ortho = 0.0f64;
        let mut sum = Array2::<C64>::zeros((d * d, d * d));
        for (a, sa) in basis.matrices().iter().enumerate() {
            for (b, sb) in basis.matrices().iter().enumerate() {
                let tr: C64 = sa.dot(sb).diag().sum();
                let want = if a == b { d as f64 } else { 0.0 };
                ortho = ortho.max((tr - want).norm());
            }
            sum = sum + opsize::algebra::kron(sa, sa);
        }
        let want = swap_operator(d)? * C64::from(d as f64) - Array2::<C64>::eye(d * d);
        let completeness = (&sum - &want).iter().map(|z| z.norm()).fold(0.0, f64::max);
        checks.push(check(&format!("basis_orthogonality_d{d}"), ortho, 1e-12));
        checks.push(check(&format!("basis_completeness_d{d}"), completeness, 1e-12));
    }

    // Fast transform against one literal trace per string.
    let mut transform = 0.0f64;
    for (n, d) in [(1, 2), (2, 2), (3, 2), (4, 2), (2, 3)] {
        let op = random_op(ChainSpec::new(n, d)?, n as u64 * 10 + d as u64);
        let fast = match fault {
            Some(Fault::TransformSign) => decompose_with_sign_fault(&op)?,
            None => decompose(&op)?,
        };
        transform = transform.max(max_diff(fast.values(), decompose_oracle(&op)?.values()));
    }
    checks.push(check("transform_vs_oracle", transform, 1e-10));

    // F at the roots of unity reproduces p_l.
    let chain = ChainSpec::qubits(4)?;
    let p = SizeDistribution::of_operator(&random_op(chain, 1))?;
    let samples: Vec<C64> =
        opsize::decomposition::sample_points(chain).into_iter().map(|z| generating_function(&p, z)).collect();
    checks.push(check(
        "generating_function_round_trip",
        max_diff(size_from_samples(chain, &samples)?.p(), p.p()),
        1e-9,
    ));

    // Size-distribution formula against the doubled-space trace.
    let mut two_path = 0.0f64;
    for n in 1..=3 {
        let op = random_op(ChainSpec::qubits(n)?, 100 + n as u64).traceless_part().normalized()?;
        let a = exact_variance(&SizeDistribution::of_operator(&op)?, PrepErrorModel::none());
        two_path = two_path.max((a - exact_variance_doubled(&op)?).abs());
    }
    checks.push(check("variance_two_paths", two_path, 1e-10));

    // Monte-Carlo central identity at N = 3 (4 standard errors).
    let chain = ChainSpec::qubits(3)?;
    let op = random_op(chain, 7).traceless_part().normalized()?;
    let want = exact_variance(&SizeDistribution::of_operator(&op)?, PrepErrorModel::none());
    let s = mc_variance(&op, &EnsembleSpec::haar_product(chain, 7), 10_000)?;
    checks.push(check("central_identity_mc_sigmas", (s.variance - want).abs() / s.stderr_of_variance, 4.0));

    let report = SiteEnsemble::pauli_six().verify_2design();
    checks.push(check(
        "six_state_2design",
        report.first_moment_residual.max(report.second_moment_residual),
        report.threshold,
    ));

    // Inclusion-exclusion from exact region variances.
    let chain = ChainSpec::qubits(4)?;
    let r = region_distribution(&decompose(&random_op(chain, 3))?)?;
    let v: HashMap<u64, f64> = region_variances_all(&r).into_iter().enumerate().map(|(m, x)| (m as u64, x)).collect();
    let mut recovery = 0.0f64;
    for mask in 0..chain.n_regions() as u64 {
        recovery = recovery.max((recover_region_distribution(&v, mask, 2)? - r.get(mask)).abs());
    }
    checks.push(check("inclusion_exclusion_round_trip", recovery, 1e-8));

    // OTOC: single qubit exactly, N = 2 by sampling.
    let one = ChainSpec::qubits(1)?;
    let free = Arc::new(eigendecompose(&DenseOperator::zeros(one))?);
    let rp = ResponsePair::new(pauli(one, "X0")?, pauli(one, "Z0")?, free, 0.0, 1.0)?;
    checks.push(check("otoc_single_qubit", (exact_otoc(&rp) - 4.0 / 3.0).abs(), 1e-12));
    checks.push(check("otoc_acausal_zero", exact_otoc(&rp.at_times(1.0, 0.0)?).abs(), 0.0));
    let two = ChainSpec::qubits(2)?;
    let h = Arc::new(eigendecompose(&random_op(two, 11))?);
    let rp = ResponsePair::new(pauli(two, "X0")?, pauli(two, "Z1")?, h, 0.0, 0.7)?;
    let s = mc_otoc_variance(&rp, 10_000, 5)?;
    checks.push(check("otoc_mc_sigmas", (s.variance - exact_otoc(&rp)).abs() / s.stderr_of_variance, 4.0));

    // Evolution keeps Pauli strings normalized.
    let chain = ChainSpec::qubits(3)?;
    let x = string_to_matrix(&PauliString::single(chain, 1, 1)?, &site_basis(2)?)?;
    let spectral = Arc::new(eigendecompose(&random_op(chain, 12))?);
    let xt = opsize::evolve_operator(&x, &spectral, 2.5)?;
    checks.push(check(
        "evolution_preserves_norm",
        (xt.hs_norm2() - x.hs_norm2()).abs() / x.hs_norm2(),
        1e-12,
    ));

    let passed = checks.iter().all(|c| c.passed);
    Ok(Report { version: VERSION, passed, checks })
}
