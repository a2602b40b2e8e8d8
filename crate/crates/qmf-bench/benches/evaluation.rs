//! Cost comparison of the evaluation routes: the dense finite-volume
//! product, the one-layer collapse reduction, and the transfer-power fast
//! path, plus the raw ψ contraction underlying field expectations.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qmf_core::algebra::LocalOperator;
use qmf_core::cayley_chain::ChainSpec;
use qmf_core::emf::{AmplitudeField, EntangledField};
use qmf_core::graph::{Tree, Vertex};
use qmf_core::kernels::{kernel_matrix, KernelFamily};

fn hopping_spec() -> ChainSpec {
    ChainSpec::solve(2, 4, 2, kernel_matrix(KernelFamily::Hopping, 0.4)).unwrap()
}

fn root_unit() -> LocalOperator {
    LocalOperator::matrix_unit(Vertex::root(), 2, 1, 1).unwrap()
}

/// Correlation at distance 2 through the dense radius-2 functional versus
/// the transfer machinery; the dense route carries the full
/// 128-dimensional ball (and cannot reach distance 3 at all), while one
/// descend step on the 2×2 observable block costs microseconds.
fn bench_correlation_routes(c: &mut Criterion) {
    let spec = hopping_spec();
    let a = root_unit();
    let shifted = {
        let once = spec.shift_observable(1, &a).unwrap();
        spec.shift_observable(1, &once).unwrap()
    };
    let product = shifted.mul(&a).unwrap();
    let transfer = spec.transfer_superoperator().unwrap();

    let mut group = c.benchmark_group("correlation_distance_2");
    group.sample_size(20);
    group.bench_function("dense_functional", |b| {
        b.iter(|| spec.phi_n(2, &product).unwrap())
    });
    group.bench_function("transfer_construction", |b| {
        b.iter(|| spec.transfer_superoperator().unwrap())
    });
    group.bench_function("ten_descend_steps", |b| {
        b.iter(|| {
            let mut m = a.matrix().clone();
            for _ in 0..10 {
                m = transfer.apply(&m);
            }
            m
        })
    });
    group.finish();
}

/// The dense weight product against the collapsed representative at equal
/// radius: both evaluate the same functional.
fn bench_functional_routes(c: &mut Criterion) {
    let spec = hopping_spec();
    let a = root_unit();
    let mut group = c.benchmark_group("radius_1_functional");
    group.sample_size(30);
    group.bench_function("dense_product", |b| {
        b.iter(|| spec.phi_n_explicit(1, &a).unwrap())
    });
    group.bench_function("collapsed_layer", |b| {
        b.iter(|| spec.phi_n_reduced(1, &a).unwrap())
    });
    group.finish();
}

/// ψ contraction and field expectation on growing balls.
fn bench_psi_contraction(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tree = Tree::cayley(2, 3).unwrap();
    let field =
        EntangledField::new(AmplitudeField::random(tree, 2, &mut rng).unwrap()).unwrap();
    let a = root_unit();

    let mut group = c.benchmark_group("field_evaluation");
    for n in [2usize, 3] {
        let (_, ball) = field.tree().levels(n).unwrap();
        group.bench_function(format!("psi_ball_{n}"), |b| {
            b.iter_batched(
                || ball.clone(),
                |region| field.field().psi_vector(&region).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.bench_function("expect_root_unit", |b| b.iter(|| field.expect(&a).unwrap()));
    group.finish();
}

criterion_group!(
    benches,
    bench_correlation_routes,
    bench_functional_routes,
    bench_psi_contraction
);
criterion_main!(benches);
