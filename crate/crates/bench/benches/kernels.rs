use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use floquet_core::topology::{chern_occupied, BZGrid};
use floquet_core::{evolve, floquet_hamiltonian, hermitian_eig, prepare_eigenstate, DriveConfig, ModelParams, SimConfig};

fn kernels(c: &mut Criterion) {
    let p = ModelParams::new(-1.0, -1.0, 0.5, 4.0).unwrap();
    let d = DriveConfig::golden(0.1).unwrap();
    let h = floquet_hamiltonian(&p, &d, 12.345);

    c.bench_function("hermitian_eig", |b| b.iter(|| hermitian_eig(black_box(&h))));

    let psi = prepare_eigenstate(&p, &d, 1).unwrap();
    let sim = SimConfig::new(10.0, 1e-3, 100).unwrap();
    c.bench_function("evolve_10k_steps", |b| {
        b.iter(|| evolve(black_box(&p), &d, &sim, &[psi], &mut []).unwrap())
    });

    let bare = ModelParams::bare(1.0, 1.0, 0.5).unwrap();
    c.bench_function("chern_occupied_n64", |b| {
        b.iter(|| chern_occupied(black_box(&bare), BZGrid::default()).unwrap())
    });
}

criterion_group!(benches, kernels);
criterion_main!(benches);
