use criterion::{black_box, criterion_group, criterion_main, Criterion};
use dipstop_bench::{desk_arch, fixture};
use dipstop_core::network::ArchSpec;
use dipstop_core::optimizer::evaluate_objective;
use dipstop_core::Objective;

fn network(c: &mut Criterion) {
    let mut g = c.benchmark_group("network");
    for (name, arch) in [("desk", desk_arch()), ("default", ArchSpec::default())] {
        let f = fixture(arch, 64, Objective::Dip);
        g.bench_function(format!("{name}/forward"), |b| b.iter(|| f.net.forward(black_box(&f.y)).unwrap()));
        g.bench_function(format!("{name}/input_vjp"), |b| {
            b.iter(|| f.net.input_vjp(black_box(&f.y), &f.x).unwrap())
        });
        g.bench_function(format!("{name}/param_vjp"), |b| {
            b.iter(|| f.net.param_vjp(black_box(&f.y), &f.x).unwrap())
        });
    }
    g.finish();
}

fn objectives(c: &mut Criterion) {
    let mut g = c.benchmark_group("objective_step");
    for objective in Objective::ALL {
        let f = fixture(desk_arch(), 64, objective);
        g.bench_function(objective.name(), |b| {
            b.iter(|| evaluate_objective(&f.net, black_box(&f.y), &f.cfg, 0).unwrap())
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = network, objectives
}
criterion_main!(benches);
