use criterion::{criterion_group, criterion_main, Criterion};
use pbrom::{LinearSolverOptions, Model, Pcg, SpdSolver};
use pbrom_bench::system;

fn pcg(c: &mut Criterion) {
    let mut g = c.benchmark_group("pcg");
    g.sample_size(10);
    for n in [17, 33] {
        let sys = system(n);
        let rhs = sys.rhs(Model::Lrpbe, 0.1);
        let shift: Vec<f64> = sys.a2.iter().map(|a| 0.1 * a).collect();
        let solver = Pcg::new(LinearSolverOptions::default());
        g.bench_function(format!("linear_{n}"), |b| {
            b.iter(|| solver.solve(&sys.a1, Some(&shift), &rhs, None).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, pcg);
criterion_main!(benches);
