use criterion::{black_box, criterion_group, criterion_main, Criterion};
use multibang::penalty::ConcentricParams;
use multibang::Penalty;
use multibang_bench::{grid, radial_three, transport_engine};

fn yosida(c: &mut Criterion) {
    let points = grid(100, 1.0);
    let radial = radial_three(0.1);
    let concentric = ConcentricParams::new(0.1);
    for (name, penalty) in [("radial", &radial as &dyn Penalty), ("concentric", &concentric)] {
        let map = penalty.regularize(1e-2);
        c.bench_function(&format!("yosida/{name}/10k"), |b| {
            b.iter(|| {
                let (mut h, mut d) = ([0.0; 2], [0.0; 4]);
                for q in &points {
                    black_box(map.eval(q, &mut h, &mut d));
                }
            })
        });
    }
    let engine = transport_engine(1e-3);
    let map = engine.regularize(1e-2);
    let queries: Vec<[f64; 3]> = points.iter().map(|q| [q[0], q[1], 0.5 * (q[0] - q[1])]).collect();
    c.bench_function("yosida/engine-transport/10k", |b| {
        b.iter(|| {
            let (mut h, mut d) = ([0.0; 3], [0.0; 9]);
            for q in &queries {
                black_box(map.eval(q, &mut h, &mut d));
            }
        })
    });
}

fn faces(c: &mut Criterion) {
    c.bench_function("engine/build-transport", |b| b.iter(|| black_box(transport_engine(1e-3))));
}

criterion_group!(benches, yosida, faces);
criterion_main!(benches);
