use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wac_core::diff::{Activation, Grad, Mlp, Tape, Tensor};
use wac_core::envs::EnvConfig;
use wac_core::gaussq::{barycenter_gaussian, std_normal_quantile, w2_gaussian, GaussianPosterior};

fn batch(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn mlp_forward_backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("mlp_forward_backward");
    for width in [32usize, 64, 256] {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::with_hidden(3, &[width, width], 1, Activation::Identity, &mut rng).unwrap();
        let x = batch(256, 3, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(width), &width, |b, _| {
            b.iter(|| {
                let mut tape = Tape::new();
                let input = tape.constant(x.clone());
                let out = net.forward(&mut tape, input, Grad::Track).unwrap();
                let sq = tape.square(out);
                let loss = tape.mean(sq);
                black_box(tape.backward(loss).unwrap());
            })
        });
    }
    group.finish();
}

fn gaussian_geometry(c: &mut Criterion) {
    let p = GaussianPosterior { mean: 0.3, std: 1.2 };
    let q = GaussianPosterior { mean: -1.0, std: 0.4 };
    c.bench_function("w2_gaussian", |b| b.iter(|| w2_gaussian(black_box(p), black_box(q))));
    c.bench_function("barycenter_two", |b| b.iter(|| barycenter_gaussian(black_box(&[(0.3, p), (0.7, q)])).unwrap()));
    c.bench_function("std_normal_quantile", |b| b.iter(|| std_normal_quantile(black_box(0.95)).unwrap()));
}

fn env_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("env_1000_steps");
    for name in ["lqg", "riverswim", "point1"] {
        let mut env = EnvConfig::by_name(name).unwrap().build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dim = env.spec().action_dim();
        group.bench_function(name, |b| {
            b.iter(|| {
                env.reset(&mut rng).unwrap();
                for _ in 0..1000 {
                    let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let action = env.spec().scale_action(&a);
                    black_box(env.step(&action, &mut rng).unwrap());
                }
            })
        });
    }
    group.finish();
}

criterion_group!(benches, mlp_forward_backward, gaussian_geometry, env_steps);
criterion_main!(benches);
