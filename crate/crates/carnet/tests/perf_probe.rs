//! Manual timing probe, ignored by default:
//! `cargo test -p carnet --release --test perf_probe -- --ignored --nocapture`

use std::time::Instant;

use carnet::ops::{conv2d, conv2d_backward, ConvParams};
use carnet::{Rng, Tensor};

fn time_case(name: &str, x: &Tensor, p: &ConvParams, iters: usize) {
    let y = conv2d(x, p).unwrap();
    let gy = Tensor::from_vec(y.shape(), vec![1.0; y.numel()]);
    let macs = (p.kh * p.kw * p.c_in * p.c_out * y.shape()[2] * y.shape()[3] * y.shape()[0]) as f64;

    let t0 = Instant::now();
    for _ in 0..iters {
        let _ = conv2d(x, p).unwrap();
    }
    let fwd = t0.elapsed().as_secs_f64() / iters as f64;

    let t0 = Instant::now();
    for _ in 0..iters {
        let _ = conv2d_backward(x, p, &gy).unwrap();
    }
    let bwd = t0.elapsed().as_secs_f64() / iters as f64;

    println!(
        "{name}: fwd {:.3} ms ({:.1} GFLOP/s), bwd {:.3} ms ({:.1} GFLOP/s)",
        fwd * 1e3,
        2.0 * macs / fwd / 1e9,
        bwd * 1e3,
        2.0 * 2.0 * macs / bwd / 1e9,
    );
}

#[test]
#[ignore]
fn conv_throughput() {
    let mut rng = Rng::new(7);
    // stage-2 residual conv at 192x192 training scale
    let x = Tensor::randn([2, 64, 48, 48], &mut rng, 0.0, 1.0);
    let mut p = ConvParams::new(64, 64, (3, 3), (1, 1), (1, 1), false);
    p.weights = Tensor::randn([64, 64, 3, 3], &mut rng, 0.0, 0.05);
    time_case("rb2 (2,64,48,48) 3x3", &x, &p, 30);

    // stage-3 residual conv
    let x = Tensor::randn([2, 128, 24, 24], &mut rng, 0.0, 1.0);
    let mut p = ConvParams::new(128, 128, (3, 3), (1, 1), (1, 1), false);
    p.weights = Tensor::randn([128, 128, 3, 3], &mut rng, 0.0, 0.05);
    time_case("rb3 (2,128,24,24) 3x3", &x, &p, 30);

    // stage-4 residual conv
    let x = Tensor::randn([2, 256, 12, 12], &mut rng, 0.0, 1.0);
    let mut p = ConvParams::new(256, 256, (3, 3), (1, 1), (1, 1), false);
    p.weights = Tensor::randn([256, 256, 3, 3], &mut rng, 0.0, 0.05);
    time_case("rb4 (2,256,12,12) 3x3", &x, &p, 30);

    // early downsampler
    let x = Tensor::randn([2, 16, 96, 96], &mut rng, 0.0, 1.0);
    let mut p = ConvParams::new(16, 48, (3, 3), (2, 2), (1, 1), false);
    p.weights = Tensor::randn([48, 16, 3, 3], &mut rng, 0.0, 0.05);
    time_case("db2 (2,16,96,96) 3x3 s2", &x, &p, 30);
}
