use phaedra_tensor::kernels::{gemm_nn, im2col, ConvGeometry};
use std::time::Instant;

#[test]
#[ignore]
fn gemm_throughput() {
    let (m, k, n) = (32usize, 288usize, 4096usize);
    let a: Vec<f32> = (0..m * k).map(|v| (v as f32 * 0.01).sin()).collect();
    let b: Vec<f32> = (0..k * n).map(|v| (v as f32 * 0.001).cos()).collect();
    let mut c = vec![0.0f32; m * n];
    let reps = 100;
    let t0 = Instant::now();
    for _ in 0..reps {
        gemm_nn(&a, &b, m, k, n, &mut c, false);
    }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    println!("gemm {m}x{k}x{n}: {:.3} ms = {:.2} GF/s [{}]", dt * 1e3, 2.0 * (m * k * n) as f64 / dt / 1e9, c[0]);

    let g = ConvGeometry { c_in: 32, h_in: 64, w_in: 64, c_out: 32, kernel: 3, stride: 1, padding: 1, h_out: 64, w_out: 64 };
    let input: Vec<f32> = (0..32 * 64 * 64).map(|v| (v as f32 * 0.001).sin()).collect();
    let mut cols = vec![0.0f32; g.patch_len() * g.out_positions()];
    let t0 = Instant::now();
    for _ in 0..reps {
        im2col(&input, &g, &mut cols);
    }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    println!("im2col: {:.3} ms [{}]", dt * 1e3, cols[0]);
}
