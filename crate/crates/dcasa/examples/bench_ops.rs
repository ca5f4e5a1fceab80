//! Micro-timings of the hot kernels at desk-preset shapes.

use std::time::Instant;
use dcasa_core::graph::{Graph, Padding};
use dcasa_core::rng::rng_for;
use dcasa_core::tensor::Tensor;
use rand::Rng;

fn rt(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = rng_for(seed, 0);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen::<f32>() - 0.5).collect()).unwrap()
}

fn time_op(name: &str, mut f: impl FnMut()) {
    let t = Instant::now();
    let iters = 5;
    for _ in 0..iters {
        f();
    }
    println!("{name:40} {:>10.2?} /iter", t.elapsed() / iters);
}

fn main() {
    // block-4 last conv: [256,132,64] x [3,3,64,16] same-ish (valid)
    let x = rt(&[256, 132, 64], 1);
    let k = rt(&[3, 3, 64, 16], 2);
    time_op("conv2d fwd 256x132x64->16 valid", || {
        let mut g = Graph::<f32>::inference();
        let xn = g.constant(x.clone());
        let kn = g.constant(k.clone());
        let _ = g.conv2d(xn, kn, (1, 1), Padding::Valid).unwrap();
    });
    time_op("conv2d fwd+bwd", || {
        let mut g = Graph::<f32>::new();
        let xn = g.param(x.clone());
        let kn = g.param(k.clone());
        let c = g.conv2d(xn, kn, (1, 1), Padding::Valid).unwrap();
        let s = g.sum_all(c);
        let _ = g.backward(s).unwrap();
    });
    // fm matmul at block0: [274*16,150]x[150,150]
    let a = rt(&[4384, 150], 3);
    let b = rt(&[150, 150], 4);
    time_op("matmul 4384x150x150 fwd", || {
        let mut g = Graph::<f32>::inference();
        let an = g.constant(a.clone());
        let bn = g.constant(b.clone());
        let _ = g.matmul(an, bn).unwrap();
    });
    time_op("matmul fwd+bwd", || {
        let mut g = Graph::<f32>::new();
        let an = g.param(a.clone());
        let bn = g.param(b.clone());
        let c = g.matmul(an, bn).unwrap();
        let s = g.sum_all(c);
        let _ = g.backward(s).unwrap();
    });
    // transpose at [274,150,16]
    let t3 = rt(&[274, 150, 16], 5);
    time_op("transpose_axes(1,2) [274,150,16]", || {
        let mut g = Graph::<f32>::inference();
        let tn = g.constant(t3.clone());
        let _ = g.transpose_axes(tn, 1, 2).unwrap();
    });
    // concat of 3 big maps
    let c1 = rt(&[274, 150, 16], 6);
    time_op("concat_last x3 [274,150,16]", || {
        let mut g = Graph::<f32>::inference();
        let a1 = g.constant(c1.clone());
        let a2 = g.constant(c1.clone());
        let a3 = g.constant(c1.clone());
        let _ = g.concat_last(&[a1, a2, a3]).unwrap();
    });
    // layer norm at [274,150,16]
    let gn = rt(&[16], 7);
    time_op("layer_norm [274,150,16] fwd+bwd", || {
        let mut g = Graph::<f32>::new();
        let xn = g.param(c1.clone());
        let gg = g.param(gn.clone());
        let bb = g.param(gn.clone());
        let n = g.layer_norm(xn, gg, bb).unwrap();
        let s = g.sum_all(n);
        let _ = g.backward(s).unwrap();
    });
    // elementwise mul chain
    time_op("mul [274,150,16] fwd", || {
        let mut g = Graph::<f32>::inference();
        let a1 = g.constant(c1.clone());
        let a2 = g.constant(c1.clone());
        let _ = g.mul(a1, a2).unwrap();
    });
    let big = rt(&[274, 150, 34], 8);
    time_op("elu [274,150,34] fwd", || {
        let mut g = Graph::<f32>::inference();
        let a1 = g.constant(big.clone());
        let _ = g.elu(a1);
    });
    time_op("elu [274,150,34] fwd+bwd", || {
        let mut g = Graph::<f32>::new();
        let a1 = g.param(big.clone());
        let e = g.elu(a1);
        let s = g.sum_all(e);
        let _ = g.backward(s).unwrap();
    });
    time_op("layer_norm [274,150,34] fwd only", || {
        let mut g = Graph::<f32>::inference();
        let a1 = g.constant(big.clone());
        let gn2 = g.constant(rt(&[34], 9));
        let bn2 = g.constant(rt(&[34], 10));
        let _ = g.layer_norm(a1, gn2, bn2).unwrap();
    });
    let tr = rt(&[274, 150, 16], 11);
    time_op("transpose fwd+bwd", || {
        let mut g = Graph::<f32>::new();
        let a1 = g.param(tr.clone());
        let t = g.transpose_axes(a1, 1, 2).unwrap();
        let s = g.sum_all(t);
        let _ = g.backward(s).unwrap();
    });
    time_op("concat3 fwd+bwd", || {
        let mut g = Graph::<f32>::new();
        let a1 = g.param(tr.clone());
        let a2 = g.param(tr.clone());
        let a3 = g.param(tr.clone());
        let c = g.concat_last(&[a1, a2, a3]).unwrap();
        let s = g.sum_all(c);
        let _ = g.backward(s).unwrap();
    });
}
