use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, Tensor, Var};

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Compares analytic gradients of a scalar-valued builder against central differences.
fn check(inputs: Vec<Tensor>, build: impl Fn(&mut Graph, &[Var]) -> Var) {
    let eval = |xs: &[Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.variable(t.clone())).collect();
        let out = build(&mut g, &vars);
        g.value(out).item()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = build(&mut g, &vars);
    let grads = g.backward(out).unwrap();
    let h = 1e-6;
    for (k, t) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).expect("gradient present");
        for i in 0..t.len() {
            let mut xs = inputs.clone();
            xs[k].data_mut()[i] += h;
            let up = eval(&xs);
            xs[k].data_mut()[i] -= 2.0 * h;
            let down = eval(&xs);
            let fd = (up - down) / (2.0 * h);
            let a = analytic.data()[i];
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-7);
            assert!(err < 1e-5 || (a - fd).abs() < 1e-8, "input {k} elem {i}: analytic {a} fd {fd}");
        }
    }
}

/// Weighted sum so every output element gets a distinct upstream gradient.
fn weighted_sum(g: &mut Graph, x: Var) -> Var {
    let n = g.value(x).len();
    let w = Tensor::new(g.shape(x).to_vec(), (0..n).map(|i| 0.3 + 0.17 * i as f64).collect()).unwrap();
    let w = g.constant(w);
    let p = g.mul(x, w).unwrap();
    g.reduce_sum(p)
}

#[test]
fn elementwise_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&[2, 3], &mut rng);
    let b = random(&[2, 3], &mut rng);
    check(vec![a, b], |g, v| {
        let s = g.add(v[0], v[1]).unwrap();
        let d = g.sub(s, v[1]).unwrap();
        let m = g.mul(d, v[1]).unwrap();
        let m = g.scale(m, -1.7);
        let m = g.mul(m, v[0]).unwrap();
        weighted_sum(g, m)
    });
}

#[test]
fn matmul_and_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random(&[3, 4], &mut rng);
    let b = random(&[4, 5], &mut rng);
    let bias = random(&[5], &mut rng);
    check(vec![a, b, bias], |g, v| {
        let m = g.matmul(v[0], v[1]).unwrap();
        let m = g.add_bias(m, v[2]).unwrap();
        weighted_sum(g, m)
    });
}

#[test]
fn conv_gelu_flatten() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[2, 3, 7], &mut rng);
    let w = random(&[4, 3, 3], &mut rng);
    let bias = random(&[4], &mut rng);
    check(vec![x, w, bias], |g, v| {
        let c = g.conv1d(v[0], v[1]).unwrap();
        let c = g.add_bias(c, v[2]).unwrap();
        let c = g.gelu(c);
        let f = g.flatten(c).unwrap();
        weighted_sum(g, f)
    });
}

#[test]
fn conv_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&[2, 2, 5], &mut rng);
    let w = random(&[3, 2, 3], &mut rng);
    let mut g = Graph::new();
    let (vx, vw) = (g.constant(x.clone()), g.constant(w.clone()));
    let out = g.conv1d(vx, vw).unwrap();
    let o = g.value(out).data();
    for b in 0..2 {
        for co in 0..3 {
            for n in 0..5 {
                let mut s = 0.0;
                for ci in 0..2 {
                    for k in 0..3 {
                        let j = n as isize + k as isize - 1;
                        if (0..5).contains(&j) {
                            s += w.data()[(co * 2 + ci) * 3 + k] * x.data()[(b * 2 + ci) * 5 + j as usize];
                        }
                    }
                }
                assert!((o[(b * 3 + co) * 5 + n] - s).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn abs_and_normalize() {
    let x = Tensor::new(vec![2, 4], vec![0.3, -0.9, 0.5, 0.1, 0.7, 0.2, -0.4, 0.65]).unwrap();
    check(vec![x], |g, v| {
        let n = g.normalize_max_abs(v[0]).unwrap();
        let a = g.abs(n);
        let a = g.add(a, n).unwrap();
        weighted_sum(g, a)
    });
}

#[test]
fn linearized_uses_jacobian() {
    let theta = Tensor::vector(vec![0.4, -1.2]);
    check(vec![theta], |g, v| {
        let t = g.value(v[0]).data().to_vec();
        let value = Tensor::vector(vec![t[0] * t[1], t[0].sin(), t[1] * t[1]]);
        let jac = Tensor::matrix(3, 2, vec![t[1], t[0], t[0].cos(), 0.0, 0.0, 2.0 * t[1]]).unwrap();
        let l = g.linearized(v[0], value, jac).unwrap();
        weighted_sum(g, l)
    });
}

#[test]
fn shared_node_accumulates() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::vector(vec![3.0]));
    let y = g.mul(x, x).unwrap();
    let z = g.add(y, x).unwrap();
    let s = g.reduce_sum(z);
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap().item(), 7.0);
}

#[test]
fn shape_errors_name_both_shapes() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[2, 2]));
    let e = g.matmul(a, b).unwrap_err().to_string();
    assert!(e.contains("[2, 3]") && e.contains("[2, 2]"), "{e}");
    assert!(g.backward(a).is_err());
}
