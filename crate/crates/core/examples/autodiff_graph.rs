//! A tiny conv -> GELU -> linear model, differentiated by the tape and checked
//! against a central difference.

use fri_forge::autodiff::{Graph, Tensor};

fn loss(w: &Tensor, x: &Tensor, v: &Tensor) -> (f64, Option<Tensor>) {
    let mut g = Graph::new();
    let xw = g.constant(x.clone());
    let wv = g.variable(w.clone());
    let vv = g.constant(v.clone());
    let h = g.conv1d(xw, wv).unwrap();
    let h = g.gelu(h);
    let h = g.flatten(h).unwrap();
    let out = g.matmul(h, vv).unwrap();
    let out = g.abs(out);
    let l = g.reduce_sum(out);
    let grads = g.backward(l).unwrap();
    (g.value(l).item(), grads.get(wv).cloned())
}

fn main() {
    let x = Tensor::new(vec![1, 1, 8], (0..8).map(|i| (i as f64 * 0.9).sin()).collect()).unwrap();
    let w = Tensor::new(vec![2, 1, 3], vec![0.3, -0.2, 0.5, 0.1, 0.4, -0.6]).unwrap();
    let v = Tensor::new(vec![16, 1], (0..16).map(|i| 0.1 * i as f64 - 0.7).collect()).unwrap();

    let (l, grad) = loss(&w, &x, &v);
    let grad = grad.unwrap();
    println!("loss {l:.6}");
    let h = 1e-6;
    for i in 0..w.len() {
        let mut plus = w.clone();
        plus.data_mut()[i] += h;
        let mut minus = w.clone();
        minus.data_mut()[i] -= h;
        let fd = (loss(&plus, &x, &v).0 - loss(&minus, &x, &v).0) / (2.0 * h);
        println!("dL/dw[{i}] tape {:+.8}  fd {fd:+.8}", grad.data()[i]);
    }
}
