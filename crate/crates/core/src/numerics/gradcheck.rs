//! Central finite-difference checks for every differentiable graph op.

use super::*;

const H: f64 = 1e-5;

/// Relative error with a small floor so near-zero gradients are compared
/// on an absolute scale.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Builds `f(inputs)` as a scalar, then compares the analytic gradient of
/// every input coordinate against a central difference.
fn check<F>(inputs: &[Tensor], f: F, tol: f64)
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let loss = f(&mut g, &vars);
    let grads = g.backward(loss).unwrap();

    let eval = |ins: &[Tensor]| {
        let mut g = Graph::inference();
        let vars: Vec<Var> = ins.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars);
        g.value(out).data()[0]
    };
    for (idx, t) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[idx]).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()]);
        for c in 0..t.len() {
            let mut plus = inputs.to_vec();
            plus[idx].data_mut()[c] += H;
            let mut minus = inputs.to_vec();
            minus[idx].data_mut()[c] -= H;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * H);
            let e = rel_err(analytic[c], fd);
            assert!(e < tol, "input {idx} coord {c}: analytic {} vs fd {fd} (rel {e})", analytic[c]);
        }
    }
}

fn rand(rng: &mut RandomSource, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), rng.normal_vec(n)).unwrap()
}

#[test]
fn sum_of_squares_gradient_is_two_x() {
    let mut rng = RandomSource::new(1, 0);
    let x = rand(&mut rng, &[3, 4]);
    let mut g = Graph::new();
    let v = g.variable(x.clone());
    let sq = g.mul(v, v).unwrap();
    let loss = g.sum(sq);
    let grads = g.backward(loss).unwrap();
    for (a, b) in grads.get(v).unwrap().iter().zip(x.data()) {
        assert_eq!(*a, 2.0 * b);
    }
}

#[test]
fn unreached_parameter_gets_zero_gradient() {
    let mut params = ParamSet::new();
    params.insert("used".into(), Tensor::filled(&[2], 1.0).into_param());
    params.insert("unused".into(), Tensor::filled(&[2], 1.0).into_param());
    let mut g = Graph::new();
    let u = g.param(&params, "used").unwrap();
    let _ = g.param(&params, "unused").unwrap();
    let loss = g.sum(u);
    g.backward_into(loss, &mut params).unwrap();
    assert_eq!(params["unused"].grad.as_deref(), Some(&[0.0, 0.0][..]));
    assert_eq!(params["used"].grad.as_deref(), Some(&[1.0, 1.0][..]));
    // accumulation is additive
    g.backward_into(loss, &mut params).unwrap();
    assert_eq!(params["used"].grad.as_deref(), Some(&[2.0, 2.0][..]));
}

#[test]
fn backward_requires_scalar() {
    let mut g = Graph::new();
    let v = g.variable(Tensor::zeros(&[2, 2]));
    assert!(matches!(g.backward(v), Err(crate::Error::Contract(_))));
}

#[test]
fn matmul_add_row_gelu() {
    for seed in 0..5 {
        let mut rng = RandomSource::new(seed, 1);
        let ins = [rand(&mut rng, &[3, 4]), rand(&mut rng, &[4, 5]), rand(&mut rng, &[5])];
        check(
            &ins,
            |g, v| {
                let h = g.linear(v[0], v[1], v[2]).unwrap();
                let a = g.gelu(h);
                let sq = g.mul(a, a).unwrap();
                g.mean(sq)
            },
            1e-6,
        );
    }
}

#[test]
fn layer_norm() {
    for seed in 0..5 {
        let mut rng = RandomSource::new(seed, 2);
        let ins = [rand(&mut rng, &[4, 6]), rand(&mut rng, &[6]), rand(&mut rng, &[6]), rand(&mut rng, &[4, 6])];
        check(
            &ins,
            |g, v| {
                let y = g.layer_norm(v[0], v[1], v[2]).unwrap();
                let w = g.mul(y, v[3]).unwrap();
                g.sum(w)
            },
            1e-6,
        );
    }
}

#[test]
fn attention_with_distinct_keys() {
    for seed in 0..5 {
        let mut rng = RandomSource::new(seed, 3);
        let ins = [rand(&mut rng, &[5, 8]), rand(&mut rng, &[3, 8]), rand(&mut rng, &[3, 8]), rand(&mut rng, &[5, 8])];
        check(
            &ins,
            |g, v| {
                let o = g.attention(v[0], v[1], v[2], 2).unwrap();
                let w = g.mul(o, v[3]).unwrap();
                g.sum(w)
            },
            1e-6,
        );
    }
}

#[test]
fn attention_over_sliced_context() {
    let mut rng = RandomSource::new(9, 4);
    let ins = [rand(&mut rng, &[6, 4]), rand(&mut rng, &[4, 4]), rand(&mut rng, &[6, 4])];
    check(
        &ins,
        |g, v| {
            let q = g.matmul(v[0], v[1]).unwrap();
            let ctx = g.slice_rows(v[0], 0, 3).unwrap();
            let o = g.attention(q, ctx, ctx, 2).unwrap();
            let w = g.mul(o, v[2]).unwrap();
            g.sum(w)
        },
        1e-6,
    );
}

#[test]
fn softmax_and_log_softmax() {
    let mut rng = RandomSource::new(3, 5);
    let ins = [rand(&mut rng, &[3, 4]), rand(&mut rng, &[3, 4])];
    check(
        &ins,
        |g, v| {
            let s = g.softmax(v[0]).unwrap();
            let l = g.log_softmax(v[0]).unwrap();
            let a = g.mul(s, v[1]).unwrap();
            let b = g.mul(l, v[1]).unwrap();
            let c = g.add(a, b).unwrap();
            g.sum(c)
        },
        1e-6,
    );
}

#[test]
fn cross_entropy_and_mae() {
    let mut rng = RandomSource::new(4, 6);
    let ins = [rand(&mut rng, &[5, 4]), rand(&mut rng, &[5, 1])];
    check(
        &ins,
        |g, v| {
            let ce = g.cross_entropy(v[0], &[0, 3, 1, 2, 2]).unwrap();
            let mae = g.mae(v[1], &[10.0, -10.0, 10.0, -10.0, 10.0]).unwrap();
            let s = g.scale(mae, 0.5);
            let t = g.add(ce, s).unwrap();
            g.sum(t)
        },
        1e-6,
    );
}

#[test]
fn dropout_gradient_uses_mask() {
    let mut rng = RandomSource::new(5, 7);
    let x = rand(&mut rng, &[4, 4]);
    let mut g = Graph::new();
    let v = g.variable(x);
    let mut drng = RandomSource::new(5, 8);
    let d = g.dropout(v, 0.5, &mut drng).unwrap();
    let loss = g.sum(d);
    let grads = g.backward(loss).unwrap();
    for &gv in grads.get(v).unwrap() {
        assert!(gv == 0.0 || gv == 2.0);
    }
}

#[test]
fn composite_mlp_loss() {
    for seed in 0..20 {
        let mut rng = RandomSource::new(seed, 9);
        let ins = [
            rand(&mut rng, &[4, 3]),
            rand(&mut rng, &[3, 6]),
            rand(&mut rng, &[6]),
            rand(&mut rng, &[6, 2]),
            rand(&mut rng, &[2]),
        ];
        check(
            &ins,
            |g, v| {
                let h = g.linear(v[0], v[1], v[2]).unwrap();
                let a = g.gelu(h);
                let o = g.linear(a, v[3], v[4]).unwrap();
                g.cross_entropy(o, &[0, 1, 1, 0]).unwrap()
            },
            1e-6,
        );
    }
}
