//! Central finite-difference gradients for checking the tape.

use super::mlp::Param;
use super::tape::{Gradients, Tape, Var};

/// Analytic gradient of `loss` over `params(state)`, flattened in parameter
/// order. Parameters the loss does not reach contribute zeros.
pub fn analytic_gradient<S>(
    state: &mut S,
    params: impl Fn(&mut S) -> Vec<&mut Param>,
    loss: impl Fn(&S, &mut Tape) -> Var,
) -> Vec<f64> {
    let mut tape = Tape::new();
    let l = loss(state, &mut tape);
    let grads: Gradients = tape.backward(l).expect("scalar loss");
    params(state)
        .into_iter()
        .flat_map(|p| match grads.param(p.id()) {
            Some(g) => g.data().to_vec(),
            None => vec![0.0; p.value().numel()],
        })
        .collect()
}

/// `(f(x + h) - f(x - h)) / 2h` for every coordinate of `params(state)`.
/// Each coordinate is restored after probing.
pub fn numeric_gradient<S>(
    state: &mut S,
    h: f64,
    params: impl Fn(&mut S) -> Vec<&mut Param>,
    loss: impl Fn(&S, &mut Tape) -> Var,
) -> Vec<f64> {
    let eval = |state: &S| {
        let mut tape = Tape::new();
        let l = loss(state, &mut tape);
        tape.value(l).item()
    };
    let sizes: Vec<usize> = params(state).iter().map(|p| p.value().numel()).collect();
    let mut out = Vec::with_capacity(sizes.iter().sum());
    for (pi, &n) in sizes.iter().enumerate() {
        for k in 0..n {
            let orig = params(state)[pi].value().data()[k];
            params(state)[pi].value_mut().data_mut()[k] = orig + h;
            let up = eval(state);
            params(state)[pi].value_mut().data_mut()[k] = orig - h;
            let down = eval(state);
            params(state)[pi].value_mut().data_mut()[k] = orig;
            out.push((up - down) / (2.0 * h));
        }
    }
    out
}

/// `max|a - b| / max(max|a|, max|b|)`, 0 when both vectors vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient lengths differ");
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
