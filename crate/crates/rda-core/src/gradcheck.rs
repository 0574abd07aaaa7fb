//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates the scalar objective at perturbed
//! parameters, so it stays independent of the reverse-mode path it is used
//! to verify. Lives in the library (rather than test code) because the
//! acceptance suite and downstream fixtures both drive it.

use crate::mlp::{GradBundle, Mlp};
use crate::num::Scalar;

/// Central finite differences of `objective` with respect to every parameter
/// of `net`, at step `h`. The network is restored bit-exactly afterwards.
pub fn central_difference_grads<S: Scalar>(
    net: &mut Mlp<S>,
    h: S,
    mut objective: impl FnMut(&Mlp<S>) -> S,
) -> GradBundle<S> {
    let mut grads = GradBundle::zeros_like(net);
    let count = net.param_count();
    let two_h = h + h;
    for i in 0..count {
        let original = *net.param_mut(i);
        *net.param_mut(i) = original + h;
        let up = objective(net);
        *net.param_mut(i) = original - h;
        let down = objective(net);
        *net.param_mut(i) = original;
        // GradBundle shares the flat parameter layout with Mlp.
        set_flat(&mut grads, i, (up - down) / two_h);
    }
    grads
}

fn set_flat<S: Scalar>(grads: &mut GradBundle<S>, mut i: usize, v: S) {
    for layer in &mut grads.layers {
        let nw = layer.weight.data().len();
        if i < nw {
            layer.weight.data_mut()[i] = v;
            return;
        }
        i -= nw;
        if i < layer.bias.len() {
            layer.bias[i] = v;
            return;
        }
        i -= layer.bias.len();
    }
    panic!("parameter index out of range");
}

/// Worst relative deviation between two gradient bundles.
///
/// A coordinate passes if the absolute error is below `abs_floor` or the
/// relative error (against the larger magnitude) is below the returned value
/// compared by the caller. Returns `(max_relative_error, index)` over the
/// coordinates that exceed the absolute floor.
pub fn max_relative_error<S: Scalar>(
    analytic: &GradBundle<S>,
    numeric: &GradBundle<S>,
    abs_floor: S,
) -> (S, usize) {
    assert_eq!(analytic.param_count(), numeric.param_count());
    let mut worst = S::zero();
    let mut worst_idx = 0;
    for i in 0..analytic.param_count() {
        let a = analytic.param(i);
        let n = numeric.param(i);
        let err = (a - n).abs();
        if err <= abs_floor {
            continue;
        }
        let rel = err / a.abs().max(n.abs());
        if rel > worst {
            worst = rel;
            worst_idx = i;
        }
    }
    (worst, worst_idx)
}
