use ndarray::{Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::Scalar;

/// Which values share one `(min, max)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MinMaxScope {
    /// Each feature over the rows of the batch.
    #[default]
    PerFeature,
    /// One pair for every entry of the batch.
    WholeBatch,
    /// Each example over its own features.
    PerSample,
}

/// Positions of the extremes for the exact backward pass.
#[derive(Debug, Clone)]
pub struct MinMaxCache<S> {
    scope: MinMaxScope,
    shape: (usize, usize),
    // one entry per lane
    lo: Vec<usize>,
    hi: Vec<usize>,
    range: Vec<S>,
}

/// Per-feature MinMax: `(x − min)/(max − min)`; a constant feature maps to ½.
pub fn minmax_normalize<S: Scalar>(batch: ArrayView2<S>) -> Array2<S> {
    minmax_forward(batch, MinMaxScope::PerFeature).0
}

fn lane_axis(scope: MinMaxScope) -> Axis {
    match scope {
        // lanes along axis 0 are columns
        MinMaxScope::PerFeature => Axis(0),
        MinMaxScope::PerSample | MinMaxScope::WholeBatch => Axis(1),
    }
}

/// MinMax rescaling under `scope`, with what the backward pass needs.
pub fn minmax_forward<S: Scalar>(
    batch: ArrayView2<S>,
    scope: MinMaxScope,
) -> (Array2<S>, MinMaxCache<S>) {
    let shape = batch.dim();
    let flat;
    let view = if scope == MinMaxScope::WholeBatch {
        flat = batch
            .to_shape((1, shape.0 * shape.1))
            .expect("reshape to a single row")
            .to_owned();
        flat.view()
    } else {
        batch
    };
    let axis = lane_axis(scope);
    let mut out = Array2::zeros(view.raw_dim());
    let lanes = view.lanes(axis).into_iter().count();
    let mut cache = MinMaxCache {
        scope,
        shape,
        lo: Vec::with_capacity(lanes),
        hi: Vec::with_capacity(lanes),
        range: Vec::with_capacity(lanes),
    };
    for (src, mut dst) in view.lanes(axis).into_iter().zip(out.lanes_mut(axis)) {
        let (mut lo, mut hi) = (0, 0);
        for (i, &x) in src.iter().enumerate() {
            if x < src[lo] {
                lo = i;
            }
            if x > src[hi] {
                hi = i;
            }
        }
        let (min, range) = (src[lo], src[hi] - src[lo]);
        if range > S::zero() {
            Zip::from(&mut dst).and(&src).for_each(|d, &x| *d = (x - min) / range);
        } else {
            dst.fill(S::lit(0.5));
        }
        cache.lo.push(lo);
        cache.hi.push(hi);
        cache.range.push(range);
    }
    let out = if scope == MinMaxScope::WholeBatch {
        out.into_shape_with_order(shape).expect("restore batch shape")
    } else {
        out
    };
    (out, cache)
}

/// Exact gradient of [`minmax_forward`], including the dependence of every
/// output on the arg-min and arg-max inputs.
///
/// With `R = max − min`: `∂u_i/∂x_i = 1/R`, `∂u_i/∂x_min = (u_i − 1)/R`,
/// `∂u_i/∂x_max = −u_i/R`. Degenerate lanes (`R = 0`) are constant.
pub fn minmax_backward<S: Scalar>(
    grad_u: ArrayView2<S>,
    u: ArrayView2<S>,
    cache: &MinMaxCache<S>,
) -> Array2<S> {
    assert_eq!(grad_u.dim(), cache.shape, "gradient shape differs from forward batch");
    let flat_shape = (1, cache.shape.0 * cache.shape.1);
    let (g_owned, u_owned);
    let (g, uv) = if cache.scope == MinMaxScope::WholeBatch {
        g_owned = grad_u.to_shape(flat_shape).unwrap().to_owned();
        u_owned = u.to_shape(flat_shape).unwrap().to_owned();
        (g_owned.view(), u_owned.view())
    } else {
        (grad_u, u)
    };
    let axis = lane_axis(cache.scope);
    let mut out = Array2::zeros(g.raw_dim());
    for (lane, ((gl, ul), mut ol)) in g
        .lanes(axis)
        .into_iter()
        .zip(uv.lanes(axis))
        .zip(out.lanes_mut(axis))
        .enumerate()
    {
        let range = cache.range[lane];
        if !(range > S::zero()) {
            continue;
        }
        let inv = S::one() / range;
        let mut g_sum = S::zero();
        let mut gu_sum = S::zero();
        for ((o, &gi), &ui) in ol.iter_mut().zip(gl.iter()).zip(ul.iter()) {
            *o = gi * inv;
            g_sum += gi;
            gu_sum += gi * ui;
        }
        ol[cache.lo[lane]] += (gu_sum - g_sum) * inv;
        ol[cache.hi[lane]] -= gu_sum * inv;
    }
    if cache.scope == MinMaxScope::WholeBatch {
        out.into_shape_with_order(cache.shape).unwrap()
    } else {
        out
    }
}
