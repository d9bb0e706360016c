//! Small fixed Gauss-Legendre rules shared by the solver and the
//! tail-integration probes.

/// Nodes/weights on [-1, 1].
pub(crate) const GL2: [(f64, f64); 2] = [
    (-0.5773502691896257, 1.0),
    (0.5773502691896257, 1.0),
];

pub(crate) const GL3: [(f64, f64); 3] = [
    (-0.7745966692414834, 0.5555555555555556),
    (0.0, 0.8888888888888888),
    (0.7745966692414834, 0.5555555555555556),
];

pub(crate) const GL8: [(f64, f64); 8] = [
    (-0.9602898564975363, 0.10122853629037626),
    (-0.7966664774136267, 0.22238103445337448),
    (-0.525532409916329, 0.31370664587788727),
    (-0.18343464249564978, 0.3626837833783620),
    (0.18343464249564978, 0.3626837833783620),
    (0.525532409916329, 0.31370664587788727),
    (0.7966664774136267, 0.22238103445337448),
    (0.9602898564975363, 0.10122853629037626),
];

/// ∫ f over [lo, hi] with an n-point rule.
pub(crate) fn integrate<const N: usize>(
    rule: &[(f64, f64); N],
    lo: f64,
    hi: f64,
    f: impl Fn(f64) -> f64,
) -> f64 {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut acc = 0.0;
    for &(t, w) in rule {
        acc += w * f(mid + half * t);
    }
    acc * half
}
