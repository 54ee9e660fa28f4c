use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::manifold::{
    boost_matrix, lorentz_inner, normal, random_point, random_rotation_block, rotation_matrix,
    squared_distance, Curvature, LorentzPoint, Matrix,
};
use crate::params::{Param, StepCtx};
use crate::tensor::{finite_difference_check, Tape, Tensor};
use crate::Result;

fn curv() -> Curvature<f64> {
    Curvature::standard()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn drift(coords: &[f64]) -> f64 {
    (lorentz_inner(coords, coords) + 1.0).abs()
}

fn random_matrix(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| normal::<f64>(r)).collect())
}

/// Weighted sum of all output elements — a generic scalar head for FD checks.
fn weighted_sum<'t>(y: &Tensor<'t, f64>) -> Result<Tensor<'t, f64>> {
    let coefs: Vec<f64> = (0..y.len())
        .map(|i| (0.3 + 0.17 * i as f64) * if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    Ok(y.mul(&Tensor::constant(&[y.len()], coefs))?.sum())
}

type FdFn<'c> = dyn for<'a> Fn(&'a Tape<f64>, &Tensor<'a, f64>) -> Result<Tensor<'a, f64>> + 'c;

fn assert_grad(name: &str, x0: &[f64], shape: &[usize], f: &FdFn<'_>) {
    let report = finite_difference_check(f, x0, shape, 1e-6, 1e-5, None).unwrap();
    assert!(
        report.pass,
        "{name}: max rel err {:e} across {} elements",
        report.max_rel_err, report.checked
    );
}

// ── point maps ──────────────────────────────────────────────────────────────

#[test]
fn spatial_map_lands_on_manifold_for_any_matrix() {
    let mut r = rng(1);
    for trial in 0..100 {
        let n = 2 + trial % 6;
        let m = 2 + (trial / 2) % 6;
        let x = random_point::<f64>(n, curv(), 1.0, &mut r);
        let w = random_matrix(m, n + 1, &mut r);
        let y = spatial_map_point(&w, x.coords(), curv());
        // The drift budget scales with y_t² — the cancellation −y_t² + ‖y_s‖²
        // conditions the check on the point's magnitude.
        assert!(
            drift(&y) < 1e-12 * (y[0] * y[0]).max(1.0),
            "trial {trial}: image drifted off the sheet by {}",
            drift(&y)
        );
        assert!(y[0] > 0.0, "image must stay on the upper sheet");
    }
}

#[test]
fn rescaled_matrix_sends_x_exactly_where_the_spatial_map_says() {
    let mut r = rng(2);
    for trial in 0..50 {
        let n = 2 + trial % 4;
        let x = random_point::<f64>(n, curv(), 1.0, &mut r);
        let m = random_matrix(n + 2, n + 1, &mut r);
        let rescaled = rescale_for_point(&m, x.coords(), curv()).unwrap();
        let via_matrix = rescaled.apply(x.coords());
        let w = Matrix::new(
            n + 1,
            n + 1,
            m.data()[n + 1..].to_vec(),
        );
        let direct = spatial_map_point(&w, x.coords(), curv());
        for (a, b) in via_matrix.iter().zip(&direct) {
            assert!(
                (a - b).abs() < 1e-12 * b.abs().max(1.0),
                "trial {trial}: rescaled matrix route {a} vs direct route {b}"
            );
        }
    }
}

#[test]
fn rescaling_rejects_first_rows_orthogonal_to_x() {
    let x = LorentzPoint::origin(2, curv());
    // First row (0, 1, 0) is orthogonal to the origin.
    let m = Matrix::new(3, 3, vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    assert!(rescale_for_point(&m, x.coords(), curv()).is_err());
}

#[test]
fn isometries_are_fixed_points_of_the_rescaling() {
    let mut r = rng(3);
    for trial in 0..60 {
        let n = 2 + trial % 4;
        let x = random_point::<f64>(n, curv(), 1.0, &mut r);
        let iso = if trial % 2 == 0 {
            let speed = 0.05 + 0.9 * (trial as f64 / 60.0);
            let mut v = vec![0.0; n];
            for (i, vi) in v.iter_mut().enumerate() {
                *vi = normal::<f64>(&mut r) * 0.3;
                if i == 0 {
                    *vi += speed * 0.5;
                }
            }
            let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm >= 0.97 {
                for vi in &mut v {
                    *vi *= 0.97 / norm;
                }
            }
            boost_matrix(&v).unwrap()
        } else {
            rotation_matrix(&random_rotation_block::<f64>(n, &mut r)).unwrap()
        };
        let rescaled = rescale_for_point(&iso, x.coords(), curv()).unwrap();
        let diff = rescaled.max_abs_diff(&iso);
        assert!(
            diff < 1e-9,
            "trial {trial}: isometry moved by {diff} under rescaling"
        );
    }
}

#[test]
fn tangent_rotation_agrees_with_the_exp_log_composite() {
    use crate::manifold::{exp_map, log_map, TangentVector};
    let mut r = rng(4);
    for trial in 0..60 {
        let n = 2 + trial % 4;
        let x = random_point::<f64>(n, curv(), 1.0, &mut r);
        let w = random_matrix(n, n, &mut r);
        let h = match tangent_rotation_matrix(&w, x.coords(), curv()) {
            Ok(h) => h,
            Err(_) => continue, // Wx_s degenerate for this draw
        };

        // Route 1: the closed-form matrix.
        let via_matrix = h.apply(x.coords());

        // Route 2: log to the origin's tangent space, rotate, exp back.
        let origin = LorentzPoint::origin(n, curv());
        let z = log_map(&origin, &x, curv());
        let rotated = w.apply(&z.components()[1..]);
        let mut comp = vec![0.0];
        comp.extend(rotated);
        let via_composite = exp_map(&TangentVector::at(origin, comp), curv()).unwrap();

        for (a, b) in via_matrix.iter().zip(via_composite.coords()) {
            let rel = (a - b).abs() / b.abs().max(1.0);
            assert!(rel < 1e-8, "trial {trial}: matrix {a} vs composite {b}");
        }

        // Route 3: the matrix is its own rescaling at x.
        let rescaled = rescale_for_point(&h, x.coords(), curv()).unwrap();
        assert!(
            rescaled.max_abs_diff(&h) < 1e-8,
            "trial {trial}: tangent rotation is not a fixed point"
        );
    }
}

#[test]
fn tangent_rotation_structure_excludes_boosts() {
    let mut r = rng(5);
    let x = random_point::<f64>(3, curv(), 1.0, &mut r);

    // Identity block ⇒ the whole matrix is the identity.
    let h = tangent_rotation_matrix(&Matrix::identity(3), x.coords(), curv()).unwrap();
    assert!(
        h.max_abs_diff(&Matrix::identity(4)) < 1e-12,
        "W = I must give H = I"
    );

    // Any valid instance has a zero first-row spatial block …
    let w = random_matrix(3, 3, &mut r);
    let h = tangent_rotation_matrix(&w, x.coords(), curv()).unwrap();
    for j in 1..4 {
        assert_eq!(h.get(0, j), 0.0, "time row must not mix spatial coords");
    }
    // … while a genuine boost does not, so no boost is of this family.
    let b = boost_matrix(&[0.4, 0.0, 0.0]).unwrap();
    assert!(b.get(0, 1) != 0.0);

    // Degenerate at the origin.
    let o = LorentzPoint::origin(3, curv());
    assert!(tangent_rotation_matrix(&w, o.coords(), curv()).is_err());
}

// ── centroid ────────────────────────────────────────────────────────────────

#[test]
fn centroid_reference_invariants() {
    let mut r = rng(6);
    let pts: Vec<LorentzPoint<f64>> =
        (0..5).map(|_| random_point(3, curv(), 1.0, &mut r)).collect();
    let views: Vec<&[f64]> = pts.iter().map(|p| p.coords()).collect();
    let weights = [0.1, 0.3, 0.25, 0.2, 0.15];

    let mu = centroid_point(&views, &weights, curv()).unwrap();
    assert!(drift(&mu) < 1e-12, "centroid drift {}", drift(&mu));

    // Scale invariance: multiplying every weight by 7 changes nothing.
    let scaled: Vec<f64> = weights.iter().map(|w| w * 7.0).collect();
    let mu2 = centroid_point(&views, &scaled, curv()).unwrap();
    for (a, b) in mu.iter().zip(&mu2) {
        assert!((a - b).abs() < 1e-12, "weight scale leaked into the centroid");
    }

    // A single point is its own centroid.
    let alone = centroid_point(&views[..1], &[1.0], curv()).unwrap();
    for (a, b) in alone.iter().zip(pts[0].coords()) {
        assert!((a - b).abs() < 1e-12);
    }

    // Cancelling weights make the sum spacelike ⇒ error, not NaN.
    assert!(centroid_point(&views[..2], &[1.0, -1.0], curv()).is_err());
    assert!(centroid_point(&[], &[], curv()).is_err());
}

#[test]
fn taped_centroid_matches_the_reference() {
    let mut r = rng(7);
    let pts: Vec<LorentzPoint<f64>> =
        (0..4).map(|_| random_point(4, curv(), 1.0, &mut r)).collect();
    let raw = [0.4_f64, -0.3, 1.2, 0.1];

    let scores = Tensor::constant(&[4], raw.to_vec());
    let weights = scores.softmax().unwrap();
    let taped: Vec<Tensor<f64>> = pts
        .iter()
        .map(|p| Tensor::constant(&[5], p.coords().to_vec()))
        .collect();
    let mu = centroid_t(&taped, &weights, curv()).unwrap();

    let views: Vec<&[f64]> = pts.iter().map(|p| p.coords()).collect();
    let reference = centroid_point(&views, weights.data(), curv()).unwrap();
    for (a, b) in mu.data().iter().zip(&reference) {
        assert!((a - b).abs() < 1e-12, "taped {a} vs reference {b}");
    }
    assert!(drift(mu.data()) < 1e-12);
}

#[test]
fn centroid_gradient_through_softmax_checks_out() {
    let mut r = rng(8);
    let pts: Vec<LorentzPoint<f64>> =
        (0..4).map(|_| random_point(3, curv(), 1.0, &mut r)).collect();
    let f: &FdFn = &|_tape, scores| {
        let taped: Vec<Tensor<f64>> = pts
            .iter()
            .map(|p| Tensor::constant(&[4], p.coords().to_vec()))
            .collect();
        let mu = centroid_t(&taped, &scores.softmax()?, curv())?;
        weighted_sum(&mu)
    };
    assert_grad("centroid∘softmax", &[0.2, -0.5, 0.9, 0.05], &[4], f);
}

// ── taped distance and lift ─────────────────────────────────────────────────

#[test]
fn taped_distance_and_inner_match_the_slice_route() {
    let mut r = rng(9);
    for _ in 0..50 {
        let x = random_point::<f64>(4, curv(), 1.0, &mut r);
        let y = random_point::<f64>(4, curv(), 1.0, &mut r);
        let xt = Tensor::constant(&[5], x.coords().to_vec());
        let yt = Tensor::constant(&[5], y.coords().to_vec());
        let inner_t = lorentz_inner_t(&xt, &yt).unwrap().item();
        let inner_ref = lorentz_inner(x.coords(), y.coords());
        assert!((inner_t - inner_ref).abs() < 1e-12 * inner_ref.abs().max(1.0));
        let d2_t = squared_distance_t(&xt, &yt, curv()).unwrap().item();
        let d2_ref = squared_distance(x.coords(), y.coords(), curv());
        assert!((d2_t - d2_ref).abs() < 1e-12 * d2_ref.max(1.0));
    }
}

#[test]
fn lift_spatial_is_on_manifold_and_differentiable() {
    let lifted_drift = |u: &[f64]| {
        let t = Tensor::constant(&[u.len()], u.to_vec());
        let y = lift_spatial_t(&t, curv()).unwrap();
        drift(y.data())
    };
    assert!(lifted_drift(&[0.3, -1.7, 2.2]) < 1e-15);
    assert!(lifted_drift(&[0.0, 0.0]) < 1e-15, "origin lift");

    let f: &FdFn = &|_tape, u| weighted_sum(&lift_spatial_t(u, curv())?);
    assert_grad("lift_spatial", &[0.4, -1.1, 0.8], &[3], f);
}

#[test]
fn taped_spatial_map_matches_reference_and_gradients() {
    let mut r = rng(10);
    let x = random_point::<f64>(3, curv(), 1.0, &mut r);
    let w = random_matrix(3, 4, &mut r);

    let wt = Tensor::constant(&[3, 4], w.data().to_vec());
    let xt = Tensor::constant(&[4], x.coords().to_vec());
    let y = spatial_map_t(&wt, &xt, curv()).unwrap();
    let reference = spatial_map_point(&w, x.coords(), curv());
    for (a, b) in y.data().iter().zip(&reference) {
        assert!((a - b).abs() < 1e-12);
    }

    let f: &FdFn = &|_tape, wt| {
        let xt = Tensor::constant(&[4], x.coords().to_vec());
        weighted_sum(&spatial_map_t(wt, &xt, curv())?)
    };
    assert_grad("spatial_map wrt W", w.data(), &[3, 4], f);
}

// ── gated linear layer ──────────────────────────────────────────────────────

fn unit_gate_layer() -> LorentzLinear<f64> {
    let mut layer = LorentzLinear::new(
        "test.lin",
        3,
        2,
        curv(),
        LinearCfg::default(),
        &mut rng(11),
    );
    layer.w.set_values(vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    layer.v.set_values(vec![0.0, 0.0, 0.0]);
    layer
}

#[test]
fn linear_layer_matches_hand_computed_output() {
    let layer = unit_gate_layer();
    let x = [(1.0_f64).cosh(), (1.0_f64).sinh(), 0.0];
    let tape = Tape::new();
    let ctx = StepCtx::eval(&tape);
    let y = layer
        .forward(&ctx, &Tensor::constant(&[3], x.to_vec()))
        .unwrap();

    // Gate input vᵀx + b = 0 ⇒ σ = 1/2; time = 2.5·0.5 + 1.1 = 2.35.
    // W picks the spatial coords, so the direction is (1, 0) and the norm
    // must be √(time² − 1).
    let time: f64 = 2.5 * 0.5 + 1.1;
    let want = [time, (time * time - 1.0).sqrt(), 0.0];
    for (a, b) in y.data().iter().zip(&want) {
        assert!((a - b).abs() < 1e-12, "layer {:?} vs oracle {:?}", y.data(), want);
    }
    assert!(drift(y.data()) < 1e-12);
}

#[test]
fn linear_layer_outputs_are_on_manifold_even_for_raw_vector_inputs() {
    let mut r = rng(12);
    for trial in 0..100 {
        let in_len = 3 + trial % 5;
        let out_dim = 2 + trial % 4;
        let cfg = LinearCfg {
            dropout: if trial % 3 == 0 { 0.2 } else { 0.0 },
            act: if trial % 2 == 0 { Activation::Relu } else { Activation::Identity },
            ..LinearCfg::default()
        };
        let layer = LorentzLinear::new("test.any", in_len, out_dim, curv(), cfg, &mut r);
        // Deliberately NOT a manifold point — arbitrary coordinates.
        let x: Vec<f64> = (0..in_len).map(|_| normal::<f64>(&mut r) * 2.0).collect();
        let tape = Tape::new();
        let ctx = StepCtx::train(&tape, trial as u64);
        let y = layer.forward(&ctx, &Tensor::constant(&[in_len], x)).unwrap();
        assert!(
            drift(y.data()) < 1e-9,
            "trial {trial}: drift {}",
            drift(y.data())
        );
        let spatial_norm: f64 = y.data()[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if spatial_norm > 1e-9 {
            assert!(y.data()[0] >= 1.1 - 1e-12, "time floor must hold");
        } else {
            // Activation + dropout zeroed the branch; the layer degrades to
            // the origin rather than leaving the manifold.
            assert!((y.data()[0] - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn linear_layer_gradients_for_every_parameter() {
    let mut r = rng(13);
    let cfg = LinearCfg {
        dropout: 0.25,
        act: Activation::Relu,
        ..LinearCfg::default()
    };
    let layer = LorentzLinear::new("test.fd", 4, 3, curv(), cfg, &mut r);
    let x: Vec<f64> = vec![1.7, -0.6, 0.9, 0.33];

    let run = |p: &Param<f64>| {
        let f: &FdFn = &|tape, leaf| {
            let ctx = StepCtx::train(tape, 77);
            ctx.bind_tensor(p, leaf.clone());
            let y = layer.forward(&ctx, &Tensor::constant(&[4], x.clone()))?;
            weighted_sum(&y)
        };
        assert_grad(p.name(), p.values(), p.shape(), f);
    };
    run(&layer.w);
    run(&layer.v);
    run(&layer.bias);
    run(&layer.gain);
}

// ── gated residual layer ────────────────────────────────────────────────────

#[test]
fn residual_spatial_norm_equals_the_gate_exactly() {
    let mut r = rng(14);
    let layer = LorentzResidual::new("test.res", 4, 3, curv(), LinearCfg::default(), &mut r);
    let o: Vec<f64> = vec![1.2, -0.4, 0.8, 0.1];
    let skip: Vec<f64> = vec![0.5, -0.2, 0.9];

    let tape = Tape::new();
    let ctx = StepCtx::eval(&tape);
    let y = layer
        .forward(
            &ctx,
            &Tensor::constant(&[4], o.clone()),
            &Tensor::constant(&[3], skip.clone()),
        )
        .unwrap();
    assert!(drift(y.data()) < 1e-12);

    let gate_in: f64 = layer.v.values().iter().zip(&o).map(|(a, b)| a * b).sum();
    let want_norm = layer.gain.values()[0] * (1.0 / (1.0 + (-gate_in).exp()));
    let got_norm: f64 = y.data()[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(
        (got_norm - want_norm).abs() < 1e-12,
        "spatial norm {got_norm} must equal gate value {want_norm}"
    );
}

#[test]
fn residual_gradients_for_every_parameter() {
    let mut r = rng(15);
    let layer = LorentzResidual::new("test.resfd", 4, 3, curv(), LinearCfg::default(), &mut r);
    let o: Vec<f64> = vec![0.9, -1.1, 0.4, 0.2];
    let skip: Vec<f64> = vec![-0.3, 0.7, 0.5];

    let run = |p: &Param<f64>| {
        let f: &FdFn = &|tape, leaf| {
            let ctx = StepCtx::train(tape, 5);
            ctx.bind_tensor(p, leaf.clone());
            let y = layer.forward(
                &ctx,
                &Tensor::constant(&[4], o.clone()),
                &Tensor::constant(&[3], skip.clone()),
            )?;
            weighted_sum(&y)
        };
        assert_grad(p.name(), p.values(), p.shape(), f);
    };
    run(&layer.w);
    run(&layer.v);
    run(&layer.gain);
}

// ── attention ───────────────────────────────────────────────────────────────

#[test]
fn attention_with_identical_keys_is_the_uniform_centroid() {
    let mut r = rng(16);
    let q = random_point::<f64>(3, curv(), 1.0, &mut r);
    let k = random_point::<f64>(3, curv(), 1.0, &mut r);
    let values: Vec<LorentzPoint<f64>> =
        (0..4).map(|_| random_point(3, curv(), 1.0, &mut r)).collect();

    let qs = vec![Tensor::constant(&[4], q.coords().to_vec())];
    let ks: Vec<Tensor<f64>> = (0..4)
        .map(|_| Tensor::constant(&[4], k.coords().to_vec()))
        .collect();
    let vs: Vec<Tensor<f64>> = values
        .iter()
        .map(|p| Tensor::constant(&[4], p.coords().to_vec()))
        .collect();
    let out = attention(&qs, &ks, &vs, curv()).unwrap();
    assert_eq!(out.len(), 1);

    let views: Vec<&[f64]> = values.iter().map(|p| p.coords()).collect();
    let uniform = centroid_point(&views, &[0.25; 4], curv()).unwrap();
    for (a, b) in out[0].data().iter().zip(&uniform) {
        assert!((a - b).abs() < 1e-12, "equidistant keys must weight uniformly");
    }
}

#[test]
fn attention_outputs_stay_on_manifold_and_reject_empty_inputs() {
    let mut r = rng(17);
    let qs: Vec<Tensor<f64>> = (0..3)
        .map(|_| Tensor::constant(&[5], random_point::<f64>(4, curv(), 1.0, &mut r).coords().to_vec()))
        .collect();
    let ks: Vec<Tensor<f64>> = (0..6)
        .map(|_| Tensor::constant(&[5], random_point::<f64>(4, curv(), 1.0, &mut r).coords().to_vec()))
        .collect();
    let vs: Vec<Tensor<f64>> = (0..6)
        .map(|_| Tensor::constant(&[5], random_point::<f64>(4, curv(), 1.0, &mut r).coords().to_vec()))
        .collect();
    let out = attention(&qs, &ks, &vs, curv()).unwrap();
    assert_eq!(out.len(), 3);
    for o in &out {
        assert!(drift(o.data()) < 1e-12);
    }
    assert!(attention(&qs, &ks[..5], &vs, curv()).is_err(), "k/v length mismatch");
    assert!(attention(&[], &ks, &vs, curv()).is_err(), "no queries");
}

#[test]
fn attention_gradient_with_respect_to_a_query() {
    let mut r = rng(18);
    let keys: Vec<LorentzPoint<f64>> =
        (0..3).map(|_| random_point(3, curv(), 1.0, &mut r)).collect();
    let vals: Vec<LorentzPoint<f64>> =
        (0..3).map(|_| random_point(3, curv(), 1.0, &mut r)).collect();
    let q0 = random_point::<f64>(3, curv(), 1.0, &mut r);

    let f: &FdFn = &|_tape, q| {
        let ks: Vec<Tensor<f64>> = keys
            .iter()
            .map(|p| Tensor::constant(&[4], p.coords().to_vec()))
            .collect();
        let vs: Vec<Tensor<f64>> = vals
            .iter()
            .map(|p| Tensor::constant(&[4], p.coords().to_vec()))
            .collect();
        let out = attention(std::slice::from_ref(q), &ks, &vs, curv())?;
        weighted_sum(&out[0])
    };
    assert_grad("attention wrt query", q0.coords(), &[4], f);
}

// ── multi-head attention ────────────────────────────────────────────────────

#[test]
fn multi_head_attention_shape_manifold_and_param_inventory() {
    let mut r = rng(19);
    let mha = MultiHeadAttention::new("test.mha", 4, 2, curv(), LinearCfg::default(), &mut r)
        .unwrap();
    // 2 heads × 3 projections × 4 params each, plus 3 in the output layer.
    assert_eq!(mha.params().len(), 2 * 3 * 4 + 3);

    let xs: Vec<Tensor<f64>> = (0..5)
        .map(|_| Tensor::constant(&[5], random_point::<f64>(4, curv(), 1.0, &mut r).coords().to_vec()))
        .collect();
    let tape = Tape::new();
    let ctx = StepCtx::eval(&tape);
    let out = mha.forward(&ctx, &xs).unwrap();
    assert_eq!(out.len(), 5, "sequence length must be preserved");
    for o in &out {
        assert_eq!(o.len(), 5);
        assert!(drift(o.data()) < 1e-9, "drift {}", drift(o.data()));
    }

    assert!(
        MultiHeadAttention::<f64>::new("bad", 5, 2, curv(), LinearCfg::default(), &mut r).is_err(),
        "5 spatial dims cannot split into 2 heads"
    );
}

#[test]
fn multi_head_attention_gradient_spot_check() {
    let mut r = rng(20);
    let mha = MultiHeadAttention::new("test.mhafd", 4, 2, curv(), LinearCfg::default(), &mut r)
        .unwrap();
    let seq: Vec<Vec<f64>> = (0..3)
        .map(|_| random_point::<f64>(4, curv(), 1.0, &mut r).coords().to_vec())
        .collect();

    let p = mha.params()[0]; // first head's query weight matrix
    let f: &FdFn = &|tape, leaf| {
        let ctx = StepCtx::train(tape, 1);
        ctx.bind_tensor(p, leaf.clone());
        let xs: Vec<Tensor<f64>> = seq
            .iter()
            .map(|c| Tensor::constant(&[5], c.clone()))
            .collect();
        let out = mha.forward(&ctx, &xs)?;
        let mut acc = weighted_sum(&out[0])?;
        for o in &out[1..] {
            acc = acc.add(&weighted_sum(o)?)?;
        }
        Ok(acc)
    };
    assert_grad(p.name(), p.values(), p.shape(), f);
}

// ── position encoding ──────────────────────────────────────────────────────

#[test]
fn position_encoding_separates_positions() {
    let mut r = rng(61);
    let layer = LorentzResidual::new("test.pos", 5, 4, curv(), LinearCfg::default(), &mut r);
    let word = random_point::<f64>(4, curv(), 1.0, &mut r);
    let p1 = random_point::<f64>(4, curv(), 1.0, &mut r);
    let p2 = random_point::<f64>(4, curv(), 1.0, &mut r);

    let tape = Tape::new();
    let ctx = StepCtx::eval(&tape);
    let x = Tensor::constant(&[5], word.coords().to_vec());
    let encode = |p: &LorentzPoint<f64>| {
        position_encode(&layer, &ctx, &x, &Tensor::constant(&[5], p.coords().to_vec()))
            .unwrap()
            .data()
            .to_vec()
    };
    let out1 = encode(&p1);
    let out2 = encode(&p2);
    let gap = out1
        .iter()
        .zip(out2.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max);
    assert!(
        gap > 1e-6,
        "distinct positions collapsed to the same encoding (gap {gap:.3e})"
    );
    assert_eq!(out1, encode(&p1), "re-encoding the same position must be bitwise stable");
}

#[test]
fn position_encoded_points_stay_on_manifold() {
    let mut r = rng(62);
    let layer = LorentzResidual::new("test.posman", 7, 6, curv(), LinearCfg::default(), &mut r);
    let tape = Tape::new();
    let ctx = StepCtx::eval(&tape);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let x = random_point::<f64>(6, curv(), 2.0, &mut r);
        let p = random_point::<f64>(6, curv(), 2.0, &mut r);
        let out = position_encode(
            &layer,
            &ctx,
            &Tensor::constant(&[7], x.coords().to_vec()),
            &Tensor::constant(&[7], p.coords().to_vec()),
        )
        .unwrap();
        worst = worst.max(drift(out.data()));
    }
    assert!(worst < 1e-9, "position-encoded point drifted off the manifold by {worst:.3e}");
}

#[test]
fn swapping_positions_permutes_encodings() {
    // One transform is shared across positions, so feeding the same word point
    // with the position order swapped must swap the outputs bitwise.
    let mut r = rng(63);
    let layer = LorentzResidual::new("test.posperm", 5, 4, curv(), LinearCfg::default(), &mut r);
    let word = random_point::<f64>(4, curv(), 1.0, &mut r);
    let posns: Vec<Vec<f64>> = (0..3)
        .map(|_| random_point::<f64>(4, curv(), 1.0, &mut r).coords().to_vec())
        .collect();

    let tape = Tape::new();
    let ctx = StepCtx::eval(&tape);
    let x = Tensor::constant(&[5], word.coords().to_vec());
    let encode = |order: &[usize]| -> Vec<Vec<f64>> {
        order
            .iter()
            .map(|&i| {
                position_encode(&layer, &ctx, &x, &Tensor::constant(&[5], posns[i].clone()))
                    .unwrap()
                    .data()
                    .to_vec()
            })
            .collect()
    };
    let straight = encode(&[0, 1, 2]);
    let swapped = encode(&[1, 0, 2]);
    assert_eq!(swapped[0], straight[1], "slot 0 must carry position 1's encoding after the swap");
    assert_eq!(swapped[1], straight[0], "slot 1 must carry position 0's encoding after the swap");
    assert_eq!(swapped[2], straight[2], "untouched slot must be unchanged");
}
