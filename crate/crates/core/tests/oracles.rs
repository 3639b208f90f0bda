use std::f64::consts::PI;

use motionflow::annotation::{densify, sparse_flow, AnnotationSet, ControlPoint, DragTrajectory, SparseFlowSequence};
use motionflow::codec::{decode, encode};
use motionflow::flow::{FlowField, FlowSequence};
use motionflow::linalg::{Mat3, Vec3};
use motionflow::metrics::{translation_error, PoseTrajectory};
use motionflow::spectral::{spectral_reweight, temporal_fft, token_flicker, SpectralFilter, TokenSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn single_control(w: usize, h: usize, x: usize, y: usize, flow: [f64; 2]) -> SparseFlowSequence<f64> {
    SparseFlowSequence { width: w, height: h, frames: vec![vec![ControlPoint { x, y, flow }]] }
}

#[test]
fn densify_single_point_exact_and_decaying() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..100 {
        let (w, h) = (rng.gen_range(8..40), rng.gen_range(8..40));
        let (cx, cy) = (rng.gen_range(0..w), rng.gen_range(0..h));
        let flow = [rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)];
        let sigma = rng.gen_range(0.5..10.0);
        let dense = densify(&single_control(w, h, cx, cy, flow), w, h, sigma).unwrap();
        let f = &dense.frames()[0];
        assert_eq!(f.get(cx, cy), flow, "case {case}");

        // Kernel evaluated directly from its definition.
        let anchor = (-(4.0 * sigma).powi(2) / (2.0 * sigma * sigma)).exp();
        let mut by_dist: Vec<(f64, f64)> = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let d2 = (x as f64 - cx as f64).powi(2) + (y as f64 - cy as f64).powi(2);
                let g = f.get(x, y);
                let mag = g[0].hypot(g[1]);
                if d2 > 0.0 {
                    let k = (-d2 / (2.0 * sigma * sigma)).exp();
                    let want = k / (k + anchor) * flow[0].hypot(flow[1]);
                    assert!((mag - want).abs() <= 1e-9 * (1.0 + want), "case {case} at ({x},{y})");
                }
                by_dist.push((d2, mag));
            }
        }
        by_dist.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in by_dist.windows(2) {
            assert!(pair[1].1 <= pair[0].1 + 1e-12, "case {case}: magnitude grows with distance");
        }
    }
}

#[test]
fn densify_reproduces_every_control_of_an_annotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (w, h, l) = (48, 32, rng.gen_range(2..8));
        let trajectories = (0..rng.gen_range(1..6))
            .map(|_| {
                let pts = (0..rng.gen_range(2..6))
                    .map(|_| [rng.gen_range(0.0..w as f64 - 1.0), rng.gen_range(0.0..h as f64 - 1.0)])
                    .collect();
                DragTrajectory::new(pts).unwrap()
            })
            .collect();
        let ann = AnnotationSet::new(w, h, l, trajectories).unwrap();
        let sparse = sparse_flow(&ann).unwrap();
        let dense = densify(&sparse, w, h, 3.0).unwrap();
        assert_eq!(dense.len(), l - 1);
        for (frame, points) in dense.frames().iter().zip(&sparse.frames) {
            for cp in points {
                assert_eq!(frame.get(cp.x, cp.y), cp.flow);
            }
        }
    }
}

/// Pool then interpolate centres along one axis, then add the per-block
/// residual; written out for a 1-D ramp.
fn ramp_decode_oracle(n: usize, block: usize) -> Vec<f64> {
    let blocks = n.div_ceil(block);
    let range = |b: usize| b * block..((b + 1) * block).min(n);
    let means: Vec<f64> = (0..blocks).map(|b| range(b).map(|x| x as f64).sum::<f64>() / range(b).len() as f64).collect();
    let centres: Vec<f64> = (0..blocks).map(|b| (range(b).start + range(b).end - 1) as f64 / 2.0).collect();
    let interp: Vec<f64> = (0..n)
        .map(|p| {
            let p = p as f64;
            if p <= centres[0] {
                return means[0];
            }
            if p >= centres[blocks - 1] {
                return means[blocks - 1];
            }
            let b = centres.iter().rposition(|&c| c <= p).unwrap();
            let f = (p - centres[b]) / (centres[b + 1] - centres[b]);
            means[b] + f * (means[b + 1] - means[b])
        })
        .collect();
    let mut out = interp.clone();
    for b in 0..blocks {
        let pooled = range(b).map(|x| interp[x]).sum::<f64>() / range(b).len() as f64;
        for x in range(b) {
            out[x] += means[b] - pooled;
        }
    }
    out
}

#[test]
fn ramp_round_trip_matches_closed_form() {
    let n = 64;
    let frame = FlowField::from_fn(n, n, |x, _| [x as f64, 0.0]).unwrap();
    let seq = FlowSequence::from_frames(vec![frame; 4]).unwrap();
    let out = decode(&encode(&seq).unwrap()).unwrap();
    let oracle = ramp_decode_oracle(n, 8);
    for f in out.frames() {
        for y in 0..n {
            for x in 0..n {
                let g = f.get(x, y);
                assert!((g[0] - oracle[x]).abs() < 1e-9 && g[1].abs() < 1e-12);
                if (8..n - 8).contains(&x) {
                    assert!((g[0] - x as f64).abs() <= 0.5, "interior error at x={x}");
                }
            }
        }
    }
    // Edge blocks carry the clamp error; interior is reproduced exactly.
    assert!((oracle[0] - 2.5).abs() < 1e-12);
    assert!((8..56).all(|x| (oracle[x] - x as f64).abs() < 1e-12));
}

fn centred_path(centres: &[[f64; 3]]) -> PoseTrajectory<f64> {
    // Camera centre C = −Rᵀt with R = I, so t = −C.
    PoseTrajectory::new(centres.iter().map(|c| (Mat3::identity(), Vec3::new(-c[0], -c[1], -c[2]))).collect()).unwrap()
}

#[test]
fn translation_error_nine_frame_offset() {
    let gt: Vec<[f64; 3]> = (0..9).map(|i| [i as f64 / 8.0, 0.0, 0.0]).collect();
    let mut pred = gt.clone();
    pred[5][1] = 0.1;
    let got = translation_error(&centred_path(&pred), &centred_path(&gt)).unwrap();

    let seg = |a: [f64; 3], b: [f64; 3]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    let len: f64 = pred.windows(2).map(|p| seg(p[0], p[1])).sum();
    let want = (0..9).map(|i| seg(pred[i].map(|v| v / len), gt[i])).sum::<f64>() / 9.0;
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    // The offset also lengthens the path, which shrinks every other frame.
    assert!((want - 0.1 / 9.0).abs() > 1e-3);
}

#[test]
fn lowpass_removes_nyquist_flicker() {
    let t_len = 32;
    let smooth = |t: usize| (2.0 * PI * t as f64 / t_len as f64).sin();
    let seq = TokenSequence::from_fn(t_len, 1, 1, |t, _, _| smooth(t) + 0.5 * if t % 2 == 0 { 1.0 } else { -1.0 });
    let clean = TokenSequence::from_fn(t_len, 1, 1, |t, _, _| smooth(t));
    let w = SpectralFilter::parse("lowpass:2").unwrap().weights(t_len).unwrap();
    let out = spectral_reweight(&seq, &w).unwrap();

    let before = token_flicker(&seq).unwrap();
    let after = token_flicker(&out).unwrap();
    assert!(after * 10.0 <= before, "flicker {before} -> {after}");

    // Smooth component: project the output onto the clean sinusoid.
    let e_clean = clean.energy();
    let kept: f64 = out.data.iter().zip(&clean.data).map(|(a, b)| a * b).sum::<f64>().powi(2) / e_clean;
    assert!((kept - e_clean).abs() < 0.01 * e_clean, "{kept} vs {e_clean}");
}

#[test]
fn nyquist_bin_matches_direct_dft() {
    let t_len = 10;
    let seq = TokenSequence::from_fn(t_len, 2, 1, |t, n, _| if t % 2 == 0 { 1.0 + n as f64 } else { -1.0 - n as f64 });
    let spec = temporal_fft(&seq);
    for n in 0..2 {
        for k in 0..spec.bins {
            let (re, im) = (0..t_len).fold((0.0, 0.0), |(re, im), t| {
                let a = -2.0 * PI * (k * t) as f64 / t_len as f64;
                (re + seq.at(t, n, 0) * a.cos(), im + seq.at(t, n, 0) * a.sin())
            });
            let c = spec.at(k, n, 0);
            assert!((c.re - re).abs() < 1e-9 && (c.im - im).abs() < 1e-9);
            if k != t_len / 2 {
                assert!(c.norm() < 1e-9);
            }
        }
    }
}
