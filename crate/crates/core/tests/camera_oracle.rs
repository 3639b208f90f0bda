use motionflow::camera::{camera_flow, plucker_embed, CameraFrame, CameraIntrinsics, CameraTrajectory, PluckerConvention};
use motionflow::depth::{depth_proxy, DepthMap, DepthProxy};
use motionflow::linalg::{Mat3, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type M4 = [[f64; 4]; 4];

fn quat_to_rot(q: [f64; 4]) -> [[f64; 3]; 3] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn extrinsic(r: &[[f64; 3]; 3], t: [f64; 3]) -> M4 {
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&r[i]);
        m[i][3] = t[i];
    }
    m[3][3] = 1.0;
    m
}

/// Gauss-Jordan with partial pivoting.
fn invert4(m: &M4) -> M4 {
    let mut a = *m;
    let mut inv = [[0.0; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col];
        for c in 0..4 {
            a[col][c] /= d;
            inv[col][c] /= d;
        }
        for r in 0..4 {
            if r != col {
                let f = a[r][col];
                for c in 0..4 {
                    a[r][c] -= f * a[col][c];
                    inv[r][c] -= f * inv[col][c];
                }
            }
        }
    }
    inv
}

fn apply(m: &M4, p: [f64; 4]) -> [f64; 4] {
    std::array::from_fn(|i| (0..4).map(|k| m[i][k] * p[k]).sum())
}

struct Pose {
    r: [[f64; 3]; 3],
    t: [f64; 3],
    k: [f64; 4],
}

/// Two-view reprojection through homogeneous matrices.
fn brute_force_flow(poses: &[Pose], depth: &[f64], w: usize, h: usize) -> Vec<Vec<Option<[f64; 2]>>> {
    let [fx0, fy0, cx0, cy0] = poses[0].k;
    let cam0_to_world = invert4(&extrinsic(&poses[0].r, poses[0].t));
    poses[1..]
        .iter()
        .map(|pose| {
            let e = extrinsic(&pose.r, pose.t);
            let [fx, fy, cx, cy] = pose.k;
            (0..w * h)
                .map(|i| {
                    let (x, y) = ((i % w) as f64, (i / w) as f64);
                    let z = depth[i];
                    let ray = [(x - cx0) / fx0 * z, (y - cy0) / fy0 * z, z, 1.0];
                    let pw = apply(&cam0_to_world, ray);
                    let pc = apply(&e, pw);
                    if pc[2] <= 0.0 {
                        return None;
                    }
                    Some([fx * pc[0] / pc[2] + cx - x, fy * pc[1] / pc[2] + cy - y])
                })
                .collect()
        })
        .collect()
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let a: f64 = rng.gen_range(0.0..0.15);
    let axis: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let n = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (s, c) = (a * 0.5).sin_cos();
    let q = [c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n];
    let f = rng.gen_range(12.0..30.0);
    Pose {
        r: quat_to_rot(q),
        t: std::array::from_fn(|_| rng.gen_range(-0.4..0.4)),
        k: [f, f * rng.gen_range(0.9..1.1), rng.gen_range(6.0..10.0), rng.gen_range(6.0..10.0)],
    }
}

fn to_trajectory(poses: &[Pose]) -> CameraTrajectory<f64> {
    CameraTrajectory::new(
        poses
            .iter()
            .map(|p| {
                let k = CameraIntrinsics::new(p.k[0], p.k[1], p.k[2], p.k[3]).unwrap();
                CameraFrame::new(Mat3::from_rows(p.r), Vec3::from_array(p.t), k).unwrap()
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn camera_flow_matches_brute_force_reprojection() {
    let (w, h) = (16, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for scene in 0..50 {
        let poses: Vec<Pose> = (0..4).map(|_| random_pose(&mut rng)).collect();
        let depth: DepthMap<f64> = if scene % 2 == 0 {
            depth_proxy(DepthProxy::Constant(rng.gen_range(2.0..20.0)), w, h).unwrap()
        } else {
            depth_proxy(DepthProxy::FrontoRamp { near: rng.gen_range(2.0..5.0), far: rng.gen_range(6.0..25.0) }, w, h).unwrap()
        };
        let got = camera_flow(&to_trajectory(&poses), &depth, w, h).unwrap();
        let want = brute_force_flow(&poses, depth.data(), w, h);
        for (frame, expect) in got.frames().iter().zip(&want) {
            for (i, e) in expect.iter().enumerate() {
                match e {
                    Some(f) => {
                        assert!(frame.is_valid_index(i), "scene {scene} pixel {i} should be valid");
                        let g = frame.data()[i];
                        worst = worst.max((g[0] - f[0]).abs()).max((g[1] - f[1]).abs());
                    }
                    None => assert!(!frame.is_valid_index(i)),
                }
            }
        }
    }
    assert!(worst < 1e-9, "max deviation {worst:e}");
}

#[test]
fn behind_camera_points_agree_with_oracle() {
    // Frame 1 looks backwards: everything lands behind it.
    let poses = [
        Pose { r: quat_to_rot([1.0, 0.0, 0.0, 0.0]), t: [0.0; 3], k: [10.0, 10.0, 4.0, 4.0] },
        Pose { r: quat_to_rot([0.0, 0.0, 1.0, 0.0]), t: [0.0; 3], k: [10.0, 10.0, 4.0, 4.0] },
    ];
    let depth = depth_proxy(DepthProxy::Constant(3.0), 8, 8).unwrap();
    let got = camera_flow(&to_trajectory(&poses), &depth, 8, 8).unwrap();
    let want = brute_force_flow(&poses, depth.data(), 8, 8);
    assert!(want[0].iter().all(Option::is_none));
    let f = &got.frames()[0];
    assert!((0..64).all(|i| !f.is_valid_index(i) && f.data()[i] == [0.0, 0.0]));
}

fn random_trajectory(rng: &mut ChaCha8Rng, frames: usize) -> CameraTrajectory<f64> {
    let poses: Vec<Pose> = (0..frames)
        .map(|_| {
            let mut p = random_pose(rng);
            p.t = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
            p
        })
        .collect();
    to_trajectory(&poses)
}

#[test]
fn plucker_rays_are_unit_and_moments_orthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let traj = random_trajectory(&mut rng, 8);
        for convention in [PluckerConvention::Literal, PluckerConvention::Conventional] {
            let vol = plucker_embed(&traj, 32, 32, convention).unwrap();
            for f in 0..8 {
                for y in 0..32 {
                    for x in 0..32 {
                        let e = vol.get(f, y, x);
                        let d = [e[3], e[4], e[5]];
                        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let dot = e[0] * e[3] + e[1] * e[4] + e[2] * e[5];
                        assert!((norm - 1.0).abs() < 1e-6);
                        assert!(dot.abs() < 1e-6);
                    }
                }
            }
        }
    }
}

fn unit_k_frame(t: [f64; 3]) -> CameraTrajectory<f64> {
    let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
    CameraTrajectory::new(vec![CameraFrame::new(Mat3::identity(), Vec3::from_array(t), k).unwrap()]).unwrap()
}

#[test]
#[allow(clippy::approx_constant)]
fn plucker_worked_examples() {
    let vol = plucker_embed(&unit_k_frame([0.0; 3]), 1, 1, PluckerConvention::Literal).unwrap();
    assert_eq!(vol.get(0, 0, 0), [0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);

    let vol = plucker_embed(&unit_k_frame([1.0, 0.0, 0.0]), 1, 1, PluckerConvention::Literal).unwrap();
    // d = (1, 0, 1): normalize, then t × d̂ by the determinant rule.
    let s = 1.0 / 2f64.sqrt();
    let d = [s, 0.0, s];
    let t = [1.0, 0.0, 0.0];
    let m = [t[1] * d[2] - t[2] * d[1], t[2] * d[0] - t[0] * d[2], t[0] * d[1] - t[1] * d[0]];
    let want = [m[0], m[1], m[2], d[0], d[1], d[2]];
    for (g, w) in vol.get(0, 0, 0).iter().zip(want) {
        assert!((g - w).abs() < 1e-9);
    }
    assert!((want[1] + 0.70711).abs() < 1e-5);
}

#[test]
fn plucker_singular_ray_reported() {
    // d = K[0,0,1] + t = (0,0,1) + (0,0,-1) = 0 at pixel (0, 0).
    let err = plucker_embed(&unit_k_frame([0.0, 0.0, -1.0]), 2, 2, PluckerConvention::Literal).unwrap_err();
    assert!(matches!(err, motionflow::Error::Singularity { frame: 0, x: 0, y: 0 }));
}
