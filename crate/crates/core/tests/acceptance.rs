//! Acceptance checks. Each test prints one `[PASS]`/`[FAIL]` line with the
//! measured values before asserting.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{Matrix3, Point3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lidar_enrich::completion::{
    build_model, complete_depth, desk_camera, desk_split, evaluate_depth, nearest_fill_baseline, simulate_samples, train,
    CompletionModel, DepthEvalReport, TrainConfig, TrainSample, Variant,
};
use lidar_enrich::micrograd::{
    ConvLayer, Graph, ParamId, ParamSet, Reduction, SgdConfig, SparseConvLayer, Tensor, DEFAULT_EPSILON, DEFAULT_LAMBDA,
};
use lidar_enrich::pointcloud_io::{
    downsample_channels, render_camera, synth_scene, DownsampleMode, RingBinning, Scene,
};
use lidar_enrich::registration::{
    build_ndt, euler_from_rotation, icp_register, ndt_register, ndt_score, pose_apply, IcpConfig, NdtConfig,
};
use lidar_enrich::slam::{evaluate_trajectory, run_odometry, Enrichment, OdometryConfig};
use lidar_enrich::sparsity::compress_depth;
use lidar_enrich::{DepthImage, PointCloud, Pose6, ScanSequence};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!("[{}] criterion {id} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn rand_mask(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<f64> {
    (0..n).map(|_| if rng.random_bool(p) { 1.0 } else { 0.0 }).collect()
}

fn set(params: &mut ParamSet, id: ParamId, v: &[f64]) {
    params.get_mut(id).data_mut().copy_from_slice(v);
}

// ---------------------------------------------------------------- 1

/// input → sparse conv → relu, concatenated with a dense conv of the same
/// input → dense conv → L2+L1 loss. The input is a parameter too.
struct Net {
    params: ParamSet,
    input: ParamId,
    sparse: SparseConvLayer,
    dense: ConvLayer,
    head: ConvLayer,
    mask: Tensor,
    gt: Tensor,
    gt_mask: Tensor,
    reduction: Reduction,
}

impl Net {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.random_range(1..=2);
        let c = rng.random_range(1..=3);
        let h = rng.random_range(3..=7);
        let w = rng.random_range(3..=7);
        let ks = [1, 3, 5][rng.random_range(0..3)];
        let kd = [1, 3][rng.random_range(0..2)];
        let mid = rng.random_range(1..=3);
        let mut params = ParamSet::new();
        let input = params.add("x", Tensor::from_vec(&[n, c, h, w], rand_vec(rng, n * c * h * w)).unwrap());
        let sparse = SparseConvLayer::new(&mut params, "s", c, mid, ks, DEFAULT_EPSILON).unwrap();
        let dense = ConvLayer::new(&mut params, "d", c, 2, kd).unwrap();
        let head = ConvLayer::new(&mut params, "h", mid + 2, 1, 3).unwrap();
        for l in [sparse.conv, dense, head] {
            let kv = rand_vec(rng, params.get(l.kernel).len());
            let bv = rand_vec(rng, params.get(l.bias).len());
            set(&mut params, l.kernel, &kv);
            set(&mut params, l.bias, &bv);
        }
        let mut mask = rand_mask(rng, n * h * w, 0.5);
        mask[0] = 1.0;
        let mut gm = rand_mask(rng, n * h * w, 0.7);
        gm[0] = 1.0;
        let gt = rand_vec(rng, n * h * w).iter().map(|v| v * 5.0).collect();
        Self {
            params,
            input,
            sparse,
            dense,
            head,
            mask: Tensor::from_vec(&[n, 1, h, w], mask).unwrap(),
            gt: Tensor::from_vec(&[n, 1, h, w], gt).unwrap(),
            gt_mask: Tensor::from_vec(&[n, 1, h, w], gm).unwrap(),
            reduction: if rng.random_bool(0.5) { Reduction::Sum } else { Reduction::Mean },
        }
    }

    fn forward(&self, params: &ParamSet) -> (Graph, lidar_enrich::micrograd::Var, f64) {
        let mut g = Graph::new();
        let x = g.param(params, self.input);
        let (pre, _) = g.sparse_conv2d(x, &self.mask, &self.sparse, params).unwrap();
        let kink_pre = g.value(pre).data().iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        let s = g.relu(pre);
        let d = g.conv2d(x, &self.dense, params).unwrap();
        let cat = g.concat(&[s, d]).unwrap();
        let out = g.conv2d(cat, &self.head, params).unwrap();
        let kink_res = g
            .value(out)
            .data()
            .iter()
            .zip(self.gt.data())
            .zip(self.gt_mask.data())
            .filter(|(_, &m)| m != 0.0)
            .map(|((p, t), _)| (p - t).abs())
            .fold(f64::INFINITY, f64::min);
        let l = g.loss_l2_l1(out, &self.gt, &self.gt_mask, DEFAULT_LAMBDA, self.reduction).unwrap();
        (g, l, kink_pre.min(kink_res))
    }

    fn loss(&self) -> f64 {
        let (g, l, _) = self.forward(&self.params);
        g.value(l).item()
    }
}

#[test]
fn c1_gradients_match_central_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        // keep every ReLU input and loss residual away from its kink
        let mut net = loop {
            let net = Net::random(&mut rng);
            if net.forward(&net.params).2 > 1e-3 {
                break net;
            }
        };
        let (g, l, _) = net.forward(&net.params);
        let mut grads = net.params.clone();
        g.backward(l, &mut grads).unwrap();
        for id in net.params.ids().collect::<Vec<_>>() {
            for i in 0..net.params.get(id).len() {
                let orig = net.params.get(id).data()[i];
                net.params.get_mut(id).data_mut()[i] = orig + h;
                let up = net.loss();
                net.params.get_mut(id).data_mut()[i] = orig - h;
                let down = net.loss();
                net.params.get_mut(id).data_mut()[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.get(id).grad().unwrap()[i];
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((analytic - numeric).abs() / denom);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-4 && secs < 60.0;
    report(1, "gradient check", pass, &format!("max relative error {worst:.2e} over 50 nets (< 1e-4), {secs:.1} s (< 60 s)"));
    assert!(pass);
}

// ---------------------------------------------------------------- 2

#[test]
fn c2_sparse_conv_matches_nested_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (c, h, w) = (2, 8, 8);
    let mut worst: f64 = 0.0;
    for trial in 0..30 {
        let o = 1 + trial % 3;
        let k = [1, 3, 5, 7][trial % 4];
        let kv = rand_vec(&mut rng, o * c * k * k);
        let bv = rand_vec(&mut rng, o);
        let xv = rand_vec(&mut rng, c * h * w);
        let density = rng.random_range(0.05..0.95);
        let mv = rand_mask(&mut rng, h * w, density);
        let mut p = ParamSet::new();
        let l = SparseConvLayer::new(&mut p, "s", c, o, k, DEFAULT_EPSILON).unwrap();
        set(&mut p, l.conv.kernel, &kv);
        set(&mut p, l.conv.bias, &bv);
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(&[1, c, h, w], xv.clone()).unwrap());
        let (y, _) = g.sparse_conv2d(x, &Tensor::from_vec(&[1, 1, h, w], mv.clone()).unwrap(), &l, &p).unwrap();
        let pad = (k / 2) as isize;
        for oc in 0..o {
            for r in 0..h {
                for col in 0..w {
                    let (mut num, mut cnt) = (0.0, 0.0);
                    for dy in -pad..=pad {
                        for dx in -pad..=pad {
                            let (sy, sx) = (r as isize + dy, col as isize + dx);
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            let (sy, sx) = (sy as usize, sx as usize);
                            let m = mv[sy * w + sx];
                            cnt += m;
                            for ic in 0..c {
                                let ky = (dy + pad) as usize;
                                let kx = (dx + pad) as usize;
                                num += m * xv[(ic * h + sy) * w + sx] * kv[((oc * c + ic) * k + ky) * k + kx];
                            }
                        }
                    }
                    let want = num / (cnt + DEFAULT_EPSILON) + bv[oc];
                    let got = g.value(y).data()[(oc * h + r) * w + col];
                    worst = worst.max((got - want).abs());
                }
            }
        }
    }
    let pass = worst < 1e-12;
    report(2, "sparse conv oracle", pass, &format!("max abs difference {worst:.2e} on 30 random 2x8x8 inputs (< 1e-12)"));
    assert!(pass);
}

// ---------------------------------------------------------------- 3

fn registration_scene() -> PointCloud {
    let mut scene = Scene::courtyard();
    scene.lidar.azimuth_jitter_deg = 0.25;
    let seq = synth_scene(&scene, &[Pose6::new(-1.0, 0.37, 1.73, 0.0, 0.0, 0.0)], 16).unwrap();
    seq.frames.into_iter().next().unwrap()
}

/// Translation uniform in the 0.5 m ball, rotation about a uniform axis by
/// up to 5 degrees.
fn perturbation(rng: &mut ChaCha8Rng) -> Pose6 {
    let unit = |rng: &mut ChaCha8Rng| loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() > 1e-3 && v.norm() <= 1.0 {
            break v.normalize();
        }
    };
    let t = unit(rng) * 0.5 * rng.random::<f64>().cbrt();
    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(unit(rng)), rng.random_range(0.0..5f64.to_radians()));
    let (a, b, c) = euler_from_rotation(rot.matrix());
    Pose6::new(t.x, t.y, t.z, a, b, c)
}

fn pose_error(est: &Pose6, truth: &Pose6) -> (f64, f64) {
    let d = truth.inverse().compose(est);
    ((est.translation() - truth.translation()).norm(), d.rotation_angle())
}

#[test]
fn c3_ndt_and_icp_recover_known_perturbations() {
    let start = Instant::now();
    let reference = registration_scene();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut ndt_ok, mut icp_ok) = (0, 0);
    let (mut ndt_worst, mut icp_worst): (f64, f64) = (0.0, 0.0);
    let trials = 100;
    for _ in 0..trials {
        let truth = perturbation(&mut rng);
        // the input seen from the perturbed pose; registration must return `truth`
        let input = pose_apply(&truth.inverse(), &reference);
        let r = ndt_register(&input, &reference, &Pose6::identity(), &NdtConfig::default()).unwrap();
        let (et, er) = pose_error(&r.pose, &truth);
        if r.converged && et < 0.01 && er < 0.1f64.to_radians() {
            ndt_ok += 1;
        }
        ndt_worst = ndt_worst.max(et);
        let r = icp_register(&input, &reference, &Pose6::identity(), &IcpConfig::default()).unwrap();
        let (et, _) = pose_error(&r.pose, &truth);
        if et < 1e-4 {
            icp_ok += 1;
        }
        icp_worst = icp_worst.max(et);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = ndt_ok * 100 >= 95 * trials && icp_ok * 100 >= 95 * trials && secs < 120.0;
    report(
        3,
        "registration recovery",
        pass,
        &format!(
            "NDT {ndt_ok}/{trials} within 0.01 m / 0.1 deg (>= 95%), ICP {icp_ok}/{trials} within 1e-4 m (>= 95%), \
             worst translation NDT {ndt_worst:.2e} m ICP {icp_worst:.2e} m, {secs:.1} s (< 120 s)"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 4

#[test]
fn c4_ndt_grid_and_score_match_direct_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let (mut worst_mean, mut worst_cov, mut worst_score): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut cells_checked = 0;
    for _ in 0..20 {
        let cell = rng.random_range(0.5..2.0);
        // anisotropic blobs, most of them well inside one cell
        let mut pts = Vec::new();
        for _ in 0..rng.random_range(5..15) {
            let centre = Vector3::new(
                (rng.random_range(-4..4) as f64 + 0.5) * cell,
                (rng.random_range(-4..4) as f64 + 0.5) * cell,
                (rng.random_range(-1..1) as f64 + 0.5) * cell,
            );
            let spread = Vector3::new(rng.random_range(0.05..0.2), rng.random_range(0.05..0.2), rng.random_range(0.05..0.2)) * cell;
            for _ in 0..rng.random_range(3..40) {
                let d = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                pts.push(Point3::from(centre + d.component_mul(&spread)));
            }
        }
        let cloud = PointCloud::new(pts);
        let min_points = 5;
        let grid = build_ndt(&cloud, cell, min_points).unwrap();

        let key = |p: &Point3<f64>| [(p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64];
        let mut groups: BTreeMap<[i64; 3], Vec<Point3<f64>>> = BTreeMap::new();
        for p in &cloud.points {
            groups.entry(key(p)).or_default().push(*p);
        }
        let floor = 1e-3 * cell * cell;
        let mut oracle: BTreeMap<[i64; 3], (Vector3<f64>, Matrix3<f64>)> = BTreeMap::new();
        for (k, members) in &groups {
            if members.len() < min_points {
                assert!(!grid.cells.contains_key(k));
                continue;
            }
            let n = members.len() as f64;
            let mut mean = Vector3::zeros();
            for p in members {
                mean += p.coords;
            }
            mean /= n;
            let mut cov = Matrix3::zeros();
            for a in 0..3 {
                for b in 0..3 {
                    cov[(a, b)] = members.iter().map(|p| (p[a] - mean[a]) * (p[b] - mean[b])).sum::<f64>() / n;
                }
            }
            let min_eig = cov.symmetric_eigenvalues().min();
            let c = grid.cells.get(k).expect("cell present");
            worst_mean = worst_mean.max((c.mean - mean).abs().max());
            if min_eig > floor {
                worst_cov = worst_cov.max((c.covariance - cov).abs().max());
                cells_checked += 1;
                oracle.insert(*k, (mean, cov.try_inverse().unwrap()));
            }
        }
        assert_eq!(grid.len(), groups.values().filter(|m| m.len() >= min_points).count());

        // score only where every cell hit has an unfloored covariance
        let scan_grid = lidar_enrich::registration::NdtGrid {
            cells: grid.cells.iter().filter(|(k, _)| oracle.contains_key(*k)).map(|(k, v)| (*k, v.clone())).collect(),
            ..grid.clone()
        };
        for _ in 0..5 {
            let pose = Pose6::new(
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.2..0.2),
            );
            let scan = PointCloud::new(cloud.points.iter().step_by(2).copied().collect());
            let r = pose.rotation();
            let t = pose.translation();
            let mut want = 0.0;
            for p in &scan.points {
                let x = Point3::from(r * p.coords + t);
                if let Some((mean, inv)) = oracle.get(&key(&x)) {
                    let d = x.coords - mean;
                    want += (-0.5 * (d.transpose() * inv * d)[0]).exp();
                }
            }
            worst_score = worst_score.max((ndt_score(&pose, &scan, &scan_grid) - want).abs());
        }
    }
    let pass = worst_mean < 1e-10 && worst_cov < 1e-10 && worst_score < 1e-10 && cells_checked > 100;
    report(
        4,
        "NDT oracles",
        pass,
        &format!(
            "max |mean - oracle| {worst_mean:.1e}, |cov - oracle| {worst_cov:.1e} over {cells_checked} cells, \
             |score - oracle| {worst_score:.1e} (all < 1e-10)"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 5

const RATES: [f64; 7] = [1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0, 1.0];

fn monotone(img: &DepthImage) -> (bool, Vec<f64>) {
    let errs: Vec<f64> = RATES.iter().map(|&r| compress_depth(img, r).unwrap().1.rmse_m).collect();
    (errs.windows(2).all(|w| w[1] <= w[0] + 1e-12), errs)
}

#[test]
fn c5_dct_error_falls_with_rate() {
    // a slanted near plane against a flat far plane, 5 m apart
    let (w, h, step) = (64, 64, 5.0);
    let depths = (0..w * h)
        .map(|i| {
            let (r, c) = (i / w, i % w);
            if c < w / 2 {
                4.0 + 0.02 * r as f64
            } else {
                4.0 + step
            }
        })
        .collect();
    let planes = DepthImage::from_depths(w, h, depths).unwrap();
    let (planes_mono, planes_errs) = monotone(&planes);
    let at_16 = compress_depth(&planes, 0.0625).unwrap().1.rmse_m;

    let (_, test) = desk_split(5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut others = test.iter().take(3).map(|s| s.gt.clone()).collect::<Vec<_>>();
    for _ in 0..3 {
        let d = (0..32 * 24).map(|_| if rng.random_bool(0.8) { rng.random_range(1.0..40.0) } else { 0.0 }).collect();
        others.push(DepthImage::from_depths(32, 24, d).unwrap());
    }
    let others_mono = others.iter().all(|img| monotone(img).0);
    let pass = planes_mono && others_mono && at_16 < 0.05 * step;
    report(
        5,
        "DCT sparsity",
        pass,
        &format!(
            "two-plane RMSE over rates 1/64..1 {:?} m, monotone on 3 desk frames and 3 random maps: {others_mono}; \
             RMSE at 1/16 {at_16:.4} m (< {:.2} m)",
            planes_errs.iter().map(|e| (e * 1e4).round() / 1e4).collect::<Vec<_>>(),
            0.05 * step
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 6

fn pooled_mae(pred: impl Fn(&TrainSample) -> DepthImage, test: &[TrainSample]) -> f64 {
    let reports: Vec<DepthEvalReport> = test.iter().map(|s| evaluate_depth(&pred(s), &s.gt).unwrap()).collect();
    DepthEvalReport::pooled(&reports).unwrap().mae_mm
}

fn desk_recipe(seed: u64) -> TrainConfig {
    TrainConfig {
        sgd: SgdConfig {
            learning_rate: 1e-5,
            momentum: 0.9,
            seed,
            epochs: 20,
            batch: 1,
        },
        crop: Some((64, 32)),
        ..TrainConfig::default()
    }
}

#[test]
fn c6_completion_ordering_on_the_desk_split() {
    let start = Instant::now();
    let (train_set, test) = desk_split(0).unwrap();
    let mut f2l = build_model(Variant::F2L, 0);
    let mut l2l = build_model(Variant::L2L, 0);
    train(&mut f2l, &train_set, &desk_recipe(0)).unwrap();
    train(&mut l2l, &train_set, &desk_recipe(0)).unwrap();
    let run = |m: &CompletionModel| pooled_mae(|s| complete_depth(m, &s.sparse, s.gray.as_ref()).unwrap(), &test);
    let f = run(&f2l);
    let l = run(&l2l);
    let nf = pooled_mae(|s| nearest_fill_baseline(&s.sparse).unwrap(), &test);
    let secs = start.elapsed().as_secs_f64();
    let pass = f < l && l < nf && secs < 900.0;
    report(
        6,
        "completion ordering",
        pass,
        &format!("test MAE F2L {f:.0} mm, L2L {l:.0} mm, nearest fill {nf:.0} mm (need F2L < L2L < nearest), {secs:.0} s (< 900 s)"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 7

#[test]
fn c7_enriched_odometry_keeps_parity_and_densifies_the_map() {
    let start = Instant::now();
    let mut scene = Scene::courtyard();
    scene.lidar.azimuth_jitter_deg = 0.25;
    scene.lidar.range_noise = 0.01;
    scene.lidar.noise_seed = 7;
    let poses: Vec<Pose6> = (0..30).map(|k| Pose6::new(-4.0 + 0.3 * k as f64, 0.37, 1.73, 0.0, 0.0, 0.0)).collect();
    let full = synth_scene(&scene, &poses, 64).unwrap();
    let bins = RingBinning::default();
    let frames = full
        .frames
        .iter()
        .map(|f| downsample_channels(f, 4, &bins, DownsampleMode::DropRings).unwrap())
        .collect();
    let seq = ScanSequence {
        frames,
        ..full
    };

    // the completion model sees courtyard views away from the test path
    let cam = desk_camera();
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let train_poses: Vec<Pose6> = (0..12)
        .map(|_| Pose6::new(rng.random_range(-5.0..5.0), rng.random_range(-3.0..3.0), 1.73, 0.0, 0.0, rng.random_range(-3.1..3.1)))
        .collect();
    let samples = simulate_samples(&scene, &train_poses, &cam, 4).unwrap();
    let mut model = build_model(Variant::F2L, 7);
    let mut cfg = desk_recipe(7);
    cfg.sgd.epochs = 10;
    train(&mut model, &samples, &cfg).unwrap();
    let grays: Vec<_> = poses.iter().map(|p| render_camera(&scene, p, &cam).gray).collect();

    let odo = OdometryConfig::default();
    let (raw_t, raw_map) = run_odometry(&seq, &odo, None).unwrap();
    let enrich = Enrichment {
        model: &model,
        camera: &cam,
        images: Some(&grays),
    };
    let (rich_t, rich_map) = run_odometry(&seq, &odo, Some(&enrich)).unwrap();
    let raw_err = evaluate_trajectory(&raw_t.poses, &poses).unwrap().mean_err;
    let rich_err = evaluate_trajectory(&rich_t.poses, &poses).unwrap().mean_err;
    let rel = (rich_err - raw_err).abs() / raw_err;
    let ratio = rich_map.len() as f64 / raw_map.len() as f64;
    let secs = start.elapsed().as_secs_f64();
    let pass = rel <= 0.5 && ratio >= 2.0 && secs < 600.0;
    report(
        7,
        "SLAM parity",
        pass,
        &format!(
            "mean translational error raw {raw_err:.4} m, enriched {rich_err:.4} m (relative difference {rel:.2}, need <= 0.5); \
             map points raw {} enriched {} (ratio {ratio:.2}, need >= 2); {secs:.0} s (< 600 s)",
            raw_map.len(),
            rich_map.len()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 8

#[test]
fn c8_metric_formulas() {
    let gt = DepthImage::from_depths(2, 1, vec![3.0, 4.0]).unwrap();
    let r = evaluate_depth(&DepthImage::empty(2, 1), &gt).unwrap();
    let depth_ok = r.mae_mm == 3500.0 && (r.rmse_mm - 3535.5).abs() < 0.05 && r.n_pixels == 2;
    let same = evaluate_depth(&gt, &gt).unwrap();
    let depth_ok = depth_ok && same.mae_mm == 0.0 && same.rmse_mm == 0.0;

    let line: Vec<Pose6> = (0..8).map(|k| Pose6::new(0.3 * k as f64, 0.0, 0.0, 0.0, 0.0, 0.01 * k as f64)).collect();
    let zero = evaluate_trajectory(&line, &line).unwrap();
    let shifted: Vec<Pose6> = line
        .iter()
        .enumerate()
        .map(|(k, p)| if k == 0 { *p } else { Pose6::new(p.translation().x, 0.1, 0.0, 0.0, 0.0, p.to_array()[5]) })
        .collect();
    let off = evaluate_trajectory(&shifted, &line).unwrap();
    let close = |a: f64| (a - 0.1).abs() < 1e-12;
    let traj_ok = [zero.max_err, zero.mean_err, zero.min_err, zero.rmse, zero.std] == [0.0; 5]
        && close(off.max_err)
        && close(off.mean_err)
        && close(off.rmse)
        && off.std < 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut jensen_ok = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..64);
        let gt = DepthImage::from_depths(n, 1, (0..n).map(|_| rng.random_range(0.5..80.0)).collect()).unwrap();
        let pred = DepthImage::from_depths(
            n,
            1,
            (0..n).map(|_| if rng.random_bool(0.9) { rng.random_range(0.5..80.0) } else { 0.0 }).collect(),
        )
        .unwrap();
        let r = evaluate_depth(&pred, &gt).unwrap();
        if r.rmse_mm >= r.mae_mm {
            jensen_ok += 1;
        }
    }
    let pass = depth_ok && traj_ok && jensen_ok == 1000;
    report(
        8,
        "metric formulas",
        pass,
        &format!(
            "depth example MAE {} mm RMSE {:.1} mm (3500 / 3535.5); 0.1 m offset gives max {:.3} mean {:.3} rmse {:.3} std {:.1e}; \
             rmse >= mae on {jensen_ok}/1000 random vectors",
            r.mae_mm, r.rmse_mm, off.max_err, off.mean_err, off.rmse, off.std
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 9

#[test]
fn c9_slam_command_is_deterministic() {
    use lidar_enrich::cli::main_with_args;
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = |p: &std::path::Path| p.to_str().unwrap().to_string();
    let seq = d.join("seq");
    let ckpt = d.join("model.ckpt");
    let synth = ["le", "--seed", "9", "synth", "--frames", "6", "--channels", "16", "--azimuth-jitter", "0.25", "--range-noise", "0.01", "--images", "--out", &s(&seq)];
    assert_eq!(main_with_args(synth), 0);
    assert_eq!(main_with_args(["le", "--seed", "9", "train", "--epochs", "1", "--crop", "32x16", "--out", &s(&ckpt)]), 0);
    let run = |out: &std::path::Path| {
        let args = ["le", "--seed", "9", "slam", "--method", "ndt", "--enrich", &s(&ckpt), "--in", &s(&seq), "--out", &s(out)];
        assert_eq!(main_with_args(args), 0);
    };
    run(&d.join("run1"));
    run(&d.join("run2"));
    let mut identical = true;
    let mut sizes = Vec::new();
    for f in ["poses.txt", "map.ply", "diagnostics.csv"] {
        let a = std::fs::read(d.join("run1").join(f)).unwrap();
        let b = std::fs::read(d.join("run2").join(f)).unwrap();
        identical &= a == b && !a.is_empty();
        sizes.push(format!("{f} {} B", a.len()));
    }
    report(9, "determinism", identical, &format!("two seeded slam runs byte-identical: {identical} ({})", sizes.join(", ")));
    assert!(identical);
}
