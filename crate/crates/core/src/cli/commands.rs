use std::fs;
use std::path::{Path, PathBuf};

use super::*;
use crate::completion::{build_model, complete_depth, desk_camera, desk_split, evaluate_depth, train, CompletionModel, DepthEvalReport, TrainConfig, TrainSample};
use crate::micrograd::SgdConfig;
use crate::pointcloud_io::{
    downsample_channels, project_to_depth, read_depth_png, read_gray_png, read_kitti_poses, read_sequence_dir,
    read_sequence_images, read_velodyne_bin, render_camera, synth_scene, write_depth_png, write_gray_png,
    write_kitti_poses, write_sequence_dir, write_sequence_images, write_velodyne_bin, Camera, RingBinning, Scene,
};
use crate::registration::{icp_register, ndt_register, IcpConfig, NdtConfig};
use crate::slam::{enrich_cloud, evaluate_trajectory, export_map, run_odometry, OdometryConfig, TrajEvalReport};
use crate::sparsity::{compress_depth, depth_discontinuity, image_edges};
use crate::{Error, Grid, Result, ScanSequence};

pub(super) fn run(cli: &Cli) -> Result<()> {
    let threads = cli.threads as usize;
    match &cli.command {
        Command::Synth(a) => synth(a, cli.seed),
        Command::Project(a) => project(a),
        Command::Downsample(a) => downsample(a),
        Command::Sparsity(a) => sparsity(a),
        Command::Edges(a) => edges(a),
        Command::Train(a) => train_cmd(a, cli.seed),
        Command::Complete(a) => complete(a, threads),
        Command::EvalDepth(a) => eval_depth(a),
        Command::Register(a) => register(a),
        Command::Slam(a) => slam(a, threads),
        Command::EvalTraj(a) => eval_traj(a),
    }
}

/// `f` over `items` on up to `threads` scoped threads, results in input order.
fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    let parts: Vec<Result<Vec<R>>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(f).collect::<Result<Vec<R>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn camera_or_desk(path: Option<&PathBuf>) -> Result<Camera> {
    match path {
        Some(p) => Camera::read(p),
        None => Ok(desk_camera()),
    }
}

fn pngs_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Format(format!("no PNG files in {}", dir.display())));
    }
    Ok(files)
}

fn synth(a: &SynthArgs, seed: u64) -> Result<()> {
    let mut scene = match a.scene.as_str() {
        "street" => Scene::street(),
        "courtyard" => Scene::courtyard(),
        path => Scene::read(path)?,
    };
    if let Some(n) = a.range_noise {
        scene.lidar.range_noise = n;
    }
    if let Some(j) = a.azimuth_jitter {
        scene.lidar.azimuth_jitter_deg = j;
    }
    scene.lidar.noise_seed = seed;
    let mut poses = Vec::with_capacity(a.frames);
    let (mut x, mut y) = (a.start_x, a.start_y);
    for k in 0..a.frames {
        let yaw = (a.yaw_rate * k as f64).to_radians();
        poses.push(Pose6::new(x, y, a.height, 0.0, 0.0, yaw));
        x += a.step * yaw.cos();
        y += a.step * yaw.sin();
    }
    let seq = synth_scene(&scene, &poses, a.channels)?;
    write_sequence_dir(&a.out, &seq)?;
    if a.images {
        let cam = camera_or_desk(a.camera.as_ref())?;
        let grays: Vec<Grid> = poses.iter().map(|p| render_camera(&scene, p, &cam).gray).collect();
        write_sequence_images(&a.out, &grays)?;
    }
    log::info!("wrote {} frames to {}", seq.frames.len(), a.out.display());
    Ok(())
}

fn project(a: &ProjectArgs) -> Result<()> {
    let cloud = read_velodyne_bin(&a.cloud)?;
    let cam = camera_or_desk(a.camera.as_ref())?;
    let proj = project_to_depth(&cloud, &cam.intr, cam.width, cam.height)?;
    write_depth_png(&a.out, &proj.image)?;
    log::info!("{} valid pixels, {} points outside the image", proj.image.valid_count(), proj.dropped);
    Ok(())
}

fn downsample(a: &DownsampleArgs) -> Result<()> {
    let cloud = read_velodyne_bin(&a.cloud)?;
    let bins = RingBinning {
        min_deg: a.elevation_min,
        max_deg: a.elevation_max,
        rings: a.rings,
    };
    let low = downsample_channels(&cloud, a.keep, &bins, a.mode)?;
    write_velodyne_bin(&a.out, &low)?;
    log::info!("{} of {} points kept", low.len(), cloud.len());
    Ok(())
}

fn sparsity(a: &SparsityArgs) -> Result<()> {
    let img = read_depth_png(&a.depth)?;
    if let Some(d) = &a.out_dir {
        create_dir(d)?;
    }
    println!("rate,rmse_m,mae_m");
    for &rate in &a.rates.0 {
        let (recon, r) = compress_depth(&img, rate)?;
        println!("{:.6},{:.6e},{:.6e}", r.rate, r.rmse_m, r.mae_m);
        if let Some(d) = &a.out_dir {
            write_depth_png(d.join(format!("recon_{rate:.6}.png")), &recon)?;
        }
    }
    Ok(())
}

fn edges(a: &EdgesArgs) -> Result<()> {
    let map = match (&a.depth, &a.gray) {
        (Some(d), _) => depth_discontinuity(&read_depth_png(d)?, a.threshold.unwrap_or(1.0))?,
        (None, Some(g)) => image_edges(&read_gray_png(g)?, a.threshold.unwrap_or(0.5))?,
        (None, None) => return Err(Error::InvalidArgument("edges needs --depth or --gray".into())),
    };
    let img = Grid::from_vec(map.width, map.height, map.binary.iter().map(|&b| b as f64).collect())?;
    write_gray_png(&a.out, &img)?;
    println!("pixels,edges");
    println!("{},{}", map.binary.len(), map.count());
    Ok(())
}

fn read_samples(dir: &Path) -> Result<Vec<TrainSample>> {
    let gray_dir = dir.join("gray");
    pngs_in(&dir.join("sparse"))?
        .iter()
        .map(|p| {
            let name = p.file_name().expect("listed file");
            let sparse = read_depth_png(p)?;
            let gt = read_depth_png(dir.join("gt").join(name))?;
            let gray = if gray_dir.is_dir() { Some(read_gray_png(gray_dir.join(name))?) } else { None };
            TrainSample::new(sparse, gt, gray)
        })
        .collect()
}

fn train_cmd(a: &TrainArgs, seed: u64) -> Result<()> {
    let (samples, test) = match &a.data {
        Some(d) => (read_samples(d)?, Vec::new()),
        None => desk_split(seed)?,
    };
    let mut model = build_model(a.variant, seed);
    let cfg = TrainConfig {
        sgd: SgdConfig {
            learning_rate: a.lr,
            momentum: a.momentum,
            seed,
            epochs: a.epochs,
            batch: a.batch,
        },
        lambda: a.lambda,
        crop: a.crop,
        ..TrainConfig::default()
    };
    let losses = train(&mut model, &samples, &cfg)?;
    model.save(&a.out)?;
    if let Some(p) = &a.loss_csv {
        let mut text = String::from("epoch,loss\n");
        for (k, l) in losses.iter().enumerate() {
            text.push_str(&format!("{k},{l:.12e}\n"));
        }
        fs::write(p, text).map_err(|e| Error::io(p, e))?;
    }
    log::info!(
        "trained {} on {} samples, loss {:.6} -> {:.6}",
        a.variant,
        samples.len(),
        losses[0],
        losses[losses.len() - 1]
    );
    if !test.is_empty() {
        let reports = test
            .iter()
            .map(|s| evaluate_depth(&complete_depth(&model, &s.sparse, s.gray.as_ref())?, &s.gt))
            .collect::<Result<Vec<_>>>()?;
        println!("variant,{}", DepthEvalReport::CSV_HEADER);
        println!("{},{}", a.variant, DepthEvalReport::pooled(&reports)?);
    }
    Ok(())
}

fn complete_one(model: &CompletionModel, sparse: &Path, gray: Option<&Path>, out: &Path) -> Result<()> {
    let img = read_depth_png(sparse)?;
    let gray = gray.map(read_gray_png).transpose()?;
    write_depth_png(out, &complete_depth(model, &img, gray.as_ref())?)
}

fn complete(a: &CompleteArgs, threads: usize) -> Result<()> {
    let model = CompletionModel::load(&a.model)?;
    if !a.sparse.is_dir() {
        return complete_one(&model, &a.sparse, a.gray.as_deref(), &a.out);
    }
    create_dir(&a.out)?;
    let files = pngs_in(&a.sparse)?;
    par_map(&files, threads, |p| {
        let name = p.file_name().expect("listed file");
        let gray = a.gray.as_ref().map(|g| g.join(name));
        complete_one(&model, p, gray.as_deref(), &a.out.join(name))
    })?;
    log::info!("completed {} frames into {}", files.len(), a.out.display());
    Ok(())
}

fn eval_depth(a: &EvalDepthArgs) -> Result<()> {
    let r = evaluate_depth(&read_depth_png(&a.pred)?, &read_depth_png(&a.gt)?)?;
    println!("{}", DepthEvalReport::CSV_HEADER);
    println!("{r}");
    Ok(())
}

fn register(a: &RegisterArgs) -> Result<()> {
    let input = read_velodyne_bin(&a.input)?;
    let reference = read_velodyne_bin(&a.reference)?;
    let init = a.init.unwrap_or_else(Pose6::identity);
    let r = match a.method {
        Method::Ndt => {
            let cfg = NdtConfig {
                cell_size: a.cell_size,
                max_iter: a.max_iter,
                coarse_cell_size: (a.coarse_cell > 0.0).then_some(a.coarse_cell),
                ..NdtConfig::default()
            };
            ndt_register(&input, &reference, &init, &cfg)?
        }
        Method::Icp => {
            let cfg = IcpConfig {
                max_iter: a.max_iter,
                ..IcpConfig::default()
            };
            icp_register(&input, &reference, &init, &cfg)?
        }
    };
    println!("{r}");
    if let Some(p) = &a.out {
        fs::write(p, format!("{r}\n")).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn slam(a: &SlamArgs, threads: usize) -> Result<()> {
    let mut seq = read_sequence_dir(&a.input)?;
    if let Some(ckpt) = &a.enrich {
        let model = CompletionModel::load(ckpt)?;
        let cam = camera_or_desk(a.camera.as_ref())?;
        let images = read_sequence_images(&a.input)?;
        if let Some(imgs) = &images {
            if imgs.len() != seq.frames.len() {
                return Err(Error::Shape(format!("{} images for {} scans", imgs.len(), seq.frames.len())));
            }
        }
        // frames are independent, so they are densified up front
        let idx: Vec<usize> = (0..seq.frames.len()).collect();
        let frames = par_map(&idx, threads, |&k| {
            enrich_cloud(&seq.frames[k], &model, &cam, images.as_ref().map(|g| &g[k]))
        })?;
        seq = ScanSequence { frames, ..seq };
    }
    let defaults = OdometryConfig::default();
    let cfg = OdometryConfig {
        method: a.method,
        ndt: NdtConfig {
            cell_size: a.cell_size,
            coarse_cell_size: (a.coarse_cell > 0.0).then_some(a.coarse_cell),
            ..defaults.ndt
        },
        constant_velocity: !a.no_velocity,
        voxel_size: a.voxel,
        ..defaults
    };
    let (traj, map) = run_odometry(&seq, &cfg, None)?;
    create_dir(&a.out)?;
    write_kitti_poses(a.out.join("poses.txt"), &traj.poses)?;
    export_map(&map, a.out.join("map.ply"))?;
    traj.write_diagnostics(a.out.join("diagnostics.csv"))?;
    let fallbacks = traj.per_frame.iter().filter(|d| d.fallback).count();
    log::info!("{} frames, {} map points, {fallbacks} fallbacks", traj.len(), map.len());
    if let Some(gt) = &seq.ground_truth {
        let r = evaluate_trajectory(&traj.poses, gt)?;
        println!("{}", TrajEvalReport::CSV_HEADER);
        println!("{r}");
    }
    Ok(())
}

fn eval_traj(a: &EvalTrajArgs) -> Result<()> {
    let r = evaluate_trajectory(&read_kitti_poses(&a.est)?, &read_kitti_poses(&a.gt)?)?;
    println!("{}", TrajEvalReport::CSV_HEADER);
    println!("{r}");
    Ok(())
}
