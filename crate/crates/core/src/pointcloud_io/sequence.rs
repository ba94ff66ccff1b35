//! Sequence directories in the KITTI odometry layout:
//! `velodyne/NNNNNN.bin`, optional `times.txt`, `poses.txt` and gray
//! camera frames `image/NNNNNN.png`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{read_gray_png, read_kitti_poses, read_velodyne_bin, write_gray_png, write_kitti_poses, write_velodyne_bin};
use super::ScanSequence;
use crate::{Error, Grid, Result};

fn numbered(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    files.sort();
    Ok(files)
}

pub fn read_sequence_dir(dir: impl AsRef<Path>) -> Result<ScanSequence> {
    let dir = dir.as_ref();
    let frames = numbered(&dir.join("velodyne"), "bin")?
        .iter()
        .map(read_velodyne_bin)
        .collect::<Result<Vec<_>>>()?;
    if frames.is_empty() {
        return Err(Error::Format(format!("no scans under {}", dir.join("velodyne").display())));
    }
    let times_path = dir.join("times.txt");
    let timestamps = if times_path.exists() {
        let text = fs::read_to_string(&times_path).map_err(|e| Error::io(&times_path, e))?;
        Some(
            text.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad timestamp {t:?}"))))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let poses_path = dir.join("poses.txt");
    let ground_truth = if poses_path.exists() {
        Some(read_kitti_poses(&poses_path)?)
    } else {
        None
    };
    let seq = ScanSequence {
        frames,
        timestamps,
        ground_truth,
    };
    seq.validate()?;
    Ok(seq)
}

pub fn write_sequence_dir(dir: impl AsRef<Path>, seq: &ScanSequence) -> Result<()> {
    let dir = dir.as_ref();
    let vel = dir.join("velodyne");
    fs::create_dir_all(&vel).map_err(|e| Error::io(&vel, e))?;
    for (k, f) in seq.frames.iter().enumerate() {
        write_velodyne_bin(vel.join(format!("{k:06}.bin")), f)?;
    }
    if let Some(t) = &seq.timestamps {
        let path = dir.join("times.txt");
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        for v in t {
            writeln!(f, "{v:.6e}").map_err(|e| Error::io(&path, e))?;
        }
    }
    if let Some(g) = &seq.ground_truth {
        write_kitti_poses(dir.join("poses.txt"), g)?;
    }
    Ok(())
}

/// Gray frames from `image/`, or `None` when the directory is absent.
pub fn read_sequence_images(dir: impl AsRef<Path>) -> Result<Option<Vec<Grid>>> {
    let img = dir.as_ref().join("image");
    if !img.is_dir() {
        return Ok(None);
    }
    let grays = numbered(&img, "png")?
        .iter()
        .map(read_gray_png)
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(grays))
}

pub fn write_sequence_images(dir: impl AsRef<Path>, grays: &[Grid]) -> Result<()> {
    let img = dir.as_ref().join("image");
    fs::create_dir_all(&img).map_err(|e| Error::io(&img, e))?;
    for (k, g) in grays.iter().enumerate() {
        write_gray_png(img.join(format!("{k:06}.png")), g)?;
    }
    Ok(())
}
