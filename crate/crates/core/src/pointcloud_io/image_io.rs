use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use super::DepthImage;
use crate::{Error, Grid, Result};

/// KITTI depth maps store `depth * 256` as 16-bit gray, with 0 meaning
/// no measurement.
const DEPTH_SCALE: f64 = 256.0;

fn decode(path: &Path) -> Result<(png::OutputInfo, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format(format!("{}: image too large", path.display())))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    buf.truncate(info.buffer_size());
    Ok((info, buf))
}

fn encode(path: &Path, width: usize, height: usize, depth: png::BitDepth, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(depth);
    let fmt_err = |e: png::EncodingError| Error::Format(format!("{}: {e}", path.display()));
    let mut writer = enc.write_header().map_err(fmt_err)?;
    writer.write_image_data(data).map_err(fmt_err)?;
    writer.finish().map_err(fmt_err)
}

pub fn read_depth_png(path: impl AsRef<Path>) -> Result<DepthImage> {
    let path = path.as_ref();
    let (info, buf) = decode(path)?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::Format(format!(
            "{}: depth maps must be 16-bit grayscale, got {:?}/{:?}",
            path.display(),
            info.color_type,
            info.bit_depth
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let depths = buf
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / DEPTH_SCALE)
        .collect();
    DepthImage::from_depths(w, h, depths)
}

/// Depths are quantized to 1/256 m; valid pixels never round to 0.
pub fn write_depth_png(path: impl AsRef<Path>, img: &DepthImage) -> Result<()> {
    img.validate()?;
    let mut data = Vec::with_capacity(img.depth.len() * 2);
    for (&d, &m) in img.depth.iter().zip(&img.mask) {
        let v = if m == 1 {
            (d * DEPTH_SCALE).round().clamp(1.0, u16::MAX as f64) as u16
        } else {
            0
        };
        data.extend_from_slice(&v.to_be_bytes());
    }
    encode(path.as_ref(), img.width, img.height, png::BitDepth::Sixteen, &data)
}

/// Read a grayscale (8 or 16 bit) or RGB(A) PNG as intensities in `[0, 1]`.
pub fn read_gray_png(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let (info, buf) = decode(path)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let samples: Vec<f64> = match info.bit_depth {
        png::BitDepth::Sixteen => buf
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / u16::MAX as f64)
            .collect(),
        png::BitDepth::Eight => buf.iter().map(|&b| b as f64 / 255.0).collect(),
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported bit depth {other:?}",
                path.display()
            )))
        }
    };
    let channels = info.color_type.samples();
    let data = match info.color_type {
        png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => {
            samples.chunks_exact(channels).map(|s| s[0]).collect()
        }
        png::ColorType::Rgb | png::ColorType::Rgba => samples
            .chunks_exact(channels)
            .map(|s| 0.299 * s[0] + 0.587 * s[1] + 0.114 * s[2])
            .collect(),
        png::ColorType::Indexed => {
            return Err(Error::Format(format!("{}: unexpanded palette", path.display())))
        }
    };
    Grid::from_vec(w, h, data)
}

/// Write intensities (clamped to `[0, 1]`) as an 8-bit grayscale PNG.
pub fn write_gray_png(path: impl AsRef<Path>, gray: &Grid) -> Result<()> {
    let data: Vec<u8> = gray
        .data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    encode(path.as_ref(), gray.width, gray.height, png::BitDepth::Eight, &data)
}
