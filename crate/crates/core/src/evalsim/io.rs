use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};

use super::SequenceBundle;
use crate::bbox::BoundingBox;
use crate::error::{dim_err, Error, Result};
use crate::numerics::Tensor;

fn frame_path(dir: &Path, index: usize, ext: &str) -> PathBuf {
    dir.join("img").join(format!("{:08}.{ext}", index + 1))
}

/// Decodes a binary PGM/PPM into an `H×W×{1|3}` tensor scaled to `[0,1]`.
pub fn read_image(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (data, c) = match img {
        DynamicImage::ImageLuma8(g) => (g.into_raw(), 1),
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) => (img.to_luma8().into_raw(), 1),
        other => (other.to_rgb8().into_raw(), 3),
    };
    Tensor::from_vec(&[h, w, c], data.into_iter().map(|v| v as f64 / 255.0).collect())
}

fn to_bytes(img: &Tensor) -> Vec<u8> {
    img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

/// Writes a 1- or 3-channel tensor in `[0,1]` as binary PGM or PPM.
pub fn write_image(path: &Path, img: &Tensor) -> Result<()> {
    let (h, w, c) = img.dims3()?;
    let (subtype, color) = match c {
        1 => (PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8),
        3 => (PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8),
        _ => return dim_err(format!("cannot write a {c}-channel image")),
    };
    let file = BufWriter::new(fs::File::create(path)?);
    PnmEncoder::new(file)
        .with_subtype(subtype)
        .write_image(&to_bytes(img), w as u32, h as u32, color)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
}

/// Min-max normalized 8-bit PGM of a heat map.
pub fn write_heatmap(path: &Path, map: &Tensor) -> Result<()> {
    let (h, w) = map.dims2()?;
    let lo = map.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = map.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let norm = Tensor::from_fn(&[h, w, 1], |i| (map.data()[i] - lo) / span);
    write_image(path, &norm)
}

/// Adds an integer to a plain decimal literal without rounding; `None` for
/// exponent notation or literals too long for exact integer arithmetic.
fn shift_decimal(lit: &str, delta: i128) -> Option<String> {
    let (neg, body) = match lit.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, lit.strip_prefix('+').unwrap_or(lit)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let scale = 10i128.checked_pow(frac.len() as u32)?;
    let digits: i128 = format!("{int}{frac}").trim_start_matches('0').parse().unwrap_or(0);
    let value = if neg { -digits } else { digits };
    let shifted = value.checked_add(delta.checked_mul(scale)?)?;
    let (sign, mag) = (if shifted < 0 { "-" } else { "" }, shifted.unsigned_abs());
    let scale = scale as u128;
    Some(if frac.is_empty() {
        format!("{sign}{mag}")
    } else {
        format!("{sign}{}.{:0width$}", mag / scale, mag % scale, width = frac.len())
    })
}

/// 0-based coordinate to its exact 1-based literal.
fn to_one_based(v: f64) -> String {
    shift_decimal(&format!("{v}"), 1).unwrap_or_else(|| format!("{}", v + 1.0))
}

/// 1-based literal to the 0-based coordinate.
fn from_one_based(lit: &str) -> Option<f64> {
    match shift_decimal(lit, -1) {
        Some(s) => s.parse().ok(),
        None => lit.parse::<f64>().ok().map(|v| v - 1.0),
    }
}

fn parse_box_line(line: &str, path: &Path, lineno: usize) -> Result<BoundingBox> {
    let parse_err = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: lineno,
        msg,
    };
    let fields: Vec<&str> = line
        .split(|c: char| c == ',' || c == '\t' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect();
    if fields.len() != 4 {
        return Err(parse_err(format!("expected 4 values x,y,w,h, found {}", fields.len())));
    }
    let bad = |f: &str| parse_err(format!("not a number: {f:?}"));
    let x = from_one_based(fields[0]).ok_or_else(|| bad(fields[0]))?;
    let y = from_one_based(fields[1]).ok_or_else(|| bad(fields[1]))?;
    let w: f64 = fields[2].parse().map_err(|_| bad(fields[2]))?;
    let h: f64 = fields[3].parse().map_err(|_| bad(fields[3]))?;
    if ![x, y, w, h].iter().all(|v| v.is_finite()) || w <= 0.0 || h <= 0.0 {
        return Err(parse_err(format!("invalid box {line:?}")));
    }
    Ok(BoundingBox::new(x, y, w, h))
}

pub fn read_groundtruth(path: &Path) -> Result<Vec<BoundingBox>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_box_line(l.trim(), path, i + 1))
        .collect()
}

fn format_box(b: &BoundingBox) -> String {
    format!("{},{},{},{}", to_one_based(b.x), to_one_based(b.y), b.w, b.h)
}

pub fn write_groundtruth(path: &Path, boxes: &[BoundingBox]) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    for b in boxes {
        writeln!(f, "{}", format_box(b))?;
    }
    f.flush()?;
    Ok(())
}

/// Loads an OTB-style directory: `img/00000001.{ppm|pgm}` … plus
/// `groundtruth.txt`, one frame per ground-truth line.
pub fn load_sequence(dir: &Path) -> Result<SequenceBundle> {
    let gt = read_groundtruth(&dir.join("groundtruth.txt"))?;
    let mut frames = Vec::with_capacity(gt.len());
    for i in 0..gt.len() {
        let path = ["ppm", "pgm"]
            .iter()
            .map(|ext| frame_path(dir, i, ext))
            .find(|p| p.exists())
            .ok_or_else(|| Error::MissingFile(frame_path(dir, i, "ppm")))?;
        frames.push(read_image(&path)?);
    }
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());
    let bundle = SequenceBundle { name, frames, gt, seed: None };
    bundle.validate()?;
    Ok(bundle)
}

pub fn save_sequence(bundle: &SequenceBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("img"))?;
    for (i, frame) in bundle.frames.iter().enumerate() {
        let ext = if frame.dims3()?.2 == 1 { "pgm" } else { "ppm" };
        write_image(&frame_path(dir, i, ext), frame)?;
    }
    write_groundtruth(&dir.join("groundtruth.txt"), &bundle.gt)
}

/// One tracked frame as written to `results.csv`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameResult {
    pub bbox: BoundingBox,
    pub score: f64,
}

/// Writes `results.csv` (`frame,x,y,w,h,score`, 1-based) and
/// `metrics.json` into `dir`.
pub fn save_results<M: serde::Serialize>(dir: &Path, results: &[FrameResult], metrics: &M) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = BufWriter::new(fs::File::create(dir.join("results.csv"))?);
    writeln!(f, "frame,x,y,w,h,score")?;
    for (i, r) in results.iter().enumerate() {
        writeln!(f, "{},{},{}", i + 1, format_box(&r.bbox), r.score)?;
    }
    f.flush()?;
    let json = serde_json::to_string_pretty(metrics)?;
    fs::write(dir.join("metrics.json"), json + "\n")?;
    Ok(())
}

pub fn load_results(dir: &Path) -> Result<Vec<FrameResult>> {
    let path = dir.join("results.csv");
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read_to_string(&path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (head, score) = line.rsplit_once(',').ok_or_else(|| Error::Parse {
            path: path.clone(),
            line: i + 1,
            msg: "missing score column".into(),
        })?;
        let (_, rest) = head.split_once(',').ok_or_else(|| Error::Parse {
            path: path.clone(),
            line: i + 1,
            msg: "missing frame column".into(),
        })?;
        let bbox = parse_box_line(rest, &path, i + 1)?;
        let score = score.trim().parse().map_err(|_| Error::Parse {
            path: path.clone(),
            line: i + 1,
            msg: format!("bad score {score:?}"),
        })?;
        out.push(FrameResult { bbox, score });
    }
    Ok(out)
}
