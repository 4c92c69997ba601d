//! Video file formats.
//!
//! Raw format (`.clpv`), all integers u32 little-endian:
//!
//! ```text
//! "CLPV" | version | frame count | H | W | C
//! one label byte per frame (0 negative, 1 positive, 255 unknown)
//! pixels: frame-major, each frame C planes of H*W f32 LE values
//! ```
//!
//! Binary PGM (`P5`) and PPM (`P6`) are accepted on input, scaled by
//! `1 / maxval`. A directory of such images loads as one video in file-name
//! order. Corpus manifests are CSV `video_id,path,label`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::{Corpus, Frame, VideoSample};

pub const RAW_MAGIC: &[u8; 4] = b"CLPV";
pub const RAW_VERSION: u32 = 1;

const LABEL_UNKNOWN: u8 = 255;

pub fn write_raw<W: Write>(mut out: W, video: &VideoSample) -> Result<()> {
    let [c, h, w] = video.frame_shape()[..] else {
        unreachable!("frames are rank 3");
    };
    out.write_all(RAW_MAGIC)?;
    for v in [RAW_VERSION, video.len() as u32, h as u32, w as u32, c as u32] {
        out.write_all(&v.to_le_bytes())?;
    }
    let labels: Vec<u8> = video
        .frames
        .iter()
        .map(|f| match f.label {
            Some(true) => 1,
            Some(false) => 0,
            None => LABEL_UNKNOWN,
        })
        .collect();
    out.write_all(&labels)?;
    for f in &video.frames {
        for &v in f.pixels().data() {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a raw video. The sample label is the OR of the frame labels.
pub fn read_raw<R: Read>(mut input: R, source_id: &str) -> Result<VideoSample> {
    let mut magic = [0u8; 4];
    read_exact(&mut input, &mut magic, "magic")?;
    if &magic != RAW_MAGIC {
        return Err(Error::Format(format!("bad video magic {magic:?}")));
    }
    let mut header = [0u32; 5];
    for (i, slot) in header.iter_mut().enumerate() {
        let mut b = [0u8; 4];
        read_exact(&mut input, &mut b, ["version", "frame count", "height", "width", "channels"][i])?;
        *slot = u32::from_le_bytes(b);
    }
    let [version, count, h, w, c] = header.map(|v| v as usize);
    if version != RAW_VERSION as usize {
        return Err(Error::Format(format!("unsupported video version {version}")));
    }
    if count == 0 {
        return Err(Error::Format("video has zero frames".into()));
    }
    let mut labels = vec![0u8; count];
    read_exact(&mut input, &mut labels, "frame labels")?;
    let per_frame = c * h * w;
    let mut raw = vec![0u8; per_frame * 4];
    let mut frames = Vec::with_capacity(count);
    for (i, &lb) in labels.iter().enumerate() {
        read_exact(&mut input, &mut raw, &format!("pixels of frame {i}"))?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        let label = match lb {
            0 => Some(false),
            1 => Some(true),
            LABEL_UNKNOWN => None,
            other => return Err(Error::Format(format!("frame {i}: label byte {other}"))),
        };
        frames.push(Frame::new(Tensor::new(vec![c, h, w], data)?, label)?);
    }
    let label = frames.iter().any(|f| f.label == Some(true));
    VideoSample::new(frames, label, source_id)
}

/// Parses a binary PGM (`P5`) or PPM (`P6`) image.
pub fn read_pnm(bytes: &[u8]) -> Result<Frame> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Truncated("image header ended early".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::Format(format!("unsupported image magic {other:?}"))),
    };
    let mut num = |what: &str| -> Result<usize> {
        let t = token()?;
        t.parse()
            .map_err(|_| Error::Format(format!("bad {what} {t:?} in image header")))
    };
    let (w, h, maxval) = (num("width")?, num("height")?, num("maxval")?);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("maxval {maxval} out of range")));
    }
    // Exactly one whitespace byte separates the header from the payload.
    let payload = &bytes[(pos + 1).min(bytes.len())..];
    let bps = if maxval < 256 { 1 } else { 2 };
    let need = w * h * channels * bps;
    if payload.len() < need {
        return Err(Error::Truncated(format!(
            "image payload has {} bytes, expected {need}",
            payload.len()
        )));
    }
    let sample = |i: usize| -> f64 {
        let v = if bps == 1 {
            payload[i] as usize
        } else {
            (payload[2 * i] as usize) << 8 | payload[2 * i + 1] as usize
        };
        v.min(maxval) as f64 / maxval as f64
    };
    // Interleaved RGB to planar.
    let mut data = vec![0.0; w * h * channels];
    for p in 0..w * h {
        for ch in 0..channels {
            data[ch * w * h + p] = sample(p * channels + ch);
        }
    }
    Frame::new(Tensor::new(vec![channels, h, w], data)?, None)
}

/// Loads a `.clpv` file, a single `.pgm`/`.ppm` image, or a directory of
/// images (sorted by file name).
pub fn load_frames(path: &Path) -> Result<VideoSample> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    if path.is_dir() {
        let mut images: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| is_pnm(p))
            .collect();
        images.sort();
        let frames = images
            .iter()
            .map(|p| read_pnm(&fs::read(p)?))
            .collect::<Result<Vec<_>>>()?;
        return VideoSample::new(frames, false, id);
    }
    if is_pnm(path) {
        return VideoSample::new(vec![read_pnm(&fs::read(path)?)?], false, id);
    }
    read_raw(BufReader::new(File::open(path)?), &id)
}

pub fn store_frames(video: &VideoSample, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_raw(&mut out, video)?;
    out.flush()?;
    Ok(())
}

fn is_pnm(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("pgm" | "ppm")
    )
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated(format!("video ended in {what}")),
        _ => Error::Io(e),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub video_id: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub label: bool,
}

pub const MANIFEST_FILE: &str = "manifest.csv";

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["video_id", "path", "label"])?;
    for e in entries {
        w.write_record([e.video_id.as_str(), e.path.as_str(), if e.label { "1" } else { "0" }])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["video_id", "path", "label"] {
        return Err(Error::Format(format!(
            "{}: expected header video_id,path,label",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let label = match rec.get(2) {
            Some("1") => true,
            Some("0") => false,
            other => {
                return Err(Error::Format(format!(
                    "{} line {line}: bad label {other:?}",
                    path.display()
                )))
            }
        };
        out.push(ManifestEntry {
            video_id: rec[0].to_string(),
            path: rec[1].to_string(),
            label,
        });
    }
    Ok(out)
}

/// Writes every video as `<dir>/<source_id>.clpv` plus `<dir>/manifest.csv`.
pub fn store_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(corpus.videos.len());
    for v in &corpus.videos {
        let file = format!("{}.clpv", v.source_id);
        store_frames(v, &dir.join(&file))?;
        entries.push(ManifestEntry {
            video_id: v.source_id.clone(),
            path: file,
            label: v.label,
        });
    }
    write_manifest(&dir.join(MANIFEST_FILE), &entries)
}

/// Loads a corpus from a manifest; manifest labels take precedence.
pub fn load_corpus(manifest: &Path) -> Result<Corpus> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let videos = read_manifest(manifest)?
        .into_iter()
        .map(|e| {
            let mut v = load_frames(&base.join(&e.path))?;
            v.label = e.label;
            v.source_id = e.video_id;
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus { videos })
}
