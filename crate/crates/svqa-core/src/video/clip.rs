use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One RGB frame, row-major, channels interleaved, values in [0, 1].
///
/// Frames always pass through an 8-bit quantization (they live on disk as
/// PNG), so values are multiples of 1/255 and disk round-trips are exact.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub h: usize,
    pub w: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn from_u8(h: usize, w: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != h * w * 3 {
            return Err(Error::BadArgument {
                op: "Frame::from_u8",
                msg: format!("{h}x{w} RGB wants {} bytes, got {}", h * w * 3, bytes.len()),
            });
        }
        Ok(Frame {
            h,
            w,
            data: bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        })
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.w + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Fixed-stride temporal sampler: from start t it takes frames
/// t, t+stride, ..., t+(n-1)*stride.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerSpec {
    pub n_frames: usize,
    pub stride: usize,
    pub fps: f32,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        SamplerSpec {
            n_frames: 8,
            stride: 4,
            fps: 30.0,
        }
    }
}

impl SamplerSpec {
    pub fn indices(&self, start: usize) -> Vec<usize> {
        (0..self.n_frames).map(|i| start + i * self.stride).collect()
    }

    /// Source frames spanned between the first and last sampled index.
    pub fn span_frames(&self) -> usize {
        (self.n_frames - 1) * self.stride
    }

    pub fn duration_seconds(&self) -> f32 {
        self.span_frames() as f32 / self.fps
    }
}

/// Provenance header stored next to the frames of an extracted clip.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipHeader {
    pub source_id: String,
    pub start_frame_index: usize,
    pub fps: f32,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub frames: Vec<Frame>,
    pub header: ClipHeader,
}

impl Clip {
    /// Wrap frames that were produced directly (not cut from a longer
    /// video) with a synthetic provenance header.
    pub fn from_frames(frames: Vec<Frame>) -> Clip {
        Clip {
            frames,
            header: ClipHeader {
                source_id: "synthetic".into(),
                start_frame_index: 0,
                fps: 30.0,
                stride: 1,
            },
        }
    }

    pub fn frame_h(&self) -> usize {
        self.frames[0].h
    }

    pub fn frame_w(&self) -> usize {
        self.frames[0].w
    }
}

/// Cut a clip out of a frame sequence. Fails if the last sampled index falls
/// outside the sequence.
pub fn sample_clip(
    video: &[Frame],
    source_id: &str,
    spec: &SamplerSpec,
    start: usize,
) -> Result<Clip> {
    if spec.n_frames == 0 || spec.stride == 0 {
        return Err(Error::BadArgument {
            op: "sample_clip",
            msg: format!("n_frames {} / stride {} must be positive", spec.n_frames, spec.stride),
        });
    }
    let end = start + spec.span_frames() + 1;
    if end > video.len() {
        return Err(Error::ClipOutOfRange {
            start,
            end,
            len: video.len(),
        });
    }
    let frames = spec.indices(start).iter().map(|&i| video[i].clone()).collect();
    Ok(Clip {
        frames,
        header: ClipHeader {
            source_id: source_id.to_string(),
            start_frame_index: start,
            fps: spec.fps,
            stride: spec.stride,
        },
    })
}

fn frame_file(i: usize) -> String {
    format!("frame_{i:03}.png")
}

/// Write a clip as numbered PNGs plus a `clip.txt` provenance header.
pub fn save_clip_dir(dir: &Path, clip: &Clip) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io_at(dir.display().to_string(), e))?;
    for (i, f) in clip.frames.iter().enumerate() {
        let img = image::RgbImage::from_raw(f.w as u32, f.h as u32, f.to_u8())
            .ok_or_else(|| Error::Image("frame buffer size mismatch".into()))?;
        let path = dir.join(frame_file(i));
        img.save(&path)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    }
    let h = &clip.header;
    let header = format!(
        "source_id = {}\nstart_frame_index = {}\nfps = {}\nstride = {}\n",
        h.source_id, h.start_frame_index, h.fps, h.stride
    );
    let path = dir.join("clip.txt");
    fs::write(&path, header).map_err(|e| Error::io_at(path.display().to_string(), e))?;
    Ok(())
}

/// Load a clip directory written by [`save_clip_dir`].
pub fn load_clip_dir(dir: &Path) -> Result<Clip> {
    let header_path = dir.join("clip.txt");
    let text = fs::read_to_string(&header_path)
        .map_err(|e| Error::io_at(header_path.display().to_string(), e))?;
    let mut source_id = None;
    let mut start = None;
    let mut fps = None;
    let mut stride = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Dataset(format!("{}: bad header line {line:?}", header_path.display()))
        })?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "source_id" => source_id = Some(v.to_string()),
            "start_frame_index" => start = v.parse::<usize>().ok(),
            "fps" => fps = v.parse::<f32>().ok(),
            "stride" => stride = v.parse::<usize>().ok(),
            _ => {
                return Err(Error::Dataset(format!(
                    "{}: unknown header key {k:?}",
                    header_path.display()
                )))
            }
        }
    }
    let header = ClipHeader {
        source_id: source_id
            .ok_or_else(|| Error::Dataset(format!("{}: missing source_id", header_path.display())))?,
        start_frame_index: start.ok_or_else(|| {
            Error::Dataset(format!("{}: missing start_frame_index", header_path.display()))
        })?,
        fps: fps
            .ok_or_else(|| Error::Dataset(format!("{}: missing fps", header_path.display())))?,
        stride: stride
            .ok_or_else(|| Error::Dataset(format!("{}: missing stride", header_path.display())))?,
    };

    let mut frames = Vec::new();
    loop {
        let path = dir.join(frame_file(frames.len()));
        if !path.exists() {
            break;
        }
        let img = image::open(&path)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
            .to_rgb8();
        frames.push(Frame::from_u8(
            img.height() as usize,
            img.width() as usize,
            img.as_raw(),
        )?);
    }
    if frames.is_empty() {
        return Err(Error::Dataset(format!("{}: no frames", dir.display())));
    }
    Ok(Clip { frames, header })
}
