use crate::autograd::{matmul_raw, Tensor};
use crate::error::{Error, Result};
use crate::video::clip::Clip;

/// Spatiotemporal cube extents (frames x pixel rows x pixel cols).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CubeDims {
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

impl Default for CubeDims {
    fn default() -> Self {
        CubeDims { t: 2, h: 16, w: 16 }
    }
}

impl CubeDims {
    pub fn pixel_count(&self) -> usize {
        self.t * self.h * self.w * 3
    }
}

/// Token grid produced by cube embedding: one D-dim token per cube, laid out
/// t-major then row-major over the spatial grid.
#[derive(Clone, Debug)]
pub struct CubeGrid {
    pub t_grid: usize,
    pub h_grid: usize,
    pub w_grid: usize,
    pub tokens: Tensor,
}

impl CubeGrid {
    pub fn n_tokens(&self) -> usize {
        self.t_grid * self.h_grid * self.w_grid
    }

    pub fn spatial_size(&self) -> usize {
        self.h_grid * self.w_grid
    }
}

fn check_divisible(axis: &'static str, len: usize, cube: usize) -> Result<usize> {
    if cube == 0 || len % cube != 0 {
        return Err(Error::Divisibility { axis, len, cube });
    }
    Ok(len / cube)
}

/// Flatten a clip into one row of raw pixels per cube, shape
/// (T'*H'*W') x (t*h*w*3). Within a cube the order is frame, row, column,
/// channel; across cubes it is t-major then spatial row-major.
pub fn cube_pixels(clip: &Clip, dims: &CubeDims) -> Result<Tensor> {
    if clip.frames.is_empty() {
        return Err(Error::BadArgument {
            op: "cube_pixels",
            msg: "empty clip".into(),
        });
    }
    let (fh, fw) = (clip.frame_h(), clip.frame_w());
    if clip.frames.iter().any(|f| f.h != fh || f.w != fw) {
        return Err(Error::BadArgument {
            op: "cube_pixels",
            msg: "frames disagree on size".into(),
        });
    }
    let t_grid = check_divisible("time", clip.frames.len(), dims.t)?;
    let h_grid = check_divisible("height", fh, dims.h)?;
    let w_grid = check_divisible("width", fw, dims.w)?;

    let n = t_grid * h_grid * w_grid;
    let cube_len = dims.pixel_count();
    let mut data = Vec::with_capacity(n * cube_len);
    for ti in 0..t_grid {
        for hi in 0..h_grid {
            for wi in 0..w_grid {
                for dt in 0..dims.t {
                    let frame = &clip.frames[ti * dims.t + dt];
                    for dy in 0..dims.h {
                        let y = hi * dims.h + dy;
                        let row = frame.data();
                        let base = (y * fw + wi * dims.w) * 3;
                        data.extend_from_slice(&row[base..base + dims.w * 3]);
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, cube_len], data)
}

/// Fixed sinusoidal position table, one row per position: even columns get
/// sin(pos / 10000^(2i/d)), odd columns the matching cos.
pub fn sinusoidal_positions(n: usize, d: usize) -> Tensor {
    let mut data = vec![0.0f32; n * d];
    for pos in 0..n {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let rate = (pos as f64) / 10000f64.powf(2.0 * pair / d as f64);
            data[pos * d + i] = if i % 2 == 0 {
                rate.sin() as f32
            } else {
                rate.cos() as f32
            };
        }
    }
    Tensor::new(vec![n, d], data).expect("sized buffer")
}

/// Linear cube embedding: raw cube pixels projected to D dims (no bias, so
/// the map is exactly linear in the pixels), plus the fixed position table.
pub fn cube_embed(clip: &Clip, dims: &CubeDims, projection: &Tensor, posenc: &Tensor) -> Result<CubeGrid> {
    let pixels = cube_pixels(clip, dims)?;
    let n = pixels.rows();
    let cube_len = pixels.cols();
    if projection.rank() != 2 || projection.cols() != cube_len {
        return Err(Error::ShapeMismatch {
            op: "cube_embed",
            lhs: projection.shape().to_vec(),
            rhs: vec![n, cube_len],
        });
    }
    let d = projection.rows();
    if posenc.shape() != [n, d] {
        return Err(Error::ShapeMismatch {
            op: "cube_embed",
            lhs: posenc.shape().to_vec(),
            rhs: vec![n, d],
        });
    }
    // tokens = pixels * P^T + posenc
    let pt: Vec<f32> = {
        let mut out = vec![0.0f32; cube_len * d];
        for r in 0..d {
            for c in 0..cube_len {
                out[c * d + r] = projection.data()[r * cube_len + c];
            }
        }
        out
    };
    let mut tokens = matmul_raw(pixels.data(), &pt, n, cube_len, d);
    for (t, p) in tokens.iter_mut().zip(posenc.data()) {
        *t += p;
    }
    let t_grid = clip.frames.len() / dims.t;
    let h_grid = clip.frame_h() / dims.h;
    let w_grid = clip.frame_w() / dims.w;
    Ok(CubeGrid {
        t_grid,
        h_grid,
        w_grid,
        tokens: Tensor::new(vec![n, d], tokens)?,
    })
}
