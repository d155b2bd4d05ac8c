use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Tube mask: a set of masked spatial grid positions, each hidden at every
/// temporal slice. Stored purely spatially; the temporal extension is implied
/// by construction, so a position can never be half-masked in time.
#[derive(Clone, Debug, PartialEq)]
pub struct TubeMask {
    pub h_grid: usize,
    pub w_grid: usize,
    masked: Vec<bool>,
}

impl TubeMask {
    pub fn spatial_size(&self) -> usize {
        self.h_grid * self.w_grid
    }

    pub fn masked_count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }

    pub fn visible_count(&self) -> usize {
        self.spatial_size() - self.masked_count()
    }

    pub fn is_masked(&self, spatial_index: usize) -> bool {
        self.masked[spatial_index]
    }

    pub fn flags(&self) -> &[bool] {
        &self.masked
    }
}

/// Draw a tube mask hiding round(ratio * spatial positions) tubes.
pub fn make_tube_mask(
    h_grid: usize,
    w_grid: usize,
    ratio: f32,
    rng: &mut SeededRng,
) -> Result<TubeMask> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::BadArgument {
            op: "make_tube_mask",
            msg: format!("mask ratio {ratio} outside [0, 1]"),
        });
    }
    let total = h_grid * w_grid;
    if total == 0 {
        return Err(Error::BadArgument {
            op: "make_tube_mask",
            msg: "empty spatial grid".into(),
        });
    }
    let n_masked = (ratio * total as f32).round() as usize;
    let mut masked = vec![false; total];
    for i in rng.sample_indices(total, n_masked) {
        masked[i] = true;
    }
    Ok(TubeMask {
        h_grid,
        w_grid,
        masked,
    })
}

/// Rows of the token matrix that survive the mask, in ascending order. Token
/// rows are laid out t-major over the spatial grid, so each unmasked spatial
/// position contributes one row per temporal slice.
pub fn visible_token_rows(mask: &TubeMask, t_grid: usize) -> Vec<usize> {
    let spatial = mask.spatial_size();
    let mut rows = Vec::with_capacity(t_grid * mask.visible_count());
    for t in 0..t_grid {
        for s in 0..spatial {
            if !mask.is_masked(s) {
                rows.push(t * spatial + s);
            }
        }
    }
    rows
}
