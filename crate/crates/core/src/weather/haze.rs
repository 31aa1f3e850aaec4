use serde::{Deserialize, Serialize};

use super::{check_unit, ResidualLayer};
use crate::error::{Error, Result};
use crate::imaging::{ImageRgb, Plane};

/// Scene depth used for the transmission map `t = exp(-beta * depth)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DepthModel {
    Constant { depth: f64 },
    /// Linear in the row index: `far` on the top row, `near` on the bottom row.
    VerticalGradient { near: f64, far: f64 },
    External { plane: Plane },
}

impl DepthModel {
    fn depth_map(&self, width: usize, height: usize) -> Result<Plane> {
        match self {
            DepthModel::Constant { depth } => Ok(Plane::new(width, height, *depth)),
            DepthModel::VerticalGradient { near, far } => {
                let denom = height.saturating_sub(1).max(1) as f64;
                Ok(Plane::from_fn(width, height, |_, y| {
                    if height == 1 {
                        *near
                    } else {
                        far + (near - far) * y as f64 / denom
                    }
                }))
            }
            DepthModel::External { plane } => {
                if plane.dims() != (width, height) {
                    return Err(Error::dims((width, height), plane.dims()));
                }
                Ok(plane.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HazeParams {
    pub airlight: [f64; 3],
    /// Scattering coefficient.
    pub beta: f64,
    pub depth: DepthModel,
}

impl Default for HazeParams {
    fn default() -> Self {
        Self {
            airlight: [0.55, 0.55, 0.6],
            beta: 1.0,
            depth: DepthModel::VerticalGradient {
                near: 0.3,
                far: 1.5,
            },
        }
    }
}

impl HazeParams {
    pub fn transmission(&self, width: usize, height: usize) -> Result<Plane> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "haze beta must be non-negative, got {}",
                self.beta
            )));
        }
        let depth = self.depth_map(width, height)?;
        if depth.data().iter().any(|&d| !(d >= 0.0)) {
            return Err(Error::InvalidInput("haze depth must be non-negative".into()));
        }
        Ok(depth.map(|d| (-self.beta * d).exp()))
    }

    fn depth_map(&self, width: usize, height: usize) -> Result<Plane> {
        self.depth.depth_map(width, height)
    }
}

/// `(A - X) * (1 - t)` per channel, so `X + residual = t * X + A * (1 - t)`.
pub fn gen_haze(image: &ImageRgb, p: &HazeParams) -> Result<ResidualLayer> {
    for a in p.airlight {
        check_unit("airlight", a)?;
    }
    let (w, h) = image.dims();
    let t = p.transmission(w, h)?;
    let mut out = image.clone();
    for c in 0..3 {
        let a = p.airlight[c];
        for (v, &ti) in out.channel_mut(c).iter_mut().zip(t.data()) {
            *v = (a - *v) * (1.0 - ti);
        }
    }
    Ok(ResidualLayer(out))
}
