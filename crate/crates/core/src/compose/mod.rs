//! Scene composition: flare first, then illumination-weighted weather residuals.
//!
//! ```text
//! X_flare = clip(alpha * X + beta * (L * K_apsf))        (or X without flare)
//! X_d     = clip(X_flare + sum_e 1_e * w_e * G_e(X_flare))
//! ```
//!
//! `w_e` is the Retinex illumination of `X_flare` for haze, rain streaks and
//! snow, and 1 for raindrops. All residuals are computed from `X_flare`, summed
//! in the fixed effect order H, RS, RD, S, and clipped once.

mod dataset;

use serde::{Deserialize, Serialize};

pub use dataset::{
    build_dataset, sample_recipe, BuildOptions, Category, DatasetPlan, Manifest, ManifestEntry,
};

use crate::error::{Error, Result};
use crate::flare::{synthesize_flare, FlareParams};
use crate::imaging::{ImageRgb, Plane, SeededRng};
use crate::retinex::{decompose_with, RetinexParams};
use crate::weather::{EffectParams, ResidualLayer, WeatherEffect};

/// Version stamped into recipe, plan and manifest JSON.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEntry {
    pub params: EffectParams,
    /// Presence indicator; inactive entries contribute nothing.
    pub active: bool,
}

impl EffectEntry {
    pub fn active(params: EffectParams) -> Self {
        Self {
            params,
            active: true,
        }
    }

    pub fn effect(&self) -> WeatherEffect {
        self.params.effect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecipe {
    pub schema_version: u32,
    #[serde(default)]
    pub flare: Option<FlareParams>,
    #[serde(default)]
    pub effects: Vec<EffectEntry>,
    #[serde(default)]
    pub retinex: RetinexParams,
    pub seed: u64,
}

impl SceneRecipe {
    pub fn new(seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            flare: None,
            effects: Vec::new(),
            retinex: RetinexParams::default(),
            seed,
        }
    }

    pub fn with_flare(mut self, p: FlareParams) -> Self {
        self.flare = Some(p);
        self
    }

    pub fn with_effect(mut self, params: EffectParams) -> Self {
        self.effects.push(EffectEntry::active(params));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidRecipe(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        validate_effects(&self.effects)?;
        if let Some(f) = &self.flare {
            f.validate().map_err(|e| Error::InvalidRecipe(e.to_string()))?;
        }
        Ok(())
    }

    pub fn labels(&self) -> Labels {
        let mut labels = Labels {
            flare: self.flare.is_some() as u8,
            ..Labels::default()
        };
        for e in self.effects.iter().filter(|e| e.active) {
            labels.set(e.effect());
        }
        labels
    }
}

fn validate_effects(effects: &[EffectEntry]) -> Result<()> {
    let mut seen = [false; 4];
    for e in effects {
        let i = e.effect().index();
        if seen[i] {
            return Err(Error::InvalidRecipe(format!("duplicate effect {}", e.effect())));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Multi-hot weather tags plus a flare flag.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    #[serde(rename = "H")]
    pub haze: u8,
    #[serde(rename = "RS")]
    pub rain_streak: u8,
    #[serde(rename = "RD")]
    pub raindrop: u8,
    #[serde(rename = "S")]
    pub snow: u8,
    pub flare: u8,
}

impl Labels {
    pub fn set(&mut self, e: WeatherEffect) {
        match e {
            WeatherEffect::Haze => self.haze = 1,
            WeatherEffect::RainStreak => self.rain_streak = 1,
            WeatherEffect::Raindrop => self.raindrop = 1,
            WeatherEffect::Snow => self.snow = 1,
        }
    }

    /// Weather bits in H, RS, RD, S order.
    pub fn weather(&self) -> [u8; 4] {
        [self.haze, self.rain_streak, self.raindrop, self.snow]
    }

    pub fn weather_count(&self) -> usize {
        self.weather().iter().map(|&b| b as usize).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaStats {
    pub effect: WeatherEffect,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradedSample {
    pub clean: ImageRgb,
    pub flared: ImageRgb,
    pub degraded: ImageRgb,
    pub labels: Labels,
    /// Flare blend weight and light fraction, when flare is enabled.
    pub beta: Option<f64>,
    pub rho: Option<f64>,
    pub seed: u64,
    pub recipe: SceneRecipe,
    pub omega: Vec<OmegaStats>,
}

/// Whether an effect's residual is weighted by the illumination map.
pub fn uses_illumination(e: WeatherEffect) -> bool {
    e != WeatherEffect::Raindrop
}

/// Adds the active residuals to `x_flare` under their weight maps and clips.
///
/// `illumination` is the weight map for every effect except raindrops.
/// Each generator draws from the stream `(seed, effect name)`.
pub fn compose_weighted(
    x_flare: &ImageRgb,
    effects: &[EffectEntry],
    illumination: &Plane,
    seed: u64,
) -> Result<(ImageRgb, Vec<OmegaStats>)> {
    validate_effects(effects)?;
    if illumination.dims() != x_flare.dims() {
        return Err(Error::dims(x_flare.dims(), illumination.dims()));
    }
    let mut active: Vec<&EffectEntry> = effects.iter().filter(|e| e.active).collect();
    active.sort_by_key(|e| e.effect());

    let mut acc = x_flare.clone();
    let mut omega = Vec::with_capacity(active.len());
    for entry in active {
        let effect = entry.effect();
        let mut rng = SeededRng::new(seed, effect.name());
        let ResidualLayer(residual) = entry.params.generate(x_flare, &mut rng)?;
        if uses_illumination(effect) {
            for c in 0..3 {
                for ((a, r), w) in acc
                    .channel_mut(c)
                    .iter_mut()
                    .zip(residual.channel(c))
                    .zip(illumination.data())
                {
                    *a += w * r;
                }
            }
            let (min, max) = illumination.min_max();
            omega.push(OmegaStats {
                effect,
                min,
                mean: illumination.mean(),
                max,
            });
        } else {
            for (a, r) in acc.data_mut().iter_mut().zip(residual.data()) {
                *a += r;
            }
            omega.push(OmegaStats {
                effect,
                min: 1.0,
                mean: 1.0,
                max: 1.0,
            });
        }
    }
    Ok((acc.clamp01(), omega))
}

pub fn compose_scene(x: &ImageRgb, recipe: &SceneRecipe) -> Result<DegradedSample> {
    recipe.validate()?;
    if x.is_empty() {
        return Err(Error::InvalidInput("cannot compose an empty image".into()));
    }
    let (flared, beta, rho) = match &recipe.flare {
        Some(p) => {
            let out = synthesize_flare(x, p)?;
            (out.image, Some(out.beta), Some(out.rho))
        }
        None => (x.clone(), None, None),
    };
    let needs_illumination = recipe
        .effects
        .iter()
        .any(|e| e.active && uses_illumination(e.effect()));
    let illumination = if needs_illumination {
        decompose_with(&flared, &recipe.retinex)?.illumination
    } else {
        Plane::new(x.width(), x.height(), 1.0)
    };
    let (degraded, omega) = compose_weighted(&flared, &recipe.effects, &illumination, recipe.seed)?;
    Ok(DegradedSample {
        clean: x.clone(),
        flared,
        degraded,
        labels: recipe.labels(),
        beta,
        rho,
        seed: recipe.seed,
        recipe: recipe.clone(),
        omega,
    })
}
