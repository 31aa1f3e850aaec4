//! Weather-effect generators.
//!
//! Each generator maps a source image to a signed [`ResidualLayer`] of the
//! same size. Composition (weighting, summation and the final clip) happens in
//! [`crate::compose`].

mod haze;
mod rain;
mod raindrop;
mod snow;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imaging::{ImageRgb, SeededRng};

pub use haze::{gen_haze, DepthModel, HazeParams};
pub use rain::{gen_rain_streak, line_kernel, RainStreakParams};
pub use raindrop::{drop_outline, gen_raindrop, sample_drops, DropShape, RaindropParams};
pub use snow::{gen_snow, gen_snow_from_mask, procedural_snow_mask, MaskSource, SnowParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatherEffect {
    Haze,
    RainStreak,
    Raindrop,
    Snow,
}

impl WeatherEffect {
    pub const ALL: [WeatherEffect; 4] = [
        WeatherEffect::Haze,
        WeatherEffect::RainStreak,
        WeatherEffect::Raindrop,
        WeatherEffect::Snow,
    ];

    /// Short tag used in labels: H, RS, RD, S.
    pub fn tag(self) -> &'static str {
        match self {
            WeatherEffect::Haze => "H",
            WeatherEffect::RainStreak => "RS",
            WeatherEffect::Raindrop => "RD",
            WeatherEffect::Snow => "S",
        }
    }

    /// Stable name, also the label of the effect's random stream.
    pub fn name(self) -> &'static str {
        match self {
            WeatherEffect::Haze => "haze",
            WeatherEffect::RainStreak => "rain_streak",
            WeatherEffect::Raindrop => "raindrop",
            WeatherEffect::Snow => "snow",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for WeatherEffect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Additive per-pixel contribution of one weather effect.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualLayer(pub ImageRgb);

impl ResidualLayer {
    pub fn zeros(width: usize, height: usize) -> Self {
        ResidualLayer(ImageRgb::new(width, height, [0.0; 3]))
    }

    pub fn image(&self) -> &ImageRgb {
        &self.0
    }

    pub fn into_image(self) -> ImageRgb {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.data().iter().all(|&v| v == 0.0)
    }
}

/// Parameters of one generator, tagged by effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum EffectParams {
    Haze(HazeParams),
    RainStreak(RainStreakParams),
    Raindrop(RaindropParams),
    Snow(SnowParams),
}

impl EffectParams {
    pub fn effect(&self) -> WeatherEffect {
        match self {
            EffectParams::Haze(_) => WeatherEffect::Haze,
            EffectParams::RainStreak(_) => WeatherEffect::RainStreak,
            EffectParams::Raindrop(_) => WeatherEffect::Raindrop,
            EffectParams::Snow(_) => WeatherEffect::Snow,
        }
    }

    pub fn generate(&self, image: &ImageRgb, rng: &mut SeededRng) -> Result<ResidualLayer> {
        match self {
            EffectParams::Haze(p) => gen_haze(image, p),
            EffectParams::RainStreak(p) => gen_rain_streak(image, p, rng),
            EffectParams::Raindrop(p) => gen_raindrop(image, p, rng),
            EffectParams::Snow(p) => gen_snow(image, p, rng),
        }
    }
}

pub(crate) fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(crate::Error::InvalidInput(format!("{name} must be in [0, 1], got {v}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effect_params_json_is_tagged() {
        let p = EffectParams::RainStreak(RainStreakParams::default());
        let json = serde_json::to_value(&p).unwrap();
        assert_eq!(json["effect"], "rain_streak");
        let back: EffectParams = serde_json::from_value(json).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.effect().tag(), "RS");
    }

    #[test]
    fn missing_fields_take_defaults() {
        let p: EffectParams = serde_json::from_str(r#"{"effect": "snow", "density": 0.3}"#).unwrap();
        let EffectParams::Snow(snow) = p else {
            panic!("wrong variant")
        };
        assert_eq!(snow.density, 0.3);
        assert_eq!(snow.brightness, SnowParams::default().brightness);
    }
}
