//! Batch generation of labelled degraded samples.
//!
//! Output layout under the dataset root:
//!
//! ```text
//! gt/<stem>.png            clean ground truth, re-encoded
//! flare/<id>.png           intermediate flared image
//! degraded/<id>.png        final degraded image
//! manifest.json
//! ```
//!
//! Every sample seed is derived from `(master seed, "<stem>/<category>/<k>")`,
//! so the output does not depend on worker count or scheduling.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compose_scene, EffectEntry, Labels, OmegaStats, SceneRecipe, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::flare::{ApsfParams, FlareParams};
use crate::imaging::{derive_seed, io, SeededRng, GENERATOR_NAME};
use crate::retinex::RetinexParams;
use crate::weather::{
    DepthModel, EffectParams, HazeParams, MaskSource, RainStreakParams, RaindropParams, SnowParams,
};

/// Test-scene categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    RainScene,
    SnowScene,
    Haze,
    RainStreak,
    Raindrop,
    Snow,
    Flare,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::RainScene,
        Category::SnowScene,
        Category::Haze,
        Category::RainStreak,
        Category::Raindrop,
        Category::Snow,
        Category::Flare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::RainScene => "rain_scene",
            Category::SnowScene => "snow_scene",
            Category::Haze => "haze",
            Category::RainStreak => "rain_streak",
            Category::Raindrop => "raindrop",
            Category::Snow => "snow",
            Category::Flare => "flare",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPlan {
    pub schema_version: u32,
    /// Samples to draw per ground truth for each category.
    pub categories: BTreeMap<Category, usize>,
}

impl DatasetPlan {
    pub fn new(categories: impl IntoIterator<Item = (Category, usize)>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            categories: categories.into_iter().collect(),
        }
    }

    /// One sample of every category.
    pub fn all_categories() -> Self {
        Self::new(Category::ALL.into_iter().map(|c| (c, 1)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub category: Category,
    pub gt_path: String,
    pub degraded_path: String,
    pub flare_path: String,
    pub labels: Labels,
    pub beta: Option<f64>,
    pub rho: Option<f64>,
    pub seed: u64,
    pub recipe: SceneRecipe,
    pub omega: Vec<OmegaStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub generator: String,
    pub master_seed: u64,
    pub samples: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    /// Worker threads; 1 runs everything on the calling thread.
    pub workers: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { workers: 1 }
    }
}

fn sample_flare(rng: &mut SeededRng) -> FlareParams {
    FlareParams {
        alpha: 0.995,
        beta_base: rng.uniform_range(0.5, 1.0),
        rho_ref: 0.01,
        tau: rng.uniform_range(97.0, 99.5),
        feather: 3,
        apsf: ApsfParams {
            size: 31,
            sigma: rng.uniform_range(1.5, 3.0),
            gamma: rng.uniform_range(1.8, 2.6),
        },
    }
}

fn sample_haze(rng: &mut SeededRng) -> EffectParams {
    let gray = rng.uniform_range(0.45, 0.75);
    let tint = rng.uniform_range(0.0, 0.05);
    let near = rng.uniform_range(0.1, 0.5);
    let far = rng.uniform_range(1.0, 2.0);
    EffectParams::Haze(HazeParams {
        airlight: [gray, gray, (gray + tint).min(1.0)],
        beta: rng.uniform_range(0.6, 1.6),
        depth: DepthModel::VerticalGradient { near, far },
    })
}

fn sample_rain(rng: &mut SeededRng) -> EffectParams {
    EffectParams::RainStreak(RainStreakParams {
        angle_deg: rng.uniform_range(-20.0, 20.0),
        length: rng.uniform_range(9.0, 21.0),
        density: rng.uniform_range(0.02, 0.06),
        threshold: rng.uniform_range(0.0, 0.3),
        upsample: 2 + rng.below(3),
        intensity: rng.uniform_range(0.5, 0.9),
    })
}

fn sample_raindrop(rng: &mut SeededRng) -> EffectParams {
    let radius_min = rng.uniform_range(2.0, 4.0);
    EffectParams::Raindrop(RaindropParams {
        count: 3 + rng.below(8),
        radius_min,
        radius_max: radius_min + rng.uniform_range(2.0, 6.0),
        jitter: rng.uniform_range(0.5, 2.0),
        blur_sigma: rng.uniform_range(1.5, 3.0),
        darkening: rng.uniform_range(0.7, 0.95),
    })
}

fn sample_snow(rng: &mut SeededRng) -> EffectParams {
    let scale_min = rng.uniform_range(0.6, 1.0);
    EffectParams::Snow(SnowParams {
        source: MaskSource::Procedural,
        density: rng.uniform_range(0.15, 0.5),
        scale_min,
        scale_max: scale_min + rng.uniform_range(0.8, 2.0),
        brightness: rng.uniform_range(0.7, 1.0),
    })
}

/// Draws a recipe for one category from the stream `(seed, "recipe")`.
///
/// Rain scenes combine flare, haze, rain streaks and (half the time) raindrops;
/// snow scenes combine flare, haze and snow; single-effect categories add flare
/// half the time; the flare category is flare alone.
pub fn sample_recipe(category: Category, seed: u64) -> SceneRecipe {
    let mut rng = SeededRng::new(seed, "recipe");
    let mut recipe = SceneRecipe {
        retinex: RetinexParams::default(),
        ..SceneRecipe::new(seed)
    };
    let single = |rng: &mut SeededRng, recipe: &mut SceneRecipe, params: EffectParams| {
        if rng.bernoulli(0.5) {
            recipe.flare = Some(sample_flare(rng));
        }
        recipe.effects.push(EffectEntry::active(params));
    };
    match category {
        Category::RainScene => {
            recipe.flare = Some(sample_flare(&mut rng));
            recipe.effects.push(EffectEntry::active(sample_haze(&mut rng)));
            recipe.effects.push(EffectEntry::active(sample_rain(&mut rng)));
            let drops = sample_raindrop(&mut rng);
            let active = rng.bernoulli(0.5);
            recipe.effects.push(EffectEntry {
                params: drops,
                active,
            });
        }
        Category::SnowScene => {
            recipe.flare = Some(sample_flare(&mut rng));
            recipe.effects.push(EffectEntry::active(sample_haze(&mut rng)));
            recipe.effects.push(EffectEntry::active(sample_snow(&mut rng)));
        }
        Category::Haze => {
            let p = sample_haze(&mut rng);
            single(&mut rng, &mut recipe, p);
        }
        Category::RainStreak => {
            let p = sample_rain(&mut rng);
            single(&mut rng, &mut recipe, p);
        }
        Category::Raindrop => {
            let p = sample_raindrop(&mut rng);
            single(&mut rng, &mut recipe, p);
        }
        Category::Snow => {
            let p = sample_snow(&mut rng);
            single(&mut rng, &mut recipe, p);
        }
        Category::Flare => {
            recipe.flare = Some(sample_flare(&mut rng));
        }
    }
    recipe
}

fn list_ground_truths(gt_dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(gt_dir).map_err(|e| Error::io(gt_dir, e))? {
        let path = entry.map_err(|e| Error::io(gt_dir, e))?.path();
        let is_png = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("png"))
            .unwrap_or(false);
        if is_png && path.is_file() {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            out.push((stem, path));
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no PNG ground truths in {}",
            gt_dir.display()
        )));
    }
    Ok(out)
}

fn build_one_ground_truth(
    stem: &str,
    path: &Path,
    plan: &DatasetPlan,
    out_dir: &Path,
    master_seed: u64,
) -> Result<Vec<ManifestEntry>> {
    let clean = io::load_rgb(path)?;
    let gt_rel = format!("gt/{stem}.png");
    io::save_rgb(&clean, &out_dir.join(&gt_rel))?;
    let mut entries = Vec::new();
    for (&category, &count) in &plan.categories {
        for k in 0..count {
            let seed = derive_seed(master_seed, &format!("{stem}/{}/{k}", category.name()));
            let recipe = sample_recipe(category, seed);
            let sample = compose_scene(&clean, &recipe)?;
            let id = format!("{stem}_{}_{k:03}", category.name());
            let degraded_rel = format!("degraded/{id}.png");
            let flare_rel = format!("flare/{id}.png");
            io::save_rgb(&sample.degraded, &out_dir.join(&degraded_rel))?;
            io::save_rgb(&sample.flared, &out_dir.join(&flare_rel))?;
            entries.push(ManifestEntry {
                id,
                category,
                gt_path: gt_rel.clone(),
                degraded_path: degraded_rel,
                flare_path: flare_rel,
                labels: sample.labels,
                beta: sample.beta,
                rho: sample.rho,
                seed,
                recipe,
                omega: sample.omega,
            });
        }
    }
    Ok(entries)
}

/// Synthesizes every planned sample for every PNG in `gt_dir` and writes the
/// images plus `manifest.json` under `out_dir`.
pub fn build_dataset(
    gt_dir: &Path,
    plan: &DatasetPlan,
    out_dir: &Path,
    master_seed: u64,
    options: BuildOptions,
) -> Result<Manifest> {
    if plan.schema_version != SCHEMA_VERSION {
        return Err(Error::InvalidInput(format!(
            "unsupported plan schema_version {}",
            plan.schema_version
        )));
    }
    let gts = list_ground_truths(gt_dir)?;
    for sub in ["gt", "flare", "degraded"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let run = || -> Result<Vec<Vec<ManifestEntry>>> {
        gts.par_iter()
            .map(|(stem, path)| build_one_ground_truth(stem, path, plan, out_dir, master_seed))
            .collect()
    };
    let per_gt = if options.workers <= 1 {
        gts.iter()
            .map(|(stem, path)| build_one_ground_truth(stem, path, plan, out_dir, master_seed))
            .collect::<Result<Vec<_>>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers)
            .build()
            .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?
            .install(run)?
    };
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        generator: GENERATOR_NAME.to_owned(),
        master_seed,
        samples: per_gt.into_iter().flatten().collect(),
    };
    let json = serde_json::to_vec_pretty(&manifest)?;
    io::write_atomic(&out_dir.join("manifest.json"), &json)?;
    Ok(manifest)
}
