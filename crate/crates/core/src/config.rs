//! TOML configuration. Every section and field is optional; omitted values
//! take the defaults listed on each type.
//!
//! ```toml
//! seed = 0
//!
//! [layout]
//! patches = 18            # built-in layout (18 or 26)
//! # latitudes_deg = [-45.0, 0.0, 45.0]   # custom rows override `patches`
//! # counts = [4, 8, 4]
//! fov_deg = 80.0
//! patch_size = 128
//!
//! [depth]
//! d_min = 0.0
//! d_max = 10.0
//! bins = 100
//! epsilon = 0.001
//! key_dim = 64
//! queries = 32
//!
//! [fusion]
//! weighting = "cosine_falloff"   # or "uniform"
//! raw_weights = [0.0, 0.0]
//!
//! [loss]
//! lambda = 0.1
//! berhu = { kind = "fixed_c", value = 0.2 }
//! reduction = "sum"
//! chamfer_stride = 8
//!
//! [fit]
//! steps = 500
//! lr = 0.5
//! tol = 1e-9
//!
//! [io]
//! png_depth_scale = 0.001
//!
//! [eval]
//! mask_frac = 0.0
//!
//! [scene]
//! kind = "voronoi_cells"   # constant_sphere | axis_box | voronoi_cells
//! erp_height = 128
//! # depth = 3.0                  # constant_sphere
//! # half_extents = [2.0, 2.0, 2.0] # axis_box
//! # depths = [...]               # voronoi_cells; drawn from the seed if omitted
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binfit::FitConfig;
use crate::distribution::{DepthRange, DEFAULT_BINS, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::loss::{FusionWeights, LossConfig};
use crate::resample::FusionWeighting;
use crate::sphere::{PatchLayout, DEFAULT_FOV_DEG, DEFAULT_PATCH_COUNT, DEFAULT_PATCH_SIZE};
use crate::synth::{SceneKind, SceneSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub patches: usize,
    pub latitudes_deg: Option<Vec<f64>>,
    pub counts: Option<Vec<usize>>,
    pub fov_deg: f64,
    pub patch_size: usize,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            patches: DEFAULT_PATCH_COUNT,
            latitudes_deg: None,
            counts: None,
            fov_deg: DEFAULT_FOV_DEG,
            patch_size: DEFAULT_PATCH_SIZE,
        }
    }
}

impl LayoutConfig {
    pub fn build(&self) -> Result<PatchLayout> {
        let fov = self.fov_deg.to_radians();
        match (&self.latitudes_deg, &self.counts) {
            (Some(lats), Some(counts)) => PatchLayout::from_rows(lats, counts, fov, self.patch_size),
            (None, None) => PatchLayout::standard(self.patches, fov, self.patch_size),
            _ => Err(Error::Config("layout needs both latitudes_deg and counts".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthConfig {
    pub d_min: f64,
    pub d_max: f64,
    pub bins: usize,
    pub epsilon: f64,
    /// Key feature channels (C1).
    pub key_dim: usize,
    /// Query embeddings (C2).
    pub queries: usize,
}

impl Default for DepthConfig {
    fn default() -> Self {
        Self {
            d_min: 0.0,
            d_max: 10.0,
            bins: DEFAULT_BINS,
            epsilon: DEFAULT_EPSILON,
            key_dim: 64,
            queries: 32,
        }
    }
}

impl DepthConfig {
    pub fn range(&self) -> Result<DepthRange> {
        DepthRange::new(self.d_min, self.d_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub weighting: FusionWeighting,
    pub raw_weights: [f64; 2],
}

impl FusionConfig {
    pub fn weights(&self) -> FusionWeights {
        FusionWeights { raw: self.raw_weights }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    /// Meters per unit of 16-bit PNG depth.
    pub png_depth_scale: f64,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self { png_depth_scale: 0.001 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Fraction of rows excluded at each pole.
    pub mask_frac: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKindName {
    ConstantSphere,
    AxisBox,
    #[default]
    VoronoiCells,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub kind: SceneKindName,
    pub erp_height: usize,
    pub depth: f64,
    pub half_extents: [f64; 3],
    pub depths: Option<Vec<f64>>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            kind: SceneKindName::default(),
            erp_height: 128,
            depth: 3.0,
            half_extents: [2.0; 3],
            depths: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub layout: LayoutConfig,
    pub depth: DepthConfig,
    pub fusion: FusionConfig,
    pub loss: LossConfig,
    pub fit: FitConfig,
    pub io: IoConfig,
    pub eval: EvalConfig,
    pub scene: SceneConfig,
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string().trim().replace('\n', " ")))
}

fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text)?)
    }

    fn from_table(t: toml::Table) -> Result<Self> {
        let cfg: Config = t.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string().trim().replace('\n', " ")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::load_layered(&[path.as_ref()])
    }

    /// Loads several files, later ones overriding keys of earlier ones.
    pub fn load_layered(paths: &[&Path]) -> Result<Self> {
        let mut table = toml::Table::new();
        for p in paths {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            merge(&mut table, parse_table(&text)?);
        }
        Self::from_table(table)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.build()?;
        self.depth.range()?;
        if self.depth.bins < 2 || !(self.depth.epsilon > 0.0) || self.depth.key_dim == 0 || self.depth.queries == 0 {
            return Err(Error::Config("depth: need bins >= 2, epsilon > 0, key_dim and queries > 0".into()));
        }
        self.loss.validate()?;
        self.fit.validate()?;
        if !(self.io.png_depth_scale > 0.0) {
            return Err(Error::Config("io.png_depth_scale must be positive".into()));
        }
        if !(0.0..=0.5).contains(&self.eval.mask_frac) {
            return Err(Error::Config("eval.mask_frac must lie in [0, 0.5]".into()));
        }
        Ok(())
    }

    /// Fit settings with the bin count and epsilon taken from `[depth]`.
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            bins: self.depth.bins,
            epsilon: self.depth.epsilon,
            ..self.fit
        }
    }

    pub fn scene_spec(&self) -> Result<SceneSpec> {
        let range = self.depth.range()?;
        let s = &self.scene;
        match s.kind {
            SceneKindName::ConstantSphere => SceneSpec::new(SceneKind::ConstantSphere { depth: s.depth }, range, self.seed),
            SceneKindName::AxisBox => SceneSpec::new(SceneKind::AxisBox { half_extents: s.half_extents }, range, self.seed),
            SceneKindName::VoronoiCells => {
                let layout = self.layout.build()?;
                match &s.depths {
                    Some(d) => SceneSpec::new(SceneKind::VoronoiCells { layout, depths: d.clone() }, range, self.seed),
                    None => SceneSpec::random_voronoi(layout, range, self.seed),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::BerhuMode;

    #[test]
    fn defaults_match_operating_point() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        let layout = c.layout.build().unwrap();
        assert_eq!((layout.len(), layout.patch_size()), (18, 128));
        assert_eq!(c.depth.bins, 100);
        assert_eq!(c.loss.lambda, 0.1);
        assert_eq!(c.fusion.weighting, FusionWeighting::CosineFalloff);
    }

    #[test]
    fn custom_layout_and_overrides() {
        let c = Config::from_toml(
            r#"
            seed = 9
            [layout]
            latitudes_deg = [-45.0, 0.0, 45.0]
            counts = [4, 8, 4]
            fov_deg = 90.0
            [loss]
            berhu = { kind = "max_fraction", value = 0.2 }
            [fusion]
            weighting = "uniform"
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.layout.build().unwrap().len(), 16);
        assert_eq!(c.loss.berhu, BerhuMode::MaxFraction(0.2));
        assert_eq!(c.fusion.weighting, FusionWeighting::Uniform);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(Config::from_toml("[layout]\npatches = 10").is_err());
        assert!(Config::from_toml("[layout]\ncounts = [1]").is_err());
        assert!(Config::from_toml("[depth]\nd_min = 5.0\nd_max = 1.0").is_err());
        assert!(Config::from_toml("bogus = 1").is_err());
        assert!(Config::from_toml("[eval]\nmask_frac = 0.7").is_err());
    }

    #[test]
    fn round_trip_and_layering() {
        let c = Config::from_toml("[depth]\nbins = 20").unwrap();
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);

        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.toml");
        let b = dir.path().join("b.toml");
        std::fs::write(&a, "seed = 1\n[depth]\nbins = 20\nd_max = 5.0").unwrap();
        std::fs::write(&b, "[depth]\nbins = 30").unwrap();
        let c = Config::load_layered(&[&a, &b]).unwrap();
        assert_eq!((c.seed, c.depth.bins, c.depth.d_max), (1, 30, 5.0));
    }

    #[test]
    fn scene_specs() {
        let c = Config::from_toml("[scene]\nkind = \"axis_box\"").unwrap();
        assert!(matches!(c.scene_spec().unwrap().kind, SceneKind::AxisBox { .. }));
        let c = Config::default();
        match c.scene_spec().unwrap().kind {
            SceneKind::VoronoiCells { depths, .. } => assert_eq!(depths.len(), 18),
            other => panic!("unexpected {other:?}"),
        }
    }
}
