use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DENSITY_THRESHOLD;

/// Max-dimension resolution of each pyramid level, coarse to fine.
pub const DEFAULT_SCHEDULE: [usize; 8] = [16, 21, 28, 38, 51, 68, 91, 121];

/// All pyramid and nearest-neighbor-field hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Scale factor between consecutive levels (used for derived schedules).
    pub scale_factor: f64,
    /// Index of the finest level; the pyramid has `levels + 1` scales.
    pub levels: usize,
    /// Patch edge length (odd).
    pub patch_size: usize,
    /// Weight of the appearance term in the patch distance.
    pub appearance_weight: f64,
    /// Completeness normalization constant; smaller favours covering more of
    /// the exemplar.
    pub completeness_alpha: f64,
    /// Std of the coarse-scale coordinate noise, relative to the box extents.
    pub noise_sigma: f64,
    /// SDF truncation distance in voxels.
    pub sdf_truncation: f64,
    pub exact_iterations: usize,
    pub approx_iterations: usize,
    /// Scales `0..exact_scales` use the exact search.
    pub exact_scales: usize,
    pub max_dim_schedule: Vec<usize>,
    pub seed: u64,
    /// PatchMatch sweeps per approximate matching step.
    pub patchmatch_sweeps: usize,
    /// Largest jump-flood propagation offset.
    pub jump_radius: usize,
    /// Maximum number of query/key pairs the exact search will score.
    pub exact_capacity: u64,
    pub density_threshold: f32,
    /// Density written into enclosed empty cavities before surface extraction.
    pub fill_density: f32,
    pub pca_components: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            scale_factor: 4.0 / 3.0,
            levels: 7,
            patch_size: 5,
            appearance_weight: 0.5,
            completeness_alpha: 0.01,
            noise_sigma: 0.5,
            sdf_truncation: 3.0,
            exact_iterations: 10,
            approx_iterations: 2,
            exact_scales: 5,
            max_dim_schedule: DEFAULT_SCHEDULE.to_vec(),
            seed: 0,
            patchmatch_sweeps: 4,
            jump_radius: 8,
            exact_capacity: 1 << 31,
            density_threshold: DENSITY_THRESHOLD,
            fill_density: 100.0,
            pca_components: 3,
        }
    }
}

impl SynthesisConfig {
    /// Editing preset: 6 scales starting at 28, exact search on the first 3,
    /// no coordinate noise.
    pub fn edit_preset() -> Self {
        SynthesisConfig {
            levels: 5,
            max_dim_schedule: vec![28, 38, 51, 68, 91, 121],
            exact_scales: 3,
            noise_sigma: 0.0,
            ..Default::default()
        }
    }

    /// Structural-analogy preset: 4 scales starting at 51, exact search on
    /// the first, no coordinate noise.
    pub fn analogy_preset() -> Self {
        SynthesisConfig {
            levels: 3,
            max_dim_schedule: vec![51, 68, 91, 121],
            exact_scales: 1,
            noise_sigma: 0.0,
            ..Default::default()
        }
    }

    pub fn scales(&self) -> usize {
        self.levels + 1
    }

    /// Replaces the schedule with one derived from `finest` and the scale
    /// factor: level `n` gets `round(finest / r^(levels - n))`.
    pub fn with_geometric_schedule(mut self, finest: usize) -> Result<Self> {
        self.max_dim_schedule = (0..=self.levels)
            .map(|n| {
                let v = finest as f64 / self.scale_factor.powi((self.levels - n) as i32);
                round_half_up(v).max(1)
            })
            .collect();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.scale_factor > 1.0) {
            return bad(format!("scale factor must be > 1, got {}", self.scale_factor));
        }
        if self.patch_size < 3 || self.patch_size % 2 == 0 {
            return bad(format!("patch size must be odd and >= 3, got {}", self.patch_size));
        }
        if !(0.0..=1.0).contains(&self.appearance_weight) {
            return bad(format!(
                "appearance weight must lie in [0, 1], got {}",
                self.appearance_weight
            ));
        }
        if !(self.completeness_alpha > 0.0) {
            return bad(format!("alpha must be > 0, got {}", self.completeness_alpha));
        }
        if !(self.noise_sigma >= 0.0) {
            return bad(format!("sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.sdf_truncation > 0.0) {
            return bad(format!(
                "SDF truncation must be > 0, got {}",
                self.sdf_truncation
            ));
        }
        if self.exact_iterations == 0 || self.approx_iterations == 0 {
            return bad("iteration counts must be >= 1".into());
        }
        if self.patchmatch_sweeps == 0 {
            return bad("PatchMatch needs at least one sweep".into());
        }
        if self.pca_components == 0 || self.pca_components > 3 {
            return bad(format!(
                "PCA components must be in 1..=3, got {}",
                self.pca_components
            ));
        }
        if self.max_dim_schedule.len() != self.levels + 1 {
            return bad(format!(
                "schedule has {} entries but {} scales are configured",
                self.max_dim_schedule.len(),
                self.levels + 1
            ));
        }
        if self.max_dim_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!(
                "schedule must be strictly increasing: {:?}",
                self.max_dim_schedule
            ));
        }
        if self.max_dim_schedule[0] < self.patch_size {
            return bad(format!(
                "coarsest resolution {} is smaller than the patch size {}",
                self.max_dim_schedule[0], self.patch_size
            ));
        }
        Ok(())
    }
}

/// `floor(x + 0.5)` for non-negative inputs.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = SynthesisConfig::default();
        c.validate().unwrap();
        assert_eq!(c.scales(), 8);
        assert_eq!(c.patch_size, 5);
        assert_eq!(c.appearance_weight, 0.5);
        assert_eq!(c.completeness_alpha, 0.01);
        assert_eq!(c.noise_sigma, 0.5);
        assert_eq!(c.exact_iterations, 10);
        assert_eq!(c.approx_iterations, 2);
        assert_eq!(c.exact_scales, 5);
        SynthesisConfig::edit_preset().validate().unwrap();
        SynthesisConfig::analogy_preset().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let base = SynthesisConfig::default();
        for c in [
            SynthesisConfig { scale_factor: 1.0, ..base.clone() },
            SynthesisConfig { patch_size: 4, ..base.clone() },
            SynthesisConfig { appearance_weight: 1.5, ..base.clone() },
            SynthesisConfig { completeness_alpha: 0.0, ..base.clone() },
            SynthesisConfig { max_dim_schedule: vec![16, 21, 21, 38, 51, 68, 91, 121], ..base.clone() },
            SynthesisConfig { max_dim_schedule: vec![16, 21], ..base.clone() },
        ] {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn geometric_schedule_uses_ratio() {
        let c = SynthesisConfig { levels: 3, ..Default::default() }
            .with_geometric_schedule(64)
            .unwrap();
        // 64 / (4/3)^k for k = 3, 2, 1, 0
        assert_eq!(c.max_dim_schedule, vec![27, 36, 48, 64]);
    }

    #[test]
    fn json_roundtrip_with_partial_fields() {
        let c: SynthesisConfig = serde_json::from_str(r#"{"noise_sigma": 0.25, "seed": 9}"#).unwrap();
        assert_eq!(c.noise_sigma, 0.25);
        assert_eq!(c.seed, 9);
        assert_eq!(c.max_dim_schedule, DEFAULT_SCHEDULE.to_vec());
        assert!(serde_json::from_str::<SynthesisConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
