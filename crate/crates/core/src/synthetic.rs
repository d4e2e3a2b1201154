//! Gaussian class-cluster datasets with a linear attribute → feature link.
//!
//! Prototypes `s_c` are unit-normalized standard normal rows, the link
//! `G ∈ R^{K×D}` has i.i.d. `N(0, inter_var)` entries, class centroids are
//! `μ_c = s_c G`, and each sample adds `N(0, intra_var)` within-class
//! spread plus `N(0, noise_var)` observation noise per coordinate.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{normalize_prototypes, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub feature_dim: usize,
    pub attribute_dim: usize,
    pub intra_var: f64,
    pub inter_var: f64,
    pub noise_var: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_classes: 40,
            samples_per_class: 30,
            feature_dim: 64,
            attribute_dim: 16,
            intra_var: 1.0,
            inter_var: 10.0,
            noise_var: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::InvalidConfig("n_classes must be at least 2".into()));
        }
        for (name, v) in [
            ("samples_per_class", self.samples_per_class),
            ("feature_dim", self.feature_dim),
            ("attribute_dim", self.attribute_dim),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [
            ("intra_var", self.intra_var),
            ("inter_var", self.inter_var),
            ("noise_var", self.noise_var),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Expected intra-class variance as measured by
    /// [`class_variances`](crate::metrics::class_variances), which centres
    /// on the sample centroid.
    pub fn expected_intra_variance(&self) -> f64 {
        let n = self.samples_per_class as f64;
        self.feature_dim as f64 * (self.intra_var + self.noise_var) * (1.0 - 1.0 / n)
    }

    /// Expected inter-class variance as measured by
    /// [`class_variances`](crate::metrics::class_variances).
    pub fn expected_inter_variance(&self) -> f64 {
        let (c, n, d) = (
            self.n_classes as f64,
            self.samples_per_class as f64,
            self.feature_dim as f64,
        );
        // ‖s G‖² has mean D·inter_var for unit s; sample centroids add
        // D·(intra+noise)/n of spread; centring on the mean of C centroids
        // removes a 1/C share.
        (1.0 - 1.0 / c) * d * (self.inter_var + (self.intra_var + self.noise_var) / n)
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
}

/// Draws a dataset; deterministic per seed. Samples are grouped by class.
pub fn generate(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (c, k, d) = (cfg.n_classes, cfg.attribute_dim, cfg.feature_dim);

    let mut raw = normal_matrix(&mut rng, c, k, 1.0);
    // a zero row has probability zero, but resample rather than fail
    for mut row in raw.rows_mut() {
        while row.dot(&row) == 0.0 {
            row.mapv_inplace(|_| rng.sample(StandardNormal));
        }
    }
    let prototypes = normalize_prototypes(raw.view())?;
    let link = normal_matrix(&mut rng, k, d, cfg.inter_var.sqrt());
    let centroids = prototypes.dot(&link);

    let labels: Vec<usize> = (0..c).flat_map(|y| std::iter::repeat_n(y, cfg.samples_per_class)).collect();
    let mut features = centroids.select(Axis(0), &labels);
    features += &normal_matrix(&mut rng, labels.len(), d, cfg.intra_var.sqrt());
    features += &normal_matrix(&mut rng, labels.len(), d, cfg.noise_var.sqrt());

    Dataset::new(features, labels, prototypes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::class_variances;

    #[test]
    fn noiseless_classes_collapse() {
        let cfg = SyntheticConfig {
            intra_var: 0.0,
            noise_var: 0.0,
            n_classes: 5,
            samples_per_class: 4,
            ..SyntheticConfig::default()
        };
        let d = generate(&cfg).unwrap();
        let (intra, inter) = class_variances(d.features(), d.labels()).unwrap();
        assert_eq!(intra, 0.0);
        assert!(inter > 0.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SyntheticConfig {
            seed: 9,
            ..SyntheticConfig::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SyntheticConfig { seed: 10, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn prototypes_have_unit_norm() {
        let d = generate(&SyntheticConfig::default()).unwrap();
        for row in d.prototypes().rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-12);
        }
        assert_eq!(d.len(), 1200);
        assert_eq!((d.feature_dim(), d.attribute_dim(), d.class_count()), (64, 16, 40));
    }

    #[test]
    fn variances_track_their_expectations() {
        let base = SyntheticConfig::default();
        let seeds = 0..10u64;
        let measured: Vec<(f64, f64)> = seeds
            .map(|seed| {
                let d = generate(&SyntheticConfig { seed, ..base.clone() }).unwrap();
                class_variances(d.features(), d.labels()).unwrap()
            })
            .collect();
        // Monte-Carlo means agree with the analytic expectations
        let mc_intra = measured.iter().map(|m| m.0).sum::<f64>() / 10.0;
        let mc_inter = measured.iter().map(|m| m.1).sum::<f64>() / 10.0;
        assert!((mc_intra / base.expected_intra_variance() - 1.0).abs() < 0.02, "{mc_intra}");
        assert!((mc_inter / base.expected_inter_variance() - 1.0).abs() < 0.10, "{mc_inter}");

        let nominal_intra = base.feature_dim as f64 * (base.intra_var + base.noise_var);
        for (intra, inter) in measured {
            assert!((intra / nominal_intra - 1.0).abs() <= 0.15, "intra {intra}");
            assert!((inter / base.expected_inter_variance() - 1.0).abs() <= 0.25, "inter {inter}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SyntheticConfig {
            intra_var: -1.0,
            ..SyntheticConfig::default()
        };
        assert!(generate(&cfg).is_err());
        let cfg = SyntheticConfig {
            feature_dim: 0,
            ..SyntheticConfig::default()
        };
        assert!(generate(&cfg).is_err());
    }
}
