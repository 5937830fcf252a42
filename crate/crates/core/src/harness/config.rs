use std::path::Path;

use serde::{Deserialize, Serialize};

use super::noise::NoiseModel;
use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, DEFAULT_TAU};
use crate::manifold::{ManifoldKind, SpectralManifold};

/// One value or a grid of values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrGrid {
    One(f64),
    Grid(Vec<f64>),
}

impl OneOrGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrGrid::One(v) => vec![*v],
            OneOrGrid::Grid(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelConfig {
    Bandlimited {
        omega: OneOrGrid,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau: Option<f64>,
    },
    /// `omega` sets the spectral cutoff used by the heat bound and by
    /// `alpha: "auto"`; it defaults to `√(m/t)`.
    Heat {
        t: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        omega: Option<OneOrGrid>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau: Option<f64>,
    },
    Sobolev {
        s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau: Option<f64>,
    },
}

impl KernelConfig {
    pub fn tau(&self) -> f64 {
        match self {
            KernelConfig::Bandlimited { tau, .. }
            | KernelConfig::Heat { tau, .. }
            | KernelConfig::Sobolev { tau, .. } => tau.unwrap_or(DEFAULT_TAU),
        }
    }

    pub fn set_tau(&mut self, value: f64) {
        match self {
            KernelConfig::Bandlimited { tau, .. }
            | KernelConfig::Heat { tau, .. }
            | KernelConfig::Sobolev { tau, .. } => *tau = Some(value),
        }
    }

    /// The kernel family at a given grid value of `omega`.
    pub fn family(&self, omega: Option<f64>) -> KernelFamily {
        match self {
            KernelConfig::Bandlimited { omega: grid, .. } => {
                KernelFamily::Bandlimited { omega: omega.unwrap_or_else(|| grid.values()[0]) }
            }
            KernelConfig::Heat { t, .. } => KernelFamily::Heat { t: *t },
            KernelConfig::Sobolev { s, .. } => KernelFamily::Sobolev { s: *s },
        }
    }

    /// Grid of spectral cutoffs; empty for Sobolev kernels.
    pub fn omega_grid(&self, manifold: &SpectralManifold) -> Vec<f64> {
        match self {
            KernelConfig::Bandlimited { omega, .. } => omega.values(),
            KernelConfig::Heat { t, omega, .. } => match omega {
                Some(o) => o.values(),
                None => vec![(manifold.dim() as f64 / t).sqrt()],
            },
            KernelConfig::Sobolev { .. } => Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetPreset {
    /// Gaussian coefficients on every function in the band, scaled to unit
    /// RMS.
    RandomInband,
    /// The last basis function in the band, at unit RMS.
    SingleMode,
    /// Gaussian coefficients damped by `e^{-λt/2}`, scaled to unit RMS.
    HeatSmooth,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetConfig {
    Preset(TargetPreset),
    Explicit { lambda_max: f64, coeffs: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaKeyword {
    /// The smallest value the heat bound allows, `54 e^{-Ω²t/2}/vol`.
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaConfig {
    Value(f64),
    Keyword(AlphaKeyword),
}

impl Default for AlphaConfig {
    fn default() -> Self {
        AlphaConfig::Value(0.0)
    }
}

fn default_target() -> TargetConfig {
    TargetConfig::Preset(TargetPreset::RandomInband)
}

fn default_delta() -> f64 {
    0.05
}

fn default_trials() -> usize {
    200
}

mod manifold_name {
    use super::ManifoldKind;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(kind: &ManifoldKind, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(kind)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ManifoldKind, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(with = "manifold_name")]
    pub manifold: ManifoldKind,
    pub kernel: KernelConfig,
    #[serde(default = "default_target")]
    pub target: TargetConfig,
    #[serde(default)]
    pub alpha: AlphaConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn manifold(&self) -> Result<SpectralManifold> {
        SpectralManifold::new(self.manifold).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn n_values(&self) -> Vec<usize> {
        match (&self.n, &self.n_grid) {
            (Some(n), _) => vec![*n],
            (None, Some(g)) => g.clone(),
            (None, None) => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let manifold = self.manifold()?;
        match (&self.n, &self.n_grid) {
            (Some(_), Some(_)) => return bad("give either n or n_grid, not both".into()),
            (None, None) => return bad("one of n or n_grid is required".into()),
            _ => {}
        }
        let ns = self.n_values();
        if ns.is_empty() || ns.contains(&0) {
            return bad("sample sizes must be a nonempty list of positive integers".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} must lie in (0, 1)", self.delta));
        }
        self.noise.validate()?;
        let tau = self.kernel.tau();
        if !(tau > 0.0 && tau < 1.0) {
            return bad(format!("kernel tau = {tau} must lie in (0, 1)"));
        }
        let omegas = self.kernel.omega_grid(&manifold);
        if let KernelConfig::Bandlimited { .. } | KernelConfig::Heat { omega: Some(_), .. } = self.kernel {
            if omegas.is_empty() || omegas.iter().any(|o| !(*o > 0.0 && o.is_finite())) {
                return bad("omega must be a positive number or a nonempty list of them".into());
            }
        }
        for o in omegas.iter().map(|o| Some(*o)).chain(std::iter::once(None)) {
            self.kernel.family(o).validate(&manifold).map_err(|e| Error::Config(e.to_string()))?;
        }
        match self.alpha {
            AlphaConfig::Value(a) if !(a >= 0.0 && a.is_finite()) => {
                return bad(format!("alpha = {a} must be finite and nonnegative"));
            }
            AlphaConfig::Keyword(AlphaKeyword::Auto) if matches!(self.kernel, KernelConfig::Sobolev { .. }) => {
                return bad("alpha \"auto\" is defined for bandlimited and heat kernels only".into());
            }
            _ => {}
        }
        if let TargetConfig::Explicit { lambda_max, coeffs } = &self.target {
            let expected = manifold.function_count(*lambda_max).map_err(|e| Error::Config(e.to_string()))?;
            if coeffs.len() != expected {
                return bad(format!(
                    "explicit target up to lambda = {lambda_max} needs {expected} coefficients, got {}",
                    coeffs.len()
                ));
            }
            if coeffs.iter().any(|c| !c.is_finite()) {
                return bad("explicit target has a non-finite coefficient".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EXAMPLE: &str = r#"{
        "manifold": "circle",
        "kernel": {"family": "bandlimited", "omega": 2.5},
        "target": "random-inband",
        "alpha": 0,
        "n_grid": [500, 1000],
        "noise": {"family": "gaussian", "sigma": 0.1},
        "delta": 0.05,
        "trials": 50,
        "seed": 42,
        "out": "rate.csv"
    }"#;

    #[test]
    fn parses_example() {
        let cfg = ExperimentConfig::from_json(EXAMPLE).unwrap();
        assert_eq!(cfg.manifold, ManifoldKind::Circle);
        assert_eq!(cfg.n_values(), vec![500, 1000]);
        assert_eq!(cfg.noise, NoiseModel::Gaussian { sigma: 0.1 });
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn defaults_and_extensions() {
        let cfg = ExperimentConfig::from_json(
            r#"{"manifold":"sphere2","kernel":{"family":"heat","t":0.5,"omega":[2,3]},"alpha":"auto","n":100}"#,
        )
        .unwrap();
        assert_eq!(cfg.delta, 0.05);
        assert_eq!(cfg.trials, 200);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.alpha, AlphaConfig::Keyword(AlphaKeyword::Auto));
        assert_eq!(cfg.kernel.omega_grid(&cfg.manifold().unwrap()), vec![2.0, 3.0]);
        let explicit = r#"{"manifold":"circle","kernel":{"family":"heat","t":1},"target":{"lambda_max":1,"coeffs":[0,1,0]},"n":5}"#;
        assert!(ExperimentConfig::from_json(explicit).is_ok());
    }

    #[test]
    fn rejects_invalid() {
        let cases = [
            r#"{"manifold":"circle","kernel":{"family":"bandlimited","omega":2},"n":10,"bogus":1}"#,
            r#"{"manifold":"torus7","kernel":{"family":"heat","t":1},"n":10}"#,
            r#"{"manifold":"circle","kernel":{"family":"heat","t":1}}"#,
            r#"{"manifold":"circle","kernel":{"family":"heat","t":1},"n":10,"n_grid":[5]}"#,
            r#"{"manifold":"circle","kernel":{"family":"heat","t":-1},"n":10}"#,
            r#"{"manifold":"sphere2","kernel":{"family":"sobolev","s":1},"n":10}"#,
            r#"{"manifold":"circle","kernel":{"family":"heat","t":1},"n":10,"delta":1.5}"#,
            r#"{"manifold":"circle","kernel":{"family":"heat","t":1},"n":10,"alpha":-1}"#,
            r#"{"manifold":"circle","kernel":{"family":"sobolev","s":2},"n":10,"alpha":"auto"}"#,
            r#"{"manifold":"circle","kernel":{"family":"heat","t":1},"n":10,"target":{"lambda_max":1,"coeffs":[1]}}"#,
            r#"{"manifold":"circle","kernel":{"family":"bandlimited","omega":[]},"n":10}"#,
        ];
        for c in cases {
            assert!(matches!(ExperimentConfig::from_json(c), Err(Error::Config(_))), "{c}");
        }
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![1e-6..1e3f64, Just(0.1), Just(1.0 / 3.0)]
    }

    fn kernel() -> impl Strategy<Value = KernelConfig> {
        let tau = proptest::option::of(1e-14..1e-3f64);
        prop_oneof![
            (
                prop_oneof![
                    finite().prop_map(OneOrGrid::One),
                    proptest::collection::vec(finite(), 1..4).prop_map(OneOrGrid::Grid)
                ],
                tau.clone()
            )
                .prop_map(|(omega, tau)| KernelConfig::Bandlimited { omega, tau }),
            (finite(), proptest::option::of(finite().prop_map(OneOrGrid::One)), tau.clone())
                .prop_map(|(t, omega, tau)| KernelConfig::Heat { t, omega, tau }),
            (finite(), tau).prop_map(|(s, tau)| KernelConfig::Sobolev { s, tau }),
        ]
    }

    fn config() -> impl Strategy<Value = ExperimentConfig> {
        let manifold = prop_oneof![
            Just(ManifoldKind::Circle),
            Just(ManifoldKind::Sphere2),
            Just(ManifoldKind::Sphere3),
            (1u32..=4).prop_map(ManifoldKind::Torus),
        ];
        let target = prop_oneof![
            Just(TargetConfig::Preset(TargetPreset::RandomInband)),
            Just(TargetConfig::Preset(TargetPreset::HeatSmooth)),
            Just(TargetConfig::Preset(TargetPreset::SingleMode)),
            (finite(), proptest::collection::vec(-1e3..1e3f64, 0..6))
                .prop_map(|(lambda_max, coeffs)| TargetConfig::Explicit { lambda_max, coeffs }),
        ];
        let alpha = prop_oneof![finite().prop_map(AlphaConfig::Value), Just(AlphaConfig::Keyword(AlphaKeyword::Auto))];
        let noise = prop_oneof![
            Just(NoiseModel::None),
            finite().prop_map(|sigma| NoiseModel::Gaussian { sigma }),
            finite().prop_map(|sigma| NoiseModel::Laplace { sigma }),
        ];
        let sizes = prop_oneof![
            (1usize..100_000).prop_map(|n| (Some(n), None)),
            proptest::collection::vec(1usize..100_000, 1..5).prop_map(|g| (None, Some(g))),
        ];
        (
            manifold,
            kernel(),
            target,
            alpha,
            sizes,
            noise,
            (1e-4..0.9999f64),
            1usize..1000,
            any::<u64>(),
            proptest::option::of("[a-z]{1,8}\\.csv"),
        )
            .prop_map(|(manifold, kernel, target, alpha, (n, n_grid), noise, delta, trials, seed, out)| {
                ExperimentConfig { manifold, kernel, target, alpha, n, n_grid, noise, delta, trials, seed, out }
            })
    }

    proptest! {
        #[test]
        fn round_trip(cfg in config()) {
            let text = serde_json::to_string(&cfg).unwrap();
            let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
