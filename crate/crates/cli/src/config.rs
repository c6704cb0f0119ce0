//! Run configuration: a JSON file whose fields any command-line flag overrides.

use std::path::{Path, PathBuf};

use msood::fixtures::FixtureSpec;
use msood::frameworks::FrameworkKind;
use msood::pipeline::ScoreConfig;
use msood::reporting::DEFAULT_BINS;
use msood::scoring::{Method, MethodParams};
use msood::vim::Centering;
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub bundle: Option<PathBuf>,
    pub methods: Option<Vec<String>>,
    pub frameworks: Option<Vec<FrameworkKind>>,
    pub target_tpr: Option<f64>,
    pub energy_temperature: Option<f64>,
    pub odin_temperature: Option<f64>,
    pub vim_principal_dim: Option<usize>,
    pub vim_centering: Option<Centering>,
    pub bins: Option<usize>,
    pub k: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub scores_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub fixture: Option<FixtureSpec>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: invalid run config: {e}", path.display()))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("msood-out"))
    }

    pub fn scores_dir(&self) -> PathBuf {
        self.scores_dir.clone().unwrap_or_else(|| self.output_dir().join("scores"))
    }

    pub fn bundle(&self) -> Result<&Path, String> {
        self.bundle.as_deref().ok_or_else(|| "no bundle given (pass BUNDLE or set \"bundle\" in the config)".into())
    }

    pub fn target_tpr(&self) -> Result<f64, String> {
        let t = self.target_tpr.unwrap_or(msood::metrics::DEFAULT_TARGET_TPR);
        if t > 0.0 && t <= 1.0 {
            Ok(t)
        } else {
            Err(format!("target_tpr must lie in (0, 1], got {t}"))
        }
    }

    pub fn bins(&self) -> Result<usize, String> {
        match self.bins.unwrap_or(DEFAULT_BINS) {
            b if b >= 2 => Ok(b),
            b => Err(format!("bins must be >= 2, got {b}")),
        }
    }

    pub fn frameworks(&self) -> Result<Vec<FrameworkKind>, String> {
        match &self.frameworks {
            Some(f) if f.is_empty() => Err("framework list is empty".into()),
            Some(f) => Ok(f.clone()),
            None => Ok(vec![FrameworkKind::Msood]),
        }
    }

    pub fn methods(&self) -> Result<Vec<Method>, String> {
        let names = self.methods.clone().unwrap_or_else(|| vec!["all".into()]);
        if names.is_empty() {
            return Err("method list is empty".into());
        }
        let mut out = Vec::new();
        for name in names {
            let parsed = if name == "all" { Method::ALL.to_vec() } else { vec![name.parse::<Method>()?] };
            for m in parsed {
                if !out.contains(&m) {
                    out.push(m);
                }
            }
        }
        Ok(out)
    }

    pub fn score_config(&self) -> Result<ScoreConfig, String> {
        let defaults = MethodParams::default();
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(format!("{name} must be finite and > 0, got {v}"))
            }
        };
        if self.vim_principal_dim == Some(0) {
            return Err("vim_principal_dim must be > 0".into());
        }
        Ok(ScoreConfig {
            methods: self.methods()?,
            energy_temperature: positive(
                "energy_temperature",
                self.energy_temperature.unwrap_or(defaults.energy_temperature),
            )?,
            odin_temperature: positive("odin_temperature", self.odin_temperature.unwrap_or(defaults.odin_temperature))?,
            vim_principal_dim: self.vim_principal_dim,
            vim_centering: self.vim_centering.unwrap_or_default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let c = RunConfig::default();
        assert_eq!(c.target_tpr().unwrap(), 0.95);
        assert_eq!(c.methods().unwrap(), Method::ALL.to_vec());
        assert_eq!(c.frameworks().unwrap(), vec![FrameworkKind::Msood]);
        assert_eq!(c.score_config().unwrap().odin_temperature, 1000.0);

        let bad = RunConfig { target_tpr: Some(0.0), energy_temperature: Some(-1.0), ..Default::default() };
        assert!(bad.target_tpr().is_err());
        assert!(bad.score_config().is_err());
        let unknown = RunConfig { methods: Some(vec!["react".into()]), ..Default::default() };
        assert!(unknown.methods().is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"target_tpr": 0.9}"#).is_ok());
        assert!(serde_json::from_str::<RunConfig>(r#"{"taget_tpr": 0.9}"#).is_err());
    }
}
