use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grounding::SemanticEncoder;
use crate::kb::KbParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fsl,
    Gzsl,
}

/// Grounding of `isOfClass` used in the knowledge base.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredicateKind {
    Distance,
    Relation,
}

/// `N`-way `K`-shot episodes with up to `nQuery` queries per class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EpisodeConfig {
    pub n_way: usize,
    pub k_shot: usize,
    pub n_query: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            n_way: 5,
            k_shot: 5,
            n_query: 15,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_way < 2 || self.k_shot < 1 || self.n_query < 1 {
            return Err(Error::contract(format!(
                "episodes need nWay >= 2, kShot >= 1, nQuery >= 1; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Every knob of a training run. Serialized form is the resolved config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Scale of the distance predicate `exp(-alpha d^2)`.
    pub alpha: f64,
    /// L2 weight on regularized parameters.
    pub lambda: f64,
    pub p_agg: f64,
    pub p_forall: f64,
    pub w_neg: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: Mode,
    /// Hidden width of the semantic encoder (GZSL) or of `f_theta` (FSL with `embedDim`).
    pub hidden_width: usize,
    pub init_stddev: f64,
    pub predicate: PredicateKind,
    pub relation_hidden: usize,
    /// FSL only: episodes per epoch.
    pub episodes_per_epoch: usize,
    /// FSL only: output width of a learned `f_theta`; `None` uses an
    /// identity-initialized linear map.
    pub embed_dim: Option<usize>,
    pub episode: EpisodeConfig,
    /// Evaluate on a held-out slice every epoch.
    pub validate: bool,
    /// Fraction of GZSL train instances held out when `validate` is set.
    pub validation_fraction: f64,
    pub normalize_attributes: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::tuned(1e-4, 1e-5, 1e-3)
    }
}

pub const PRESET_NAMES: [&str; 5] = ["awa2", "cub", "apy", "sun", "synthetic"];

impl TrainConfig {
    fn tuned(learning_rate: f64, alpha: f64, lambda: f64) -> Self {
        TrainConfig {
            learning_rate,
            alpha,
            lambda,
            p_agg: 1.0,
            p_forall: 2.0,
            w_neg: 0.0,
            epochs: 30,
            batch_size: 64,
            seed: 0,
            mode: Mode::Gzsl,
            hidden_width: SemanticEncoder::DEFAULT_HIDDEN,
            init_stddev: crate::diffcore::DEFAULT_INIT_STDDEV,
            predicate: PredicateKind::Distance,
            relation_hidden: 64,
            episodes_per_epoch: 100,
            embed_dim: None,
            episode: EpisodeConfig::default(),
            validate: false,
            validation_fraction: 0.2,
            normalize_attributes: false,
        }
    }

    /// Named hyperparameter sets. `synthetic` is sized for
    /// [`crate::datasets::generate_synthetic`] defaults.
    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "awa2" => TrainConfig::tuned(1e-4, 1e-5, 1e-3),
            "cub" => TrainConfig::tuned(1e-4, 1e-4, 1e-3),
            "apy" | "sun" => TrainConfig::tuned(1e-3, 1e-5, 1e-5),
            "synthetic" => TrainConfig {
                hidden_width: 256,
                ..TrainConfig::tuned(3e-3, 0.1, 1e-3)
            },
            other => {
                return Err(Error::contract(format!(
                    "unknown preset '{other}', expected one of {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        })
    }

    pub fn kb_params(&self) -> KbParams {
        KbParams {
            p_agg: self.p_agg,
            p_forall: self.p_forall,
            w_neg: self.w_neg,
        }
    }

    /// Overlays the keys of a JSON object onto this config. Unknown keys are errors.
    pub fn merged_with(&self, overlay: &serde_json::Value) -> Result<Self> {
        let mut base = serde_json::to_value(self)?;
        merge(&mut base, overlay);
        Ok(serde_json::from_value(base)?)
    }

    /// `learningRate = 0` is accepted so a run can freeze its parameters.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::contract(msg));
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learningRate must be >= 0, got {}", self.learning_rate));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.epochs < 1 || self.batch_size < 1 || self.episodes_per_epoch < 1 {
            return bad("epochs, batchSize and episodesPerEpoch must be >= 1".into());
        }
        if self.hidden_width < 1 || self.relation_hidden < 1 || self.embed_dim == Some(0) {
            return bad("layer widths must be >= 1".into());
        }
        if !(self.init_stddev > 0.0) {
            return bad(format!("initStddev must be > 0, got {}", self.init_stddev));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!("validationFraction must be in [0, 1), got {}", self.validation_fraction));
        }
        self.kb_params().validate()?;
        if self.mode == Mode::Fsl {
            self.episode.validate()?;
        }
        Ok(())
    }
}

fn merge(base: &mut serde_json::Value, overlay: &serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_presets() {
        let cases = [
            ("awa2", 1e-4, 1e-5, 1e-3),
            ("cub", 1e-4, 1e-4, 1e-3),
            ("apy", 1e-3, 1e-5, 1e-5),
            ("sun", 1e-3, 1e-5, 1e-5),
        ];
        for (name, lr, alpha, lambda) in cases {
            let c = TrainConfig::preset(name).unwrap();
            assert_eq!((c.learning_rate, c.alpha, c.lambda), (lr, alpha, lambda), "{name}");
            assert_eq!((c.p_agg, c.p_forall, c.epochs, c.batch_size), (1.0, 2.0, 30, 64));
            c.validate().unwrap();
        }
        assert!(TrainConfig::preset("imagenet").is_err());
        TrainConfig::preset("synthetic").unwrap().validate().unwrap();
    }

    #[test]
    fn overlay_and_unknown_keys() {
        let base = TrainConfig::preset("cub").unwrap();
        let c = base
            .merged_with(&serde_json::json!({"epochs": 3, "episode": {"nWay": 2}}))
            .unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.episode.n_way, 2);
        assert_eq!(c.episode.k_shot, 5);
        assert_eq!(c.alpha, 1e-4);
        assert!(base.merged_with(&serde_json::json!({"epoch": 3})).is_err());
        assert!(base.merged_with(&serde_json::json!({"episode": {"ways": 3}})).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let c = TrainConfig::preset("synthetic").unwrap();
        let back: TrainConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_invalid() {
        let ok = TrainConfig::default();
        for bad in [
            TrainConfig { epochs: 0, ..ok.clone() },
            TrainConfig { batch_size: 0, ..ok.clone() },
            TrainConfig { learning_rate: -1.0, ..ok.clone() },
            TrainConfig { alpha: 0.0, ..ok.clone() },
            TrainConfig { p_forall: 0.5, ..ok.clone() },
            TrainConfig { mode: Mode::Fsl, episode: EpisodeConfig { n_way: 1, k_shot: 1, n_query: 1 }, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        TrainConfig { learning_rate: 0.0, ..ok }.validate().unwrap();
    }
}
