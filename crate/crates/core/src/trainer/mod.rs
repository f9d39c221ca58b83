//! Training loops for GZSL and few-shot learning, plus the optimizer.
//!
//! Both loops minimize `episodeLoss + lambda * sum ||w||^2` with Adam. A GZSL
//! step embeds a batch of seen-class training features (identity `f_theta`)
//! and scores it against prototypes of every seen class. A few-shot step
//! samples an episode and builds prototypes from its support set.
//!
//! Randomness comes from one `ChaCha8Rng` seeded with `TrainConfig::seed`,
//! consumed in this order: parameter init, validation split, then per-epoch
//! shuffles (GZSL) or episode draws (FSL).

mod adam;
pub mod checkpoint;
mod config;
mod episode;
mod log;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adam::{adam_step, OptimizerState, BETA1, BETA2, EPSILON};
pub use config::{EpisodeConfig, Mode, PredicateKind, TrainConfig, PRESET_NAMES};
pub use episode::{sample_episode, Episode, LabeledSet};
pub use log::{EpochRecord, TrainingLog, LOG_HEADER};

use crate::datasets::SplitDataset;
use crate::diffcore::{Parameter, Tape, Var};
use crate::error::{Error, Result};
use crate::grounding::{
    get_embedding, get_prototypes_fsl, get_prototypes_zsl, Activation, BoundEmbedding, BoundMlp, Dense,
    EmbeddingFunction, Mlp, Prototypes, SemanticEncoder,
};
use crate::kb::{best_sat_objective, episode_loss, KnowledgeBase, Predicate};
use crate::metrics::{episode_accuracy, gzsl_evaluate_with, per_class_top1, predict_with, GzslReport, Scorer};
use log::EpochAccumulator;

/// Episodes drawn for FSL validation after every epoch.
const FSL_VALIDATION_EPISODES: usize = 20;

/// Everything a trained run needs at inference time.
///
/// Parameter prefixes: `f.` query embedding, `g.` semantic encoder, `r.`
/// relation head. Hidden layers use ReLU; the last layer of `f` and `r` is
/// linear, every layer of `g` is ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub embedding: EmbeddingFunction,
    pub encoder: Option<SemanticEncoder>,
    pub relation: Option<Mlp>,
}

impl Model {
    pub fn mode(&self) -> Mode {
        if self.encoder.is_some() {
            Mode::Gzsl
        } else {
            Mode::Fsl
        }
    }

    pub fn scorer(&self) -> Scorer<'_> {
        match &self.relation {
            Some(r) => Scorer::Relation(r),
            None => Scorer::Distance,
        }
    }

    fn mlps(&self) -> Vec<&Mlp> {
        let mut out = Vec::new();
        if let EmbeddingFunction::Network(f) = &self.embedding {
            out.push(f);
        }
        out.extend(self.encoder.as_ref().map(|e| e.mlp()));
        out.extend(self.relation.as_ref());
        out
    }

    /// `f`, then `g`, then `r`; weight before bias within each layer.
    pub fn parameters(&self) -> Vec<&Parameter> {
        self.mlps().into_iter().flat_map(|m| m.parameters()).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        if let EmbeddingFunction::Network(f) = &mut self.embedding {
            out.extend(f.parameters_mut());
        }
        if let Some(e) = &mut self.encoder {
            out.extend(e.mlp_mut().parameters_mut());
        }
        if let Some(r) = &mut self.relation {
            out.extend(r.parameters_mut());
        }
        out
    }

    fn bind<'t>(&self, tape: &'t Tape) -> BoundModel<'t> {
        BoundModel {
            f: self.embedding.bind(tape),
            g: self.encoder.as_ref().map(|e| e.mlp().bind(tape)),
            r: self.relation.as_ref().map(|r| r.bind(tape)),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::write_checkpoint(path, &self.parameters())
    }

    pub fn load(path: &Path) -> Result<Model> {
        Model::from_parameters(checkpoint::read_checkpoint(path)?)
    }

    /// Rebuilds the networks from `{prefix}.layer{i}.{weight,bias}` parameters.
    pub fn from_parameters(params: Vec<Parameter>) -> Result<Model> {
        let mut groups: BTreeMap<String, BTreeMap<usize, [Option<Parameter>; 2]>> = BTreeMap::new();
        for p in params {
            let parts: Vec<&str> = p.name.split('.').collect();
            let layer = match parts.as_slice() {
                [_, layer, "weight" | "bias"] => layer.strip_prefix("layer").and_then(|i| i.parse::<usize>().ok()),
                _ => None,
            };
            let layer = layer.ok_or_else(|| Error::Checkpoint(format!("unexpected parameter '{}'", p.name)))?;
            let prefix = parts[0].to_string();
            let slot = usize::from(parts[2] == "bias");
            let entry = groups.entry(prefix).or_default().entry(layer).or_default();
            if entry[slot].replace(p).is_some() {
                return Err(Error::Checkpoint("duplicate parameter".into()));
            }
        }
        let mut build = |prefix: &str, last: Activation| -> Result<Option<Mlp>> {
            let Some(layers) = groups.remove(prefix) else {
                return Ok(None);
            };
            let n = layers.len();
            if layers.keys().copied().ne(1..=n) {
                return Err(Error::Checkpoint(format!("'{prefix}' layers are not numbered 1..{n}")));
            }
            let dense = layers
                .into_values()
                .enumerate()
                .map(|(i, [w, b])| {
                    let (w, b) = w.zip(b).ok_or_else(|| Error::Checkpoint(format!("'{prefix}' layer {} is incomplete", i + 1)))?;
                    let act = if i + 1 == n { last } else { Activation::Relu };
                    Dense::new(w, b, act).map_err(|e| Error::Checkpoint(e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?;
            Mlp::new(dense).map(Some).map_err(|e| Error::Checkpoint(e.to_string()))
        };
        let f = build("f", Activation::Identity)?;
        let g = build("g", Activation::Relu)?;
        let r = build("r", Activation::Identity)?;
        if let Some(extra) = groups.keys().next() {
            return Err(Error::Checkpoint(format!("unknown parameter prefix '{extra}'")));
        }
        let encoder = g.map(SemanticEncoder::from_mlp).transpose()?;
        if encoder.is_none() && f.is_none() {
            return Err(Error::Checkpoint("no 'f' or 'g' parameters".into()));
        }
        Ok(Model {
            embedding: f.map_or(EmbeddingFunction::Identity, EmbeddingFunction::Network),
            encoder,
            relation: r,
        })
    }

    fn check_dims(&self, ds: &SplitDataset) -> Result<&SemanticEncoder> {
        let enc = self
            .encoder
            .as_ref()
            .ok_or_else(|| Error::contract("model has no semantic encoder"))?;
        let embed_in = match &self.embedding {
            EmbeddingFunction::Identity => enc.embed_dim(),
            EmbeddingFunction::Network(f) => f.input_dim(),
        };
        if enc.attr_dim() != ds.attr_dim() || embed_in != ds.feature_dim() {
            return Err(Error::dim(format!(
                "model expects {} attributes and {} features, dataset has {} and {}",
                enc.attr_dim(),
                embed_in,
                ds.attr_dim(),
                ds.feature_dim()
            )));
        }
        Ok(enc)
    }

    /// Prototypes of every class in `ds`.
    pub fn class_prototypes(&self, ds: &SplitDataset) -> Result<Prototypes> {
        self.check_dims(ds)?.prototypes(&ds.class_attributes, &ds.all_classes())
    }

    pub fn evaluate_gzsl(&self, ds: &SplitDataset) -> Result<GzslReport> {
        let enc = self.check_dims(ds)?;
        gzsl_evaluate_with(ds, &self.embedding, enc, self.scorer())
    }
}

struct BoundModel<'t> {
    f: BoundEmbedding<'t>,
    g: Option<BoundMlp<'t>>,
    r: Option<BoundMlp<'t>>,
}

impl<'t> BoundModel<'t> {
    fn mlps(&self) -> Vec<&BoundMlp<'t>> {
        let mut out = Vec::new();
        if let BoundEmbedding::Network(f) = &self.f {
            out.push(f);
        }
        out.extend(self.g.as_ref());
        out.extend(self.r.as_ref());
        out
    }

    fn param_vars(&self) -> Vec<Var<'t>> {
        self.mlps().into_iter().flat_map(|m| m.param_vars()).collect()
    }

    fn regularized_vars(&self) -> Vec<Var<'t>> {
        self.mlps().into_iter().flat_map(|m| m.regularized_vars()).collect()
    }

    fn predicate(&self, alpha: f64) -> Predicate<'_, 't> {
        match &self.r {
            Some(r) => Predicate::Relation(r),
            None => Predicate::Distance { alpha },
        }
    }
}

/// One forward, backward and Adam update. `build` grounds the knowledge base.
fn optimize<F>(model: &mut Model, state: &mut OptimizerState, cfg: &TrainConfig, acc: &mut EpochAccumulator, build: F) -> Result<()>
where
    F: for<'t> FnOnce(&'t Tape, &BoundModel<'t>) -> Result<KnowledgeBase<'t>>,
{
    let tape = Tape::new();
    let bound = model.bind(&tape);
    let kb = build(&tape, &bound)?;
    let loss = episode_loss(&kb)?;
    let objective = best_sat_objective(loss, &bound.regularized_vars(), cfg.lambda)?;
    let grads = tape.backward(objective)?;
    let grads: Vec<_> = bound.param_vars().into_iter().map(|v| grads.wrt(v)).collect();
    acc.add(loss.item()?, objective.item()?, kb.aff.item(), kb.neg.map(|t| t.item()));
    adam_step(&mut model.parameters_mut(), &grads, state, cfg.learning_rate)
}

fn relation_head(embed_dim: usize, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Option<Mlp>> {
    match cfg.predicate {
        PredicateKind::Distance => Ok(None),
        PredicateKind::Relation => Mlp::init(
            "r",
            &[2 * embed_dim, cfg.relation_hidden, 1],
            &[Activation::Relu, Activation::Identity],
            cfg.init_stddev,
            rng,
        )
        .map(Some),
    }
}

/// Trains `g_theta` (and the relation head, if configured) on the seen classes.
pub fn train_gzsl(dataset: &SplitDataset, cfg: &TrainConfig) -> Result<(Model, TrainingLog)> {
    cfg.validate()?;
    let mut owned;
    let ds = if cfg.normalize_attributes {
        owned = dataset.clone();
        owned.normalize_attributes();
        &owned
    } else {
        dataset
    };
    if ds.train_idx.is_empty() {
        return Err(Error::contract("dataset has no training instances"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let encoder = SemanticEncoder::init(ds.attr_dim(), cfg.hidden_width, ds.feature_dim(), cfg.init_stddev, &mut rng)?;
    let relation = relation_head(ds.feature_dim(), cfg, &mut rng)?;
    let mut model = Model {
        embedding: EmbeddingFunction::Identity,
        encoder: Some(encoder),
        relation,
    };
    let mut state = OptimizerState::new(model.parameters());

    let mut train_rows = ds.train_idx.clone();
    let mut val_rows = Vec::new();
    if cfg.validate {
        train_rows.shuffle(&mut rng);
        let n_val = ((train_rows.len() as f64) * cfg.validation_fraction).round() as usize;
        let n_val = n_val.min(train_rows.len() - 1).max(1);
        val_rows = train_rows.split_off(train_rows.len() - n_val);
        train_rows.sort_unstable();
    }
    let seen_attrs = ds.attributes_of(&ds.seen)?;
    let params = cfg.kb_params();

    let mut log = TrainingLog::default();
    for epoch in 1..=cfg.epochs {
        let mut acc = EpochAccumulator::default();
        let mut order = train_rows.clone();
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (x, labels) = ds.subset(batch)?;
            let queries = LabeledSet::new(x, labels)?;
            optimize(&mut model, &mut state, cfg, &mut acc, |tape, m| {
                let g = m.g.as_ref().expect("GZSL model has an encoder");
                let qe = get_embedding(&queries.ground(tape, "q")?, &m.f)?;
                let protos = get_prototypes_zsl(tape.constant(seen_attrs.clone()), &ds.seen, g)?;
                KnowledgeBase::ground(&qe, &protos, m.predicate(cfg.alpha), params)
            })?;
        }
        let val = if cfg.validate {
            let enc = model.encoder.as_ref().expect("GZSL model has an encoder");
            let protos = enc.prototypes(&seen_attrs, &ds.seen)?;
            let (x, y) = ds.subset(&val_rows)?;
            let pred = predict_with(&model.embedding.embed_tensor(&x)?, &protos, model.scorer())?;
            Some(per_class_top1(&pred, &y, &ds.seen)?)
        } else {
            None
        };
        log.records.push(acc.finish(epoch, val));
    }
    Ok((model, log))
}

/// Few-shot training from a fresh `f_theta`.
pub fn train_fsl(train: &LabeledSet, ep: &EpisodeConfig, cfg: &TrainConfig) -> Result<(Model, TrainingLog)> {
    cfg.validate()?;
    ep.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = train.features.cols();
    let f = match cfg.embed_dim {
        None => Mlp::identity("f", d)?,
        Some(m) => Mlp::init("f", &[d, cfg.hidden_width, m], &[Activation::Relu, Activation::Identity], cfg.init_stddev, &mut rng)?,
    };
    let relation = relation_head(f.output_dim(), cfg, &mut rng)?;
    let model = Model {
        embedding: EmbeddingFunction::Network(f),
        encoder: None,
        relation,
    };
    train_fsl_from(model, train, ep, cfg, &mut rng)
}

/// Few-shot training continuing from `model`, drawing episodes from `rng`.
pub fn train_fsl_from(
    mut model: Model,
    train: &LabeledSet,
    ep: &EpisodeConfig,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Model, TrainingLog)> {
    cfg.validate()?;
    if model.encoder.is_some() {
        return Err(Error::contract("few-shot training takes a model without a semantic encoder"));
    }
    let mut state = OptimizerState::new(model.parameters());
    let params = cfg.kb_params();
    let mut log = TrainingLog::default();
    for epoch in 1..=cfg.epochs {
        let mut acc = EpochAccumulator::default();
        for _ in 0..cfg.episodes_per_epoch {
            let episode = sample_episode(train, ep, rng)?;
            optimize(&mut model, &mut state, cfg, &mut acc, |tape, m| {
                let s = episode.support.ground(tape, "s")?;
                let protos = get_prototypes_fsl(&s, &m.f)?;
                let qe = get_embedding(&episode.query.ground(tape, "q")?, &m.f)?;
                KnowledgeBase::ground(&qe, &protos, m.predicate(cfg.alpha), params)
            })?;
        }
        let val = if cfg.validate {
            let mut vrng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
            let mut total = 0.0;
            for _ in 0..FSL_VALIDATION_EPISODES {
                let e = sample_episode(train, ep, &mut vrng)?;
                total += episode_accuracy(
                    &model.embedding,
                    (&e.support.features, &e.support.labels),
                    (&e.query.features, &e.query.labels),
                    model.scorer(),
                )?;
            }
            Some(total / FSL_VALIDATION_EPISODES as f64)
        } else {
            None
        };
        log.records.push(acc.finish(epoch, val));
    }
    Ok((model, log))
}

/// Runs the loop selected by `cfg.mode`. FSL draws episodes from the train split.
pub fn train(ds: &SplitDataset, cfg: &TrainConfig) -> Result<(Model, TrainingLog)> {
    match cfg.mode {
        Mode::Gzsl => train_gzsl(ds, cfg),
        Mode::Fsl => {
            let (x, y) = ds.subset(&ds.train_idx)?;
            train_fsl(&LabeledSet::new(x, y)?, &cfg.episode, cfg)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_synthetic, SynthConfig};
    use crate::diffcore::Tensor;
    use rand_distr::{Distribution, Normal};

    fn small_synth(noise: f64) -> SplitDataset {
        generate_synthetic(&SynthConfig {
            num_seen: 4,
            num_unseen: 2,
            attr_dim: 6,
            feat_dim: 8,
            per_class: 12,
            noise,
            seed: 3,
        })
        .unwrap()
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 8,
            batch_size: 16,
            hidden_width: 32,
            seed: 11,
            ..TrainConfig::preset("synthetic").unwrap()
        }
    }

    #[test]
    fn gzsl_loss_decreases() {
        let (_, log) = train_gzsl(&small_synth(0.01), &quick_cfg()).unwrap();
        let (first, last) = (log.first().unwrap(), log.last().unwrap());
        assert!(last.loss < first.loss, "{} !< {}", last.loss, first.loss);
        assert_eq!(log.records.len(), 8);
    }

    #[test]
    fn zero_learning_rate_freezes_everything() {
        let ds = small_synth(0.01);
        let cfg = TrainConfig { learning_rate: 0.0, ..quick_cfg() };
        let (model, log) = train_gzsl(&ds, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = SemanticEncoder::init(ds.attr_dim(), cfg.hidden_width, ds.feature_dim(), cfg.init_stddev, &mut rng).unwrap();
        assert_eq!(model.encoder.as_ref().unwrap(), &init);
        let l0 = log.records[0].loss;
        for r in &log.records {
            // Per-batch losses are sums over queries, so the epoch total is order free.
            assert!((r.loss - l0).abs() <= 1e-9 * l0.abs(), "{} vs {l0}", r.loss);
        }
    }

    #[test]
    fn gzsl_is_deterministic() {
        let ds = small_synth(0.05);
        let cfg = TrainConfig { epochs: 3, validate: true, ..quick_cfg() };
        let (m1, l1) = train_gzsl(&ds, &cfg).unwrap();
        let (m2, l2) = train_gzsl(&ds, &cfg).unwrap();
        assert_eq!(l1.to_csv(), l2.to_csv());
        assert_eq!(m1, m2);
        assert!(l1.records.iter().all(|r| r.val_accuracy.is_some()));
    }

    #[test]
    fn unknown_train_label_is_missing_prototype() {
        let mut ds = small_synth(0.01);
        // Reassign a train instance to an unseen class.
        let i = ds.train_idx[0];
        ds.labels[i] = ds.unseen[0];
        let err = train_gzsl(&ds, &TrainConfig { epochs: 1, ..quick_cfg() }).unwrap_err();
        assert!(matches!(err, Error::MissingPrototype { .. }), "{err}");
    }

    #[test]
    fn relation_head_trains_and_round_trips() {
        let ds = small_synth(0.01);
        let cfg = TrainConfig { epochs: 2, predicate: PredicateKind::Relation, relation_hidden: 8, ..quick_cfg() };
        let (model, log) = train_gzsl(&ds, &cfg).unwrap();
        assert!(log.records.iter().all(|r| r.loss.is_finite()));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        model.save(&path).unwrap();
        let back = Model::load(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.evaluate_gzsl(&ds).unwrap(), model.evaluate_gzsl(&ds).unwrap());
    }

    #[test]
    fn checkpoint_dimension_mismatch() {
        let ds = small_synth(0.01);
        let (model, _) = train_gzsl(&ds, &TrainConfig { epochs: 1, ..quick_cfg() }).unwrap();
        let other = generate_synthetic(&SynthConfig { attr_dim: 5, ..SynthConfig::default() }).unwrap();
        assert!(matches!(model.evaluate_gzsl(&other), Err(Error::Dimension(_))));
    }

    fn gaussians(seed: u64) -> LabeledSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        let (mut feats, mut labels) = (Vec::new(), Vec::new());
        for c in 0..2 {
            let centre = if c == 0 { [-3.0, 0.0] } else { [3.0, 0.0] };
            for _ in 0..40 {
                feats.push(centre[0] + n.sample(&mut rng));
                feats.push(centre[1] + n.sample(&mut rng));
                labels.push(c);
            }
        }
        LabeledSet::new(Tensor::matrix(80, 2, feats).unwrap(), labels).unwrap()
    }

    #[test]
    fn fsl_separable_gaussians() {
        let train = gaussians(1);
        let ep = EpisodeConfig { n_way: 2, k_shot: 5, n_query: 10 };
        let cfg = TrainConfig {
            mode: Mode::Fsl,
            epochs: 1,
            episodes_per_epoch: 50,
            learning_rate: 1e-2,
            alpha: 0.1,
            seed: 5,
            ..TrainConfig::default()
        };
        let (model, log) = train_fsl(&train, &ep, &cfg).unwrap();
        assert_eq!(log.records.len(), 1);
        let test = gaussians(2);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut acc = 0.0;
        for _ in 0..20 {
            let e = sample_episode(&test, &ep, &mut rng).unwrap();
            acc += episode_accuracy(&model.embedding, (&e.support.features, &e.support.labels), (&e.query.features, &e.query.labels), Scorer::Distance).unwrap();
        }
        assert!(acc / 20.0 > 0.95, "{}", acc / 20.0);
    }

    #[test]
    fn fsl_frozen_single_episode_matches_direct_kb() {
        let train = gaussians(3);
        let ep = EpisodeConfig { n_way: 2, k_shot: 3, n_query: 4 };
        let cfg = TrainConfig {
            mode: Mode::Fsl,
            epochs: 1,
            episodes_per_epoch: 1,
            learning_rate: 0.0,
            alpha: 0.5,
            seed: 21,
            ..TrainConfig::default()
        };
        let (_, log) = train_fsl(&train, &ep, &cfg).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let e = sample_episode(&train, &ep, &mut rng).unwrap();
        let tape = Tape::new();
        let f = EmbeddingFunction::Network(Mlp::identity("f", 2).unwrap()).bind(&tape);
        let protos = get_prototypes_fsl(&e.support.ground(&tape, "s").unwrap(), &f).unwrap();
        let qe = get_embedding(&e.query.ground(&tape, "q").unwrap(), &f).unwrap();
        let kb = KnowledgeBase::ground(&qe, &protos, Predicate::Distance { alpha: 0.5 }, cfg.kb_params()).unwrap();
        assert_eq!(log.records[0].loss, episode_loss(&kb).unwrap().item().unwrap());
        assert_eq!(log.records[0].phi_aff, kb.aff.item());
    }

    #[test]
    fn fsl_is_deterministic() {
        let train = gaussians(4);
        let ep = EpisodeConfig { n_way: 2, k_shot: 2, n_query: 3 };
        let cfg = TrainConfig {
            mode: Mode::Fsl,
            epochs: 2,
            episodes_per_epoch: 5,
            embed_dim: Some(3),
            hidden_width: 4,
            validate: true,
            seed: 8,
            ..TrainConfig::default()
        };
        let (m1, l1) = train_fsl(&train, &ep, &cfg).unwrap();
        let (m2, l2) = train_fsl(&train, &ep, &cfg).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(m1, m2);
        let back = Model::from_parameters(m1.parameters().into_iter().cloned().collect()).unwrap();
        assert_eq!(back, m1);
    }
}
