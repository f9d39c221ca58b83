use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::EpisodeConfig;
use crate::diffcore::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::grounding::{Domain, VariableGrounding};

/// Feature rows with one class label each.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub features: Tensor,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(features: Tensor, labels: Vec<usize>) -> Result<Self> {
        if features.rank() != 2 || features.rows() != labels.len() {
            return Err(Error::dim(format!(
                "{:?} features for {} labels",
                features.shape(),
                labels.len()
            )));
        }
        Ok(LabeledSet { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Row indices per class, classes ascending.
    pub fn by_class(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            out.entry(l).or_default().push(i);
        }
        out
    }

    pub fn subset(&self, idx: &[usize]) -> Result<LabeledSet> {
        LabeledSet::new(self.features.select_rows(idx)?, idx.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn ground<'t>(&self, tape: &'t Tape, name: &str) -> Result<VariableGrounding<'t>> {
        VariableGrounding::new(name, Domain::Features, tape.constant(self.features.clone()), Some(self.labels.clone()))
    }
}

/// A sampled few-shot task; labels keep their original values.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub support: LabeledSet,
    pub query: LabeledSet,
}

/// `nWay` classes without replacement, then per class `kShot` support and up
/// to `nQuery` disjoint query rows.
pub fn sample_episode<R: Rng + ?Sized>(train: &LabeledSet, ep: &EpisodeConfig, rng: &mut R) -> Result<Episode> {
    ep.validate()?;
    let groups = train.by_class();
    if groups.len() < ep.n_way {
        return Err(Error::Sampling(format!(
            "{}-way episode needs {} classes, training set has {}",
            ep.n_way,
            ep.n_way,
            groups.len()
        )));
    }
    if let Some((class, rows)) = groups.iter().find(|(_, rows)| rows.len() < ep.k_shot + 1) {
        return Err(Error::Sampling(format!(
            "class {class} has {} examples, {}-shot episodes need {}",
            rows.len(),
            ep.k_shot,
            ep.k_shot + 1
        )));
    }
    let classes: Vec<usize> = groups.keys().copied().collect();
    let chosen: Vec<usize> = classes.choose_multiple(rng, ep.n_way).copied().collect();
    let (mut support, mut query) = (Vec::new(), Vec::new());
    for class in chosen {
        let mut rows = groups[&class].clone();
        rows.shuffle(rng);
        support.extend_from_slice(&rows[..ep.k_shot]);
        let end = (ep.k_shot + ep.n_query).min(rows.len());
        query.extend_from_slice(&rows[ep.k_shot..end]);
    }
    Ok(Episode {
        support: train.subset(&support)?,
        query: train.subset(&query)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(classes: usize, per_class: usize) -> LabeledSet {
        let n = classes * per_class;
        // Row i holds the value i so rows can be traced back.
        let feats = Tensor::matrix(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        LabeledSet::new(feats, (0..n).map(|i| i / per_class).collect()).unwrap()
    }

    fn rows(s: &LabeledSet) -> Vec<usize> {
        s.features.data().iter().map(|&x| x as usize).collect()
    }

    #[test]
    fn two_way_one_shot() {
        let set = toy(2, 3);
        let ep = EpisodeConfig { n_way: 2, k_shot: 1, n_query: 5 };
        let e = sample_episode(&set, &ep, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(e.support.len(), 2);
        assert!(e.query.len() <= 2 * ep.n_query);
        assert_eq!(e.query.len(), 4);
        let (s, q) = (rows(&e.support), rows(&e.query));
        assert!(s.iter().all(|r| !q.contains(r)));
        for (r, l) in s.iter().zip(&e.support.labels).chain(q.iter().zip(&e.query.labels)) {
            assert_eq!(r / 3, *l);
        }
    }

    #[test]
    fn same_seed_same_episode() {
        let set = toy(6, 8);
        let ep = EpisodeConfig { n_way: 3, k_shot: 2, n_query: 3 };
        let a = sample_episode(&set, &ep, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_episode(&set, &ep, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let mut classes = a.support.labels.clone();
        classes.dedup();
        assert_eq!(classes.len(), 3);
    }

    #[test]
    fn insufficient_data() {
        let ep = EpisodeConfig { n_way: 3, k_shot: 1, n_query: 1 };
        let err = sample_episode(&toy(2, 5), &ep, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::Sampling(_)));

        let mut set = toy(3, 4);
        set.labels[3] = 0;
        set.labels[4] = 0;
        set.labels[5] = 0;
        set.labels[6] = 0;
        // class 1 now has a single example
        let ep = EpisodeConfig { n_way: 2, k_shot: 1, n_query: 1 };
        let err = sample_episode(&set, &ep, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(err.to_string().contains("class 1"), "{err}");
    }
}
