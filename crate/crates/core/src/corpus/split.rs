use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FilterConfig, SegmentPair};
use crate::error::{Error, Result};
use crate::metrics::SemanticScorer;

/// Train/test split plus the pairs a `sample_size` left out of train.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<SegmentPair>,
    pub test: Vec<SegmentPair>,
    pub held_out: Vec<SegmentPair>,
}

/// Seeded shuffle; the first `test_size` pairs become the test split and the
/// remainder (optionally sub-sampled to `sample_size`) the train split.
pub fn split_corpus(
    pairs: &[SegmentPair],
    cfg: &FilterConfig,
) -> Result<(Vec<SegmentPair>, Vec<SegmentPair>)> {
    let split = split_corpus_with_held_out(pairs, cfg)?;
    Ok((split.train, split.test))
}

pub fn split_corpus_with_held_out(pairs: &[SegmentPair], cfg: &FilterConfig) -> Result<CorpusSplit> {
    if pairs.len() <= cfg.test_size {
        return Err(Error::CorpusTooSmall {
            have: pairs.len(),
            need: cfg.test_size,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);

    let test = order[..cfg.test_size].iter().map(|&i| pairs[i].clone()).collect();
    let rest = &order[cfg.test_size..];
    let (train, held_out) = match cfg.sample_size {
        None => (rest.iter().map(|&i| pairs[i].clone()).collect(), Vec::new()),
        Some(n) if n > rest.len() => {
            return Err(Error::Config(format!(
                "sample_size {n} exceeds the {} pairs left after the test split",
                rest.len()
            )))
        }
        Some(n) => {
            let mut chosen = vec![false; rest.len()];
            for i in index::sample(&mut rng, rest.len(), n) {
                chosen[i] = true;
            }
            let (mut train, mut held_out) = (Vec::with_capacity(n), Vec::new());
            for (slot, &i) in rest.iter().enumerate() {
                if chosen[slot] {
                    train.push(pairs[i].clone());
                } else {
                    held_out.push(pairs[i].clone());
                }
            }
            (train, held_out)
        }
    };
    Ok(CorpusSplit {
        train,
        test,
        held_out,
    })
}

/// Picks the `k` highest-scoring pairs as the test split. Ties go to the
/// earlier pair; both outputs keep corpus order.
pub fn select_top_semantic(
    pairs: &[SegmentPair],
    k: usize,
    scorer: &dyn SemanticScorer,
) -> Result<(Vec<SegmentPair>, Vec<SegmentPair>)> {
    if pairs.len() < k {
        return Err(Error::CorpusTooSmall {
            have: pairs.len(),
            need: k,
        });
    }
    let scores: Vec<f64> = pairs.iter().map(|p| scorer.score(&p.source, &p.target)).collect();
    let mut ranked: Vec<usize> = (0..pairs.len()).collect();
    // stable: equal scores keep corpus order
    ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut in_test = vec![false; pairs.len()];
    for &i in &ranked[..k] {
        in_test[i] = true;
    }
    let mut test = Vec::with_capacity(k);
    let mut train = Vec::with_capacity(pairs.len() - k);
    for (i, pair) in pairs.iter().enumerate() {
        let mut pair = pair.clone();
        pair.semantic_score = Some(scores[i]);
        if in_test[i] {
            test.push(pair);
        } else {
            train.push(pair);
        }
    }
    Ok((test, train))
}
