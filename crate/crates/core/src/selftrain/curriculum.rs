use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use super::PseudoLabel;
use crate::rng::{self, purpose, Tag};

/// Orders pseudo-labels for distillation: blocks of descending iteration tag,
/// so the newest (noisiest) labels come first and the earliest, most trusted
/// ones come last. Within each block a `mix_fraction` share of members is
/// moved into other blocks at random positions. Every element appears once.
pub fn order_curriculum(pseudo: &[PseudoLabel], mix_fraction: f64, seed: u64) -> Vec<&PseudoLabel> {
    let tags: Vec<usize> = pseudo.iter().map(|p| p.iteration).collect();
    let mut rng = rng::stream(seed, Tag::new(purpose::CURRICULUM, 0, 0));
    curriculum_order(&tags, mix_fraction, &mut rng)
        .into_iter()
        .map(|i| &pseudo[i])
        .collect()
}

/// Index permutation behind [`order_curriculum`].
pub(crate) fn curriculum_order(tags: &[usize], mix_fraction: f64, rng: &mut rng::Rng) -> Vec<usize> {
    let mut blocks: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, tag) in tags.iter().enumerate() {
        blocks.entry(*tag).or_default().push(i);
    }
    // Descending tag order.
    let mut blocks: Vec<Vec<usize>> = blocks.into_values().rev().collect();
    for block in &mut blocks {
        block.shuffle(rng);
    }
    let mix = mix_fraction.clamp(0.0, 1.0);
    if blocks.len() > 1 && mix > 0.0 {
        let mut donated: Vec<Vec<usize>> = vec![Vec::new(); blocks.len()];
        for b in 0..blocks.len() {
            let count = (mix * blocks[b].len() as f64).round() as usize;
            let mut picks = index::sample(rng, blocks[b].len(), count).into_vec();
            picks.sort_unstable_by(|a, b| b.cmp(a));
            for pos in picks {
                let item = blocks[b].remove(pos);
                let mut target = rng.random_range(0..blocks.len() - 1);
                if target >= b {
                    target += 1;
                }
                donated[target].push(item);
            }
        }
        for (block, extra) in blocks.iter_mut().zip(donated) {
            for item in extra {
                let at = rng.random_range(0..=block.len());
                block.insert(at, item);
            }
        }
    }
    blocks.into_iter().flatten().collect()
}
