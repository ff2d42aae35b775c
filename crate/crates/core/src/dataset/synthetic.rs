use rand::seq::index;

use super::{AttributeTable, Dataset, RawInteraction};
use crate::error::Result;
use crate::math::RandomStream;

/// Generator settings for a dataset with planted user/item preference blocks.
///
/// Users and items are split into `n_blocks` groups; a user draws most of its
/// interactions from the items of its own block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDatasetConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_blocks: usize,
    pub min_interactions: usize,
    pub max_interactions: usize,
    /// Probability that an interaction comes from the user's own block.
    pub in_block_probability: f64,
    /// Emit noisy one-hot block attributes for users and items.
    pub with_attributes: bool,
    pub attribute_noise: f64,
}

impl Default for BlockDatasetConfig {
    fn default() -> Self {
        Self {
            n_users: 200,
            n_items: 300,
            n_blocks: 4,
            min_interactions: 15,
            max_interactions: 30,
            in_block_probability: 0.9,
            with_attributes: false,
            attribute_noise: 0.5,
        }
    }
}

/// Block of user `u` (original index).
pub fn user_block(cfg: &BlockDatasetConfig, user: usize) -> usize {
    user % cfg.n_blocks
}

/// Block of item `m` (original index); blocks are contiguous item ranges.
pub fn item_block(cfg: &BlockDatasetConfig, item: usize) -> usize {
    (item * cfg.n_blocks / cfg.n_items).min(cfg.n_blocks - 1)
}

/// Generates the planted-block dataset. Original ids are `u<index>` and
/// `i<index>`; dense ids follow first appearance as for any loaded file.
pub fn planted_blocks(cfg: &BlockDatasetConfig, seed: u64) -> Result<Dataset> {
    assert!(cfg.n_blocks >= 1 && cfg.n_items >= cfg.n_blocks);
    assert!(cfg.min_interactions >= super::MIN_INTERACTIONS);
    assert!(cfg.min_interactions <= cfg.max_interactions && cfg.max_interactions <= cfg.n_items);
    let root = RandomStream::new(seed);
    let block_items: Vec<Vec<usize>> = (0..cfg.n_blocks)
        .map(|b| (0..cfg.n_items).filter(|&m| item_block(cfg, m) == b).collect())
        .collect();

    let mut raw = Vec::new();
    for u in 0..cfg.n_users {
        let mut rng = root.substream(&[0, u as u64]);
        let span = (cfg.max_interactions - cfg.min_interactions + 1) as u64;
        let count = cfg.min_interactions + (rng.next_u64() % span) as usize;
        let own = &block_items[user_block(cfg, u)];
        let n_in = (0..count)
            .filter(|_| rng.next_f64() < cfg.in_block_probability)
            .count()
            .min(own.len());
        let n_out = count - n_in;
        let mut items: Vec<usize> = index::sample(&mut rng, own.len(), n_in)
            .into_iter()
            .map(|i| own[i])
            .collect();
        let others: Vec<usize> = (0..cfg.n_items)
            .filter(|&m| item_block(cfg, m) != user_block(cfg, u))
            .collect();
        let n_out = n_out.min(others.len());
        items.extend(index::sample(&mut rng, others.len(), n_out).into_iter().map(|i| others[i]));
        // Random chronological order.
        let order = index::sample(&mut rng, items.len(), items.len());
        for (t, pos) in order.into_iter().enumerate() {
            raw.push(RawInteraction {
                user: format!("u{u}"),
                item: format!("i{}", items[pos]),
                rating: 1.0,
                timestamp: t as i64,
            });
        }
    }
    let mut dataset = Dataset::from_raw(&raw)?;

    if cfg.with_attributes {
        let mut rng = root.derive(1);
        let mut one_hot = |block: usize| -> Vec<f64> {
            (0..cfg.n_blocks)
                .map(|b| f64::from(u8::from(b == block)) + cfg.attribute_noise * (2.0 * rng.next_f64() - 1.0))
                .collect()
        };
        let mut user_values = Vec::new();
        for dense in 0..dataset.n_users {
            let original: usize = dataset.user_ids.original(dense).expect("dense id")[1..]
                .parse()
                .expect("generated id");
            user_values.extend(one_hot(user_block(cfg, original)));
        }
        let mut item_values = Vec::new();
        for dense in 0..dataset.n_items {
            let original: usize = dataset.item_ids.original(dense).expect("dense id")[1..]
                .parse()
                .expect("generated id");
            item_values.extend(one_hot(item_block(cfg, original)));
        }
        let users = AttributeTable::new(dataset.n_users, cfg.n_blocks, user_values)?;
        let items = AttributeTable::new(dataset.n_items, cfg.n_blocks, item_values)?;
        dataset = dataset.with_user_attributes(users)?.with_item_attributes(items)?;
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_seeded_and_respects_blocks() {
        let cfg = BlockDatasetConfig::default();
        let a = planted_blocks(&cfg, 1).unwrap();
        let b = planted_blocks(&cfg, 1).unwrap();
        assert_eq!(a.interactions, b.interactions);
        assert_eq!(a.n_users, 200);
        assert!(a.n_items <= 300 && a.n_items > 250);

        let mut in_block = 0;
        for r in &a.interactions {
            let u: usize = a.user_ids.original(r.user).unwrap()[1..].parse().unwrap();
            let m: usize = a.item_ids.original(r.item).unwrap()[1..].parse().unwrap();
            in_block += usize::from(user_block(&cfg, u) == item_block(&cfg, m));
        }
        let frac = in_block as f64 / a.interactions.len() as f64;
        assert!((frac - 0.9).abs() < 0.03, "{frac}");
    }

    #[test]
    fn attributes_follow_dense_ids() {
        let cfg = BlockDatasetConfig {
            with_attributes: true,
            attribute_noise: 0.0,
            ..Default::default()
        };
        let d = planted_blocks(&cfg, 3).unwrap();
        let items = d.item_attributes.as_ref().unwrap();
        for dense in 0..d.n_items {
            let m: usize = d.item_ids.original(dense).unwrap()[1..].parse().unwrap();
            let row = items.row(dense);
            assert_eq!(row[item_block(&cfg, m)], 1.0);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
    }
}
