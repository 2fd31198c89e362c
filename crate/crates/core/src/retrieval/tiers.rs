use super::RetrievalHit;

pub const TIER_COUNT: usize = 4;
pub const TIER_SIZE: usize = 25;
/// Number of top hits that are split into tiers.
pub const TIER_POOL: usize = TIER_COUNT * TIER_SIZE;

/// Splits a ranked list into four consecutive 25-hit bands and stamps the
/// band index onto each hit. Hits past the first 100 are not assigned.
pub fn partition_tiers(hits: &[RetrievalHit]) -> [Vec<RetrievalHit>; TIER_COUNT] {
    let mut tiers: [Vec<RetrievalHit>; TIER_COUNT] = Default::default();
    for (i, hit) in hits.iter().take(TIER_POOL).enumerate() {
        let tier = i / TIER_SIZE;
        let mut hit = hit.clone();
        hit.tier = Some(tier as u8);
        tiers[tier].push(hit);
    }
    tiers
}
