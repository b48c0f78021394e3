//! Seeded synthetic retail world with known complement and substitute
//! structure.
//!
//! Thirteen products: four independent staples and nine grouped products
//! (three hot dog brands, two bun brands, two taco shell brands, two taco
//! seasoning brands). Hot dogs pair with buns and shells pair with
//! seasonings, giving ten complementary pairs; brands within a group are
//! interchangeable, giving six substitute pairs. Prices are latent: each
//! transaction draws price states that steer purchases but are never
//! emitted.
//!
//! Generation is single-threaded and bit-reproducible per seed; the draw
//! order per transaction is fixed and documented on [`generate`].

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bipartite::TransactionRecord;
use crate::error::{Error, Result};

/// The four independent products.
pub const INDEPENDENTS: [&str; 4] = ["coffee", "wipes", "ramen", "candy"];

/// The nine grouped products, by group.
pub const HOT_DOGS: [&str; 3] = ["hot_dog_classic", "hot_dog_smoky", "hot_dog_garlic"];
pub const BUNS: [&str; 2] = ["bun_sesame", "bun_plain"];
pub const TACO_SHELLS: [&str; 2] = ["taco_shell_corn", "taco_shell_flour"];
pub const TACO_SEASONINGS: [&str; 2] = ["taco_seasoning_mild", "taco_seasoning_hot"];

/// Probabilities of the latent price states drawn per transaction.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PriceProbs {
    /// Each independent product is at its high price with this probability.
    pub independent_high: f64,
    /// All complementary pairs are cheap.
    pub pairs_all_low: f64,
    /// All complementary pairs are expensive.
    pub pairs_all_high: f64,
    /// One pair is marked down below the rest.
    pub pairs_some_marked: f64,
}

impl Default for PriceProbs {
    fn default() -> Self {
        PriceProbs {
            independent_high: 0.8,
            pairs_all_low: 0.5,
            pairs_all_high: 0.1,
            pairs_some_marked: 0.4,
        }
    }
}

/// Purchase probabilities conditioned on the latent price states.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PurchaseProbs {
    /// Buy an independent product priced low.
    pub low: f64,
    /// Buy an independent product priced high.
    pub high: f64,
    /// In the marked-down regime, buy the cheapest pair.
    pub cheapest_pair: f64,
    /// In the marked-down regime, total probability of buying one of the
    /// other pairs instead, spread evenly over them.
    pub others_total: f64,
    /// In the all-expensive regime, buy no pair at all.
    pub all_high_skip: f64,
}

impl Default for PurchaseProbs {
    fn default() -> Self {
        PurchaseProbs {
            low: 0.8,
            high: 0.2,
            cheapest_pair: 0.85,
            others_total: 0.15,
            all_high_skip: 0.5,
        }
    }
}

/// Full specification of a synthetic world.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WorldSpec {
    pub n_transactions: usize,
    pub seed: u64,
    #[serde(default)]
    pub price_probs: PriceProbs,
    #[serde(default)]
    pub purchase_probs: PurchaseProbs,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            n_transactions: 1000,
            seed: 0,
            price_probs: PriceProbs::default(),
            purchase_probs: PurchaseProbs::default(),
        }
    }
}

impl WorldSpec {
    /// Default world with a given seed.
    pub fn with_seed(seed: u64) -> Self {
        WorldSpec {
            seed,
            ..WorldSpec::default()
        }
    }
}

/// Generated records plus the count of attempts that came out empty and
/// were dropped (never regenerated).
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub records: Vec<TransactionRecord>,
    pub dropped_empty: usize,
}

/// The planted relations: complement pairs across groups, substitute pairs
/// within groups, the group memberships, and the independents.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub complement_pairs: Vec<(String, String)>,
    pub substitute_pairs: Vec<(String, String)>,
    pub groups: BTreeMap<String, Vec<String>>,
    pub independents: Vec<String>,
}

impl GroundTruth {
    /// All thirteen product ids, sorted.
    pub fn all_products(&self) -> Vec<String> {
        let mut all: Vec<String> = self.independents.clone();
        for members in self.groups.values() {
            all.extend(members.iter().cloned());
        }
        all.sort();
        all
    }

    /// Group index of a product, if it belongs to one.
    pub fn group_of(&self, product: &str) -> Option<usize> {
        self.groups
            .values()
            .position(|members| members.iter().any(|m| m == product))
    }
}

/// The planted structure of the synthetic world: ten complement pairs
/// (hot dogs × buns, shells × seasonings), six substitute pairs (brands
/// within a group), four groups, four independents.
pub fn ground_truth() -> GroundTruth {
    let mut complement_pairs = Vec::new();
    for d in HOT_DOGS {
        for b in BUNS {
            complement_pairs.push((d.to_string(), b.to_string()));
        }
    }
    for s in TACO_SHELLS {
        for z in TACO_SEASONINGS {
            complement_pairs.push((s.to_string(), z.to_string()));
        }
    }
    let mut substitute_pairs = Vec::new();
    for group in [
        &HOT_DOGS[..],
        &BUNS[..],
        &TACO_SHELLS[..],
        &TACO_SEASONINGS[..],
    ] {
        for (k, a) in group.iter().enumerate() {
            for b in &group[k + 1..] {
                substitute_pairs.push((a.to_string(), b.to_string()));
            }
        }
    }
    let mut groups = BTreeMap::new();
    groups.insert(
        "hot_dogs".to_string(),
        HOT_DOGS.iter().map(|s| s.to_string()).collect(),
    );
    groups.insert(
        "buns".to_string(),
        BUNS.iter().map(|s| s.to_string()).collect(),
    );
    groups.insert(
        "taco_shells".to_string(),
        TACO_SHELLS.iter().map(|s| s.to_string()).collect(),
    );
    groups.insert(
        "taco_seasonings".to_string(),
        TACO_SEASONINGS.iter().map(|s| s.to_string()).collect(),
    );
    GroundTruth {
        complement_pairs,
        substitute_pairs,
        groups,
        independents: INDEPENDENTS.iter().map(|s| s.to_string()).collect(),
    }
}

fn check_prob(context: &'static str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::InvalidParameter {
            context,
            value: p,
            range: "[0, 1]",
        });
    }
    Ok(())
}

fn validate(spec: &WorldSpec) -> Result<()> {
    if spec.n_transactions == 0 {
        return Err(Error::InvalidParameter {
            context: "n_transactions",
            value: 0.0,
            range: ">= 1",
        });
    }
    let pr = &spec.price_probs;
    let pu = &spec.purchase_probs;
    check_prob("price_probs.independent_high", pr.independent_high)?;
    check_prob("price_probs.pairs_all_low", pr.pairs_all_low)?;
    check_prob("price_probs.pairs_all_high", pr.pairs_all_high)?;
    check_prob("price_probs.pairs_some_marked", pr.pairs_some_marked)?;
    check_prob("purchase_probs.low", pu.low)?;
    check_prob("purchase_probs.high", pu.high)?;
    check_prob("purchase_probs.cheapest_pair", pu.cheapest_pair)?;
    check_prob("purchase_probs.others_total", pu.others_total)?;
    check_prob("purchase_probs.all_high_skip", pu.all_high_skip)?;
    let regime_sum = pr.pairs_all_low + pr.pairs_all_high + pr.pairs_some_marked;
    if (regime_sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter {
            context: "price_probs pair regime probabilities",
            value: regime_sum,
            range: "sum to 1",
        });
    }
    let marked_sum = pu.cheapest_pair + pu.others_total;
    if (marked_sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter {
            context: "purchase_probs cheapest_pair + others_total",
            value: marked_sum,
            range: "sum to 1",
        });
    }
    Ok(())
}

/// ISO date for a day offset from 2024-01-01 (offsets below 91 stay
/// within January–March 2024).
fn iso_date(day_offset: u32) -> String {
    let month_lengths = [31u32, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
    let mut day = day_offset;
    for (m, &len) in month_lengths.iter().enumerate() {
        if day < len {
            return format!("2024-{:02}-{:02}", m + 1, day + 1);
        }
        day -= len;
    }
    // Offsets past the year clamp to its last day; generation never gets here.
    "2024-12-31".to_string()
}

/// Generate the transaction stream for a world.
///
/// One attempt is made per transaction index; ids are `t{index:05}` and
/// dates spread the indices over ninety days from 2024-01-01, so dropped
/// attempts leave id gaps rather than shifting later draws.
///
/// Draw order per attempt, from a ChaCha stream seeded with `spec.seed`:
/// 1. For each independent product in declared order: one uniform for the
///    price state, then one uniform for the purchase decision.
/// 2. One uniform selecting the pair-price regime, with cumulative
///    thresholds in the order all-low, all-high, some-marked.
/// 3. Regime-specific draws: all-low picks one of the ten pairs uniformly;
///    all-high draws the skip decision and, when not skipped, one of the
///    ten pairs uniformly; some-marked picks the marked-down pair
///    uniformly, draws the take-the-cheapest decision, and otherwise picks
///    one of the remaining nine pairs uniformly.
///
/// Pairs are always bought whole: a transaction contains either no grouped
/// product or exactly one complementary pair. Attempts with no purchase at
/// all are dropped and counted, never redrawn.
pub fn generate(spec: &WorldSpec) -> Result<SimulationOutput> {
    validate(spec)?;
    let truth = ground_truth();
    let pairs = &truth.complement_pairs;
    let n_pairs = pairs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::new();
    let mut dropped_empty = 0usize;
    let pr = &spec.price_probs;
    let pu = &spec.purchase_probs;

    for index in 0..spec.n_transactions {
        let id = format!("t{index:05}");
        let day = (index as u64 * 90 / spec.n_transactions as u64) as u32;
        let date = iso_date(day);
        let mut basket: Vec<&str> = Vec::new();

        for name in INDEPENDENTS {
            let high = rng.gen::<f64>() < pr.independent_high;
            let buy_prob = if high { pu.high } else { pu.low };
            if rng.gen::<f64>() < buy_prob {
                basket.push(name);
            }
        }

        let regime = rng.gen::<f64>();
        let chosen_pair: Option<usize> = if regime < pr.pairs_all_low {
            Some(rng.gen_range(0..n_pairs))
        } else if regime < pr.pairs_all_low + pr.pairs_all_high {
            if rng.gen::<f64>() < pu.all_high_skip {
                None
            } else {
                Some(rng.gen_range(0..n_pairs))
            }
        } else {
            let cheapest = rng.gen_range(0..n_pairs);
            if rng.gen::<f64>() < pu.cheapest_pair {
                Some(cheapest)
            } else {
                let other = rng.gen_range(0..n_pairs - 1);
                Some(if other >= cheapest { other + 1 } else { other })
            }
        };
        if let Some(k) = chosen_pair {
            basket.push(&pairs[k].0);
            basket.push(&pairs[k].1);
        }

        if basket.is_empty() {
            dropped_empty += 1;
            continue;
        }
        for product in basket {
            records.push(TransactionRecord {
                transaction_id: id.clone(),
                date: Some(date.clone()),
                product_id: product.to_string(),
                quantity: Some(1),
            });
        }
    }
    Ok(SimulationOutput {
        records,
        dropped_empty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeMap, BTreeSet};

    fn baskets(records: &[TransactionRecord]) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut out: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for r in records {
            out.entry(&r.transaction_id)
                .or_default()
                .insert(&r.product_id);
        }
        out
    }

    #[test]
    fn ground_truth_has_expected_counts() {
        let truth = ground_truth();
        assert_eq!(truth.complement_pairs.len(), 10);
        assert_eq!(truth.substitute_pairs.len(), 6);
        assert_eq!(truth.groups.len(), 4);
        assert_eq!(truth.independents.len(), 4);
        let all = truth.all_products();
        assert_eq!(all.len(), 13);
        // No product in two places.
        let set: BTreeSet<&String> = all.iter().collect();
        assert_eq!(set.len(), 13);
        // Complement pairs cross groups, substitute pairs stay inside one.
        for (a, b) in &truth.complement_pairs {
            assert_ne!(truth.group_of(a), truth.group_of(b));
        }
        for (a, b) in &truth.substitute_pairs {
            assert_eq!(truth.group_of(a), truth.group_of(b));
            assert!(truth.group_of(a).is_some());
        }
    }

    #[test]
    fn grouped_products_appear_only_as_full_pairs() {
        let truth = ground_truth();
        let independents: BTreeSet<&str> = INDEPENDENTS.into_iter().collect();
        let pair_set: BTreeSet<(String, String)> = truth.complement_pairs.iter().cloned().collect();
        let out = generate(&WorldSpec::with_seed(11)).unwrap();
        for (_, basket) in baskets(&out.records) {
            let grouped: Vec<&str> = basket
                .iter()
                .copied()
                .filter(|p| !independents.contains(p))
                .collect();
            match grouped.len() {
                0 => {}
                2 => {
                    let key = (grouped[0].to_string(), grouped[1].to_string());
                    let flipped = (key.1.clone(), key.0.clone());
                    assert!(
                        pair_set.contains(&key) || pair_set.contains(&flipped),
                        "not a planted pair: {grouped:?}"
                    );
                }
                n => panic!("basket holds {n} grouped products: {grouped:?}"),
            }
        }
    }

    #[test]
    fn independent_purchase_marginal_matches() {
        let spec = WorldSpec {
            n_transactions: 100_000,
            seed: 42,
            ..WorldSpec::default()
        };
        let out = generate(&spec).unwrap();
        let n = spec.n_transactions as f64;
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &out.records {
            *counts.entry(r.product_id.as_str()).or_default() += 1;
        }
        // Marginal is 0.8·0.2 + 0.2·0.8 = 0.32 per attempt (dropped
        // attempts are attempts too, hence the denominator).
        for name in INDEPENDENTS {
            let freq = counts[name] as f64 / n;
            assert!(
                (freq - 0.32).abs() < 0.01,
                "{name} frequency {freq} not near 0.32"
            );
        }
    }

    #[test]
    fn pair_purchase_is_uniform_across_pairs() {
        let spec = WorldSpec {
            n_transactions: 100_000,
            seed: 7,
            ..WorldSpec::default()
        };
        let out = generate(&spec).unwrap();
        let truth = ground_truth();
        let n = spec.n_transactions as f64;
        let mut pair_counts = vec![0usize; truth.complement_pairs.len()];
        for (_, basket) in baskets(&out.records) {
            for (k, (a, b)) in truth.complement_pairs.iter().enumerate() {
                if basket.contains(a.as_str()) && basket.contains(b.as_str()) {
                    pair_counts[k] += 1;
                }
            }
        }
        // Per pair: 0.5/10 + 0.1·0.5/10 + 0.4·(0.85 + 0.15)/10 = 0.095.
        for (k, &c) in pair_counts.iter().enumerate() {
            let freq = c as f64 / n;
            assert!(
                (freq - 0.095).abs() < 0.004,
                "pair {k} frequency {freq} not near 0.095"
            );
        }
        let total: usize = pair_counts.iter().sum();
        assert!((total as f64 / n - 0.95).abs() < 0.004);
    }

    #[test]
    fn independents_are_pairwise_uncorrelated() {
        let spec = WorldSpec {
            n_transactions: 100_000,
            seed: 3,
            ..WorldSpec::default()
        };
        let out = generate(&spec).unwrap();
        let n = spec.n_transactions;
        // Indicator per attempt index (dropped attempts count as all-zero).
        let mut present: BTreeMap<&str, Vec<f64>> =
            INDEPENDENTS.iter().map(|&p| (p, vec![0.0; n])).collect();
        for r in &out.records {
            if let Some(v) = present.get_mut(r.product_id.as_str()) {
                let idx: usize = r.transaction_id[1..].parse().unwrap();
                v[idx] = 1.0;
            }
        }
        let corr = |x: &[f64], y: &[f64]| -> f64 {
            let nf = x.len() as f64;
            let mx = x.iter().sum::<f64>() / nf;
            let my = y.iter().sum::<f64>() / nf;
            let mut num = 0.0;
            let mut vx = 0.0;
            let mut vy = 0.0;
            for i in 0..x.len() {
                num += (x[i] - mx) * (y[i] - my);
                vx += (x[i] - mx).powi(2);
                vy += (y[i] - my).powi(2);
            }
            num / (vx.sqrt() * vy.sqrt())
        };
        let bound = 3.0 / (n as f64).sqrt();
        for (i, a) in INDEPENDENTS.iter().enumerate() {
            for b in &INDEPENDENTS[i + 1..] {
                let r = corr(&present[a], &present[b]);
                assert!(
                    r.abs() < bound,
                    "{a} vs {b}: correlation {r} exceeds {bound}"
                );
            }
        }
    }

    #[test]
    fn generation_is_bit_reproducible() {
        let spec = WorldSpec::with_seed(99);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate(&WorldSpec::with_seed(100)).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn empty_attempts_are_dropped_and_counted() {
        let spec = WorldSpec {
            n_transactions: 100_000,
            seed: 1,
            ..WorldSpec::default()
        };
        let out = generate(&spec).unwrap();
        // P(empty) = 0.68⁴ · 0.1 · 0.5 ≈ 1.07%.
        assert!(out.dropped_empty > 0);
        let frac = out.dropped_empty as f64 / spec.n_transactions as f64;
        assert!((frac - 0.0107).abs() < 0.002, "dropped fraction {frac}");
        let ids: BTreeSet<&str> = out
            .records
            .iter()
            .map(|r| r.transaction_id.as_str())
            .collect();
        assert_eq!(ids.len() + out.dropped_empty, spec.n_transactions);
    }

    #[test]
    fn ids_and_dates_are_well_formed() {
        let out = generate(&WorldSpec::with_seed(5)).unwrap();
        for r in &out.records {
            assert!(r.transaction_id.starts_with('t'));
            assert_eq!(r.transaction_id.len(), 6);
            let date = r.date.as_deref().unwrap();
            assert!(("2024-01-01"..="2024-03-31").contains(&date), "{date}");
            assert_eq!(r.quantity, Some(1));
        }
        assert_eq!(iso_date(0), "2024-01-01");
        assert_eq!(iso_date(31), "2024-02-01");
        assert_eq!(iso_date(89), "2024-03-30");
    }

    #[test]
    fn invalid_probabilities_are_rejected() {
        let mut spec = WorldSpec::default();
        spec.price_probs.pairs_all_low = 0.7; // regime sum now 1.2
        assert!(matches!(
            generate(&spec),
            Err(Error::InvalidParameter { .. })
        ));
        let mut spec2 = WorldSpec::default();
        spec2.purchase_probs.low = 1.5;
        assert!(generate(&spec2).is_err());
        let spec3 = WorldSpec {
            n_transactions: 0,
            ..WorldSpec::default()
        };
        assert!(generate(&spec3).is_err());
    }
}
