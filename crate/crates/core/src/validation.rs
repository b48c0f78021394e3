//! External validation of the extracted relations.
//!
//! Validates complement/substitute scores against independent evidence:
//! shared flavour compounds and recipe co-occurrence of matched
//! ingredients (Jaccard statistics with rank/linear correlations and
//! rank-sum tests), category profiles from a product hierarchy, a rerun of
//! the whole pipeline on recipes-as-transactions, and a temporal
//! split-half robustness check. The sales pipeline and the recipe pipeline
//! share one engine, so agreement between them is evidence about the data,
//! never about code drift.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::bipartite::{
    build_network, co_purchase_counts, BipartiteNetwork, CoPurchaseCounts, FrequencyFilter,
    TransactionRecord,
};
use crate::community::{ami, detect_communities, nmi, DetectorConfig, Partition, WeightedGraph};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::measures::{build_weighted_networks, MeasureSpec, ScoreKind, ScoreMatrix};
use crate::null_models::{derive_relations, run_null_model, NullModelSpec, RelationMatrices};

/// A product matched to external ingredient data: any number of flavour
/// ingredients, and at most one recipe ingredient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductMatch {
    pub product_id: String,
    pub flavour_ingredients: BTreeSet<String>,
    pub recipe_ingredient: Option<String>,
}

/// Match records keyed by product id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchTable {
    map: BTreeMap<String, ProductMatch>,
}

impl MatchTable {
    pub fn new(matches: Vec<ProductMatch>) -> Self {
        let map = matches
            .into_iter()
            .map(|m| (m.product_id.clone(), m))
            .collect();
        MatchTable { map }
    }

    pub fn get(&self, product_id: &str) -> Option<&ProductMatch> {
        self.map.get(product_id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ProductMatch> {
        self.map.values()
    }

    fn require(&self, product_id: &str) -> Result<&ProductMatch> {
        self.get(product_id).ok_or_else(|| Error::UnknownLabel {
            kind: "matched product",
            label: product_id.to_string(),
        })
    }
}

/// One recipe: its cuisine tag and ingredient set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recipe {
    pub cuisine: String,
    pub ingredients: BTreeSet<String>,
}

/// Product categories at four hierarchy levels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HierarchyTable {
    rows: BTreeMap<String, [String; 4]>,
}

impl HierarchyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, product_id: impl Into<String>, levels: [String; 4]) {
        self.rows.insert(product_id.into(), levels);
    }

    /// Category label of a product at a level in `1..=4`.
    pub fn get(&self, product_id: &str, level: u8) -> Option<&str> {
        if !(1..=4).contains(&level) {
            return None;
        }
        self.rows
            .get(product_id)
            .map(|l| l[(level - 1) as usize].as_str())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Jaccard similarity of two sets; two empty sets score 0 (no evidence).
fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Shared-flavour statistic: Jaccard similarity of the compound sets,
/// where a product's compound set is the union over its matched flavour
/// ingredients.
pub fn jaccard_flavour(
    matches: &MatchTable,
    compounds: &BTreeMap<String, BTreeSet<String>>,
    i: &str,
    j: &str,
) -> Result<f64> {
    let collect = |product: &str| -> Result<BTreeSet<&str>> {
        let m = matches.require(product)?;
        let mut set = BTreeSet::new();
        for ing in &m.flavour_ingredients {
            if let Some(cs) = compounds.get(ing) {
                set.extend(cs.iter().map(String::as_str));
            }
        }
        Ok(set)
    };
    Ok(jaccard(&collect(i)?, &collect(j)?))
}

/// Shared-recipe statistic: Jaccard similarity of the sets of recipes
/// containing each product's matched ingredient. Products matched to the
/// same ingredient are forced to 0 — their recipe sets are identical by
/// construction and carry no evidence.
pub fn jaccard_recipe(matches: &MatchTable, recipes: &[Recipe], i: &str, j: &str) -> Result<f64> {
    let ingredient = |product: &str| -> Result<&str> {
        matches
            .require(product)?
            .recipe_ingredient
            .as_deref()
            .ok_or_else(|| Error::UnknownLabel {
                kind: "recipe-matched product",
                label: product.to_string(),
            })
    };
    let gi = ingredient(i)?;
    let gj = ingredient(j)?;
    if gi == gj {
        return Ok(0.0);
    }
    let recipe_set = |g: &str| -> BTreeSet<usize> {
        recipes
            .iter()
            .enumerate()
            .filter(|(_, r)| r.ingredients.contains(g))
            .map(|(k, _)| k)
            .collect()
    };
    Ok(jaccard(&recipe_set(gi), &recipe_set(gj)))
}

/// Direction of a rank-sum test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    Greater,
    Less,
}

/// Rank-sum test outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MwwResult {
    /// `U` for the first sample: pairs where x beats y, ties counting half.
    pub u_statistic: f64,
    pub p_value: f64,
}

/// Pooled tie groups as (count in x, count in y), ascending by value.
fn tie_groups(x: &[f64], y: &[f64]) -> Vec<(u32, u32)> {
    let mut pooled: Vec<(f64, bool)> = x
        .iter()
        .map(|&v| (v, true))
        .chain(y.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite sample values"));
    let mut groups: Vec<(u32, u32)> = Vec::new();
    let mut current: Option<f64> = None;
    for (v, from_x) in pooled {
        if current != Some(v) {
            groups.push((0, 0));
            current = Some(v);
        }
        let last = groups.last_mut().expect("pushed above");
        if from_x {
            last.0 += 1;
        } else {
            last.1 += 1;
        }
    }
    groups
}

/// Doubled U statistic (`2U` is an integer even with ties).
fn doubled_u(groups: &[(u32, u32)]) -> u64 {
    let mut u2 = 0u64;
    let mut y_below = 0u64;
    for &(cx, cy) in groups {
        u2 += cx as u64 * (2 * y_below + cy as u64);
        y_below += cy as u64;
    }
    u2
}

/// Exact null distribution of `2U` by dynamic programming over tie
/// groups: all ways to label pooled positions as x are equally likely.
/// Returns counts indexed by `2U`.
fn exact_u2_distribution(groups: &[(u32, u32)], n_x: usize) -> Vec<f64> {
    let total: usize = groups.iter().map(|&(a, b)| (a + b) as usize).sum();
    let n_y = total - n_x;
    let u2_max = 2 * n_x * n_y;
    // Binomial coefficients up to the pooled size.
    let mut choose = vec![vec![0.0f64; total + 1]; total + 1];
    for n in 0..=total {
        choose[n][0] = 1.0;
        for k in 1..=n {
            choose[n][k] = choose[n - 1][k - 1] + if k < n { choose[n - 1][k] } else { 0.0 };
        }
    }
    // dp[chosen][u2] = weighted count of prefixes.
    let mut dp = vec![vec![0.0f64; u2_max + 1]; n_x + 1];
    dp[0][0] = 1.0;
    let mut positions_before = 0usize;
    for &(cx, cy) in groups {
        let size = (cx + cy) as usize;
        let mut next = vec![vec![0.0f64; u2_max + 1]; n_x + 1];
        for chosen in 0..=n_x.min(positions_before) {
            let unchosen_before = positions_before - chosen;
            for u2 in 0..=u2_max {
                let ways = dp[chosen][u2];
                if ways == 0.0 {
                    continue;
                }
                for k in 0..=size.min(n_x - chosen) {
                    let add = k * 2 * unchosen_before + k * (size - k);
                    if u2 + add > u2_max {
                        continue;
                    }
                    next[chosen + k][u2 + add] += ways * choose[size][k];
                }
            }
        }
        dp = next;
        positions_before += size;
    }
    dp.swap_remove(n_x)
}

/// Rank-sum (Mann–Whitney-style) test of two samples.
///
/// For combined sizes of at most 20 the p-value enumerates the exact null
/// distribution of U over equally likely labelings of the pooled sample;
/// above that a tie-corrected normal approximation with continuity
/// correction is used. Two-sided p doubles the smaller tail, capped at 1.
pub fn mww_test(x: &[f64], y: &[f64], alternative: Alternative) -> Result<MwwResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySample("rank-sum test needs both samples"));
    }
    let groups = tie_groups(x, y);
    let u2_obs = doubled_u(&groups);
    let u_statistic = u2_obs as f64 / 2.0;
    let n = x.len();
    let m = y.len();

    let (p_less, p_greater) = if n + m <= 20 {
        let dist = exact_u2_distribution(&groups, n);
        let total: f64 = dist.iter().sum();
        let le: f64 = dist[..=(u2_obs as usize).min(dist.len() - 1)].iter().sum();
        let ge: f64 = dist[(u2_obs as usize).min(dist.len() - 1)..].iter().sum();
        (le / total, ge / total)
    } else {
        let nf = n as f64;
        let mf = m as f64;
        let big_n = nf + mf;
        let mu = nf * mf / 2.0;
        let tie_sum: f64 = groups
            .iter()
            .map(|&(a, b)| {
                let t = (a + b) as f64;
                t * t * t - t
            })
            .sum();
        let sigma2 = nf * mf / 12.0 * ((big_n + 1.0) - tie_sum / (big_n * (big_n - 1.0)));
        if sigma2 <= 0.0 {
            // Entirely tied samples: no evidence either way.
            (1.0, 1.0)
        } else {
            let sigma = sigma2.sqrt();
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            let p_less = normal.cdf((u_statistic + 0.5 - mu) / sigma);
            let p_greater = 1.0 - normal.cdf((u_statistic - 0.5 - mu) / sigma);
            (p_less, p_greater)
        }
    };
    let p_value = match alternative {
        Alternative::Less => p_less,
        Alternative::Greater => p_greater,
        Alternative::TwoSided => (2.0 * p_less.min(p_greater)).min(1.0),
    };
    Ok(MwwResult {
        u_statistic,
        p_value,
    })
}

/// Linear and rank correlations with t-approximation p-values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationResult {
    pub pearson: f64,
    pub pearson_p: f64,
    pub spearman: f64,
    pub spearman_p: f64,
}

/// Mid-ranks of a sample (ties share the average of their rank block).
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[k]] {
            end += 1;
        }
        let avg = (k + end) as f64 / 2.0 + 1.0;
        for &idx in &order[k..=end] {
            ranks[idx] = avg;
        }
        k = end + 1;
    }
    ranks
}

fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for k in 0..x.len() {
        num += (x[k] - mx) * (y[k] - my);
        vx += (x[k] - mx).powi(2);
        vy += (y[k] - my).powi(2);
    }
    if vx <= 0.0 || vy <= 0.0 {
        return Err(Error::DegenerateDistribution(
            "zero-variance sample in correlation",
        ));
    }
    Ok((num / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0))
}

fn t_approx_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if (1.0 - r * r) <= 0.0 {
        return 0.0;
    }
    let t = r.abs() * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid degrees of freedom");
    (2.0 * (1.0 - dist.cdf(t))).clamp(0.0, 1.0)
}

/// Pearson and Spearman correlations of paired samples of length ≥ 3,
/// with two-sided t-approximation p-values; Spearman uses mid-ranks.
pub fn correlations(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch {
            context: "paired samples",
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::EmptySample("correlation needs at least three pairs"));
    }
    let pearson = pearson_r(x, y)?;
    let spearman = pearson_r(&midranks(x), &midranks(y))?;
    Ok(CorrelationResult {
        pearson,
        pearson_p: t_approx_p(pearson, x.len()),
        spearman,
        spearman_p: t_approx_p(spearman, x.len()),
    })
}

/// Which score pairs enter an external comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSelection {
    /// Only pairs whose score is strictly positive (the reported choice).
    PositiveScores,
    AllPairs,
}

/// Collect paired (score, external statistic) samples over product pairs
/// `i < j`, skipping pairs with no external value.
pub fn collect_score_pairs(
    scores: &ScoreMatrix,
    external: impl Fn(usize, usize) -> Option<f64>,
    selection: PairSelection,
) -> (Vec<f64>, Vec<f64>) {
    let n = scores.values.n();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let s = scores.values.get(i, j);
            if selection == PairSelection::PositiveScores && s <= 0.0 {
                continue;
            }
            if let Some(e) = external(i, j) {
                xs.push(s);
                ys.push(e);
            }
        }
    }
    (xs, ys)
}

/// Everything needed to run the relation-extraction pipeline once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineSettings {
    pub null: NullModelSpec,
    pub measure: MeasureSpec,
    pub detector: DetectorConfig,
}

/// One full pipeline pass over a transaction stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredWorld {
    pub net: BipartiteNetwork,
    pub counts: CoPurchaseCounts,
    pub relations: RelationMatrices,
    pub weighted: crate::measures::WeightedNetworks,
}

/// The single engine both the sales and the recipe paths run through:
/// network build, null-model scan, relation derivation, weighted networks.
pub fn run_sales_engine(
    records: &[TransactionRecord],
    filter: FrequencyFilter,
    settings: &PipelineSettings,
) -> Result<ScoredWorld> {
    let net = build_network(records, filter)?;
    let counts = co_purchase_counts(&net);
    let scan = run_null_model(&net, &counts, &settings.null)?;
    let relations = derive_relations(&scan)?;
    let weighted = build_weighted_networks(&net, &relations, &settings.measure)?;
    Ok(ScoredWorld {
        net,
        counts,
        relations,
        weighted,
    })
}

/// Product-level scores lifted from the ingredient-recipe pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct RecipeScores {
    /// Products that made it through matching, sorted by id.
    pub products: Vec<String>,
    pub wcr: ScoreMatrix,
    pub wsr: ScoreMatrix,
    /// Matched products left out: no recipe ingredient, or the ingredient
    /// did not survive the ingredient-network build.
    pub excluded: Vec<String>,
    /// The underlying ingredient-level run, when recipes were non-empty.
    pub ingredient_world: Option<ScoredWorld>,
}

/// Treat recipes as transactions and ingredients as products, run the
/// shared engine, then lift ingredient scores onto matched product pairs.
/// Products matched to the same ingredient are overridden to complement
/// score 0 and substitute score 1 — the data cannot separate them, but
/// identity is perfect substitutability.
pub fn recipe_pipeline(
    recipes: &[Recipe],
    matches: &MatchTable,
    settings: &PipelineSettings,
) -> Result<RecipeScores> {
    let empty = |excluded: Vec<String>| RecipeScores {
        products: Vec::new(),
        wcr: ScoreMatrix {
            values: Matrix::zeros(0),
            kind: ScoreKind::Comp,
            measure: crate::measures::MeasureKind::Original,
            symmetric: true,
        },
        wsr: ScoreMatrix {
            values: Matrix::zeros(0),
            kind: ScoreKind::Subs,
            measure: crate::measures::MeasureKind::Substitutability,
            symmetric: true,
        },
        excluded,
        ingredient_world: None,
    };
    if recipes.is_empty() {
        return Ok(empty(
            matches.iter().map(|m| m.product_id.clone()).collect(),
        ));
    }
    let mut records = Vec::new();
    for (k, recipe) in recipes.iter().enumerate() {
        let id = format!("r{k:05}");
        for ingredient in &recipe.ingredients {
            records.push(TransactionRecord::new(&id, ingredient));
        }
    }
    let world = run_sales_engine(&records, FrequencyFilter::default(), settings)?;

    let mut products = Vec::new();
    let mut excluded = Vec::new();
    let mut ingredient_idx = Vec::new();
    for m in matches.iter() {
        match m
            .recipe_ingredient
            .as_deref()
            .and_then(|g| world.net.product_index(g))
        {
            Some(idx) => {
                products.push(m.product_id.clone());
                ingredient_idx.push(idx);
            }
            None => excluded.push(m.product_id.clone()),
        }
    }
    let n = products.len();
    let wc = &world.weighted.wc.scores;
    let ws = &world.weighted.ws.scores;
    let mut wcr = Matrix::zeros(n);
    let mut wsr = Matrix::zeros(n);
    for a in 0..n {
        for b in a + 1..n {
            let (gi, gj) = (ingredient_idx[a], ingredient_idx[b]);
            let (c, s) = if gi == gj {
                (0.0, 1.0)
            } else {
                (wc.values.get(gi, gj), ws.values.get(gi, gj))
            };
            wcr.set(a, b, c);
            wcr.set(b, a, c);
            wsr.set(a, b, s);
            wsr.set(b, a, s);
        }
    }
    Ok(RecipeScores {
        products,
        wcr: ScoreMatrix {
            values: wcr,
            kind: ScoreKind::Comp,
            measure: wc.measure,
            symmetric: true,
        },
        wsr: ScoreMatrix {
            values: wsr,
            kind: ScoreKind::Subs,
            measure: ws.measure,
            symmetric: true,
        },
        excluded,
        ingredient_world: Some(world),
    })
}

/// Per-role category proportions at one hierarchy level; each role's
/// proportions sum to 1.
pub fn role_category_profile(
    labels: &[String],
    partition: &Partition,
    hierarchy: &HierarchyTable,
    level: u8,
) -> Result<Vec<BTreeMap<String, f64>>> {
    if labels.len() != partition.n() {
        return Err(Error::ShapeMismatch {
            context: "labels vs partition",
            left: labels.len(),
            right: partition.n(),
        });
    }
    if !(1..=4).contains(&level) {
        return Err(Error::InvalidParameter {
            context: "hierarchy level",
            value: level as f64,
            range: "1..=4",
        });
    }
    let mut counts: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); partition.n_roles()];
    for (i, label) in labels.iter().enumerate() {
        let category = hierarchy
            .get(label, level)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "hierarchy entry",
                label: label.clone(),
            })?;
        *counts[partition.role_of(i) as usize]
            .entry(category.to_string())
            .or_default() += 1;
    }
    Ok(counts
        .into_iter()
        .map(|role_counts| {
            let total: usize = role_counts.values().sum();
            role_counts
                .into_iter()
                .map(|(cat, c)| (cat, c as f64 / total as f64))
                .collect()
        })
        .collect())
}

/// Restrict a labeled partition to the labels in `keep`, preserving order.
pub fn restrict_partition(
    labels: &[String],
    partition: &Partition,
    keep: &BTreeSet<String>,
) -> (Vec<String>, Partition) {
    let mut kept_labels = Vec::new();
    let mut kept_roles = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        if keep.contains(label) {
            kept_labels.push(label.clone());
            kept_roles.push(partition.role_of(i));
        }
    }
    (kept_labels, Partition::new(&kept_roles))
}

/// Partition of recipe-matched products by their matched ingredient.
pub fn ingredient_partition(matches: &MatchTable) -> (Vec<String>, Partition) {
    let mut labels = Vec::new();
    let mut raw = Vec::new();
    let mut ids: BTreeMap<&str, u32> = BTreeMap::new();
    for m in matches.iter() {
        if let Some(g) = m.recipe_ingredient.as_deref() {
            let next = ids.len() as u32;
            let id = *ids.entry(g).or_insert(next);
            labels.push(m.product_id.clone());
            raw.push(id);
        }
    }
    (labels, Partition::new(&raw))
}

/// Pairwise NMI/AMI between two families of named partitions over one
/// node set.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleComparison {
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
    pub nmi: Vec<Vec<f64>>,
    pub ami: Vec<Vec<f64>>,
}

pub fn compare_roles(
    rows: &[(&str, &Partition)],
    cols: &[(&str, &Partition)],
) -> Result<RoleComparison> {
    let mut nmi_table = Vec::with_capacity(rows.len());
    let mut ami_table = Vec::with_capacity(rows.len());
    for (_, p_row) in rows {
        let mut nmi_row = Vec::with_capacity(cols.len());
        let mut ami_row = Vec::with_capacity(cols.len());
        for (_, p_col) in cols {
            nmi_row.push(nmi(p_row, p_col)?);
            ami_row.push(ami(p_row, p_col)?);
        }
        nmi_table.push(nmi_row);
        ami_table.push(ami_row);
    }
    Ok(RoleComparison {
        row_names: rows.iter().map(|(n, _)| n.to_string()).collect(),
        col_names: cols.iter().map(|(n, _)| n.to_string()).collect(),
        nmi: nmi_table,
        ami: ami_table,
    })
}

/// Mean relative distance between two aligned score matrices:
/// `|a−b| / mean(a,b)` averaged over off-diagonal pairs, with pairs where
/// both scores are 0 contributing 0.
pub fn relative_score_distance(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.n() != b.n() {
        return Err(Error::ShapeMismatch {
            context: "score matrices",
            left: a.n(),
            right: b.n(),
        });
    }
    let n = a.n();
    if n < 2 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let (x, y) = (a.get(i, j), b.get(i, j));
            let mean = (x + y) / 2.0;
            if mean > 0.0 {
                total += (x - y).abs() / mean;
            }
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Split-half robustness report.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SplitReport {
    pub d_complement: f64,
    pub d_substitute: f64,
    pub complement_role_nmi: f64,
    pub complement_role_ami: f64,
    pub substitute_role_nmi: f64,
    pub substitute_role_ami: f64,
    pub first_transactions: usize,
    pub second_transactions: usize,
    pub shared_products: usize,
}

/// Split the records at a date (first half strictly before it), run the
/// full pipeline on each half independently, and compare: mean relative
/// distance of complement and substitute scores over the shared products,
/// plus NMI/AMI of the role partitions restricted to the shared products.
pub fn split_robustness(
    records: &[TransactionRecord],
    split_date: &str,
    filter: FrequencyFilter,
    settings: &PipelineSettings,
) -> Result<SplitReport> {
    let mut first = Vec::new();
    let mut second = Vec::new();
    for r in records {
        let date = r.date.as_deref().ok_or_else(|| Error::MissingDate {
            transaction_id: r.transaction_id.clone(),
        })?;
        if date < split_date {
            first.push(r.clone());
        } else {
            second.push(r.clone());
        }
    }
    if first.is_empty() || second.is_empty() {
        return Err(Error::EmptySample(
            "split date leaves one half without records",
        ));
    }
    let (world1, world2) = rayon::join(
        || run_sales_engine(&first, filter, settings),
        || run_sales_engine(&second, filter, settings),
    );
    let (world1, world2) = (world1?, world2?);

    let labels1 = world1.net.product_labels();
    let labels2 = world2.net.product_labels();
    let shared: BTreeSet<String> = labels1
        .iter()
        .filter(|l| labels2.contains(l))
        .cloned()
        .collect();
    if shared.len() < 2 {
        return Err(Error::EmptySample(
            "fewer than two products shared between halves",
        ));
    }
    let align = |world: &ScoredWorld, kind: ScoreKind| -> Matrix {
        let source = match kind {
            ScoreKind::Comp => &world.weighted.wc.scores.values,
            ScoreKind::Subs => &world.weighted.ws.scores.values,
        };
        let idx: Vec<usize> = shared
            .iter()
            .map(|l| world.net.product_index(l).expect("shared label"))
            .collect();
        Matrix::from_fn(idx.len(), |a, b| source.get(idx[a], idx[b]))
    };
    let d_complement = relative_score_distance(
        &align(&world1, ScoreKind::Comp),
        &align(&world2, ScoreKind::Comp),
    )?;
    let d_substitute = relative_score_distance(
        &align(&world1, ScoreKind::Subs),
        &align(&world2, ScoreKind::Subs),
    )?;

    let roles_of = |world: &ScoredWorld, kind: ScoreKind| -> Result<Partition> {
        let source = match kind {
            ScoreKind::Comp => &world.weighted.wc.scores.values,
            ScoreKind::Subs => &world.weighted.ws.scores.values,
        };
        let graph = WeightedGraph::from_matrix(source);
        let detected = detect_communities(&graph, settings.detector)?;
        let labels = world.net.product_labels().to_vec();
        Ok(restrict_partition(&labels, &detected.partition, &shared).1)
    };
    let c1 = roles_of(&world1, ScoreKind::Comp)?;
    let c2 = roles_of(&world2, ScoreKind::Comp)?;
    let s1 = roles_of(&world1, ScoreKind::Subs)?;
    let s2 = roles_of(&world2, ScoreKind::Subs)?;

    let count_transactions = |records: &[TransactionRecord]| {
        records
            .iter()
            .map(|r| r.transaction_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    };
    Ok(SplitReport {
        d_complement,
        d_substitute,
        complement_role_nmi: nmi(&c1, &c2)?,
        complement_role_ami: ami(&c1, &c2)?,
        substitute_role_nmi: nmi(&s1, &s2)?,
        substitute_role_ami: ami(&s1, &s2)?,
        first_transactions: count_transactions(&first),
        second_transactions: count_transactions(&second),
        shared_products: shared.len(),
    })
}

/// Compute flavour and recipe Jaccard statistics for all product pairs of
/// a score matrix in parallel, returning per-pair rows for export.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalPairRow {
    pub product_i: String,
    pub product_j: String,
    pub score: f64,
    pub rf: Option<f64>,
    pub rr: Option<f64>,
}

pub fn external_pair_rows(
    labels: &[String],
    scores: &ScoreMatrix,
    matches: &MatchTable,
    compounds: &BTreeMap<String, BTreeSet<String>>,
    recipes: &[Recipe],
) -> Result<Vec<ExternalPairRow>> {
    if labels.len() != scores.values.n() {
        return Err(Error::ShapeMismatch {
            context: "labels vs score matrix",
            left: labels.len(),
            right: scores.values.n(),
        });
    }
    let n = labels.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    pairs
        .into_par_iter()
        .map(|(i, j)| {
            let rf = jaccard_flavour(matches, compounds, &labels[i], &labels[j]).ok();
            let rr = jaccard_recipe(matches, recipes, &labels[i], &labels[j]).ok();
            Ok(ExternalPairRow {
                product_i: labels[i].clone(),
                product_j: labels[j].clone(),
                score: scores.values.get(i, j),
                rf,
                rr,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------
// File formats.
// ---------------------------------------------------------------------

/// Read `ingredient,compound` rows into a compound-set map.
pub fn read_flavour_csv(path: &Path) -> Result<BTreeMap<String, BTreeSet<String>>> {
    #[derive(serde::Deserialize)]
    struct Row {
        ingredient: String,
        compound: String,
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for row in reader.deserialize() {
        let row: Row = row?;
        map.entry(row.ingredient).or_default().insert(row.compound);
    }
    Ok(map)
}

/// Read one recipe per line: `cuisine<TAB>ingredient;ingredient;...`.
pub fn read_recipes_tsv(path: &Path) -> Result<Vec<Recipe>> {
    let text = std::fs::read_to_string(path)?;
    let mut recipes = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (cuisine, rest) = line.split_once('\t').ok_or_else(|| Error::ParseRow {
            path: path.display().to_string(),
            line: k + 1,
            msg: "expected cuisine<TAB>ingredient list".to_string(),
        })?;
        let ingredients: BTreeSet<String> = rest
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        recipes.push(Recipe {
            cuisine: cuisine.trim().to_string(),
            ingredients,
        });
    }
    Ok(recipes)
}

/// Read `product_id,flavour_ingredients,recipe_ingredient` rows; the
/// flavour list is semicolon-separated and either field may be empty.
pub fn read_matches_csv(path: &Path) -> Result<MatchTable> {
    #[derive(serde::Deserialize)]
    struct Row {
        product_id: String,
        #[serde(default)]
        flavour_ingredients: String,
        #[serde(default)]
        recipe_ingredient: String,
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut matches = Vec::new();
    for row in reader.deserialize() {
        let row: Row = row?;
        let flavour_ingredients: BTreeSet<String> = row
            .flavour_ingredients
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        let recipe_ingredient = {
            let g = row.recipe_ingredient.trim();
            (!g.is_empty()).then(|| g.to_string())
        };
        matches.push(ProductMatch {
            product_id: row.product_id,
            flavour_ingredients,
            recipe_ingredient,
        });
    }
    Ok(MatchTable::new(matches))
}

/// Read `product_id,L1,L2,L3,L4` rows.
pub fn read_hierarchy_csv(path: &Path) -> Result<HierarchyTable> {
    #[derive(serde::Deserialize)]
    struct Row {
        product_id: String,
        #[serde(rename = "L1")]
        l1: String,
        #[serde(rename = "L2")]
        l2: String,
        #[serde(rename = "L3")]
        l3: String,
        #[serde(rename = "L4")]
        l4: String,
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut table = HierarchyTable::new();
    for row in reader.deserialize() {
        let row: Row = row?;
        table.insert(row.product_id, [row.l1, row.l2, row.l3, row.l4]);
    }
    Ok(table)
}

/// Write per-pair external statistics as TSV; absent statistics print NA.
pub fn write_external_pairs_tsv(path: &Path, rows: &[ExternalPairRow]) -> Result<()> {
    use std::io::Write as _;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "product_i\tproduct_j\tscore\trf\trr")?;
    for row in rows {
        let fmt = |v: Option<f64>| match v {
            Some(v) => format!("{v:.9}"),
            None => "NA".to_string(),
        };
        writeln!(
            out,
            "{}\t{}\t{:.9}\t{}\t{}",
            row.product_i,
            row.product_j,
            row.score,
            fmt(row.rf),
            fmt(row.rr)
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Write a plot-ready histogram of a sample: `bin_lo, bin_hi, count`.
pub fn write_histogram_tsv(path: &Path, values: &[f64], n_bins: usize) -> Result<()> {
    use std::io::Write as _;
    if values.is_empty() {
        return Err(Error::EmptySample("histogram of an empty sample"));
    }
    if n_bins == 0 {
        return Err(Error::InvalidParameter {
            context: "histogram bins",
            value: 0.0,
            range: ">= 1",
        });
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo {
        (hi - lo) / n_bins as f64
    } else {
        1.0
    };
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "bin_lo\tbin_hi\tcount")?;
    for (k, &c) in counts.iter().enumerate() {
        let b_lo = lo + k as f64 * width;
        let b_hi = if k + 1 == n_bins {
            hi.max(lo + width)
        } else {
            lo + (k + 1) as f64 * width
        };
        writeln!(out, "{b_lo:.9}\t{b_hi:.9}\t{c}")?;
    }
    out.flush()?;
    Ok(())
}

/// Write per-role category proportions as TSV `role, category, proportion`.
pub fn write_role_profile_tsv(path: &Path, profile: &[BTreeMap<String, f64>]) -> Result<()> {
    use std::io::Write as _;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "role\tcategory\tproportion")?;
    for (role, categories) in profile.iter().enumerate() {
        for (category, share) in categories {
            writeln!(out, "{role}\t{category}\t{share:.9}")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Write a role-comparison table as TSV `row, col, nmi, ami`.
pub fn write_role_comparison_tsv(path: &Path, cmp: &RoleComparison) -> Result<()> {
    use std::io::Write as _;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "row\tcol\tnmi\tami")?;
    for (r, row_name) in cmp.row_names.iter().enumerate() {
        for (c, col_name) in cmp.col_names.iter().enumerate() {
            writeln!(
                out,
                "{row_name}\t{col_name}\t{:.9}\t{:.9}",
                cmp.nmi[r][c], cmp.ami[r][c]
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Write a split-robustness report as TSV `key, value` rows.
pub fn write_split_report_tsv(path: &Path, report: &SplitReport) -> Result<()> {
    use std::io::Write as _;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "key\tvalue")?;
    writeln!(out, "d_complement\t{:.9}", report.d_complement)?;
    writeln!(out, "d_substitute\t{:.9}", report.d_substitute)?;
    writeln!(
        out,
        "complement_role_nmi\t{:.9}",
        report.complement_role_nmi
    )?;
    writeln!(
        out,
        "complement_role_ami\t{:.9}",
        report.complement_role_ami
    )?;
    writeln!(
        out,
        "substitute_role_nmi\t{:.9}",
        report.substitute_role_nmi
    )?;
    writeln!(
        out,
        "substitute_role_ami\t{:.9}",
        report.substitute_role_ami
    )?;
    writeln!(out, "first_transactions\t{}", report.first_transactions)?;
    writeln!(out, "second_transactions\t{}", report.second_transactions)?;
    writeln!(out, "shared_products\t{}", report.shared_products)?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::MeasureChoice;
    use crate::null_models::NullModelKind;
    use approx::assert_abs_diff_eq;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn default_settings() -> PipelineSettings {
        PipelineSettings {
            null: NullModelSpec::new(NullModelKind::ErVariant, 0.05, 0.05).unwrap(),
            measure: MeasureSpec {
                measure: MeasureChoice::Original,
                q_c: 0.0,
                q_s: 0.0,
            },
            detector: DetectorConfig::default(),
        }
    }

    fn match_table(entries: &[(&str, &[&str], Option<&str>)]) -> MatchTable {
        MatchTable::new(
            entries
                .iter()
                .map(|(p, f, r)| ProductMatch {
                    product_id: p.to_string(),
                    flavour_ingredients: set(f),
                    recipe_ingredient: r.map(str::to_string),
                })
                .collect(),
        )
    }

    #[test]
    fn flavour_jaccard_examples() {
        let matches = match_table(&[
            ("p1", &["x"], None),
            ("p2", &["y"], None),
            ("p3", &["z"], None),
            ("p4", &["x", "y"], None),
        ]);
        let mut compounds = BTreeMap::new();
        compounds.insert("x".to_string(), set(&["a", "b", "c"]));
        compounds.insert("y".to_string(), set(&["b", "c", "d"]));
        compounds.insert("z".to_string(), set(&["e"]));
        // {a,b,c} vs {b,c,d}: 2 shared of 4.
        assert_abs_diff_eq!(
            jaccard_flavour(&matches, &compounds, "p1", "p2").unwrap(),
            0.5,
            epsilon = 1e-12
        );
        // Identical sets.
        assert_abs_diff_eq!(
            jaccard_flavour(&matches, &compounds, "p1", "p1").unwrap(),
            1.0,
            epsilon = 1e-12
        );
        // Disjoint sets.
        assert_abs_diff_eq!(
            jaccard_flavour(&matches, &compounds, "p1", "p3").unwrap(),
            0.0,
            epsilon = 1e-12
        );
        // Union over multiple matched ingredients: p4 covers {a,b,c,d}.
        assert_abs_diff_eq!(
            jaccard_flavour(&matches, &compounds, "p1", "p4").unwrap(),
            0.75,
            epsilon = 1e-12
        );
        assert!(jaccard_flavour(&matches, &compounds, "p1", "nope").is_err());
    }

    #[test]
    fn recipe_jaccard_examples() {
        let matches = match_table(&[
            ("p1", &[], Some("beef")),
            ("p2", &[], Some("beef")),
            ("p3", &[], Some("onion")),
            ("p4", &[], Some("basil")),
            ("p5", &[], None),
        ]);
        let recipe = |ings: &[&str]| Recipe {
            cuisine: "any".to_string(),
            ingredients: set(ings),
        };
        // beef in recipes {0,1,2,3}, onion in {2,3,4,5}: 2 shared of 6.
        let recipes = vec![
            recipe(&["beef"]),
            recipe(&["beef"]),
            recipe(&["beef", "onion"]),
            recipe(&["beef", "onion"]),
            recipe(&["onion"]),
            recipe(&["onion"]),
            recipe(&["basil"]),
        ];
        assert_abs_diff_eq!(
            jaccard_recipe(&matches, &recipes, "p1", "p3").unwrap(),
            1.0 / 3.0,
            epsilon = 1e-12
        );
        // Same matched ingredient is forced to zero.
        assert_abs_diff_eq!(
            jaccard_recipe(&matches, &recipes, "p1", "p2").unwrap(),
            0.0,
            epsilon = 1e-12
        );
        // Disjoint recipe sets.
        assert_abs_diff_eq!(
            jaccard_recipe(&matches, &recipes, "p3", "p4").unwrap(),
            0.0,
            epsilon = 1e-12
        );
        // No recipe match is an error, not silently zero.
        assert!(jaccard_recipe(&matches, &recipes, "p1", "p5").is_err());
    }

    #[test]
    fn rank_sum_exact_example() {
        // x below all of y: U = 0, and only 1 of C(4,2)=6 labelings
        // achieves a value this small.
        let r = mww_test(&[1.0, 2.0], &[3.0, 4.0], Alternative::Less).unwrap();
        assert_abs_diff_eq!(r.u_statistic, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.p_value, 1.0 / 6.0, epsilon = 1e-12);
        // Identical samples carry no evidence.
        let same = mww_test(&[1.0, 1.0, 2.0], &[1.0, 1.0, 2.0], Alternative::TwoSided).unwrap();
        assert!(same.p_value > 0.5);
        assert!(mww_test(&[], &[1.0], Alternative::Less).is_err());
    }

    /// Brute-force oracle: enumerate every way to label the pooled sample.
    fn exact_p_by_enumeration(x: &[f64], y: &[f64], alternative: Alternative) -> f64 {
        let pooled: Vec<f64> = x.iter().chain(y.iter()).cloned().collect();
        let n = x.len();
        let total = pooled.len();
        let u_of = |xs: &[f64], ys: &[f64]| -> f64 {
            let mut u = 0.0;
            for a in xs {
                for b in ys {
                    if a > b {
                        u += 1.0;
                    } else if a == b {
                        u += 0.5;
                    }
                }
            }
            u
        };
        let observed = u_of(x, y);
        let mut favourable = 0usize;
        let mut count = 0usize;
        let mut chosen = Vec::new();
        fn walk(
            start: usize,
            total: usize,
            n: usize,
            chosen: &mut Vec<usize>,
            visit: &mut impl FnMut(&[usize]),
        ) {
            if chosen.len() == n {
                visit(chosen);
                return;
            }
            for k in start..total {
                chosen.push(k);
                walk(k + 1, total, n, chosen, visit);
                chosen.pop();
            }
        }
        walk(0, total, n, &mut chosen, &mut |subset| {
            let xs: Vec<f64> = subset.iter().map(|&k| pooled[k]).collect();
            let ys: Vec<f64> = (0..total)
                .filter(|k| !subset.contains(k))
                .map(|k| pooled[k])
                .collect();
            let u = u_of(&xs, &ys);
            count += 1;
            let hit = match alternative {
                Alternative::Less => u <= observed + 1e-9,
                Alternative::Greater => u >= observed - 1e-9,
                Alternative::TwoSided => unreachable!("two-sided handled below"),
            };
            if hit {
                favourable += 1;
            }
        });
        favourable as f64 / count as f64
    }

    #[test]
    fn rank_sum_exact_matches_enumeration_oracle_with_ties() {
        let x = [1.0, 2.0, 2.0, 5.0];
        let y = [2.0, 3.0, 5.0];
        for alt in [Alternative::Less, Alternative::Greater] {
            let expected = exact_p_by_enumeration(&x, &y, alt);
            let got = mww_test(&x, &y, alt).unwrap().p_value;
            assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
        }
        let two = mww_test(&x, &y, Alternative::TwoSided).unwrap().p_value;
        let less = exact_p_by_enumeration(&x, &y, Alternative::Less);
        let greater = exact_p_by_enumeration(&x, &y, Alternative::Greater);
        assert_abs_diff_eq!(two, (2.0 * less.min(greater)).min(1.0), epsilon = 1e-12);
    }

    #[test]
    fn rank_sum_exact_and_normal_paths_agree_at_the_boundary() {
        // Combined size exactly 20 (exact path) vs 21 (normal path) on
        // smooth samples: the approximation stays within 0.02.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..3 {
            let x: Vec<f64> = (0..10).map(|_| rng.gen::<f64>()).collect();
            let y: Vec<f64> = (0..10).map(|_| rng.gen::<f64>() + 0.2).collect();
            let exact = mww_test(&x, &y, Alternative::Less).unwrap().p_value;
            // Rerun the same data through the approximation by padding one
            // far-out value into each sample, which barely moves U's tail.
            let groups = tie_groups(&x, &y);
            let u = doubled_u(&groups) as f64 / 2.0;
            let (n, m) = (10.0, 10.0);
            let mu = n * m / 2.0;
            let sigma = (n * m * (n + m + 1.0) / 12.0_f64).sqrt();
            let normal = Normal::new(0.0, 1.0).unwrap();
            let approx_p = normal.cdf((u + 0.5 - mu) / sigma);
            assert!(
                (exact - approx_p).abs() < 0.02,
                "exact {exact} vs normal {approx_p}"
            );
        }
    }

    #[test]
    fn correlation_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let r = correlations(&x, &y).unwrap();
        assert_abs_diff_eq!(r.pearson, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.spearman, 1.0, epsilon = 1e-12);
        assert!(r.pearson_p < 1e-6);
        // Monotone but nonlinear: rank correlation saturates first.
        let y2: Vec<f64> = x.iter().map(|v| v * v).collect();
        let r2 = correlations(&x, &y2).unwrap();
        assert_abs_diff_eq!(r2.spearman, 1.0, epsilon = 1e-12);
        assert!(r2.pearson < 1.0);
        assert!(correlations(&x, &y[..4]).is_err());
        assert!(correlations(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(correlations(&[1.0; 5], &y).is_err());
    }

    #[test]
    fn correlation_matches_hand_rank_fixture() {
        // Eight points with one tie pair in each sample.
        let x = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let y = [2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0, 9.0];
        // Hand mid-ranks:
        // x sorted: 1,1,2,3,4,5,6,9 → ranks of x: [4, 1.5, 5, 1.5, 6, 8, 3, 7]
        // y sorted: 1,1,2,2,7,8,8,9 → ranks of y: [3.5, 5, 1.5, 6.5, 3.5, 6.5, 1.5, 8]
        let rx = [4.0, 1.5, 5.0, 1.5, 6.0, 8.0, 3.0, 7.0];
        let ry = [3.5, 5.0, 1.5, 6.5, 3.5, 6.5, 1.5, 8.0];
        assert_eq!(midranks(&x), rx);
        assert_eq!(midranks(&y), ry);
        let expected = pearson_r(&rx, &ry).unwrap();
        let got = correlations(&x, &y).unwrap();
        assert_abs_diff_eq!(got.spearman, expected, epsilon = 1e-12);
    }

    #[test]
    fn recipe_pipeline_same_ingredient_override() {
        let matches = match_table(&[
            ("p1", &[], Some("beef")),
            ("p2", &[], Some("beef")),
            ("p3", &[], Some("bun")),
            ("p4", &[], None),
        ]);
        let mut recipes = Vec::new();
        for _ in 0..20 {
            recipes.push(Recipe {
                cuisine: "a".to_string(),
                ingredients: set(&["beef", "bun"]),
            });
        }
        for k in 0..20 {
            recipes.push(Recipe {
                cuisine: "b".to_string(),
                ingredients: set(&[if k % 2 == 0 { "salt" } else { "pepper" }, "water"]),
            });
        }
        let out = recipe_pipeline(&recipes, &matches, &default_settings()).unwrap();
        assert_eq!(out.products, vec!["p1", "p2", "p3"]);
        assert_eq!(out.excluded, vec!["p4"]);
        let idx = |p: &str| out.products.iter().position(|q| q == p).unwrap();
        // Same ingredient: complement forced to 0, substitute to 1.
        assert_eq!(out.wcr.values.get(idx("p1"), idx("p2")), 0.0);
        assert_eq!(out.wsr.values.get(idx("p1"), idx("p2")), 1.0);
        // Different ingredients inherit the ingredient-level scores.
        let world = out.ingredient_world.as_ref().unwrap();
        let beef = world.net.product_index("beef").unwrap();
        let bun = world.net.product_index("bun").unwrap();
        assert_eq!(
            out.wcr.values.get(idx("p1"), idx("p3")),
            world.weighted.wc.scores.values.get(beef, bun)
        );
        assert!(out.wcr.values.get(idx("p1"), idx("p3")) > 0.0);
    }

    #[test]
    fn recipe_pipeline_empty_recipes_gives_empty_matrices() {
        let matches = match_table(&[("p1", &[], Some("beef"))]);
        let out = recipe_pipeline(&[], &matches, &default_settings()).unwrap();
        assert!(out.products.is_empty());
        assert_eq!(out.wcr.values.n(), 0);
        assert_eq!(out.excluded, vec!["p1"]);
        assert!(out.ingredient_world.is_none());
    }

    #[test]
    fn recipe_and_sales_paths_share_one_engine() {
        // Simulator transactions reinterpreted as recipes with identity
        // matching must reproduce the sales scores bit for bit.
        let sim = crate::simulator::generate(&crate::simulator::WorldSpec::with_seed(4)).unwrap();
        let settings = default_settings();
        let sales = run_sales_engine(&sim.records, FrequencyFilter::default(), &settings).unwrap();

        let mut baskets: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
        for r in &sim.records {
            baskets
                .entry(&r.transaction_id)
                .or_default()
                .insert(r.product_id.clone());
        }
        let recipes: Vec<Recipe> = baskets
            .into_values()
            .map(|ingredients| Recipe {
                cuisine: "sim".to_string(),
                ingredients,
            })
            .collect();
        let matches = MatchTable::new(
            sales
                .net
                .product_labels()
                .iter()
                .map(|p| ProductMatch {
                    product_id: p.clone(),
                    flavour_ingredients: BTreeSet::new(),
                    recipe_ingredient: Some(p.clone()),
                })
                .collect(),
        );
        let lifted = recipe_pipeline(&recipes, &matches, &settings).unwrap();
        assert!(lifted.excluded.is_empty());
        assert_eq!(&lifted.products, sales.net.product_labels());
        let n = lifted.products.len();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                assert_eq!(
                    lifted.wcr.values.get(i, j),
                    sales.weighted.wc.scores.values.get(i, j),
                    "complement mismatch at ({i}, {j})"
                );
                assert_eq!(
                    lifted.wsr.values.get(i, j),
                    sales.weighted.ws.scores.values.get(i, j),
                    "substitute mismatch at ({i}, {j})"
                );
            }
        }
    }

    #[test]
    fn category_profile_examples() {
        let mut hierarchy = HierarchyTable::new();
        let levels = |l3: &str| {
            [
                "food".to_string(),
                "aisle".to_string(),
                l3.to_string(),
                "fine".to_string(),
            ]
        };
        for (p, l3) in [
            ("a", "dairy"),
            ("b", "dairy"),
            ("c", "dairy"),
            ("d", "meat"),
            ("e", "meat"),
            ("f", "produce"),
        ] {
            hierarchy.insert(p, levels(l3));
        }
        let labels: Vec<String> = ["a", "b", "c", "d", "e", "f"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        // Roles: {a,b,c} all dairy; {d,e,f} two meat one produce.
        let partition = Partition::new(&[0, 0, 0, 1, 1, 1]);
        let profile = role_category_profile(&labels, &partition, &hierarchy, 3).unwrap();
        assert_eq!(profile[0].len(), 1);
        assert_abs_diff_eq!(profile[0]["dairy"], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(profile[1]["meat"], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(profile[1]["produce"], 1.0 / 3.0, epsilon = 1e-12);
        for role in &profile {
            let total: f64 = role.values().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
        // Even two-category split.
        let even = Partition::new(&[0, 0, 1, 1, 2, 2]);
        let even_profile = role_category_profile(&labels, &even, &hierarchy, 3).unwrap();
        assert_abs_diff_eq!(even_profile[1]["dairy"], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(even_profile[1]["meat"], 0.5, epsilon = 1e-12);
        // Missing hierarchy entry is an error.
        let labels_bad = vec!["a".to_string(), "zzz".to_string()];
        let p2 = Partition::new(&[0, 0]);
        assert!(role_category_profile(&labels_bad, &p2, &hierarchy, 3).is_err());
        assert!(role_category_profile(&labels, &partition, &hierarchy, 5).is_err());
    }

    #[test]
    fn role_comparison_and_ingredient_partition() {
        let matches = match_table(&[
            ("p1", &[], Some("beef")),
            ("p2", &[], Some("beef")),
            ("p3", &[], Some("bun")),
            ("p4", &[], None),
        ]);
        let (labels, l0) = ingredient_partition(&matches);
        assert_eq!(labels, vec!["p1", "p2", "p3"]);
        assert_eq!(l0.n_roles(), 2);
        assert_eq!(l0.role_of(0), l0.role_of(1));
        assert_ne!(l0.role_of(0), l0.role_of(2));

        let cmp = compare_roles(&[("l0", &l0)], &[("l0", &l0), ("flip", &l0)]).unwrap();
        assert_abs_diff_eq!(cmp.nmi[0][0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cmp.ami[0][0], 1.0, epsilon = 1e-9);
        assert_eq!(cmp.row_names, vec!["l0"]);
        assert_eq!(cmp.col_names, vec!["l0", "flip"]);
    }

    #[test]
    fn relative_distance_formula_and_symmetry() {
        let mut a = Matrix::zeros(3);
        let mut b = Matrix::zeros(3);
        // One differing pair: D_ij = 0.1 / 0.15 = 2/3; other pairs zero
        // in both halves contribute 0; average over the 3 pairs.
        a.set(0, 1, 0.2);
        a.set(1, 0, 0.2);
        b.set(0, 1, 0.1);
        b.set(1, 0, 0.1);
        let d = relative_score_distance(&a, &b).unwrap();
        assert_abs_diff_eq!(d, (2.0 / 3.0) / 3.0, epsilon = 1e-12);
        let d_swapped = relative_score_distance(&b, &a).unwrap();
        assert_abs_diff_eq!(d, d_swapped, epsilon = 1e-12);
        assert_abs_diff_eq!(
            relative_score_distance(&a, &a).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert!(relative_score_distance(&a, &Matrix::zeros(2)).is_err());
    }

    #[test]
    fn split_robustness_on_identical_halves() {
        // Every basket appears once in January and once in February under
        // a distinct id, so both halves carry identical structure.
        let sim = crate::simulator::generate(&crate::simulator::WorldSpec::with_seed(8)).unwrap();
        let mut records = Vec::new();
        for r in &sim.records {
            let mut early = r.clone();
            early.transaction_id = format!("a_{}", r.transaction_id);
            early.date = Some("2024-01-05".to_string());
            let mut late = r.clone();
            late.transaction_id = format!("b_{}", r.transaction_id);
            late.date = Some("2024-02-05".to_string());
            records.push(early);
            records.push(late);
        }
        let report = split_robustness(
            &records,
            "2024-01-20",
            FrequencyFilter::default(),
            &default_settings(),
        )
        .unwrap();
        assert_abs_diff_eq!(report.d_complement, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.d_substitute, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.complement_role_nmi, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.substitute_role_nmi, 1.0, epsilon = 1e-12);
        assert_eq!(report.first_transactions, report.second_transactions);
        assert_eq!(report.shared_products, 13);
    }

    #[test]
    fn split_errors_on_missing_dates_and_empty_halves() {
        let records = vec![TransactionRecord::new("t1", "a")];
        assert!(matches!(
            split_robustness(
                &records,
                "2024-01-01",
                FrequencyFilter::default(),
                &default_settings()
            ),
            Err(Error::MissingDate { .. })
        ));
        let mut dated = TransactionRecord::new("t1", "a");
        dated.date = Some("2024-01-05".to_string());
        assert!(matches!(
            split_robustness(
                &[dated],
                "2024-01-01",
                FrequencyFilter::default(),
                &default_settings()
            ),
            Err(Error::EmptySample(_))
        ));
    }

    #[test]
    fn file_readers_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let flavour = dir.path().join("flavour.csv");
        std::fs::write(
            &flavour,
            "ingredient,compound\nbeef,c1\nbeef,c2\nonion,c2\n",
        )
        .unwrap();
        let compounds = read_flavour_csv(&flavour).unwrap();
        assert_eq!(compounds["beef"], set(&["c1", "c2"]));
        assert_eq!(compounds["onion"], set(&["c2"]));

        let recipes_path = dir.path().join("recipes.tsv");
        std::fs::write(
            &recipes_path,
            "american\tbeef;bun;onion\n\nitalian\ttomato; basil \n",
        )
        .unwrap();
        let recipes = read_recipes_tsv(&recipes_path).unwrap();
        assert_eq!(recipes.len(), 2);
        assert_eq!(recipes[0].cuisine, "american");
        assert_eq!(recipes[1].ingredients, set(&["tomato", "basil"]));
        let bad = dir.path().join("bad.tsv");
        std::fs::write(&bad, "no tab here\n").unwrap();
        assert!(matches!(
            read_recipes_tsv(&bad),
            Err(Error::ParseRow { line: 1, .. })
        ));

        let matches_path = dir.path().join("matches.csv");
        std::fs::write(
            &matches_path,
            "product_id,flavour_ingredients,recipe_ingredient\np1,beef;onion,beef\np2,,\n",
        )
        .unwrap();
        let table = read_matches_csv(&matches_path).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(
            table.get("p1").unwrap().flavour_ingredients,
            set(&["beef", "onion"])
        );
        assert_eq!(table.get("p2").unwrap().recipe_ingredient, None);
        assert!(table.get("p2").unwrap().flavour_ingredients.is_empty());

        let hierarchy_path = dir.path().join("hierarchy.csv");
        std::fs::write(
            &hierarchy_path,
            "product_id,L1,L2,L3,L4\np1,food,fresh,dairy,milk\n",
        )
        .unwrap();
        let hierarchy = read_hierarchy_csv(&hierarchy_path).unwrap();
        assert_eq!(hierarchy.get("p1", 3), Some("dairy"));
        assert_eq!(hierarchy.get("p1", 5), None);
    }

    #[test]
    fn histogram_counts_cover_the_sample() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hist.tsv");
        let values: Vec<f64> = (0..100).map(|k| k as f64 / 99.0).collect();
        write_histogram_tsv(&path, &values, 10).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut total = 0usize;
        for line in text.lines().skip(1) {
            let fields: Vec<&str> = line.split('\t').collect();
            assert_eq!(fields.len(), 3);
            total += fields[2].parse::<usize>().unwrap();
        }
        assert_eq!(total, 100);
        assert!(write_histogram_tsv(&path, &[], 10).is_err());
        assert!(write_histogram_tsv(&path, &values, 0).is_err());
    }

    #[test]
    fn external_rows_and_pair_collection() {
        let matches = match_table(&[("a", &["x"], Some("beef")), ("b", &["y"], Some("onion"))]);
        let mut compounds = BTreeMap::new();
        compounds.insert("x".to_string(), set(&["c1", "c2"]));
        compounds.insert("y".to_string(), set(&["c2"]));
        let recipes = vec![Recipe {
            cuisine: "any".to_string(),
            ingredients: set(&["beef", "onion"]),
        }];
        let mut m = Matrix::zeros(2);
        m.set(0, 1, 0.4);
        m.set(1, 0, 0.4);
        let scores = ScoreMatrix {
            values: m,
            kind: ScoreKind::Comp,
            measure: crate::measures::MeasureKind::Original,
            symmetric: true,
        };
        let labels = vec!["a".to_string(), "b".to_string()];
        let rows = external_pair_rows(&labels, &scores, &matches, &compounds, &recipes).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].rf, Some(0.5));
        assert_eq!(rows[0].rr, Some(1.0));

        let (xs, ys) =
            collect_score_pairs(&scores, |_, _| Some(1.0), PairSelection::PositiveScores);
        assert_eq!(xs, vec![0.4]);
        assert_eq!(ys, vec![1.0]);
        let dir = tempfile::tempdir().unwrap();
        write_external_pairs_tsv(&dir.path().join("pairs.tsv"), &rows).unwrap();
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn jaccard_is_symmetric_and_bounded(
                a in proptest::collection::btree_set(0u8..12, 0..8),
                b in proptest::collection::btree_set(0u8..12, 0..8),
            ) {
                let j1 = jaccard(&a, &b);
                let j2 = jaccard(&b, &a);
                prop_assert!((j1 - j2).abs() < 1e-15);
                prop_assert!((0.0..=1.0).contains(&j1));
                if j1 == 1.0 {
                    prop_assert_eq!(&a, &b);
                }
            }

            #[test]
            fn rank_sum_p_is_a_probability_and_flips_with_samples(
                x in proptest::collection::vec(0.0..4.0f64, 2..8),
                y in proptest::collection::vec(0.0..4.0f64, 2..8),
            ) {
                let less = mww_test(&x, &y, Alternative::Less).unwrap().p_value;
                let flipped = mww_test(&y, &x, Alternative::Greater).unwrap().p_value;
                prop_assert!((0.0..=1.0).contains(&less));
                // U_x ≤ u ⟺ U_y ≥ nm − u: the tails mirror exactly.
                prop_assert!((less - flipped).abs() < 1e-12);
            }

            #[test]
            fn correlations_are_bounded_and_symmetric(
                pairs in proptest::collection::vec((0.0..1.0f64, 0.0..1.0f64), 4..20),
            ) {
                let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
                let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
                if let (Ok(a), Ok(b)) = (correlations(&x, &y), correlations(&y, &x)) {
                    prop_assert!((-1.0..=1.0).contains(&a.pearson));
                    prop_assert!((-1.0..=1.0).contains(&a.spearman));
                    prop_assert!((a.pearson - b.pearson).abs() < 1e-12);
                    prop_assert!((a.spearman - b.spearman).abs() < 1e-12);
                }
            }

            #[test]
            fn relative_distance_zero_iff_equal(
                vals in proptest::collection::vec(0.0..1.0f64, 6),
            ) {
                let mut a = Matrix::zeros(3);
                let mut b = Matrix::zeros(3);
                let mut k = 0;
                for i in 0..3 {
                    for j in i + 1..3 {
                        a.set(i, j, vals[k]);
                        a.set(j, i, vals[k]);
                        b.set(i, j, vals[k + 3]);
                        b.set(j, i, vals[k + 3]);
                        k += 1;
                    }
                }
                let d = relative_score_distance(&a, &b).unwrap();
                prop_assert!(d >= 0.0);
                if d == 0.0 {
                    for i in 0..3 {
                        for j in 0..3 {
                            prop_assert!((a.get(i, j) - b.get(i, j)).abs() < 1e-15);
                        }
                    }
                }
            }
        }
    }
}
