//! Bipartite product-purchase network construction.
//!
//! Transaction records become a bipartite graph with transactions on one
//! side and products on the other; an edge means the product appears in the
//! basket. Everything downstream — null models, similarity measures,
//! community detection — reads this structure, so construction is strictly
//! deterministic: indices are assigned by lexicographic id sort and repeated
//! records collapse to a single edge.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One purchase line: a product observed in a transaction.
///
/// Quantity is validated (must be ≥ 1 when given) but otherwise ignored:
/// the network is built from presence alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub transaction_id: String,
    #[serde(default)]
    pub date: Option<String>,
    pub product_id: String,
    #[serde(default)]
    pub quantity: Option<u32>,
}

impl TransactionRecord {
    pub fn new(transaction_id: impl Into<String>, product_id: impl Into<String>) -> Self {
        TransactionRecord {
            transaction_id: transaction_id.into(),
            date: None,
            product_id: product_id.into(),
            quantity: None,
        }
    }
}

/// Product-frequency filter applied during construction.
///
/// Products purchased fewer than `min_count` times, or appearing in more
/// than `max_fraction` of all transactions, are dropped; transactions left
/// empty by that are dropped too. The defaults keep everything.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyFilter {
    pub min_count: u32,
    pub max_fraction: f64,
}

impl Default for FrequencyFilter {
    fn default() -> Self {
        FrequencyFilter {
            min_count: 1,
            max_fraction: 1.0,
        }
    }
}

/// Immutable bipartite network: transactions × products.
///
/// Stored as sorted adjacency lists on both sides; product-column access is
/// the hot path for every downstream kernel. Safe to share across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteNetwork {
    rows: Vec<Vec<u32>>,
    cols: Vec<Vec<u32>>,
    d_t: Vec<u32>,
    d_p: Vec<u32>,
    m: u64,
    transaction_labels: Vec<String>,
    product_labels: Vec<String>,
}

impl BipartiteNetwork {
    /// Number of transaction nodes.
    pub fn n_t(&self) -> usize {
        self.rows.len()
    }

    /// Number of product nodes.
    pub fn n_p(&self) -> usize {
        self.cols.len()
    }

    /// Edge count.
    pub fn m(&self) -> u64 {
        self.m
    }

    /// Basket sizes (row sums).
    pub fn d_t(&self) -> &[u32] {
        &self.d_t
    }

    /// Purchase frequencies (column sums).
    pub fn d_p(&self) -> &[u32] {
        &self.d_p
    }

    /// Sorted product indices purchased in transaction `l`.
    pub fn products_in(&self, l: usize) -> &[u32] {
        &self.rows[l]
    }

    /// Sorted transaction indices containing product `i`.
    pub fn transactions_for(&self, i: usize) -> &[u32] {
        &self.cols[i]
    }

    pub fn transaction_labels(&self) -> &[String] {
        &self.transaction_labels
    }

    pub fn product_labels(&self) -> &[String] {
        &self.product_labels
    }

    /// Column index of a product id, if present.
    pub fn product_index(&self, label: &str) -> Option<usize> {
        self.product_labels
            .binary_search_by(|l| l.as_str().cmp(label))
            .ok()
    }

    /// Whether transaction `l` contains product `i`.
    pub fn has_edge(&self, l: usize, i: u32) -> bool {
        self.rows[l].binary_search(&i).is_ok()
    }

    /// Dense biadjacency copy for small-instance oracles.
    pub fn dense_biadjacency(&self) -> Vec<Vec<u8>> {
        let mut a = vec![vec![0u8; self.n_p()]; self.n_t()];
        for (l, row) in self.rows.iter().enumerate() {
            for &i in row {
                a[l][i as usize] = 1;
            }
        }
        a
    }
}

/// Symmetric common-neighbour counts over product pairs.
///
/// Entry `(i, j)` with `i ≠ j` counts transactions containing both products;
/// the diagonal equals the purchase frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoPurchaseCounts {
    n_p: usize,
    pairs: BTreeMap<(u32, u32), u32>,
    diagonal: Vec<u32>,
}

impl CoPurchaseCounts {
    pub fn n_p(&self) -> usize {
        self.n_p
    }

    /// Count for an ordered product pair; symmetric by construction.
    pub fn get(&self, i: usize, j: usize) -> u32 {
        if i == j {
            self.diagonal[i]
        } else {
            let key = (i.min(j) as u32, i.max(j) as u32);
            self.pairs.get(&key).copied().unwrap_or(0)
        }
    }

    /// Purchase frequencies (the diagonal).
    pub fn diagonal(&self) -> &[u32] {
        &self.diagonal
    }

    /// Nonzero off-diagonal entries `(i, j, count)` with `i < j`, ascending.
    pub fn iter_nonzero(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        self.pairs.iter().map(|(&(i, j), &c)| (i, j, c))
    }
}

/// Build the network from records, deduplicating repeated pairs and applying
/// the frequency filter. Indices are dense and sorted by id, so any
/// permutation of the input yields an identical network.
pub fn build_network(
    records: &[TransactionRecord],
    filter: FrequencyFilter,
) -> Result<BipartiteNetwork> {
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    if filter.min_count < 1 {
        return Err(Error::InvalidParameter {
            context: "frequency filter min_count",
            value: filter.min_count as f64,
            range: "[1, ∞)",
        });
    }
    if !(0.0..=1.0).contains(&filter.max_fraction) {
        return Err(Error::InvalidParameter {
            context: "frequency filter max_fraction",
            value: filter.max_fraction,
            range: "[0, 1]",
        });
    }

    // Deduplicate into basket sets keyed by transaction id.
    let mut baskets: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in records {
        baskets
            .entry(r.transaction_id.as_str())
            .or_default()
            .insert(r.product_id.as_str());
    }

    // Product frequencies over the deduplicated baskets.
    let n_t_all = baskets.len();
    let mut freq: BTreeMap<&str, u32> = BTreeMap::new();
    for basket in baskets.values() {
        for &p in basket {
            *freq.entry(p).or_insert(0) += 1;
        }
    }
    let max_count = filter.max_fraction * n_t_all as f64;
    let kept: BTreeSet<&str> = freq
        .iter()
        .filter(|(_, &c)| c >= filter.min_count && c as f64 <= max_count)
        .map(|(&p, _)| p)
        .collect();

    // Drop filtered products, then transactions emptied by the filter.
    let mut surviving: Vec<(&str, Vec<&str>)> = Vec::new();
    for (t, basket) in &baskets {
        let basket: Vec<&str> = basket
            .iter()
            .copied()
            .filter(|p| kept.contains(p))
            .collect();
        if !basket.is_empty() {
            surviving.push((t, basket));
        }
    }
    // Products may lose all their transactions only via the transaction
    // drop, which cannot happen (a surviving product keeps every basket it
    // was in), so `kept` is exactly the product set.
    if surviving.is_empty() || kept.is_empty() {
        return Err(Error::EmptyAfterFilter {
            transactions: surviving.len(),
            products: kept.len(),
        });
    }

    let product_labels: Vec<String> = kept.iter().map(|p| p.to_string()).collect();
    let index_of: BTreeMap<&str, u32> = kept
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, i as u32))
        .collect();

    let mut rows = Vec::with_capacity(surviving.len());
    let mut transaction_labels = Vec::with_capacity(surviving.len());
    let mut cols: Vec<Vec<u32>> = vec![Vec::new(); product_labels.len()];
    for (l, (t, basket)) in surviving.iter().enumerate() {
        let mut row: Vec<u32> = basket.iter().map(|p| index_of[p]).collect();
        row.sort_unstable();
        for &i in &row {
            cols[i as usize].push(l as u32);
        }
        rows.push(row);
        transaction_labels.push(t.to_string());
    }

    let d_t: Vec<u32> = rows.iter().map(|r| r.len() as u32).collect();
    let d_p: Vec<u32> = cols.iter().map(|c| c.len() as u32).collect();
    let m: u64 = d_t.iter().map(|&d| d as u64).sum();

    Ok(BipartiteNetwork {
        rows,
        cols,
        d_t,
        d_p,
        m,
        transaction_labels,
        product_labels,
    })
}

/// Count, for every product pair, the transactions containing both.
pub fn co_purchase_counts(net: &BipartiteNetwork) -> CoPurchaseCounts {
    let mut pairs: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for l in 0..net.n_t() {
        let row = net.products_in(l);
        for (a, &i) in row.iter().enumerate() {
            for &j in &row[a + 1..] {
                *pairs.entry((i, j)).or_insert(0) += 1;
            }
        }
    }
    CoPurchaseCounts {
        n_p: net.n_p(),
        pairs,
        diagonal: net.d_p().to_vec(),
    }
}

/// Read records from a CSV with header `transaction_id,date,product_id,quantity`.
///
/// The date and quantity columns are optional; a given quantity must be ≥ 1.
pub fn read_transactions_csv(path: &Path) -> Result<Vec<TransactionRecord>> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(path)?;
    let mut records = Vec::new();
    for (idx, row) in reader.deserialize::<TransactionRecord>().enumerate() {
        let line = idx + 2; // header is line 1
        let record = row.map_err(|e| Error::ParseRow {
            path: path.display().to_string(),
            line,
            msg: e.to_string(),
        })?;
        if record.quantity == Some(0) {
            return Err(Error::ParseRow {
                path: path.display().to_string(),
                line,
                msg: "quantity must be at least 1 when given".into(),
            });
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    Ok(records)
}

/// Write records to CSV in the same format `read_transactions_csv` accepts.
pub fn write_transactions_csv(path: &Path, records: &[TransactionRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

/// Export the network as a TSV edge list `transaction_id<TAB>product_id`,
/// in row-major index order.
pub fn write_edge_list_tsv(path: &Path, net: &BipartiteNetwork) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for l in 0..net.n_t() {
        for &i in net.products_in(l) {
            writeln!(
                out,
                "{}\t{}",
                net.transaction_labels()[l],
                net.product_labels()[i as usize]
            )?;
        }
    }
    out.flush()?;
    Ok(())
}
