//! Downstream analyses over detections and account histories: outcome
//! classification, temporal histograms, USD loss accounting, token ranking,
//! phisher lifecycle statistics, and gang-graph extraction.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, TimeZone, Utc};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::{match_vanity_with_suffix, Detection, Evidence, OfficialAllowlist, PhishType};
use crate::txmodel::{Address, Asset, InstructionKind, Transaction};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad price table {path}: {detail}")]
    BadPriceTable { path: PathBuf, detail: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Latest USD unit prices per asset. Missing assets are absent, never
/// silently zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PriceTable {
    pub prices: BTreeMap<Asset, Decimal>,
    pub source: String,
    pub as_of: Option<DateTime<Utc>>,
}

#[derive(Deserialize)]
struct PricesFile {
    #[serde(default)]
    source: String,
    #[serde(default)]
    as_of: Option<DateTime<Utc>>,
    prices: BTreeMap<String, serde_json::Value>,
}

impl PriceTable {
    pub fn get(&self, asset: &Asset) -> Option<Decimal> {
        self.prices.get(asset).copied()
    }

    /// Load `{"source": ..., "as_of": ..., "prices": {"NATIVE": 145.2, "<mint>": 0.9998}}`.
    /// Prices may be JSON numbers (scientific notation allowed) or strings.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, AnalysisError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| AnalysisError::Io { path: path.to_path_buf(), source: e })?;
        let file: PricesFile = serde_json::from_str(&text)
            .map_err(|e| AnalysisError::BadPriceTable { path: path.to_path_buf(), detail: e.to_string() })?;
        let mut prices = BTreeMap::new();
        for (key, value) in file.prices {
            let asset = Asset::from_key(&key).map_err(|e| AnalysisError::BadPriceTable {
                path: path.to_path_buf(),
                detail: format!("bad asset key {key}: {e}"),
            })?;
            let price = parse_decimal(&value).ok_or_else(|| AnalysisError::BadPriceTable {
                path: path.to_path_buf(),
                detail: format!("bad price for {key}: {value}"),
            })?;
            if price.is_sign_negative() {
                return Err(AnalysisError::BadPriceTable {
                    path: path.to_path_buf(),
                    detail: format!("negative price for {key}"),
                });
            }
            prices.insert(asset, price);
        }
        Ok(Self { prices, source: file.source, as_of: file.as_of })
    }
}

fn parse_decimal(value: &serde_json::Value) -> Option<Decimal> {
    let text = match value {
        serde_json::Value::Number(n) => n.to_string(),
        serde_json::Value::String(s) => s.clone(),
        _ => return None,
    };
    text.parse::<Decimal>().ok().or_else(|| Decimal::from_scientific(&text).ok())
}

/// Where a detection's money actually went, judged against the labeled set.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionOutcome {
    /// Victim unlabeled: an actual phishing hit.
    Phishing,
    /// Victim and phisher both labeled: funds shuffled inside the ring.
    MutualTransfer,
    /// Victim labeled, phisher not: proceeds moving onward.
    Laundering,
}

/// Classify each detection by whether its endpoints are labeled phishers.
pub fn classify_detections(
    detections: &[Detection],
    labeled_phishers: &BTreeSet<Address>,
) -> Vec<DetectionOutcome> {
    detections
        .iter()
        .map(|d| {
            let victim_labeled = labeled_phishers.contains(&d.victim);
            let phisher_labeled = labeled_phishers.contains(&d.phisher);
            if !victim_labeled {
                DetectionOutcome::Phishing
            } else if phisher_labeled {
                DetectionOutcome::MutualTransfer
            } else {
                DetectionOutcome::Laundering
            }
        })
        .collect()
}

/// Laundering beneficiaries that themselves wear official-looking
/// addresses: unlabeled accounts worth treating as ring members.
pub fn discovered_vanity_accounts(
    detections: &[Detection],
    labeled_phishers: &BTreeSet<Address>,
    allowlist: &OfficialAllowlist,
    isa_suffix: &str,
) -> Vec<Address> {
    let outcomes = classify_detections(detections, labeled_phishers);
    let mut found = BTreeSet::new();
    for (d, outcome) in detections.iter().zip(outcomes) {
        if outcome == DetectionOutcome::Laundering
            && match_vanity_with_suffix(&d.phisher, allowlist, isa_suffix)
        {
            found.insert(d.phisher.clone());
        }
    }
    found.into_iter().collect()
}

/// UTC (year, month) bucket counts per family; each detection counts once
/// under its primary type.
pub fn monthly_histogram(
    detections: &[Detection],
) -> BTreeMap<(i32, u32), BTreeMap<PhishType, usize>> {
    let mut buckets: BTreeMap<(i32, u32), BTreeMap<PhishType, usize>> = BTreeMap::new();
    for d in detections {
        let dt = Utc.timestamp_opt(d.block_time, 0).single().expect("valid block time");
        *buckets
            .entry((dt.year(), dt.month()))
            .or_default()
            .entry(d.primary_type())
            .or_insert(0) += 1;
    }
    buckets
}

/// UTC date ("YYYY-MM-DD") loss series per family, from priced detections.
pub fn daily_loss(detections: &[Detection]) -> BTreeMap<String, BTreeMap<PhishType, Decimal>> {
    let mut days: BTreeMap<String, BTreeMap<PhishType, Decimal>> = BTreeMap::new();
    for d in detections {
        let Some(loss) = d.loss_usd else { continue };
        let dt = Utc.timestamp_opt(d.block_time, 0).single().expect("valid block time");
        let key = format!("{:04}-{:02}-{:02}", dt.year(), dt.month(), dt.day());
        *days.entry(key).or_default().entry(d.primary_type()).or_insert(Decimal::ZERO) += loss;
    }
    days
}

/// USD loss of one detection plus the assets that had no price.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LossBreakdown {
    pub loss_usd: Decimal,
    pub unpriced_assets: Vec<Asset>,
}

/// Value lost in one detection.
///
/// Draining families sum the victim's negative deltas; authority transfer
/// sums the post-transaction balances of every reassigned account (the new
/// owner controls them outright). Unpriced assets contribute zero and are
/// reported.
pub fn compute_loss(detection: &Detection, tx: &Transaction, prices: &PriceTable) -> LossBreakdown {
    let mut loss = Decimal::ZERO;
    let mut unpriced: Vec<Asset> = Vec::new();
    let mut note_unpriced = |asset: &Asset, unpriced: &mut Vec<Asset>| {
        if !unpriced.contains(asset) {
            unpriced.push(asset.clone());
        }
    };

    match detection.primary_type() {
        PhishType::Stmt | PhishType::Isa => {
            for entry in &tx.balances {
                if entry.effective_owner() != &detection.victim {
                    continue;
                }
                let delta = entry.delta();
                if delta >= 0 {
                    continue;
                }
                match prices.get(&entry.asset) {
                    Some(price) => {
                        loss += units(delta.unsigned_abs() as u64, entry.decimals) * price;
                    }
                    None => note_unpriced(&entry.asset, &mut unpriced),
                }
            }
        }
        PhishType::Aat => {
            let reassigned: BTreeSet<&Address> = detection
                .evidence
                .iter()
                .filter_map(|e| match e {
                    Evidence::Reassignment(r) => r.account.as_ref(),
                    _ => None,
                })
                .collect();
            for entry in &tx.balances {
                if !reassigned.contains(&entry.account) {
                    continue;
                }
                match prices.get(&entry.asset) {
                    Some(price) => loss += units(entry.post, entry.decimals) * price,
                    None => note_unpriced(&entry.asset, &mut unpriced),
                }
            }
        }
    }
    LossBreakdown { loss_usd: loss, unpriced_assets: unpriced }
}

fn units(amount: u64, decimals: u8) -> Decimal {
    Decimal::from(amount) / Decimal::from(10u128.pow(decimals as u32))
}

/// Fill `loss_usd` on each detection, resolving transactions by signature.
/// Returns every asset that had no price anywhere in the batch.
pub fn apply_losses(
    detections: &mut [Detection],
    transactions: &BTreeMap<String, &Transaction>,
    prices: &PriceTable,
) -> Vec<Asset> {
    let mut unpriced = BTreeSet::new();
    for d in detections.iter_mut() {
        if let Some(tx) = transactions.get(&d.tx_signature) {
            let breakdown = compute_loss(d, tx, prices);
            d.loss_usd = Some(breakdown.loss_usd);
            unpriced.extend(breakdown.unpriced_assets);
        }
    }
    unpriced.into_iter().collect()
}

/// Per-family loss aggregates: the internal-consistency view of the loss
/// accounting.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LossSummary {
    pub per_type: BTreeMap<PhishType, TypeLoss>,
    pub total_usd: Decimal,
    pub priced_detections: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TypeLoss {
    pub count: usize,
    pub total_usd: Decimal,
    pub average_usd: Decimal,
    pub max_usd: Decimal,
}

pub fn loss_summary(detections: &[Detection]) -> LossSummary {
    let mut summary = LossSummary::default();
    for d in detections {
        let Some(loss) = d.loss_usd else { continue };
        summary.priced_detections += 1;
        summary.total_usd += loss;
        let slot = summary.per_type.entry(d.primary_type()).or_default();
        slot.count += 1;
        slot.total_usd += loss;
        if loss > slot.max_usd {
            slot.max_usd = loss;
        }
    }
    for slot in summary.per_type.values_mut() {
        if slot.count > 0 {
            slot.average_usd = slot.total_usd / Decimal::from(slot.count as u64);
        }
    }
    summary
}

/// Tolerance used by the additive-consistency checks: one cent.
pub fn one_cent() -> Decimal {
    Decimal::new(1, 2)
}

/// Per-type totals must sum to the grand total, and average times count
/// must reproduce each per-type total, within a cent.
pub fn check_loss_additivity(summary: &LossSummary) -> Result<(), AnalysisError> {
    let sum: Decimal = summary.per_type.values().map(|t| t.total_usd).sum();
    if (sum - summary.total_usd).abs() > one_cent() {
        return Err(AnalysisError::Invariant(format!(
            "per-type losses sum to {sum} but total is {}",
            summary.total_usd
        )));
    }
    for (ty, slot) in &summary.per_type {
        let reconstructed = slot.average_usd * Decimal::from(slot.count as u64);
        if (reconstructed - slot.total_usd).abs() > one_cent() {
            return Err(AnalysisError::Invariant(format!(
                "{ty}: average x count = {reconstructed} but total is {}",
                slot.total_usd
            )));
        }
    }
    Ok(())
}

/// Ranked (asset, detection count): how many detections involve each asset,
/// descending, ties broken by asset key ascending.
pub fn top_tokens(detections: &[Detection], k: usize) -> Vec<(Asset, usize)> {
    let mut counts: BTreeMap<Asset, usize> = BTreeMap::new();
    for d in detections {
        for asset in d.assets_involved() {
            *counts.entry(asset).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(Asset, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

/// Lifecycle and scale statistics for one phishing account.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhisherStats {
    pub account: Address,
    pub attempts: usize,
    pub total_loss_usd: Decimal,
    /// UTC seconds of the first and last detected phish and of the most
    /// recent transaction in the supplied history.
    pub first_phish: i64,
    pub last_phish: i64,
    pub last_activity: i64,
    pub dominant_type: PhishType,
    /// Set when the phisher had no entry in the supplied histories; then
    /// `last_activity` falls back to `last_phish`.
    pub history_missing: bool,
}

impl PhisherStats {
    pub fn phishing_period(&self) -> i64 {
        self.last_phish - self.first_phish
    }

    pub fn dormant_period(&self) -> i64 {
        self.last_activity - self.last_phish
    }
}

/// Aggregate detections per phisher. Sorted by attempts descending, then
/// address ascending.
pub fn phisher_stats(
    detections: &[Detection],
    full_histories: &BTreeMap<Address, Vec<Transaction>>,
) -> Vec<PhisherStats> {
    let mut grouped: BTreeMap<&Address, Vec<&Detection>> = BTreeMap::new();
    for d in detections {
        grouped.entry(&d.phisher).or_default().push(d);
    }

    let mut stats = Vec::with_capacity(grouped.len());
    for (phisher, dets) in grouped {
        let first_phish = dets.iter().map(|d| d.block_time).min().expect("non-empty group");
        let last_phish = dets.iter().map(|d| d.block_time).max().expect("non-empty group");
        let total_loss_usd = dets.iter().filter_map(|d| d.loss_usd).sum();

        let mut type_counts: BTreeMap<PhishType, usize> = BTreeMap::new();
        for d in dets.iter() {
            *type_counts.entry(d.primary_type()).or_insert(0) += 1;
        }
        let best = type_counts.values().copied().max().unwrap_or(0);
        // BTreeMap iterates in precedence order, so the first maximum wins ties.
        let dominant_type = type_counts
            .iter()
            .find(|(_, c)| **c == best)
            .map(|(t, _)| *t)
            .expect("non-empty group");

        let history = full_histories.get(phisher);
        let history_missing = history.is_none();
        let last_activity = history
            .into_iter()
            .flatten()
            .map(|tx| tx.block_time)
            .max()
            .unwrap_or(last_phish)
            .max(last_phish);

        stats.push(PhisherStats {
            account: phisher.clone(),
            attempts: dets.len(),
            total_loss_usd,
            first_phish,
            last_phish,
            last_activity,
            dominant_type,
            history_missing,
        });
    }
    stats.sort_by(|a, b| b.attempts.cmp(&a.attempts).then_with(|| a.account.cmp(&b.account)));
    stats
}

/// Interaction kinds tracked between labeled accounts.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Transfer,
    AuthorityTransfer,
}

/// Directed multigraph over labeled accounts; parallel interactions
/// accumulate in the edge count. No self loops.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GangGraph {
    pub nodes: BTreeSet<Address>,
    pub edges: BTreeMap<(Address, Address, EdgeKind), u64>,
}

impl GangGraph {
    pub fn edge_count(&self) -> u64 {
        self.edges.values().sum()
    }
}

/// Build the interaction graph: a transfer edge per value-moving transfer
/// between labeled wallets, an authority edge per owner reassignment from a
/// labeled wallet to a labeled beneficiary. Only edges with both endpoints
/// in `labeled` survive.
pub fn build_gang_graph(labeled: &BTreeSet<Address>, txs: &[Transaction]) -> GangGraph {
    let mut graph = GangGraph {
        nodes: labeled.clone(),
        edges: BTreeMap::new(),
    };
    for tx in txs {
        for ins in &tx.instructions {
            let edge = match ins.kind {
                InstructionKind::Transfer => {
                    if ins.amount.unwrap_or(0) == 0 {
                        continue;
                    }
                    let (Some(src), Some(dst)) = (&ins.source, &ins.destination) else {
                        continue;
                    };
                    Some((wallet_of(tx, src), wallet_of(tx, dst), EdgeKind::Transfer))
                }
                InstructionKind::Assign | InstructionKind::SetAuthority => {
                    let Some(new_owner) = &ins.new_authority else { continue };
                    let from = ins
                        .source
                        .as_ref()
                        .map(|account| wallet_of(tx, account))
                        .unwrap_or_else(|| tx.fee_payer.clone());
                    Some((from, new_owner.clone(), EdgeKind::AuthorityTransfer))
                }
                _ => None,
            };
            if let Some((from, to, kind)) = edge {
                if from == to || !labeled.contains(&from) || !labeled.contains(&to) {
                    continue;
                }
                *graph.edges.entry((from, to, kind)).or_insert(0) += 1;
            }
        }
    }
    graph
}

/// The wallet behind an account: the balance-table owner when known, the
/// account itself otherwise.
fn wallet_of(tx: &Transaction, account: &Address) -> Address {
    tx.balances
        .iter()
        .find(|b| &b.account == account)
        .and_then(|b| b.owner.clone())
        .unwrap_or_else(|| account.clone())
}

/// Descriptive shape of a gang's interaction pattern. Hints only; never
/// used in detection.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum TopologyHint {
    StarIn,
    StarOut,
    Tree,
    Other,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GangEdge {
    pub from: Address,
    pub to: Address,
    pub kind: EdgeKind,
    pub count: u64,
}

/// One weakly connected component of the gang graph with at least two
/// members.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Gang {
    pub members: Vec<Address>,
    pub edges: Vec<GangEdge>,
    pub topology: TopologyHint,
}

/// Weakly connected components with two or more nodes, sorted by size
/// descending then smallest member ascending. Isolated nodes form no gang.
pub fn find_gangs(graph: &GangGraph) -> Vec<Gang> {
    let nodes: Vec<&Address> = graph.nodes.iter().collect();
    let index: BTreeMap<&Address, usize> = nodes.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let mut parent: Vec<usize> = (0..nodes.len()).collect();

    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }

    for (from, to, _) in graph.edges.keys() {
        if let (Some(&a), Some(&b)) = (index.get(from), index.get(to)) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
    }

    let mut components: BTreeMap<usize, Vec<&Address>> = BTreeMap::new();
    for (i, node) in nodes.iter().enumerate() {
        components.entry(find(&mut parent, i)).or_default().push(node);
    }

    let mut gangs = Vec::new();
    for members in components.into_values() {
        if members.len() < 2 {
            continue;
        }
        let member_set: BTreeSet<&Address> = members.iter().copied().collect();
        let edges: Vec<GangEdge> = graph
            .edges
            .iter()
            .filter(|((from, _, _), _)| member_set.contains(from))
            .map(|((from, to, kind), count)| GangEdge {
                from: from.clone(),
                to: to.clone(),
                kind: *kind,
                count: *count,
            })
            .collect();
        let topology = topology_hint(members.len(), &edges);
        gangs.push(Gang {
            members: members.into_iter().cloned().collect(),
            edges,
            topology,
        });
    }
    gangs.sort_by(|a, b| {
        b.members
            .len()
            .cmp(&a.members.len())
            .then_with(|| a.members[0].cmp(&b.members[0]))
    });
    gangs
}

/// Shape heuristic over distinct directed edges: one node sourcing at least
/// 80% of them is an outward star, one node sinking 80% an inward star; a
/// connected component with exactly n-1 distinct edges is a tree.
fn topology_hint(node_count: usize, edges: &[GangEdge]) -> TopologyHint {
    if edges.is_empty() {
        return TopologyHint::Other;
    }
    let total = edges.len() as f64;
    let mut out_counts: BTreeMap<&Address, usize> = BTreeMap::new();
    let mut in_counts: BTreeMap<&Address, usize> = BTreeMap::new();
    for e in edges {
        *out_counts.entry(&e.from).or_insert(0) += 1;
        *in_counts.entry(&e.to).or_insert(0) += 1;
    }
    let max_out = out_counts.values().copied().max().unwrap_or(0) as f64;
    let max_in = in_counts.values().copied().max().unwrap_or(0) as f64;
    if max_out / total >= 0.8 {
        TopologyHint::StarOut
    } else if max_in / total >= 0.8 {
        TopologyHint::StarIn
    } else if edges.len() == node_count - 1 {
        TopologyHint::Tree
    } else {
        TopologyHint::Other
    }
}
