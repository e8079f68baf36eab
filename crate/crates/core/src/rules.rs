//! The detection engine: prerequisite filter, the three family detectors
//! (multi-transfer draining, authority transfer, system-account
//! impersonation), the vanity-address matcher, and the assembled classifier.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::txmodel::{
    derive_roles, Address, Asset, InstructionKind, RoleFamily, Roles, Transaction,
};

/// Normalized authority type that marks a token-account owner change.
pub const ACCOUNT_OWNER_AUTHORITY: &str = "accountowner";

/// Vanity prefix impersonating compute-budget style system accounts.
pub const VANITY_PREFIX: &str = "Compu";

/// Default vanity suffix, as the rule states it. Real impersonators tend to
/// carry five ones; the `isa_suffix` knob accepts "11111" for that reading.
pub const DEFAULT_ISA_SUFFIX: &str = "1111";

/// Market-activity keywords matched case-insensitively against log lines.
pub const DEFAULT_MARKET_KEYWORDS: [&str; 3] = ["buy", "sell", "purchase"];

/// System accounts every official allowlist must contain.
pub const MANDATORY_OFFICIAL_ACCOUNTS: [&str; 3] = [
    "11111111111111111111111111111111",
    "ComputeBudget111111111111111111111111111111",
    "NativeLoader1111111111111111111111111111111",
];

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad list file {path} at line {line}: {detail}")]
    BadListLine { path: PathBuf, line: usize, detail: String },
    #[error("bad markets file {path}: {detail}")]
    BadMarketsFile { path: PathBuf, detail: String },
    #[error("bad detections file {path} at line {line}: {detail}")]
    BadDetectionLine { path: PathBuf, line: usize, detail: String },
}

/// Known trading venues plus the log keywords that mark market activity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarketList {
    pub addresses: BTreeSet<Address>,
    /// Lowercase keywords; matching is case-insensitive substring.
    pub keywords: BTreeSet<String>,
}

impl Default for MarketList {
    fn default() -> Self {
        Self {
            addresses: BTreeSet::new(),
            keywords: DEFAULT_MARKET_KEYWORDS.iter().map(|k| k.to_string()).collect(),
        }
    }
}

#[derive(Deserialize)]
struct MarketsFile {
    addresses: Vec<String>,
    #[serde(default)]
    keywords: Vec<String>,
    /// Free-form provenance notes; ignored by the engine.
    #[serde(default)]
    #[allow(dead_code)]
    notes: serde_json::Value,
}

impl MarketList {
    pub fn new(addresses: impl IntoIterator<Item = Address>) -> Self {
        Self {
            addresses: addresses.into_iter().collect(),
            ..Self::default()
        }
    }

    /// Load from JSON: `{"addresses": [...], "keywords": [...]}`. Missing
    /// keywords fall back to the defaults.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, RulesError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| RulesError::Io { path: path.to_path_buf(), source: e })?;
        let file: MarketsFile = serde_json::from_str(&text)
            .map_err(|e| RulesError::BadMarketsFile { path: path.to_path_buf(), detail: e.to_string() })?;
        let mut addresses = BTreeSet::new();
        for a in file.addresses {
            addresses.insert(Address::new(&a).map_err(|e| RulesError::BadMarketsFile {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?);
        }
        let keywords: BTreeSet<String> = if file.keywords.is_empty() {
            DEFAULT_MARKET_KEYWORDS.iter().map(|k| k.to_string()).collect()
        } else {
            file.keywords.into_iter().map(|k| k.to_lowercase()).collect()
        };
        Ok(Self { addresses, keywords })
    }

    pub fn contains(&self, address: &Address) -> bool {
        self.addresses.contains(address)
    }

    /// First keyword found in a log line, if any.
    pub fn keyword_in(&self, line: &str) -> Option<&str> {
        let lower = line.to_lowercase();
        self.keywords.iter().find(|k| lower.contains(k.as_str())).map(String::as_str)
    }
}

/// Official system accounts exempt from the vanity-impersonation rule.
/// Always contains the mandatory system accounts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OfficialAllowlist {
    addresses: BTreeSet<Address>,
}

impl Default for OfficialAllowlist {
    fn default() -> Self {
        Self::new([])
    }
}

impl OfficialAllowlist {
    pub fn new(extra: impl IntoIterator<Item = Address>) -> Self {
        let mut addresses: BTreeSet<Address> = MANDATORY_OFFICIAL_ACCOUNTS
            .iter()
            .map(|s| Address::new(*s).expect("mandatory accounts are valid"))
            .collect();
        addresses.extend(extra);
        Self { addresses }
    }

    /// Load from a newline-delimited file with `#` comments; the mandatory
    /// system accounts are always included.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, RulesError> {
        Ok(Self::new(parse_address_lines(path.as_ref())?))
    }

    pub fn contains(&self, address: &Address) -> bool {
        self.addresses.contains(address)
    }

    pub fn insert(&mut self, address: Address) {
        self.addresses.insert(address);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Address> {
        self.addresses.iter()
    }
}

/// Programs known to legitimately receive wallet authority (fee routers and
/// the like). Empty by default: out of the box the engine reproduces the
/// false positives this list exists to remove.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BenignPrograms {
    addresses: BTreeSet<Address>,
}

impl BenignPrograms {
    pub fn new(addresses: impl IntoIterator<Item = Address>) -> Self {
        Self { addresses: addresses.into_iter().collect() }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, RulesError> {
        Ok(Self::new(parse_address_lines(path.as_ref())?))
    }

    pub fn contains(&self, address: &Address) -> bool {
        self.addresses.contains(address)
    }

    pub fn insert(&mut self, address: Address) {
        self.addresses.insert(address);
    }

    pub fn is_empty(&self) -> bool {
        self.addresses.is_empty()
    }
}

fn parse_address_lines(path: &Path) -> Result<Vec<Address>, RulesError> {
    let text = fs::read_to_string(path)
        .map_err(|e| RulesError::Io { path: path.to_path_buf(), source: e })?;
    let mut addresses = Vec::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let addr = Address::new(line).map_err(|e| RulesError::BadListLine {
            path: path.to_path_buf(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        addresses.push(addr);
    }
    Ok(addresses)
}

/// Everything the classifier needs besides the transaction itself.
#[derive(Clone, Debug, Default)]
pub struct Ruleset {
    pub markets: MarketList,
    pub allowlist: OfficialAllowlist,
    pub benign_programs: BenignPrograms,
    pub isa_suffix: Option<String>,
}

impl Ruleset {
    pub fn isa_suffix(&self) -> &str {
        self.isa_suffix.as_deref().unwrap_or(DEFAULT_ISA_SUFFIX)
    }
}

/// The three phishing families, in canonical precedence order: authority
/// transfer confers total control and outranks draining, which outranks
/// impersonation.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum PhishType {
    #[serde(rename = "AAT")]
    Aat,
    #[serde(rename = "STMT")]
    Stmt,
    #[serde(rename = "ISA")]
    Isa,
}

impl PhishType {
    pub fn label(&self) -> &'static str {
        match self {
            PhishType::Aat => "AAT",
            PhishType::Stmt => "STMT",
            PhishType::Isa => "ISA",
        }
    }

    pub const ALL: [PhishType; 3] = [PhishType::Aat, PhishType::Stmt, PhishType::Isa];
}

impl fmt::Display for PhishType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Why the prerequisite filter rejected a transaction, named after the
/// first failing condition in rule-table order.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    LoserIsMarket,
    BeneficiaryIsMarket,
    LogKeyword(String),
    SelfDealing,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum PrereqOutcome {
    Pass,
    Reject(RejectReason),
}

impl PrereqOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, PrereqOutcome::Pass)
    }
}

/// Market/self-dealing filter applied before any detector. Conditions are
/// evaluated in rule-table order and the first hit names the rejection.
pub fn check_prerequisites(tx: &Transaction, roles: &Roles, markets: &MarketList) -> PrereqOutcome {
    if let Some(loser) = &roles.loser {
        if markets.contains(loser) {
            return PrereqOutcome::Reject(RejectReason::LoserIsMarket);
        }
    }
    if let Some(beneficiary) = &roles.beneficiary {
        if markets.contains(beneficiary) {
            return PrereqOutcome::Reject(RejectReason::BeneficiaryIsMarket);
        }
    }
    for line in &tx.logs {
        if let Some(keyword) = markets.keyword_in(line) {
            return PrereqOutcome::Reject(RejectReason::LogKeyword(keyword.to_string()));
        }
    }
    if let (Some(loser), Some(beneficiary)) = (&roles.loser, &roles.beneficiary) {
        if loser == beneficiary {
            return PrereqOutcome::Reject(RejectReason::SelfDealing);
        }
    }
    PrereqOutcome::Pass
}

/// One account/asset pair that went to zero.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct DrainedAsset {
    pub account: Address,
    pub asset: Asset,
}

/// Wallet owners change via `assign`; token-account owners via
/// `setAuthority` with the owner authority type.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthorityScope {
    Wallet,
    Token,
}

/// One owner reassignment observed in a transaction.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Reassignment {
    pub account: Option<Address>,
    pub old_owner: Option<Address>,
    pub new_owner: Option<Address>,
    pub scope: AuthorityScope,
}

/// A named predicate hit backing a detection.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    TransferCount { count: usize },
    Drained { entries: Vec<DrainedAsset> },
    DurableNonce,
    Reassignment(Reassignment),
    /// Balance snapshot of a reassigned account at the time of the
    /// transaction; the value the new owner walked away with.
    CapturedBalance {
        account: Address,
        asset: Asset,
        amount: u64,
        decimals: u8,
    },
    VanityMatch { address: Address },
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct StmtEvidence {
    pub transfer_count: usize,
    pub drained_tokens: Vec<DrainedAsset>,
    pub durable_nonce: bool,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AatEvidence {
    pub reassignments: Vec<Reassignment>,
    /// (account, asset, post amount, decimals) for each reassigned account.
    pub captured: Vec<(Address, Asset, u64, u8)>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct IsaEvidence {
    pub transfer_count: usize,
    pub drained: Vec<DrainedAsset>,
    pub beneficiary: Address,
}

/// Multi-transfer wallet draining: more than two transfer instructions (any
/// depth) and at least two token balances emptied.
pub fn detect_stmt(tx: &Transaction) -> Option<StmtEvidence> {
    let transfer_count = tx.count_instructions(&InstructionKind::Transfer);
    if transfer_count <= 2 {
        return None;
    }
    let drained_tokens: Vec<DrainedAsset> = tx
        .balances
        .iter()
        .filter(|b| matches!(b.asset, Asset::Token(_)) && b.drained())
        .map(|b| DrainedAsset { account: b.account.clone(), asset: b.asset.clone() })
        .collect();
    if drained_tokens.len() < 2 {
        return None;
    }
    Some(StmtEvidence {
        transfer_count,
        drained_tokens,
        durable_nonce: tx.has_instruction(&InstructionKind::AdvanceNonce),
    })
}

/// Account authority transfer: any wallet `assign`, or a token
/// `setAuthority` switching the owner authority.
pub fn detect_aat(tx: &Transaction) -> Option<AatEvidence> {
    let mut reassignments = Vec::new();
    for ins in &tx.instructions {
        match ins.kind {
            InstructionKind::Assign => reassignments.push(Reassignment {
                account: ins.source.clone(),
                old_owner: owner_of(tx, ins.source.as_ref()),
                new_owner: ins.new_authority.clone(),
                scope: AuthorityScope::Wallet,
            }),
            InstructionKind::SetAuthority
                if ins.authority_type.as_deref() == Some(ACCOUNT_OWNER_AUTHORITY) =>
            {
                reassignments.push(Reassignment {
                    account: ins.source.clone(),
                    old_owner: owner_of(tx, ins.source.as_ref()),
                    new_owner: ins.new_authority.clone(),
                    scope: AuthorityScope::Token,
                })
            }
            _ => {}
        }
    }
    if reassignments.is_empty() {
        return None;
    }

    let mut captured = Vec::new();
    let mut seen: BTreeSet<&Address> = BTreeSet::new();
    for r in &reassignments {
        if let Some(account) = &r.account {
            if !seen.insert(account) {
                continue;
            }
            for entry in tx.balances.iter().filter(|b| &b.account == account) {
                captured.push((entry.account.clone(), entry.asset.clone(), entry.post, entry.decimals));
            }
        }
    }
    Some(AatEvidence { reassignments, captured })
}

fn owner_of(tx: &Transaction, account: Option<&Address>) -> Option<Address> {
    let account = account?;
    tx.balances
        .iter()
        .find(|b| &b.account == account)
        .and_then(|b| b.owner.clone())
}

/// True when the address wears an official-looking prefix or suffix and is
/// not itself an official account.
pub fn match_vanity(address: &Address, allowlist: &OfficialAllowlist) -> bool {
    match_vanity_with_suffix(address, allowlist, DEFAULT_ISA_SUFFIX)
}

pub fn match_vanity_with_suffix(
    address: &Address,
    allowlist: &OfficialAllowlist,
    suffix: &str,
) -> bool {
    let s = address.as_str();
    (s.starts_with(VANITY_PREFIX) || s.ends_with(suffix)) && !allowlist.contains(address)
}

/// System-account impersonation: at least one transfer, something drained
/// to zero, and the beneficiary address mimics an official account.
pub fn detect_isa(
    tx: &Transaction,
    roles: &Roles,
    allowlist: &OfficialAllowlist,
    suffix: &str,
) -> Option<IsaEvidence> {
    let transfer_count = tx.count_instructions(&InstructionKind::Transfer);
    if transfer_count == 0 {
        return None;
    }
    let drained: Vec<DrainedAsset> = tx
        .balances
        .iter()
        .filter(|b| b.drained())
        .map(|b| DrainedAsset { account: b.account.clone(), asset: b.asset.clone() })
        .collect();
    if drained.is_empty() {
        return None;
    }
    let beneficiary = roles.beneficiary.as_ref()?;
    if !match_vanity_with_suffix(beneficiary, allowlist, suffix) {
        return None;
    }
    Some(IsaEvidence { transfer_count, drained, beneficiary: beneficiary.clone() })
}

/// One flagged transaction with its evidence. Serialized as JSON lines with
/// stable field order; `schema_version` is "1".
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct Detection {
    pub schema_version: String,
    pub tx_signature: String,
    /// UTC seconds; copied from the transaction so downstream analyses can
    /// bucket by time without re-reading the corpus.
    pub block_time: i64,
    /// Every family that fired, highest precedence first.
    pub phish_types: Vec<PhishType>,
    pub victim: Address,
    pub phisher: Address,
    pub evidence: Vec<Evidence>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_usd: Option<Decimal>,
}

pub const DETECTION_SCHEMA_VERSION: &str = "1";

impl Detection {
    pub fn primary_type(&self) -> PhishType {
        self.phish_types[0]
    }

    /// Assets named anywhere in the evidence (drained or captured), deduped.
    pub fn assets_involved(&self) -> BTreeSet<Asset> {
        let mut assets = BTreeSet::new();
        for ev in &self.evidence {
            match ev {
                Evidence::Drained { entries } => {
                    assets.extend(entries.iter().map(|e| e.asset.clone()));
                }
                Evidence::CapturedBalance { asset, .. } => {
                    assets.insert(asset.clone());
                }
                _ => {}
            }
        }
        assets
    }
}

/// Run the full rule pipeline over one transaction.
///
/// Roles and prerequisites are evaluated per family; every firing family
/// lands in one detection, precedence-ordered, with victim and phisher
/// taken from the highest-precedence family's roles. Failed transactions
/// and transactions whose roles cannot be derived yield no detection.
pub fn classify(tx: &Transaction, ruleset: &Ruleset) -> Option<Detection> {
    if !tx.success {
        return None;
    }

    let mut fired: Vec<(PhishType, Vec<Evidence>)> = Vec::new();

    let authority_roles = match derive_roles(tx, RoleFamily::AuthorityLike) {
        Ok(roles) => Some(roles),
        Err(e) => {
            log::debug!("{e}");
            None
        }
    };
    if let Some(roles) = &authority_roles {
        if check_prerequisites(tx, roles, &ruleset.markets).passed() {
            if let Some(ev) = detect_aat(tx) {
                let kept: Vec<Reassignment> = ev
                    .reassignments
                    .into_iter()
                    .filter(|r| {
                        r.new_owner
                            .as_ref()
                            .map_or(true, |owner| !ruleset.benign_programs.contains(owner))
                    })
                    .collect();
                if !kept.is_empty() {
                    let mut evidence: Vec<Evidence> =
                        kept.into_iter().map(Evidence::Reassignment).collect();
                    evidence.extend(ev.captured.into_iter().map(
                        |(account, asset, amount, decimals)| Evidence::CapturedBalance {
                            account,
                            asset,
                            amount,
                            decimals,
                        },
                    ));
                    fired.push((PhishType::Aat, evidence));
                }
            }
        }
    }

    let transfer_roles = match derive_roles(tx, RoleFamily::TransferLike) {
        Ok(roles) => Some(roles),
        Err(e) => {
            log::debug!("{e}");
            None
        }
    };
    if let Some(roles) = &transfer_roles {
        if check_prerequisites(tx, roles, &ruleset.markets).passed() {
            if let Some(ev) = detect_stmt(tx) {
                let mut evidence = vec![
                    Evidence::TransferCount { count: ev.transfer_count },
                    Evidence::Drained { entries: ev.drained_tokens },
                ];
                if ev.durable_nonce {
                    evidence.push(Evidence::DurableNonce);
                }
                fired.push((PhishType::Stmt, evidence));
            }
            if let Some(ev) = detect_isa(tx, roles, &ruleset.allowlist, ruleset.isa_suffix()) {
                fired.push((
                    PhishType::Isa,
                    vec![
                        Evidence::TransferCount { count: ev.transfer_count },
                        Evidence::Drained { entries: ev.drained },
                        Evidence::VanityMatch { address: ev.beneficiary },
                    ],
                ));
            }
        }
    }

    if fired.is_empty() {
        return None;
    }
    fired.sort_by_key(|(ty, _)| *ty);

    let primary = fired[0].0;
    let roles = match primary {
        PhishType::Aat => authority_roles.as_ref(),
        _ => transfer_roles.as_ref(),
    }
    .expect("roles exist for any fired family");
    let (Some(victim), Some(phisher)) = (roles.loser.clone(), roles.beneficiary.clone()) else {
        log::debug!(
            "transaction {} fired {:?} but roles are incomplete; skipping",
            tx.signature,
            fired.iter().map(|(t, _)| *t).collect::<Vec<_>>()
        );
        return None;
    };

    let mut phish_types = Vec::with_capacity(fired.len());
    let mut evidence = Vec::new();
    for (ty, ev) in fired {
        phish_types.push(ty);
        evidence.extend(ev);
    }

    Some(Detection {
        schema_version: DETECTION_SCHEMA_VERSION.to_string(),
        tx_signature: tx.signature.clone(),
        block_time: tx.block_time,
        phish_types,
        victim,
        phisher,
        evidence,
        loss_usd: None,
    })
}

/// Write detections as JSON lines.
pub fn write_detections(path: impl AsRef<Path>, detections: &[Detection]) -> Result<(), RulesError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| RulesError::Io { path: parent.to_path_buf(), source: e })?;
    }
    let mut file = fs::File::create(path)
        .map_err(|e| RulesError::Io { path: path.to_path_buf(), source: e })?;
    for d in detections {
        let line = serde_json::to_string(d).expect("detection serializes");
        file.write_all(line.as_bytes())
            .and_then(|_| file.write_all(b"\n"))
            .map_err(|e| RulesError::Io { path: path.to_path_buf(), source: e })?;
    }
    Ok(())
}

/// Read a JSON-lines detections file.
pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>, RulesError> {
    let path = path.as_ref();
    let file = fs::File::open(path)
        .map_err(|e| RulesError::Io { path: path.to_path_buf(), source: e })?;
    let mut detections = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| RulesError::Io { path: path.to_path_buf(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Detection = serde_json::from_str(&line).map_err(|e| RulesError::BadDetectionLine {
            path: path.to_path_buf(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        detections.push(d);
    }
    Ok(detections)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{addr, native_entry, token_entry, tx_with};
    use crate::txmodel::Instruction;

    fn transfer_ins(src: &Address, dst: &Address, amount: u64, depth: u32) -> Instruction {
        Instruction {
            program: addr(200),
            kind: InstructionKind::Transfer,
            source: Some(src.clone()),
            destination: Some(dst.clone()),
            amount: Some(amount),
            mint: None,
            authority_type: None,
            new_authority: None,
            depth,
        }
    }

    fn assign_ins(wallet: &Address, program: &Address) -> Instruction {
        Instruction {
            program: addr(200),
            kind: InstructionKind::Assign,
            source: Some(wallet.clone()),
            destination: None,
            amount: None,
            mint: None,
            authority_type: None,
            new_authority: Some(program.clone()),
            depth: 0,
        }
    }

    fn set_authority_ins(account: &Address, new_owner: &Address, authority_type: &str) -> Instruction {
        Instruction {
            program: addr(200),
            kind: InstructionKind::SetAuthority,
            source: Some(account.clone()),
            destination: None,
            amount: None,
            mint: None,
            authority_type: Some(authority_type.to_string()),
            new_authority: Some(new_owner.clone()),
            depth: 0,
        }
    }

    fn advance_nonce_ins() -> Instruction {
        Instruction {
            program: addr(200),
            kind: InstructionKind::AdvanceNonce,
            source: None,
            destination: None,
            amount: None,
            mint: None,
            authority_type: None,
            new_authority: None,
            depth: 0,
        }
    }

    fn roles(loser: &Address, beneficiary: &Address) -> Roles {
        Roles { loser: Some(loser.clone()), beneficiary: Some(beneficiary.clone()) }
    }

    #[test]
    fn prerequisites_reject_in_table_order() {
        let market = addr(50);
        let a = addr(1);
        let b = addr(2);
        let markets = MarketList::new([market.clone()]);

        let tx = tx_with(&a, vec![], vec![]);
        assert_eq!(
            check_prerequisites(&tx, &roles(&market, &b), &markets),
            PrereqOutcome::Reject(RejectReason::LoserIsMarket)
        );
        assert_eq!(
            check_prerequisites(&tx, &roles(&a, &market), &markets),
            PrereqOutcome::Reject(RejectReason::BeneficiaryIsMarket)
        );
        // loser-side check outranks the beneficiary-side check.
        assert_eq!(
            check_prerequisites(&tx, &roles(&market, &market), &markets),
            PrereqOutcome::Reject(RejectReason::LoserIsMarket)
        );

        let mut noisy = tx_with(&a, vec![], vec![]);
        noisy.logs.push("Program log: Instruction: Sell".to_string());
        assert_eq!(
            check_prerequisites(&noisy, &roles(&a, &b), &markets),
            PrereqOutcome::Reject(RejectReason::LogKeyword("sell".to_string()))
        );

        assert_eq!(
            check_prerequisites(&tx, &roles(&a, &a), &markets),
            PrereqOutcome::Reject(RejectReason::SelfDealing)
        );
        assert_eq!(check_prerequisites(&tx, &roles(&a, &b), &markets), PrereqOutcome::Pass);
    }

    #[test]
    fn prerequisites_pass_with_absent_roles() {
        let a = addr(1);
        let markets = MarketList::default();
        let tx = tx_with(&a, vec![], vec![]);
        assert!(check_prerequisites(&tx, &Roles::default(), &markets).passed());
    }

    #[test]
    fn stmt_requires_strictly_more_than_two_transfers() {
        let v = addr(1);
        let p = addr(2);
        let entries = vec![
            token_entry(&addr(10), &v, &addr(20), 100, 0, 6),
            token_entry(&addr(11), &v, &addr(21), 40, 0, 6),
        ];
        let two = tx_with(
            &v,
            entries.clone(),
            vec![transfer_ins(&v, &p, 1, 0), transfer_ins(&v, &p, 1, 0)],
        );
        assert!(detect_stmt(&two).is_none());

        let three = tx_with(
            &v,
            entries,
            vec![
                transfer_ins(&v, &p, 1, 0),
                transfer_ins(&v, &p, 1, 0),
                transfer_ins(&v, &p, 1, 1),
            ],
        );
        let ev = detect_stmt(&three).expect("fires");
        assert_eq!(ev.transfer_count, 3);
        assert_eq!(ev.drained_tokens.len(), 2);
        assert!(!ev.durable_nonce);
    }

    #[test]
    fn stmt_requires_two_token_drains() {
        let v = addr(1);
        let p = addr(2);
        // Only one token drained plus a native drain: not enough.
        let tx = tx_with(
            &v,
            vec![
                native_entry(&v, 100, 0),
                token_entry(&addr(10), &v, &addr(20), 100, 0, 6),
            ],
            vec![
                transfer_ins(&v, &p, 1, 0),
                transfer_ins(&v, &p, 1, 0),
                transfer_ins(&v, &p, 1, 0),
            ],
        );
        assert!(detect_stmt(&tx).is_none());
    }

    #[test]
    fn stmt_reports_durable_nonce() {
        let v = addr(1);
        let p = addr(2);
        let tx = tx_with(
            &v,
            vec![
                token_entry(&addr(10), &v, &addr(20), 100, 0, 6),
                token_entry(&addr(11), &v, &addr(21), 40, 0, 6),
            ],
            vec![
                advance_nonce_ins(),
                transfer_ins(&v, &p, 1, 0),
                transfer_ins(&v, &p, 1, 0),
                transfer_ins(&v, &p, 1, 0),
            ],
        );
        assert!(detect_stmt(&tx).expect("fires").durable_nonce);
    }

    #[test]
    fn aat_fires_on_assign_or_owner_set_authority() {
        let wallet = addr(1);
        let program = addr(2);
        let tx = tx_with(&wallet, vec![], vec![assign_ins(&wallet, &program)]);
        let ev = detect_aat(&tx).expect("assign fires");
        assert_eq!(ev.reassignments.len(), 1);
        assert_eq!(ev.reassignments[0].scope, AuthorityScope::Wallet);

        let token_acct = addr(3);
        let phisher = addr(4);
        let tx = tx_with(
            &wallet,
            vec![token_entry(&token_acct, &wallet, &addr(5), 50, 50, 6)],
            vec![set_authority_ins(&token_acct, &phisher, ACCOUNT_OWNER_AUTHORITY)],
        );
        let ev = detect_aat(&tx).expect("setAuthority accountowner fires");
        assert_eq!(ev.reassignments[0].scope, AuthorityScope::Token);
        assert_eq!(ev.reassignments[0].old_owner, Some(wallet.clone()));
        // captured: snapshot of the reassigned token account.
        assert_eq!(ev.captured.len(), 1);
        assert_eq!(ev.captured[0].2, 50);

        let tx = tx_with(
            &wallet,
            vec![],
            vec![set_authority_ins(&token_acct, &phisher, "minttokens")],
        );
        assert!(detect_aat(&tx).is_none(), "wrong authority type must not fire");
    }

    #[test]
    fn aat_both_reassignments_reported() {
        let wallet = addr(1);
        let program = addr(2);
        let token_acct = addr(3);
        let phisher = addr(4);
        let tx = tx_with(
            &wallet,
            vec![token_entry(&token_acct, &wallet, &addr(5), 75, 75, 6)],
            vec![
                assign_ins(&wallet, &program),
                set_authority_ins(&token_acct, &phisher, ACCOUNT_OWNER_AUTHORITY),
            ],
        );
        let ev = detect_aat(&tx).expect("fires");
        assert_eq!(ev.reassignments.len(), 2);
        assert_eq!(ev.reassignments[0].scope, AuthorityScope::Wallet);
        assert_eq!(ev.reassignments[1].scope, AuthorityScope::Token);
    }

    #[test]
    fn vanity_matcher_prefix_suffix_and_allowlist() {
        let allowlist = OfficialAllowlist::default();
        let hit = Address::new("iBGtY2LBEmTiVrmPCgHRGdCPZJcDEmmkDxbLhV11111").unwrap();
        assert!(match_vanity(&hit, &allowlist));
        let prefix_only = Address::new("CompuV3LmCTW7AGGnM6YBftCJkKP3ZKkK1fCAY8L7eM1").unwrap();
        assert!(match_vanity(&prefix_only, &allowlist));
        let official = Address::new("ComputeBudget111111111111111111111111111111").unwrap();
        assert!(!match_vanity(&official, &allowlist));
        let plain = addr(77);
        assert!(
            !match_vanity(&plain, &allowlist),
            "{} should not look official",
            plain
        );
    }

    #[test]
    fn isa_needs_transfer_drain_and_vanity_beneficiary() {
        let victim = addr(1);
        let vanity = Address::new("CaNCU6LiZUKc7Su3avu5jDbdDXdKeAmv625c4M11111").unwrap();
        let plain = addr(2);
        let allowlist = OfficialAllowlist::default();

        let drained_tx = |beneficiary: &Address| {
            tx_with(
                &victim,
                vec![
                    native_entry(&victim, 1_000_000, 0),
                    native_entry(beneficiary, 0, 995_000),
                ],
                vec![transfer_ins(&victim, beneficiary, 995_000, 0)],
            )
        };

        let tx = drained_tx(&vanity);
        let r = derive_roles(&tx, RoleFamily::TransferLike).unwrap();
        let ev = detect_isa(&tx, &r, &allowlist, DEFAULT_ISA_SUFFIX).expect("fires");
        assert_eq!(ev.beneficiary, vanity);

        let tx = drained_tx(&plain);
        let r = derive_roles(&tx, RoleFamily::TransferLike).unwrap();
        assert!(detect_isa(&tx, &r, &allowlist, DEFAULT_ISA_SUFFIX).is_none());

        // Half-balance move: nothing drained, must not fire.
        let tx = tx_with(
            &victim,
            vec![
                native_entry(&victim, 1_000_000, 500_000),
                native_entry(&vanity, 0, 495_000),
            ],
            vec![transfer_ins(&victim, &vanity, 495_000, 0)],
        );
        let r = derive_roles(&tx, RoleFamily::TransferLike).unwrap();
        assert!(detect_isa(&tx, &r, &allowlist, DEFAULT_ISA_SUFFIX).is_none());
    }

    #[test]
    fn classify_orders_types_and_uses_highest_precedence_roles() {
        let wallet = addr(1);
        let program = addr(2);
        let attacker_owner = addr(3);
        let m1 = addr(21);
        let m2 = addr(22);
        // A transaction that both drains tokens (STMT) and reassigns the
        // wallet (AAT): AAT wins precedence and supplies the roles.
        let tx = tx_with(
            &wallet,
            vec![
                native_entry(&wallet, 10_000, 5_000),
                token_entry(&addr(11), &wallet, &m1, 100, 0, 6),
                token_entry(&addr(12), &wallet, &m2, 30, 0, 6),
                token_entry(&addr(13), &attacker_owner, &m1, 0, 100, 6),
                token_entry(&addr(14), &attacker_owner, &m2, 0, 30, 6),
            ],
            vec![
                transfer_ins(&wallet, &attacker_owner, 1, 0),
                transfer_ins(&wallet, &attacker_owner, 1, 0),
                transfer_ins(&wallet, &attacker_owner, 1, 0),
                assign_ins(&wallet, &program),
            ],
        );
        let det = classify(&tx, &Ruleset::default()).expect("detects");
        assert_eq!(det.phish_types, vec![PhishType::Aat, PhishType::Stmt]);
        assert_eq!(det.victim, wallet);
        assert_eq!(det.phisher, program, "phisher comes from the authority family");
        assert!(det.victim != det.phisher);
    }

    #[test]
    fn classify_skips_failed_transactions() {
        let wallet = addr(1);
        let mut tx = tx_with(&wallet, vec![], vec![assign_ins(&wallet, &addr(2))]);
        tx.success = false;
        assert!(classify(&tx, &Ruleset::default()).is_none());
    }

    #[test]
    fn classify_benign_single_transfer_is_clean() {
        let a = addr(1);
        let b = addr(2);
        let tx = tx_with(
            &a,
            vec![native_entry(&a, 1_000_000, 500_000), native_entry(&b, 0, 495_000)],
            vec![transfer_ins(&a, &b, 495_000, 0)],
        );
        assert!(classify(&tx, &Ruleset::default()).is_none());
    }

    #[test]
    fn classify_suppresses_benign_program_reassignment() {
        let wallet = addr(1);
        let router = addr(2);
        let tx = tx_with(
            &wallet,
            vec![native_entry(&wallet, 100_000, 95_000)],
            vec![assign_ins(&wallet, &router)],
        );
        let default_rules = Ruleset::default();
        assert!(classify(&tx, &default_rules).is_some(), "flagged with empty allowlist");

        let mut tuned = Ruleset::default();
        tuned.benign_programs.insert(router.clone());
        assert!(classify(&tx, &tuned).is_none(), "allowlisting the program clears it");
    }

    #[test]
    fn classify_is_pure() {
        let wallet = addr(1);
        let tx = tx_with(
            &wallet,
            vec![native_entry(&wallet, 100_000, 95_000)],
            vec![assign_ins(&wallet, &addr(2))],
        );
        let rules = Ruleset::default();
        assert_eq!(classify(&tx, &rules), classify(&tx, &rules));
    }

    #[test]
    fn detection_serialization_roundtrip() {
        let wallet = addr(1);
        let tx = tx_with(
            &wallet,
            vec![native_entry(&wallet, 100_000, 95_000)],
            vec![assign_ins(&wallet, &addr(2))],
        );
        let det = classify(&tx, &Ruleset::default()).unwrap();
        let line = serde_json::to_string(&det).unwrap();
        let back: Detection = serde_json::from_str(&line).unwrap();
        assert_eq!(det, back);
        assert!(line.contains("\"schema_version\":\"1\""));
        assert!(line.contains("\"AAT\""));
    }
}
