//! Canonical transaction model: source-agnostic view of a Solana transaction
//! plus the derived quantities (balance deltas, drained assets, loser and
//! beneficiary roles) that the detection rules consume.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lamports per SOL; native balances always carry 9 decimals.
pub const NATIVE_DECIMALS: u8 = 9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AddressError {
    #[error("address `{0}` has length {1}, expected 32-44 characters")]
    BadLength(String, usize),
    #[error("address `{0}` is not valid base58")]
    NotBase58(String),
    #[error("address `{0}` decodes to {1} bytes, expected 32")]
    NotThirtyTwoBytes(String, usize),
}

/// A base58-encoded 32-byte account address.
///
/// Construction validates the encoding; comparison and hashing are plain
/// string operations afterwards (base58 encoding is canonical, so equal
/// byte strings always yield equal text).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Address(String);

impl Address {
    pub fn new(value: impl Into<String>) -> Result<Self, AddressError> {
        let value = value.into();
        if !(32..=44).contains(&value.len()) {
            return Err(AddressError::BadLength(value.clone(), value.len()));
        }
        let bytes = bs58::decode(&value)
            .into_vec()
            .map_err(|_| AddressError::NotBase58(value.clone()))?;
        if bytes.len() != 32 {
            return Err(AddressError::NotThirtyTwoBytes(value.clone(), bytes.len()));
        }
        Ok(Self(value))
    }

    pub fn from_bytes(bytes: &[u8; 32]) -> Self {
        Self(bs58::encode(bytes).into_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        let v = bs58::decode(&self.0).into_vec().expect("validated on construction");
        out.copy_from_slice(&v);
        out
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.0)
    }
}

impl TryFrom<String> for Address {
    type Error = AddressError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl std::str::FromStr for Address {
    type Err = AddressError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl From<Address> for String {
    fn from(a: Address) -> String {
        a.0
    }
}

/// Key used for the native asset in price tables and report columns.
/// Not a valid base58 string, so it can never collide with a mint.
pub const NATIVE_ASSET_KEY: &str = "NATIVE";

/// An asset class: the native token or an SPL token identified by its mint.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Asset {
    Native,
    Token(Address),
}

impl Asset {
    /// Stable textual key: `NATIVE` or the mint address.
    pub fn key(&self) -> &str {
        match self {
            Asset::Native => NATIVE_ASSET_KEY,
            Asset::Token(mint) => mint.as_str(),
        }
    }

    pub fn from_key(key: &str) -> Result<Self, AddressError> {
        if key == NATIVE_ASSET_KEY {
            Ok(Asset::Native)
        } else {
            Ok(Asset::Token(Address::new(key)?))
        }
    }
}

impl fmt::Display for Asset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl Serialize for Asset {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.key())
    }
}

impl<'de> Deserialize<'de> for Asset {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Asset::from_key(&s).map_err(serde::de::Error::custom)
    }
}

/// Instruction kinds the rules care about; everything else is retained
/// verbatim under `Other` so evidence output stays faithful to the payload.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionKind {
    Transfer,
    Assign,
    SetAuthority,
    AdvanceNonce,
    CreateAccount,
    Other(String),
}

/// One instruction, top-level or inner (CPI). `depth` is 0 for top-level
/// instructions and >= 1 for inner instructions.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Instruction {
    pub program: Address,
    pub kind: InstructionKind,
    pub source: Option<Address>,
    pub destination: Option<Address>,
    pub amount: Option<u64>,
    pub mint: Option<Address>,
    pub authority_type: Option<String>,
    pub new_authority: Option<Address>,
    pub depth: u32,
}

impl Instruction {
    fn check(&self) -> Result<(), ModelError> {
        match self.kind {
            InstructionKind::Transfer => {
                if self.source.is_none() || self.destination.is_none() || self.amount.is_none() {
                    return Err(ModelError::IncompleteInstruction {
                        kind: "transfer",
                        missing: "source, destination and amount must all be present",
                    });
                }
            }
            InstructionKind::SetAuthority => {
                if self.authority_type.is_none() {
                    return Err(ModelError::IncompleteInstruction {
                        kind: "setAuthority",
                        missing: "authority_type must be present",
                    });
                }
            }
            InstructionKind::Assign => {
                if self.new_authority.is_none() {
                    return Err(ModelError::IncompleteInstruction {
                        kind: "assign",
                        missing: "new_authority must be present",
                    });
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Pre/post balance pair for one (account, asset). Amounts are raw base
/// units; native entries always have 9 decimals.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BalanceEntry {
    pub account: Address,
    /// Owner of the account when known (token accounts report it; wallet
    /// accounts own themselves and leave this unset).
    pub owner: Option<Address>,
    pub asset: Asset,
    pub pre: u64,
    pub post: u64,
    pub decimals: u8,
}

impl BalanceEntry {
    pub fn delta(&self) -> i128 {
        self.post as i128 - self.pre as i128
    }

    /// Table-style drain predicate: held something before, nothing after.
    pub fn drained(&self) -> bool {
        self.pre != 0 && self.post == 0
    }

    /// The wallet this entry belongs to: the recorded owner for token
    /// accounts, the account itself otherwise.
    pub fn effective_owner(&self) -> &Address {
        self.owner.as_ref().unwrap_or(&self.account)
    }
}

/// Normalized transaction. Immutable after construction; every operation
/// over it is a pure function.
#[derive(Clone, PartialEq, Debug)]
pub struct Transaction {
    pub signature: String,
    pub slot: u64,
    /// UTC seconds since epoch.
    pub block_time: i64,
    pub instructions: Vec<Instruction>,
    pub logs: Vec<String>,
    pub balances: Vec<BalanceEntry>,
    pub signers: Vec<Address>,
    pub fee_payer: Address,
    pub success: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("transaction has no signers")]
    NoSigners,
    #[error("fee payer {fee_payer} is not the first signer {first_signer}")]
    FeePayerNotFirstSigner { fee_payer: String, first_signer: String },
    #[error("signature `{0}` is not a base58 64-byte signature")]
    BadSignature(String),
    #[error("{kind} instruction incomplete: {missing}")]
    IncompleteInstruction { kind: &'static str, missing: &'static str },
}

impl Transaction {
    /// Structural invariants shared by every source (RPC, fixture, synthetic).
    pub fn validate(&self) -> Result<(), ModelError> {
        let first = self.signers.first().ok_or(ModelError::NoSigners)?;
        if *first != self.fee_payer {
            return Err(ModelError::FeePayerNotFirstSigner {
                fee_payer: self.fee_payer.to_string(),
                first_signer: first.to_string(),
            });
        }
        match bs58::decode(&self.signature).into_vec() {
            Ok(bytes) if bytes.len() == 64 => {}
            _ => return Err(ModelError::BadSignature(self.signature.clone())),
        }
        for ins in &self.instructions {
            ins.check()?;
        }
        Ok(())
    }

    /// Sum of native-asset deltas over the entries present. For a
    /// well-formed fixture this equals minus the fee.
    pub fn native_delta_sum(&self) -> i128 {
        self.balances
            .iter()
            .filter(|b| b.asset == Asset::Native)
            .map(|b| b.delta())
            .sum()
    }

    pub fn has_instruction(&self, kind: &InstructionKind) -> bool {
        self.instructions.iter().any(|i| &i.kind == kind)
    }

    /// Count of instructions of `kind` at any depth.
    pub fn count_instructions(&self, kind: &InstructionKind) -> usize {
        self.instructions.iter().filter(|i| &i.kind == kind).count()
    }
}

/// Post minus pre for the first entry matching (account, asset); 0 when no
/// entry exists.
pub fn net_delta(tx: &Transaction, account: &Address, asset: &Asset) -> i128 {
    tx.balances
        .iter()
        .find(|b| &b.account == account && &b.asset == asset)
        .map(|b| b.delta())
        .unwrap_or(0)
}

/// Every balance entry that went from a nonzero balance to zero, in the
/// order the entries appear.
pub fn drained_assets(tx: &Transaction) -> Vec<(Address, Asset)> {
    tx.balances
        .iter()
        .filter(|b| b.drained())
        .map(|b| (b.account.clone(), b.asset.clone()))
        .collect()
}

/// Which rule family the loser/beneficiary derivation serves. Transfer-style
/// rules read money movement; authority-style rules read owner reassignment.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RoleFamily {
    TransferLike,
    AuthorityLike,
}

/// The loser (tx.from) and beneficiary (tx.to) of a transaction under a
/// given rule family. Either side may be absent when no account qualifies.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Roles {
    pub loser: Option<Address>,
    pub beneficiary: Option<Address>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("roles underdetermined for {signature} under {family:?}: no balance movement or authority instruction")]
pub struct RoleUnderdetermined {
    pub signature: String,
    pub family: RoleFamily,
}

/// Derive the loser and beneficiary of a transaction.
///
/// Transfer-like: the loser is the wallet losing the largest number of
/// distinct asset classes, the beneficiary the wallet gaining the most.
/// Ties prefer the fee payer when it is among the tied wallets, then the
/// lexicographically smallest address. Authority-like: the loser is the
/// pre-transaction owner of the first reassigned account and the
/// beneficiary is that instruction's new authority.
pub fn derive_roles(tx: &Transaction, family: RoleFamily) -> Result<Roles, RoleUnderdetermined> {
    match family {
        RoleFamily::TransferLike => {
            let mut losses: BTreeMap<&Address, BTreeSet<&Asset>> = BTreeMap::new();
            let mut gains: BTreeMap<&Address, BTreeSet<&Asset>> = BTreeMap::new();
            for entry in &tx.balances {
                let delta = entry.delta();
                if delta < 0 {
                    losses.entry(entry.effective_owner()).or_default().insert(&entry.asset);
                } else if delta > 0 {
                    gains.entry(entry.effective_owner()).or_default().insert(&entry.asset);
                }
            }
            if losses.is_empty() && gains.is_empty() {
                return Err(RoleUnderdetermined {
                    signature: tx.signature.clone(),
                    family,
                });
            }
            Ok(Roles {
                loser: pick_dominant(&losses, &tx.fee_payer),
                beneficiary: pick_dominant(&gains, &tx.fee_payer),
            })
        }
        RoleFamily::AuthorityLike => {
            let ins = tx
                .instructions
                .iter()
                .find(|i| matches!(i.kind, InstructionKind::Assign | InstructionKind::SetAuthority))
                .ok_or_else(|| RoleUnderdetermined {
                    signature: tx.signature.clone(),
                    family,
                })?;
            Ok(Roles {
                loser: Some(reassigned_owner(tx, ins.source.as_ref())),
                beneficiary: ins.new_authority.clone(),
            })
        }
    }
}

/// Pre-transaction owner of a reassigned account: the recorded owner when
/// the balance table knows it, the account itself when it signed, the fee
/// payer otherwise (somebody had to authorize the reassignment).
fn reassigned_owner(tx: &Transaction, reassigned: Option<&Address>) -> Address {
    if let Some(account) = reassigned {
        if let Some(owner) = tx
            .balances
            .iter()
            .find(|b| &b.account == account)
            .and_then(|b| b.owner.as_ref())
        {
            return owner.clone();
        }
        if tx.signers.contains(account) {
            return account.clone();
        }
    }
    tx.fee_payer.clone()
}

fn pick_dominant(
    counts: &BTreeMap<&Address, BTreeSet<&Asset>>,
    fee_payer: &Address,
) -> Option<Address> {
    let best = counts.values().map(|assets| assets.len()).max()?;
    if counts.get(fee_payer).map(|a| a.len()) == Some(best) {
        return Some(fee_payer.clone());
    }
    // BTreeMap iteration is address-ascending, so the first hit is the
    // lexicographically smallest tied address.
    counts
        .iter()
        .find(|(_, assets)| assets.len() == best)
        .map(|(addr, _)| (*addr).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{addr, native_entry, token_entry, tx_with};

    #[test]
    fn address_accepts_canonical_system_accounts() {
        for s in [
            "11111111111111111111111111111111",
            "ComputeBudget111111111111111111111111111111",
            "NativeLoader1111111111111111111111111111111",
            "TokenkegQfeZyiNwAJbNbGKPFXCWuBvf9Ss623VQ5DA",
        ] {
            let a = Address::new(s).unwrap();
            assert_eq!(a.as_str(), s);
        }
    }

    #[test]
    fn address_rejects_bad_input() {
        assert!(matches!(Address::new("short"), Err(AddressError::BadLength(..))));
        // 'O' and 'l' are not in the base58 alphabet.
        assert!(matches!(
            Address::new("OOOOOOOOOOOOOOOOOOOOOOOOOOOOOOOO"),
            Err(AddressError::NotBase58(..))
        ));
        // 33 ones decode to 33 zero bytes.
        assert!(matches!(
            Address::new("111111111111111111111111111111111"),
            Err(AddressError::NotThirtyTwoBytes(_, 33))
        ));
    }

    #[test]
    fn address_roundtrips_bytes() {
        let a = Address::from_bytes(&[7u8; 32]);
        assert_eq!(Address::from_bytes(&a.to_bytes()), a);
    }

    #[test]
    fn asset_key_roundtrip() {
        let mint = addr(3);
        let token = Asset::Token(mint.clone());
        assert_eq!(Asset::from_key(token.key()).unwrap(), token);
        assert_eq!(Asset::from_key("NATIVE").unwrap(), Asset::Native);
        assert_eq!(Asset::Native.key(), "NATIVE");
    }

    #[test]
    fn net_delta_subtracts_and_defaults_to_zero() {
        let victim = addr(1);
        let mint = addr(2);
        let tx = tx_with(
            &victim,
            vec![token_entry(&victim, &victim, &mint, 500, 0, 6)],
            vec![],
        );
        assert_eq!(net_delta(&tx, &victim, &Asset::Token(mint.clone())), -500);
        assert_eq!(net_delta(&tx, &addr(9), &Asset::Token(mint)), 0);
        assert_eq!(net_delta(&tx, &victim, &Asset::Native), 0);
    }

    #[test]
    fn drained_assets_keeps_only_zeroed_entries_in_order() {
        let a = addr(1);
        let usdc = addr(2);
        let tx = tx_with(
            &a,
            vec![
                token_entry(&a, &a, &usdc, 100, 0, 6),
                native_entry(&a, 5_000_000_000, 5_000_000_000),
            ],
            vec![],
        );
        let drained = drained_assets(&tx);
        assert_eq!(drained, vec![(a.clone(), Asset::Token(usdc))]);

        let empty = tx_with(&a, vec![native_entry(&a, 10, 10)], vec![]);
        assert!(drained_assets(&empty).is_empty());
    }

    #[test]
    fn drained_entries_all_have_negative_delta() {
        let a = addr(1);
        let tx = tx_with(
            &a,
            vec![
                token_entry(&a, &a, &addr(2), 100, 0, 6),
                token_entry(&a, &a, &addr(3), 50, 20, 6),
            ],
            vec![],
        );
        for (account, asset) in drained_assets(&tx) {
            assert!(net_delta(&tx, &account, &asset) < 0);
        }
    }

    #[test]
    fn transfer_roles_single_transfer() {
        let a = addr(1);
        let b = addr(2);
        let tx = tx_with(
            &a,
            vec![
                native_entry(&a, 2_000_000_000, 995_000_000),
                native_entry(&b, 0, 1_000_000_000),
            ],
            vec![],
        );
        let roles = derive_roles(&tx, RoleFamily::TransferLike).unwrap();
        assert_eq!(roles.loser, Some(a));
        assert_eq!(roles.beneficiary, Some(b));
    }

    #[test]
    fn transfer_roles_self_transfer_names_same_account() {
        let a = addr(1);
        let mint = addr(2);
        // A pays the fee (native loss) while shuffling a token between two of
        // its own accounts; gains and losses both attribute to A.
        let tx = tx_with(
            &a,
            vec![
                native_entry(&a, 1_000_000, 995_000),
                token_entry(&addr(3), &a, &mint, 70, 0, 6),
                token_entry(&addr(4), &a, &mint, 0, 70, 6),
            ],
            vec![],
        );
        let roles = derive_roles(&tx, RoleFamily::TransferLike).unwrap();
        assert_eq!(roles.loser, Some(a.clone()));
        assert_eq!(roles.beneficiary, Some(a));
    }

    #[test]
    fn transfer_roles_count_asset_classes_not_amounts() {
        let victim = addr(1);
        let attacker = addr(2);
        let m1 = addr(3);
        let m2 = addr(4);
        // Victim loses two token classes plus fee; attacker gains two classes.
        let tx = tx_with(
            &victim,
            vec![
                native_entry(&victim, 10_000, 5_000),
                token_entry(&addr(5), &victim, &m1, 100, 0, 6),
                token_entry(&addr(6), &victim, &m2, 40, 0, 9),
                token_entry(&addr(7), &attacker, &m1, 0, 100, 6),
                token_entry(&addr(8), &attacker, &m2, 0, 40, 9),
            ],
            vec![],
        );
        let roles = derive_roles(&tx, RoleFamily::TransferLike).unwrap();
        assert_eq!(roles.loser, Some(victim));
        assert_eq!(roles.beneficiary, Some(attacker));
    }

    #[test]
    fn transfer_roles_tie_breaks_prefer_fee_payer_then_smallest() {
        let payer = addr(9);
        let other = addr(1);
        let gain_a = addr(2);
        let gain_b = addr(3);
        let tx = tx_with(
            &payer,
            vec![
                native_entry(&payer, 100, 50),
                native_entry(&other, 100, 50),
                native_entry(&gain_a, 0, 40),
                native_entry(&gain_b, 0, 60),
            ],
            vec![],
        );
        let roles = derive_roles(&tx, RoleFamily::TransferLike).unwrap();
        // payer ties with `other` on one lost asset class each.
        assert_eq!(roles.loser, Some(payer));
        // neither gainer is the fee payer: smallest address wins.
        assert_eq!(roles.beneficiary, Some(gain_a.min(gain_b)));
    }

    #[test]
    fn transfer_roles_underdetermined_without_movement() {
        let a = addr(1);
        let tx = tx_with(&a, vec![native_entry(&a, 10, 10)], vec![]);
        let err = derive_roles(&tx, RoleFamily::TransferLike).unwrap_err();
        assert_eq!(err.family, RoleFamily::TransferLike);
    }

    #[test]
    fn authority_roles_take_first_reassignment() {
        let wallet = addr(1);
        let program = addr(2);
        let ins = Instruction {
            program: addr(8),
            kind: InstructionKind::Assign,
            source: Some(wallet.clone()),
            destination: None,
            amount: None,
            mint: None,
            authority_type: None,
            new_authority: Some(program.clone()),
            depth: 0,
        };
        let tx = tx_with(&wallet, vec![native_entry(&wallet, 100, 95)], vec![ins]);
        let roles = derive_roles(&tx, RoleFamily::AuthorityLike).unwrap();
        assert_eq!(roles.loser, Some(wallet));
        assert_eq!(roles.beneficiary, Some(program));
    }

    #[test]
    fn authority_roles_use_token_account_owner() {
        let wallet = addr(1);
        let token_acct = addr(2);
        let phisher = addr(3);
        let mint = addr(4);
        let ins = Instruction {
            program: addr(8),
            kind: InstructionKind::SetAuthority,
            source: Some(token_acct.clone()),
            destination: None,
            amount: None,
            mint: None,
            authority_type: Some("accountowner".into()),
            new_authority: Some(phisher.clone()),
            depth: 0,
        };
        let tx = tx_with(
            &wallet,
            vec![token_entry(&token_acct, &wallet, &mint, 50, 50, 6)],
            vec![ins],
        );
        let roles = derive_roles(&tx, RoleFamily::AuthorityLike).unwrap();
        assert_eq!(roles.loser, Some(wallet));
        assert_eq!(roles.beneficiary, Some(phisher));
    }

    #[test]
    fn authority_roles_underdetermined_without_authority_instruction() {
        let a = addr(1);
        let tx = tx_with(&a, vec![native_entry(&a, 100, 50)], vec![]);
        assert!(derive_roles(&tx, RoleFamily::AuthorityLike).is_err());
    }

    #[test]
    fn derive_roles_is_deterministic() {
        let a = addr(1);
        let tx = tx_with(
            &a,
            vec![native_entry(&a, 100, 50), native_entry(&addr(2), 0, 45)],
            vec![],
        );
        let r1 = derive_roles(&tx, RoleFamily::TransferLike).unwrap();
        let r2 = derive_roles(&tx, RoleFamily::TransferLike).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn validate_rejects_malformed_transactions() {
        let a = addr(1);
        let mut tx = tx_with(&a, vec![], vec![]);
        tx.signers.clear();
        assert!(matches!(tx.validate(), Err(ModelError::NoSigners)));

        let mut tx = tx_with(&a, vec![], vec![]);
        tx.fee_payer = addr(2);
        assert!(matches!(
            tx.validate(),
            Err(ModelError::FeePayerNotFirstSigner { .. })
        ));

        let incomplete = Instruction {
            program: addr(8),
            kind: InstructionKind::Transfer,
            source: Some(a.clone()),
            destination: None,
            amount: Some(5),
            mint: None,
            authority_type: None,
            new_authority: None,
            depth: 0,
        };
        let tx = tx_with(&a, vec![], vec![incomplete]);
        assert!(matches!(
            tx.validate(),
            Err(ModelError::IncompleteInstruction { kind: "transfer", .. })
        ));
    }
}
