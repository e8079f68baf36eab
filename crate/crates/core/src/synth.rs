//! Seeded generator of labeled synthetic transactions: benign transfers,
//! market activity, self-dealing, and the three phishing families.
//!
//! Transactions are built as raw RPC-shaped payloads and normalized through
//! the same path production data takes, so every generated corpus exercises
//! the full ingest pipeline. Regenerating with the same seed and parameters
//! reproduces the corpus byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::ingest::{self, normalize, RawTransactionRecord};
use crate::rules::MarketList;
use crate::txmodel::{Address, Asset, Transaction};

const SYSTEM_PROGRAM: &str = "11111111111111111111111111111111";
const TOKEN_PROGRAM: &str = "TokenkegQfeZyiNwAJbNbGKPFXCWuBvf9Ss623VQ5DA";
const MEMO_PROGRAM: &str = "MemoSq4gqABAXKb96qnH8TysNcWxMyWCqXgDLGmfcHr";

/// Ground-truth class of one generated transaction.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Benign,
    Market,
    SelfDealing,
    Stmt,
    AatWallet,
    AatToken,
    AatBoth,
    Isa,
}

impl Label {
    pub fn is_phishing(&self) -> bool {
        matches!(self, Label::Stmt | Label::AatWallet | Label::AatToken | Label::AatBoth | Label::Isa)
    }

    /// The exact set of families the classifier must report, in precedence
    /// order; empty for non-phishing labels.
    pub fn expected_types(&self) -> Vec<crate::rules::PhishType> {
        use crate::rules::PhishType::*;
        match self {
            Label::Stmt => vec![Stmt],
            Label::AatWallet | Label::AatToken | Label::AatBoth => vec![Aat],
            Label::Isa => vec![Isa],
            _ => vec![],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Market => "market",
            Label::SelfDealing => "self_dealing",
            Label::Stmt => "stmt",
            Label::AatWallet => "aat_wallet",
            Label::AatToken => "aat_token",
            Label::AatBoth => "aat_both",
            Label::Isa => "isa",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What the generator knows about one transaction it built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub signature: String,
    pub label: Label,
    pub victim: Option<Address>,
    pub phisher: Option<Address>,
    /// Expected `drained_assets` output, in balance order.
    pub drained: Vec<(Address, Asset)>,
    pub durable_nonce: bool,
    pub block_time: i64,
    pub fee: u64,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus invariant violated: {0}")]
    Invariant(String),
}

/// Builds a raw `getTransaction`-shaped payload. Used by the generators and
/// by tests that need precise control over payload contents.
pub struct RawTxBuilder {
    signature: String,
    slot: u64,
    block_time: i64,
    fee: u64,
    failed: bool,
    recent_blockhash: String,
    keys: Vec<(Address, bool, bool)>,
    pre_native: Vec<u64>,
    post_native: Vec<u64>,
    instructions: Vec<Value>,
    inner: BTreeMap<usize, Vec<Value>>,
    pre_token: Vec<Value>,
    post_token: Vec<Value>,
    logs: Vec<String>,
}

impl RawTxBuilder {
    pub fn new(signature: impl Into<String>, slot: u64, block_time: i64, fee_payer: &Address) -> Self {
        let mut b = Self {
            signature: signature.into(),
            slot,
            block_time,
            fee: 5_000,
            failed: false,
            recent_blockhash: SYSTEM_PROGRAM.to_string(),
            keys: Vec::new(),
            pre_native: Vec::new(),
            post_native: Vec::new(),
            instructions: Vec::new(),
            inner: BTreeMap::new(),
            pre_token: Vec::new(),
            post_token: Vec::new(),
            logs: Vec::new(),
        };
        b.key_index(fee_payer, true);
        b
    }

    pub fn fee(mut self, fee: u64) -> Self {
        self.fee = fee;
        self
    }

    pub fn failed(mut self) -> Self {
        self.failed = true;
        self
    }

    pub fn recent_blockhash(mut self, hash: impl Into<String>) -> Self {
        self.recent_blockhash = hash.into();
        self
    }

    fn key_index(&mut self, address: &Address, signer: bool) -> usize {
        if let Some(i) = self.keys.iter().position(|(a, _, _)| a == address) {
            if signer {
                self.keys[i].1 = true;
            }
            return i;
        }
        self.keys.push((address.clone(), signer, true));
        self.pre_native.push(0);
        self.post_native.push(0);
        self.keys.len() - 1
    }

    /// Record an extra signer (beyond the fee payer).
    pub fn signer(mut self, address: &Address) -> Self {
        self.key_index(address, true);
        self
    }

    /// Set the lamport balances of an account.
    pub fn native(mut self, address: &Address, pre: u64, post: u64) -> Self {
        let i = self.key_index(address, false);
        self.pre_native[i] = pre;
        self.post_native[i] = post;
        self
    }

    /// Record a token-account balance pair.
    pub fn token(
        mut self,
        account: &Address,
        owner: &Address,
        mint: &Address,
        pre: u64,
        post: u64,
        decimals: u8,
    ) -> Self {
        let i = self.key_index(account, false);
        let row = |amount: u64| {
            json!({
                "accountIndex": i,
                "mint": mint.as_str(),
                "owner": owner.as_str(),
                "programId": TOKEN_PROGRAM,
                "uiTokenAmount": {
                    "amount": amount.to_string(),
                    "decimals": decimals,
                    "uiAmountString": ui_amount_string(amount, decimals),
                },
            })
        };
        self.pre_token.push(row(pre));
        self.post_token.push(row(post));
        self
    }

    pub fn log(mut self, line: impl Into<String>) -> Self {
        self.logs.push(line.into());
        self
    }

    fn push_parsed(&mut self, program_label: &str, program_id: &str, parsed: Value) {
        let pid = Address::new(program_id).expect("program ids are valid");
        self.key_index(&pid, false);
        self.instructions.push(json!({
            "program": program_label,
            "programId": program_id,
            "parsed": parsed,
            "stackHeight": Value::Null,
        }));
    }

    pub fn sys_transfer(mut self, source: &Address, destination: &Address, lamports: u64) -> Self {
        self.key_index(source, false);
        self.key_index(destination, false);
        self.push_parsed(
            "system",
            SYSTEM_PROGRAM,
            json!({"type": "transfer", "info": {
                "source": source.as_str(),
                "destination": destination.as_str(),
                "lamports": lamports,
            }}),
        );
        self
    }

    pub fn spl_transfer(
        mut self,
        source: &Address,
        destination: &Address,
        authority: &Address,
        amount: u64,
    ) -> Self {
        self.key_index(source, false);
        self.key_index(destination, false);
        self.push_parsed(
            "spl-token",
            TOKEN_PROGRAM,
            json!({"type": "transfer", "info": {
                "source": source.as_str(),
                "destination": destination.as_str(),
                "authority": authority.as_str(),
                "amount": amount.to_string(),
            }}),
        );
        self
    }

    pub fn assign(mut self, account: &Address, new_owner: &Address) -> Self {
        self.key_index(account, false);
        self.push_parsed(
            "system",
            SYSTEM_PROGRAM,
            json!({"type": "assign", "info": {
                "account": account.as_str(),
                "owner": new_owner.as_str(),
            }}),
        );
        self
    }

    /// `authority_type` is the raw on-chain spelling, e.g. "accountOwner".
    pub fn set_authority(
        mut self,
        account: &Address,
        authority: &Address,
        new_authority: &Address,
        authority_type: &str,
    ) -> Self {
        self.key_index(account, false);
        self.push_parsed(
            "spl-token",
            TOKEN_PROGRAM,
            json!({"type": "setAuthority", "info": {
                "account": account.as_str(),
                "authority": authority.as_str(),
                "newAuthority": new_authority.as_str(),
                "authorityType": authority_type,
            }}),
        );
        self
    }

    pub fn advance_nonce(mut self, nonce_account: &Address, authority: &Address) -> Self {
        self.key_index(nonce_account, false);
        self.push_parsed(
            "system",
            SYSTEM_PROGRAM,
            json!({"type": "advanceNonce", "info": {
                "nonceAccount": nonce_account.as_str(),
                "nonceAuthority": authority.as_str(),
            }}),
        );
        self
    }

    pub fn memo(mut self, text: &str) -> Self {
        self.push_parsed("spl-memo", MEMO_PROGRAM, Value::String(text.to_string()));
        self
    }

    /// Attach an inner (CPI) instruction under the top-level instruction at
    /// `parent_index`, at the given stack height (2 = first inner level).
    pub fn inner_spl_transfer(
        mut self,
        parent_index: usize,
        stack_height: u32,
        source: &Address,
        destination: &Address,
        authority: &Address,
        amount: u64,
    ) -> Self {
        self.key_index(source, false);
        self.key_index(destination, false);
        self.inner.entry(parent_index).or_default().push(json!({
            "program": "spl-token",
            "programId": TOKEN_PROGRAM,
            "parsed": {"type": "transfer", "info": {
                "source": source.as_str(),
                "destination": destination.as_str(),
                "authority": authority.as_str(),
                "amount": amount.to_string(),
            }},
            "stackHeight": stack_height,
        }));
        self
    }

    pub fn build(self) -> RawTransactionRecord {
        let account_keys: Vec<Value> = self
            .keys
            .iter()
            .map(|(a, signer, writable)| {
                json!({
                    "pubkey": a.as_str(),
                    "signer": signer,
                    "writable": writable,
                    "source": "transaction",
                })
            })
            .collect();
        let inner: Vec<Value> = self
            .inner
            .iter()
            .map(|(index, instructions)| json!({"index": index, "instructions": instructions}))
            .collect();
        let payload = json!({
            "blockTime": self.block_time,
            "slot": self.slot,
            "meta": {
                "err": if self.failed { json!({"InstructionError": [0, "Custom"]}) } else { Value::Null },
                "fee": self.fee,
                "preBalances": self.pre_native,
                "postBalances": self.post_native,
                "preTokenBalances": self.pre_token,
                "postTokenBalances": self.post_token,
                "logMessages": self.logs,
                "innerInstructions": inner,
            },
            "transaction": {
                "signatures": [self.signature],
                "message": {
                    "accountKeys": account_keys,
                    "instructions": self.instructions,
                    "recentBlockhash": self.recent_blockhash,
                },
            },
        });
        RawTransactionRecord {
            signature: self.signature,
            fetched_at: Utc.timestamp_opt(self.block_time, 0).single().unwrap_or_default(),
            payload: serde_json::value::RawValue::from_string(payload.to_string())
                .expect("payload is valid json"),
        }
    }
}

fn ui_amount_string(amount: u64, decimals: u8) -> String {
    if decimals == 0 {
        return amount.to_string();
    }
    let divisor = 10u128.pow(decimals as u32);
    let whole = amount as u128 / divisor;
    let frac = amount as u128 % divisor;
    let frac_str = format!("{:0width$}", frac, width = decimals as usize);
    let trimmed = frac_str.trim_end_matches('0');
    if trimmed.is_empty() {
        whole.to_string()
    } else {
        format!("{whole}.{trimmed}")
    }
}

/// Deterministic source of synthetic addresses, signatures and amounts.
pub struct SynthRng {
    rng: ChaCha8Rng,
}

impl SynthRng {
    pub fn seeded(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn signature(&mut self) -> String {
        let mut bytes = [0u8; 64];
        self.rng.fill(&mut bytes);
        bs58::encode(bytes).into_string()
    }

    /// A plain wallet address, never official-looking.
    pub fn address(&mut self) -> Address {
        loop {
            let mut bytes = [0u8; 32];
            self.rng.fill(&mut bytes);
            let a = Address::from_bytes(&bytes);
            let s = a.as_str();
            if !s.starts_with(crate::rules::VANITY_PREFIX) && !s.ends_with("1111") {
                return a;
            }
        }
    }

    /// An address string-patched to carry an official-looking prefix or
    /// suffix, re-sampled until the patched text decodes to 32 bytes.
    pub fn vanity_address(&mut self, prefix: Option<&str>, suffix: Option<&str>) -> Address {
        loop {
            let mut bytes = [0u8; 32];
            self.rng.fill(&mut bytes);
            let mut s = bs58::encode(bytes).into_string();
            if let Some(p) = prefix {
                if p.len() >= s.len() {
                    continue;
                }
                s.replace_range(0..p.len(), p);
            }
            if let Some(suf) = suffix {
                if suf.len() >= s.len() {
                    continue;
                }
                let n = s.len();
                s.replace_range(n - suf.len()..n, suf);
            }
            if let Ok(a) = Address::new(&s) {
                return a;
            }
        }
    }

    /// Log-uniform amount over [10^3, 10^12] base units.
    pub fn amount(&mut self) -> u64 {
        let exp: f64 = self.rng.gen_range(3.0..12.0);
        10f64.powf(exp) as u64
    }

    pub fn gen_range(&mut self, range: std::ops::Range<u64>) -> u64 {
        self.rng.gen_range(range)
    }

    pub fn coin(&mut self) -> bool {
        self.rng.gen_bool(0.5)
    }
}

fn normalize_built(record: RawTransactionRecord) -> (RawTransactionRecord, Transaction) {
    let tx = normalize(&record).expect("generator emits well-formed payloads");
    (record, tx)
}

/// One generated transaction: the raw record, its normalized form, and the
/// generator's ground truth.
pub struct GeneratedTx {
    pub raw: RawTransactionRecord,
    pub tx: Transaction,
    pub truth: GroundTruth,
}

fn truth(
    tx: &Transaction,
    label: Label,
    victim: Option<Address>,
    phisher: Option<Address>,
    durable_nonce: bool,
    fee: u64,
) -> GroundTruth {
    GroundTruth {
        signature: tx.signature.clone(),
        label,
        victim,
        phisher,
        drained: crate::txmodel::drained_assets(tx),
        durable_nonce,
        block_time: tx.block_time,
        fee,
    }
}

/// An ordinary transfer: one or two instructions, nothing official-looking,
/// at most one emptied balance. Must never fire a detector.
pub fn gen_benign_transfer(rng: &mut SynthRng, slot: u64, block_time: i64) -> GeneratedTx {
    let sender = rng.address();
    let receiver = rng.address();
    let fee = 5_000u64;
    let amount = rng.amount().max(fee * 2);

    let record = if rng.coin() {
        // Partial native transfer; every balance stays positive.
        let pre = amount * 2 + fee;
        RawTxBuilder::new(rng.signature(), slot, block_time, &sender)
            .fee(fee)
            .native(&sender, pre, pre - amount - fee)
            .native(&receiver, 1_000, 1_000 + amount)
            .sys_transfer(&sender, &receiver, amount)
            .build()
    } else {
        // Full drain of a single token class: still benign (one drain, one
        // transfer, plain beneficiary).
        let mint = rng.address();
        let src_acct = rng.address();
        let dst_acct = rng.address();
        let pre = amount;
        RawTxBuilder::new(rng.signature(), slot, block_time, &sender)
            .fee(fee)
            .native(&sender, 1_000_000_000, 1_000_000_000 - fee)
            .token(&src_acct, &sender, &mint, pre, 0, 6)
            .token(&dst_acct, &receiver, &mint, 0, pre, 6)
            .spl_transfer(&src_acct, &dst_acct, &sender, pre)
            .build()
    };
    let (raw, tx) = normalize_built(record);
    let t = truth(&tx, Label::Benign, None, None, false, fee);
    GeneratedTx { raw, tx, truth: t }
}

/// Benign later-life transaction for a known actor; used to script phisher
/// dormancy periods.
pub fn gen_later_activity(
    rng: &mut SynthRng,
    actor: &Address,
    slot: u64,
    block_time: i64,
) -> GeneratedTx {
    let receiver = rng.address();
    let fee = 5_000u64;
    let amount = rng.amount().max(fee * 2);
    let pre = amount * 3;
    let record = RawTxBuilder::new(rng.signature(), slot, block_time, actor)
        .fee(fee)
        .native(actor, pre, pre - amount - fee)
        .native(&receiver, 0, amount)
        .sys_transfer(actor, &receiver, amount)
        .build();
    let (raw, tx) = normalize_built(record);
    let t = truth(&tx, Label::Benign, None, None, false, fee);
    GeneratedTx { raw, tx, truth: t }
}

/// Market activity: swaps, market-side transfers, and SetAuthority-based
/// NFT sales. Always rejected by the prerequisites, never detected.
pub fn gen_market_swap(
    rng: &mut SynthRng,
    markets: &MarketList,
    slot: u64,
    block_time: i64,
) -> GeneratedTx {
    let market_addrs: Vec<&Address> = markets.addresses.iter().collect();
    assert!(!market_addrs.is_empty(), "market generator needs a starter list");
    let market = market_addrs[(rng.gen_range(0..market_addrs.len() as u64)) as usize].clone();
    let user = rng.address();
    let fee = 5_000u64;
    let amount = rng.amount().max(fee * 2);
    let variant = rng.gen_range(0..4);

    let record = match variant {
        // Market is the beneficiary of the user's payment.
        0 => RawTxBuilder::new(rng.signature(), slot, block_time, &user)
            .fee(fee)
            .native(&user, amount * 2 + fee, amount - fee + amount)
            .native(&market, 10 * amount, 11 * amount)
            .sys_transfer(&user, &market, amount)
            .build(),
        // Market is the loser: payout leg of a swap.
        1 => {
            let mint = rng.address();
            let pool_acct = rng.address();
            let user_acct = rng.address();
            RawTxBuilder::new(rng.signature(), slot, block_time, &user)
                .fee(fee)
                .native(&user, amount, amount - fee)
                .token(&pool_acct, &market, &mint, amount * 3, amount * 3 - amount, 6)
                .token(&user_acct, &user, &mint, 0, amount, 6)
                .spl_transfer(&pool_acct, &user_acct, &market, amount)
                .build()
        }
        // Keyword in the log; drains two token classes like a swap does,
        // poking directly at the multi-transfer rule.
        2 => {
            let m1 = rng.address();
            let m2 = rng.address();
            let a1 = rng.address();
            let a2 = rng.address();
            let o1 = rng.address();
            let o2 = rng.address();
            RawTxBuilder::new(rng.signature(), slot, block_time, &user)
                .fee(fee)
                .native(&user, amount, amount - fee)
                .token(&a1, &user, &m1, amount, 0, 6)
                .token(&a2, &user, &m2, amount / 2, 0, 6)
                .token(&o1, &market, &m1, 0, amount, 6)
                .token(&o2, &market, &m2, 0, amount / 2, 6)
                .spl_transfer(&a1, &o1, &user, amount)
                .spl_transfer(&a2, &o2, &user, amount / 2)
                .spl_transfer(&a1, &o1, &user, 0)
                .log("Program log: Instruction: Sell")
                .build()
        }
        // NFT sale settled via SetAuthority: an authority-transfer pattern
        // with a market beneficiary.
        _ => {
            let nft_acct = rng.address();
            let nft_mint = rng.address();
            RawTxBuilder::new(rng.signature(), slot, block_time, &user)
                .fee(fee)
                .native(&user, amount * 2, amount * 2 - fee + amount)
                .native(&market, amount * 10, amount * 9)
                .token(&nft_acct, &user, &nft_mint, 1, 1, 0)
                .set_authority(&nft_acct, &user, &market, "accountOwner")
                .sys_transfer(&market, &user, amount)
                .log("Program log: Instruction: Buy")
                .build()
        }
    };
    let (raw, tx) = normalize_built(record);
    let t = truth(&tx, Label::Market, None, None, false, fee);
    GeneratedTx { raw, tx, truth: t }
}

/// Funds shuffled between accounts of one owner: fires the raw multi-transfer
/// predicates but must be rejected as self-dealing.
pub fn gen_self_dealing(rng: &mut SynthRng, slot: u64, block_time: i64) -> GeneratedTx {
    let owner = rng.address();
    let m1 = rng.address();
    let m2 = rng.address();
    let src1 = rng.address();
    let src2 = rng.address();
    let dst1 = rng.address();
    let dst2 = rng.address();
    let fee = 5_000u64;
    let x = rng.amount();
    let y = rng.amount();
    let record = RawTxBuilder::new(rng.signature(), slot, block_time, &owner)
        .fee(fee)
        .native(&owner, 1_000_000_000, 1_000_000_000 - fee)
        .token(&src1, &owner, &m1, x, 0, 6)
        .token(&src2, &owner, &m2, y, 0, 9)
        .token(&dst1, &owner, &m1, 0, x, 6)
        .token(&dst2, &owner, &m2, 0, y, 9)
        .spl_transfer(&src1, &dst1, &owner, x)
        .spl_transfer(&src2, &dst2, &owner, y)
        .spl_transfer(&src1, &dst1, &owner, 0)
        .build();
    let (raw, tx) = normalize_built(record);
    let t = truth(&tx, Label::SelfDealing, None, None, false, fee);
    GeneratedTx { raw, tx, truth: t }
}

/// Wallet draining: `n_tokens` token classes emptied to a single beneficiary
/// through `n_tokens + 1` transfers (tokens plus the native sweep).
pub fn gen_stmt_phish(
    rng: &mut SynthRng,
    phisher: &Address,
    n_tokens: usize,
    durable_nonce: bool,
    slot: u64,
    block_time: i64,
) -> GeneratedTx {
    assert!(n_tokens >= 2, "a draining transaction empties at least two token classes");
    let victim = rng.address();
    let fee = 5_000u64;
    let native_pre = rng.amount().max(fee * 10);

    let mut b = RawTxBuilder::new(rng.signature(), slot, block_time, &victim).fee(fee);
    if durable_nonce {
        let nonce_account = rng.address();
        b = b.advance_nonce(&nonce_account, &victim);
    }
    // Native sweep: everything minus the fee.
    b = b
        .native(&victim, native_pre, 0)
        .native(phisher, 1_000, 1_000 + native_pre - fee)
        .sys_transfer(&victim, phisher, native_pre - fee);
    for _ in 0..n_tokens {
        let mint = rng.address();
        let victim_acct = rng.address();
        let phisher_acct = rng.address();
        let amount = rng.amount();
        b = b
            .token(&victim_acct, &victim, &mint, amount, 0, 6)
            .token(&phisher_acct, phisher, &mint, 0, amount, 6)
            .spl_transfer(&victim_acct, &phisher_acct, &victim, amount);
    }
    let (raw, tx) = normalize_built(b.build());
    let t = truth(&tx, Label::Stmt, Some(victim), Some(phisher.clone()), durable_nonce, fee);
    GeneratedTx { raw, tx, truth: t }
}

/// Which authority is stolen by a generated authority-transfer transaction.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AatKind {
    Wallet,
    Token,
    Both,
}

impl AatKind {
    fn label(&self) -> Label {
        match self {
            AatKind::Wallet => Label::AatWallet,
            AatKind::Token => Label::AatToken,
            AatKind::Both => Label::AatBoth,
        }
    }
}

/// Authority transfer: wallet `assign` to a phishing program, token
/// `setAuthority` to the phisher, or the two-step pattern in one transaction.
pub fn gen_aat_phish(
    rng: &mut SynthRng,
    phisher: &Address,
    kind: AatKind,
    slot: u64,
    block_time: i64,
) -> GeneratedTx {
    let victim = rng.address();
    let fee = 5_000u64;
    let native_pre = rng.amount().max(fee * 10);

    let mut b = RawTxBuilder::new(rng.signature(), slot, block_time, &victim)
        .fee(fee)
        .native(&victim, native_pre, native_pre - fee);

    if matches!(kind, AatKind::Wallet | AatKind::Both) {
        b = b.assign(&victim, phisher);
    }
    if matches!(kind, AatKind::Token | AatKind::Both) {
        let mint = rng.address();
        let token_acct = rng.address();
        let amount = rng.amount();
        b = b
            .token(&token_acct, &victim, &mint, amount, amount, 6)
            .set_authority(&token_acct, &victim, phisher, "accountOwner");
    }
    let (raw, tx) = normalize_built(b.build());
    let t = truth(&tx, kind.label(), Some(victim), Some(phisher.clone()), false, fee);
    GeneratedTx { raw, tx, truth: t }
}

/// Negative control for the authority rule: a `setAuthority` with a
/// non-owner authority type. Labeled benign, must not fire.
pub fn gen_aat_negative_control(rng: &mut SynthRng, slot: u64, block_time: i64) -> GeneratedTx {
    let owner = rng.address();
    let delegate = rng.address();
    let mint = rng.address();
    let token_acct = rng.address();
    let fee = 5_000u64;
    let amount = rng.amount();
    let record = RawTxBuilder::new(rng.signature(), slot, block_time, &owner)
        .fee(fee)
        .native(&owner, 1_000_000_000, 1_000_000_000 - fee)
        .token(&token_acct, &owner, &mint, amount, amount, 6)
        .set_authority(&token_acct, &owner, &delegate, "closeAccount")
        .build();
    let (raw, tx) = normalize_built(record);
    let t = truth(&tx, Label::Benign, None, None, false, fee);
    GeneratedTx { raw, tx, truth: t }
}

/// System-account impersonation: funds drained to a vanity beneficiary.
/// `phisher` must already carry the official-looking prefix or suffix.
pub fn gen_isa_phish(
    rng: &mut SynthRng,
    phisher: &Address,
    slot: u64,
    block_time: i64,
) -> GeneratedTx {
    let victim = rng.address();
    let fee = 5_000u64;

    let record = if rng.coin() {
        // Native drain straight to the vanity address.
        let native_pre = rng.amount().max(fee * 10);
        RawTxBuilder::new(rng.signature(), slot, block_time, &victim)
            .fee(fee)
            .native(&victim, native_pre, 0)
            .native(phisher, 2_000, 2_000 + native_pre - fee)
            .sys_transfer(&victim, phisher, native_pre - fee)
            .build()
    } else {
        // Token drain into an account owned by the vanity address.
        let mint = rng.address();
        let victim_acct = rng.address();
        let phisher_acct = rng.address();
        let amount = rng.amount();
        RawTxBuilder::new(rng.signature(), slot, block_time, &victim)
            .fee(fee)
            .native(&victim, 1_000_000_000, 1_000_000_000 - fee)
            .token(&victim_acct, &victim, &mint, amount, 0, 6)
            .token(&phisher_acct, phisher, &mint, 0, amount, 6)
            .spl_transfer(&victim_acct, &phisher_acct, &victim, amount)
            .build()
    };
    let (raw, tx) = normalize_built(record);
    let t = truth(&tx, Label::Isa, Some(victim), Some(phisher.clone()), false, fee);
    GeneratedTx { raw, tx, truth: t }
}

/// Negative control for the impersonation rule: the drain goes to a real
/// official account. Labeled benign, must not fire.
pub fn gen_isa_negative_control(rng: &mut SynthRng, slot: u64, block_time: i64) -> GeneratedTx {
    let victim = rng.address();
    let official = Address::new("ComputeBudget111111111111111111111111111111").unwrap();
    let fee = 5_000u64;
    let native_pre = rng.amount().max(fee * 10);
    let record = RawTxBuilder::new(rng.signature(), slot, block_time, &victim)
        .fee(fee)
        .native(&victim, native_pre, 0)
        .native(&official, 0, native_pre - fee)
        .sys_transfer(&victim, &official, native_pre - fee)
        .build();
    let (raw, tx) = normalize_built(record);
    let t = truth(&tx, Label::Benign, None, None, false, fee);
    GeneratedTx { raw, tx, truth: t }
}

/// Counts per label for corpus generation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub benign: usize,
    pub market: usize,
    pub self_dealing: usize,
    pub stmt: usize,
    pub aat: usize,
    pub isa: usize,
    /// Phisher pool size per family; detections per phisher follow from the
    /// per-family counts.
    pub phishers_per_family: usize,
    /// Carve one later-life benign transaction per phisher out of the
    /// benign budget, scripting a positive dormancy period.
    pub later_activity: bool,
}

impl CorpusSpec {
    pub fn total(&self) -> usize {
        self.benign + self.market + self.self_dealing + self.stmt + self.aat + self.isa
    }

    /// The acceptance mix: 1,000 transactions, 40% benign, 10% market, 10%
    /// self-dealing, 40% phishing split over the three families.
    pub fn standard(seed: u64) -> Self {
        Self {
            seed,
            benign: 400,
            market: 100,
            self_dealing: 100,
            stmt: 134,
            aat: 133,
            isa: 133,
            phishers_per_family: 4,
            later_activity: true,
        }
    }
}

/// Per-label and temporal tallies recorded by the generator; the oracle the
/// detection pipeline is tested against.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub per_label: BTreeMap<String, usize>,
    pub phishing_total: usize,
    pub distinct_phishers: usize,
    /// "YYYY-MM" -> family label -> expected detection count.
    pub monthly: BTreeMap<String, BTreeMap<String, usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub seed: u64,
    pub spec: CorpusSpec,
    pub tallies: Tallies,
}

/// A generated corpus: transactions, labels, ground truth, and tallies.
pub struct LabeledCorpus {
    pub raw_records: Vec<RawTransactionRecord>,
    pub transactions: Vec<Transaction>,
    pub labels: BTreeMap<String, Label>,
    pub truth: Vec<GroundTruth>,
    pub manifest: Manifest,
}

impl LabeledCorpus {
    pub fn truth_for(&self, signature: &str) -> Option<&GroundTruth> {
        self.truth.iter().find(|t| t.signature == signature)
    }

    /// Histories keyed by phisher: every transaction the phisher signs or
    /// appears in, in corpus order.
    pub fn phisher_histories(&self) -> BTreeMap<Address, Vec<Transaction>> {
        let phishers: BTreeSet<Address> =
            self.truth.iter().filter_map(|t| t.phisher.clone()).collect();
        let mut histories: BTreeMap<Address, Vec<Transaction>> = BTreeMap::new();
        for phisher in &phishers {
            let history: Vec<Transaction> = self
                .transactions
                .iter()
                .filter(|tx| {
                    tx.signers.contains(phisher)
                        || tx.balances.iter().any(|b| {
                            &b.account == phisher || b.owner.as_ref() == Some(phisher)
                        })
                })
                .cloned()
                .collect();
            histories.insert(phisher.clone(), history);
        }
        histories
    }
}

/// Base timestamp for scripted corpora: 2024-01-01T00:00:00Z.
pub const CORPUS_BASE_TIME: i64 = 1_704_067_200;

fn month_bucket(ts: i64) -> String {
    let dt: DateTime<Utc> = Utc.timestamp_opt(ts, 0).single().expect("valid timestamp");
    format!("{:04}-{:02}", dt.year(), dt.month())
}

/// Scripted block time: month `index % 12` of 2024, advancing through the
/// month with `step`.
fn scripted_time(index: usize, step: usize) -> i64 {
    let month = (index % 12) as u32;
    let day_seconds = 86_400;
    // Months spaced 30 days apart keeps bucketing trivial and distinct.
    CORPUS_BASE_TIME + month as i64 * 31 * day_seconds + (step as i64) * 3_600
}

/// Generate a labeled corpus. A pure function of (spec, markets): the same
/// inputs reproduce the corpus bit for bit.
pub fn generate_corpus(spec: &CorpusSpec, markets: &MarketList) -> LabeledCorpus {
    let mut rng = SynthRng::seeded(spec.seed);
    let mut generated: Vec<GeneratedTx> = Vec::with_capacity(spec.total());

    // Phisher pools, one per family. ISA phishers alternate the prefix and
    // suffix patterns (and both four- and five-one suffixes).
    let stmt_phishers: Vec<Address> =
        (0..spec.phishers_per_family.max(1)).map(|_| rng.address()).collect();
    let aat_phishers: Vec<Address> =
        (0..spec.phishers_per_family.max(1)).map(|_| rng.address()).collect();
    let isa_phishers: Vec<Address> = (0..spec.phishers_per_family.max(1))
        .map(|i| match i % 3 {
            0 => rng.vanity_address(Some(crate::rules::VANITY_PREFIX), None),
            1 => rng.vanity_address(None, Some("11111")),
            _ => rng.vanity_address(None, Some("1111")),
        })
        .collect();

    let mut slot = 250_000_000u64;
    let mut next_slot = || {
        slot += 5;
        slot
    };

    for i in 0..spec.stmt {
        let phisher = &stmt_phishers[i % stmt_phishers.len()];
        let n_tokens = 2 + (i % 4);
        let durable_nonce = i % 7 == 0;
        generated.push(gen_stmt_phish(
            &mut rng,
            phisher,
            n_tokens,
            durable_nonce,
            next_slot(),
            scripted_time(i, i / 12),
        ));
    }
    for i in 0..spec.aat {
        let phisher = &aat_phishers[i % aat_phishers.len()];
        let kind = match i % 3 {
            0 => AatKind::Wallet,
            1 => AatKind::Token,
            _ => AatKind::Both,
        };
        generated.push(gen_aat_phish(
            &mut rng,
            phisher,
            kind,
            next_slot(),
            scripted_time(i + 4, i / 12),
        ));
    }
    for i in 0..spec.isa {
        let phisher = &isa_phishers[i % isa_phishers.len()];
        generated.push(gen_isa_phish(
            &mut rng,
            phisher,
            next_slot(),
            scripted_time(i + 8, i / 12),
        ));
    }
    for i in 0..spec.market {
        generated.push(gen_market_swap(&mut rng, markets, next_slot(), scripted_time(i, 40 + i / 12)));
    }
    for i in 0..spec.self_dealing {
        generated.push(gen_self_dealing(&mut rng, next_slot(), scripted_time(i + 2, 50 + i / 12)));
    }

    // Benign budget: later-activity transactions for phishers first, then
    // negative controls, then ordinary transfers.
    let mut benign_left = spec.benign;
    if spec.later_activity {
        let mut last_phish: BTreeMap<Address, i64> = BTreeMap::new();
        for g in &generated {
            if let Some(p) = &g.truth.phisher {
                let t = last_phish.entry(p.clone()).or_insert(g.truth.block_time);
                *t = (*t).max(g.truth.block_time);
            }
        }
        for (i, (phisher, last)) in last_phish.iter().enumerate() {
            if benign_left == 0 {
                break;
            }
            // Scripted dormancy: (index + 1) weeks after the last phish.
            let later = last + (i as i64 + 1) * 7 * 86_400;
            generated.push(gen_later_activity(&mut rng, phisher, next_slot(), later));
            benign_left -= 1;
        }
    }
    let controls = benign_left.min(if benign_left >= 20 { 10 } else { 0 });
    for i in 0..controls {
        let g = if i % 2 == 0 {
            gen_aat_negative_control(&mut rng, next_slot(), scripted_time(i, 60))
        } else {
            gen_isa_negative_control(&mut rng, next_slot(), scripted_time(i, 61))
        };
        generated.push(g);
        benign_left -= 1;
    }
    for i in 0..benign_left {
        generated.push(gen_benign_transfer(&mut rng, next_slot(), scripted_time(i, 70 + i / 12)));
    }

    assemble(spec, generated)
}

fn assemble(spec: &CorpusSpec, generated: Vec<GeneratedTx>) -> LabeledCorpus {
    let mut labels = BTreeMap::new();
    let mut truth = Vec::with_capacity(generated.len());
    let mut raw_records = Vec::with_capacity(generated.len());
    let mut transactions = Vec::with_capacity(generated.len());
    let mut tallies = Tallies::default();
    let mut phishers: BTreeSet<Address> = BTreeSet::new();

    for g in generated {
        let sig = g.truth.signature.clone();
        assert!(
            labels.insert(sig.clone(), g.truth.label).is_none(),
            "signature collision in generated corpus: {sig}"
        );
        *tallies.per_label.entry(g.truth.label.name().to_string()).or_insert(0) += 1;
        if g.truth.label.is_phishing() {
            tallies.phishing_total += 1;
            if let Some(p) = &g.truth.phisher {
                phishers.insert(p.clone());
            }
            let bucket = month_bucket(g.truth.block_time);
            let family = g.truth.label.expected_types()[0].label().to_string();
            *tallies.monthly.entry(bucket).or_default().entry(family).or_insert(0) += 1;
        }
        truth.push(g.truth);
        raw_records.push(g.raw);
        transactions.push(g.tx);
    }
    tallies.distinct_phishers = phishers.len();

    LabeledCorpus {
        raw_records,
        transactions,
        labels,
        truth,
        manifest: Manifest {
            schema_version: "1".to_string(),
            seed: spec.seed,
            spec: spec.clone(),
            tallies,
        },
    }
}

/// File names written by [`write_corpus`].
pub const CORPUS_TRANSACTIONS_FILE: &str = "transactions.jsonl";
pub const CORPUS_LABELS_FILE: &str = "labels.json";
pub const CORPUS_MANIFEST_FILE: &str = "manifest.json";

#[derive(Serialize, Deserialize)]
struct LabelsFile {
    schema_version: String,
    labels: BTreeMap<String, Label>,
}

/// Write a corpus: ingest-compatible transactions, a labels sidecar, and
/// the manifest. Returns the manifest path.
pub fn write_corpus(corpus: &LabeledCorpus, dir: impl AsRef<Path>) -> Result<PathBuf, SynthError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| SynthError::Io { path: dir.to_path_buf(), source: e })?;

    let tx_path = dir.join(CORPUS_TRANSACTIONS_FILE);
    ingest::write_raw_fixture(&tx_path, &corpus.raw_records)
        .map_err(|e| SynthError::Io { path: tx_path.clone(), source: std::io::Error::other(e.to_string()) })?;

    let labels_path = dir.join(CORPUS_LABELS_FILE);
    let labels = LabelsFile {
        schema_version: "1".to_string(),
        labels: corpus.labels.clone(),
    };
    fs::write(&labels_path, pretty(&labels))
        .map_err(|e| SynthError::Io { path: labels_path, source: e })?;

    let manifest_path = dir.join(CORPUS_MANIFEST_FILE);
    fs::write(&manifest_path, pretty(&corpus.manifest))
        .map_err(|e| SynthError::Io { path: manifest_path.clone(), source: e })?;
    Ok(manifest_path)
}

/// Read back the labels sidecar of a written corpus.
pub fn read_labels(dir: impl AsRef<Path>) -> Result<BTreeMap<String, Label>, SynthError> {
    let path = dir.as_ref().join(CORPUS_LABELS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| SynthError::Io { path: path.clone(), source: e })?;
    let file: LabelsFile = serde_json::from_str(&text)
        .map_err(|e| SynthError::Invariant(format!("labels file {}: {e}", path.display())))?;
    Ok(file.labels)
}

/// Read back the manifest of a written corpus.
pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest, SynthError> {
    let path = dir.as_ref().join(CORPUS_MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| SynthError::Io { path: path.clone(), source: e })?;
    serde_json::from_str(&text)
        .map_err(|e| SynthError::Invariant(format!("manifest file {}: {e}", path.display())))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}
