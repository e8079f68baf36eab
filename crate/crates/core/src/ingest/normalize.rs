//! Bridges the RPC `getTransaction` (jsonParsed encoding) document to the
//! canonical transaction model. Every failure names the offending JSON path.

use std::collections::HashMap;

use serde_json::Value;

use crate::ingest::{IngestError, RawTransactionRecord};
use crate::txmodel::{
    Address, Asset, BalanceEntry, Instruction, InstructionKind, Transaction, NATIVE_DECIMALS,
};

/// Program labels / ids whose parsed instructions we map onto typed kinds.
const SYSTEM_PROGRAM_ID: &str = "11111111111111111111111111111111";
const TOKEN_PROGRAM_ID: &str = "TokenkegQfeZyiNwAJbNbGKPFXCWuBvf9Ss623VQ5DA";
const TOKEN_2022_PROGRAM_ID: &str = "TokenzQdBNbLqP5VEhdkAS6EPFLC1PHnBqCXEpPxuEb";

/// Lowercase the authority type and strip spaces so the on-chain spelling
/// `accountOwner` and the human spelling `account owner` compare equal.
pub fn normalize_authority_type(raw: &str) -> String {
    raw.chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(|c| c.to_lowercase())
        .collect()
}

fn malformed(path: impl Into<String>, detail: impl Into<String>) -> IngestError {
    IngestError::MalformedPayload {
        path: path.into(),
        detail: detail.into(),
    }
}

fn field<'a>(v: &'a Value, key: &str, path: &str) -> Result<&'a Value, IngestError> {
    v.get(key)
        .ok_or_else(|| malformed(format!("{path}.{key}"), "missing field"))
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str, IngestError> {
    v.as_str().ok_or_else(|| malformed(path, "expected string"))
}

fn as_u64(v: &Value, path: &str) -> Result<u64, IngestError> {
    v.as_u64().ok_or_else(|| malformed(path, "expected unsigned integer"))
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a [Value], IngestError> {
    v.as_array()
        .map(|a| a.as_slice())
        .ok_or_else(|| malformed(path, "expected array"))
}

fn parse_address(v: &Value, path: &str) -> Result<Address, IngestError> {
    let s = as_str(v, path)?;
    Address::new(s).map_err(|e| malformed(path, e.to_string()))
}

fn opt_address(info: &Value, key: &str, path: &str) -> Result<Option<Address>, IngestError> {
    match info.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => Ok(Some(parse_address(v, &format!("{path}.{key}"))?)),
    }
}

/// Token amounts arrive as decimal strings, lamports as JSON numbers.
fn parse_amount(v: &Value, path: &str) -> Result<u64, IngestError> {
    match v {
        Value::Number(n) => n
            .as_u64()
            .ok_or_else(|| malformed(path, "amount out of u64 range")),
        Value::String(s) => s
            .parse::<u64>()
            .map_err(|_| malformed(path, "amount string is not a u64")),
        _ => Err(malformed(path, "expected amount as number or string")),
    }
}

/// Normalize one raw record into a [`Transaction`].
pub fn normalize(raw: &RawTransactionRecord) -> Result<Transaction, IngestError> {
    let payload: Value = serde_json::from_str(raw.payload.get())
        .map_err(|e| malformed("payload", e.to_string()))?;
    let tx = normalize_payload(&payload)?;
    if !raw.signature.is_empty() && raw.signature != tx.signature {
        return Err(malformed(
            "signature",
            format!(
                "record signature {} does not match payload signature {}",
                raw.signature, tx.signature
            ),
        ));
    }
    Ok(tx)
}

/// Normalize a parsed `getTransaction` result document.
pub fn normalize_payload(payload: &Value) -> Result<Transaction, IngestError> {
    let slot = as_u64(field(payload, "slot", "")?, ".slot")?;
    let block_time = field(payload, "blockTime", "")?
        .as_i64()
        .ok_or_else(|| malformed(".blockTime", "expected integer seconds"))?;

    let meta = field(payload, "meta", "")?;
    let success = meta.get("err").map_or(true, Value::is_null);

    let transaction = field(payload, "transaction", "")?;
    let signatures = as_array(field(transaction, "signatures", ".transaction")?, ".transaction.signatures")?;
    let signature = as_str(
        signatures
            .first()
            .ok_or_else(|| malformed(".transaction.signatures", "empty"))?,
        ".transaction.signatures[0]",
    )?
    .to_string();

    let message = field(transaction, "message", ".transaction")?;
    let keys_json = as_array(field(message, "accountKeys", ".transaction.message")?, ".transaction.message.accountKeys")?;
    let mut account_keys = Vec::with_capacity(keys_json.len());
    let mut signers = Vec::new();
    for (i, k) in keys_json.iter().enumerate() {
        let path = format!(".transaction.message.accountKeys[{i}]");
        let pubkey = parse_address(field(k, "pubkey", &path)?, &format!("{path}.pubkey"))?;
        if k.get("signer").and_then(Value::as_bool).unwrap_or(false) {
            signers.push(pubkey.clone());
        }
        account_keys.push(pubkey);
    }
    if signers.is_empty() {
        return Err(malformed(".transaction.message.accountKeys", "no signer account"));
    }
    let fee_payer = signers[0].clone();

    let logs = match meta.get("logMessages") {
        None | Some(Value::Null) => Vec::new(),
        Some(v) => as_array(v, ".meta.logMessages")?
            .iter()
            .enumerate()
            .map(|(i, l)| as_str(l, &format!(".meta.logMessages[{i}]")).map(str::to_string))
            .collect::<Result<_, _>>()?,
    };

    let balances = build_balances(meta, &account_keys)?;

    // Map token account -> mint so plain spl-token transfers (which do not
    // carry the mint) can still report one.
    let mut account_mints: HashMap<&Address, &Address> = HashMap::new();
    for entry in &balances {
        if let Asset::Token(mint) = &entry.asset {
            account_mints.insert(&entry.account, mint);
        }
    }

    let mut instructions = Vec::new();
    let top_level = as_array(field(message, "instructions", ".transaction.message")?, ".transaction.message.instructions")?;
    let inner_groups = inner_instruction_groups(meta)?;
    for (i, ins) in top_level.iter().enumerate() {
        let path = format!(".transaction.message.instructions[{i}]");
        instructions.push(parse_instruction(ins, 0, &account_mints, &path)?);
        if let Some(group) = inner_groups.get(&i) {
            for (j, inner) in group.iter().enumerate() {
                let path = format!(".meta.innerInstructions[{i}][{j}]");
                let depth = inner
                    .get("stackHeight")
                    .and_then(Value::as_u64)
                    .map(|h| h.saturating_sub(1) as u32)
                    .unwrap_or(1)
                    .max(1);
                instructions.push(parse_instruction(inner, depth, &account_mints, &path)?);
            }
        }
    }

    let tx = Transaction {
        signature,
        slot,
        block_time,
        instructions,
        logs,
        balances,
        signers,
        fee_payer,
        success,
    };
    tx.validate()
        .map_err(|e| malformed(".transaction", e.to_string()))?;
    Ok(tx)
}

fn inner_instruction_groups(meta: &Value) -> Result<HashMap<usize, Vec<Value>>, IngestError> {
    let mut groups: HashMap<usize, Vec<Value>> = HashMap::new();
    match meta.get("innerInstructions") {
        None | Some(Value::Null) => {}
        Some(v) => {
            for (i, group) in as_array(v, ".meta.innerInstructions")?.iter().enumerate() {
                let path = format!(".meta.innerInstructions[{i}]");
                let index = as_u64(field(group, "index", &path)?, &format!("{path}.index"))? as usize;
                let inner = as_array(field(group, "instructions", &path)?, &format!("{path}.instructions"))?;
                groups.entry(index).or_default().extend(inner.iter().cloned());
            }
        }
    }
    Ok(groups)
}

fn build_balances(meta: &Value, keys: &[Address]) -> Result<Vec<BalanceEntry>, IngestError> {
    let pre = as_array(field(meta, "preBalances", ".meta")?, ".meta.preBalances")?;
    let post = as_array(field(meta, "postBalances", ".meta")?, ".meta.postBalances")?;
    if pre.len() != keys.len() || post.len() != keys.len() {
        return Err(malformed(
            ".meta.preBalances",
            "balance arrays must match accountKeys length",
        ));
    }

    let mut balances = Vec::new();
    for (i, key) in keys.iter().enumerate() {
        let pre_amt = as_u64(&pre[i], &format!(".meta.preBalances[{i}]"))?;
        let post_amt = as_u64(&post[i], &format!(".meta.postBalances[{i}]"))?;
        // Accounts that never held lamports carry no information.
        if pre_amt == 0 && post_amt == 0 {
            continue;
        }
        balances.push(BalanceEntry {
            account: key.clone(),
            owner: None,
            asset: Asset::Native,
            pre: pre_amt,
            post: post_amt,
            decimals: NATIVE_DECIMALS,
        });
    }

    let pre_tokens = token_rows(meta, "preTokenBalances", keys)?;
    let post_tokens = token_rows(meta, "postTokenBalances", keys)?;

    let mut pre_by_key: HashMap<(Address, Address), &TokenRow> = HashMap::new();
    for row in &pre_tokens {
        pre_by_key.insert((row.account.clone(), row.mint.clone()), row);
    }
    let mut consumed: Vec<(Address, Address)> = Vec::new();
    for row in &post_tokens {
        let key = (row.account.clone(), row.mint.clone());
        let pre_amt = pre_by_key.get(&key).map(|r| r.amount).unwrap_or(0);
        consumed.push(key);
        balances.push(BalanceEntry {
            account: row.account.clone(),
            owner: row.owner.clone(),
            asset: Asset::Token(row.mint.clone()),
            pre: pre_amt,
            post: row.amount,
            decimals: row.decimals,
        });
    }
    // Accounts present pre but absent post: balance observed, then gone.
    for row in &pre_tokens {
        let key = (row.account.clone(), row.mint.clone());
        if !consumed.contains(&key) {
            balances.push(BalanceEntry {
                account: row.account.clone(),
                owner: row.owner.clone(),
                asset: Asset::Token(row.mint.clone()),
                pre: row.amount,
                post: 0,
                decimals: row.decimals,
            });
        }
    }
    Ok(balances)
}

struct TokenRow {
    account: Address,
    owner: Option<Address>,
    mint: Address,
    amount: u64,
    decimals: u8,
}

fn token_rows(meta: &Value, key: &str, keys: &[Address]) -> Result<Vec<TokenRow>, IngestError> {
    let mut rows = Vec::new();
    match meta.get(key) {
        None | Some(Value::Null) => {}
        Some(v) => {
            for (i, row) in as_array(v, &format!(".meta.{key}"))?.iter().enumerate() {
                let path = format!(".meta.{key}[{i}]");
                let index =
                    as_u64(field(row, "accountIndex", &path)?, &format!("{path}.accountIndex"))? as usize;
                let account = keys
                    .get(index)
                    .ok_or_else(|| malformed(format!("{path}.accountIndex"), "index out of range"))?
                    .clone();
                let mint = parse_address(field(row, "mint", &path)?, &format!("{path}.mint"))?;
                let owner = opt_address(row, "owner", &path)?;
                let ui = field(row, "uiTokenAmount", &path)?;
                let amount = parse_amount(
                    field(ui, "amount", &format!("{path}.uiTokenAmount"))?,
                    &format!("{path}.uiTokenAmount.amount"),
                )?;
                let decimals = as_u64(
                    field(ui, "decimals", &format!("{path}.uiTokenAmount"))?,
                    &format!("{path}.uiTokenAmount.decimals"),
                )? as u8;
                rows.push(TokenRow { account, owner, mint, amount, decimals });
            }
        }
    }
    Ok(rows)
}

fn parse_instruction(
    ins: &Value,
    depth: u32,
    account_mints: &HashMap<&Address, &Address>,
    path: &str,
) -> Result<Instruction, IngestError> {
    let program_id = parse_address(field(ins, "programId", path)?, &format!("{path}.programId"))?;
    let program_label = ins.get("program").and_then(Value::as_str).unwrap_or("");

    let parsed = match ins.get("parsed") {
        Some(p) => p,
        // Opaque instruction: only raw accounts and data. Keep the program
        // label when the RPC supplied one.
        None => {
            return Ok(other(
                program_id,
                if program_label.is_empty() { "unknown" } else { program_label },
                depth,
            ));
        }
    };

    let kind_name = match parsed {
        // Memo-style parsing: the whole payload is a string.
        Value::String(_) => {
            return Ok(other(
                program_id,
                if program_label.is_empty() { "unknown" } else { program_label },
                depth,
            ));
        }
        _ => as_str(field(parsed, "type", &format!("{path}.parsed"))?, &format!("{path}.parsed.type"))?,
    };
    let info = parsed.get("info").unwrap_or(&Value::Null);
    let info_path = format!("{path}.parsed.info");

    let is_system = program_id.as_str() == SYSTEM_PROGRAM_ID || program_label == "system";
    let is_token = program_id.as_str() == TOKEN_PROGRAM_ID
        || program_id.as_str() == TOKEN_2022_PROGRAM_ID
        || program_label == "spl-token";

    let ins = if is_system {
        match kind_name {
            "transfer" | "transferWithSeed" => Instruction {
                program: program_id,
                kind: InstructionKind::Transfer,
                source: opt_address(info, "source", &info_path)?,
                destination: opt_address(info, "destination", &info_path)?,
                amount: Some(parse_amount(
                    field(info, "lamports", &info_path)?,
                    &format!("{info_path}.lamports"),
                )?),
                mint: None,
                authority_type: None,
                new_authority: None,
                depth,
            },
            "assign" | "assignWithSeed" => Instruction {
                program: program_id,
                kind: InstructionKind::Assign,
                source: opt_address(info, "account", &info_path)?,
                destination: None,
                amount: None,
                mint: None,
                authority_type: None,
                new_authority: opt_address(info, "owner", &info_path)?,
                depth,
            },
            "createAccount" | "createAccountWithSeed" => Instruction {
                program: program_id,
                kind: InstructionKind::CreateAccount,
                source: opt_address(info, "source", &info_path)?,
                destination: opt_address(info, "newAccount", &info_path)?,
                amount: info
                    .get("lamports")
                    .map(|v| parse_amount(v, &format!("{info_path}.lamports")))
                    .transpose()?,
                mint: None,
                authority_type: None,
                new_authority: None,
                depth,
            },
            k if k.eq_ignore_ascii_case("advanceNonce")
                || k.eq_ignore_ascii_case("advanceNonceAccount") =>
            {
                Instruction {
                    program: program_id,
                    kind: InstructionKind::AdvanceNonce,
                    source: opt_address(info, "nonceAccount", &info_path)?,
                    destination: None,
                    amount: None,
                    mint: None,
                    authority_type: None,
                    new_authority: None,
                    depth,
                }
            }
            k => other(program_id, k, depth),
        }
    } else if is_token {
        match kind_name {
            "transfer" => {
                let source = opt_address(info, "source", &info_path)?;
                let destination = opt_address(info, "destination", &info_path)?;
                let mint = destination
                    .as_ref()
                    .and_then(|d| account_mints.get(d))
                    .or_else(|| source.as_ref().and_then(|s| account_mints.get(s)))
                    .map(|m| (*m).clone());
                Instruction {
                    program: program_id,
                    kind: InstructionKind::Transfer,
                    source,
                    destination,
                    amount: Some(parse_amount(
                        field(info, "amount", &info_path)?,
                        &format!("{info_path}.amount"),
                    )?),
                    mint,
                    authority_type: None,
                    new_authority: None,
                    depth,
                }
            }
            "transferChecked" => {
                let ui = field(info, "tokenAmount", &info_path)?;
                Instruction {
                    program: program_id,
                    kind: InstructionKind::Transfer,
                    source: opt_address(info, "source", &info_path)?,
                    destination: opt_address(info, "destination", &info_path)?,
                    amount: Some(parse_amount(
                        field(ui, "amount", &format!("{info_path}.tokenAmount"))?,
                        &format!("{info_path}.tokenAmount.amount"),
                    )?),
                    mint: opt_address(info, "mint", &info_path)?,
                    authority_type: None,
                    new_authority: None,
                    depth,
                }
            }
            "setAuthority" => {
                let account = opt_address(info, "account", &info_path)?
                    .or(opt_address(info, "mint", &info_path)?);
                let authority_type = as_str(
                    field(info, "authorityType", &info_path)?,
                    &format!("{info_path}.authorityType"),
                )?;
                Instruction {
                    program: program_id,
                    kind: InstructionKind::SetAuthority,
                    source: account,
                    destination: None,
                    amount: None,
                    mint: None,
                    authority_type: Some(normalize_authority_type(authority_type)),
                    new_authority: opt_address(info, "newAuthority", &info_path)?,
                    depth,
                }
            }
            k => other(program_id, k, depth),
        }
    } else {
        other(program_id, kind_name, depth)
    };
    Ok(ins)
}

fn other(program: Address, name: &str, depth: u32) -> Instruction {
    Instruction {
        program,
        kind: InstructionKind::Other(name.to_string()),
        source: None,
        destination: None,
        amount: None,
        mint: None,
        authority_type: None,
        new_authority: None,
        depth,
    }
}
