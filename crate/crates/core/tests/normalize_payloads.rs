//! Normalization of hand-written RPC payloads: instruction mapping, balance
//! joining, inner-instruction depth, and error paths with JSON paths.

use serde_json::json;
use solphish_core::ingest::{normalize_authority_type, normalize_payload, IngestError};
use solphish_core::txmodel::{Asset, InstructionKind};

const SYSTEM: &str = "11111111111111111111111111111111";
const TOKEN: &str = "TokenkegQfeZyiNwAJbNbGKPFXCWuBvf9Ss623VQ5DA";
const WALLET_A: &str = "4vJ9JU1bJJE96FWSJKvHsmmFADCg4gpZQff4P3bkLKi";
const WALLET_B: &str = "8qbHbw2BbbTHBW1sbeqakYXVKRQM8Ne7pLK7m6CVfeR";
const TOKEN_ACCT: &str = "BPFLoaderUpgradeab1e11111111111111111111111";
const MINT: &str = "EPjFWdd5AufqSSqeM2qN1xzybapC8G4wEGGkZwyTDt1v";
const SIG: &str = "5VERv8NMvzbJMEkV8xnrLkEaWRtSz9CosKDYjCJjBRnbJLgp8uirBgmQpjKhoR4tjF3ZpRzrFmBV6UjKdiSZkQUW";

fn base_payload() -> serde_json::Value {
    json!({
        "blockTime": 1710000000,
        "slot": 250000000,
        "meta": {
            "err": null,
            "fee": 5000,
            "preBalances": [1000000, 0, 0],
            "postBalances": [495000, 500000, 0],
            "preTokenBalances": [],
            "postTokenBalances": [],
            "logMessages": ["Program 11111111111111111111111111111111 invoke [1]"],
            "innerInstructions": []
        },
        "transaction": {
            "signatures": [SIG],
            "message": {
                "accountKeys": [
                    {"pubkey": WALLET_A, "signer": true, "writable": true},
                    {"pubkey": WALLET_B, "signer": false, "writable": true},
                    {"pubkey": SYSTEM, "signer": false, "writable": false}
                ],
                "instructions": [
                    {"program": "system", "programId": SYSTEM,
                     "parsed": {"type": "transfer", "info": {
                         "source": WALLET_A, "destination": WALLET_B, "lamports": 500000}}}
                ],
                "recentBlockhash": SYSTEM
            }
        }
    })
}

#[test]
fn system_transfer_maps_to_native_transfer() {
    let tx = normalize_payload(&base_payload()).unwrap();
    assert_eq!(tx.signature, SIG);
    assert_eq!(tx.slot, 250000000);
    assert_eq!(tx.block_time, 1710000000);
    assert!(tx.success);
    assert_eq!(tx.signers.len(), 1);
    assert_eq!(tx.fee_payer.as_str(), WALLET_A);

    assert_eq!(tx.instructions.len(), 1);
    let ins = &tx.instructions[0];
    assert_eq!(ins.kind, InstructionKind::Transfer);
    assert_eq!(ins.amount, Some(500000));
    assert_eq!(ins.mint, None, "system transfers move the native asset");
    assert_eq!(ins.depth, 0);

    // Zero-to-zero native rows are dropped; two entries remain.
    assert_eq!(tx.balances.len(), 2);
    assert!(tx.balances.iter().all(|b| b.asset == Asset::Native));
}

#[test]
fn set_authority_normalizes_authority_type() {
    let mut payload = base_payload();
    payload["transaction"]["message"]["instructions"] = json!([
        {"program": "spl-token", "programId": TOKEN,
         "parsed": {"type": "setAuthority", "info": {
             "account": TOKEN_ACCT,
             "authority": WALLET_A,
             "newAuthority": WALLET_B,
             "authorityType": "accountOwner"}}}
    ]);
    let tx = normalize_payload(&payload).unwrap();
    let ins = &tx.instructions[0];
    assert_eq!(ins.kind, InstructionKind::SetAuthority);
    assert_eq!(ins.authority_type.as_deref(), Some("accountowner"));

    assert_eq!(normalize_authority_type("account owner"), "accountowner");
    assert_eq!(normalize_authority_type("accountOwner"), "accountowner");
    assert_eq!(normalize_authority_type("AccountOwner"), "accountowner");
    assert_eq!(normalize_authority_type("closeAccount"), "closeaccount");
}

#[test]
fn unrecognized_instruction_becomes_other_and_still_normalizes() {
    let mut payload = base_payload();
    payload["transaction"]["message"]["instructions"] = json!([
        {"program": "spl-memo", "programId": TOKEN,
         "parsed": {"type": "memo", "info": {"text": "gm"}}}
    ]);
    let tx = normalize_payload(&payload).unwrap();
    assert_eq!(tx.instructions[0].kind, InstructionKind::Other("memo".to_string()));
}

#[test]
fn memo_string_parse_and_raw_instruction_survive() {
    let mut payload = base_payload();
    payload["transaction"]["message"]["instructions"] = json!([
        // Memo-style: `parsed` is a bare string.
        {"program": "spl-memo", "programId": TOKEN, "parsed": "hello"},
        // Opaque instruction with raw accounts and data.
        {"programId": TOKEN, "accounts": [WALLET_A, WALLET_B], "data": "3Bxs4h24hBtQy9rw"}
    ]);
    let tx = normalize_payload(&payload).unwrap();
    assert_eq!(tx.instructions[0].kind, InstructionKind::Other("spl-memo".to_string()));
    assert_eq!(tx.instructions[1].kind, InstructionKind::Other("unknown".to_string()));
}

#[test]
fn token_balances_join_by_account_and_mint() {
    let mut payload = base_payload();
    payload["meta"]["preTokenBalances"] = json!([
        {"accountIndex": 1, "mint": MINT, "owner": WALLET_A,
         "uiTokenAmount": {"amount": "500", "decimals": 6}}
    ]);
    payload["meta"]["postTokenBalances"] = json!([
        {"accountIndex": 1, "mint": MINT, "owner": WALLET_A,
         "uiTokenAmount": {"amount": "0", "decimals": 6}}
    ]);
    let tx = normalize_payload(&payload).unwrap();
    let token_entry = tx
        .balances
        .iter()
        .find(|b| matches!(b.asset, Asset::Token(_)))
        .expect("token entry present");
    assert_eq!(token_entry.pre, 500);
    assert_eq!(token_entry.post, 0);
    assert_eq!(token_entry.decimals, 6);
    assert_eq!(token_entry.owner.as_ref().map(|o| o.as_str()), Some(WALLET_A));
    assert!(token_entry.drained());
}

#[test]
fn pre_only_token_row_yields_zero_post() {
    let mut payload = base_payload();
    payload["meta"]["preTokenBalances"] = json!([
        {"accountIndex": 1, "mint": MINT, "owner": WALLET_A,
         "uiTokenAmount": {"amount": "123", "decimals": 6}}
    ]);
    let tx = normalize_payload(&payload).unwrap();
    let token_entry = tx.balances.iter().find(|b| matches!(b.asset, Asset::Token(_))).unwrap();
    assert_eq!((token_entry.pre, token_entry.post), (123, 0));
}

#[test]
fn inner_instructions_preserve_order_and_depth() {
    let mut payload = base_payload();
    payload["transaction"]["message"]["instructions"] = json!([
        {"program": "system", "programId": SYSTEM,
         "parsed": {"type": "transfer", "info": {
             "source": WALLET_A, "destination": WALLET_B, "lamports": 1}}},
        {"programId": TOKEN, "accounts": [], "data": "abc"}
    ]);
    payload["meta"]["innerInstructions"] = json!([
        {"index": 1, "instructions": [
            {"program": "spl-token", "programId": TOKEN,
             "parsed": {"type": "transfer", "info": {
                 "source": WALLET_A, "destination": WALLET_B,
                 "authority": WALLET_A, "amount": "7"}},
             "stackHeight": 2},
            {"program": "spl-token", "programId": TOKEN,
             "parsed": {"type": "transfer", "info": {
                 "source": WALLET_B, "destination": WALLET_A,
                 "authority": WALLET_B, "amount": "8"}},
             "stackHeight": 3}
        ]}
    ]);
    let tx = normalize_payload(&payload).unwrap();
    let kinds: Vec<(InstructionKind, u32)> =
        tx.instructions.iter().map(|i| (i.kind.clone(), i.depth)).collect();
    assert_eq!(kinds.len(), 4);
    assert_eq!(kinds[0], (InstructionKind::Transfer, 0));
    assert!(matches!(kinds[1].0, InstructionKind::Other(_)));
    assert_eq!(kinds[1].1, 0);
    assert_eq!(kinds[2], (InstructionKind::Transfer, 1));
    assert_eq!(kinds[3], (InstructionKind::Transfer, 2));
    assert_eq!(tx.instructions[2].amount, Some(7));
    assert_eq!(tx.instructions[3].amount, Some(8));
}

#[test]
fn failed_transaction_is_marked_unsuccessful() {
    let mut payload = base_payload();
    payload["meta"]["err"] = json!({"InstructionError": [0, "Custom"]});
    let tx = normalize_payload(&payload).unwrap();
    assert!(!tx.success);
}

#[test]
fn missing_block_time_names_the_path() {
    let mut payload = base_payload();
    payload.as_object_mut().unwrap().remove("blockTime");
    match normalize_payload(&payload).unwrap_err() {
        IngestError::MalformedPayload { path, .. } => assert!(path.contains("blockTime"), "{path}"),
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn bad_address_names_the_offending_path() {
    let mut payload = base_payload();
    payload["transaction"]["message"]["accountKeys"][0]["pubkey"] = json!("not-an-address");
    match normalize_payload(&payload).unwrap_err() {
        IngestError::MalformedPayload { path, .. } => {
            assert!(path.contains("accountKeys[0].pubkey"), "{path}")
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn balance_array_length_mismatch_is_malformed() {
    let mut payload = base_payload();
    payload["meta"]["preBalances"] = json!([1, 2]);
    assert!(matches!(
        normalize_payload(&payload).unwrap_err(),
        IngestError::MalformedPayload { .. }
    ));
}

#[test]
fn transfer_checked_carries_the_mint() {
    let mut payload = base_payload();
    payload["transaction"]["message"]["instructions"] = json!([
        {"program": "spl-token", "programId": TOKEN,
         "parsed": {"type": "transferChecked", "info": {
             "source": WALLET_A, "destination": WALLET_B, "authority": WALLET_A,
             "mint": MINT,
             "tokenAmount": {"amount": "250", "decimals": 6}}}}
    ]);
    let tx = normalize_payload(&payload).unwrap();
    let ins = &tx.instructions[0];
    assert_eq!(ins.kind, InstructionKind::Transfer);
    assert_eq!(ins.amount, Some(250));
    assert_eq!(ins.mint.as_ref().map(|m| m.as_str()), Some(MINT));
}

#[test]
fn plain_spl_transfer_resolves_mint_from_balances() {
    let mut payload = base_payload();
    payload["meta"]["preTokenBalances"] = json!([
        {"accountIndex": 1, "mint": MINT, "owner": WALLET_A,
         "uiTokenAmount": {"amount": "9", "decimals": 6}}
    ]);
    payload["meta"]["postTokenBalances"] = json!([
        {"accountIndex": 1, "mint": MINT, "owner": WALLET_A,
         "uiTokenAmount": {"amount": "2", "decimals": 6}}
    ]);
    payload["transaction"]["message"]["instructions"] = json!([
        {"program": "spl-token", "programId": TOKEN,
         "parsed": {"type": "transfer", "info": {
             "source": WALLET_A, "destination": WALLET_B, "authority": WALLET_A,
             "amount": "7"}}}
    ]);
    let tx = normalize_payload(&payload).unwrap();
    // The destination account's balance row supplies the mint.
    assert_eq!(
        tx.instructions[0].mint.as_ref().map(|m| m.as_str()),
        Some(MINT)
    );
}

#[test]
fn advance_nonce_is_recognized() {
    let mut payload = base_payload();
    payload["transaction"]["message"]["instructions"] = json!([
        {"program": "system", "programId": SYSTEM,
         "parsed": {"type": "advanceNonce", "info": {
             "nonceAccount": WALLET_B, "nonceAuthority": WALLET_A}}}
    ]);
    let tx = normalize_payload(&payload).unwrap();
    assert_eq!(tx.instructions[0].kind, InstructionKind::AdvanceNonce);
}
