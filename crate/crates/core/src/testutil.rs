//! Small constructors shared by the in-crate unit tests.

use crate::txmodel::{Address, Asset, BalanceEntry, Instruction, Transaction, NATIVE_DECIMALS};

/// Deterministic distinct address: base58 of 32 copies of `n`.
pub fn addr(n: u8) -> Address {
    Address::from_bytes(&[n; 32])
}

/// Deterministic base58 signature of 64 copies of `n`.
pub fn sig(n: u8) -> String {
    bs58::encode([n; 64]).into_string()
}

pub fn native_entry(account: &Address, pre: u64, post: u64) -> BalanceEntry {
    BalanceEntry {
        account: account.clone(),
        owner: None,
        asset: Asset::Native,
        pre,
        post,
        decimals: NATIVE_DECIMALS,
    }
}

pub fn token_entry(
    account: &Address,
    owner: &Address,
    mint: &Address,
    pre: u64,
    post: u64,
    decimals: u8,
) -> BalanceEntry {
    BalanceEntry {
        account: account.clone(),
        owner: Some(owner.clone()),
        asset: Asset::Token(mint.clone()),
        pre,
        post,
        decimals,
    }
}

pub fn tx_with(
    fee_payer: &Address,
    balances: Vec<BalanceEntry>,
    instructions: Vec<Instruction>,
) -> Transaction {
    Transaction {
        signature: sig(fee_payer.to_bytes()[0]),
        slot: 1,
        block_time: 1_704_067_200, // 2024-01-01T00:00:00Z
        instructions,
        logs: vec![],
        balances,
        signers: vec![fee_payer.clone()],
        fee_payer: fee_payer.clone(),
        success: true,
    }
}
