//! Transaction acquisition: JSON-RPC fetch with bounded parallelism and
//! retry, a signature-addressed on-disk cache, and fixture loading.

mod normalize;

pub use normalize::{normalize, normalize_payload, normalize_authority_type};

use std::collections::VecDeque;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::{json, Value};
use thiserror::Error;

use crate::txmodel::{Address, Transaction};

/// Environment variable that overrides the configured RPC endpoint.
pub const RPC_URL_ENV: &str = "SOLPHISH_RPC_URL";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IngestConfig {
    pub endpoint_url: String,
    /// Upper bound on simultaneously outstanding requests.
    pub max_in_flight: usize,
    /// Retries after the first attempt; 0 means fail fast.
    pub retry_limit: u32,
    /// First retry delay; later delays double each attempt.
    pub backoff_base_ms: u64,
    pub cache_dir: PathBuf,
}

impl IngestConfig {
    pub fn new(endpoint_url: impl Into<String>, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            max_in_flight: 8,
            retry_limit: 3,
            backoff_base_ms: 250,
            cache_dir: cache_dir.into(),
        }
    }
}

/// A transaction payload exactly as the endpoint returned it, plus the
/// signature it was requested under and when it arrived.
#[derive(Debug, Serialize, Deserialize)]
pub struct RawTransactionRecord {
    pub signature: String,
    pub fetched_at: DateTime<Utc>,
    pub payload: Box<RawValue>,
}

impl Clone for RawTransactionRecord {
    fn clone(&self) -> Self {
        Self {
            signature: self.signature.clone(),
            fetched_at: self.fetched_at,
            payload: self.payload.to_owned(),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("endpoint unavailable after {attempts} attempts: {last_error}")]
    EndpointUnavailable { attempts: u32, last_error: String },
    #[error("rate limited (retry after {retry_after_ms} ms)")]
    RateLimited { retry_after_ms: u64 },
    #[error("transaction {signature} not found")]
    NotFound { signature: String },
    #[error("malformed payload at {path}: {detail}")]
    MalformedPayload { path: String, detail: String },
    #[error("malformed fixture line {line}: {detail}")]
    MalformedLine { line: usize, detail: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One fallible JSON-RPC round trip. Implemented over HTTP for production
/// and by instrumented fakes in tests.
pub trait RpcEndpoint: Send + Sync {
    fn call(&self, method: &str, params: Value) -> Result<Value, EndpointError>;
}

#[derive(Debug, Error, Clone)]
pub enum EndpointError {
    #[error("transport failure: {0}")]
    Unavailable(String),
    #[error("rate limited")]
    RateLimited { retry_after_ms: Option<u64> },
    #[error("rpc error {code}: {message}")]
    Rpc { code: i64, message: String },
}

/// Blocking HTTP JSON-RPC client.
pub struct HttpEndpoint {
    url: String,
    client: reqwest::blocking::Client,
    next_id: AtomicU64,
}

impl HttpEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(30))
                .build()
                .expect("default TLS backend available"),
            next_id: AtomicU64::new(1),
        }
    }
}

impl RpcEndpoint for HttpEndpoint {
    fn call(&self, method: &str, params: Value) -> Result<Value, EndpointError> {
        let body = json!({
            "jsonrpc": "2.0",
            "id": self.next_id.fetch_add(1, Ordering::Relaxed),
            "method": method,
            "params": params,
        });
        let resp = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .map_err(|e| EndpointError::Unavailable(e.to_string()))?;
        if resp.status().as_u16() == 429 {
            let retry_after_ms = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse::<u64>().ok())
                .map(|secs| secs * 1000);
            return Err(EndpointError::RateLimited { retry_after_ms });
        }
        if !resp.status().is_success() {
            return Err(EndpointError::Unavailable(format!("http status {}", resp.status())));
        }
        let doc: Value = resp
            .json()
            .map_err(|e| EndpointError::Unavailable(format!("bad json-rpc body: {e}")))?;
        if let Some(err) = doc.get("error").filter(|e| !e.is_null()) {
            return Err(EndpointError::Rpc {
                code: err.get("code").and_then(Value::as_i64).unwrap_or(0),
                message: err
                    .get("message")
                    .and_then(Value::as_str)
                    .unwrap_or("unknown")
                    .to_string(),
            });
        }
        Ok(doc.get("result").cloned().unwrap_or(Value::Null))
    }
}

/// Fetches signatures and transactions with bounded parallelism, retry with
/// geometric backoff, and a write-once cache keyed by signature.
pub struct Ingestor {
    config: IngestConfig,
    endpoint: Arc<dyn RpcEndpoint>,
}

impl Ingestor {
    pub fn new(config: IngestConfig, endpoint: Arc<dyn RpcEndpoint>) -> Self {
        let mut config = config;
        config.max_in_flight = config.max_in_flight.max(1);
        Self { config, endpoint }
    }

    pub fn from_config(config: IngestConfig) -> Self {
        let endpoint = Arc::new(HttpEndpoint::new(config.endpoint_url.clone()));
        Self::new(config, endpoint)
    }

    pub fn config(&self) -> &IngestConfig {
        &self.config
    }

    fn call_with_retry(&self, method: &str, params: Value) -> Result<Value, IngestError> {
        let mut attempts = 0;
        let mut delay_ms = self.config.backoff_base_ms;
        loop {
            attempts += 1;
            match self.endpoint.call(method, params.clone()) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    let retryable = matches!(
                        e,
                        EndpointError::Unavailable(_) | EndpointError::RateLimited { .. }
                    );
                    if !retryable || attempts > self.config.retry_limit {
                        return Err(match e {
                            EndpointError::RateLimited { retry_after_ms } => IngestError::RateLimited {
                                retry_after_ms: retry_after_ms.unwrap_or(delay_ms),
                            },
                            other => IngestError::EndpointUnavailable {
                                attempts,
                                last_error: other.to_string(),
                            },
                        });
                    }
                    std::thread::sleep(Duration::from_millis(delay_ms));
                    delay_ms = delay_ms.saturating_mul(2);
                }
            }
        }
    }

    /// Newest-first signatures for an account, up to `limit`; pass the last
    /// signature of the previous page as `before` to continue.
    pub fn fetch_signatures(
        &self,
        account: &Address,
        limit: usize,
        before: Option<&str>,
    ) -> Result<Vec<String>, IngestError> {
        let mut opts = serde_json::Map::new();
        opts.insert("limit".into(), json!(limit));
        if let Some(before) = before {
            opts.insert("before".into(), json!(before));
        }
        let result = self.call_with_retry(
            "getSignaturesForAddress",
            json!([account.as_str(), Value::Object(opts)]),
        )?;
        let rows = result.as_array().cloned().unwrap_or_default();
        let mut signatures = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let sig = row
                .get("signature")
                .and_then(Value::as_str)
                .ok_or_else(|| IngestError::MalformedPayload {
                    path: format!(".result[{i}].signature"),
                    detail: "missing signature".into(),
                })?;
            signatures.push(sig.to_string());
        }
        Ok(signatures)
    }

    /// All signatures for an account up to `total`, paginating with `page_size`.
    pub fn fetch_signatures_paged(
        &self,
        account: &Address,
        total: usize,
        page_size: usize,
    ) -> Result<Vec<String>, IngestError> {
        let mut all: Vec<String> = Vec::new();
        let page_size = page_size.max(1);
        while all.len() < total {
            let want = page_size.min(total - all.len());
            let before = all.last().map(String::as_str);
            let page = self.fetch_signatures(account, want, before)?;
            if page.is_empty() {
                break;
            }
            all.extend(page);
        }
        Ok(all)
    }

    fn cache_path(&self, signature: &str) -> PathBuf {
        self.config.cache_dir.join(format!("{signature}.json"))
    }

    fn cache_read(&self, signature: &str) -> Option<RawTransactionRecord> {
        let path = self.cache_path(signature);
        let text = fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn cache_write(&self, record: &RawTransactionRecord) -> Result<(), IngestError> {
        let dir = &self.config.cache_dir;
        fs::create_dir_all(dir).map_err(|e| IngestError::Io { path: dir.clone(), source: e })?;
        let final_path = self.cache_path(&record.signature);
        // Write-then-rename keeps concurrent writers from exposing torn files.
        let tmp_path = dir.join(format!(
            ".{}.{}.tmp",
            record.signature,
            std::process::id()
        ));
        let body = serde_json::to_string(record).expect("record serializes");
        let mut f = fs::File::create(&tmp_path)
            .map_err(|e| IngestError::Io { path: tmp_path.clone(), source: e })?;
        f.write_all(body.as_bytes())
            .and_then(|_| f.write_all(b"\n"))
            .map_err(|e| IngestError::Io { path: tmp_path.clone(), source: e })?;
        drop(f);
        fs::rename(&tmp_path, &final_path)
            .map_err(|e| IngestError::Io { path: final_path.clone(), source: e })?;
        Ok(())
    }

    /// Fetch one transaction, serving from the cache when present.
    pub fn fetch_transaction(&self, signature: &str) -> Result<RawTransactionRecord, IngestError> {
        if let Some(record) = self.cache_read(signature) {
            return Ok(record);
        }
        let result = self.call_with_retry(
            "getTransaction",
            json!([
                signature,
                {"encoding": "jsonParsed", "maxSupportedTransactionVersion": 0}
            ]),
        )?;
        if result.is_null() {
            return Err(IngestError::NotFound { signature: signature.to_string() });
        }
        let payload = RawValue::from_string(result.to_string()).expect("value is valid json");
        let record = RawTransactionRecord {
            signature: signature.to_string(),
            fetched_at: Utc::now(),
            payload,
        };
        self.cache_write(&record)?;
        Ok(record)
    }

    /// Fetch many transactions with at most `max_in_flight` outstanding
    /// requests, preserving input order. The first error aborts the batch.
    pub fn fetch_many(&self, signatures: &[String]) -> Result<Vec<RawTransactionRecord>, IngestError> {
        let workers = self.config.max_in_flight.min(signatures.len().max(1));
        let queue: Mutex<VecDeque<(usize, &String)>> =
            Mutex::new(signatures.iter().enumerate().collect());
        let results: Mutex<Vec<Option<RawTransactionRecord>>> =
            Mutex::new((0..signatures.len()).map(|_| None).collect());
        let failure: Mutex<Option<IngestError>> = Mutex::new(None);
        let stop = AtomicBool::new(false);

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if stop.load(Ordering::Relaxed) {
                        return;
                    }
                    let next = queue.lock().expect("queue lock").pop_front();
                    let Some((idx, sig)) = next else { return };
                    match self.fetch_transaction(sig) {
                        Ok(record) => {
                            results.lock().expect("results lock")[idx] = Some(record);
                        }
                        Err(e) => {
                            stop.store(true, Ordering::Relaxed);
                            let mut slot = failure.lock().expect("failure lock");
                            if slot.is_none() {
                                *slot = Some(e);
                            }
                            return;
                        }
                    }
                });
            }
        });

        if let Some(err) = failure.into_inner().expect("failure lock") {
            return Err(err);
        }
        Ok(results
            .into_inner()
            .expect("results lock")
            .into_iter()
            .map(|r| r.expect("all slots filled on success"))
            .collect())
    }
}

/// Load and normalize a JSON-lines fixture of raw records. Blank lines are
/// skipped; order is preserved.
pub fn load_fixture(path: impl AsRef<Path>) -> Result<Vec<Transaction>, IngestError> {
    load_raw_fixture(path)?
        .iter()
        .enumerate()
        .map(|(i, record)| {
            normalize(record).map_err(|e| IngestError::MalformedLine {
                line: i + 1,
                detail: e.to_string(),
            })
        })
        .collect()
}

/// Load the raw records of a JSON-lines fixture without normalizing.
pub fn load_raw_fixture(path: impl AsRef<Path>) -> Result<Vec<RawTransactionRecord>, IngestError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| IngestError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IngestError::Io { path: path.to_path_buf(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawTransactionRecord =
            serde_json::from_str(&line).map_err(|e| IngestError::MalformedLine {
                line: i + 1,
                detail: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

/// Serialize raw records as a JSON-lines fixture (UTF-8, LF endings).
pub fn write_raw_fixture(
    path: impl AsRef<Path>,
    records: &[RawTransactionRecord],
) -> Result<(), IngestError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| IngestError::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| IngestError::Io { path: path.to_path_buf(), source: e })
}
