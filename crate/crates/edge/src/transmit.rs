//! At-least-once delivery of queued events: upload the clip, attach its
//! reference, post the event. The relay deduplicates by `event_id`, so a
//! retry after a lost acknowledgement is harmless.

use std::time::Duration;

use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

use crate::config::RetryPolicy;
use crate::outbox::{Outbox, PendingItem};
use crate::EdgeError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmitStats {
    pub delivered: u64,
    pub dead_lettered: u64,
    /// Attempts that failed transiently and were retried.
    pub retries: u64,
}

#[derive(Debug)]
enum Failure {
    Transient(String),
    Rejected(u16, String),
}

fn classify(status: StatusCode, body: String) -> Failure {
    if status.is_client_error()
        && status != StatusCode::REQUEST_TIMEOUT
        && status != StatusCode::TOO_MANY_REQUESTS
    {
        Failure::Rejected(status.as_u16(), body)
    } else {
        Failure::Transient(format!("HTTP {status}: {body}"))
    }
}

#[derive(Debug, Clone)]
pub struct Transmitter {
    client: reqwest::Client,
    base: String,
    token: String,
    retry: RetryPolicy,
}

impl Transmitter {
    pub fn new(relay_url: &str, token: &str, retry: RetryPolicy) -> Result<Self, EdgeError> {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(15))
            .build()
            .map_err(|e| EdgeError::Config(format!("http client: {e}")))?;
        Ok(Self {
            client,
            base: relay_url.trim_end_matches('/').to_string(),
            token: token.to_string(),
            retry,
        })
    }

    async fn attempt(&self, item: &PendingItem) -> Result<(), Failure> {
        let mut event = item.event.clone();
        let clip = item
            .read_clip()
            .map_err(|e| Failure::Rejected(0, e.to_string()))?;
        if let Some(bytes) = clip {
            let resp = self
                .client
                .post(format!("{}/v1/clips", self.base))
                .bearer_auth(&self.token)
                .header("content-type", "application/octet-stream")
                .body(bytes)
                .send()
                .await
                .map_err(|e| Failure::Transient(e.to_string()))?;
            let status = resp.status();
            if !status.is_success() {
                return Err(classify(status, resp.text().await.unwrap_or_default()));
            }
            let body: serde_json::Value = resp
                .json()
                .await
                .map_err(|e| Failure::Transient(e.to_string()))?;
            let clip_ref = body["clip_ref"]
                .as_str()
                .ok_or_else(|| Failure::Transient("clip upload reply lacks clip_ref".into()))?;
            event.clip_ref = Some(clip_ref.to_string());
        }
        let resp = self
            .client
            .post(format!("{}/v1/events", self.base))
            .bearer_auth(&self.token)
            .json(&event)
            .send()
            .await
            .map_err(|e| Failure::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_success() {
            Ok(())
        } else {
            Err(classify(status, resp.text().await.unwrap_or_default()))
        }
    }

    /// Delivers every queued item in order, backing off on transient
    /// failures. Fails with [`EdgeError::Unreachable`] only when the retry
    /// policy has an attempt limit and it runs out; the queue stays on disk.
    pub async fn flush(&self, outbox: &Outbox, stats: &mut TransmitStats) -> Result<(), EdgeError> {
        for item in outbox.pending()? {
            let mut failures = 0u32;
            loop {
                match self.attempt(&item).await {
                    Ok(()) => {
                        outbox.complete(&item)?;
                        stats.delivered += 1;
                        break;
                    }
                    Err(Failure::Rejected(status, reason)) => {
                        tracing::warn!(
                            "relay rejected event {} ({status}): {reason}",
                            item.event.event_id
                        );
                        outbox.dead_letter(&item, (status != 0).then_some(status), &reason)?;
                        stats.dead_lettered += 1;
                        break;
                    }
                    Err(Failure::Transient(reason)) => {
                        failures += 1;
                        if self.retry.max_attempts.is_some_and(|m| failures >= m) {
                            return Err(EdgeError::Unreachable(reason));
                        }
                        stats.retries += 1;
                        let wait = self.retry.delay(failures);
                        tracing::info!(
                            "delivery of {} failed ({reason}); retrying in {wait:?}",
                            item.event.event_id
                        );
                        tokio::time::sleep(wait).await;
                    }
                }
            }
        }
        Ok(())
    }

    /// Flushes whenever woken, and once more after the wake channel closes.
    pub async fn run(
        self,
        outbox: std::sync::Arc<Outbox>,
        mut wake: mpsc::Receiver<()>,
    ) -> Result<TransmitStats, EdgeError> {
        let mut stats = TransmitStats::default();
        loop {
            self.flush(&outbox, &mut stats).await?;
            if wake.recv().await.is_none() {
                self.flush(&outbox, &mut stats).await?;
                return Ok(stats);
            }
        }
    }
}
