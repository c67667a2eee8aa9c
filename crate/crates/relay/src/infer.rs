//! Remote inference over the binary frame stream: one scorer per camera
//! connection, replies in frame order.

use std::sync::Arc;

use lens_core::pipeline::FrameScorer;
use lens_core::protocol::{decode_frame, decode_hello, encode_diagnostic, encode_scores};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};

/// Builds a fresh scorer for the camera named in the handshake.
pub type ScorerFactory = Arc<dyn Fn(&str) -> lens_core::Result<Box<dyn FrameScorer>> + Send + Sync>;

pub async fn serve(listener: TcpListener, factory: ScorerFactory) {
    loop {
        let (sock, peer) = match listener.accept().await {
            Ok(x) => x,
            Err(e) => {
                tracing::warn!("accept failed: {e}");
                continue;
            }
        };
        let factory = factory.clone();
        tokio::spawn(async move {
            if let Err(reason) = connection(sock, factory).await {
                tracing::warn!("inference stream from {peer} closed: {reason}");
            }
        });
    }
}

async fn fill(sock: &mut TcpStream, buf: &mut Vec<u8>) -> std::io::Result<bool> {
    let mut chunk = [0u8; 16 * 1024];
    let n = sock.read(&mut chunk).await?;
    buf.extend_from_slice(&chunk[..n]);
    Ok(n > 0)
}

async fn reject(sock: &mut TcpStream, reason: String) -> Result<(), String> {
    let _ = sock.write_all(&encode_diagnostic(&reason)).await;
    let _ = sock.shutdown().await;
    Err(reason)
}

async fn connection(mut sock: TcpStream, factory: ScorerFactory) -> Result<(), String> {
    sock.set_nodelay(true).ok();
    let mut buf = Vec::new();
    let hello = loop {
        match decode_hello(&buf) {
            Ok(Some((h, n))) => {
                buf.drain(..n);
                break h;
            }
            Ok(None) => {
                if !fill(&mut sock, &mut buf).await.map_err(|e| e.to_string())? {
                    return Err("closed before handshake".into());
                }
            }
            Err(e) => return reject(&mut sock, e.to_string()).await,
        }
    };
    let mut scorer = match factory(&hello.camera_id) {
        Ok(s) => s,
        Err(e) => return reject(&mut sock, format!("no scorer: {e}")).await,
    };
    loop {
        let frame = match decode_frame(&buf) {
            Ok(Some((f, n))) => {
                buf.drain(..n);
                f
            }
            Ok(None) => {
                if !fill(&mut sock, &mut buf).await.map_err(|e| e.to_string())? {
                    return Ok(());
                }
                continue;
            }
            Err(e) => return reject(&mut sock, e.to_string()).await,
        };
        let (back, scored) = tokio::task::spawn_blocking(move || {
            let r = scorer.score(&frame);
            (scorer, r)
        })
        .await
        .map_err(|e| e.to_string())?;
        scorer = back;
        match scored {
            Ok(s) => sock
                .write_all(&encode_scores(&s))
                .await
                .map_err(|e| e.to_string())?,
            Err(e) => return reject(&mut sock, format!("scoring failed: {e}")).await,
        }
    }
}
