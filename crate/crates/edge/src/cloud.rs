//! Client side of the binary frame stream. Frames go out on one thread and
//! scores come back on another; a small credit window bounds the frames in
//! flight so that a slow relay backs up into the (drop-oldest) send queue
//! rather than into socket buffers.

use std::io::{Read, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::time::Duration;

use lens_core::pipeline::FrameScores;
use lens_core::protocol::{decode_response, encode_frame, encode_hello, Hello, Response};
use lens_core::videoio::Frame;
use parking_lot::{Condvar, Mutex};

use crate::config::RetryPolicy;
use crate::queue;
use crate::EdgeError;

/// Frames sent but not yet answered.
pub const IN_FLIGHT: usize = 2;

fn stream_err(e: impl std::fmt::Display) -> EdgeError {
    EdgeError::Stream(e.to_string())
}

/// Opens the stream and sends the handshake, retrying with backoff. Gives up
/// after `retry.max_attempts` (five when unlimited).
pub fn connect(addr: &str, camera_id: &str, retry: &RetryPolicy) -> Result<TcpStream, EdgeError> {
    let hello = encode_hello(&Hello {
        camera_id: camera_id.to_string(),
    })?;
    let limit = retry.max_attempts.unwrap_or(5).max(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        let result = addr
            .to_socket_addrs()
            .map_err(stream_err)?
            .next()
            .ok_or_else(|| EdgeError::Stream(format!("{addr} does not resolve")))
            .and_then(|a| {
                TcpStream::connect_timeout(&a, Duration::from_secs(5)).map_err(stream_err)
            });
        match result.and_then(|mut s| {
            s.set_nodelay(true).map_err(stream_err)?;
            s.write_all(&hello).map_err(stream_err)?;
            Ok(s)
        }) {
            Ok(s) => return Ok(s),
            Err(e) if attempt >= limit => {
                return Err(EdgeError::Unreachable(format!("{addr}: {e}")))
            }
            Err(e) => {
                let wait = retry.delay(attempt);
                tracing::info!("inference stream to {addr} failed ({e}); retrying in {wait:?}");
                std::thread::sleep(wait);
            }
        }
    }
}

#[derive(Default)]
struct CreditState {
    available: usize,
    closed: bool,
}

struct Credits {
    state: Mutex<CreditState>,
    changed: Condvar,
}

impl Credits {
    fn new(n: usize) -> Self {
        Self {
            state: Mutex::new(CreditState {
                available: n,
                closed: false,
            }),
            changed: Condvar::new(),
        }
    }

    fn take(&self) -> bool {
        let mut st = self.state.lock();
        while st.available == 0 && !st.closed {
            self.changed.wait(&mut st);
        }
        if st.closed {
            return false;
        }
        st.available -= 1;
        true
    }

    fn give(&self) {
        self.state.lock().available += 1;
        self.changed.notify_all();
    }

    fn close(&self) {
        self.state.lock().closed = true;
        self.changed.notify_all();
    }
}

/// Sends every frame from `frames` and returns when the queue is exhausted
/// or the stream fails.
fn send_frames(
    mut sock: TcpStream,
    frames: queue::Receiver<Frame>,
    credits: &Credits,
) -> Result<u64, EdgeError> {
    let mut sent = 0;
    for frame in frames {
        if !credits.take() {
            break;
        }
        sock.write_all(&encode_frame(&frame)?).map_err(stream_err)?;
        sent += 1;
    }
    let _ = sock.shutdown(Shutdown::Write);
    Ok(sent)
}

/// Reads replies until the relay closes the stream. A diagnostic from the
/// relay ends the stream with an error carrying its reason.
fn receive_scores(
    mut sock: TcpStream,
    credits: &Credits,
    mut deliver: impl FnMut(FrameScores) -> bool,
) -> Result<u64, EdgeError> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let mut received = 0;
    let mut last: Option<u32> = None;
    loop {
        while let Some((resp, n)) = decode_response(&buf)? {
            buf.drain(..n);
            match resp {
                Response::Scores(s) => {
                    if last.is_some_and(|l| s.frame_index <= l) {
                        return Err(EdgeError::Stream(format!(
                            "reply for frame {} out of order",
                            s.frame_index
                        )));
                    }
                    last = Some(s.frame_index);
                    received += 1;
                    credits.give();
                    if !deliver(s) {
                        return Ok(received);
                    }
                }
                Response::Diagnostic(reason) => {
                    return Err(EdgeError::Stream(format!(
                        "relay closed the stream: {reason}"
                    )))
                }
            }
        }
        let n = sock.read(&mut chunk).map_err(stream_err)?;
        if n == 0 {
            return Ok(received);
        }
        buf.extend_from_slice(&chunk[..n]);
    }
}

/// Streams `frames` over `sock`, calling `deliver` with each reply in order.
/// Returns (frames sent, replies received).
pub fn stream(
    sock: TcpStream,
    frames: queue::Receiver<Frame>,
    deliver: impl FnMut(FrameScores) -> bool,
) -> Result<(u64, u64), EdgeError> {
    let credits = Arc::new(Credits::new(IN_FLIGHT));
    let reader = sock.try_clone().map_err(stream_err)?;
    std::thread::scope(|s| {
        let c = credits.clone();
        let sender = s.spawn(move || send_frames(sock, frames, &c));
        let received = receive_scores(reader, &credits, deliver);
        credits.close();
        let sent = sender
            .join()
            .map_err(|_| EdgeError::Stream("sender thread panicked".into()))?;
        Ok((sent?, received?))
    })
}
