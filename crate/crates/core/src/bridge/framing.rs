//! Length-prefixed frames: a 4-byte big-endian payload length, then the
//! payload.

use std::io::{Read, Write};

use super::BridgeError;

pub const DEFAULT_FRAME_LIMIT: usize = 1 << 20;

pub fn frame(payload: &[u8], limit: usize) -> Result<Vec<u8>, BridgeError> {
    if payload.len() > limit || payload.len() > u32::MAX as usize {
        return Err(BridgeError::OversizeFrame {
            len: payload.len() as u64,
            limit,
        });
    }
    let mut out = Vec::with_capacity(4 + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

/// Reassembles frames from arbitrarily split input.
#[derive(Debug)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    limit: usize,
}

impl FrameDecoder {
    pub fn new(limit: usize) -> Self {
        FrameDecoder { buf: Vec::new(), limit }
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// The next complete frame, if one has arrived.
    pub fn next_frame(&mut self) -> Result<Option<Vec<u8>>, BridgeError> {
        let Some(head) = self.buf.get(..4) else { return Ok(None) };
        let len = u32::from_be_bytes(head.try_into().expect("4 bytes")) as usize;
        if len > self.limit {
            return Err(BridgeError::OversizeFrame {
                len: len as u64,
                limit: self.limit,
            });
        }
        if self.buf.len() < 4 + len {
            return Ok(None);
        }
        let payload = self.buf[4..4 + len].to_vec();
        self.buf.drain(..4 + len);
        Ok(Some(payload))
    }

    /// Bytes received but not yet part of a complete frame.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }
}

/// Reads one frame, blocking. `Ok(None)` on a clean end of stream.
pub fn read_frame(r: &mut impl Read, dec: &mut FrameDecoder) -> Result<Option<Vec<u8>>, BridgeError> {
    let mut chunk = [0u8; 8192];
    loop {
        if let Some(f) = dec.next_frame()? {
            return Ok(Some(f));
        }
        let n = r.read(&mut chunk).map_err(|e| BridgeError::BrokenStream(e.to_string()))?;
        if n == 0 {
            return if dec.pending() == 0 {
                Ok(None)
            } else {
                Err(BridgeError::BrokenStream(format!(
                    "stream ended {} bytes into a frame",
                    dec.pending()
                )))
            };
        }
        dec.push(&chunk[..n]);
    }
}

pub fn write_frame(w: &mut impl Write, payload: &[u8], limit: usize) -> Result<(), BridgeError> {
    w.write_all(&frame(payload, limit)?)
        .and_then(|_| w.flush())
        .map_err(|e| BridgeError::BrokenStream(e.to_string()))
}
