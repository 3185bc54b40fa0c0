use std::fmt;

use thiserror::Error;

use super::mac::mac64;

/// Largest payload a single frame may carry.
pub const MAX_PAYLOAD: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameKind {
    Hello,
    Challenge,
    Confirm,
    Reject,
    Data,
    Ack,
    Nak,
}

impl FrameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::Hello => "HELLO",
            FrameKind::Challenge => "CHALLENGE",
            FrameKind::Confirm => "CONFIRM",
            FrameKind::Reject => "REJECT",
            FrameKind::Data => "DATA",
            FrameKind::Ack => "ACK",
            FrameKind::Nak => "NAK",
        }
    }

    fn code(self) -> u8 {
        self as u8
    }

    pub fn is_handshake(self) -> bool {
        matches!(
            self,
            FrameKind::Hello | FrameKind::Challenge | FrameKind::Confirm | FrameKind::Reject
        )
    }
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("payload of {0} bytes exceeds the {MAX_PAYLOAD}-byte frame limit")]
pub struct PayloadTooLarge(pub usize);

/// DATA flag: first chunk of a transfer.
pub const FLAG_FIRST: u8 = 0b01;
/// DATA flag: last chunk of a transfer.
pub const FLAG_LAST: u8 = 0b10;

/// A protocol unit exchanged over a link.
///
/// Besides the sequencing and integrity fields, DATA frames carry the
/// sensor tag and first/last flags the receiver needs to reassemble a
/// reading; both are covered by the MAC.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub session_id: u64,
    pub seq: u32,
    pub kind: FrameKind,
    pub flags: u8,
    pub tag: String,
    payload: Vec<u8>,
    pub mac: u64,
}

impl Frame {
    pub fn new(session_id: u64, seq: u32, kind: FrameKind, payload: Vec<u8>) -> Result<Self, PayloadTooLarge> {
        if payload.len() > MAX_PAYLOAD {
            return Err(PayloadTooLarge(payload.len()));
        }
        Ok(Self {
            session_id,
            seq,
            kind,
            flags: 0,
            tag: String::new(),
            payload,
            mac: 0,
        })
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Flips one payload bit; used for fault injection.
    pub fn flip_payload_bit(&mut self, bit: usize) {
        if !self.payload.is_empty() {
            let bit = bit % (self.payload.len() * 8);
            self.payload[bit / 8] ^= 1 << (bit % 8);
        }
    }

    pub fn is_first(&self) -> bool {
        self.flags & FLAG_FIRST != 0
    }

    pub fn is_last(&self) -> bool {
        self.flags & FLAG_LAST != 0
    }

    /// Bytes covered by the MAC: every field except the MAC itself.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.tag.len() + self.payload.len());
        out.extend_from_slice(&self.session_id.to_le_bytes());
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.push(self.kind.code());
        out.push(self.flags);
        out.extend_from_slice(&(self.tag.len() as u32).to_le_bytes());
        out.extend_from_slice(self.tag.as_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn compute_mac(&self, key: u64) -> u64 {
        mac64(key, &self.signing_bytes())
    }

    pub fn signed(mut self, key: u64) -> Self {
        self.mac = self.compute_mac(key);
        self
    }

    pub fn verify(&self, key: u64) -> bool {
        self.compute_mac(key) == self.mac
    }
}

/// Splits a payload into frame-sized chunks.
pub fn chunk_payload(payload: &[u8], chunk: usize) -> Vec<Vec<u8>> {
    payload.chunks(chunk.max(1)).map(<[u8]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_bound() {
        assert!(Frame::new(1, 0, FrameKind::Data, vec![0; 256]).is_ok());
        assert_eq!(
            Frame::new(1, 0, FrameKind::Data, vec![0; 257]),
            Err(PayloadTooLarge(257))
        );
    }

    #[test]
    fn chunking() {
        let chunks = chunk_payload(&[7u8; 600], MAX_PAYLOAD);
        assert_eq!(chunks.iter().map(Vec::len).collect::<Vec<_>>(), vec![256, 256, 88]);
    }

    #[test]
    fn any_single_bit_flip_in_payload_or_seq_fails_verification() {
        let key = 0xDEAD_BEEF;
        let mut f = Frame::new(99, 1234, FrameKind::Data, b"23.5 degrees".to_vec()).unwrap();
        f.tag = "temp".into();
        f.flags = FLAG_FIRST | FLAG_LAST;
        let f = f.signed(key);
        assert!(f.verify(key));
        for bit in 0..f.payload().len() * 8 {
            let mut g = f.clone();
            g.flip_payload_bit(bit);
            assert!(!g.verify(key), "payload bit {bit}");
        }
        for bit in 0..32 {
            let mut g = f.clone();
            g.seq ^= 1 << bit;
            assert!(!g.verify(key), "seq bit {bit}");
        }
        for bit in 0..64 {
            let mut g = f.clone();
            g.session_id ^= 1 << bit;
            assert!(!g.verify(key), "session bit {bit}");
        }
    }
}
