//! Stop-and-wait transfer state: one outstanding DATA frame per direction,
//! retransmitted on timeout or NAK until a retry budget runs out.

use std::collections::{BTreeMap, VecDeque};

use super::frame::{Frame, FrameKind, FLAG_FIRST, FLAG_LAST};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferConfig {
    pub timeout_ticks: u64,
    pub max_retries: u8,
    pub chunk_size: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            timeout_ticks: 8,
            max_retries: 5,
            chunk_size: super::frame::MAX_PAYLOAD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutboundTransfer {
    pub id: u64,
    pub sensor: String,
    chunks: VecDeque<Vec<u8>>,
    started: bool,
}

impl OutboundTransfer {
    pub fn new(id: u64, sensor: impl Into<String>, chunks: Vec<Vec<u8>>) -> Self {
        Self {
            id,
            sensor: sensor.into(),
            chunks: chunks.into(),
            started: false,
        }
    }
}

/// Sender side of one session direction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransferState {
    pub next_seq: u32,
    pub awaiting_ack: bool,
    pub retry_count: u8,
    in_flight: Option<Frame>,
    current: Option<OutboundTransfer>,
    queue: VecDeque<OutboundTransfer>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RetryOutcome {
    /// Nothing outstanding matches; ignore.
    Stale,
    Retransmit { frame: Frame, attempt: u8 },
    Failed { transfer: u64, sensor: String, seq: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AckOutcome {
    Stale,
    /// The outstanding frame was acknowledged; `completed` names the
    /// transfer if that was its last chunk.
    Advanced { completed: Option<u64> },
}

impl TransferState {
    pub fn enqueue(&mut self, t: OutboundTransfer) {
        self.queue.push_back(t);
    }

    pub fn is_idle(&self) -> bool {
        !self.awaiting_ack && self.current.is_none() && self.queue.is_empty()
    }

    pub fn in_flight(&self) -> Option<&Frame> {
        self.in_flight.as_ref()
    }

    /// True when `seq` is outstanding and `attempt` is its latest attempt.
    pub fn is_awaiting(&self, seq: u32, attempt: u8) -> bool {
        self.awaiting_ack
            && self.retry_count == attempt
            && self.in_flight.as_ref().is_some_and(|f| f.seq == seq)
    }

    /// Builds the next unsigned DATA frame if nothing is outstanding. The
    /// caller signs it and hands it back through [`Self::set_in_flight`].
    pub fn next_frame(&mut self, session_id: u64) -> Option<Frame> {
        if self.awaiting_ack {
            return None;
        }
        loop {
            if self.current.is_none() {
                self.current = Some(self.queue.pop_front()?);
            }
            let cur = self.current.as_mut().expect("set above");
            let Some(chunk) = cur.chunks.pop_front() else {
                self.current = None;
                continue;
            };
            let mut frame = Frame::new(session_id, self.next_seq, FrameKind::Data, chunk)
                .expect("chunks never exceed the frame limit");
            frame.tag = cur.sensor.clone();
            if !cur.started {
                frame.flags |= FLAG_FIRST;
                cur.started = true;
            }
            if cur.chunks.is_empty() {
                frame.flags |= FLAG_LAST;
            }
            self.next_seq = self.next_seq.wrapping_add(1);
            self.awaiting_ack = true;
            self.retry_count = 0;
            return Some(frame);
        }
    }

    pub fn set_in_flight(&mut self, frame: Frame) {
        self.in_flight = Some(frame);
    }

    pub fn on_ack(&mut self, seq: u32) -> AckOutcome {
        if !self.awaiting_ack || self.in_flight.as_ref().map(|f| f.seq) != Some(seq) {
            return AckOutcome::Stale;
        }
        let last = self.in_flight.take().is_some_and(|f| f.is_last());
        self.awaiting_ack = false;
        self.retry_count = 0;
        let completed = if last {
            self.current.take().map(|t| t.id)
        } else {
            None
        };
        AckOutcome::Advanced { completed }
    }

    /// Handles a timeout (`attempt` given) or a NAK (`attempt` = `None`).
    pub fn on_retry(&mut self, seq: u32, attempt: Option<u8>, max_retries: u8) -> RetryOutcome {
        let matches = match attempt {
            Some(a) => self.is_awaiting(seq, a),
            None => self.awaiting_ack && self.in_flight.as_ref().is_some_and(|f| f.seq == seq),
        };
        if !matches {
            return RetryOutcome::Stale;
        }
        if self.retry_count >= max_retries {
            let cur = self.current.take();
            self.in_flight = None;
            self.awaiting_ack = false;
            self.retry_count = 0;
            let (transfer, sensor) = cur.map(|t| (t.id, t.sensor)).unwrap_or_default();
            return RetryOutcome::Failed { transfer, sensor, seq };
        }
        self.retry_count += 1;
        let frame = self.in_flight.clone().expect("awaiting implies a frame in flight");
        RetryOutcome::Retransmit {
            frame,
            attempt: self.retry_count,
        }
    }
}

/// Receiver side of one session direction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Reassembly {
    pub expected: Option<u32>,
    pub buffer: BTreeMap<u32, Vec<u8>>,
    sensor: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataOutcome {
    Accepted { delivered: Option<(String, Vec<u8>)> },
    Duplicate,
    Gap,
}

impl Reassembly {
    pub fn accept(&mut self, frame: &Frame) -> DataOutcome {
        if self.expected.is_some_and(|e| frame.seq < e) {
            return DataOutcome::Duplicate;
        }
        if frame.is_first() {
            self.buffer.clear();
            self.sensor = frame.tag.clone();
            self.expected = Some(frame.seq);
        }
        if self.expected != Some(frame.seq) {
            return DataOutcome::Gap;
        }
        self.buffer.insert(frame.seq, frame.payload().to_vec());
        self.expected = Some(frame.seq.wrapping_add(1));
        if !frame.is_last() {
            return DataOutcome::Accepted { delivered: None };
        }
        let payload: Vec<u8> = std::mem::take(&mut self.buffer).into_values().flatten().collect();
        DataOutcome::Accepted {
            delivered: Some((self.sensor.clone(), payload)),
        }
    }
}
