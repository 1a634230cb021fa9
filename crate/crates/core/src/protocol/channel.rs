//! The public classical channel: an ordered, reliable log that Eve can read.
//!
//! Messages are grouped into segments. Sealing a segment tags the concatenation of
//! its encoded messages with one Wegman-Carter tag, so every message is covered by
//! exactly one tag and a change to any of them is detected.

use alloc::vec::Vec;
use core::ops::Range;

use crate::auth::{verify_tag, AuthError, AuthenticatedMessage, Authenticator, TagKeys};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Party {
    Alice,
    Bob,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicMessage {
    pub sender: Party,
    pub label: &'static str,
    pub body: Vec<u8>,
}

impl PublicMessage {
    /// `[sender][label length][label][4-byte BE body length][body]`
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(match self.sender {
            Party::Alice => b'A',
            Party::Bob => b'B',
        });
        out.push(self.label.len() as u8);
        out.extend_from_slice(self.label.as_bytes());
        out.extend_from_slice(&(self.body.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.body);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SealedSegment {
    pub messages: Range<usize>,
    pub authenticated: AuthenticatedMessage,
    /// The receiver's copy of the tag keys.
    pub keys: TagKeys,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PublicChannel {
    messages: Vec<PublicMessage>,
    segments: Vec<SealedSegment>,
}

impl PublicChannel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, sender: Party, label: &'static str, body: Vec<u8>) {
        self.messages.push(PublicMessage {
            sender,
            label,
            body,
        });
    }

    pub fn messages(&self) -> &[PublicMessage] {
        &self.messages
    }

    /// Mutable access, for simulating tampering.
    pub fn messages_mut(&mut self) -> &mut [PublicMessage] {
        &mut self.messages
    }

    pub fn segments(&self) -> &[SealedSegment] {
        &self.segments
    }

    fn sealed_upto(&self) -> usize {
        self.segments.last().map_or(0, |s| s.messages.end)
    }

    fn payload(&self, range: Range<usize>) -> Vec<u8> {
        let mut out = Vec::new();
        for m in &self.messages[range] {
            m.encode_into(&mut out);
        }
        out
    }

    /// Tags every message sent since the last seal. Does nothing if there are none.
    pub fn seal(&mut self, auth: &mut Authenticator) -> Result<(), AuthError> {
        let range = self.sealed_upto()..self.messages.len();
        if range.is_empty() {
            return Ok(());
        }
        let (authenticated, keys) = auth.seal(self.payload(range.clone()))?;
        self.segments.push(SealedSegment {
            messages: range,
            authenticated,
            keys,
        });
        Ok(())
    }

    /// Receiver-side check: recomputes each segment's payload from the log and
    /// verifies its tag. Unsealed trailing messages fail the check.
    pub fn verify(&self) -> Result<(), AuthError> {
        if self.sealed_upto() != self.messages.len() {
            return Err(AuthError::TagMismatch);
        }
        let mut ok = true;
        for seg in &self.segments {
            let received = AuthenticatedMessage {
                payload: self.payload(seg.messages.clone()),
                tag: seg.authenticated.tag,
            };
            ok &= verify_tag(&received, seg.keys.hash_key, seg.keys.otp);
        }
        if ok {
            Ok(())
        } else {
            Err(AuthError::TagMismatch)
        }
    }
}
