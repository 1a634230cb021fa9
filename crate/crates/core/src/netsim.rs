//! Trusted-node key relay over point-to-point QKD links.
//!
//! Each link deposits identical key material at both endpoints. To give two distant
//! nodes a common key, the source draws a fresh key and sends it hop by hop, one-time
//! padded with each link's key; every intermediate node decrypts, learns the key and
//! re-encrypts for the next hop. Hop messages are authenticated with the link's
//! authentication pool and use the [`AuthenticatedMessage`] wire framing.

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::auth::{verify_tag, AuthKeyPool, AuthenticatedMessage, Authenticator};
use crate::bits;
use crate::protocol::{run_session_with_key, SessionConfig, SessionError, SessionOutcome, SessionReport};
use crate::rng::{mix64, SimRng};

/// One side's copy of a link's key material.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyStore {
    bits: Vec<bool>,
    cursor: usize,
}

impl KeyStore {
    pub fn available(&self) -> usize {
        self.bits.len() - self.cursor
    }

    pub fn total(&self) -> usize {
        self.bits.len()
    }

    pub fn consumed(&self) -> usize {
        self.cursor
    }

    fn deposit(&mut self, bits: &[bool]) {
        self.bits.extend_from_slice(bits);
    }

    fn take(&mut self, n: usize) -> (Range<usize>, Vec<bool>) {
        let range = self.cursor..self.cursor + n;
        self.cursor += n;
        (range.clone(), self.bits[range].to_vec())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    id: String,
    key_stores: BTreeMap<String, KeyStore>,
    knowledge_log: Vec<Vec<bool>>,
}

impl Node {
    fn new(id: &str) -> Self {
        Self {
            id: id.to_owned(),
            key_stores: BTreeMap::new(),
            knowledge_log: Vec::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn key_store(&self, neighbor: &str) -> Option<&KeyStore> {
        self.key_stores.get(neighbor)
    }

    pub fn neighbors(&self) -> impl Iterator<Item = &str> {
        self.key_stores.keys().map(String::as_str)
    }

    /// Keys this node has seen in plaintext while relaying.
    pub fn knowledge_log(&self) -> &[Vec<bool>] {
        &self.knowledge_log
    }

    pub fn knows(&self, key: &[bool]) -> bool {
        self.knowledge_log.iter().any(|k| k == key)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KeySource {
    /// Run the full BB84 pipeline.
    Session(Box<SessionConfig>),
    /// Uniform bits from a seeded stream; for fast network tests.
    Stub { seed: u64, bits: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub endpoints: (String, String),
    pub key_source: KeySource,
}

impl Link {
    pub fn new(a: &str, b: &str, key_source: KeySource) -> Self {
        Self {
            endpoints: (a.to_owned(), b.to_owned()),
            key_source,
        }
    }
}

#[derive(Clone, Debug)]
struct LinkState {
    link: Link,
    auth: Authenticator,
    rounds: u64,
    reports: Vec<SessionReport>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Relay,
    AuthReplenish,
}

/// A range of link-key bit indices spent once.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Consumption {
    pub link: usize,
    pub range: Range<usize>,
    pub purpose: Purpose,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelayTranscript {
    pub path: Vec<String>,
    pub hop_messages: Vec<AuthenticatedMessage>,
    /// The key as drawn by the source.
    pub source_key: Vec<bool>,
    /// The key as recovered by the destination.
    pub end_key: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node {0} already exists")]
    DuplicateNode(String),
    #[error("a link between {0} and {1} already exists")]
    DuplicateLink(String, String),
    #[error("a link cannot connect {0} to itself")]
    SelfLink(String),
    #[error("no link between {0} and {1}")]
    NoLink(String, String),
    #[error("a relay path needs at least two nodes")]
    PathTooShort,
    #[error("hop {from} -> {to} has {available} link-key bits, {requested} requested")]
    InsufficientLinkKey {
        from: String,
        to: String,
        available: usize,
        requested: usize,
    },
    #[error("hop {from} -> {to} has no authentication key left")]
    AuthKeyExhausted { from: String, to: String },
    #[error("authentication failed on hop {from} -> {to}")]
    AuthFailure { from: String, to: String },
    #[error("session on link {a} - {b} ended with {outcome}")]
    SessionAborted {
        a: String,
        b: String,
        outcome: SessionOutcome,
    },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("keys differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Bitwise XOR of a quantum and a classically agreed key.
pub fn combine_keys(k_quantum: &[bool], k_classical: &[bool]) -> Result<Vec<bool>, NetError> {
    if k_quantum.len() != k_classical.len() {
        return Err(NetError::LengthMismatch(k_quantum.len(), k_classical.len()));
    }
    Ok(bits::xor(k_quantum, k_classical))
}

fn link_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    nodes: BTreeMap<String, Node>,
    links: Vec<LinkState>,
    link_index: BTreeMap<(String, String), usize>,
    consumption: Vec<Consumption>,
    wire_log: Vec<AuthenticatedMessage>,
    rng: SimRng,
    relays: u64,
    auth_pool_bits: usize,
}

impl Network {
    /// `auth_pool_bits` is the pre-shared authentication secret given to each link.
    pub fn new(seed: u64, auth_pool_bits: usize) -> Self {
        Self {
            nodes: BTreeMap::new(),
            links: Vec::new(),
            link_index: BTreeMap::new(),
            consumption: Vec::new(),
            wire_log: Vec::new(),
            rng: SimRng::from_seed(seed),
            relays: 0,
            auth_pool_bits,
        }
    }

    pub fn add_node(&mut self, id: &str) -> Result<(), NetError> {
        if self.nodes.contains_key(id) {
            return Err(NetError::DuplicateNode(id.to_owned()));
        }
        self.nodes.insert(id.to_owned(), Node::new(id));
        Ok(())
    }

    pub fn add_link(&mut self, link: Link) -> Result<usize, NetError> {
        let (a, b) = (&link.endpoints.0, &link.endpoints.1);
        for id in [a, b] {
            if !self.nodes.contains_key(id) {
                return Err(NetError::UnknownNode(id.clone()));
            }
        }
        if a == b {
            return Err(NetError::SelfLink(a.clone()));
        }
        let key = link_key(a, b);
        if self.link_index.contains_key(&key) {
            return Err(NetError::DuplicateLink(key.0, key.1));
        }
        let index = self.links.len();
        let pool = self
            .rng
            .split("link-auth")
            .split_index(index as u64)
            .bits(self.auth_pool_bits);
        self.nodes.get_mut(a).expect("checked").key_stores.insert(b.clone(), KeyStore::default());
        self.nodes.get_mut(b).expect("checked").key_stores.insert(a.clone(), KeyStore::default());
        self.link_index.insert(key, index);
        self.links.push(LinkState {
            link,
            auth: Authenticator::new(AuthKeyPool::new(pool)),
            rounds: 0,
            reports: Vec::new(),
        });
        Ok(index)
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn link(&self, index: usize) -> Option<&Link> {
        self.links.get(index).map(|l| &l.link)
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn link_between(&self, a: &str, b: &str) -> Option<usize> {
        self.link_index.get(&link_key(a, b)).copied()
    }

    /// Session reports of every successful provisioning round of a link.
    pub fn link_reports(&self, index: usize) -> &[SessionReport] {
        self.links.get(index).map_or(&[], |l| &l.reports)
    }

    pub fn auth_pool(&self, index: usize) -> Option<&AuthKeyPool> {
        self.links.get(index).map(|l| l.auth.pool())
    }

    pub fn consumption_log(&self) -> &[Consumption] {
        &self.consumption
    }

    /// Every hop message ever sent, as an eavesdropper on the wires sees them.
    pub fn wire_log(&self) -> &[AuthenticatedMessage] {
        &self.wire_log
    }

    /// Unconsumed link-key bits between `a` and `b`.
    pub fn available(&self, a: &str, b: &str) -> Option<usize> {
        self.nodes.get(a)?.key_stores.get(b).map(KeyStore::available)
    }

    /// Generates key for one link and deposits it at both endpoints.
    ///
    /// Returns the number of bits deposited. An aborted session leaves the stores
    /// untouched.
    pub fn provision_link(&mut self, index: usize) -> Result<usize, NetError> {
        let state = &mut self.links[index];
        let round = state.rounds;
        state.rounds += 1;
        let (a, b) = state.link.endpoints.clone();
        let bits = match &state.link.key_source {
            KeySource::Stub { seed, bits } => SimRng::from_seed(mix64(*seed, round)).bits(*bits),
            KeySource::Session(config) => {
                let mut config = (**config).clone();
                if round > 0 {
                    config.seed = mix64(config.seed, round);
                }
                let out = run_session_with_key(&config)?;
                if out.report.outcome != SessionOutcome::Success {
                    return Err(NetError::SessionAborted {
                        a,
                        b,
                        outcome: out.report.outcome,
                    });
                }
                state.reports.push(out.report);
                out.alice_key.map(|k| k.bits).unwrap_or_default()
            }
        };
        for (from, to) in [(&a, &b), (&b, &a)] {
            self.nodes
                .get_mut(from)
                .and_then(|n| n.key_stores.get_mut(to))
                .expect("link endpoints exist")
                .deposit(&bits);
        }
        Ok(bits.len())
    }

    fn take_link_key(&mut self, from: &str, to: &str, n: usize, purpose: Purpose) -> Vec<bool> {
        let index = self.link_between(from, to).expect("caller checked the link");
        let (range, mine) = self
            .nodes
            .get_mut(from)
            .and_then(|node| node.key_stores.get_mut(to))
            .expect("link store")
            .take(n);
        let (their_range, theirs) = self
            .nodes
            .get_mut(to)
            .and_then(|node| node.key_stores.get_mut(from))
            .expect("link store")
            .take(n);
        assert_eq!((&range, &mine), (&their_range, &theirs), "link stores diverged");
        self.consumption.push(Consumption {
            link: index,
            range,
            purpose,
        });
        mine
    }

    /// Moves `n` link-key bits into the link's authentication pool.
    pub fn replenish_auth(&mut self, a: &str, b: &str, n: usize) -> Result<(), NetError> {
        let index = self
            .link_between(a, b)
            .ok_or_else(|| NetError::NoLink(a.to_owned(), b.to_owned()))?;
        let available = self.available(a, b).unwrap_or(0);
        if available < n {
            return Err(NetError::InsufficientLinkKey {
                from: a.to_owned(),
                to: b.to_owned(),
                available,
                requested: n,
            });
        }
        let bits = self.take_link_key(a, b, n, Purpose::AuthReplenish);
        self.links[index].auth.pool_mut().replenish(&bits);
        Ok(())
    }

    /// Shortest path by hop count (breadth-first, neighbors in id order).
    pub fn find_path(&self, from: &str, to: &str) -> Option<Vec<String>> {
        if !self.nodes.contains_key(from) || !self.nodes.contains_key(to) {
            return None;
        }
        let mut parent: BTreeMap<&str, &str> = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        parent.insert(from, from);
        while let Some(current) = queue.pop_front() {
            if current == to {
                let mut path = alloc::vec![to.to_owned()];
                let mut at = to;
                while at != from {
                    at = parent[at];
                    path.push(at.to_owned());
                }
                path.reverse();
                return Some(path);
            }
            for next in self.nodes[current].neighbors() {
                if !parent.contains_key(next) {
                    parent.insert(next, current);
                    queue.push_back(next);
                }
            }
        }
        None
    }

    pub fn relay_key(&mut self, path: &[&str], key_len: usize) -> Result<RelayTranscript, NetError> {
        self.relay_key_with(path, key_len, |_, _| {})
    }

    /// [`Network::relay_key`] with a hook that may alter each hop message in flight.
    pub fn relay_key_with(
        &mut self,
        path: &[&str],
        key_len: usize,
        mut on_wire: impl FnMut(usize, &mut AuthenticatedMessage),
    ) -> Result<RelayTranscript, NetError> {
        if path.len() < 2 {
            return Err(NetError::PathTooShort);
        }
        for id in path {
            if !self.nodes.contains_key(*id) {
                return Err(NetError::UnknownNode((*id).to_owned()));
            }
        }
        // Check every hop before spending anything.
        let mut key_demand: BTreeMap<usize, usize> = BTreeMap::new();
        let mut tags: BTreeMap<usize, usize> = BTreeMap::new();
        for hop in path.windows(2) {
            let (from, to) = (hop[0], hop[1]);
            let index = self
                .link_between(from, to)
                .ok_or_else(|| NetError::NoLink(from.to_owned(), to.to_owned()))?;
            let demand = key_demand.entry(index).or_default();
            *demand += key_len;
            let available = self.available(from, to).unwrap_or(0);
            if available < *demand {
                return Err(NetError::InsufficientLinkKey {
                    from: from.to_owned(),
                    to: to.to_owned(),
                    available,
                    requested: key_len,
                });
            }
            let count = tags.entry(index).or_default();
            *count += 1;
            let auth = &self.links[index].auth;
            let needed = auth.next_cost() + (*count - 1) * crate::auth::TAG_BITS;
            if auth.pool().remaining() < needed {
                return Err(NetError::AuthKeyExhausted {
                    from: from.to_owned(),
                    to: to.to_owned(),
                });
            }
        }

        let relay = self.relays;
        self.relays += 1;
        let source_key = self.rng.split("relay").split_index(relay).bits(key_len);
        let mut current = source_key.clone();
        let mut hop_messages = Vec::with_capacity(path.len() - 1);
        for (hop, pair) in path.windows(2).enumerate() {
            let (from, to) = (pair[0], pair[1]);
            let index = self.link_between(from, to).expect("checked");
            let pad = self.take_link_key(from, to, key_len, Purpose::Relay);
            let ciphertext = bits::xor(&current, &pad);
            let (mut msg, keys) = self.links[index]
                .auth
                .seal(bits::pack(&ciphertext))
                .map_err(|_| NetError::AuthKeyExhausted {
                    from: from.to_owned(),
                    to: to.to_owned(),
                })?;
            on_wire(hop, &mut msg);
            self.wire_log.push(msg.clone());
            if !verify_tag(&msg, keys.hash_key, keys.otp) {
                return Err(NetError::AuthFailure {
                    from: from.to_owned(),
                    to: to.to_owned(),
                });
            }
            let received = bits::unpack(&msg.payload, key_len);
            current = bits::xor(&received, &pad);
            if hop + 2 < path.len() {
                self.nodes
                    .get_mut(to)
                    .expect("checked")
                    .knowledge_log
                    .push(current.clone());
            }
            hop_messages.push(msg);
        }
        Ok(RelayTranscript {
            path: path.iter().map(|s| (*s).to_owned()).collect(),
            hop_messages,
            source_key,
            end_key: current,
        })
    }

    /// True when no link-key bit index was ever handed out twice.
    pub fn no_key_reuse(&self) -> bool {
        let mut by_link: BTreeMap<usize, Vec<Range<usize>>> = BTreeMap::new();
        for c in &self.consumption {
            by_link.entry(c.link).or_default().push(c.range.clone());
        }
        by_link.values_mut().all(|ranges| {
            ranges.sort_by_key(|r| r.start);
            ranges.windows(2).all(|w| w[0].end <= w[1].start)
        })
    }
}
