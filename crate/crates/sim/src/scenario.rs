//! Network scenario files.
//!
//! ```toml
//! seed = 1                  # network randomness (relay keys, link auth pools)
//! auth_pool_bits = 1000     # pre-shared authentication bits per link
//! nodes = ["alice", "relay", "bob"]
//!
//! [[link]]
//! between = ["alice", "relay"]
//! stub = { seed = 1, bits = 1024 }
//!
//! [[link]]
//! between = ["relay", "bob"]
//! [link.session]            # any run-config key except [sweep]
//! distance_km = 10
//! seed = 4
//!
//! [[relay]]
//! path = ["alice", "relay", "bob"]   # or: from = "alice", to = "bob"
//! key_len = 256                      # default: smallest stock along the path
//! ```
//!
//! Links are provisioned in declaration order, then relays run in order. The run
//! stops at the first failure.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;

use qkd_core::netsim::{KeySource, Link, NetError, Network};
use qkd_core::SessionReport;
use serde::Deserialize;

use crate::config::{build_session, ConfigFileError, Origins, SessionTable};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigFileError),
    #[error("{origin}: link {index}: {message}")]
    Link {
        origin: String,
        index: usize,
        message: String,
    },
    #[error("{origin}: relay {index}: {message}")]
    Relay {
        origin: String,
        index: usize,
        message: String,
    },
    #[error("{origin}: {source}")]
    Network { origin: String, source: NetError },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StubSpec {
    seed: u64,
    bits: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkSpec {
    between: [String; 2],
    stub: Option<StubSpec>,
    session: Option<SessionTable>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RelaySpec {
    path: Option<Vec<String>>,
    from: Option<String>,
    to: Option<String>,
    key_len: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    seed: u64,
    auth_pool_bits: Option<usize>,
    nodes: Vec<String>,
    #[serde(default, rename = "link")]
    links: Vec<LinkSpec>,
    #[serde(default, rename = "relay")]
    relays: Vec<RelaySpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RelayRoute {
    Path(Vec<String>),
    Shortest { from: String, to: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelayRequest {
    pub route: RelayRoute,
    pub key_len: Option<usize>,
}

/// A validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub origin: String,
    pub seed: u64,
    pub auth_pool_bits: usize,
    pub nodes: Vec<String>,
    pub links: Vec<Link>,
    pub relays: Vec<RelayRequest>,
}

impl Scenario {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| ConfigFileError::Parse {
            origin: origin.to_owned(),
            message: e.to_string().trim_end().to_owned(),
        })?;
        let mut links = Vec::with_capacity(file.links.len());
        for (index, spec) in file.links.into_iter().enumerate() {
            let link_err = |message: &str| ScenarioError::Link {
                origin: origin.to_owned(),
                index,
                message: message.to_owned(),
            };
            let source = match (spec.stub, spec.session) {
                (Some(stub), None) => KeySource::Stub {
                    seed: stub.seed,
                    bits: stub.bits,
                },
                (None, Some(table)) => {
                    if table.sweep.is_some() {
                        return Err(link_err("a link session cannot contain a [sweep] table"));
                    }
                    let (settings, lines) = table.settings(text);
                    let config = build_session(&settings, &Origins::in_file(origin, lines))
                        .map_err(|e| link_err(&e.to_string()))?;
                    KeySource::Session(Box::new(config))
                }
                _ => return Err(link_err("exactly one of `stub` or `session` is required")),
            };
            let [a, b] = spec.between;
            links.push(Link::new(&a, &b, source));
        }
        let mut relays = Vec::with_capacity(file.relays.len());
        for (index, spec) in file.relays.into_iter().enumerate() {
            let route = match (spec.path, spec.from, spec.to) {
                (Some(path), None, None) => RelayRoute::Path(path),
                (None, Some(from), Some(to)) => RelayRoute::Shortest { from, to },
                _ => {
                    return Err(ScenarioError::Relay {
                        origin: origin.to_owned(),
                        index,
                        message: "give either `path` or both `from` and `to`".to_owned(),
                    })
                }
            };
            relays.push(RelayRequest {
                route,
                key_len: spec.key_len,
            });
        }
        Ok(Self {
            origin: origin.to_owned(),
            seed: file.seed,
            auth_pool_bits: file.auth_pool_bits.unwrap_or(1000),
            nodes: file.nodes,
            links,
            relays,
        })
    }
}

#[derive(Clone, Debug)]
pub struct LinkSummary {
    pub endpoints: (String, String),
    pub kind: &'static str,
    pub deposited: usize,
    pub report: Option<SessionReport>,
}

#[derive(Clone, Debug)]
pub struct RelaySummary {
    pub path: Vec<String>,
    pub key_len: usize,
    pub keys_match: bool,
    /// Nodes whose knowledge log holds the relayed key.
    pub exposed: Vec<String>,
    pub source_key: Vec<bool>,
}

/// Where a run stopped early.
#[derive(Clone, Debug, PartialEq)]
pub enum Failure {
    Link { index: usize, error: NetError },
    Relay { index: usize, error: NetError },
}

impl Failure {
    pub fn error(&self) -> &NetError {
        match self {
            Failure::Link { error, .. } | Failure::Relay { error, .. } => error,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub network: Network,
    pub links: Vec<LinkSummary>,
    pub relays: Vec<RelaySummary>,
    pub failure: Option<Failure>,
}

pub fn run(scenario: &Scenario) -> Result<ScenarioRun, ScenarioError> {
    let net_err = |source| ScenarioError::Network {
        origin: scenario.origin.clone(),
        source,
    };
    let mut network = Network::new(scenario.seed, scenario.auth_pool_bits);
    for id in &scenario.nodes {
        network.add_node(id).map_err(net_err)?;
    }
    for link in &scenario.links {
        network.add_link(link.clone()).map_err(net_err)?;
    }
    let mut out = ScenarioRun {
        network,
        links: Vec::new(),
        relays: Vec::new(),
        failure: None,
    };

    for (index, link) in scenario.links.iter().enumerate() {
        match out.network.provision_link(index) {
            Ok(deposited) => out.links.push(LinkSummary {
                endpoints: link.endpoints.clone(),
                kind: match link.key_source {
                    KeySource::Stub { .. } => "stub",
                    KeySource::Session(_) => "session",
                },
                deposited,
                report: out.network.link_reports(index).last().cloned(),
            }),
            Err(error) => {
                out.failure = Some(Failure::Link { index, error });
                return Ok(out);
            }
        }
    }

    for (index, request) in scenario.relays.iter().enumerate() {
        let path = match &request.route {
            RelayRoute::Path(path) => path.clone(),
            RelayRoute::Shortest { from, to } => match out.network.find_path(from, to) {
                Some(path) => path,
                None => {
                    return Err(ScenarioError::Relay {
                        origin: scenario.origin.clone(),
                        index,
                        message: format!("no path from {from} to {to}"),
                    })
                }
            },
        };
        let refs: Vec<&str> = path.iter().map(String::as_str).collect();
        let key_len = request
            .key_len
            .unwrap_or_else(|| refs.windows(2).filter_map(|w| out.network.available(w[0], w[1])).min().unwrap_or(0));
        match out.network.relay_key(&refs, key_len) {
            Ok(t) => {
                let exposed = out
                    .network
                    .nodes()
                    .filter(|n| n.knows(&t.source_key))
                    .map(|n| n.id().to_owned())
                    .collect();
                out.relays.push(RelaySummary {
                    path,
                    key_len,
                    keys_match: t.end_key == t.source_key,
                    exposed,
                    source_key: t.source_key,
                });
            }
            Err(error) => {
                out.failure = Some(Failure::Relay { index, error });
                return Ok(out);
            }
        }
    }
    Ok(out)
}

impl ScenarioRun {
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "links:");
        for l in &self.links {
            let _ = write!(s, "  {} - {}: {} bits deposited ({})", l.endpoints.0, l.endpoints.1, l.deposited, l.kind);
            if let Some(r) = &l.report {
                let _ = write!(s, ", qber {:.4}, secret growth {}", r.e_hat, r.secret_growth());
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s, "relays:");
        for (i, r) in self.relays.iter().enumerate() {
            let _ = writeln!(
                s,
                "  #{i} {}: {} bits, end keys {}",
                r.path.join(" -> "),
                r.key_len,
                if r.keys_match { "match" } else { "DIFFER" }
            );
        }
        let _ = writeln!(s, "trust exposure:");
        for node in self.network.nodes() {
            let known: Vec<String> = self
                .relays
                .iter()
                .enumerate()
                .filter(|(_, r)| r.exposed.iter().any(|id| id == node.id()))
                .map(|(i, _)| format!("#{i}"))
                .collect();
            let known = if known.is_empty() { "none".to_owned() } else { known.join(", ") };
            let _ = writeln!(s, "  {}: knows relayed keys {known}", node.id());
        }
        let _ = writeln!(s, "key accounting:");
        for i in 0..self.network.link_count() {
            let (a, b) = &self.network.link(i).expect("index in range").endpoints;
            let store = self.network.node(a).and_then(|n| n.key_store(b)).expect("link store");
            let auth = self.network.auth_pool(i).map_or(0, |p| p.remaining());
            let _ = writeln!(
                s,
                "  {a} - {b}: total {}, consumed {}, available {}, auth bits left {auth}",
                store.total(),
                store.consumed(),
                store.available()
            );
        }
        let _ = writeln!(s, "link-key reuse: {}", if self.network.no_key_reuse() { "none" } else { "DETECTED" });
        if let Some(f) = &self.failure {
            let what = match f {
                Failure::Link { index, .. } => format!("link {index}"),
                Failure::Relay { index, .. } => format!("relay #{index}"),
            };
            let _ = writeln!(s, "stopped at {what}: {}", f.error());
        }
        s
    }

    /// Per-relay CSV: `relay,path,key_len,hops,exposed,keys_match`.
    pub fn write_relay_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["relay", "path", "key_len", "hops", "exposed", "keys_match"])?;
        for (i, r) in self.relays.iter().enumerate() {
            w.write_record([
                i.to_string(),
                r.path.join(">"),
                r.key_len.to_string(),
                (r.path.len() - 1).to_string(),
                r.exposed.join(";"),
                r.keys_match.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Interior nodes of every relay, for checking exposure against the paths.
    pub fn expected_exposure(&self) -> Vec<BTreeSet<String>> {
        self.relays
            .iter()
            .map(|r| r.path[1..r.path.len() - 1].iter().cloned().collect())
            .collect()
    }
}
