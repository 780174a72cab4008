//! Wire protocol between the coordinator and agent processes.
//!
//! Frames are a 32-bit big-endian byte count followed by exactly that many
//! bytes of UTF-8 JSON: `{"body": <fields>, "type": "<variant>"}` with
//! canonically sorted keys, so encoding a message twice yields identical
//! bytes. One connection carries strictly alternating request/reply pairs;
//! agents open the connection and send the `Hello` handshake, after which
//! the coordinator is the requester.
//!
//! The schema is documented in `docs/message-schema.json`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::SolverSettings;
use crate::dynamics::LinearAgent;
use crate::ocp::SelectionPolicy;

/// Frames above this size are rejected before allocation.
pub const MAX_FRAME_BYTES: u32 = 16 * 1024 * 1024;

/// Default blocking timeout for one request/reply exchange.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Everything an agent process needs to plan: its model and the shared
/// run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfigBody {
    pub agent: LinearAgent,
    pub m: usize,
    pub q_diag: Vec<f64>,
    pub r_diag: Vec<f64>,
    pub kappa: f64,
    pub policy: SelectionPolicy,
    pub target_velocity_zero: bool,
    pub state_box: Option<Vec<(f64, f64)>>,
    pub solver: SolverSettings,
}

/// Per-step planning summary returned by an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResultBody {
    pub j: usize,
    pub u_seq: Vec<Vec<f64>>,
    pub terminal: Vec<f64>,
    pub j_star: f64,
    pub cost: f64,
    pub phi: f64,
    pub hull_dim: usize,
    pub lex_active: bool,
    pub t_primary_ms: f64,
    pub t_lex_ms: f64,
    pub n_var: usize,
    pub n_eq: usize,
    pub n_ineq: usize,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body")]
pub enum Message {
    Hello {
        agent_id: usize,
    },
    AgentConfig(AgentConfigBody),
    NeighborStates {
        j: usize,
        #[serde(with = "samples_map")]
        samples: BTreeMap<usize, Vec<f64>>,
        own_state: Vec<f64>,
    },
    PlanResult(PlanResultBody),
    Shutdown {},
    Ack {},
    ProtocolError {
        code: String,
        detail: String,
    },
}

/// Agent-id keyed maps ride the wire as JSON objects with decimal string
/// keys.
mod samples_map {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<usize, Vec<f64>>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_map(map.iter().map(|(k, v)| (k.to_string(), v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<usize, Vec<f64>>, D::Error> {
        let raw = BTreeMap::<String, Vec<f64>>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| k.parse::<usize>().map(|k| (k, v)).map_err(D::Error::custom))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("message contains a non-finite number")]
    NonFinite,
    #[error("frame of {len} bytes exceeds the {max} byte cap")]
    Oversize { len: u64, max: u32 },
    #[error("connection closed mid-frame")]
    Truncated,
    #[error("malformed JSON payload: {0}")]
    MalformedJson(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("protocol order violation: {0}")]
    OrderViolation(&'static str),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

fn message_is_finite(msg: &Message) -> bool {
    match msg {
        Message::Hello { .. } | Message::Shutdown {} | Message::Ack {} => true,
        Message::ProtocolError { .. } => true,
        Message::AgentConfig(c) => {
            all_finite(&c.q_diag)
                && all_finite(&c.r_diag)
                && c.kappa.is_finite()
                && match &c.policy {
                    SelectionPolicy::Lexicographic { delta_lex } => delta_lex.is_finite(),
                    _ => true,
                }
        }
        Message::NeighborStates {
            samples, own_state, ..
        } => all_finite(own_state) && samples.values().all(|s| all_finite(s)),
        Message::PlanResult(p) => {
            p.u_seq.iter().all(|u| all_finite(u))
                && all_finite(&p.terminal)
                && [p.j_star, p.cost, p.phi, p.t_primary_ms, p.t_lex_ms]
                    .iter()
                    .all(|v| v.is_finite())
        }
    }
}

/// Canonical JSON bytes of a message: sorted keys, shortest round-trip
/// number formatting.
fn canonical_payload(msg: &Message) -> Result<Vec<u8>, WireError> {
    if !message_is_finite(msg) {
        return Err(WireError::NonFinite);
    }
    // Route through Value: its object map is ordered, which sorts keys.
    let value = serde_json::to_value(msg).map_err(|e| WireError::Schema(e.to_string()))?;
    Ok(serde_json::to_vec(&value).expect("serializing a finite Value cannot fail"))
}

/// Encodes one message as a length-prefixed frame.
pub fn encode(msg: &Message) -> Result<Vec<u8>, WireError> {
    let payload = canonical_payload(msg)?;
    if payload.len() as u64 > MAX_FRAME_BYTES as u64 {
        return Err(WireError::Oversize {
            len: payload.len() as u64,
            max: MAX_FRAME_BYTES,
        });
    }
    let mut frame = Vec::with_capacity(4 + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    frame.extend_from_slice(&payload);
    Ok(frame)
}

fn decode_payload(payload: &[u8]) -> Result<Message, WireError> {
    serde_json::from_slice::<Message>(payload).map_err(|e| match e.classify() {
        serde_json::error::Category::Syntax | serde_json::error::Category::Eof => {
            WireError::MalformedJson(e.to_string())
        }
        _ => WireError::Schema(e.to_string()),
    })
}

/// Decodes exactly one frame from the front of `bytes`, returning the
/// message and the number of bytes consumed.
pub fn decode(bytes: &[u8]) -> Result<(Message, usize), WireError> {
    if bytes.len() < 4 {
        return Err(WireError::Truncated);
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if len > MAX_FRAME_BYTES {
        return Err(WireError::Oversize {
            len: len as u64,
            max: MAX_FRAME_BYTES,
        });
    }
    let end = 4 + len as usize;
    if bytes.len() < end {
        return Err(WireError::Truncated);
    }
    let msg = decode_payload(&bytes[4..end])?;
    Ok((msg, end))
}

fn read_frame<R: Read>(reader: &mut R) -> Result<Message, WireError> {
    let mut len_buf = [0u8; 4];
    reader.read_exact(&mut len_buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            WireError::Truncated
        } else {
            WireError::Io(e)
        }
    })?;
    let len = u32::from_be_bytes(len_buf);
    if len > MAX_FRAME_BYTES {
        return Err(WireError::Oversize {
            len: len as u64,
            max: MAX_FRAME_BYTES,
        });
    }
    let mut payload = vec![0u8; len as usize];
    reader.read_exact(&mut payload).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            WireError::Truncated
        } else {
            WireError::Io(e)
        }
    })?;
    decode_payload(&payload)
}

fn write_frame<W: Write>(writer: &mut W, msg: &Message) -> Result<(), WireError> {
    let frame = encode(msg)?;
    writer.write_all(&frame)?;
    writer.flush()?;
    Ok(())
}

/// A message stream enforcing strict request/reply alternation. The
/// requester side uses [`MsgStream::exchange`]; the replier side pairs
/// [`MsgStream::recv_request`] with [`MsgStream::send_reply`].
#[derive(Debug)]
pub struct MsgStream<S> {
    stream: S,
    awaiting_reply: bool,
}

impl<S: Read + Write> MsgStream<S> {
    pub fn new(stream: S) -> Self {
        MsgStream {
            stream,
            awaiting_reply: false,
        }
    }

    pub fn send_request(&mut self, msg: &Message) -> Result<(), WireError> {
        if self.awaiting_reply {
            return Err(WireError::OrderViolation(
                "request sent while a reply is outstanding",
            ));
        }
        write_frame(&mut self.stream, msg)?;
        self.awaiting_reply = true;
        Ok(())
    }

    pub fn recv_reply(&mut self) -> Result<Message, WireError> {
        if !self.awaiting_reply {
            return Err(WireError::OrderViolation("no request is outstanding"));
        }
        let msg = read_frame(&mut self.stream)?;
        self.awaiting_reply = false;
        Ok(msg)
    }

    /// One blocking request/reply round trip.
    pub fn exchange(&mut self, request: &Message) -> Result<Message, WireError> {
        self.send_request(request)?;
        self.recv_reply()
    }

    pub fn recv_request(&mut self) -> Result<Message, WireError> {
        if self.awaiting_reply {
            return Err(WireError::OrderViolation(
                "reply owed before receiving a request",
            ));
        }
        let msg = read_frame(&mut self.stream)?;
        self.awaiting_reply = true;
        Ok(msg)
    }

    pub fn send_reply(&mut self, msg: &Message) -> Result<(), WireError> {
        if !self.awaiting_reply {
            return Err(WireError::OrderViolation(
                "reply sent without a pending request",
            ));
        }
        write_frame(&mut self.stream, msg)?;
        self.awaiting_reply = false;
        Ok(())
    }

    pub fn into_inner(self) -> S {
        self.stream
    }

    pub fn get_ref(&self) -> &S {
        &self.stream
    }
}

impl MsgStream<std::net::TcpStream> {
    /// Wraps a TCP stream with read/write timeouts (default 30 s when
    /// `timeout` is `None`).
    pub fn over_tcp(
        stream: std::net::TcpStream,
        timeout: Option<Duration>,
    ) -> Result<Self, WireError> {
        let t = timeout.unwrap_or(DEFAULT_TIMEOUT);
        stream.set_read_timeout(Some(t))?;
        stream.set_write_timeout(Some(t))?;
        stream.set_nodelay(true)?;
        Ok(MsgStream::new(stream))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ack_has_fixed_canonical_frame() {
        let frame = encode(&Message::Ack {}).unwrap();
        let payload = &frame[4..];
        assert_eq!(payload, br#"{"body":{},"type":"Ack"}"#);
        assert_eq!(payload.len(), 24);
        assert_eq!(&frame[..4], &(24u32).to_be_bytes());
    }

    #[test]
    fn hello_round_trips() {
        let msg = Message::Hello { agent_id: 1 };
        let frame = encode(&msg).unwrap();
        let (back, used) = decode(&frame).unwrap();
        assert_eq!(back, msg);
        assert_eq!(used, frame.len());
    }

    #[test]
    fn nan_is_rejected_at_encode() {
        let msg = Message::PlanResult(PlanResultBody {
            j: 0,
            u_seq: vec![vec![f64::NAN]],
            terminal: vec![0.0],
            j_star: 0.0,
            cost: 0.0,
            phi: 0.0,
            hull_dim: 2,
            lex_active: false,
            t_primary_ms: 0.0,
            t_lex_ms: 0.0,
            n_var: 0,
            n_eq: 0,
            n_ineq: 0,
            status: "optimal".into(),
        });
        assert!(matches!(encode(&msg), Err(WireError::NonFinite)));
    }

    #[test]
    fn oversize_and_truncated_frames_error() {
        let bytes = [0xFF, 0xFF, 0xFF, 0xFF, 0x00];
        assert!(matches!(decode(&bytes), Err(WireError::Oversize { .. })));
        let frame = encode(&Message::Ack {}).unwrap();
        assert!(matches!(
            decode(&frame[..frame.len() - 1]),
            Err(WireError::Truncated)
        ));
    }

    #[test]
    fn unknown_type_is_a_schema_error() {
        let payload = br#"{"body":{},"type":"Bogus"}"#;
        let mut frame = (payload.len() as u32).to_be_bytes().to_vec();
        frame.extend_from_slice(payload);
        assert!(matches!(decode(&frame), Err(WireError::Schema(_))));
    }

    #[test]
    fn alternation_is_enforced() {
        // A loopback pair over in-memory pipes.
        let (client, server) = duplex_pair();
        let mut requester = MsgStream::new(client);
        let mut replier = MsgStream::new(server);

        requester
            .send_request(&Message::Hello { agent_id: 3 })
            .unwrap();
        let err = requester.send_request(&Message::Ack {}).unwrap_err();
        assert!(matches!(err, WireError::OrderViolation(_)));

        assert_eq!(
            replier.recv_request().unwrap(),
            Message::Hello { agent_id: 3 }
        );
        let err = replier.recv_request().unwrap_err();
        assert!(matches!(err, WireError::OrderViolation(_)));
        replier.send_reply(&Message::Ack {}).unwrap();
        assert_eq!(requester.recv_reply().unwrap(), Message::Ack {});
    }

    /// Blocking in-memory duplex built from two byte pipes.
    fn duplex_pair() -> (Duplex, Duplex) {
        use std::sync::mpsc::channel;
        let (tx_a, rx_a) = channel::<u8>();
        let (tx_b, rx_b) = channel::<u8>();
        (
            Duplex {
                tx: tx_a,
                rx: rx_b,
                pending: None,
            },
            Duplex {
                tx: tx_b,
                rx: rx_a,
                pending: None,
            },
        )
    }

    struct Duplex {
        tx: std::sync::mpsc::Sender<u8>,
        rx: std::sync::mpsc::Receiver<u8>,
        pending: Option<u8>,
    }

    impl Read for Duplex {
        fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
            if buf.is_empty() {
                return Ok(0);
            }
            let first = match self.pending.take() {
                Some(b) => b,
                None => self
                    .rx
                    .recv()
                    .map_err(|_| std::io::Error::from(std::io::ErrorKind::UnexpectedEof))?,
            };
            buf[0] = first;
            let mut n = 1;
            while n < buf.len() {
                match self.rx.try_recv() {
                    Ok(b) => {
                        buf[n] = b;
                        n += 1;
                    }
                    Err(_) => break,
                }
            }
            Ok(n)
        }
    }

    impl Write for Duplex {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            for &b in buf {
                self.tx
                    .send(b)
                    .map_err(|_| std::io::Error::from(std::io::ErrorKind::BrokenPipe))?;
            }
            Ok(buf.len())
        }

        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    fn arb_message() -> impl Strategy<Value = Message> {
        let finite = || -100.0f64..100.0;
        let vecf = || prop::collection::vec(-10.0f64..10.0, 1..4);
        prop_oneof![
            (1usize..10).prop_map(|agent_id| Message::Hello { agent_id }),
            Just(Message::Shutdown {}),
            Just(Message::Ack {}),
            ("[a-z]{1,8}", "[ -~]{0,16}")
                .prop_map(|(code, detail)| Message::ProtocolError { code, detail }),
            (
                0usize..50,
                prop::collection::btree_map(1usize..8, vecf(), 0..4),
                vecf()
            )
                .prop_map(|(j, samples, own_state)| Message::NeighborStates {
                    j,
                    samples,
                    own_state
                }),
            (
                0usize..50,
                prop::collection::vec(vecf(), 1..4),
                vecf(),
                finite(),
                finite(),
                finite(),
                prop::bool::ANY
            )
                .prop_map(|(j, u_seq, terminal, j_star, cost, phi, lex_active)| {
                    Message::PlanResult(PlanResultBody {
                        j,
                        u_seq,
                        terminal,
                        j_star,
                        cost,
                        phi,
                        hull_dim: 1,
                        lex_active,
                        t_primary_ms: 1.5,
                        t_lex_ms: 0.0,
                        n_var: 7,
                        n_eq: 3,
                        n_ineq: 9,
                        status: "optimal".into(),
                    })
                }),
        ]
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(msg in arb_message()) {
            let frame = encode(&msg).unwrap();
            let (back, used) = decode(&frame).unwrap();
            prop_assert_eq!(back, msg);
            prop_assert_eq!(used, frame.len());
        }

        #[test]
        fn encoding_is_byte_stable_and_self_delimiting(
            a in arb_message(),
            b in arb_message()
        ) {
            let fa = encode(&a).unwrap();
            let fa2 = encode(&a).unwrap();
            prop_assert_eq!(&fa, &fa2);

            // Concatenated frames decode back to the original sequence.
            let fb = encode(&b).unwrap();
            let mut joined = fa.clone();
            joined.extend_from_slice(&fb);
            let (first, used) = decode(&joined).unwrap();
            let (second, used2) = decode(&joined[used..]).unwrap();
            prop_assert_eq!(first, a);
            prop_assert_eq!(second, b);
            prop_assert_eq!(used + used2, joined.len());
        }
    }
}
