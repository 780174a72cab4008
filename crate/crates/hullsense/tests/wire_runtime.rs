//! Wire-level behavior of the agent process loop: handshake, planning
//! exchange, shutdown, and malformed input handling over real loopback
//! sockets.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::TcpListener;
use std::time::Duration;

use hullsense::protocol::{AgentConfigBody, Message, MsgStream};
use hullsense::runtime::{serve_agent_tcp, RuntimeError};
use hullsense::scenario::ScenarioConfig;

fn agent_config() -> AgentConfigBody {
    let config = ScenarioConfig::from_json(
        r#"{
            "name": "pair",
            "agents": [
                {"model": "single_integrator", "dim": 2, "u_max": 1.0, "x0": [0.0, 0.0]},
                {"model": "single_integrator", "dim": 2, "u_max": 1.0, "x0": [1.0, 0.0]}
            ],
            "graph": {"mode": "static", "edges": [[1,2],[2,1]]},
            "horizon": {"mode": "explicit", "M": 2},
            "kappa": 0.8,
            "policy": {"kind": "lex", "delta_lex": 1e-5}
        }"#,
    )
    .unwrap()
    .build()
    .unwrap();
    config.agent_configs[0].clone()
}

#[test]
fn handshake_plan_and_shutdown() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let agent = std::thread::spawn(move || {
        serve_agent_tcp(&addr.to_string(), 1, Some(Duration::from_secs(5)))
    });

    let (stream, _) = listener.accept().unwrap();
    let mut coord = MsgStream::over_tcp(stream, Some(Duration::from_secs(5))).unwrap();
    assert_eq!(
        coord.recv_request().unwrap(),
        Message::Hello { agent_id: 1 }
    );
    coord
        .send_reply(&Message::AgentConfig(agent_config()))
        .unwrap();

    let mut samples = BTreeMap::new();
    samples.insert(2usize, vec![1.0, 0.0]);
    let reply = coord
        .exchange(&Message::NeighborStates {
            j: 0,
            samples,
            own_state: vec![0.0, 0.0],
        })
        .unwrap();
    match reply {
        Message::PlanResult(body) => {
            assert_eq!(body.j, 0);
            assert_eq!(body.u_seq.len(), 2);
            assert_eq!(body.status, "optimal");
            assert_eq!(body.hull_dim, 1);
            assert!(body.phi > 0.0);
        }
        other => panic!("expected a plan, got {other:?}"),
    }

    assert_eq!(
        coord.exchange(&Message::Shutdown {}).unwrap(),
        Message::Ack {}
    );
    agent.join().unwrap().unwrap();
}

#[test]
fn malformed_frame_terminates_the_agent_with_an_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let agent = std::thread::spawn(move || {
        serve_agent_tcp(&addr.to_string(), 1, Some(Duration::from_secs(5)))
    });

    let (stream, _) = listener.accept().unwrap();
    let mut coord = MsgStream::over_tcp(stream, Some(Duration::from_secs(5))).unwrap();
    assert_eq!(
        coord.recv_request().unwrap(),
        Message::Hello { agent_id: 1 }
    );
    coord
        .send_reply(&Message::AgentConfig(agent_config()))
        .unwrap();

    // A frame whose payload is not valid JSON.
    let mut raw = coord.into_inner();
    let garbage = b"this is not json";
    raw.write_all(&(garbage.len() as u32).to_be_bytes())
        .unwrap();
    raw.write_all(garbage).unwrap();
    raw.flush().unwrap();

    let err = agent.join().unwrap().unwrap_err();
    assert!(matches!(err, RuntimeError::Wire(_)), "got {err:?}");
}

#[test]
fn rejected_agent_id_surfaces_a_protocol_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let agent = std::thread::spawn(move || {
        serve_agent_tcp(&addr.to_string(), 9, Some(Duration::from_secs(5)))
    });

    let (stream, _) = listener.accept().unwrap();
    let mut coord = MsgStream::over_tcp(stream, Some(Duration::from_secs(5))).unwrap();
    assert_eq!(
        coord.recv_request().unwrap(),
        Message::Hello { agent_id: 9 }
    );
    coord
        .send_reply(&Message::ProtocolError {
            code: "bad_agent_id".into(),
            detail: "agent id 9 out of range".into(),
        })
        .unwrap();
    let err = agent.join().unwrap().unwrap_err();
    assert!(matches!(err, RuntimeError::Handshake(_)));
}
