use std::io::{BufReader, Write};
use std::net::TcpStream;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use pigtail_core::config::AppConfig;
use pigtail_core::service::{read_frame, write_frame, ErrorCode, Response, Server, ServerHandle};
use proptest::prelude::*;
use serde_json::{json, Value};

fn server() -> &'static ServerHandle {
    static S: OnceLock<ServerHandle> = OnceLock::new();
    S.get_or_init(|| {
        let s = Server::bind("127.0.0.1:0", AppConfig::default()).unwrap();
        s.warm_up().unwrap();
        s.spawn().unwrap()
    })
}

struct Client {
    r: BufReader<TcpStream>,
    w: TcpStream,
    seq: u64,
}

impl Client {
    fn new() -> Self {
        let w = TcpStream::connect(server().addr()).unwrap();
        w.set_read_timeout(Some(Duration::from_secs(60))).unwrap();
        Client { r: BufReader::new(w.try_clone().unwrap()), w, seq: 0 }
    }

    fn send_raw(&mut self, body: &[u8]) -> Response {
        self.w.write_all(&(body.len() as u32).to_be_bytes()).unwrap();
        self.w.write_all(body).unwrap();
        self.recv()
    }

    fn recv(&mut self) -> Response {
        serde_json::from_slice(&read_frame(&mut self.r).unwrap().unwrap()).unwrap()
    }

    fn recv_value(&mut self) -> Value {
        serde_json::from_slice(&read_frame(&mut self.r).unwrap().unwrap()).unwrap()
    }

    fn call(&mut self, session: Option<&str>, cmd: &str, params: Value) -> Response {
        self.seq += 1;
        write_frame(&mut self.w, &json!({ "v": 1, "seq": self.seq, "session": session, "cmd": cmd, "params": params })).unwrap();
        let r = self.recv();
        assert_eq!(r.seq, Some(self.seq));
        r
    }

    fn create(&mut self, seed: u64) -> String {
        let r = self.call(None, "create-session", json!({ "seed": seed }));
        assert!(r.ok, "{r:?}");
        r.session.unwrap()
    }
}

fn code(r: &Response) -> ErrorCode {
    r.error.as_ref().expect("error response").code
}

#[test]
fn create_move_acquire() {
    let mut c = Client::new();
    let id = c.create(1);
    let r = c.call(Some(&id), "move-stage", json!({ "dx": 1.0, "dz": -10.0 }));
    assert!(r.ok, "{r:?}");
    assert_eq!(r.result["stage_position"][2], json!(190.0));
    assert_eq!(r.result["residual_offset"], Value::Null);
    let r = c.call(Some(&id), "acquire-spectrum", Value::Null);
    assert!(r.ok);
    let n = r.result["wavelengths"].as_array().unwrap().len();
    assert_eq!(n, r.result["reflectivity"].as_array().unwrap().len());
    assert_eq!(n, 7501);
}

#[test]
fn closed_session_is_unknown() {
    let mut c = Client::new();
    let id = c.create(2);
    assert!(c.call(Some(&id), "close-session", Value::Null).ok);
    assert_eq!(code(&c.call(Some(&id), "get-state", Value::Null)), ErrorCode::UnknownSession);
    assert_eq!(code(&c.call(Some(&id), "close-session", Value::Null)), ErrorCode::UnknownSession);
    assert_eq!(code(&c.call(Some("nope"), "get-state", Value::Null)), ErrorCode::UnknownSession);
}

#[test]
fn malformed_and_unknown_commands() {
    let mut c = Client::new();
    let r = c.send_raw(b"{not json");
    assert_eq!((code(&r), r.seq), (ErrorCode::MalformedCommand, None));
    let r = c.send_raw(br#"{"v": 1, "seq": 9}"#);
    assert_eq!((code(&r), r.seq), (ErrorCode::MalformedCommand, Some(9)));
    let r = c.send_raw(br#"{"v": 2, "seq": 10, "cmd": "get-state"}"#);
    assert_eq!(code(&r), ErrorCode::MalformedCommand);
    assert_eq!(code(&c.call(None, "fly", Value::Null)), ErrorCode::UnknownCommand);
    let id = c.create(3);
    assert_eq!(code(&c.call(Some(&id), "fly", Value::Null)), ErrorCode::UnknownCommand);
    assert_eq!(code(&c.call(Some(&id), "move-stage", json!({ "dw": 1 }))), ErrorCode::InvalidParams);
    assert_eq!(code(&c.call(Some(&id), "secure", Value::Null)), ErrorCode::RigError);
    // The connection stays usable after errors.
    assert!(c.call(Some(&id), "get-state", Value::Null).ok);
}

#[test]
fn sequence_numbers_must_increase_per_session() {
    let mut c = Client::new();
    let id = c.create(4);
    c.seq = 100;
    assert!(c.call(Some(&id), "get-state", Value::Null).ok);
    c.seq = 50;
    assert_eq!(code(&c.call(Some(&id), "get-state", Value::Null)), ErrorCode::BadSequence);
}

#[test]
fn stateless_analysis() {
    let mut c = Client::new();
    let budget = json!({
        "first_lens_brightness": { "value": 0.468, "sigma": 0.025 },
        "pillar_to_fiber": null,
        "splice_transmission": { "value": 0.90, "sigma": 0.02 },
        "filter_transmission": { "value": 0.66, "sigma": 0.02 },
        "fibered_brightness": { "value": 0.208, "sigma": 0.008 },
    });
    let r = c.call(None, "analyze", json!({ "kind": "budget", "budget": budget, "simulated": 0.71 }));
    assert!(r.ok, "{r:?}");
    let v = r.result["coupling"]["value"]["value"].as_f64().unwrap();
    assert!((v - 0.748).abs() < 0.001);
    assert_eq!(r.result["comparison"]["verdict"], json!("consistent"));
    let r = c.call(None, "analyze", json!({ "kind": "saturation", "points": [[1.0, 1.0]] }));
    assert_eq!(code(&r), ErrorCode::AnalysisError);
    let r = c.call(None, "photon-run", json!({ "pulses": 200000, "seed": 5 }));
    assert!(r.ok, "{r:?}");
    assert_eq!(r.result["too_short"], json!(true));
}

#[test]
fn stream_follows_commands() {
    let mut cmd = Client::new();
    let id = cmd.create(6);
    let mut sub = Client::new();
    sub.seq = 1;
    write_frame(&mut sub.w, &json!({ "v": 1, "seq": 1, "session": id, "cmd": "subscribe", "params": {} })).unwrap();
    assert!(sub.recv().ok);
    let first = sub.recv_value();
    assert_eq!(first["type"], json!("snapshot"));
    assert_eq!(first["state"]["phase"], json!("free"));
    assert!(first["spectrum"]["reflectivity"].is_array());
    let t0 = Instant::now();
    assert!(cmd.call(Some(&id), "move-stage", json!({ "dz": -5.0 })).ok);
    let second = sub.recv_value();
    assert_eq!(second["frame"], json!(1));
    assert_eq!(second["state"]["stage_position"][2], json!(195.0));
    assert!(t0.elapsed() < Duration::from_secs(5));
    assert!(cmd.call(Some(&id), "move-stage", json!({ "dz": -5.0 })).ok);
    let third = sub.recv_value();
    assert_eq!(third["state"]["stage_position"][2], json!(190.0));
    assert!(cmd.call(Some(&id), "close-session", Value::Null).ok);
    let last = sub.recv_value();
    assert_eq!(last["closed"], json!(true));
}

#[test]
fn stream_rate_is_capped() {
    let mut cmd = Client::new();
    let id = cmd.create(7);
    let mut sub = Client::new();
    write_frame(&mut sub.w, &json!({ "v": 1, "seq": 1, "session": id, "cmd": "subscribe", "params": { "rate_hz": 1000.0 } })).unwrap();
    let ack = sub.recv();
    assert_eq!(ack.result["rate_hz"], json!(10.0));
    sub.recv_value();
    let start = Instant::now();
    for _ in 0..3 {
        assert!(cmd.call(Some(&id), "move-stage", json!({ "dx": 0.1 })).ok);
        sub.recv_value();
    }
    // Three frames after the first need at least three stream periods.
    assert!(start.elapsed() >= Duration::from_millis(280), "{:?}", start.elapsed());
}

fn run_script(c: &mut Client, id: &str, steps: &[(f64, f64)]) -> Vec<Value> {
    steps.iter().map(|(dx, dz)| c.call(Some(id), "move-stage", json!({ "dx": dx, "dz": dz })).result).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sessions_are_isolated(
        a in prop::collection::vec((-1.0..1.0f64, -5.0..0.0f64), 1..8),
        b in prop::collection::vec((-1.0..1.0f64, -5.0..0.0f64), 1..8),
        order in prop::collection::vec(any::<bool>(), 16),
        seeds in (0u64..1000, 0u64..1000),
    ) {
        let mut c = Client::new();
        let (ra, rb) = {
            let solo_a = c.create(seeds.0);
            let solo_b = c.create(seeds.1);
            (run_script(&mut c, &solo_a, &a), run_script(&mut c, &solo_b, &b))
        };
        let ia = c.create(seeds.0);
        let ib = c.create(seeds.1);
        let (mut out_a, mut out_b) = (Vec::new(), Vec::new());
        let (mut i, mut j) = (0, 0);
        let mut turn = order.iter().cycle();
        while i < a.len() || j < b.len() {
            let pick_a = j >= b.len() || (i < a.len() && *turn.next().unwrap());
            if pick_a {
                out_a.extend(run_script(&mut c, &ia, &a[i..i + 1]));
                i += 1;
            } else {
                out_b.extend(run_script(&mut c, &ib, &b[j..j + 1]));
                j += 1;
            }
        }
        prop_assert_eq!(out_a, ra);
        prop_assert_eq!(out_b, rb);
    }
}

#[test]
fn concurrent_clients_on_separate_sessions() {
    let script: Vec<(f64, f64)> = (0..20).map(|i| (0.05 * i as f64 - 0.5, -1.0)).collect();
    let reference = {
        let mut c = Client::new();
        let id = c.create(99);
        run_script(&mut c, &id, &script)
    };
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let script = script.clone();
            std::thread::spawn(move || {
                let mut c = Client::new();
                let id = c.create(99);
                run_script(&mut c, &id, &script)
            })
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), reference);
    }
}
