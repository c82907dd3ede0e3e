use std::thread;

use esgym::env::{decode_action, ActionBits};
use esgym::protocol::{session_transcript_replay, Client, Server, ShutdownHandle, Transcript, WireMessage};
use esgym::scenario::build_default_scenario;
use esgym::Error;

fn start() -> (std::net::SocketAddr, ShutdownHandle, thread::JoinHandle<esgym::Result<()>>) {
    let server = Server::bind("127.0.0.1:0").unwrap();
    let addr = server.local_addr().unwrap();
    let stop = server.shutdown_handle().unwrap();
    (addr, stop, thread::spawn(move || server.run()))
}

fn init(id: u64, seed: u64, steps: u64) -> WireMessage {
    let mut cfg = build_default_scenario(seed);
    cfg.episode_steps = steps;
    WireMessage::Init { id, config: Some(Box::new(cfg)), n_gnbs: None, observation_len: None, n_actions: None }
}

fn hello(id: u64) -> WireMessage {
    WireMessage::Hello { id, version: "1".into() }
}

/// Records a short session with the given seed and actions.
fn record(seed: u64, actions: &[u64]) -> Transcript {
    let (addr, stop, handle) = start();
    let mut client = Client::connect(addr).unwrap();
    let mut t = Transcript::default();
    let mut send = |msg: WireMessage| {
        let req = msg.to_line();
        let resp = client.call_line(&req).unwrap();
        t.push(&req, &resp);
    };
    send(hello(1));
    send(init(2, seed, 50));
    send(WireMessage::Reset { id: 3, seed: None });
    for (k, &a) in actions.iter().enumerate() {
        send(WireMessage::Step { id: 4 + k as u64, action: decode_action(a, 7).unwrap() });
    }
    send(WireMessage::Bye { id: 100 });
    stop.shutdown();
    handle.join().unwrap().unwrap();
    t
}

#[test]
fn all_ones_step_over_tcp() {
    let (addr, stop, handle) = start();
    let mut c = Client::connect(addr).unwrap();
    assert_eq!(c.call(&hello(1)).unwrap(), WireMessage::Hello { id: 1, version: "1".into() });
    let ack = c
        .call(&WireMessage::Init { id: 2, config: None, n_gnbs: None, observation_len: None, n_actions: None })
        .unwrap();
    assert!(matches!(ack, WireMessage::Init { observation_len: Some(85), n_actions: Some(128), .. }));
    assert_eq!(
        c.call(&WireMessage::Step { id: 3, action: ActionBits::all_on(7) }).unwrap(),
        WireMessage::Error { id: Some(3), reason: "lifecycle: reset required".into() }
    );
    c.call(&WireMessage::Reset { id: 4, seed: Some(42) }).unwrap();
    match c.call(&WireMessage::Step { id: 5, action: decode_action(127, 7).unwrap() }).unwrap() {
        WireMessage::StepResult { id, observation, .. } => {
            assert_eq!(id, 5);
            assert_eq!(observation.len(), 85);
        }
        other => panic!("{other:?}"),
    }
    // wire form of the action is a plain bit array
    let raw = c.call_line(r#"{"type":"STEP","id":6,"action":[1,1,1,1,1,1,1]}"#).unwrap();
    assert!(raw.starts_with(r#"{"type":"STEP_RESULT","id":6,"#), "{raw}");
    assert_eq!(c.call(&WireMessage::Bye { id: 7 }).unwrap(), WireMessage::Bye { id: 7 });
    stop.shutdown();
    handle.join().unwrap().unwrap();
}

#[test]
fn malformed_lines_do_not_end_the_session() {
    let (addr, stop, handle) = start();
    let mut c = Client::connect(addr).unwrap();
    c.call(&hello(1)).unwrap();
    for bad in ["not json", r#"{"type":"LAUNCH","id":2}"#, r#"{"type":"STEP","id":3,"action":[1,2]}"#] {
        let resp = WireMessage::from_line(&c.call_line(bad).unwrap()).unwrap();
        assert!(matches!(resp, WireMessage::Error { ref reason, .. } if reason.starts_with("malformed")), "{resp:?}");
    }
    assert!(matches!(c.call(&init(10, 1, 5)).unwrap(), WireMessage::Init { .. }));
    stop.shutdown();
    handle.join().unwrap().unwrap();
}

#[test]
fn order_violation_returns_to_post_init_state() {
    let (addr, stop, handle) = start();
    let mut c = Client::connect(addr).unwrap();
    c.call(&hello(1)).unwrap();
    c.call(&init(2, 1, 5)).unwrap();
    c.call(&WireMessage::Reset { id: 3, seed: None }).unwrap();
    let resp = c.call(&hello(4)).unwrap();
    assert!(matches!(resp, WireMessage::Error { ref reason, .. } if reason.starts_with("protocol:")));
    // the episode is gone; a new RESET is needed
    let resp = c.call(&WireMessage::Step { id: 5, action: ActionBits::all_on(7) }).unwrap();
    assert_eq!(resp, WireMessage::Error { id: Some(5), reason: "lifecycle: reset required".into() });
    assert!(matches!(c.call(&WireMessage::Reset { id: 6, seed: None }).unwrap(), WireMessage::StepResult { .. }));
    stop.shutdown();
    handle.join().unwrap().unwrap();
}

#[test]
fn step_after_termination_needs_reset() {
    let (addr, stop, handle) = start();
    let mut c = Client::connect(addr).unwrap();
    c.call(&hello(1)).unwrap();
    c.call(&init(2, 1, 2)).unwrap();
    c.call(&WireMessage::Reset { id: 3, seed: None }).unwrap();
    c.call(&WireMessage::Step { id: 4, action: ActionBits::all_on(7) }).unwrap();
    let last = c.call(&WireMessage::Step { id: 5, action: ActionBits::all_on(7) }).unwrap();
    assert!(matches!(last, WireMessage::StepResult { terminated: true, .. }));
    let resp = c.call(&WireMessage::Step { id: 6, action: ActionBits::all_on(7) }).unwrap();
    assert!(matches!(resp, WireMessage::Error { ref reason, .. } if reason.starts_with("lifecycle:")));
    stop.shutdown();
    handle.join().unwrap().unwrap();
}

#[test]
fn concurrent_sessions_are_isolated() {
    let (addr, stop, handle) = start();
    let run = move |seed: u64| {
        let mut c = Client::connect(addr).unwrap();
        c.call(&hello(1)).unwrap();
        c.call(&init(2, seed, 30)).unwrap();
        let mut lines = vec![c.call_line(&WireMessage::Reset { id: 3, seed: None }.to_line()).unwrap()];
        for k in 0..30u64 {
            let step = WireMessage::Step { id: 4 + k, action: decode_action((k * 7 + seed) % 128, 7).unwrap() };
            lines.push(c.call_line(&step.to_line()).unwrap());
        }
        lines
    };
    let solo: Vec<Vec<String>> = [11, 12, 13, 14].into_iter().map(run).collect();
    let parallel: Vec<Vec<String>> = [11, 12, 13, 14]
        .into_iter()
        .map(|s| thread::spawn(move || run(s)))
        .collect::<Vec<_>>()
        .into_iter()
        .map(|h| h.join().unwrap())
        .collect();
    assert_eq!(solo, parallel);
    assert_ne!(solo[0], solo[1]);
    stop.shutdown();
    handle.join().unwrap().unwrap();
}

#[test]
fn recorded_transcript_replays_identically() {
    let actions: Vec<u64> = (0..40).map(|k| (k * 13 + 5) % 128).collect();
    let t = record(42, &actions);
    let text = t.to_text();
    let parsed = Transcript::parse(&text).unwrap();
    assert_eq!(parsed, t);
    let a = session_transcript_replay(&parsed).unwrap();
    let b = session_transcript_replay(&parsed).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.messages, actions.len() + 4);
    assert_eq!(record(42, &actions).to_text(), text);
}

#[test]
fn edited_seed_mismatches_at_first_step_result() {
    let t = record(42, &[127, 3, 64]);
    let text = t.to_text().replacen(r#""seed":42"#, r#""seed":43"#, 1);
    assert_ne!(text, t.to_text());
    let edited = Transcript::parse(&text).unwrap();
    match session_transcript_replay(&edited) {
        // exchange 3 is RESET, whose response is the first STEP_RESULT
        Err(Error::ReplayMismatch { line, expected, .. }) => {
            assert_eq!(line, 6);
            assert!(expected.starts_with(r#"{"type":"STEP_RESULT","id":3,"#));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn empty_transcript_has_empty_digest() {
    let d = session_transcript_replay(&Transcript::parse("").unwrap()).unwrap();
    assert!(d.is_empty());
}
