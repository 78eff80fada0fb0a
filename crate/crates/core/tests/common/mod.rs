#![allow(dead_code)]

use firesim_core::serialnet::MODEM_LINK;
use firesim_core::trace::{kinds, Payload};
use firesim_core::{Scenario, ScenarioEvent, ScenarioOp, SimConfig, Simulator, Trace};

pub fn count(sim: &Simulator, kind: &str) -> usize {
    sim.trace().of_kind(kind).count()
}

pub fn payload(pairs: &[(&str, serde_json::Value)]) -> Payload {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

/// temp1 = 65 °C from t = 0.
pub fn hot_temp1() -> Scenario {
    Scenario {
        name: "hot_temp1".into(),
        duration_ms: None,
        config: None,
        events: vec![ScenarioEvent {
            t: 0,
            op: ScenarioOp::SetTemp {
                sensor: 1,
                celsius: 65.0,
            },
        }],
    }
}

/// Ticks until `done` holds, at most `limit` times. Returns the time of the
/// tick that satisfied it.
pub fn step_until(
    sim: &mut Simulator,
    limit: u64,
    done: impl Fn(&Simulator) -> bool,
) -> Result<u64, String> {
    for _ in 0..limit {
        sim.tick().map_err(|e| e.to_string())?;
        if done(sim) {
            return Ok(sim.now() - 1);
        }
    }
    Err(format!("condition not reached by t={}", sim.now()))
}

fn escape(bytes: &[u8]) -> String {
    let mut out = String::new();
    for &b in bytes {
        match b {
            b'\r' => out.push_str("\\r"),
            b'\n' => out.push_str("\\n"),
            b'\\' => out.push_str("\\\\"),
            0x20..=0x7e => out.push(b as char),
            _ => out.push_str(&format!("\\x{b:02x}")),
        }
    }
    out
}

/// Wire-level transcript of the modem link: one line per burst, stamped with
/// the arrival time of its last byte. `>` is host to modem, `<` the reverse.
/// Bytes more than 2 ms apart start a new burst.
pub fn at_transcript(sim: &Simulator, from: u64, to: u64) -> String {
    let link = sim.bus().link(MODEM_LINK).expect("modem link");
    let mut bytes: Vec<(u64, char, u8)> = link
        .to_device
        .tapped()
        .iter()
        .map(|&(t, b)| (t, '>', b))
        .chain(link.to_host.tapped().iter().map(|&(t, b)| (t, '<', b)))
        .filter(|&(t, _, _)| t >= from && t <= to)
        .collect();
    bytes.sort_by_key(|&(t, dir, _)| (t, dir == '<'));

    let mut out = String::new();
    let mut burst: Vec<u8> = Vec::new();
    let mut current: Option<(u64, char)> = None;
    for (t, dir, b) in bytes {
        if let Some((last_t, last_dir)) = current {
            if last_dir != dir || t > last_t + 2 {
                out.push_str(&format!("t={last_t} {last_dir} {}\n", escape(&burst)));
                burst.clear();
            }
        }
        burst.push(b);
        current = Some((t, dir));
    }
    if let Some((t, dir)) = current {
        out.push_str(&format!("t={t} {dir} {}\n", escape(&burst)));
    }
    out
}

fn tapped_sim(config: &SimConfig) -> Simulator {
    let mut sim = Simulator::new(config).expect("valid config");
    sim.tap_link(MODEM_LINK).expect("modem link");
    sim
}

fn ready_at(trace: &Trace) -> u64 {
    trace
        .of_kind(kinds::GATEWAY_READY)
        .next()
        .expect("gateway ready")
        .t
}

/// (name, transcript, full trace) for each AT golden.
pub fn golden_cases() -> Result<Vec<(&'static str, String, Trace)>, String> {
    let mut cases = Vec::new();

    let mut sim = tapped_sim(&SimConfig::default());
    sim.run_until(1_000).map_err(|e| e.to_string())?;
    let ready = ready_at(sim.trace());
    cases.push((
        "init_sequence",
        at_transcript(&sim, 0, ready),
        sim.trace().clone(),
    ));

    let config = SimConfig::default().with_destinations(&["01711111111", "01722222222"]);
    let mut sim = tapped_sim(&config);
    sim.schedule(hot_temp1().events);
    sim.run_until(30_000).map_err(|e| e.to_string())?;
    let ready = ready_at(sim.trace());
    let calls_done = sim
        .trace()
        .of_kind(kinds::URC)
        .nth(1)
        .ok_or("second call never ended")?
        .t;
    cases.push((
        "dispatch_two_destinations",
        at_transcript(&sim, ready + 1, calls_done),
        sim.trace().clone(),
    ));

    let mut sim = tapped_sim(&SimConfig::default());
    sim.schedule([ScenarioEvent {
        t: 0,
        op: ScenarioOp::SendSms {
            from: "01799999999".into(),
            text: "mypass R".into(),
        },
    }]);
    sim.run_until(4_000).map_err(|e| e.to_string())?;
    cases.push((
        "poll_sweep_one_message",
        at_transcript(&sim, 2_000, 3_999),
        sim.trace().clone(),
    ));
    Ok(cases)
}
