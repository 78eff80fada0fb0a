//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! Run with `cargo test -p firesim-core --test acceptance`. Set
//! `FIRESIM_BLESS=1` to rewrite the AT transcript goldens.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;

use firesim_core::envmodel::SmokeChainParams;
use firesim_core::firmware::{
    adc_sample, Firmware, PasswordLatch, SensorId, SmokeClass, TempThreshold, ThresholdSetting,
};
use firesim_core::gsm::ModemConfig;
use firesim_core::serialnet::{LinkConfig, LinkEndpoint, MCU_BAUD, MODEM_BAUD};
use firesim_core::trace::kinds;
use firesim_core::{compare_traces, run, Scenario, ScenarioOp, SimConfig, Simulator};

use common::{count, hot_temp1, payload, step_until};

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const DESTS: [&str; 3] = ["01711111111", "01722222222", "01733333333"];

fn smoke_chain_operating_points() -> Check {
    let chain = SmokeChainParams::default();
    let clear = chain.output(0.0).map_err(|e| e.to_string())?;
    let full = chain.output(1.0).map_err(|e| e.to_string())?;
    let gain = chain.amplify(1.0);
    ensure!(clear == 5.5, "output(0.0) = {clear}, want 5.5 exactly");
    ensure!(
        (2.95..=3.05).contains(&full),
        "output(1.0) = {full}, want [2.95, 3.05]"
    );
    ensure!(gain == 1.5, "amplify(1.0) = {gain}, want 1.5 exactly");
    println!("      output(0)={clear} output(1)={full:.6} amplify(1)={gain}");
    Ok(())
}

fn electrical_oracles() -> Check {
    let chain = SmokeChainParams::default();
    let n = 1000;
    let mut worst = 0.0f64;
    for i in 0..n {
        // log-spaced between the bright and dark resistances
        let frac = i as f64 / (n - 1) as f64;
        let r = chain.r_bright * (chain.r_dark / chain.r_bright).powf(frac);
        let got = chain.divider_voltage(r).map_err(|e| e.to_string())?;
        let current = chain.vcc / (r + chain.r_fixed);
        let want = current * r;
        let rel = ((got - want) / want).abs();
        worst = worst.max(rel);
        ensure!(rel <= 1e-9, "divider at r={r}: {got} vs {want}");
    }
    for i in 0..n {
        let v = 5.5 * i as f64 / (n - 1) as f64;
        let got = adc_sample(v).map_err(|e| e.to_string())?.value();
        // Largest code whose lower edge does not exceed v.
        let want = (0..=1023u16)
            .rev()
            .find(|&k| f64::from(k) * 5.0 / 1024.0 <= v)
            .unwrap();
        ensure!(got == want, "adc({v}) = {got}, want {want}");
    }
    // exact code edges
    for k in 0..1024u16 {
        let edge = f64::from(k) * 5.0 / 1024.0;
        let got = adc_sample(edge).map_err(|e| e.to_string())?.value();
        ensure!(got == k, "adc at edge {k} = {got}");
        if k > 0 {
            let below = adc_sample(edge.next_down())
                .map_err(|e| e.to_string())?
                .value();
            ensure!(below == k - 1, "adc just below edge {k} = {below}");
        }
    }
    println!("      divider worst relative error {worst:.2e}; adc codes exact");
    Ok(())
}

fn three_dest_config() -> SimConfig {
    SimConfig::default().with_destinations(&DESTS)
}

fn end_to_end_alert() -> Check {
    let scenario = hot_temp1();
    let config = three_dest_config();
    let a = run(&scenario, Some(&config), 60_000).map_err(|e| e.to_string())?;
    let b = run(&scenario, Some(&config), 60_000).map_err(|e| e.to_string())?;
    let sensor1_text = &ModemConfig::default().outbox[0];

    for to in DESTS {
        let hs = a
            .snapshot
            .handsets
            .iter()
            .find(|h| h.number == to)
            .ok_or(format!("no handset {to}"))?;
        ensure!(hs.inbox.len() == 1, "{to} got {} SMS", hs.inbox.len());
        ensure!(
            hs.inbox[0].text == *sensor1_text,
            "{to} got text {:?}",
            hs.inbox[0].text
        );
        ensure!(
            hs.ring_log.len() == 1,
            "{to} rang {} times",
            hs.ring_log.len()
        );
        ensure!(
            hs.inbox[0].received_at < hs.ring_log[0].0,
            "{to}: ring before SMS"
        );
    }
    let last_sms = a.trace.of_kind(kinds::SMS_DELIVERED).map(|e| e.t).max();
    let first_ring = a.trace.of_kind(kinds::RING).map(|e| e.t).min();
    ensure!(
        matches!((last_sms, first_ring), (Some(s), Some(r)) if s < r),
        "last SMS {last_sms:?} not before first ring {first_ring:?}"
    );
    let (ja, jb) = (a.trace.to_jsonl(), b.trace.to_jsonl());
    ensure!(
        ja.as_bytes() == jb.as_bytes(),
        "traces differ: {:?}",
        compare_traces(&a.trace, &b.trace)
    );
    println!(
        "      3 SMS by t={}, first ring t={}, {} trace bytes identical",
        last_sms.unwrap(),
        first_ring.unwrap(),
        ja.len()
    );
    Ok(())
}

fn latch_reset_cycle() -> Check {
    let mut sim = Simulator::new(&three_dest_config()).map_err(|e| e.to_string())?;
    sim.schedule(hot_temp1().events);
    sim.run_until(60_000).map_err(|e| e.to_string())?;
    ensure!(
        count(&sim, kinds::SMS_DELIVERED) == 3,
        "first episode incomplete"
    );

    // still hot for another minute
    sim.run_until(120_000).map_err(|e| e.to_string())?;
    ensure!(
        count(&sim, kinds::SMS_DELIVERED) == 3 && count(&sim, kinds::RING) == 3,
        "deliveries repeated while latched"
    );
    ensure!(count(&sim, kinds::LATCHED) == 1, "latched twice");

    // wrong password versus no SMS at all
    let mut control = sim.clone();
    let mut wrong = sim.clone();
    wrong
        .apply(&ScenarioOp::SendSms {
            from: DESTS[0].into(),
            text: "letmein R".into(),
        })
        .map_err(|e| e.to_string())?;
    wrong.run_until(150_000).map_err(|e| e.to_string())?;
    control.run_until(150_000).map_err(|e| e.to_string())?;
    ensure!(
        count(&wrong, kinds::REMOTE_REJECTED) == 1,
        "wrong password not rejected"
    );
    let (w, c) = (wrong.snapshot(), control.snapshot());
    ensure!(w.firmware == c.firmware, "firmware changed");
    ensure!(w.gateway.latched == c.gateway.latched, "latches changed");
    ensure!(w.handsets == c.handsets, "deliveries changed");
    ensure!(count(&wrong, kinds::RESET) == 0, "reset on wrong password");

    sim.apply(&ScenarioOp::SendSms {
        from: DESTS[0].into(),
        text: "mypass R".into(),
    })
    .map_err(|e| e.to_string())?;
    let reset_at = step_until(&mut sim, 10_000, |s| count(s, kinds::RESET) == 1)?;
    sim.run_until(reset_at + 60_000)
        .map_err(|e| e.to_string())?;
    ensure!(
        count(&sim, kinds::LATCHED) == 2,
        "no re-trigger after reset"
    );
    ensure!(
        count(&sim, kinds::SMS_DELIVERED) == 6 && count(&sim, kinds::RING) == 6,
        "second episode: {} SMS, {} rings",
        count(&sim, kinds::SMS_DELIVERED),
        count(&sim, kinds::RING)
    );
    sim.run_until(reset_at + 120_000)
        .map_err(|e| e.to_string())?;
    ensure!(
        count(&sim, kinds::SMS_DELIVERED) == 6,
        "extra deliveries after second episode"
    );
    println!("      reset at t={reset_at}; one more episode; wrong password inert");
    Ok(())
}

/// Expected effect of each command, written out from the command table.
fn command_table() -> Vec<(char, Option<(SensorId, &'static str)>)> {
    use SensorId::*;
    vec![
        ('A', Some((Temp1, "35"))),
        ('B', Some((Temp1, "45"))),
        ('C', Some((Temp1, "55"))),
        ('D', Some((Temp1, "65"))),
        ('E', Some((Temp1, "75"))),
        ('F', Some((Temp2, "35"))),
        ('G', Some((Temp2, "45"))),
        ('H', Some((Temp2, "55"))),
        ('I', Some((Temp2, "65"))),
        ('J', Some((Temp2, "75"))),
        ('K', Some((Smoke1, "High"))),
        ('L', Some((Smoke1, "Medium"))),
        ('M', Some((Smoke1, "Low"))),
        ('N', Some((Smoke2, "High"))),
        ('O', Some((Smoke2, "Medium"))),
        ('P', Some((Smoke2, "Low"))),
        ('R', None),
    ]
}

fn apply_expected(th: &mut ThresholdSetting, sensor: SensorId, value: &str) {
    let smoke = |v: &str| match v {
        "High" => SmokeClass::High,
        "Medium" => SmokeClass::Medium,
        _ => SmokeClass::Low,
    };
    let temp = |v: &str| TempThreshold::new(v.parse().unwrap()).unwrap();
    match sensor {
        SensorId::Temp1 => th.temp1 = temp(value),
        SensorId::Temp2 => th.temp2 = temp(value),
        SensorId::Smoke1 => th.smoke1 = smoke(value),
        SensorId::Smoke2 => th.smoke2 = smoke(value),
    }
}

fn command_table_sweep() -> Check {
    let scenario =
        Scenario::load(&scenario_path("command_sweep.json")).map_err(|e| e.to_string())?;
    let commands: Vec<&str> = scenario
        .events
        .iter()
        .filter_map(|e| match &e.op {
            ScenarioOp::SendSms { text, .. } => Some(text.as_str()),
            _ => None,
        })
        .collect();
    ensure!(
        commands.len() == 17,
        "bundled sweep has {} commands",
        commands.len()
    );
    let outcome = run(&scenario, None, scenario.duration_ms.unwrap()).map_err(|e| e.to_string())?;
    ensure!(
        outcome.passed(),
        "bundled sweep: {}",
        outcome.failure.unwrap()
    );

    // Step through the same commands and check the state after each.
    let config = scenario.config.clone().unwrap();
    let mut sim = Simulator::new(&config).map_err(|e| e.to_string())?;
    sim.run_until(1_000).map_err(|e| e.to_string())?;
    let mut expected = ThresholdSetting::default();
    for ((cmd, effect), text) in command_table().into_iter().zip(&commands) {
        ensure!(*text == format!("mypass {cmd}"), "sweep order: {text}");
        sim.apply(&ScenarioOp::SendSms {
            from: config.gateway.destinations[0].clone(),
            text: text.to_string(),
        })
        .map_err(|e| e.to_string())?;
        match effect {
            Some((sensor, value)) => {
                let before = count(&sim, kinds::THRESHOLD_SET);
                step_until(&mut sim, 5_000, |s| count(s, kinds::THRESHOLD_SET) > before)?;
                let ev = sim.trace().of_kind(kinds::THRESHOLD_SET).last().unwrap();
                ensure!(
                    ev.payload_matches(&payload(&[
                        ("sensor", sensor.name().into()),
                        ("source", "serial".into())
                    ])),
                    "{cmd}: {:?}",
                    ev.payload
                );
                let shown = match &ev.payload["value"] {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                ensure!(shown == value, "{cmd}: value {shown}, want {value}");
                apply_expected(&mut expected, sensor, value);
            }
            None => {
                step_until(&mut sim, 5_000, |s| count(s, kinds::RESET) == 1)?;
            }
        }
        let state = sim.snapshot().firmware.thresholds;
        ensure!(state == expected, "after {cmd}: {state:?} != {expected:?}");
    }

    // invalid commands
    for text in [
        "mypass Q",
        "mypass S",
        "mypass a",
        "mypass AB",
        "mypass 1",
        "mypass",
        "mypass  A",
    ] {
        let before_rej = count(&sim, kinds::REMOTE_REJECTED);
        let before_tx = count(&sim, kinds::MCU_CMD_TX);
        sim.apply(&ScenarioOp::SendSms {
            from: config.gateway.destinations[0].clone(),
            text: text.into(),
        })
        .map_err(|e| e.to_string())?;
        step_until(&mut sim, 5_000, |s| {
            count(s, kinds::REMOTE_REJECTED) > before_rej
        })?;
        let ev = sim.trace().of_kind(kinds::REMOTE_REJECTED).last().unwrap();
        ensure!(
            ev.payload["reason"] == "malformed",
            "{text:?}: {:?}",
            ev.payload
        );
        ensure!(
            count(&sim, kinds::MCU_CMD_TX) == before_tx,
            "{text:?} reached the MCU"
        );
        ensure!(
            sim.snapshot().firmware.thresholds == expected,
            "{text:?} changed thresholds"
        );
    }
    // The firmware ignores every byte outside 'A'..='P'.
    let mut fw = Firmware::new();
    for b in 0..=255u8 {
        let accepted = fw.handle_serial_byte(b).is_some();
        ensure!(accepted == (b'A'..=b'P').contains(&b), "firmware byte {b}");
    }
    println!("      17 commands applied in order; 7 invalid texts and 240 bytes rejected");
    Ok(())
}

fn password_commit_at(offset: u64) -> Result<(bool, Simulator), String> {
    let t_open = 1_000;
    let new = PasswordLatch::new(0x55).unwrap();
    let mut sim = Simulator::new(&SimConfig::default()).map_err(|e| e.to_string())?;
    sim.run_until(t_open).map_err(|e| e.to_string())?;
    sim.apply(&ScenarioOp::PressPwMode {
        latch: PasswordLatch::DEFAULT,
    })
    .map_err(|e| e.to_string())?;
    sim.run_until(t_open + offset).map_err(|e| e.to_string())?;
    sim.apply(&ScenarioOp::CommitPassword { latch: new })
        .map_err(|e| e.to_string())?;
    let ev = sim.trace().of_kind(kinds::PW_COMMIT).last().unwrap();
    ensure!(ev.t == t_open + offset, "commit at t={}", ev.t);
    let ok = ev.payload["ok"] == true;
    Ok((ok, sim))
}

fn password_mode_timing() -> Check {
    let (ok, sim) = password_commit_at(599_999)?;
    let fw = sim.firmware().state();
    ensure!(ok, "commit at +599999 ms rejected");
    ensure!(fw.stored_password.bits() == 0x55, "password not stored");
    ensure!(fw.leds.ok_led && !fw.leds.fail_led, "leds {:?}", fw.leds);

    let (ok, sim) = password_commit_at(600_000)?;
    let fw = sim.firmware().state();
    ensure!(!ok, "commit at +600000 ms accepted");
    ensure!(fw.leds.fail_led, "fail_led off");
    ensure!(
        fw.stored_password == PasswordLatch::DEFAULT,
        "password changed"
    );
    println!("      +599999 ms accepted, +600000 ms rejected with fail_led");
    Ok(())
}

fn at_goldens() -> Check {
    let bless = std::env::var_os("FIRESIM_BLESS").is_some();
    let gap = SimConfig::default().gateway.at_gap_ms;
    let mut lines = 0;
    for (name, transcript, trace) in common::golden_cases()? {
        let path = golden_path(&format!("{name}.txt"));
        if bless {
            std::fs::write(&path, &transcript).map_err(|e| e.to_string())?;
        }
        let want =
            std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        ensure!(
            want == transcript,
            "{name} transcript differs from golden:\n--- golden\n{want}--- got\n{transcript}"
        );
        // Every line goes out at least at_gap after the previous exchange finished.
        let mut last_done = None;
        for e in trace.events() {
            match e.kind.as_str() {
                k if k == kinds::AT_TX => {
                    if let Some(done) = last_done {
                        ensure!(e.t >= done + gap, "{name}: AT_TX at {} after {done}", e.t);
                    }
                    lines += 1;
                }
                k if k == kinds::AT_RX || k == kinds::URC || k == kinds::AT_TIMEOUT => {
                    last_done = Some(e.t)
                }
                _ => {}
            }
        }
    }
    println!("      3 transcripts match; {lines} AT lines spaced >= {gap} ms");
    Ok(())
}

fn serial_latency() -> Check {
    let t0 = 1_234;
    let mut modem = LinkEndpoint::new(LinkConfig::new("COM15", MODEM_BAUD));
    modem.write(b"AT+CMGF=1\r", t0).map_err(|e| e.to_string())?;
    let mut got = modem.read(t0 + 10).map_err(|e| e.to_string())?;
    ensure!(got.len() == 9, "{} bytes by +10 ms", got.len());
    got.extend(modem.read(t0 + 11).map_err(|e| e.to_string())?);
    ensure!(got == b"AT+CMGF=1\r", "burst incomplete at +11 ms");

    let mut mcu = LinkEndpoint::new(LinkConfig::new("COM1", MCU_BAUD));
    mcu.write(b"1", t0).map_err(|e| e.to_string())?;
    ensure!(
        mcu.read(t0).unwrap().is_empty(),
        "115200 byte arrived at +0"
    );
    ensure!(
        mcu.read(t0 + 1).unwrap() == b"1",
        "115200 byte missing at +1"
    );
    println!("      10 B @9600 complete at +11 ms; 1 B @115200 at +1 ms");
    Ok(())
}

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
        .join(name)
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("smoke chain operating points", smoke_chain_operating_points),
        ("electrical oracles", electrical_oracles),
        ("end-to-end alert", end_to_end_alert),
        ("latch/reset cycle", latch_reset_cycle),
        ("command table sweep", command_table_sweep),
        ("password mode timing", password_mode_timing),
        ("AT transcript goldens", at_goldens),
        ("serial latency", serial_latency),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(()) => println!("PASS  {name}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
