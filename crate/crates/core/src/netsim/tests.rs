use super::*;

fn summary(m: &SimMetrics) -> String {
    format!(
        "punish={} wrongful={} ok={} failed={} unexpected={:?} requests={:?} detection={:?} leaks={:?} collusion={:?} cons={:?}",
        m.punishments,
        m.wrongful_punishments,
        m.reads_ok,
        m.reads_failed,
        m.unexpected,
        m.requests,
        m.detection,
        m.leak_challenges.iter().filter(|l| l.payout.is_some_and(|p| p.owner > 0)).collect::<Vec<_>>(),
        m.collusion,
        m.conservation
    )
}

#[test]
fn bundled_scenarios_parse_and_validate() {
    for name in BUNDLED {
        let s = bundled(name).unwrap();
        assert_eq!(s.name, name);
        s.validate().unwrap();
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }
    assert!(bundled("nope").is_none());
}

#[test]
fn honest_run() {
    let out = run(&bundled("honest").unwrap()).unwrap();
    let m = &out.metrics;
    println!("{}", summary(m));
    assert_eq!(m.final_height, 1000);
    assert_eq!(m.punishments, 0);
    assert!(m.unexpected.is_empty());
    assert_eq!(m.reads_failed, 0);
    assert_eq!(m.integrity_failures, 0);
    assert!(m.conservation.exact());
    assert!(m.availability.values().all(|a| *a == 1.0));
}

#[test]
fn cheater_is_punished_at_first_check() {
    let out = run(&bundled("cheater").unwrap()).unwrap();
    let m = &out.metrics;
    println!("{}", summary(m));
    let d = &m.detection["cheat"];
    assert!(d.detected_at_first_check, "{d:?}");
    assert_eq!(m.wrongful_punishments, 0);
    assert!(m.unexpected.is_empty());
    assert!(m.conservation.exact());
}

#[test]
fn leaker_pays_out() {
    let out = run(&bundled("leaker").unwrap()).unwrap();
    let m = &out.metrics;
    println!("{}", summary(m));
    let paid: Vec<_> = m.leak_challenges.iter().filter_map(|l| l.payout).filter(|p| p.owner > 0).collect();
    assert_eq!(paid.len(), 1);
    assert_eq!((paid[0].challenger, paid[0].owner, paid[0].seized), (10, 60, 80));
    assert!(m.conservation.exact());
}

#[test]
fn colluders_expose_revoked_data() {
    let out = run(&bundled("colluder").unwrap()).unwrap();
    let m = &out.metrics;
    println!("{}", summary(m));
    assert!(m.unexpected.is_empty());
    assert_eq!(m.collusion.attempts, 2);
    // The split policy needs two shares and only one holder colludes.
    assert_eq!(m.collusion.exposures, 1);
}

#[test]
fn split_survives_threshold_outage() {
    let out = run(&bundled("split").unwrap()).unwrap();
    let m = &out.metrics;
    println!("{}", summary(m));
    assert!(m.unexpected.is_empty());
    assert!(m.availability["flaky"] < 0.3);
    assert!(m.detection["flaky"].detected_round.is_some());
}

#[test]
fn replays_are_identical_and_seeds_matter() {
    let s = bundled("cheater").unwrap();
    let a = run(&s).unwrap();
    let b = run(&s).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.metrics.event_log_hash, log_hash(&a.log));
    assert_eq!(a.metrics.events, a.log.len());
    let mut other = s.clone();
    other.seed += 1;
    assert_ne!(run(&other).unwrap().metrics.event_log_hash, a.metrics.event_log_hash);
}

#[test]
fn log_is_ndjson() {
    let out = run(&bundled("leaker").unwrap()).unwrap();
    let text = out.ndjson();
    assert_eq!(text.lines().count(), out.log.len());
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["event"].is_string() && v["h"].is_u64(), "{line}");
    }
}

#[test]
fn sockets_match_in_process() {
    let s = bundled("split").unwrap();
    let a = run(&s).unwrap();
    let b = run_with(&s, Transport::Sockets).unwrap();
    assert_eq!(a.metrics.event_log_hash, b.metrics.event_log_hash);
}

#[test]
fn rejects_bad_scripts() {
    let mut s = bundled("honest").unwrap();
    s.actions[0].actor = "mallory".into();
    assert!(matches!(run(&s), Err(SimError::Invalid(m)) if m.contains("mallory")));

    let mut s = bundled("honest").unwrap();
    s.nodes.push(NodeSpec { id: "n01".into(), count: 1, stake: 1000, balance: 0, behavior: BehaviorSpec::Honest });
    assert!(matches!(run(&s), Err(SimError::Invalid(m)) if m.contains("duplicate")));

    assert!(Scenario::from_json(r#"{"name":"x","seed":1,"blocks":1,"nodes":[],"bogus":1}"#).is_err());
}

#[test]
fn node_ids_are_padded() {
    let spec = NodeSpec { id: "n".into(), count: 120, stake: 1, balance: 0, behavior: BehaviorSpec::Honest };
    let ids = spec.ids();
    assert_eq!((ids[0].as_str(), ids[119].as_str()), ("n000", "n119"));
}
