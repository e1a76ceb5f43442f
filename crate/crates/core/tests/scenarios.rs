use clonewatch::field::{FieldElement, Modulus, DEFAULT_MODULUS};
use clonewatch::generations::GenerationClock;
use clonewatch::keying::{node_hash, pairwise_key, HashMode, NodeId, NodeKey};
use clonewatch::metrics::{emit_csv, run_sweep, MetricsRow, SweepSpec};
use clonewatch::netsim::{run, AlertKind, CloneMode, ClonePlacement, Event, MessageKind, Protocol, SimConfig};
use clonewatch::station::{
    hello_response, Admission, AdmissionRequest, AlertReason, Hello, HelloFailure, HelloOutcome, KeyRejection,
    KeyResponse, Station, StationConfig,
};
use clonewatch::Position;

fn small(protocol: Protocol) -> SimConfig {
    SimConfig {
        protocol,
        n: 60,
        target_degree: 6,
        ticks: 120,
        clone_injection_tick: 70,
        ..SimConfig::default()
    }
}

#[test]
fn post_window_clone_gives_one_station_alert() {
    for seed in 0..10 {
        let cfg = SimConfig {
            clone_count: 1,
            seed,
            ..small(Protocol::Ppp)
        };
        let trace = run(&cfg).unwrap();
        assert_eq!(trace.alerts.len(), 1, "seed {seed}");
        let alert = &trace.alerts[0];
        assert!(
            matches!(
                alert.kind,
                AlertKind::ExpiredGenerationJoin | AlertKind::DuplicateActiveId
            ),
            "{alert:?}"
        );
        assert_eq!(alert.suspect, trace.clones[0].victim);
        assert_eq!(trace.false_positives(), 0);
        assert_eq!(trace.clones_detected(), 1);
    }
}

fn admitted_pair(station: &mut Station, clock: &GenerationClock) -> (Admission, Admission) {
    let req = |id: u64, x: f64, nonce: u64| AdmissionRequest {
        node: NodeId(id),
        position: Position::new(x, 0.0),
        tick: 5,
        group: id as u32,
        permission: 0,
        claimed_generation: None,
        nonce,
    };
    let a = station.admit_node(&req(1, 0.0, 11), clock).unwrap();
    let b = station.admit_node(&req(2, 30.0, 22), clock).unwrap();
    (a, b)
}

fn open_clock() -> GenerationClock {
    let mut clock = GenerationClock::new();
    clock
        .open_generation(50, 3, Modulus::new(DEFAULT_MODULUS).unwrap(), 99)
        .unwrap();
    clock.advance_to(5).unwrap();
    clock
}

#[test]
fn identity_only_clone_fails_the_hello_challenge() {
    let clock = open_clock();
    let mut station = Station::new(StationConfig::default());
    let (
        Admission::Admitted { entry: victim, .. },
        Admission::Admitted {
            entry: receiver,
            share: receiver_share,
        },
    ) = admitted_pair(&mut station, &clock)
    else {
        panic!("both admitted");
    };
    // The clone knows the victim's id but not its station-assigned key.
    let gen = clock.get(0).unwrap();
    let forged_key = NodeKey(victim.key.0 ^ 0xdead_beef);
    let clone_share = gen.derive_share(victim.node, forged_key, HashMode::Mixed).unwrap();
    let challenge = FieldElement::ZERO;
    let response = hello_response(&clone_share, receiver.hash, challenge);

    // Independent evaluation: the master at the two different hash points.
    let m = Modulus::new(DEFAULT_MODULUS).unwrap();
    let master = gen.master_poly().unwrap();
    let clone_hash = node_hash(victim.node, forged_key, m, HashMode::Mixed);
    assert_ne!(clone_hash, victim.hash);
    assert_eq!(response, master.eval(clone_hash.0, receiver.hash.0));
    assert_ne!(response, master.eval(victim.hash.0, receiver.hash.0));

    let hello = Hello {
        sender: victim.node,
        claimed_generation: 0,
        claimed_join_tick: victim.join_tick,
    };
    let outcome = station
        .handle_hello(&hello, response, challenge, receiver.node, &receiver_share, 6)
        .unwrap();
    match outcome {
        HelloOutcome::Failed {
            reason: HelloFailure::KeyMismatch,
            alert: Some(alert),
        } => {
            assert_eq!(alert.suspect, victim.node);
            assert_eq!(alert.reason, AlertReason::KeyMismatch);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn stolen_key_clone_is_caught_only_by_location() {
    let clock = open_clock();
    let mut station = Station::new(StationConfig::default());
    let (
        Admission::Admitted {
            entry: victim,
            share: victim_share,
        },
        Admission::Admitted {
            entry: receiver,
            share: receiver_share,
        },
    ) = admitted_pair(&mut station, &clock)
    else {
        panic!("both admitted");
    };
    // With the victim's share the clone passes the Hello challenge.
    let challenge = FieldElement::ZERO;
    let hello = Hello {
        sender: victim.node,
        claimed_generation: 0,
        claimed_join_tick: victim.join_tick,
    };
    let response = hello_response(&victim_share, receiver.hash, challenge);
    assert_eq!(
        station
            .handle_hello(&hello, response, challenge, receiver.node, &receiver_share, 6)
            .unwrap(),
        HelloOutcome::Verified
    );
    // The victim claims a key near its home; the clone claims one 500 m away
    // a few ticks later.
    let k = station
        .handle_key_request(victim.node, Position::new(2.0, 0.0), receiver.hash, 8, &clock)
        .unwrap();
    assert_eq!(k, KeyResponse::Key(pairwise_key(&victim_share, receiver.hash)));
    match station
        .handle_key_request(victim.node, Position::new(500.0, 0.0), receiver.hash, 12, &clock)
        .unwrap()
    {
        KeyResponse::Rejected {
            reason: KeyRejection::LocationConflict,
            alert: Some(alert),
        } => assert_eq!(alert.reason, AlertReason::DuplicateActiveId),
        other => panic!("{other:?}"),
    }
}

#[test]
fn stolen_key_clones_never_fail_a_challenge_in_simulation() {
    for seed in 0..5 {
        let cfg = SimConfig {
            clone_count: 3,
            clone_mode: CloneMode::StolenKey,
            clone_injection_tick: 40,
            seed,
            ..small(Protocol::Ppp)
        };
        let trace = run(&cfg).unwrap();
        assert!(
            trace.alerts.iter().all(|a| a.kind != AlertKind::KeyMismatch),
            "{:?}",
            trace.alerts
        );
        assert_eq!(trace.false_positives(), 0);
    }
}

#[test]
fn zero_ticks_gives_an_empty_trace() {
    for p in Protocol::ALL {
        let trace = run(&SimConfig { ticks: 0, ..small(p) }).unwrap();
        assert!(trace.is_empty());
    }
}

/// Five vehicles on a complete graph. Hand count: 5 admissions, 5 grants,
/// 3 leader announcements for the four-member group, then per edge either
/// two full handshakes (both ends admitted in the same tick: Hello,
/// challenge and answer each way) or one Hello that arrives too early plus
/// one full handshake.
#[test]
fn five_node_trace_matches_hand_count() {
    for seed in 0..8 {
        let cfg = SimConfig {
            n: 5,
            target_degree: 4,
            ticks: 60,
            seed,
            ..SimConfig::default()
        };
        let trace = run(&cfg).unwrap();
        assert_eq!(trace.mean_degree, 4.0);
        let admitted: Vec<(u64, u64)> = trace
            .events
            .iter()
            .filter_map(|(t, e)| match e {
                Event::Admitted { node, .. } => Some((node.0, *t)),
                _ => None,
            })
            .collect();
        assert_eq!(admitted.len(), 5);
        let tick_of = |id: u64| admitted.iter().find(|(n, _)| *n == id).unwrap().1;
        let mut handshakes = 0;
        for a in 0..5u64 {
            for b in (a + 1)..5 {
                handshakes += if tick_of(a) == tick_of(b) { 6 } else { 4 };
            }
        }
        let expected = 5 + 5 + 3 + handshakes;
        assert_eq!(trace.transmissions, expected, "seed {seed}");
        let by = |k: MessageKind| trace.transmissions_by_kind[MessageKind::ALL.iter().position(|&x| x == k).unwrap()];
        assert_eq!(by(MessageKind::LeaderAnnounce), 3);
        assert_eq!(trace.alerts.len(), 0);
        assert_eq!(trace.node_memory, vec![4; 5]);
    }
}

#[test]
fn ppp_admission_cost_is_constant_per_node() {
    // Per-node traffic does not grow with n at fixed degree.
    let per_node = |n: usize| {
        let total: u64 = (0..4)
            .map(|seed| {
                run(&SimConfig {
                    n,
                    seed,
                    ..SimConfig::default()
                })
                .unwrap()
                .transmissions
            })
            .sum();
        total as f64 / (4 * n) as f64
    };
    let (a, b) = (per_node(50), per_node(400));
    assert!((a / b - 1.0).abs() < 0.15, "{a} vs {b}");
}

#[test]
fn broadcast_traffic_is_degree_sum_per_tick() {
    for seed in 0..3 {
        let cfg = SimConfig {
            seed,
            ..small(Protocol::Broadcast)
        };
        let trace = run(&cfg).unwrap();
        let degree_sum = (trace.mean_degree * cfg.n as f64).round() as u64;
        assert_eq!(trace.transmissions, degree_sum * cfg.ticks);
    }
}

#[test]
fn far_clones_are_always_found_by_broadcast_at_load_zero() {
    for seed in 0..5 {
        let cfg = SimConfig {
            clone_count: 3,
            clone_placement: ClonePlacement::Far,
            seed,
            ..small(Protocol::Broadcast)
        };
        let trace = run(&cfg).unwrap();
        assert_eq!(trace.clones_detected(), 3);
        assert_eq!(trace.false_positives(), 0);
    }
}

#[test]
fn key_audit_covers_every_generation() {
    let cfg = SimConfig {
        n: 90,
        generations: 3,
        ticks: 160,
        ..SimConfig::default()
    };
    let trace = run(&cfg).unwrap();
    let audited: Vec<u32> = trace
        .events
        .iter()
        .filter_map(|(_, e)| match e {
            Event::KeyAudit { generation, .. } => Some(*generation),
            _ => None,
        })
        .collect();
    assert_eq!(audited, vec![0, 1, 2]);
    let erased = trace
        .events
        .iter()
        .filter(|(_, e)| matches!(e, Event::GenerationErased { .. }))
        .count();
    assert_eq!(erased, 3);
    assert!(trace.key_audit.pairs > 0);
    assert_eq!(trace.key_audit.violations, 0);
    assert_eq!(trace.false_positives(), 0);
}

#[test]
fn sweep_product_count_and_reproducibility() {
    let spec = SweepSpec {
        protocols: Protocol::ALL.to_vec(),
        n_values: vec![10, 12, 14, 16],
        load_values: vec![0.0, 1.0, 2.0],
        trials: 5,
        base_seed: 3,
        base: SimConfig {
            target_degree: 4,
            ticks: 20,
            clone_count: 1,
            clone_injection_tick: 10,
            generation_period: 8,
            ..SimConfig::default()
        },
    };
    let rows = run_sweep(&spec).unwrap();
    assert_eq!(rows.len(), 180);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    emit_csv(&rows, &a).unwrap();
    emit_csv(&run_sweep(&spec).unwrap(), &b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());

    // Same rows as a plain sequential loop, sorted by key.
    let mut sequential: Vec<MetricsRow> = spec
        .configs()
        .iter()
        .map(|c| MetricsRow::from_trace(c, &run(c).unwrap()))
        .collect();
    sequential.sort_by(|x, y| {
        (x.protocol, x.n)
            .cmp(&(y.protocol, y.n))
            .then(x.load.total_cmp(&y.load))
            .then(x.seed.cmp(&y.seed))
    });
    assert_eq!(rows, sequential);
    assert!(rows.iter().all(|r| r.clones_detected <= r.clones_injected));
}
