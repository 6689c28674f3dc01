use qkdrecon_core::permute::{apply_permutation, TwoLfsrPermuter};
use qkdrecon_core::protocol::{drive_observed, simulate_recorded, AliceResponder};
use qkdrecon_core::{
    simulate, AbortReason, BitString, BlockPartition, DirectChannel, KeyString, LeakLedger, Role,
    SessionConfig, Status,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_key(len: usize, seed: u64) -> KeyString {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits: Vec<bool> = (0..len).map(|_| rng.random()).collect();
    BitString::from_bools(&bits).unwrap()
}

fn noisy(key: &KeyString, p: f64, seed: u64) -> KeyString {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = key.clone();
    for i in 0..key.len() {
        if rng.random_bool(p) {
            out.flip(i).unwrap();
        }
    }
    out
}

fn config(n: usize, p: f64) -> SessionConfig {
    let w = usize::BITS - (n - 1).leading_zeros();
    let fit = |seed: u64| match seed & ((1u64 << w) - 1) {
        0 => 1,
        s => s,
    };
    SessionConfig::new(n, p, fit(5), fit(78), Role::Bob)
}

#[test]
fn identical_keys_cost_one_pass_and_the_crc() {
    for (n, p, n0) in [(65536, 0.01, 64), (65536, 0.05, 16), (4096, 0.15, 8)] {
        let key = random_key(n, 1);
        let sim = simulate(key.clone(), key.clone(), &config(n, p)).unwrap();
        assert_eq!(sim.bob.status, Status::Success);
        assert_eq!(sim.alice.status, Status::Success);
        assert_eq!(sim.bob.corrections, 0);
        assert_eq!(sim.bob.passes_run, 1);
        assert_eq!(
            sim.bob.ledger,
            LeakLedger {
                parity_bits: (n / n0) as u64,
                crc_bits: 64,
                ..Default::default()
            }
        );
        assert_eq!(sim.bob.final_key.as_ref(), Some(&key));
        // handshake, parities, CRC
        assert_eq!(sim.stats.round_trips, 3);
        assert_eq!(sim.bob.round_trips, 2);
    }
}

#[test]
fn single_error_is_corrected_in_the_first_pass() {
    let n = 4096;
    let alice = random_key(n, 2);
    let bob = alice.flipped(1234).unwrap();
    let mut passes = Vec::new();
    let cfg = config(n, 0.01);
    let mut ch = DirectChannel::new(AliceResponder::new(alice.clone(), &cfg.with_role(Role::Alice)).unwrap());
    let out = drive_observed(bob, &cfg, &mut ch, LeakLedger::default(), |s| {
        passes.push((s.state.clone(), s.after.clone()));
    })
    .unwrap();
    assert_eq!(out.status, Status::Success);
    assert_eq!(passes.len(), 2);
    assert_eq!(passes[0].0.mismatched_blocks, vec![1234 / 64]);
    assert_eq!(passes[0].0.corrections_made, 1);
    assert_eq!(passes[0].1, alice);
    assert!(passes[1].0.mismatched_blocks.is_empty());
    assert_eq!(out.final_key, Some(alice));
    assert_eq!(out.ledger.syndrome_bits, 6);
}

#[test]
fn two_errors_in_one_block_slip_through_parities() {
    let n = 4096;
    let alice = random_key(n, 3);
    let bob = alice.flipped(8).unwrap().flipped(13).unwrap().flipped(2000).unwrap();
    let cfg = config(n, 0.05);
    let mut first = None;
    let mut ch = DirectChannel::new(AliceResponder::new(alice.clone(), &cfg.with_role(Role::Alice)).unwrap());
    let out = drive_observed(bob, &cfg, &mut ch, LeakLedger::default(), |s| {
        if first.is_none() {
            first = Some((s.state.clone(), s.after.clone()));
        }
    })
    .unwrap();
    let (state, after) = first.unwrap();
    assert_eq!(state.mismatched_blocks, vec![2000 / 16]);
    // block 0 still carries both errors
    assert!(after.get(8).unwrap() != alice.get(8).unwrap());
    assert!(after.get(13).unwrap() != alice.get(13).unwrap());
    assert_eq!(out.status, Status::Success);
    assert_eq!(out.final_key, Some(alice));
}

#[test]
fn hidden_even_pattern_is_abandoned_at_the_crc() {
    let n = 4096;
    let alice = random_key(n, 4);
    let bob = alice.flipped(100).unwrap().flipped(101).unwrap();
    let sim = simulate(alice.clone(), bob.clone(), &config(n, 0.01)).unwrap();
    assert_eq!(sim.bob.status, Status::Abandoned(AbortReason::CrcMismatch));
    assert_eq!(sim.alice.status, Status::Abandoned(AbortReason::CrcMismatch));
    assert_eq!(sim.bob.final_key, None);
    assert_eq!(sim.bob.passes_run, 1);
    assert_eq!(sim.bob.ledger.crc_bits, 64);

    let mut retry = config(n, 0.01);
    retry.crc_retries = 3;
    let sim = simulate(alice.clone(), bob, &retry).unwrap();
    assert_eq!(sim.bob.status, Status::Success);
    assert_eq!(sim.alice.status, Status::Success);
    assert_eq!(sim.bob.final_key, Some(alice));
    assert!(sim.bob.ledger.crc_bits >= 128);
}

#[test]
fn seeded_run_at_two_percent() {
    let n = 65536;
    let alice = random_key(n, 5);
    let bob = noisy(&alice, 0.02, 6);
    let sim = simulate(alice.clone(), bob.clone(), &config(n, 0.02)).unwrap();
    assert_eq!(sim.bob.status, sim.alice.status);
    match sim.bob.status {
        Status::Success => assert_eq!(sim.bob.final_key, Some(alice.clone())),
        s => assert_eq!(s, Status::Abandoned(AbortReason::CrcMismatch)),
    }
    let f = sim.bob.efficiency.unwrap();
    assert!(f > 1.0 && f.is_finite(), "f = {f}");
    assert_eq!(sim.bob.ledger, sim.alice.ledger);
    assert_eq!(sim.bob.passes_run, sim.alice.passes_run);
    assert_eq!(sim.bob.round_trips, sim.bob.passes_run as u64 + 1);

    let mut retry = config(n, 0.02);
    retry.crc_retries = 8;
    let sim = simulate(alice.clone(), bob, &retry).unwrap();
    assert_eq!(sim.bob.status, Status::Success);
    assert_eq!(sim.bob.final_key, Some(alice.clone()));
    assert_eq!(sim.alice.final_key, Some(alice));
    assert_eq!(sim.stats.disclosed, sim.bob.ledger);
}

#[test]
fn ledger_matches_the_tap() {
    for (seed, p) in [(7, 0.01), (8, 0.03), (9, 0.05), (10, 0.1)] {
        let n = 20000;
        let alice = random_key(n, seed);
        let bob = noisy(&alice, p, seed + 100);
        let sim = simulate(alice, bob, &config(n, p)).unwrap();
        assert_eq!(sim.stats.disclosed, sim.bob.ledger);
        assert_eq!(sim.bob.ledger, sim.alice.ledger);
    }
}

#[test]
fn sessions_are_deterministic() {
    let n = 8192;
    let alice = random_key(n, 11);
    let bob = noisy(&alice, 0.04, 12);
    let a = simulate_recorded(alice.clone(), bob.clone(), &config(n, 0.04)).unwrap();
    let b = simulate_recorded(alice, bob, &config(n, 0.04)).unwrap();
    assert_eq!(a.transcript, b.transcript);
    assert_eq!(a.bob, b.bob);
    assert_eq!(a.stats, b.stats);
}

#[test]
fn error_parity_law_holds_every_pass() {
    let n = 16384;
    for seed in 0..10 {
        let alice = random_key(n, 20 + seed);
        let bob = noisy(&alice, 0.05, 40 + seed);
        let cfg = config(n, 0.05);
        let mut ch = DirectChannel::new(AliceResponder::new(alice.clone(), &cfg.with_role(Role::Alice)).unwrap());
        let mut permuter = TwoLfsrPermuter::new(cfg.seed1, cfg.seed2, n).unwrap();
        let mut alice_now = alice.clone();
        let mut applied = 0;
        let mut checked = 0;
        drive_observed(bob, &cfg, &mut ch, LeakLedger::default(), |s| {
            while applied < s.permutations {
                alice_now = apply_permutation(&alice_now, &permuter.next_plan().unwrap()).unwrap();
                applied += 1;
            }
            let part = BlockPartition::new(n, s.state.block_length).unwrap();
            for j in 0..part.block_count() {
                let r = part.block_range(j);
                let before = r.clone().filter(|&i| s.before.bit(i) != alice_now.bit(i)).count();
                let after = r.filter(|&i| s.after.bit(i) != alice_now.bit(i)).count();
                let mismatched = s.state.mismatched_blocks.contains(&(j as u32));
                assert_eq!(before % 2 == 1, mismatched);
                assert_eq!(after % 2, 0);
                checked += 1;
            }
        })
        .unwrap();
        assert!(checked > 0);
    }
}

#[test]
fn general_lengths_use_bisection_for_the_tail() {
    for (n, seed) in [(1000, 1), (12345, 2), (65537, 3), (100, 4)] {
        let alice = random_key(n, seed);
        let bob = noisy(&alice, 0.03, seed + 50);
        let sim = simulate(alice.clone(), bob, &config(n, 0.03)).unwrap();
        assert_eq!(sim.stats.disclosed, sim.bob.ledger);
        if sim.bob.status == Status::Success {
            assert_eq!(sim.bob.final_key, Some(alice));
        }
    }
    // a lone error in the partial tail block
    let n = 1000;
    let alice = random_key(n, 9);
    let bob = alice.flipped(997).unwrap();
    let sim = simulate(alice.clone(), bob, &config(n, 0.01)).unwrap();
    assert_eq!(sim.bob.status, Status::Success);
    assert_eq!(sim.bob.final_key, Some(alice));
    // 16 parities, 5 halvings of the 40-bit tail, then 8 parities at n = 128
    assert_eq!(sim.bob.ledger.parity_bits, 16 + 5 + 8);
    assert_eq!(sim.bob.ledger.syndrome_bits, 0);
}

#[test]
fn tiny_keys() {
    for n in 1..20 {
        let alice = random_key(n, n as u64);
        let bob = alice.flipped(n - 1).unwrap();
        let cfg = SessionConfig::new(n, 0.1, 1, 1, Role::Bob);
        let sim = simulate(alice.clone(), bob, &cfg).unwrap();
        assert_eq!(sim.stats.disclosed, sim.bob.ledger);
        assert_eq!(sim.bob.status, Status::Success, "n = {n}");
        assert_eq!(sim.bob.final_key, Some(alice));
    }
}

#[test]
fn disagreeing_parameters_abort_negotiation() {
    let n = 4096;
    let key = random_key(n, 13);
    let cfg = config(n, 0.02);
    let mut other = cfg.with_role(Role::Alice);
    other.seed2 = 79;
    let mut ch = DirectChannel::new(AliceResponder::new(key.clone(), &other).unwrap());
    let out = qkdrecon_core::protocol::drive(key, &cfg, &mut ch, LeakLedger::default()).unwrap();
    assert_eq!(out.status, Status::Abandoned(AbortReason::Negotiation));
    assert_eq!(out.final_key, None);
    let (alice, stats, _) = ch.into_parts();
    assert_eq!(alice.outcome().status, Status::Abandoned(AbortReason::Negotiation));
    assert_eq!(stats.disclosed.total(), 0);
}

#[test]
fn leaked_bits_can_be_discarded() {
    let n = 8192;
    let alice = random_key(n, 14);
    let bob = noisy(&alice, 0.03, 15);
    let mut cfg = config(n, 0.03);
    cfg.discard_leaked = true;
    let sim = simulate(alice.clone(), bob, &cfg).unwrap();
    assert_eq!(sim.bob.status, Status::Success);
    let kept = n - sim.bob.ledger.total() as usize;
    let fk = sim.bob.final_key.unwrap();
    assert_eq!(fk.len(), kept);
    assert_eq!(fk, alice.truncated(kept).unwrap());
    assert_eq!(sim.alice.final_key, Some(fk));
}

#[test]
fn bad_configuration_is_an_error() {
    let key = random_key(64, 1);
    assert!(simulate(key.clone(), key.clone(), &SessionConfig::new(64, 0.6, 1, 2, Role::Bob)).is_err());
    assert!(simulate(key.clone(), key.clone(), &SessionConfig::new(64, 0.1, 0, 2, Role::Bob)).is_err());
    assert!(simulate(key.clone(), key, &SessionConfig::new(65, 0.1, 1, 2, Role::Bob)).is_err());
}
