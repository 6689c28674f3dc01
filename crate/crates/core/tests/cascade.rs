use qkdrecon_core::cascade::{
    binary_locate, cascade_drive_observed, cascade_simulate, CascadeConfig, CascadeResponder,
    PassLayout,
};
use qkdrecon_core::wire::Message;
use qkdrecon_core::{
    AbortReason, BitString, Channel, ChannelError, DirectChannel, KeyString, LeakLedger, Responder, Role,
    Status,
};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_key(len: usize, seed: u64) -> KeyString {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits: Vec<bool> = (0..len).map(|_| rng.random()).collect();
    BitString::from_bools(&bits).unwrap()
}

/// Answers half-parity queries over one fixed layout.
struct HalfParities {
    key: KeyString,
    layout: PassLayout,
}

impl Responder for HalfParities {
    fn respond(&mut self, msg: &Message) -> Option<Message> {
        match msg {
            Message::HalfParityQuery { pass, start, end } => Some(Message::HalfParity {
                pass: *pass,
                start: *start,
                end: *end,
                parity: self.layout.parity(&self.key, *start as usize, *end as usize),
            }),
            _ => None,
        }
    }
    fn finished(&self) -> bool {
        false
    }
    fn channel_failed(&mut self, _: &ChannelError) {}
}

fn locate(alice: &KeyString, bob: &KeyString) -> (usize, LeakLedger) {
    let n = alice.len();
    let mut cfg = CascadeConfig::new(n, 0.1, 1, Role::Bob).unwrap();
    cfg.k1 = n;
    let layout = cfg.layout(0);
    let mut ch = DirectChannel::new(HalfParities {
        key: alice.clone(),
        layout: layout.clone(),
    });
    let mut ledger = LeakLedger::default();
    let q = binary_locate(bob, &layout, 0, 0..n, &mut ch, &mut ledger).unwrap();
    assert_eq!(ch.stats().disclosed, ledger);
    (q, ledger)
}

#[test]
fn binary_finds_every_single_error_in_eight_bits() {
    let alice = BitString::from_bit_str("01101001").unwrap();
    for e in 0..8 {
        let (q, ledger) = locate(&alice, &alice.flipped(e).unwrap());
        assert_eq!(q, e);
        assert_eq!(ledger.parity_bits, 3);
    }
}

#[test]
fn binary_on_one_bit_leaks_nothing() {
    let alice = BitString::from_bit_str("1").unwrap();
    let (q, ledger) = locate(&alice, &BitString::from_bit_str("0").unwrap());
    assert_eq!(q, 0);
    assert_eq!(ledger.total(), 0);
}

#[test]
fn binary_with_three_errors_lands_on_one() {
    let alice = BitString::from_bit_str("11001010").unwrap();
    for a in 0..8 {
        for b in a + 1..8 {
            for c in b + 1..8 {
                let bob = alice.flipped(a).unwrap().flipped(b).unwrap().flipped(c).unwrap();
                let (q, _) = locate(&alice, &bob);
                assert!([a, b, c].contains(&q));
            }
        }
    }
}

#[test]
fn identical_keys_leak_only_pass_parities() {
    let n = 65536;
    let key = random_key(n, 1);
    let cfg = CascadeConfig::new(n, 0.01, 7, Role::Bob).unwrap();
    assert_eq!(cfg.k1, 73);
    let sim = cascade_simulate(key.clone(), key.clone(), &cfg).unwrap();
    assert_eq!(sim.bob.status, Status::Success);
    assert_eq!(sim.bob.corrections, 0);
    let parities: u64 = (0..4).map(|u| n.div_ceil(73 << u) as u64).sum();
    assert_eq!(sim.bob.ledger.parity_bits, parities);
    assert_eq!(sim.bob.ledger.total(), parities + 64);
    assert_eq!(sim.bob.final_key, Some(key));
}

#[test]
fn forty_errors_in_4096_bits_are_removed() {
    let n = 4096;
    for seed in 0..20 {
        let alice = random_key(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut bob = alice.clone();
        for q in sample(&mut rng, n, 40) {
            bob.flip(q).unwrap();
        }
        let cfg = CascadeConfig::new(n, 40.0 / n as f64, seed, Role::Bob).unwrap();
        let sim = cascade_simulate(alice.clone(), bob, &cfg).unwrap();
        assert_eq!(sim.bob.status, Status::Success);
        assert_eq!(sim.bob.final_key, Some(alice));
        assert!(sim.bob.corrections >= 40);
        assert_eq!(sim.stats.disclosed, sim.bob.ledger);
        assert_eq!(sim.alice.ledger, sim.bob.ledger);
    }
}

#[test]
fn bookkeeping_matches_a_recount() {
    let n = 1500;
    for seed in 0..10 {
        let alice = random_key(n, 50 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(60 + seed);
        let mut bob = alice.clone();
        for i in 0..n {
            if rng.random_bool(0.05) {
                bob.flip(i).unwrap();
            }
        }
        let cfg = CascadeConfig::new(n, 0.05, seed, Role::Bob).unwrap();
        let mut ch = DirectChannel::new(CascadeResponder::new(alice.clone(), &cfg).unwrap());
        let mut steps = 0;
        cascade_drive_observed(bob, &cfg, &mut ch, |view| {
            for pass in 0..view.passes() {
                let layout = view.layout(pass);
                for b in 0..layout.block_count() {
                    let r = layout.block_range(b);
                    let recount = layout.parity(view.key, r.start, r.end)
                        ^ layout.parity(&alice, r.start, r.end);
                    assert_eq!(view.is_odd(pass, b), recount);
                }
            }
            steps += 1;
        })
        .unwrap();
        assert!(steps > 0);
    }
}

#[test]
fn cascade_needs_more_round_trips_than_blocks() {
    let n = 16384;
    let alice = random_key(n, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bob = alice.clone();
    for i in 0..n {
        if rng.random_bool(0.03) {
            bob.flip(i).unwrap();
        }
    }
    let cfg = CascadeConfig::new(n, 0.03, 1, Role::Bob).unwrap();
    let sim = cascade_simulate(alice.clone(), bob, &cfg).unwrap();
    assert_eq!(sim.bob.final_key, Some(alice));
    assert!(sim.stats.round_trips > sim.bob.corrections);
    let f = sim.bob.efficiency.unwrap();
    assert!(f > 1.0 && f < 1.6, "f = {f}");
}

#[test]
fn mismatched_shuffle_seed_is_refused() {
    let key = random_key(256, 1);
    let cfg = CascadeConfig::new(256, 0.05, 1, Role::Bob).unwrap();
    let mut other = cfg.clone();
    other.shuffle_seed = 2;
    let mut ch = DirectChannel::new(CascadeResponder::new(key.clone(), &other).unwrap());
    let out = qkdrecon_core::cascade::cascade_drive(key, &cfg, &mut ch).unwrap();
    assert_eq!(out.status, Status::Abandoned(AbortReason::Negotiation));
}
