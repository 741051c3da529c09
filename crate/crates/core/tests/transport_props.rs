use gridforge_core::transport::Envelope;
use gridforge_core::{run_ranks, run_ranks_with, ReduceOp, RunOptions, Subsystem, Tag, TransportError};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn payloads_arrive_intact(
        ranks in 2usize..=5,
        lens in proptest::collection::vec(0usize..=1 << 16, 1..4),
        seed in any::<u64>(),
    ) {
        let lens2 = lens.clone();
        let out = run_ranks_with(ranks, RunOptions { schedule_seed: Some(seed) }, move |comm| {
            let me = comm.rank();
            let n = comm.size();
            let payload = |from: usize, to: usize, i: usize| -> Vec<u8> {
                (0..lens2[i]).map(|k| (k * 31 + from * 7 + to * 3 + i) as u8).collect()
            };
            let mut sends = Vec::new();
            for to in (0..n).filter(|&t| t != me) {
                for i in 0..lens2.len() {
                    sends.push(comm.post_send(to, Tag::user(i as u32), payload(me, to, i))?);
                }
            }
            for from in (0..n).filter(|&f| f != me) {
                for i in (0..lens2.len()).rev() {
                    let got = comm.receive(from, Tag::user(i as u32), lens2[i])?;
                    assert_eq!(got, payload(from, me, i));
                }
            }
            comm.wait_all_sends(sends)?;
            Ok::<_, TransportError>(comm.stats().messages_sent)
        })
        .unwrap();
        for sent in out {
            prop_assert_eq!(sent, ((ranks - 1) * lens.len()) as u64);
        }
    }

    #[test]
    fn collectives_agree(ranks in 1usize..=6, values in proptest::collection::vec(-1e6f64..1e6, 6)) {
        let v2 = values.clone();
        let out = run_ranks(ranks, move |comm| {
            let x = v2[comm.rank()];
            let sum = comm.allreduce(x, ReduceOp::Sum)?;
            let min = comm.allreduce(x, ReduceOp::Min)?;
            let max = comm.allreduce(comm.rank() as u64, ReduceOp::Max)?;
            let blocks = comm.allgather_variable(vec![comm.rank() as u8; comm.rank()])?;
            comm.barrier()?;
            Ok::<_, TransportError>((sum.to_bits(), min, max, blocks))
        })
        .unwrap();
        let sum = values[..ranks].iter().fold(None, |acc: Option<f64>, v| Some(acc.map_or(*v, |a| a + v))).unwrap();
        let min = values[..ranks].iter().copied().fold(f64::INFINITY, f64::min);
        for (s, m, mx, blocks) in &out {
            prop_assert_eq!(*s, sum.to_bits());
            prop_assert_eq!(*m, min);
            prop_assert_eq!(*mx, ranks as u64 - 1);
            for (r, b) in blocks.iter().enumerate() {
                prop_assert_eq!(b, &vec![r as u8; r]);
            }
        }
    }

    #[test]
    fn envelope_round_trip(src in any::<u32>(), dst in any::<u32>(), raw in any::<u32>(), payload in proptest::collection::vec(any::<u8>(), 0..256)) {
        let e = Envelope { source: src as usize, destination: dst as usize, tag: Tag::new(Subsystem::Migration, raw), payload };
        let bytes = e.to_bytes();
        prop_assert_eq!(bytes.len(), 24 + e.payload.len());
        prop_assert_eq!(Envelope::from_bytes(&bytes).unwrap(), e);
    }
}

#[test]
fn messages_with_equal_tags_keep_order() {
    run_ranks(2, |comm| {
        if comm.rank() == 0 {
            for i in 0..100u8 {
                comm.send(1, Tag::user(9), vec![i])?;
            }
        } else {
            for i in 0..100u8 {
                assert_eq!(comm.receive(0, Tag::user(9), 1)?, vec![i]);
            }
        }
        Ok::<_, TransportError>(())
    })
    .unwrap();
}

#[test]
fn oversized_message_is_an_error() {
    let err = run_ranks(2, |comm| {
        if comm.rank() == 0 {
            comm.send(1, Tag::user(1), vec![0; 10])?;
        } else {
            comm.receive(0, Tag::user(1), 4)?;
        }
        Ok::<_, TransportError>(())
    })
    .unwrap_err();
    assert!(matches!(err, TransportError::ReceiveOverflow { sender: 0, actual: 10, max: 4, .. }), "{err}");
}

#[test]
fn unmatched_receive_is_a_deadlock() {
    let err = run_ranks(3, |comm| {
        if comm.rank() == 1 {
            comm.receive(2, Tag::user(5), 8)?;
        }
        Ok::<_, TransportError>(())
    })
    .unwrap_err();
    assert!(matches!(err, TransportError::Deadlock(_)), "{err}");
}

#[test]
fn mismatched_collectives_are_reported() {
    let err = run_ranks(2, |comm| {
        if comm.rank() == 0 {
            comm.barrier()?;
        } else {
            comm.allreduce(1u64, ReduceOp::Sum)?;
        }
        Ok::<_, TransportError>(())
    })
    .unwrap_err();
    assert!(matches!(err, TransportError::CollectiveMismatch { .. }), "{err}");
}

#[test]
fn invalid_rank_is_rejected() {
    let err = run_ranks(2, |comm| comm.send(2, Tag::user(0), vec![])).unwrap_err();
    assert!(matches!(err, TransportError::InvalidRank { rank: 2, size: 2 }), "{err}");
}

#[test]
fn failing_rank_aborts_the_others() {
    #[derive(Debug)]
    struct Boom(String);
    impl From<TransportError> for Boom {
        fn from(e: TransportError) -> Self {
            Boom(e.to_string())
        }
    }
    impl std::fmt::Display for Boom {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            f.write_str(&self.0)
        }
    }
    let err = run_ranks(4, |comm| {
        if comm.rank() == 2 {
            return Err(Boom("rank two gave up".into()));
        }
        comm.barrier()?;
        Ok(())
    })
    .unwrap_err();
    assert_eq!(err.0, "rank two gave up");
}

#[test]
fn panicking_rank_is_reported() {
    let err = run_ranks(2, |comm| {
        if comm.rank() == 1 {
            panic!("bad rank");
        }
        comm.barrier()?;
        Ok::<_, TransportError>(())
    })
    .unwrap_err();
    assert!(err.to_string().contains("bad rank"), "{err}");
}

#[test]
fn tags_keep_subsystems_apart() {
    let t = Tag::new(Subsystem::Exchange, 77);
    assert_eq!(t.subsystem(), Subsystem::Exchange);
    assert_eq!(t.user_tag(), 77);
    assert_eq!(Tag::from_raw(t.raw()), Some(t));
    assert_ne!(Tag::new(Subsystem::User, 77), t);
}
