//! Mutated files must come back as a value or a typed error, never a panic.
//! Strict prefixes of binary files must always be rejected.

use difs::formats::{
    parse_dump, parse_kitti_tracking, parse_signatures, parse_simple_csv, serialize_dump, serialize_signatures,
    ActivationDump, DumpFrame,
};
use difs::net::reference::reference_network;
use difs::net::{parse_network, serialize_network, Scale};
use difs::{LabeledSample, Tensor3};
use proptest::prelude::*;

fn dump_bytes() -> Vec<u8> {
    let mut d = ActivationDump::new(64, 96, 48);
    for frame in 0..2u32 {
        let layers = [
            (4, Tensor3::from_fn(3, 8, 8, |c, y, x| (c + y * x) as f32 * 0.25 + frame as f32).unwrap()),
            (7, Tensor3::filled(2, 2, 2, 1.5).unwrap()),
        ]
        .into_iter()
        .collect();
        d.frames.push(DumpFrame { frame, layers });
    }
    serialize_dump(&d)
}

fn signature_bytes() -> Vec<u8> {
    let set: Vec<LabeledSample> = (0..4)
        .map(|i| LabeledSample {
            label: format!("car_{i}"),
            frame: i,
            scale: Scale::Fine,
            layer: 22,
            values: vec![i as f32 * 1.5, -0.25, 1e-3, 42.0],
        })
        .collect();
    serialize_signatures(&set).unwrap().into_bytes()
}

const KITTI: &str = "0 2 Car 0 0 -1.57 100.0 120.0 200.0 180.0 1.5 1.6 3.9 1.0 1.7 20.0 -1.5\n\
1 2 Car 0 0 -1.57 104.0 121.0 203.0 182.0 1.5 1.6 3.9 1.0 1.7 20.0 -1.5\n\
1 -1 DontCare -1 -1 -10 5 5 50 50 -1000 -1000 -1000 -10 -1 -1 -10\n";

const CSV: &str = "frame,track,type,x1,y1,x2,y2\n0,a,car,1,2,30,40\n1,b,van,5.5,6,70.25,80\n";

#[derive(Debug, Clone)]
enum Mutation {
    Truncate(usize),
    Flip(usize, u8),
    Insert(usize, u8),
    Remove(usize),
}

fn apply(bytes: &[u8], m: &Mutation) -> Vec<u8> {
    let mut out = bytes.to_vec();
    if out.is_empty() {
        return out;
    }
    match *m {
        Mutation::Truncate(at) => out.truncate(at % out.len()),
        Mutation::Flip(at, mask) => {
            let i = at % out.len();
            out[i] ^= mask.max(1);
        }
        Mutation::Insert(at, b) => out.insert(at % (out.len() + 1), b),
        Mutation::Remove(at) => {
            out.remove(at % out.len());
        }
    }
    out
}

fn mutation() -> impl Strategy<Value = Mutation> {
    prop_oneof![
        any::<usize>().prop_map(Mutation::Truncate),
        (any::<usize>(), any::<u8>()).prop_map(|(a, b)| Mutation::Flip(a, b)),
        (any::<usize>(), any::<u8>()).prop_map(|(a, b)| Mutation::Insert(a, b)),
        any::<usize>().prop_map(Mutation::Remove),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn dump_mutations(ms in prop::collection::vec(mutation(), 1..4)) {
        let mut bytes = dump_bytes();
        let strict_prefix = ms.len() == 1 && matches!(ms[0], Mutation::Truncate(_));
        for m in &ms {
            bytes = apply(&bytes, m);
        }
        let r = parse_dump(&bytes);
        if strict_prefix {
            prop_assert!(r.is_err());
        }
    }

    #[test]
    fn network_mutations(ms in prop::collection::vec(mutation(), 1..4)) {
        let mut bytes = serialize_network(&reference_network(32, 3));
        let strict_prefix = ms.len() == 1 && matches!(ms[0], Mutation::Truncate(_));
        for m in &ms {
            bytes = apply(&bytes, m);
        }
        let r = parse_network(&bytes);
        if strict_prefix {
            prop_assert!(r.is_err());
        }
    }

    #[test]
    fn text_mutations(ms in prop::collection::vec(mutation(), 1..4)) {
        let mut sig = signature_bytes();
        let mut kitti = KITTI.as_bytes().to_vec();
        let mut csv = CSV.as_bytes().to_vec();
        for m in &ms {
            sig = apply(&sig, m);
            kitti = apply(&kitti, m);
            csv = apply(&csv, m);
        }
        let _ = parse_signatures(&sig);
        let _ = parse_kitti_tracking(&kitti);
        let _ = parse_simple_csv(&csv);
    }

    #[test]
    fn arbitrary_bytes(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        prop_assert!(parse_dump(&bytes).is_err());
        prop_assert!(parse_network(&bytes).is_err());
        let _ = parse_signatures(&bytes);
        let _ = parse_kitti_tracking(&bytes);
        let _ = parse_simple_csv(&bytes);
    }
}
