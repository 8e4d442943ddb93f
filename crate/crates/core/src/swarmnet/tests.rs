use std::sync::Arc;
use std::time::Duration;

use super::*;
use crate::taskgen::{generate, SpecialtyId};

fn question(seed: u64) -> Question {
    generate(Specialty::from(SpecialtyId::BaseConversion), seed)
}

fn packet(sender: &str, round: u64, seed: u64) -> RolloutPacket {
    RolloutPacket::new(sender, round, &question(seed), vec!["<answer>1</answer>".into(), "x".into()])
}

#[test]
fn wire_format_is_one_json_line_in_field_order() {
    let bytes = serialize(&packet("node-1", 3, 7)).unwrap();
    let text = String::from_utf8(bytes.clone()).unwrap();
    assert!(text.ends_with('\n'));
    assert_eq!(text.matches('\n').count(), 1);
    let keys = [
        "schema_version",
        "sender",
        "round",
        "specialty",
        "instance_seed",
        "prompt",
        "ground_truth",
        "metadata",
        "completions",
    ];
    let positions: Vec<usize> = keys.iter().map(|k| text.find(&format!("\"{k}\"")).unwrap()).collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(deserialize(&bytes).unwrap(), packet("node-1", 3, 7));
}

#[test]
fn question_survives_the_packet() {
    let q = question(99);
    let p = RolloutPacket::new("a", 0, &q, vec!["z".into()]);
    assert_eq!(p.question(), q);
}

#[test]
fn rejects_bad_versions_and_shapes() {
    let mut p = packet("a", 0, 1);
    p.schema_version = 2;
    assert!(matches!(serialize(&p), Err(Error::SchemaVersion(2))));
    let good = String::from_utf8(serialize(&packet("a", 0, 1)).unwrap()).unwrap();
    let v2 = good.replacen("\"schema_version\":1", "\"schema_version\":2", 1);
    assert!(matches!(deserialize(v2.as_bytes()), Err(Error::SchemaVersion(2))));
    let extra = good.replacen('{', "{\"reward\":1.0,", 1);
    assert!(matches!(deserialize(extra.as_bytes()), Err(Error::MalformedPacket(_))));
    assert!(matches!(deserialize(b"{}"), Err(Error::MalformedPacket(_))));
    assert!(matches!(deserialize(&[0xff, 0xfe]), Err(Error::MalformedPacket(_))));
    let mut empty = packet("a", 0, 1);
    empty.completions.clear();
    assert!(empty.validate().is_err());
}

#[test]
fn pool_window_exclusion_and_order() {
    let pool = SwarmPool::new(2, 64);
    pool.insert(packet("b", 5, 1));
    pool.insert(packet("a", 5, 2));
    pool.insert(packet("b", 4, 3));
    pool.insert(packet("me", 5, 4));
    pool.insert(packet("a", 2, 5));
    pool.insert(packet("a", 6, 6));
    let got: Vec<(String, u64)> = pool.poll("me", 5).iter().map(|p| (p.sender.clone(), p.round)).collect();
    assert_eq!(got, vec![("a".into(), 5), ("b".into(), 4), ("b".into(), 5)]);
    assert_eq!(pool.poll("me", 0).len(), 0);
    assert_eq!(pool.len(), 6);
}

#[test]
fn pool_capacity_evicts_oldest_per_sender() {
    let pool = SwarmPool::new(10, 3);
    for i in 0..5 {
        pool.insert(packet("a", 1, i));
    }
    pool.insert(packet("b", 1, 100));
    let seeds: Vec<u64> = pool.poll("x", 1).iter().map(|p| p.instance_seed).collect();
    assert_eq!(seeds, vec![2, 3, 4, 100]);
}

#[test]
fn in_memory_broadcast_skips_sender_and_dead_nodes() {
    let t = InMemoryTransport::new();
    let pools: Vec<Arc<SwarmPool>> = (0..3).map(|_| Arc::new(SwarmPool::default())).collect();
    for (i, p) in pools.iter().enumerate() {
        t.register(&format!("n{i}"), p.clone());
    }
    t.deregister("n2");
    let d = broadcast("n0", 0, &[packet("n0", 0, 1)], &t).unwrap();
    assert_eq!(d.acknowledged, 1);
    assert_eq!(pools[0].len(), 0);
    assert_eq!(pools[1].len(), 1);
    assert_eq!(pools[2].len(), 0);
    assert!(broadcast("n1", 0, &[packet("n0", 0, 1)], &t).is_err());
    assert!(broadcast("n0", 1, &[packet("n0", 0, 1)], &t).is_err());
    assert_eq!(broadcast("n0", 0, &[], &t).unwrap(), Delivery::default());
}

#[test]
fn frames_round_trip() {
    let mut buf = Vec::new();
    write_frame(&mut buf, b"hello\n").unwrap();
    write_frame(&mut buf, b"").unwrap();
    assert_eq!(&buf[..4], &[0, 0, 0, 6]);
    let mut r = buf.as_slice();
    assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"hello\n");
    assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"");
    assert!(read_frame(&mut r).unwrap().is_none());
    let truncated = [0u8, 0, 0, 9, b'a'];
    assert!(read_frame(&mut truncated.as_slice()).is_err());
    let huge = (MAX_FRAME as u32 + 1).to_be_bytes();
    assert!(read_frame(&mut huge.as_slice()).is_err());
}

#[test]
fn socket_transport_delivers_and_reports_unreached() {
    let pools: Vec<Arc<SwarmPool>> = (0..2).map(|_| Arc::new(SwarmPool::default())).collect();
    let endpoints: Vec<SocketEndpoint> = pools
        .iter()
        .map(|p| SocketEndpoint::spawn("127.0.0.1:0".parse().unwrap(), p.clone()).unwrap())
        .collect();
    // A peer nobody listens on.
    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let dead_addr = dead.local_addr().unwrap();
    drop(dead);
    let mut peers = PeerList {
        peers: endpoints
            .iter()
            .enumerate()
            .map(|(i, e)| PeerAddr {
                id: format!("n{i}"),
                addr: e.local_addr().to_string(),
            })
            .collect(),
    };
    peers.peers.push(PeerAddr {
        id: "gone".into(),
        addr: dead_addr.to_string(),
    });
    let t = SocketTransport::new(&peers, Duration::from_secs(2)).unwrap();
    let sent = [packet("n0", 0, 1), packet("n0", 0, 2)];
    let d = broadcast("n0", 0, &sent, &t).unwrap();
    assert_eq!(d.acknowledged, 1);
    assert_eq!(d.unreached, vec!["gone".to_string()]);
    assert_eq!(pools[0].len(), 0);
    let got: Vec<RolloutPacket> = pools[1].poll("n1", 0).iter().map(|p| (**p).clone()).collect();
    assert_eq!(got, sent.to_vec());
    // The cached connection is reused for a second round.
    broadcast("n0", 1, &[packet("n0", 1, 3)], &t).unwrap();
    assert_eq!(pools[1].len(), 3);
}

#[test]
fn peer_list_parses_toml() {
    let peers = PeerList::from_toml_str("[[peers]]\nid = \"node-0\"\naddr = \"127.0.0.1:7100\"\n").unwrap();
    assert_eq!(peers.peers.len(), 1);
    assert_eq!(peers.peers[0].id, "node-0");
    assert!(PeerList::from_toml_str("peers = 3").is_err());
}
