//! Small fixed networks used in examples, studies and tests.

use crate::netmodel::{Hypernet, NodeId};

/// Point-to-point butterfly with source 0 and sinks 5 and 6.
pub fn butterfly() -> (Hypernet, NodeId, [NodeId; 2]) {
    let mut net = Hypernet::new(7);
    for (i, j) in [(0, 1), (0, 2), (1, 3), (2, 3), (3, 4), (1, 5), (4, 5), (2, 6), (4, 6)] {
        net.add_arc(i, &[j]).expect("valid arc");
    }
    (net, 0, [5, 6])
}

/// Broadcast variant of the butterfly: source 0, sinks 5 and 6.
pub fn wireless_butterfly() -> (Hypernet, NodeId, [NodeId; 2]) {
    let mut net = Hypernet::new(7);
    for (i, js) in [
        (0, &[1, 2][..]),
        (1, &[3, 5][..]),
        (2, &[3, 6][..]),
        (3, &[4][..]),
        (4, &[5, 6][..]),
    ] {
        net.add_arc(i, js).expect("valid arc");
    }
    (net, 0, [5, 6])
}

/// Lossless four-node network: source 0, relays 1 and 2, arcs
/// 0->1, 0->2, 1->3, 2->3 in that order.
pub fn four_node() -> Hypernet {
    let mut net = Hypernet::new(4);
    for (i, j) in [(0, 1), (0, 2), (1, 3), (2, 3)] {
        net.add_arc(i, &[j]).expect("valid arc");
    }
    net
}

/// Eight-node lossless network for the routed-tree counterexample, with
/// nodes numbered 1..=8 mapped to indices 0..=7.
pub fn buttvar() -> Hypernet {
    let mut net = Hypernet::new(8);
    for (i, j) in [(1, 2), (1, 3), (2, 4), (3, 4), (4, 5), (5, 6), (5, 7), (2, 6), (3, 7), (6, 8), (7, 8)] {
        net.add_arc(i - 1, &[j - 1]).expect("valid arc");
    }
    net
}
