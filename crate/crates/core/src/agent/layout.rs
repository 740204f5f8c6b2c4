use serde::{Deserialize, Serialize};

use crate::model::UserId;

/// Per-slot blocks in column order.
pub const BLOCKS: [&str; 9] = ["g", "r", "l_ac", "l_fl", "c", "d", "e_fit", "e_dr", "e_as"];

pub(crate) const G: usize = 0;
pub(crate) const R: usize = 1;
pub(crate) const L_AC: usize = 2;
pub(crate) const L_FL: usize = 3;
pub(crate) const C: usize = 4;
pub(crate) const D: usize = 5;
pub(crate) const E_FIT: usize = 6;
pub(crate) const E_DR: usize = 7;
pub(crate) const E_AS: usize = 8;

/// Column map of one household inside a QP.
///
/// Columns are `g, r, l_ac, l_fl, c, d, e_fit, e_dr, e_as` (each `slots`
/// long), then `peak`, then one `slots`-long trade block per peer in
/// ascending id order. `offset` shifts the whole block, which is how the
/// centralized problem stacks households.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub user: UserId,
    pub slots: usize,
    pub peers: Vec<UserId>,
    pub offset: usize,
}

impl Layout {
    pub fn new(user: UserId, slots: usize, mut peers: Vec<UserId>, offset: usize) -> Self {
        peers.sort();
        peers.dedup();
        Self {
            user,
            slots,
            peers,
            offset,
        }
    }

    /// Number of columns owned by this household.
    pub fn len(&self) -> usize {
        (9 + self.peers.len()) * self.slots + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn end(&self) -> usize {
        self.offset + self.len()
    }

    pub fn var(&self, block: usize, t: usize) -> usize {
        debug_assert!(block < 9 && t < self.slots);
        self.offset + block * self.slots + t
    }

    pub fn peak(&self) -> usize {
        self.offset + 9 * self.slots
    }

    pub fn peer_index(&self, v: UserId) -> Option<usize> {
        self.peers.binary_search(&v).ok()
    }

    pub fn trade(&self, k: usize, t: usize) -> usize {
        debug_assert!(k < self.peers.len() && t < self.slots);
        self.offset + 9 * self.slots + 1 + k * self.slots + t
    }
}
