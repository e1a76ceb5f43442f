//! Node identity hashing and pairwise key establishment.
//!
//! A node with id `i` and station-assigned key `k` is placed at the field
//! point `h = H(i|k)`. Its share is the master polynomial restricted to
//! `x = h`; two nodes agree on `P(h_a, h_b)` by evaluating their shares at
//! each other's point.

use std::fmt;

use crate::field::{FieldElement, Modulus, SymmetricBivariatePoly, UnivariatePoly};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Secret assigned by the central station at admission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeKey(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IdentityHash(pub FieldElement);

impl IdentityHash {
    pub fn value(self) -> u64 {
        self.0.value()
    }
}

/// How identities map to field points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HashMode {
    /// 64-bit finalizer chain over `(id, key)`.
    #[default]
    Mixed,
    /// `id mod Q`, ignoring the key. Only for hand-checkable fixtures.
    Identity,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

/// Derives an independent seed for a named sub-stream of `seed`.
pub fn substream(seed: u64, tag: u64) -> u64 {
    mix(mix(seed.wrapping_add(GOLDEN_GAMMA)) ^ tag)
}

/// `mix(mix(id + gamma) ^ key) mod Q`, or `id mod Q` in identity mode.
pub fn node_hash(id: NodeId, key: NodeKey, modulus: Modulus, mode: HashMode) -> IdentityHash {
    let raw = match mode {
        HashMode::Mixed => mix(mix(id.0.wrapping_add(GOLDEN_GAMMA)) ^ key.0),
        HashMode::Identity => id.0,
    };
    IdentityHash(modulus.elem(raw))
}

/// A node's univariate share `f_i(y) = P(H(i|Key_i), y)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyShare {
    pub owner: NodeId,
    pub generation_index: u32,
    pub poly: UnivariatePoly,
}

pub fn derive_share(
    master: &SymmetricBivariatePoly,
    id: NodeId,
    key: NodeKey,
    generation_index: u32,
    mode: HashMode,
) -> KeyShare {
    let h = node_hash(id, key, master.modulus(), mode);
    KeyShare {
        owner: id,
        generation_index,
        poly: master.restrict_to_x(h.0),
    }
}

pub fn pairwise_key(share: &KeyShare, peer: IdentityHash) -> FieldElement {
    share.poly.eval(peer.0)
}

/// True iff both sides compute the same pairwise key.
pub fn verify_agreement(share_a: &KeyShare, hash_a: IdentityHash, share_b: &KeyShare, hash_b: IdentityHash) -> bool {
    pairwise_key(share_a, hash_b) == pairwise_key(share_b, hash_a)
}
