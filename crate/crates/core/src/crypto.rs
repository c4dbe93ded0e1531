//! Block-cipher primitives: AES-128 as a fixed-length PRF, CBC-MAC as a
//! variable-length PRF, counter-mode encryption with position-derived nonces,
//! one-time encryption, secure concatenation, and SHA-256 string hashing.
//!
//! This is the only module that touches cipher internals. Everything above
//! it works with [`SymKey`], [`Prf`] and plain byte strings.

use std::fmt;

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128Enc;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use zeroize::{Zeroize, ZeroizeOnDrop};

pub const KEY_LEN: usize = 16;
pub const BLOCK_LEN: usize = 16;

pub type Block = [u8; BLOCK_LEN];

/// Largest message `enc` accepts: the counter occupies three bytes.
pub const MAX_ENC_LEN: usize = BLOCK_LEN << 24;

/// A 128-bit symmetric key. Wiped from memory when dropped.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Zeroize, ZeroizeOnDrop)]
pub struct SymKey([u8; KEY_LEN]);

impl SymKey {
    pub const fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        SymKey(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        let arr: [u8; KEY_LEN] = bytes.try_into().ok()?;
        Some(SymKey(arr))
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut bytes = [0u8; KEY_LEN];
        rng.fill_bytes(&mut bytes);
        SymKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for SymKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymKey(<redacted>)")
    }
}

/// Which protocol object a counter-mode nonce belongs to. Keeps nonces
/// disjoint per key without storing them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum NonceDomain {
    ProjectionBlob = 0x01,
    ProjectionZeroCheck = 0x02,
    SelectionEntry = 0x03,
    Cell = 0x04,
}

/// Position of an encrypted object inside a table; the nonce for `enc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoncePosition {
    pub domain: NonceDomain,
    pub partition: u32,
    pub row: u32,
    pub slot: u32,
}

impl NoncePosition {
    pub const ENCODED_LEN: usize = 13;

    pub fn new(domain: NonceDomain, partition: u32, row: u32, slot: u32) -> Self {
        NoncePosition { domain, partition, row, slot }
    }

    pub fn encode(&self) -> [u8; Self::ENCODED_LEN] {
        let mut out = [0u8; Self::ENCODED_LEN];
        out[0] = self.domain as u8;
        out[1..5].copy_from_slice(&self.partition.to_be_bytes());
        out[5..9].copy_from_slice(&self.row.to_be_bytes());
        out[9..13].copy_from_slice(&self.slot.to_be_bytes());
        out
    }

    /// The counter block for keystream block `index`: 13 position bytes
    /// followed by a 24-bit big-endian block counter.
    pub fn counter_block(&self, index: u32) -> Block {
        debug_assert!(index < (1 << 24));
        let mut block = [0u8; BLOCK_LEN];
        block[..Self::ENCODED_LEN].copy_from_slice(&self.encode());
        block[13..].copy_from_slice(&index.to_be_bytes()[1..]);
        block
    }
}

/// Packs up to four integers big-endian into one PRF input block.
pub fn pack(words: &[u32]) -> Block {
    assert!(words.len() <= 4, "at most four words fit a block");
    let mut block = [0u8; BLOCK_LEN];
    for (i, w) in words.iter().enumerate() {
        block[i * 4..i * 4 + 4].copy_from_slice(&w.to_be_bytes());
    }
    block
}

/// An AES-128 key schedule prepared once and reused for many evaluations.
#[derive(Clone)]
pub struct Prf {
    cipher: Aes128Enc,
}

impl Prf {
    pub fn new(key: &SymKey) -> Self {
        Prf { cipher: Aes128Enc::new(GenericArray::from_slice(&key.0)) }
    }

    pub fn block(&self, input: &Block) -> Block {
        let mut b = GenericArray::clone_from_slice(input);
        self.cipher.encrypt_block(&mut b);
        b.into()
    }

    pub fn derive(&self, input: &Block) -> SymKey {
        SymKey(self.block(input))
    }

    /// CBC-MAC over `len_be64 || input`, zero padded to a block multiple.
    /// The length prefix makes the encoding prefix-free.
    pub fn var(&self, input: &[u8]) -> SymKey {
        assert!((input.len() as u64) < (1u64 << 32), "PRF input too long");
        let mut state = GenericArray::from([0u8; BLOCK_LEN]);
        let mut first = [0u8; BLOCK_LEN];
        first[..8].copy_from_slice(&(input.len() as u64).to_be_bytes());
        let head = input.len().min(8);
        first[8..8 + head].copy_from_slice(&input[..head]);
        for (s, b) in state.iter_mut().zip(first.iter()) {
            *s ^= b;
        }
        self.cipher.encrypt_block(&mut state);
        for chunk in input[head..].chunks(BLOCK_LEN) {
            for (s, b) in state.iter_mut().zip(chunk) {
                *s ^= b;
            }
            self.cipher.encrypt_block(&mut state);
        }
        SymKey(state.into())
    }

    /// Counter-mode encryption at a table position. No expansion.
    pub fn encrypt(&self, pos: &NoncePosition, msg: &[u8]) -> Vec<u8> {
        let mut out = msg.to_vec();
        self.apply_keystream(pos, &mut out);
        out
    }

    pub fn decrypt(&self, pos: &NoncePosition, ct: &[u8]) -> Vec<u8> {
        self.encrypt(pos, ct)
    }

    pub fn apply_keystream(&self, pos: &NoncePosition, buf: &mut [u8]) {
        assert!(buf.len() <= MAX_ENC_LEN, "message exceeds counter space");
        self.xor_keystream(buf, |i| pos.counter_block(i));
    }

    fn xor_keystream(&self, buf: &mut [u8], counter: impl Fn(u32) -> Block) {
        if buf.len() <= BLOCK_LEN {
            let ks = self.block(&counter(0));
            for (b, k) in buf.iter_mut().zip(ks.iter()) {
                *b ^= k;
            }
            return;
        }
        let n = buf.len().div_ceil(BLOCK_LEN);
        let mut blocks: Vec<GenericArray<u8, _>> = (0..n).map(|i| GenericArray::from(counter(i as u32))).collect();
        self.cipher.encrypt_blocks(&mut blocks);
        for (chunk, ks) in buf.chunks_mut(BLOCK_LEN).zip(blocks.iter()) {
            for (b, k) in chunk.iter_mut().zip(ks.iter()) {
                *b ^= k;
            }
        }
    }
}

impl fmt::Debug for Prf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Prf(<key schedule>)")
    }
}

/// AES-128 encryption of a single block.
pub fn prf_block(key: &SymKey, input: &Block) -> Block {
    Prf::new(key).block(input)
}

/// Fixed-length PRF whose output is used as a key.
pub fn prf(key: &SymKey, input: &Block) -> SymKey {
    Prf::new(key).derive(input)
}

pub fn prf_var(key: &SymKey, input: &[u8]) -> SymKey {
    Prf::new(key).var(input)
}

pub fn enc(key: &SymKey, pos: &NoncePosition, msg: &[u8]) -> Vec<u8> {
    Prf::new(key).encrypt(pos, msg)
}

pub fn dec(key: &SymKey, pos: &NoncePosition, ct: &[u8]) -> Vec<u8> {
    Prf::new(key).decrypt(pos, ct)
}

/// One-time encryption. Messages up to one block are padded with the key
/// itself; longer ones use counter mode with a zero nonce and counters
/// starting at 1, so the keystream never touches the all-zero block that
/// `prf(key, 0)` consumes.
pub fn ote_enc(key: &SymKey, msg: &[u8]) -> Vec<u8> {
    let mut out = msg.to_vec();
    ote_apply(key, &mut out);
    out
}

pub fn ote_dec(key: &SymKey, ct: &[u8]) -> Vec<u8> {
    ote_enc(key, ct)
}

pub fn ote_apply(key: &SymKey, buf: &mut [u8]) {
    if buf.len() <= KEY_LEN {
        for (b, k) in buf.iter_mut().zip(key.0.iter()) {
            *b ^= k;
        }
    } else {
        Prf::new(key).xor_keystream(buf, |i| (i as u128 + 1).to_be_bytes());
    }
}

/// Injective list encoding: `u32` count, then `u32` length + bytes per part.
pub fn secure_concat<T: AsRef<[u8]>>(parts: &[T]) -> Vec<u8> {
    let total: usize = parts.iter().map(|p| 4 + p.as_ref().len()).sum();
    let mut out = Vec::with_capacity(4 + total);
    out.extend_from_slice(&(parts.len() as u32).to_be_bytes());
    for part in parts {
        let part = part.as_ref();
        assert!((part.len() as u64) < (1u64 << 32), "concatenated part too long");
        out.extend_from_slice(&(part.len() as u32).to_be_bytes());
        out.extend_from_slice(part);
    }
    out
}

/// Inverse of [`secure_concat`]; `None` on any framing error.
pub fn secure_split(bytes: &[u8]) -> Option<Vec<&[u8]>> {
    let (count, mut rest) = take_u32(bytes)?;
    let mut parts = Vec::with_capacity((count as usize).min(rest.len() / 4));
    for _ in 0..count {
        let (len, tail) = take_u32(rest)?;
        let len = len as usize;
        if tail.len() < len {
            return None;
        }
        parts.push(&tail[..len]);
        rest = &tail[len..];
    }
    rest.is_empty().then_some(parts)
}

fn take_u32(bytes: &[u8]) -> Option<(u32, &[u8])> {
    if bytes.len() < 4 {
        return None;
    }
    let (head, tail) = bytes.split_at(4);
    Some((u32::from_be_bytes(head.try_into().ok()?), tail))
}

/// SHA-256 digest, read as a big-endian 256-bit unsigned integer.
pub fn hash_string(s: &[u8]) -> [u8; 32] {
    Sha256::digest(s).into()
}
