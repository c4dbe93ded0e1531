//! Crypto primitives against independent reimplementations built directly
//! on the block cipher.

use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;
use proptest::prelude::*;

use lakeveil_core::crypto::{
    dec, enc, ote_dec, ote_enc, pack, prf, prf_block, prf_var, secure_concat, secure_split, NonceDomain, NoncePosition,
    SymKey,
};

fn aes(key: &[u8; 16], block: [u8; 16]) -> [u8; 16] {
    let cipher = Aes128::new(key.into());
    let mut b = block.into();
    cipher.encrypt_block(&mut b);
    b.into()
}

/// CBC-MAC with a zero IV over `len_be64 || msg`, zero-padded to a block.
fn reference_prf_var(key: &[u8; 16], msg: &[u8]) -> [u8; 16] {
    let mut data = (msg.len() as u64).to_be_bytes().to_vec();
    data.extend_from_slice(msg);
    while !data.len().is_multiple_of(16) {
        data.push(0);
    }
    let mut state = [0u8; 16];
    for chunk in data.chunks(16) {
        for (s, c) in state.iter_mut().zip(chunk) {
            *s ^= c;
        }
        state = aes(key, state);
    }
    state
}

fn xor_stream(key: &[u8; 16], msg: &[u8], counter: impl Fn(usize) -> [u8; 16]) -> Vec<u8> {
    msg.chunks(16)
        .enumerate()
        .flat_map(|(i, chunk)| {
            let ks = aes(key, counter(i));
            chunk.iter().zip(ks).map(|(m, k)| m ^ k).collect::<Vec<_>>()
        })
        .collect()
}

fn reference_enc(key: &[u8; 16], pos: &NoncePosition, msg: &[u8]) -> Vec<u8> {
    let mut nonce = vec![pos.domain as u8];
    nonce.extend_from_slice(&pos.partition.to_be_bytes());
    nonce.extend_from_slice(&pos.row.to_be_bytes());
    nonce.extend_from_slice(&pos.slot.to_be_bytes());
    xor_stream(key, msg, |i| {
        let mut b = [0u8; 16];
        b[..13].copy_from_slice(&nonce);
        b[13..].copy_from_slice(&(i as u32).to_be_bytes()[1..]);
        b
    })
}

fn reference_ote(key: &[u8; 16], msg: &[u8]) -> Vec<u8> {
    if msg.len() <= 16 {
        return msg.iter().zip(key).map(|(m, k)| m ^ k).collect();
    }
    xor_stream(key, msg, |i| (i as u128 + 1).to_be_bytes())
}

/// Decodes `u32 count, (u32 len, bytes)*` without sharing code with the
/// library.
fn reference_split(bytes: &[u8]) -> Option<Vec<Vec<u8>>> {
    let rd = |b: &[u8], at: usize| -> Option<usize> {
        Some(u32::from_be_bytes(b.get(at..at + 4)?.try_into().ok()?) as usize)
    };
    let count = rd(bytes, 0)?;
    let mut at = 4;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = rd(bytes, at)?;
        at += 4;
        out.push(bytes.get(at..at + len)?.to_vec());
        at += len;
    }
    (at == bytes.len()).then_some(out)
}

fn domain() -> impl Strategy<Value = NonceDomain> {
    prop_oneof![
        Just(NonceDomain::ProjectionBlob),
        Just(NonceDomain::ProjectionZeroCheck),
        Just(NonceDomain::SelectionEntry),
        Just(NonceDomain::Cell),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn prf_matches_block_cipher(k in any::<[u8; 16]>(), x in any::<[u8; 16]>()) {
        let key = SymKey::from_bytes(k);
        prop_assert_eq!(prf_block(&key, &x), aes(&k, x));
        prop_assert_eq!(*prf(&key, &x).as_bytes(), aes(&k, x));
    }

    #[test]
    fn prf_var_matches_cbc_mac(k in any::<[u8; 16]>(), msg in prop::collection::vec(any::<u8>(), 0..80)) {
        prop_assert_eq!(*prf_var(&SymKey::from_bytes(k), &msg).as_bytes(), reference_prf_var(&k, &msg));
    }

    #[test]
    fn prf_var_separates_zero_padding(k in any::<[u8; 16]>(), msg in prop::collection::vec(any::<u8>(), 0..40)) {
        let key = SymKey::from_bytes(k);
        let mut padded = msg.clone();
        padded.push(0);
        prop_assert_ne!(prf_var(&key, &msg), prf_var(&key, &padded));
    }

    #[test]
    fn enc_matches_counter_mode(
        k in any::<[u8; 16]>(),
        d in domain(),
        p in any::<u32>(),
        r in any::<u32>(),
        s in any::<u32>(),
        msg in prop::collection::vec(any::<u8>(), 0..100),
    ) {
        let key = SymKey::from_bytes(k);
        let pos = NoncePosition::new(d, p, r, s);
        let ct = enc(&key, &pos, &msg);
        prop_assert_eq!(ct.len(), msg.len());
        prop_assert_eq!(&ct, &reference_enc(&k, &pos, &msg));
        prop_assert_eq!(dec(&key, &pos, &ct), msg);
    }

    #[test]
    fn ote_matches_reference(k in any::<[u8; 16]>(), msg in prop::collection::vec(any::<u8>(), 0..100)) {
        let key = SymKey::from_bytes(k);
        let ct = ote_enc(&key, &msg);
        prop_assert_eq!(&ct, &reference_ote(&k, &msg));
        prop_assert_eq!(ote_dec(&key, &ct), msg);
    }

    #[test]
    fn secure_concat_is_injective_and_decodes(
        a in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..12), 0..6),
        b in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..12), 0..6),
    ) {
        let ea = secure_concat(&a);
        prop_assert_eq!(reference_split(&ea), Some(a.clone()));
        let parts: Vec<Vec<u8>> = secure_split(&ea).unwrap().into_iter().map(<[u8]>::to_vec).collect();
        prop_assert_eq!(&parts, &a);
        prop_assert_eq!(ea == secure_concat(&b), a == b);
    }

    #[test]
    fn secure_split_agrees_on_arbitrary_bytes(bytes in prop::collection::vec(any::<u8>(), 0..40)) {
        let lib = secure_split(&bytes).map(|v| v.into_iter().map(<[u8]>::to_vec).collect::<Vec<_>>());
        prop_assert_eq!(lib, reference_split(&bytes));
    }

    #[test]
    fn pack_is_big_endian_words(w in prop::collection::vec(any::<u32>(), 0..=4)) {
        let b = pack(&w);
        for (i, x) in w.iter().enumerate() {
            prop_assert_eq!(&b[i * 4..i * 4 + 4], &x.to_be_bytes());
        }
        prop_assert!(b[w.len() * 4..].iter().all(|&z| z == 0));
    }
}
