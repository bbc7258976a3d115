//! AES-128 (FIPS-197) with access to the last-round register contents.
//!
//! State bytes are indexed column-major, so byte `i` of a wire-format block is
//! state position `i` (row `i % 4`, column `i / 4`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const BLOCK_LEN: usize = 16;
pub const ROUNDS: usize = 10;

/// 16-byte AES state, plaintext or ciphertext block.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Block(pub [u8; BLOCK_LEN]);

/// 16 bytes of round-key material.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct RoundKey(pub [u8; BLOCK_LEN]);

macro_rules! hex_bytes16 {
    ($ty:ident) => {
        impl $ty {
            pub const fn new(bytes: [u8; BLOCK_LEN]) -> Self {
                $ty(bytes)
            }

            /// Parses exactly 32 hex digits, either case.
            pub fn from_hex(s: &str) -> Result<Self> {
                let s = s.trim();
                if s.len() != 2 * BLOCK_LEN {
                    return Err(Error::invalid(format!(
                        "expected {} hex digits, got {}",
                        2 * BLOCK_LEN,
                        s.len()
                    )));
                }
                let mut out = [0u8; BLOCK_LEN];
                hex::decode_to_slice(s, &mut out)
                    .map_err(|e| Error::invalid(format!("bad hex {s:?}: {e}")))?;
                Ok($ty(out))
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn as_bytes(&self) -> &[u8; BLOCK_LEN] {
                &self.0
            }
        }

        impl From<[u8; BLOCK_LEN]> for $ty {
            fn from(bytes: [u8; BLOCK_LEN]) -> Self {
                $ty(bytes)
            }
        }

        impl std::ops::Index<usize> for $ty {
            type Output = u8;
            fn index(&self, i: usize) -> &u8 {
                &self.0[i]
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($ty), self.to_hex())
            }
        }

        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                Self::from_hex(s)
            }
        }

        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Self::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_bytes16!(Block);
hex_bytes16!(RoundKey);

impl Block {
    pub fn xor(&self, other: &Block) -> Block {
        let mut out = self.0;
        out.iter_mut().zip(other.0).for_each(|(a, b)| *a ^= b);
        Block(out)
    }
}

impl From<RoundKey> for Block {
    fn from(k: RoundKey) -> Self {
        Block(k.0)
    }
}

impl From<Block> for RoundKey {
    fn from(b: Block) -> Self {
        RoundKey(b.0)
    }
}

const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

const INV_SBOX: [u8; 256] = [
    0x52, 0x09, 0x6a, 0xd5, 0x30, 0x36, 0xa5, 0x38, 0xbf, 0x40, 0xa3, 0x9e, 0x81, 0xf3, 0xd7, 0xfb,
    0x7c, 0xe3, 0x39, 0x82, 0x9b, 0x2f, 0xff, 0x87, 0x34, 0x8e, 0x43, 0x44, 0xc4, 0xde, 0xe9, 0xcb,
    0x54, 0x7b, 0x94, 0x32, 0xa6, 0xc2, 0x23, 0x3d, 0xee, 0x4c, 0x95, 0x0b, 0x42, 0xfa, 0xc3, 0x4e,
    0x08, 0x2e, 0xa1, 0x66, 0x28, 0xd9, 0x24, 0xb2, 0x76, 0x5b, 0xa2, 0x49, 0x6d, 0x8b, 0xd1, 0x25,
    0x72, 0xf8, 0xf6, 0x64, 0x86, 0x68, 0x98, 0x16, 0xd4, 0xa4, 0x5c, 0xcc, 0x5d, 0x65, 0xb6, 0x92,
    0x6c, 0x70, 0x48, 0x50, 0xfd, 0xed, 0xb9, 0xda, 0x5e, 0x15, 0x46, 0x57, 0xa7, 0x8d, 0x9d, 0x84,
    0x90, 0xd8, 0xab, 0x00, 0x8c, 0xbc, 0xd3, 0x0a, 0xf7, 0xe4, 0x58, 0x05, 0xb8, 0xb3, 0x45, 0x06,
    0xd0, 0x2c, 0x1e, 0x8f, 0xca, 0x3f, 0x0f, 0x02, 0xc1, 0xaf, 0xbd, 0x03, 0x01, 0x13, 0x8a, 0x6b,
    0x3a, 0x91, 0x11, 0x41, 0x4f, 0x67, 0xdc, 0xea, 0x97, 0xf2, 0xcf, 0xce, 0xf0, 0xb4, 0xe6, 0x73,
    0x96, 0xac, 0x74, 0x22, 0xe7, 0xad, 0x35, 0x85, 0xe2, 0xf9, 0x37, 0xe8, 0x1c, 0x75, 0xdf, 0x6e,
    0x47, 0xf1, 0x1a, 0x71, 0x1d, 0x29, 0xc5, 0x89, 0x6f, 0xb7, 0x62, 0x0e, 0xaa, 0x18, 0xbe, 0x1b,
    0xfc, 0x56, 0x3e, 0x4b, 0xc6, 0xd2, 0x79, 0x20, 0x9a, 0xdb, 0xc0, 0xfe, 0x78, 0xcd, 0x5a, 0xf4,
    0x1f, 0xdd, 0xa8, 0x33, 0x88, 0x07, 0xc7, 0x31, 0xb1, 0x12, 0x10, 0x59, 0x27, 0x80, 0xec, 0x5f,
    0x60, 0x51, 0x7f, 0xa9, 0x19, 0xb5, 0x4a, 0x0d, 0x2d, 0xe5, 0x7a, 0x9f, 0x93, 0xc9, 0x9c, 0xef,
    0xa0, 0xe0, 0x3b, 0x4d, 0xae, 0x2a, 0xf5, 0xb0, 0xc8, 0xeb, 0xbb, 0x3c, 0x83, 0x53, 0x99, 0x61,
    0x17, 0x2b, 0x04, 0x7e, 0xba, 0x77, 0xd6, 0x26, 0xe1, 0x69, 0x14, 0x63, 0x55, 0x21, 0x0c, 0x7d,
];

const RCON: [u8; ROUNDS] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36];

#[inline]
pub fn sbox(x: u8) -> u8 {
    SBOX[x as usize]
}

#[inline]
pub fn inv_sbox(x: u8) -> u8 {
    INV_SBOX[x as usize]
}

/// ShiftRows as a permutation of state positions.
///
/// `forward[j]` is where byte `j` lands after ShiftRows; `inverse` undoes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftRowsPerm {
    pub forward: [usize; BLOCK_LEN],
    pub inverse: [usize; BLOCK_LEN],
}

pub const SHIFT_ROWS: ShiftRowsPerm = ShiftRowsPerm {
    forward: shift_rows_forward(),
    inverse: shift_rows_inverse(),
};

const fn shift_rows_forward() -> [usize; BLOCK_LEN] {
    let mut out = [0; BLOCK_LEN];
    let mut j = 0;
    while j < BLOCK_LEN {
        let (row, col) = (j % 4, j / 4);
        out[j] = row + 4 * ((col + 4 - row) % 4);
        j += 1;
    }
    out
}

const fn shift_rows_inverse() -> [usize; BLOCK_LEN] {
    let fwd = shift_rows_forward();
    let mut out = [0; BLOCK_LEN];
    let mut j = 0;
    while j < BLOCK_LEN {
        out[fwd[j]] = j;
        j += 1;
    }
    out
}

/// Post-ShiftRows position of state byte `j`. This is also the position of
/// the last-round key byte that a guess on state byte `j` targets.
#[inline]
pub fn sr_forward(j: usize) -> usize {
    SHIFT_ROWS.forward[j]
}

#[inline]
pub fn sr_inverse(p: usize) -> usize {
    SHIFT_ROWS.inverse[p]
}

/// All eleven round keys; `round_keys[0]` is the cipher key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeySchedule {
    pub round_keys: [RoundKey; ROUNDS + 1],
}

impl KeySchedule {
    pub fn cipher_key(&self) -> Block {
        self.round_keys[0].into()
    }

    pub fn last_round_key(&self) -> RoundKey {
        self.round_keys[ROUNDS]
    }
}

pub fn expand_key(key: &Block) -> KeySchedule {
    let mut round_keys = [RoundKey::default(); ROUNDS + 1];
    round_keys[0] = RoundKey(key.0);
    for round in 1..=ROUNDS {
        round_keys[round] = next_round_key(&round_keys[round - 1], RCON[round - 1]);
    }
    KeySchedule { round_keys }
}

fn next_round_key(prev: &RoundKey, rcon: u8) -> RoundKey {
    let p = &prev.0;
    let mut out = [0u8; BLOCK_LEN];
    let temp = [sbox(p[13]) ^ rcon, sbox(p[14]), sbox(p[15]), sbox(p[12])];
    for i in 0..4 {
        out[i] = p[i] ^ temp[i];
    }
    for i in 4..BLOCK_LEN {
        out[i] = p[i] ^ out[i - 4];
    }
    RoundKey(out)
}

/// Walks the key schedule backwards from the round-10 key to the cipher key.
pub fn invert_key_schedule(last_round_key: &RoundKey) -> Block {
    let mut key = last_round_key.0;
    for round in (0..ROUNDS).rev() {
        let next = key;
        let mut prev = [0u8; BLOCK_LEN];
        for i in (4..BLOCK_LEN).rev() {
            prev[i] = next[i] ^ next[i - 4];
        }
        let temp = [
            sbox(prev[13]) ^ RCON[round],
            sbox(prev[14]),
            sbox(prev[15]),
            sbox(prev[12]),
        ];
        for i in 0..4 {
            prev[i] = next[i] ^ temp[i];
        }
        key = prev;
    }
    Block(key)
}

#[inline]
fn xtime(a: u8) -> u8 {
    (a << 1) ^ (((a >> 7) & 1) * 0x1b)
}

#[inline]
fn gmul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        a = xtime(a);
        b >>= 1;
    }
    p
}

fn add_round_key(state: &mut [u8; BLOCK_LEN], key: &RoundKey) {
    state.iter_mut().zip(key.0).for_each(|(s, k)| *s ^= k);
}

fn sub_bytes(state: &mut [u8; BLOCK_LEN]) {
    state.iter_mut().for_each(|s| *s = sbox(*s));
}

fn inv_sub_bytes(state: &mut [u8; BLOCK_LEN]) {
    state.iter_mut().for_each(|s| *s = inv_sbox(*s));
}

fn shift_rows(state: &mut [u8; BLOCK_LEN]) {
    let old = *state;
    for j in 0..BLOCK_LEN {
        state[sr_forward(j)] = old[j];
    }
}

fn inv_shift_rows(state: &mut [u8; BLOCK_LEN]) {
    let old = *state;
    for j in 0..BLOCK_LEN {
        state[j] = old[sr_forward(j)];
    }
}

fn mix_columns(state: &mut [u8; BLOCK_LEN]) {
    for col in state.chunks_exact_mut(4) {
        let [a0, a1, a2, a3] = [col[0], col[1], col[2], col[3]];
        let all = a0 ^ a1 ^ a2 ^ a3;
        col[0] ^= all ^ xtime(a0 ^ a1);
        col[1] ^= all ^ xtime(a1 ^ a2);
        col[2] ^= all ^ xtime(a2 ^ a3);
        col[3] ^= all ^ xtime(a3 ^ a0);
    }
}

fn inv_mix_columns(state: &mut [u8; BLOCK_LEN]) {
    for col in state.chunks_exact_mut(4) {
        let a = [col[0], col[1], col[2], col[3]];
        for r in 0..4 {
            col[r] = gmul(a[r], 14)
                ^ gmul(a[(r + 1) % 4], 11)
                ^ gmul(a[(r + 2) % 4], 13)
                ^ gmul(a[(r + 3) % 4], 9);
        }
    }
}

/// Register contents around the final-round overwrite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LastRoundStates {
    /// State register content after round 9, just before the overwrite.
    pub round9_state: Block,
    pub ciphertext: Block,
}

impl LastRoundStates {
    /// Per-bit toggle mask of the register overwrite.
    pub fn toggles(&self) -> Block {
        self.round9_state.xor(&self.ciphertext)
    }
}

/// AES-128 with a precomputed key schedule.
#[derive(Debug, Clone)]
pub struct Aes128 {
    schedule: KeySchedule,
}

impl Aes128 {
    pub fn new(key: &Block) -> Self {
        Aes128 {
            schedule: expand_key(key),
        }
    }

    pub fn schedule(&self) -> &KeySchedule {
        &self.schedule
    }

    pub fn last_round_states(&self, plaintext: &Block) -> LastRoundStates {
        let keys = &self.schedule.round_keys;
        let mut state = plaintext.0;
        add_round_key(&mut state, &keys[0]);
        for key in &keys[1..ROUNDS] {
            sub_bytes(&mut state);
            shift_rows(&mut state);
            mix_columns(&mut state);
            add_round_key(&mut state, key);
        }
        let round9_state = Block(state);
        sub_bytes(&mut state);
        shift_rows(&mut state);
        add_round_key(&mut state, &keys[ROUNDS]);
        LastRoundStates {
            round9_state,
            ciphertext: Block(state),
        }
    }

    pub fn encrypt(&self, plaintext: &Block) -> Block {
        self.last_round_states(plaintext).ciphertext
    }

    pub fn decrypt(&self, ciphertext: &Block) -> Block {
        let keys = &self.schedule.round_keys;
        let mut state = ciphertext.0;
        add_round_key(&mut state, &keys[ROUNDS]);
        inv_shift_rows(&mut state);
        inv_sub_bytes(&mut state);
        for key in keys[1..ROUNDS].iter().rev() {
            add_round_key(&mut state, key);
            inv_mix_columns(&mut state);
            inv_shift_rows(&mut state);
            inv_sub_bytes(&mut state);
        }
        add_round_key(&mut state, &keys[0]);
        Block(state)
    }
}

pub fn encrypt_block(key: &Block, plaintext: &Block) -> Block {
    Aes128::new(key).encrypt(plaintext)
}

pub fn decrypt_block(key: &Block, ciphertext: &Block) -> Block {
    Aes128::new(key).decrypt(ciphertext)
}

pub fn last_round_states(key: &Block, plaintext: &Block) -> LastRoundStates {
    Aes128::new(key).last_round_states(plaintext)
}

fn check_byte_index(byte_index: usize) -> Result<()> {
    if byte_index < BLOCK_LEN {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "byte index {byte_index} out of range 0..{BLOCK_LEN}"
        )))
    }
}

/// Predicted toggle byte of state position `byte_index` during the last-round
/// overwrite, given a guess for last-round key byte `sr_forward(byte_index)`.
pub fn guess_transitions(ct: &Block, key_guess: u8, byte_index: usize) -> Result<u8> {
    check_byte_index(byte_index)?;
    Ok(transitions(ct, key_guess, byte_index))
}

#[inline]
pub(crate) fn transitions(ct: &Block, key_guess: u8, byte_index: usize) -> u8 {
    inv_sbox(ct.0[sr_forward(byte_index)] ^ key_guess) ^ ct.0[byte_index]
}

#[inline]
pub fn hamming_weight(v: u8) -> u32 {
    v.count_ones()
}

/// Hamming-distance model value (0..=8) for one key-byte guess.
pub fn hypothetical_power(ct: &Block, key_guess: u8, byte_index: usize) -> Result<u8> {
    guess_transitions(ct, key_guess, byte_index).map(|t| t.count_ones() as u8)
}

#[inline]
pub(crate) fn hd_model(ct: &Block, key_guess: u8, byte_index: usize) -> u8 {
    transitions(ct, key_guess, byte_index).count_ones() as u8
}
