use super::BitStream;
use crate::error::{Error, Result};
use chacha20::cipher::{KeyIvInit, StreamCipher};
use chacha20::ChaCha20;

/// Key length in bytes.
pub const KEY_LEN: usize = 32;

/// A 32-byte secret shared out of band.
///
/// The Debug form is redacted; the key must never reach stdout, stderr,
/// logs, or reports.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey([u8; KEY_LEN]);

impl SecretKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> SecretKey {
        SecretKey(bytes)
    }

    /// Parses 64 hex characters.
    pub fn from_hex(hex: &str) -> Result<SecretKey> {
        let hex = hex.trim();
        if hex.len() != KEY_LEN * 2 {
            return Err(Error::Parameter(format!(
                "key must be {} hex characters, got {}",
                KEY_LEN * 2,
                hex.len()
            )));
        }
        let mut out = [0u8; KEY_LEN];
        for (i, chunk) in hex.as_bytes().chunks(2).enumerate() {
            let s = std::str::from_utf8(chunk)
                .map_err(|_| Error::Parameter("key is not ASCII hex".into()))?;
            out[i] = u8::from_str_radix(s, 16)
                .map_err(|_| Error::Parameter(format!("bad hex byte {s:?} in key")))?;
        }
        Ok(SecretKey(out))
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    /// First `n` bytes of the keystream this key pins: the ChaCha20 stream
    /// under the key with an all-zero nonce, counter starting at 0. This is
    /// a wire-format commitment; independently written peers must produce
    /// identical bytes.
    pub fn keystream(&self, n: usize) -> Vec<u8> {
        let mut buf = vec![0u8; n];
        let nonce = [0u8; 12];
        let mut cipher = ChaCha20::new(&self.0.into(), &nonce.into());
        cipher.apply_keystream(&mut buf);
        buf
    }
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

/// XOR of `bits` with the key's pinned keystream. Length-preserving and an
/// involution: applying it twice with the same key is the identity.
pub fn keystream_xor(key: &SecretKey, bits: &BitStream) -> BitStream {
    if bits.is_empty() {
        return BitStream::new();
    }
    let ks = key.keystream(bits.len().div_ceil(8));
    bits.xor_bytes(&ks)
}
