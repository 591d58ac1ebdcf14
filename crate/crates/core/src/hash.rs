//! Content hashes used for provenance tags on every artifact.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of the value's canonical JSON encoding.
pub fn content_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("in-memory JSON encoding cannot fail");
    bytes_hash(&bytes)
}

pub fn bytes_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_and_sensitive() {
        assert_eq!(content_hash(&[1, 2, 3]), content_hash(&vec![1, 2, 3]));
        assert_ne!(content_hash(&[1, 2, 3]), content_hash(&[1, 2, 4]));
        assert_eq!(
            bytes_hash(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
