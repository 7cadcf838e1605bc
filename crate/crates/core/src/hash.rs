//! Stable 64-bit FNV-1a, used wherever hashed text features must be identical
//! across platforms and toolchain versions.

const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// MurmurHash3 finalizer: spreads FNV's weakly mixed low bits before any
/// `% n` bucket reduction.
pub fn fmix64(mut h: u64) -> u64 {
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

/// Bucketing hash for a word.
pub fn word_hash(word: &str) -> u64 {
    fmix64(fnv1a(word.as_bytes()))
}

/// Lower-cased alphanumeric words of `text`.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn mixed_hash_separates_near_identical_words() {
        let buckets: std::collections::BTreeSet<u64> =
            (0..100).map(|b| word_hash(&format!("bundle{b}word0")) % 384).collect();
        assert!(buckets.len() > 80, "{} distinct buckets", buckets.len());
    }

    #[test]
    fn words_split_and_lowercase() {
        let w: Vec<_> = words("Sunset, on the SEA!").collect();
        assert_eq!(w, ["sunset", "on", "the", "sea"]);
    }
}
