//! Chained hash tables and bitvector filters over 64-bit join keys.

/// End-of-chain marker.
pub const CHAIN_END: u32 = u32::MAX;

const SEED_MULT: u64 = 0x9e37_79b9_7f4a_7c15;

/// 64-bit integer mixer shared by hash tables and filters.
#[inline]
pub fn hash_key(key: i64, seed: u64) -> u64 {
    let mut x = (key as u64) ^ seed.wrapping_mul(SEED_MULT);
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Hash table over a subset of a relation's rows. Each entry stores the key
/// and the row id; entries sharing a bucket are linked through `next`.
#[derive(Debug, Clone)]
pub struct HashTable {
    keys: Vec<i64>,
    rows: Vec<u32>,
    next: Vec<u32>,
    directory: Vec<u32>,
    bits: u32,
    seed: u64,
}

impl HashTable {
    /// Builds over `rows` (row ids into `keys`). Chains list rows in the
    /// order given.
    pub fn build(keys: &[i64], rows: &[u32], seed: u64) -> Self {
        let n = rows.len();
        let size = (2 * n).next_power_of_two().max(8);
        let bits = size.trailing_zeros();
        let mut directory = vec![CHAIN_END; size];
        let mut next = vec![CHAIN_END; n];
        let mut entry_keys = Vec::with_capacity(n);
        for &r in rows {
            entry_keys.push(keys[r as usize]);
        }
        // Insert back to front so each chain ends up in input order.
        for i in (0..n).rev() {
            let b = bucket(entry_keys[i], seed, bits);
            next[i] = directory[b];
            directory[b] = i as u32;
        }
        HashTable {
            keys: entry_keys,
            rows: rows.to_vec(),
            next,
            directory,
            bits,
            seed,
        }
    }

    /// Table over every row of a column.
    pub fn build_all(keys: &[i64], seed: u64) -> Self {
        let rows: Vec<u32> = (0..keys.len() as u32).collect();
        Self::build(keys, &rows, seed)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn directory_size(&self) -> usize {
        self.directory.len()
    }

    /// Calls `f` with the row id of every entry matching `key`.
    #[inline]
    pub fn for_each_match(&self, key: i64, mut f: impl FnMut(u32)) {
        let mut e = self.directory[bucket(key, self.seed, self.bits)];
        while e != CHAIN_END {
            if self.keys[e as usize] == key {
                f(self.rows[e as usize]);
            }
            e = self.next[e as usize];
        }
    }

    #[inline]
    pub fn count(&self, key: i64) -> usize {
        let mut n = 0;
        self.for_each_match(key, |_| n += 1);
        n
    }

    #[inline]
    pub fn contains(&self, key: i64) -> bool {
        let mut e = self.directory[bucket(key, self.seed, self.bits)];
        while e != CHAIN_END {
            if self.keys[e as usize] == key {
                return true;
            }
            e = self.next[e as usize];
        }
        false
    }

    /// Walks every chain; true when each entry is reached exactly once and
    /// sits in the bucket of its key.
    pub fn chains_complete(&self) -> bool {
        let mut seen = vec![false; self.rows.len()];
        let mut total = 0usize;
        for (b, &head) in self.directory.iter().enumerate() {
            let mut e = head;
            while e != CHAIN_END {
                let i = e as usize;
                if i >= seen.len() || seen[i] || bucket(self.keys[i], self.seed, self.bits) != b {
                    return false;
                }
                seen[i] = true;
                total += 1;
                e = self.next[i];
            }
        }
        total == self.rows.len()
    }
}

#[inline]
fn bucket(key: i64, seed: u64, bits: u32) -> usize {
    (hash_key(key, seed) >> (64 - bits)) as usize
}

/// Bit array of `2^k` bits with one bit set per inserted key.
#[derive(Debug, Clone)]
pub struct BitVectorFilter {
    words: Vec<u64>,
    k: u32,
    seed: u64,
}

impl BitVectorFilter {
    pub const MIN_BITS: u32 = 6;

    /// Sized to `2^ceil(log2(8 * rows))` bits, at least 64.
    pub fn build(keys: &[i64], rows: &[u32], seed: u64) -> Self {
        let k = ((8 * rows.len().max(1)) as u64)
            .next_power_of_two()
            .trailing_zeros()
            .max(Self::MIN_BITS);
        let mut f = BitVectorFilter {
            words: vec![0; 1 << (k - 6)],
            k,
            seed,
        };
        for &r in rows {
            let b = f.bit(keys[r as usize]);
            f.words[b / 64] |= 1 << (b % 64);
        }
        f
    }

    pub fn build_all(keys: &[i64], seed: u64) -> Self {
        let rows: Vec<u32> = (0..keys.len() as u32).collect();
        Self::build(keys, &rows, seed)
    }

    #[inline]
    fn bit(&self, key: i64) -> usize {
        (hash_key(key, self.seed) >> (64 - self.k)) as usize
    }

    #[inline]
    pub fn may_contain(&self, key: i64) -> bool {
        let b = self.bit(key);
        self.words[b / 64] & (1 << (b % 64)) != 0
    }

    pub fn bits(&self) -> u32 {
        self.k
    }

    pub fn set_bits(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn chains_keep_duplicates() {
        let keys = [1, 1, 1, 2];
        let t = HashTable::build_all(&keys, 0);
        assert_eq!(t.count(1), 3);
        assert_eq!(t.count(2), 1);
        assert_eq!(t.count(3), 0);
        let mut m = Vec::new();
        t.for_each_match(1, |r| m.push(r));
        assert_eq!(m, vec![0, 1, 2]);
        assert!(t.chains_complete());
        assert_eq!(t.directory_size(), 8);
    }

    #[test]
    fn empty_table() {
        let t = HashTable::build_all(&[], 1);
        assert!(t.is_empty());
        assert_eq!(t.count(5), 0);
        assert!(t.chains_complete());
        let f = BitVectorFilter::build_all(&[], 1);
        assert!(!f.may_contain(5));
    }

    #[test]
    fn matches_sort_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let keys: Vec<i64> = (0..10_000).map(|_| rng.gen_range(0..3000)).collect();
        let t = HashTable::build_all(&keys, 42);
        assert!(t.chains_complete());
        assert_eq!(t.directory_size(), 32768);
        let mut pairs = Vec::new();
        let mut distinct: Vec<i64> = keys.clone();
        distinct.sort_unstable();
        distinct.dedup();
        for &k in &distinct {
            t.for_each_match(k, |r| pairs.push((k, r)));
        }
        let mut oracle: Vec<(i64, u32)> = keys.iter().enumerate().map(|(i, &k)| (k, i as u32)).collect();
        oracle.sort_unstable();
        pairs.sort_unstable();
        assert_eq!(pairs, oracle);
    }

    #[test]
    fn subset_build() {
        let keys = [5, 6, 5, 7];
        let t = HashTable::build(&keys, &[2, 3], 0);
        let mut m = Vec::new();
        t.for_each_match(5, |r| m.push(r));
        assert_eq!(m, vec![2]);
        assert!(!t.contains(6));
    }

    #[test]
    fn filter_false_positive_rate() {
        let keys: Vec<i64> = (1..=100).collect();
        let f = BitVectorFilter::build_all(&keys, 7);
        assert_eq!(f.bits(), 10);
        assert!(keys.iter().all(|&k| f.may_contain(k)));
        let expected = f.set_bits() as f64 / 1024.0;
        assert!(expected <= 0.125);
        let trials = 100_000;
        let hits = (1_000..1_000 + trials).filter(|&k| f.may_contain(k)).count();
        let rate = hits as f64 / trials as f64;
        assert!((rate - expected).abs() <= 0.5 * expected, "{rate} vs {expected}");
    }

    #[test]
    fn hash_spreads_buckets() {
        let mut counts = BTreeMap::new();
        for k in 0..4096i64 {
            *counts.entry(hash_key(k, 3) >> 60).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 16);
        assert!(counts.values().all(|&c| c > 150));
    }
}
