use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coprime pair (p, q) indexing the dimension-drop algebra Z_{p,q}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u64; 2]", into = "[u64; 2]")]
pub struct PrimePair {
    p: u64,
    q: u64,
}

impl PrimePair {
    pub fn new(p: u64, q: u64) -> Result<Self> {
        if p == 0 || q == 0 || !is_prime_pair(p, q) {
            return Err(Error::NotPrime(p, q));
        }
        Ok(PrimePair { p, q })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    /// Matrix size pq.
    pub fn dim(&self) -> usize {
        (self.p * self.q) as usize
    }

    /// (p², q²), the pair of the diagonal-restriction target.
    pub fn squared(&self) -> PrimePair {
        PrimePair { p: self.p * self.p, q: self.q * self.q }
    }
}

impl TryFrom<[u64; 2]> for PrimePair {
    type Error = Error;
    fn try_from(v: [u64; 2]) -> Result<Self> {
        PrimePair::new(v[0], v[1])
    }
}

impl From<PrimePair> for [u64; 2] {
    fn from(pp: PrimePair) -> Self {
        [pp.p, pp.q]
    }
}

impl std::fmt::Display for PrimePair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.p, self.q)
    }
}

pub fn is_prime_pair(p: u64, q: u64) -> bool {
    p.gcd(&q) == 1
}

pub fn default_bound(pair: PrimePair, divisor: u64) -> u64 {
    8 * (pair.p + pair.q + divisor)
}

/// Smallest (k0+k1, k0) with k0 > 2q, k1 > 2p, gcd(k0 p, k1 q) = 1 and
/// divisor | k0 k1, searching k0, k1 <= bound.
pub fn select_expansion_factors(pair: PrimePair, divisor: u64, bound: u64) -> Result<(u64, u64)> {
    let (p, q) = (pair.p, pair.q);
    let divisor = divisor.max(1);
    for s in 2..=2 * bound {
        let lo = (2 * q + 1).max(s.saturating_sub(bound));
        for k0 in lo..s {
            if k0 > bound {
                break;
            }
            let k1 = s - k0;
            if k1 <= 2 * p || k1 > bound {
                continue;
            }
            if (k0 * p).gcd(&(k1 * q)) == 1 && (k0 * k1) % divisor == 0 {
                return Ok((k0, k1));
            }
        }
    }
    Err(Error::SearchExhausted { bound })
}

#[cfg(test)]
mod tests {
    use super::*;

    // independent oracle: scan the full box and keep the lexicographic minimum
    fn brute(p: u64, q: u64, divisor: u64, bound: u64) -> Option<(u64, u64)> {
        let mut best: Option<(u64, u64)> = None;
        for k0 in 1..=bound {
            for k1 in 1..=bound {
                let ok = k0 > 2 * q
                    && k1 > 2 * p
                    && (k0 * p).gcd(&(k1 * q)) == 1
                    && (k0 * k1) % divisor == 0;
                if ok {
                    let better = match best {
                        None => true,
                        Some((b0, b1)) => (k0 + k1, k0) < (b0 + b1, b0),
                    };
                    if better {
                        best = Some((k0, k1));
                    }
                }
            }
        }
        best
    }

    #[test]
    fn prime_pairs() {
        assert!(is_prime_pair(2, 3));
        assert!(!is_prime_pair(4, 6));
        assert!(is_prime_pair(16, 15));
        assert!(PrimePair::new(2, 4).is_err());
    }

    #[test]
    fn factor_examples() {
        let pp = PrimePair::new(2, 3).unwrap();
        assert_eq!(select_expansion_factors(pp, 2, 40), Ok((8, 5)));
        assert_eq!(select_expansion_factors(pp, 1, 40), Ok((7, 5)));
        assert_eq!(
            select_expansion_factors(pp, 2, 4),
            Err(Error::SearchExhausted { bound: 4 })
        );
    }

    #[test]
    fn matches_brute_force() {
        for (p, q) in [(1, 1), (1, 2), (2, 3), (3, 4), (5, 7), (16, 15)] {
            let pp = PrimePair::new(p, q).unwrap();
            for divisor in 1..=6 {
                for bound in [4, 12, 40] {
                    let got = select_expansion_factors(pp, divisor, bound).ok();
                    assert_eq!(got, brute(p, q, divisor, bound), "{p} {q} {divisor} {bound}");
                }
            }
        }
    }

    #[test]
    fn result_stays_prime() {
        let pp = PrimePair::new(2, 3).unwrap();
        let (k0, k1) = select_expansion_factors(pp, 2, default_bound(pp, 2)).unwrap();
        assert!(is_prime_pair(k0 * 2, k1 * 3));
    }

    #[test]
    fn serde_rejects_non_coprime() {
        assert!(serde_json::from_str::<PrimePair>("[2,4]").is_err());
        let pp: PrimePair = serde_json::from_str("[2,3]").unwrap();
        assert_eq!(serde_json::to_string(&pp).unwrap(), "[2,3]");
    }
}
