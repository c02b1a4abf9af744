use serde::{Deserialize, Serialize};

const ALPHABET: &[u8; 36] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";
const SPACE: u64 = 36u64.pow(6);

/// Deterministic 6-character base-36 record locators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PnrAllocator {
    offset: u64,
    issued: u64,
}

impl PnrAllocator {
    pub fn new(seed: u64) -> Self {
        PnrAllocator {
            offset: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) % SPACE,
            issued: 0,
        }
    }

    pub fn next_pnr(&mut self) -> String {
        let mut n = (self.offset + self.issued * 7_919) % SPACE;
        self.issued += 1;
        let mut out = [b'0'; 6];
        for slot in out.iter_mut().rev() {
            *slot = ALPHABET[(n % 36) as usize];
            n /= 36;
        }
        String::from_utf8(out.to_vec()).expect("ascii alphabet")
    }

    pub fn issued(&self) -> u64 {
        self.issued
    }
}

pub fn is_pnr(s: &str) -> bool {
    s.len() == 6
        && s.bytes()
            .all(|b| b.is_ascii_digit() || b.is_ascii_uppercase())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pnrs_are_distinct_and_well_formed() {
        let mut a = PnrAllocator::new(42);
        let issued: std::collections::BTreeSet<String> = (0..5000).map(|_| a.next_pnr()).collect();
        assert_eq!(issued.len(), 5000);
        assert!(issued.iter().all(|p| is_pnr(p)));
        assert_eq!(
            PnrAllocator::new(42).next_pnr(),
            PnrAllocator::new(42).next_pnr()
        );
    }
}
