use std::collections::HashMap;

use crate::{Addr, Word};

const PAGE_WORDS: usize = 1024;

/// Sparse flat memory, zero where never written.
#[derive(Debug, Clone, Default)]
pub struct Backing {
    pages: HashMap<u32, Box<[Word; PAGE_WORDS]>>,
}

impl Backing {
    pub fn new() -> Self {
        Self::default()
    }

    fn split(addr: Addr) -> (u32, usize) {
        let word = addr / 4;
        (word / PAGE_WORDS as u32, (word as usize) % PAGE_WORDS)
    }

    pub fn read(&self, addr: Addr) -> Word {
        let (page, off) = Self::split(addr);
        self.pages.get(&page).map_or(0, |p| p[off])
    }

    pub fn write(&mut self, addr: Addr, value: Word) {
        let (page, off) = Self::split(addr);
        self.pages.entry(page).or_insert_with(|| Box::new([0; PAGE_WORDS]))[off] = value;
    }

    /// Reads `n` consecutive words starting at word-aligned `addr`.
    pub fn read_block(&self, addr: Addr, n: usize) -> Vec<Word> {
        (0..n).map(|i| self.read(addr.wrapping_add(4 * i as u32))).collect()
    }

    pub fn write_block(&mut self, addr: Addr, words: &[Word]) {
        for (i, &w) in words.iter().enumerate() {
            self.write(addr.wrapping_add(4 * i as u32), w);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_read_write() {
        let mut b = Backing::new();
        assert_eq!(b.read(0xFFFF_FFFC), 0);
        b.write(0x1004, 9);
        b.write_block(0x2000, &[1, 2, 3]);
        assert_eq!(b.read(0x1004), 9);
        assert_eq!(b.read_block(0x1FFC, 5), vec![0, 1, 2, 3, 0]);
    }
}
