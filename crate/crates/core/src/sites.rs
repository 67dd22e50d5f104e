use alloc::vec::Vec;

/// Dense storage indexed by integer site, growing in both directions.
///
/// The sites a walk or a branching-like process touches form a contiguous
/// range, so a shifted vector beats a hash map here.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SiteVec<T> {
    lo: i64,
    data: Vec<T>,
}

impl<T: Clone + Default> SiteVec<T> {
    pub fn new() -> Self {
        SiteVec { lo: 0, data: Vec::new() }
    }

    /// Pre-sized covering `lo..=hi`.
    pub fn with_range(lo: i64, hi: i64) -> Self {
        let len = if hi >= lo { (hi - lo + 1) as usize } else { 0 };
        SiteVec { lo, data: alloc::vec![T::default(); len] }
    }

    /// Lowest stored site.
    pub fn lo(&self) -> i64 {
        self.lo
    }

    /// One past the highest stored site.
    pub fn end(&self) -> i64 {
        self.lo + self.data.len() as i64
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: i64) -> Option<&T> {
        let i = x.wrapping_sub(self.lo);
        if i >= 0 {
            self.data.get(i as usize)
        } else {
            None
        }
    }

    /// Value at `x`, default if never stored.
    #[inline]
    pub fn value(&self, x: i64) -> T {
        self.get(x).cloned().unwrap_or_default()
    }

    #[inline]
    pub fn get_mut(&mut self, x: i64) -> &mut T {
        if self.data.is_empty() {
            self.lo = x;
            self.data.push(T::default());
        } else if x < self.lo {
            let extra = ((self.lo - x) as usize).max(self.data.len()).max(16);
            let mut grown = alloc::vec![T::default(); extra];
            grown.append(&mut self.data);
            self.data = grown;
            self.lo -= extra as i64;
        } else if x >= self.end() {
            let need = (x - self.lo + 1) as usize;
            let target = need.max(self.data.len() * 2).max(16);
            self.data.resize(target, T::default());
        }
        &mut self.data[(x - self.lo) as usize]
    }

    /// Iterates `(site, value)` over the stored range.
    pub fn iter(&self) -> impl Iterator<Item = (i64, &T)> {
        let lo = self.lo;
        self.data.iter().enumerate().map(move |(i, v)| (lo + i as i64, v))
    }

    /// Values on `lo..=hi`, defaults outside the stored range.
    pub fn range(&self, lo: i64, hi: i64) -> Vec<T> {
        (lo..=hi).map(|x| self.value(x)).collect()
    }
}
