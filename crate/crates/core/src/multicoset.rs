//! Coset patterns, binary sampling masks and the row-selection operator
//! `y = P_omega x`.

use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ComplexBuffer;

/// Default upper bound on `C(L, K)` for exhaustive enumeration.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// `K` retained offsets out of every period of `L` Nyquist samples.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawPattern", into = "RawPattern")]
pub struct CosetPattern {
    period: usize,
    cosets: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPattern {
    period: usize,
    kept: usize,
    cosets: Vec<usize>,
}

impl TryFrom<RawPattern> for CosetPattern {
    type Error = Error;

    fn try_from(raw: RawPattern) -> Result<Self> {
        if raw.kept != raw.cosets.len() {
            return Err(Error::InvalidParameter(format!(
                "kept = {} but {} cosets listed",
                raw.kept,
                raw.cosets.len()
            )));
        }
        CosetPattern::new(raw.period, raw.cosets)
    }
}

impl From<CosetPattern> for RawPattern {
    fn from(p: CosetPattern) -> Self {
        RawPattern {
            period: p.period,
            kept: p.kept(),
            cosets: p.cosets,
        }
    }
}

impl CosetPattern {
    /// Validates `1 <= K <= L`, strictly increasing cosets below `L`.
    pub fn new(period: usize, cosets: Vec<usize>) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidParameter("period L must be >= 1".into()));
        }
        if cosets.is_empty() {
            return Err(Error::InvalidParameter("at least one coset must be kept".into()));
        }
        if cosets.len() > period {
            return Err(Error::InvalidParameter(format!(
                "K = {} exceeds L = {period}",
                cosets.len()
            )));
        }
        if cosets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!("cosets {cosets:?} must be strictly increasing")));
        }
        if let Some(&c) = cosets.iter().find(|&&c| c >= period) {
            return Err(Error::InvalidParameter(format!("coset {c} outside 0..{period}")));
        }
        Ok(Self { period, cosets })
    }

    /// The uniform-sampling benchmark, `L = K = 1`.
    pub fn uniform() -> Self {
        Self {
            period: 1,
            cosets: vec![0],
        }
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn kept(&self) -> usize {
        self.cosets.len()
    }

    pub fn cosets(&self) -> &[usize] {
        &self.cosets
    }

    pub fn is_full(&self) -> bool {
        self.kept() == self.period
    }

    /// Compression ratio `K / L`.
    pub fn ratio(&self) -> f64 {
        self.kept() as f64 / self.period as f64
    }

    /// Short identifier `L/K`.
    pub fn id(&self) -> String {
        format!("{}/{}", self.period, self.kept())
    }

    /// Cosets as a space-separated list.
    pub fn cosets_string(&self) -> String {
        self.cosets.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
    }

    pub fn contains(&self, residue: usize) -> bool {
        self.cosets.binary_search(&residue).is_ok()
    }

    /// Number of retained samples in a mask of length `n_obs`.
    pub fn retained_count(&self, n_obs: usize) -> usize {
        let tail = n_obs % self.period;
        (n_obs / self.period) * self.kept() + self.cosets.iter().filter(|&&c| c < tail).count()
    }
}

impl fmt::Display for CosetPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:?}", self.id(), self.cosets)
    }
}

/// Binary retain/discard mask over an observation window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingMask {
    bits: Vec<bool>,
    retained: usize,
}

impl SamplingMask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        let retained = bits.iter().filter(|&&b| b).count();
        Self { bits, retained }
    }

    pub fn all_ones(n_obs: usize) -> Self {
        Self::from_bits(vec![true; n_obs])
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn retained_count(&self) -> usize {
        self.retained
    }

    /// Strictly increasing indices `n` with `m[n] = 1`.
    pub fn retained_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(n, &b)| b.then_some(n))
            .collect()
    }
}

/// `m[n] = 1` iff `n mod L` is a kept coset, for `n` in `[0, n_obs)`.
pub fn make_mask(p: &CosetPattern, n_obs: usize) -> Result<SamplingMask> {
    if n_obs == 0 {
        return Err(Error::InvalidParameter("observation length must be >= 1".into()));
    }
    let residues: Vec<bool> = (0..p.period()).map(|r| p.contains(r)).collect();
    Ok(SamplingMask::from_bits(
        (0..n_obs).map(|n| residues[n % p.period()]).collect(),
    ))
}

pub fn retained_indices(mask: &SamplingMask) -> Vec<usize> {
    mask.retained_indices()
}

/// Keeps the samples of `x` at the retained positions of `mask`, in order.
pub fn subsample(x: &[Complex64], mask: &SamplingMask) -> Result<ComplexBuffer> {
    if x.len() != mask.len() {
        return Err(Error::LengthMismatch {
            expected: mask.len(),
            actual: x.len(),
        });
    }
    let y = x
        .iter()
        .zip(mask.bits())
        .filter_map(|(&v, &keep)| keep.then_some(v))
        .collect();
    ComplexBuffer::new(y)
}

/// Average sampling rate `fs K / L`.
pub fn average_rate(p: &CosetPattern, fs: f64) -> f64 {
    fs * p.kept() as f64 / p.period() as f64
}

/// Binomial coefficient; saturates at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Every `K`-subset of `{0, .., L-1}` exactly once, in lexicographic order.
pub fn enumerate_patterns(period: usize, kept: usize, cap: u64) -> Result<PatternIter> {
    if period == 0 || kept == 0 || kept > period {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= K <= L, got L = {period}, K = {kept}"
        )));
    }
    let count = binomial(period, kept);
    if count > cap as u128 {
        return Err(Error::SearchTooLarge {
            period,
            kept,
            count,
            cap,
        });
    }
    Ok(PatternIter {
        period,
        next: Some((0..kept).collect()),
    })
}

/// Lexicographic combination generator returned by [`enumerate_patterns`].
#[derive(Debug, Clone)]
pub struct PatternIter {
    period: usize,
    next: Option<Vec<usize>>,
}

impl Iterator for PatternIter {
    type Item = CosetPattern;

    fn next(&mut self) -> Option<CosetPattern> {
        let current = self.next.take()?;
        let k = current.len();
        let mut succ = current.clone();
        // rightmost position that can still be incremented
        if let Some(i) = (0..k).rev().find(|&i| succ[i] < self.period - k + i) {
            succ[i] += 1;
            for j in i + 1..k {
                succ[j] = succ[j - 1] + 1;
            }
            self.next = Some(succ);
        }
        Some(CosetPattern {
            period: self.period,
            cosets: current,
        })
    }
}

/// On-disk pattern description, optionally carrying the designer's score and
/// configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternFile {
    pub period: usize,
    pub kept: usize,
    pub cosets: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<crate::design::DesignProvenance>,
}

impl PatternFile {
    pub fn bare(pattern: &CosetPattern) -> Self {
        Self {
            period: pattern.period(),
            kept: pattern.kept(),
            cosets: pattern.cosets().to_vec(),
            design: None,
        }
    }

    pub fn pattern(&self) -> Result<CosetPattern> {
        CosetPattern::try_from(RawPattern {
            period: self.period,
            kept: self.kept,
            cosets: self.cosets.clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// Reads and validates a pattern file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: Self = serde_json::from_str(&text)?;
        file.pattern()?;
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ones(mask: &SamplingMask) -> Vec<usize> {
        mask.retained_indices()
    }

    #[test]
    fn pattern_validation() {
        assert!(CosetPattern::new(4, vec![0, 2]).is_ok());
        assert!(CosetPattern::new(4, vec![2, 0]).is_err());
        assert!(CosetPattern::new(4, vec![1, 1]).is_err());
        assert!(CosetPattern::new(4, vec![4]).is_err());
        assert!(CosetPattern::new(4, vec![]).is_err());
        assert!(CosetPattern::new(0, vec![0]).is_err());
        assert!(CosetPattern::new(2, vec![0, 1, 2]).is_err());
    }

    #[test]
    fn mask_examples() {
        let m = make_mask(&CosetPattern::new(4, vec![0, 2]).unwrap(), 8).unwrap();
        let expect = [true, false, true, false, true, false, true, false];
        assert_eq!(m.bits(), &expect);

        let m = make_mask(&CosetPattern::new(8, vec![2, 3, 4, 5]).unwrap(), 16).unwrap();
        assert_eq!(ones(&m), vec![2, 3, 4, 5, 10, 11, 12, 13]);

        let m = make_mask(&CosetPattern::uniform(), 37).unwrap();
        assert!(m.bits().iter().all(|&b| b));
        assert_eq!(m.retained_count(), 37);

        assert!(make_mask(&CosetPattern::uniform(), 0).is_err());
    }

    #[test]
    fn retained_index_examples() {
        let m = SamplingMask::from_bits(vec![true, false, true, false]);
        assert_eq!(retained_indices(&m), vec![0, 2]);
        assert!(retained_indices(&SamplingMask::from_bits(vec![false; 5])).is_empty());
        let m = make_mask(&CosetPattern::new(16, vec![12]).unwrap(), 48).unwrap();
        assert_eq!(retained_indices(&m), vec![12, 28, 44]);
    }

    #[test]
    fn subsample_examples() {
        let x: Vec<Complex64> = (0..4).map(|i| Complex64::new(i as f64, -(i as f64))).collect();
        let y = subsample(&x, &SamplingMask::from_bits(vec![true, false, false, true])).unwrap();
        assert_eq!(y.as_slice(), &[x[0], x[3]]);
        let y = subsample(&x, &SamplingMask::all_ones(4)).unwrap();
        assert_eq!(y.as_slice(), x.as_slice());
        let mask = SamplingMask::from_bits(vec![false, true, true, false]);
        let once = subsample(&x, &mask).unwrap();
        let twice = subsample(&once, &SamplingMask::all_ones(once.len())).unwrap();
        assert_eq!(once, twice);
        assert!(matches!(
            subsample(&x, &SamplingMask::all_ones(3)),
            Err(Error::LengthMismatch { expected: 3, actual: 4 })
        ));
    }

    #[test]
    fn average_rate_examples() {
        let fs = 3.84e6;
        let r = average_rate(&CosetPattern::new(8, vec![0, 1, 2, 3]).unwrap(), fs);
        assert!((r - 1.92e6).abs() < 1e-6);
        let r = average_rate(&CosetPattern::new(32, vec![12]).unwrap(), fs);
        assert!((r - 120e3).abs() < 1e-6);
        assert_eq!(average_rate(&CosetPattern::new(8, (0..8).collect()).unwrap(), fs), fs);
    }

    #[test]
    fn enumeration_examples() {
        let all: Vec<_> = enumerate_patterns(3, 2, DEFAULT_ENUMERATION_CAP).unwrap().collect();
        let sets: Vec<&[usize]> = all.iter().map(|p| p.cosets()).collect();
        assert_eq!(sets, vec![&[0, 1][..], &[0, 2], &[1, 2]]);

        assert_eq!(enumerate_patterns(16, 8, DEFAULT_ENUMERATION_CAP).unwrap().count(), 12870);

        let full: Vec<_> = enumerate_patterns(8, 8, DEFAULT_ENUMERATION_CAP).unwrap().collect();
        assert_eq!(full.len(), 1);
        assert_eq!(full[0].cosets(), &[0, 1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn enumeration_cap() {
        match enumerate_patterns(32, 16, DEFAULT_ENUMERATION_CAP) {
            Err(Error::SearchTooLarge { count, .. }) => assert_eq!(count, 601_080_390),
            other => panic!("expected cap error, got {other:?}"),
        }
        assert!(enumerate_patterns(4, 5, 100).is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(16, 8), 12870);
        assert_eq!(binomial(8, 4), 70);
        assert_eq!(binomial(32, 1), 32);
        assert_eq!(binomial(3, 5), 0);
    }

    #[test]
    fn pattern_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let f = PatternFile::bare(&CosetPattern::new(16, vec![2, 3, 4, 5, 10, 11, 12, 13]).unwrap());
        f.save(&path).unwrap();
        assert_eq!(PatternFile::load(&path).unwrap(), f);
        std::fs::write(&path, r#"{"period": 8, "kept": 3, "cosets": [1, 2]}"#).unwrap();
        assert!(PatternFile::load(&path).is_err());
    }

    proptest! {
        #[test]
        fn retained_count_formula(period in 1usize..20, seed in any::<u64>(), n_obs in 1usize..300) {
            let cosets: Vec<usize> = (0..period).filter(|i| (seed >> (i % 64)) & 1 == 1).collect();
            prop_assume!(!cosets.is_empty());
            let p = CosetPattern::new(period, cosets).unwrap();
            let m = make_mask(&p, n_obs).unwrap();
            prop_assert_eq!(m.retained_count(), p.retained_count(n_obs));
            for (n, &b) in m.bits().iter().enumerate() {
                prop_assert_eq!(b, p.contains(n % period));
            }
        }

        #[test]
        fn subsample_preserves_order(bits in proptest::collection::vec(any::<bool>(), 0..64)) {
            let x: Vec<Complex64> = (0..bits.len()).map(|i| Complex64::new(i as f64, 0.0)).collect();
            let mask = SamplingMask::from_bits(bits);
            let y = subsample(&x, &mask).unwrap();
            let idx: Vec<f64> = y.iter().map(|z| z.re).collect();
            let expect: Vec<f64> = mask.retained_indices().into_iter().map(|n| n as f64).collect();
            prop_assert_eq!(idx, expect);
        }

        #[test]
        fn enumeration_is_exhaustive_and_distinct(period in 1usize..11, kept_frac in 0.0f64..1.0) {
            let kept = 1 + ((period - 1) as f64 * kept_frac) as usize;
            let all: Vec<_> = enumerate_patterns(period, kept, DEFAULT_ENUMERATION_CAP).unwrap().collect();
            prop_assert_eq!(all.len() as u128, binomial(period, kept));
            prop_assert!(all.windows(2).all(|w| w[0].cosets() < w[1].cosets()));
            for p in &all {
                prop_assert!(CosetPattern::new(p.period(), p.cosets().to_vec()).is_ok());
            }
        }
    }
}
