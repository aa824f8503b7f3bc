//! Symbolic driving system: Bernoulli symbol sequences, the shift, unit-dwell
//! switching signals and suspension coordinates `[ι, τ]`.
//!
//! Symbols are 0-based mode indices, so symbol `k` selects `A_k` of the family.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::ProbabilityVector;

/// Generator for stream `stream` of master seed `seed`. Streams of one seed
/// are independent, so trial `i` of an experiment uses `stream_rng(seed, i)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Finite prefix of a one-sided symbol sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolSeq {
    symbols: Vec<usize>,
    alphabet: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl SymbolSeq {
    pub fn new(symbols: Vec<usize>, alphabet: usize) -> Result<Self> {
        if alphabet == 0 {
            return Err(Error::InvalidInput("alphabet must be non-empty".into()));
        }
        if let Some(&s) = symbols.iter().find(|&&s| s >= alphabet) {
            return Err(Error::SymbolOutOfRange { symbol: s, alphabet });
        }
        Ok(SymbolSeq {
            symbols,
            alphabet,
            seed: None,
        })
    }

    /// The periodic word `word` repeated until `length` symbols are filled.
    pub fn periodic(word: &[usize], alphabet: usize, length: usize) -> Result<Self> {
        if word.is_empty() {
            return Err(Error::InvalidInput("periodic word is empty".into()));
        }
        Self::new(word.iter().copied().cycle().take(length).collect(), alphabet)
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    /// Seed the prefix was drawn with, if it was sampled.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// `ι_{k+1}` in 1-based terms: the symbol governing the `k`-th unit interval.
    pub fn get(&self, k: usize) -> Result<usize> {
        self.symbols.get(k).copied().ok_or(Error::PrefixExhausted {
            needed: k + 1,
            available: self.symbols.len(),
        })
    }
}

pub fn sample_sequence(alpha: &ProbabilityVector, length: usize, seed: u64) -> SymbolSeq {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seq = sample_sequence_with(alpha, length, &mut rng);
    seq.seed = Some(seed);
    seq
}

pub fn sample_sequence_with<R: Rng>(alpha: &ProbabilityVector, length: usize, rng: &mut R) -> SymbolSeq {
    let n = alpha.len();
    let symbols = if n == 1 {
        vec![0; length]
    } else {
        let dist = WeightedIndex::new(alpha.as_slice()).expect("probability vector has positive weights");
        (0..length).map(|_| dist.sample(rng)).collect()
    };
    SymbolSeq {
        symbols,
        alphabet: n,
        seed: None,
    }
}

/// `P_α` of the cylinder fixed by `word`: the product of its weights.
pub fn cylinder_probability(alpha: &ProbabilityVector, word: &[usize]) -> Result<f64> {
    let a = alpha.as_slice();
    word.iter().try_fold(1.0, |p, &s| {
        a.get(s).map(|w| p * w).ok_or(Error::SymbolOutOfRange {
            symbol: s,
            alphabet: a.len(),
        })
    })
}

/// Drops the first `k` symbols.
pub fn shift(seq: &SymbolSeq, k: usize) -> Result<SymbolSeq> {
    if k > seq.len() {
        return Err(Error::PrefixExhausted {
            needed: k,
            available: seq.len(),
        });
    }
    Ok(SymbolSeq {
        symbols: seq.symbols[k..].to_vec(),
        alphabet: seq.alphabet,
        seed: seq.seed,
    })
}

/// Left-continuous unit-dwell signal: `ι_k` on `(k-1, k]`, returned 0-based.
pub fn signal_at(seq: &SymbolSeq, t: f64) -> Result<usize> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("signal is defined for t > 0, got {t}")));
    }
    let k = t.ceil() as usize;
    seq.get(k - 1)
}

/// Suspension coordinates `[ι, τ]` in normal form `0 ≤ τ < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchPoint {
    pub seq: SymbolSeq,
    pub tau: f64,
}

impl SwitchPoint {
    pub fn new(seq: SymbolSeq, tau: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&tau) {
            return Err(Error::InvalidInput(format!("tau must lie in [0, 1), got {tau}")));
        }
        Ok(SwitchPoint { seq, tau })
    }

    /// Longest time the prefix can drive: `len - τ`.
    pub fn horizon(&self) -> f64 {
        self.seq.len() as f64 - self.tau
    }

    /// Mode active at time `t > 0` along the orbit, `σ_ι(τ + t)`.
    pub fn mode_at(&self, t: f64) -> Result<usize> {
        signal_at(&self.seq, self.tau + t)
    }
}

/// The semiflow `Θ(t, [ι, τ]) = [θ^⌊τ+t⌋ ι, frac(τ+t)]`.
pub fn suspension_advance(p: &SwitchPoint, t: f64) -> Result<SwitchPoint> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!(
            "advance time must be non-negative, got {t}"
        )));
    }
    let s = p.tau + t;
    let k = s.floor();
    let seq = shift(&p.seq, k as usize)?;
    Ok(SwitchPoint { seq, tau: s - k })
}

/// Samples `[ι, τ]` from `P_α ⊗ Leb` with enough symbols for `horizon`.
pub fn sample_switch_point(alpha: &ProbabilityVector, horizon: f64, seed: u64) -> SwitchPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = sample_switch_point_with(alpha, horizon, &mut rng);
    p.seq.seed = Some(seed);
    p
}

pub fn sample_switch_point_with<R: Rng>(alpha: &ProbabilityVector, horizon: f64, rng: &mut R) -> SwitchPoint {
    let tau: f64 = rng.random();
    let length = horizon.max(0.0).ceil() as usize + 1;
    let seq = sample_sequence_with(alpha, length, rng);
    SwitchPoint { seq, tau }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(a: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(a.to_vec()).unwrap()
    }

    #[test]
    fn degenerate_alphabet() {
        let s = sample_sequence(&pv(&[1.0]), 50, 3);
        assert!(s.symbols().iter().all(|&x| x == 0));
    }

    #[test]
    fn fair_coin_frequency() {
        let s = sample_sequence(&pv(&[0.5, 0.5]), 100_000, 20240101);
        let f = s.symbols().iter().filter(|&&x| x == 0).count() as f64 / 1e5;
        assert!((0.495..=0.505).contains(&f), "{f}");
    }

    #[test]
    fn three_symbol_frequencies_within_three_sigma() {
        let a = [0.2, 0.3, 0.5];
        let n = 60_000;
        let s = sample_sequence(&pv(&a), n, 77);
        for (k, &p) in a.iter().enumerate() {
            let f = s.symbols().iter().filter(|&&x| x == k).count() as f64 / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((f - p).abs() <= 3.0 * sigma, "symbol {k}: {f}");
        }
    }

    #[test]
    fn cylinder_examples() {
        assert_eq!(cylinder_probability(&pv(&[0.5, 0.5]), &[0, 1]).unwrap(), 0.25);
        assert_eq!(cylinder_probability(&pv(&[0.5, 0.5]), &[]).unwrap(), 1.0);
        assert_eq!(cylinder_probability(&pv(&[0.2, 0.3, 0.5]), &[2, 2]).unwrap(), 0.25);
        assert_eq!(
            cylinder_probability(&pv(&[0.5, 0.5]), &[2]),
            Err(Error::SymbolOutOfRange { symbol: 2, alphabet: 2 })
        );
    }

    #[test]
    fn cylinders_partition_the_space() {
        for a in [vec![1.0], vec![0.4, 0.6], vec![0.2, 0.3, 0.5]] {
            let alpha = pv(&a);
            let n = a.len();
            for k in 0..=6 {
                let mut total = 0.0;
                for code in 0..n.pow(k as u32) {
                    let word: Vec<usize> = (0..k).map(|i| code / n.pow(i as u32) % n).collect();
                    total += cylinder_probability(&alpha, &word).unwrap();
                }
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shift_examples() {
        let s = SymbolSeq::new(vec![0, 1, 2, 0], 3).unwrap();
        assert_eq!(shift(&s, 0).unwrap(), s);
        assert_eq!(shift(&s, 1).unwrap().symbols(), &[1, 2, 0]);
        assert_eq!(shift(&shift(&s, 1).unwrap(), 1).unwrap(), shift(&s, 2).unwrap());
        assert!(matches!(shift(&s, 5), Err(Error::PrefixExhausted { .. })));
    }

    #[test]
    fn signal_is_left_continuous() {
        let s = SymbolSeq::new(vec![0, 1, 0], 2).unwrap();
        assert_eq!(signal_at(&s, 0.5).unwrap(), 0);
        assert_eq!(signal_at(&s, 1.0).unwrap(), 0);
        assert_eq!(signal_at(&s, 1.5).unwrap(), 1);
        assert!(signal_at(&s, 0.0).is_err());
        assert!(matches!(signal_at(&s, 3.5), Err(Error::PrefixExhausted { .. })));
    }

    #[test]
    fn advance_examples() {
        let s = SymbolSeq::new(vec![0, 1, 1, 0, 1], 2).unwrap();
        let p = SwitchPoint::new(s.clone(), 0.5).unwrap();
        let q = suspension_advance(&p, 1.5).unwrap();
        assert_eq!(q.tau, 0.0);
        assert_eq!(q.seq, shift(&s, 2).unwrap());
        assert_eq!(suspension_advance(&p, 0.0).unwrap(), p);
        let r = suspension_advance(&SwitchPoint::new(s.clone(), 0.25).unwrap(), 0.5).unwrap();
        assert_eq!(r.tau, 0.75);
        assert_eq!(r.seq, s);
    }

    #[test]
    fn switch_point_is_reproducible() {
        let a = pv(&[0.3, 0.7]);
        assert_eq!(sample_switch_point(&a, 40.0, 9), sample_switch_point(&a, 40.0, 9));
        assert_eq!(sample_switch_point(&a, 40.0, 9).seq.len(), 41);
    }

    #[test]
    fn tau_is_uniform() {
        let a = pv(&[0.5, 0.5]);
        let n = 10_000;
        let mut taus: Vec<f64> = (0..n)
            .map(|i| sample_switch_point_with(&a, 1.0, &mut stream_rng(5, i)).tau)
            .collect();
        taus.sort_by(f64::total_cmp);
        let ks = taus
            .iter()
            .enumerate()
            .map(|(i, &t)| ((i + 1) as f64 / n as f64 - t).max(t - i as f64 / n as f64))
            .fold(0.0, f64::max);
        assert!(ks <= 0.02, "{ks}");
    }

    proptest! {
        #[test]
        fn semiflow_law(seed in 0u64..1000, tau in 0.0f64..1.0, s in 0.0f64..20.0, t in 0.0f64..20.0) {
            let p = SwitchPoint::new(sample_sequence(&pv(&[0.5, 0.5]), 50, seed), tau).unwrap();
            let a = suspension_advance(&suspension_advance(&p, s).unwrap(), t).unwrap();
            let b = suspension_advance(&p, s + t).unwrap();
            // Rounding in tau + s + t may land on either side of an integer.
            if (a.tau - b.tau).abs() < 1e-9 {
                prop_assert_eq!(a.seq, b.seq);
            } else {
                prop_assert!(a.tau.min(b.tau) < 1e-9 && a.tau.max(b.tau) > 1.0 - 1e-9);
            }
        }

        #[test]
        fn signal_matches_advanced_point(seed in 0u64..1000, tau in 0.0f64..1.0, t in 0.001f64..30.0, u in 0.001f64..5.0) {
            let p = SwitchPoint::new(sample_sequence(&pv(&[0.3, 0.7]), 50, seed), tau).unwrap();
            let q = suspension_advance(&p, t).unwrap();
            let lhs = p.mode_at(t + u).unwrap();
            let rhs = q.mode_at(u).unwrap();
            // Only boundary-straddling rounding may disagree.
            let frac = (tau + t + u).fract();
            prop_assume!(frac > 1e-9 && frac < 1.0 - 1e-9);
            prop_assert_eq!(lhs, rhs);
        }
    }
}
