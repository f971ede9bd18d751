//! Ground-truth glyph language: a sparse second-order Markov chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LanguageSpec {
    /// Alphabet size; the sentence-start symbol is `k`.
    pub k: usize,
    /// Successor distribution per context `(y[i-2], y[i-1])`, indexed by
    /// `c2 * (k + 1) + c1`.
    successors: Vec<Vec<(usize, f64)>>,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl LanguageSpec {
    /// Random chain where every context allows two successors. One of
    /// them is always `(y[i-1] + 1) mod k`, which makes the chain ergodic.
    pub fn generate(k: usize, seed: u64) -> Result<LanguageSpec> {
        if k < 3 {
            return Err(Error::InvalidParameter("language needs at least 3 glyphs".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bos = k;
        let mut successors = Vec::with_capacity((k + 1) * (k + 1));
        for _c2 in 0..=k {
            for c1 in 0..=k {
                let forced = if c1 == bos { rng.gen_range(0..k) } else { (c1 + 1) % k };
                let mut other = rng.gen_range(0..k);
                while other == forced {
                    other = rng.gen_range(0..k);
                }
                let p: f64 = rng.gen_range(0.5..0.85);
                let (likely, unlikely) = if rng.gen_bool(0.5) {
                    (forced, other)
                } else {
                    (other, forced)
                };
                successors.push(vec![(likely, p), (unlikely, 1.0 - p)]);
            }
        }
        Ok(LanguageSpec {
            k,
            successors,
            min_len: 8,
            max_len: 24,
            seed,
        })
    }

    pub fn bos(&self) -> usize {
        self.k
    }

    fn context_index(&self, c2: usize, c1: usize) -> usize {
        c2 * (self.k + 1) + c1
    }

    /// Ground-truth `P(y | c2, c1)`.
    pub fn prob(&self, c2: usize, c1: usize, y: usize) -> f64 {
        self.successors[self.context_index(c2, c1)]
            .iter()
            .filter(|&&(s, _)| s == y)
            .map(|&(_, p)| p)
            .sum()
    }

    pub fn successors(&self, c2: usize, c1: usize) -> &[(usize, f64)] {
        &self.successors[self.context_index(c2, c1)]
    }

    pub fn sample_sentence<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let len = rng.gen_range(self.min_len..=self.max_len);
        self.sample_sentence_of_len(len, rng)
    }

    pub fn sample_sentence_of_len<R: Rng>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let (mut c2, mut c1) = (self.bos(), self.bos());
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let u: f64 = rng.gen();
            let succ = self.successors(c2, c1);
            let mut acc = 0.0;
            let mut y = succ.last().unwrap().0;
            for &(s, p) in succ {
                acc += p;
                if u < acc {
                    y = s;
                    break;
                }
            }
            out.push(y);
            c2 = c1;
            c1 = y;
        }
        out
    }

    /// Whether every glyph can be reached from the sentence start.
    pub fn is_ergodic(&self) -> bool {
        let n = self.k + 1;
        let mut seen = vec![false; n * n];
        let start = self.context_index(self.bos(), self.bos());
        let mut stack = vec![start];
        seen[start] = true;
        let mut glyph_seen = vec![false; self.k];
        while let Some(ctx) = stack.pop() {
            let c1 = ctx % n;
            for &(y, p) in &self.successors[ctx] {
                if p <= 0.0 {
                    continue;
                }
                glyph_seen[y] = true;
                let next = self.context_index(c1, y);
                if !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        glyph_seen.iter().all(|&s| s)
    }
}

/// Samples `sentences` sentences from the chain.
pub fn gen_corpus(lang: &LanguageSpec, sentences: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..sentences).map(|_| lang.sample_sentence(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_normalize_and_chain_is_ergodic() {
        let lang = LanguageSpec::generate(16, 3).unwrap();
        for c2 in 0..=16 {
            for c1 in 0..=16 {
                let total: f64 = lang.successors(c2, c1).iter().map(|s| s.1).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
        assert!(lang.is_ergodic());
    }

    #[test]
    fn corpus_is_seeded() {
        let lang = LanguageSpec::generate(16, 3).unwrap();
        assert_eq!(gen_corpus(&lang, 50, 1), gen_corpus(&lang, 50, 1));
        assert_ne!(gen_corpus(&lang, 50, 1), gen_corpus(&lang, 50, 2));
        assert!(gen_corpus(&lang, 0, 1).is_empty());
    }

    #[test]
    fn sentences_follow_the_chain() {
        let lang = LanguageSpec::generate(16, 11).unwrap();
        for s in gen_corpus(&lang, 200, 4) {
            assert!((lang.min_len..=lang.max_len).contains(&s.len()));
            let mut ctx = (16, 16);
            for &y in &s {
                assert!(lang.prob(ctx.0, ctx.1, y) > 0.0);
                ctx = (ctx.1, y);
            }
        }
    }

    #[test]
    fn tiny_alphabet_is_rejected() {
        assert!(LanguageSpec::generate(2, 0).is_err());
    }
}
