//! LDA topic modeling by collapsed Gibbs sampling.
//!
//! The sampler keeps the usual count state (per-document topic counts,
//! per-topic word counts, per-topic totals) and resamples one token at a
//! time from the collapsed full conditional
//!
//! ```text
//! p(z = k) ∝ (n_dk + alpha) * (n_kw + beta) / (n_k + V * beta)
//! ```
//!
//! with the current token excluded from all counts. Reported topic-word
//! and document-topic distributions are smoothed posterior means averaged
//! over thinned post-burn-in sweeps, so identical inputs and seed give
//! bit-identical models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub const DEFAULT_BETA: f64 = 0.01;
pub const DEFAULT_SWEEPS: usize = 2000;
pub const DEFAULT_BURN_IN: usize = 500;
const THIN_INTERVAL: usize = 10;
const FOLD_IN_BURN: usize = 50;
const FOLD_IN_SAMPLES: usize = 100;

/// Symmetric document-topic prior used when none is configured.
pub fn default_alpha(num_topics: usize) -> f64 {
    50.0 / num_topics as f64
}

/// Sampling parameters for one LDA fit.
#[derive(Debug, Clone)]
pub struct LdaParams {
    pub num_topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
}

/// A fitted topic model.
///
/// `theta` is the document-topic posterior matrix (one row per document,
/// rows sum to one); `phi` is the topic-word matrix (one row per topic).
#[derive(Debug, Clone)]
pub struct TopicModel {
    pub num_topics: usize,
    pub vocab_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub seed: u64,
    pub sweeps: usize,
    pub burn_in: usize,
}

impl TopicModel {
    /// The document-topic posterior matrix, rows in document order.
    pub fn doc_topic_matrix(&self) -> &[Vec<f64>] {
        &self.theta
    }
}

/// Collapsed Gibbs sampler state.
///
/// Exposed so tests and diagnostics can drive sweeps manually and inspect
/// the count state between them.
pub struct GibbsSampler {
    num_topics: usize,
    vocab_size: usize,
    alpha: f64,
    beta: f64,
    docs: Vec<Vec<usize>>,
    assignments: Vec<Vec<usize>>,
    doc_topic: Vec<Vec<u32>>,
    topic_word: Vec<Vec<u32>>,
    topic_total: Vec<u32>,
    total_tokens: usize,
    rng: ChaCha8Rng,
    scratch: Vec<f64>,
}

impl GibbsSampler {
    pub fn new(
        docs: &[Vec<usize>],
        vocab_size: usize,
        num_topics: usize,
        alpha: f64,
        beta: f64,
        seed: u64,
    ) -> Result<Self> {
        if num_topics < 1 {
            return Err(Error::Topics("topic count must be at least 1".into()));
        }
        if alpha <= 0.0 || beta <= 0.0 {
            return Err(Error::Topics("priors must be positive".into()));
        }
        let total_tokens: usize = docs.iter().map(Vec::len).sum();
        if docs.is_empty() || total_tokens == 0 {
            return Err(Error::Topics("empty corpus".into()));
        }
        if num_topics > total_tokens {
            return Err(Error::Topics(format!(
                "underdetermined: {num_topics} topics for {total_tokens} tokens"
            )));
        }
        for doc in docs {
            if let Some(&w) = doc.iter().find(|&&w| w >= vocab_size) {
                return Err(Error::Topics(format!(
                    "token index {w} outside vocabulary of size {vocab_size}"
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut doc_topic = vec![vec![0u32; num_topics]; docs.len()];
        let mut topic_word = vec![vec![0u32; vocab_size]; num_topics];
        let mut topic_total = vec![0u32; num_topics];
        let mut assignments = Vec::with_capacity(docs.len());
        for (d, doc) in docs.iter().enumerate() {
            let mut z_d = Vec::with_capacity(doc.len());
            for &w in doc {
                let k = rng.random_range(0..num_topics);
                z_d.push(k);
                doc_topic[d][k] += 1;
                topic_word[k][w] += 1;
                topic_total[k] += 1;
            }
            assignments.push(z_d);
        }
        Ok(GibbsSampler {
            num_topics,
            vocab_size,
            alpha,
            beta,
            docs: docs.to_vec(),
            assignments,
            doc_topic,
            topic_word,
            topic_total,
            total_tokens,
            rng,
            scratch: vec![0.0; num_topics],
        })
    }

    /// One full Gibbs sweep: every token of every document is resampled
    /// once, in document and token order.
    pub fn sweep(&mut self) {
        let v_beta = self.vocab_size as f64 * self.beta;
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let old = self.assignments[d][i];
                self.doc_topic[d][old] -= 1;
                self.topic_word[old][w] -= 1;
                self.topic_total[old] -= 1;

                let mut total = 0.0;
                for k in 0..self.num_topics {
                    let weight = (self.doc_topic[d][k] as f64 + self.alpha)
                        * (self.topic_word[k][w] as f64 + self.beta)
                        / (self.topic_total[k] as f64 + v_beta);
                    total += weight;
                    self.scratch[k] = total;
                }
                let draw = self.rng.random::<f64>() * total;
                let mut new = self.num_topics - 1;
                for k in 0..self.num_topics {
                    if draw < self.scratch[k] {
                        new = k;
                        break;
                    }
                }

                self.assignments[d][i] = new;
                self.doc_topic[d][new] += 1;
                self.topic_word[new][w] += 1;
                self.topic_total[new] += 1;
            }
        }
    }

    /// Smoothed document-topic estimate for document `d`.
    pub fn doc_topic_estimate(&self, d: usize) -> Vec<f64> {
        let n_d = self.docs[d].len() as f64;
        let denom = n_d + self.num_topics as f64 * self.alpha;
        self.doc_topic[d]
            .iter()
            .map(|&c| (c as f64 + self.alpha) / denom)
            .collect()
    }

    /// Smoothed topic-word estimate for topic `k`.
    pub fn topic_word_estimate(&self, k: usize) -> Vec<f64> {
        let denom = self.topic_total[k] as f64 + self.vocab_size as f64 * self.beta;
        self.topic_word[k]
            .iter()
            .map(|&c| (c as f64 + self.beta) / denom)
            .collect()
    }

    /// Current topic assignments flattened in document-major token order.
    pub fn assignments(&self) -> Vec<usize> {
        self.assignments.iter().flatten().cloned().collect()
    }

    pub fn total_tokens(&self) -> usize {
        self.total_tokens
    }

    pub fn topic_totals(&self) -> &[u32] {
        &self.topic_total
    }

    /// Verifies that the count state matches the assignments exactly.
    pub fn counts_consistent(&self) -> bool {
        let mut doc_topic = vec![vec![0u32; self.num_topics]; self.docs.len()];
        let mut topic_word = vec![vec![0u32; self.vocab_size]; self.num_topics];
        let mut topic_total = vec![0u32; self.num_topics];
        for (d, doc) in self.docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let k = self.assignments[d][i];
                doc_topic[d][k] += 1;
                topic_word[k][w] += 1;
                topic_total[k] += 1;
            }
        }
        let per_doc_ok = self.doc_topic == doc_topic
            && self
                .doc_topic
                .iter()
                .zip(&self.docs)
                .all(|(row, doc)| row.iter().sum::<u32>() as usize == doc.len());
        per_doc_ok
            && self.topic_word == topic_word
            && self.topic_total == topic_total
            && self.topic_total.iter().sum::<u32>() as usize == self.total_tokens
    }
}

/// Fits an LDA model by collapsed Gibbs sampling.
///
/// The corpus must contain only the documents intended for modeling
/// (unparsable ones are excluded upstream). `theta` and `phi` are
/// averaged over every tenth post-burn-in sweep (every sweep when fewer
/// than ten remain after burn-in).
pub fn fit_lda(docs: &[Vec<usize>], vocab_size: usize, params: &LdaParams) -> Result<TopicModel> {
    if params.sweeps <= params.burn_in {
        return Err(Error::Topics(format!(
            "sweeps ({}) must exceed burn-in ({})",
            params.sweeps, params.burn_in
        )));
    }
    let mut sampler = GibbsSampler::new(
        docs,
        vocab_size,
        params.num_topics,
        params.alpha,
        params.beta,
        params.seed,
    )?;
    let span = params.sweeps - params.burn_in;
    let thin = if span >= THIN_INTERVAL { THIN_INTERVAL } else { 1 };

    let mut theta_acc = vec![vec![0.0; params.num_topics]; docs.len()];
    let mut phi_acc = vec![vec![0.0; vocab_size]; params.num_topics];
    let mut samples = 0usize;
    for sweep in 1..=params.sweeps {
        sampler.sweep();
        if sweep > params.burn_in && (sweep - params.burn_in) % thin == 0 {
            for (d, acc) in theta_acc.iter_mut().enumerate() {
                for (k, v) in sampler.doc_topic_estimate(d).into_iter().enumerate() {
                    acc[k] += v;
                }
            }
            for (k, acc) in phi_acc.iter_mut().enumerate() {
                for (w, v) in sampler.topic_word_estimate(k).into_iter().enumerate() {
                    acc[w] += v;
                }
            }
            samples += 1;
        }
    }
    debug_assert!(samples > 0);
    let scale = 1.0 / samples as f64;
    for row in theta_acc.iter_mut().chain(phi_acc.iter_mut()) {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    Ok(TopicModel {
        num_topics: params.num_topics,
        vocab_size,
        alpha: params.alpha,
        beta: params.beta,
        phi: phi_acc,
        theta: theta_acc,
        seed: params.seed,
        sweeps: params.sweeps,
        burn_in: params.burn_in,
    })
}

/// The `n` highest-probability tokens of a topic, ties broken
/// lexicographically.
pub fn top_words(
    model: &TopicModel,
    vocab: &[String],
    topic: usize,
    n: usize,
) -> Result<Vec<String>> {
    if topic >= model.num_topics {
        return Err(Error::Topics(format!(
            "topic {topic} out of range for {} topics",
            model.num_topics
        )));
    }
    let mut ranked: Vec<(usize, f64)> = model.phi[topic].iter().cloned().enumerate().collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("phi entries are finite")
            .then_with(|| vocab[a.0].cmp(&vocab[b.0]))
    });
    Ok(ranked
        .into_iter()
        .take(n)
        .map(|(w, _)| vocab[w].clone())
        .collect())
}

/// Held-out perplexity exp(-mean log p(w|d)) under the model.
///
/// Each held-out document is folded in: its tokens are Gibbs-resampled
/// against the fixed topic-word distributions, and the resulting smoothed
/// topic mixture scores the document. Out-of-vocabulary tokens must be
/// dropped by the caller; an error is returned when nothing remains.
pub fn held_out_perplexity(model: &TopicModel, docs: &[Vec<usize>]) -> Result<f64> {
    let total: usize = docs.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::Topics("held-out set empty".into()));
    }
    let k_alpha = model.num_topics as f64 * model.alpha;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut log_likelihood = 0.0;
    let mut cumulative = vec![0.0; model.num_topics];
    for doc in docs {
        if doc.is_empty() {
            continue;
        }
        let mut counts = vec![0u32; model.num_topics];
        let mut z = Vec::with_capacity(doc.len());
        for _ in doc {
            let k = rng.random_range(0..model.num_topics);
            counts[k] += 1;
            z.push(k);
        }
        let mut mixture = vec![0.0; model.num_topics];
        for sweep in 0..(FOLD_IN_BURN + FOLD_IN_SAMPLES) {
            for (i, &w) in doc.iter().enumerate() {
                let old = z[i];
                counts[old] -= 1;
                let mut total_w = 0.0;
                for k in 0..model.num_topics {
                    total_w += (counts[k] as f64 + model.alpha) * model.phi[k][w];
                    cumulative[k] = total_w;
                }
                let draw = rng.random::<f64>() * total_w;
                let mut new = model.num_topics - 1;
                for k in 0..model.num_topics {
                    if draw < cumulative[k] {
                        new = k;
                        break;
                    }
                }
                z[i] = new;
                counts[new] += 1;
            }
            if sweep >= FOLD_IN_BURN {
                let denom = doc.len() as f64 + k_alpha;
                for k in 0..model.num_topics {
                    mixture[k] += (counts[k] as f64 + model.alpha) / denom;
                }
            }
        }
        for v in mixture.iter_mut() {
            *v /= FOLD_IN_SAMPLES as f64;
        }
        for &w in doc {
            let p: f64 = (0..model.num_topics)
                .map(|k| mixture[k] * model.phi[k][w])
                .sum();
            log_likelihood += p.ln();
        }
    }
    Ok((-log_likelihood / total as f64).exp())
}

/// Parameters for topic-count selection.
#[derive(Debug, Clone)]
pub struct SelectionParams {
    /// Document-topic prior; `None` means 50/K per candidate K.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
}

/// Picks the topic count minimizing held-out perplexity.
///
/// The corpus is split 90/10 by a seeded shuffle; each candidate is fit
/// on the training part and scored on the rest. Ties go to the smaller
/// candidate.
pub fn select_topic_count(
    docs: &[Vec<usize>],
    vocab_size: usize,
    candidates: &[usize],
    params: &SelectionParams,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Topics("no topic-count candidates".into()));
    }
    let mut unique: Vec<usize> = candidates.to_vec();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() == 1 {
        return Ok(unique[0]);
    }
    if docs.len() < 2 {
        return Err(Error::Topics(
            "topic-count selection needs at least two documents".into(),
        ));
    }

    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5851_f42d_4c95_7f2d);
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let train_len = ((docs.len() * 9) / 10).clamp(1, docs.len() - 1);
    let train: Vec<Vec<usize>> = order[..train_len].iter().map(|&i| docs[i].clone()).collect();
    let held: Vec<Vec<usize>> = order[train_len..].iter().map(|&i| docs[i].clone()).collect();

    let mut best: Option<(usize, f64)> = None;
    for &k in &unique {
        let fit = fit_lda(
            &train,
            vocab_size,
            &LdaParams {
                num_topics: k,
                alpha: params.alpha.unwrap_or_else(|| default_alpha(k)),
                beta: params.beta,
                sweeps: params.sweeps,
                burn_in: params.burn_in,
                seed: params.seed,
            },
        )?;
        let perplexity = held_out_perplexity(&fit, &held)?;
        let better = match best {
            None => true,
            Some((_, best_p)) => perplexity < best_p,
        };
        if better {
            best = Some((k, perplexity));
        }
    }
    Ok(best.expect("candidates were non-empty").0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_with_seed(k: usize, sweeps: usize, burn_in: usize, seed: u64) -> LdaParams {
        LdaParams {
            num_topics: k,
            alpha: default_alpha(k),
            beta: DEFAULT_BETA,
            sweeps,
            burn_in,
            seed,
        }
    }

    #[test]
    fn degenerate_single_topic() {
        let docs = vec![vec![0usize, 0, 0]];
        let model = fit_lda(&docs, 1, &params_with_seed(1, 50, 10, 7)).unwrap();
        assert_eq!(model.theta, vec![vec![1.0]]);
        // V = 1: all mass on the only word.
        assert_eq!(model.phi[0][0], 1.0);
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let docs = vec![
            vec![0usize, 1, 2, 0],
            vec![2, 3, 3, 1],
            vec![0, 0, 3, 2, 1],
        ];
        let p = params_with_seed(2, 120, 40, 99);
        let a = fit_lda(&docs, 4, &p).unwrap();
        let b = fit_lda(&docs, 4, &p).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.phi, b.phi);
        let c = fit_lda(&docs, 4, &params_with_seed(2, 120, 40, 100)).unwrap();
        assert!(a.theta != c.theta || a.phi != c.phi);
    }

    #[test]
    fn rows_are_stochastic_and_positive() {
        let docs: Vec<Vec<usize>> = (0..12)
            .map(|d| (0..(4 + d % 5)).map(|i| (d * 3 + i * 7) % 9).collect())
            .collect();
        let model = fit_lda(&docs, 9, &params_with_seed(3, 200, 50, 5)).unwrap();
        for row in model.theta.iter().chain(model.phi.iter()) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn counts_conserved_across_sweeps() {
        let docs = vec![vec![0usize, 1, 2], vec![2, 1], vec![0, 0, 1, 2]];
        let mut sampler = GibbsSampler::new(&docs, 3, 2, 1.0, 0.5, 3).unwrap();
        for _ in 0..25 {
            sampler.sweep();
            assert!(sampler.counts_consistent());
            assert_eq!(
                sampler.topic_totals().iter().sum::<u32>() as usize,
                sampler.total_tokens()
            );
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let empty: Vec<Vec<usize>> = vec![];
        assert!(fit_lda(&empty, 5, &params_with_seed(2, 10, 2, 0)).is_err());
        let docs = vec![vec![0usize, 1]];
        // more topics than tokens
        let err = fit_lda(&docs, 2, &params_with_seed(3, 10, 2, 0)).unwrap_err();
        assert!(err.to_string().contains("underdetermined"));
        // sweeps must exceed burn-in
        assert!(fit_lda(&docs, 2, &params_with_seed(1, 5, 5, 0)).is_err());
        // token outside vocabulary
        let bad = vec![vec![7usize]];
        assert!(fit_lda(&bad, 2, &params_with_seed(1, 10, 2, 0)).is_err());
    }

    #[test]
    fn top_words_ranking_and_ties() {
        let vocab: Vec<String> = ["aid", "tax", "zoo"].iter().map(|s| s.to_string()).collect();
        let model = TopicModel {
            num_topics: 2,
            vocab_size: 3,
            alpha: 1.0,
            beta: 0.01,
            phi: vec![vec![0.2, 0.7, 0.1], vec![0.4, 0.4, 0.2]],
            theta: vec![],
            seed: 0,
            sweeps: 1,
            burn_in: 0,
        };
        assert_eq!(top_words(&model, &vocab, 0, 2).unwrap(), vec!["tax", "aid"]);
        // tie 0.4/0.4 resolves lexicographically
        assert_eq!(top_words(&model, &vocab, 1, 2).unwrap(), vec!["aid", "tax"]);
        // n beyond V clamps
        assert_eq!(top_words(&model, &vocab, 0, 10).unwrap().len(), 3);
        assert!(top_words(&model, &vocab, 5, 1).is_err());
    }

    #[test]
    fn uniform_model_perplexity_is_vocab_size() {
        let v = 10;
        let model = TopicModel {
            num_topics: 1,
            vocab_size: v,
            alpha: 1.0,
            beta: 0.01,
            phi: vec![vec![1.0 / v as f64; v]],
            theta: vec![],
            seed: 11,
            sweeps: 1,
            burn_in: 0,
        };
        let docs = vec![vec![0usize, 3, 9, 4], vec![1, 1, 2]];
        let p = held_out_perplexity(&model, &docs).unwrap();
        assert!((p - 10.0).abs() < 1e-6);
        assert!(held_out_perplexity(&model, &[vec![], vec![]]).is_err());
    }

    /// Deterministic synthetic corpus from three disjoint word blocks.
    fn blocky_corpus(docs: usize, len: usize, vocab_per_block: usize, seed: u64) -> Vec<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..docs)
            .map(|_| {
                let block = rng.random_range(0..3usize);
                (0..len)
                    .map(|_| block * vocab_per_block + rng.random_range(0..vocab_per_block))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn matched_topic_count_beats_single_topic() {
        let docs = blocky_corpus(60, 20, 10, 21);
        let train = docs[..50].to_vec();
        let held = &docs[50..];
        let k3 = fit_lda(&train, 30, &params_with_seed(3, 300, 100, 8)).unwrap();
        let k1 = fit_lda(&train, 30, &params_with_seed(1, 300, 100, 8)).unwrap();
        let p3 = held_out_perplexity(&k3, held).unwrap();
        let p1 = held_out_perplexity(&k1, held).unwrap();
        assert!(p3 < p1, "k=3 perplexity {p3} should beat k=1 {p1}");
    }

    #[test]
    fn selection_prefers_generating_count() {
        let docs = blocky_corpus(60, 20, 10, 22);
        let sel = SelectionParams {
            alpha: None,
            beta: DEFAULT_BETA,
            sweeps: 250,
            burn_in: 80,
            seed: 13,
        };
        let k = select_topic_count(&docs, 30, &[1, 3], &sel).unwrap();
        assert_eq!(k, 3);
        // single candidate short-circuits
        assert_eq!(select_topic_count(&docs, 30, &[10], &sel).unwrap(), 10);
        assert_eq!(select_topic_count(&docs, 30, &[3, 3], &sel).unwrap(), 3);
        assert!(select_topic_count(&docs, 30, &[], &sel).is_err());
    }

    #[test]
    fn topic_recovery_on_separated_topics() {
        // 200 documents over V = 30 with three well-separated topics.
        let docs = blocky_corpus(200, 25, 10, 33);
        let model = fit_lda(&docs, 30, &params_with_seed(3, 400, 150, 14)).unwrap();
        // True topic b is uniform over its block of ten words.
        let truth: Vec<Vec<f64>> = (0..3)
            .map(|b| {
                (0..30)
                    .map(|w| if w / 10 == b { 0.1 } else { 0.0 })
                    .collect()
            })
            .collect();
        let cosine = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb)
        };
        // Greedy matching of fitted topics to true topics.
        let mut used = vec![false; 3];
        for fitted in &model.phi {
            let (best, sim) = truth
                .iter()
                .enumerate()
                .filter(|(i, _)| !used[*i])
                .map(|(i, t)| (i, cosine(fitted, t)))
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            used[best] = true;
            assert!(sim > 0.9, "cosine {sim} too low");
        }
    }
}
