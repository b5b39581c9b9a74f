//! Seeded generators for dependency records and reading-time rows with
//! planted regression coefficients. Used by tests and for the bundled
//! regression fixture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::pipeline::{classify_relation, DependencyRecord, Region, RtRow};

const RELATIONS: [&str; 6] = ["nsubj", "obj", "iobj", "csubj", "obl", "advmod"];

/// Raw-unit coefficients for `L_I` in the dependency-length model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Study1Truth {
    pub intercept: f64,
    pub sentence_position: f64,
    pub antecedent_position: f64,
    pub sentence_length: f64,
    pub baseline_surprisal: f64,
    pub antecedent_frequency: f64,
    pub antecedent_surprisal: f64,
    pub noise_sd: f64,
    /// Spread of per-relation offsets.
    pub dep_type_sd: f64,
}

impl Default for Study1Truth {
    fn default() -> Self {
        Self {
            intercept: 4.0,
            sentence_position: -0.02,
            antecedent_position: -0.15,
            sentence_length: 0.2,
            baseline_surprisal: 0.8,
            antecedent_frequency: 0.1,
            antecedent_surprisal: 0.3,
            noise_sd: 4.0,
            dep_type_sd: 1.0,
        }
    }
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("valid normal")
}

/// `n` records whose `l_i` follows `truth` exactly up to Gaussian noise.
/// `l_o` is a rounded, rescaled copy of `l_i` and carries no planted model.
pub fn study1_records(n: usize, seed: u64, truth: &Study1Truth) -> Vec<DependencyRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets: Vec<f64> = RELATIONS
        .iter()
        .map(|_| normal(0.0, truth.dep_type_sd.max(f64::MIN_POSITIVE)).sample(&mut rng))
        .collect();
    let noise = normal(0.0, truth.noise_sd);
    (0..n)
        .map(|i| {
            let sentence_position = rng.random_range(1..=40usize);
            let sentence_length = rng.random_range(8..=60usize);
            let antecedent_position = rng.random_range(1..sentence_length);
            let baseline = normal(7.0, 1.5).sample(&mut rng);
            let freq = normal(-11.0, 2.5).sample(&mut rng);
            let surprisal = (4.0 - 0.4 * freq + normal(0.0, 2.5).sample(&mut rng)).abs();
            let k = rng.random_range(0..RELATIONS.len());
            let l_i = truth.intercept
                + truth.sentence_position * sentence_position as f64
                + truth.antecedent_position * antecedent_position as f64
                + truth.sentence_length * sentence_length as f64
                + truth.baseline_surprisal * baseline
                + truth.antecedent_frequency * freq
                + truth.antecedent_surprisal * surprisal
                + offsets[k]
                + noise.sample(&mut rng);
            let relation = RELATIONS[k];
            DependencyRecord {
                doc_id: format!("doc{}", i / 200),
                sent_id: format!("s{i}"),
                relation: relation.into(),
                relation_class: classify_relation(relation),
                antecedent_index: antecedent_position,
                retrieval_index: antecedent_position + 1,
                antecedent_token: antecedent_position,
                retrieval_token: antecedent_position + 1,
                antecedent_form: "w".into(),
                retrieval_form: "v".into(),
                head_is_antecedent: rng.random_bool(0.5),
                l_o: (l_i / 5.0).round().max(0.0) as usize,
                l_i,
                antecedent_surprisal_bits: surprisal,
                antecedent_log_frequency: Some(freq),
                frequency_fallback: rng.random_bool(0.05),
                sentence_position: Some(sentence_position),
                antecedent_position,
                sentence_length,
                baseline_surprisal_bits: baseline,
            }
        })
        .collect()
}

/// Raw-unit coefficients for log reading time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Study2Truth {
    pub intercept: f64,
    pub word_length: f64,
    pub surprisal: f64,
    pub frequency: f64,
    pub l: f64,
    pub antecedent_surprisal: f64,
    /// Coefficient on the raw product `L_I * antecedent surprisal`.
    pub interaction: f64,
    pub noise_sd: f64,
    pub participant_sd: f64,
}

impl Default for Study2Truth {
    fn default() -> Self {
        Self {
            intercept: 5.6,
            word_length: 0.02,
            surprisal: 0.015,
            frequency: -0.01,
            l: 0.01,
            antecedent_surprisal: 0.004,
            interaction: -0.002,
            noise_sd: 0.35,
            participant_sd: 0.15,
        }
    }
}

/// Critical-region rows for `n_deps` dependencies read by every one of
/// `participants` participants. `log_rt` follows `truth` with `L = L_I`.
pub fn study2_rows(n_deps: usize, participants: usize, seed: u64, truth: &Study2Truth) -> Vec<RtRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let part_offsets: Vec<f64> = (0..participants)
        .map(|_| normal(0.0, truth.participant_sd.max(f64::MIN_POSITIVE)).sample(&mut rng))
        .collect();
    let noise = normal(0.0, truth.noise_sd);
    let mut rows = Vec::with_capacity(n_deps * participants);
    for d in 0..n_deps {
        let sentence_length = rng.random_range(8..=40usize);
        let antecedent_position = rng.random_range(1..sentence_length - 1);
        let sentence_position = rng.random_range(1..=30usize);
        let word_length = rng.random_range(1..=12usize);
        let surp = normal(7.0, 3.0).sample(&mut rng).abs();
        let surp1 = normal(7.0, 3.0).sample(&mut rng).abs();
        let surp2 = normal(7.0, 3.0).sample(&mut rng).abs();
        let freq = normal(-10.0, 2.5).sample(&mut rng);
        let freq1 = normal(-10.0, 2.5).sample(&mut rng);
        let freq2 = normal(-10.0, 2.5).sample(&mut rng);
        let ante_freq = normal(-11.0, 2.5).sample(&mut rng);
        let ante_surp = (4.0 - 0.4 * ante_freq + normal(0.0, 2.5).sample(&mut rng)).abs();
        let l_i = normal(15.0, 10.0).sample(&mut rng).abs();
        let relation = RELATIONS[rng.random_range(0..RELATIONS.len())];
        let eta = truth.intercept
            + truth.word_length * word_length as f64
            + truth.surprisal * surp
            + truth.frequency * freq
            + truth.l * l_i
            + truth.antecedent_surprisal * ante_surp
            + truth.interaction * l_i * ante_surp;
        for (p, offset) in part_offsets.iter().enumerate() {
            let log_rt = eta + offset + noise.sample(&mut rng);
            let rt_ms = log_rt.exp();
            rows.push(RtRow {
                participant: format!("p{p:03}"),
                region: Region::Critical,
                rt_ms,
                log_rt: rt_ms.ln(),
                dependency_id: d,
                doc_id: String::new(),
                sent_id: format!("s{d}"),
                relation: relation.into(),
                relation_class: classify_relation(relation),
                word_index: antecedent_position + 2,
                word_form: "x".repeat(word_length),
                word_length,
                word_surprisal_bits: surp,
                prev1_surprisal_bits: surp1,
                prev2_surprisal_bits: surp2,
                word_log_frequency: Some(freq),
                prev1_log_frequency: Some(freq1),
                prev2_log_frequency: Some(freq2),
                l_o: (l_i / 5.0).round() as usize,
                l_i,
                antecedent_surprisal_bits: ante_surp,
                antecedent_log_frequency: Some(ante_freq),
                sentence_position: Some(sentence_position),
                antecedent_position,
                sentence_length,
            });
        }
    }
    rows
}
