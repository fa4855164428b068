//! Entity dataset construction: canonical election, ISBN-match and fuzzy
//! channels, synthetic augmentation, entity-level splitting, and the
//! bundled synthetic fixture corpus used for offline evaluation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::record::{BookRecord, NameEntity, Provenance, Variant, VariantAudit};
use crate::seed;
use crate::textnorm::{fuzzy_token_match, normalize, tokenize};
use crate::{isbn, textnorm};

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("at least one source name is required to elect a canonical form")]
    NoSourceNames,
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    InvalidRatio(f64),
    #[error("need at least {needed} entities, got {got}")]
    TooFewEntities { needed: usize, got: usize },
}

/// Elect the canonical form among per-source names: a unique Wikipedia-
/// matched name wins; otherwise the name provided by the most sources.
/// Remaining ties break by longest name, then lexicographic order.
pub fn elect_canonical(
    names_by_source: &BTreeMap<String, String>,
    wiki_matches: &BTreeSet<String>,
) -> Result<String, DatasetError> {
    if names_by_source.is_empty() {
        return Err(DatasetError::NoSourceNames);
    }
    let normalized: Vec<String> = names_by_source
        .values()
        .map(|n| normalize(n).text().to_string())
        .collect();
    let wiki_norm: BTreeSet<String> =
        wiki_matches.iter().map(|n| normalize(n).text().to_string()).collect();
    let wiki_hits: BTreeSet<&String> =
        normalized.iter().filter(|n| wiki_norm.contains(*n)).collect();
    if wiki_hits.len() == 1 {
        return Ok((*wiki_hits.iter().next().unwrap()).clone());
    }
    let mut counts: BTreeMap<&String, usize> = BTreeMap::new();
    for name in &normalized {
        *counts.entry(name).or_insert(0) += 1;
    }
    let winner = counts
        .iter()
        .max_by(|(a, ca), (b, cb)| {
            ca.cmp(cb)
                .then(a.chars().count().cmp(&b.chars().count()))
                // later comparisons prefer the lexicographically smaller name
                .then_with(|| b.cmp(a))
        })
        .map(|(name, _)| (*name).clone())
        .unwrap();
    Ok(winner)
}

/// Channel 1: entities from books matched to external sources via ISBN.
/// `source_results` is keyed by canonical13; inner maps are source label to
/// raw author name. Entities sharing a canonical name are merged.
pub fn build_entities_from_matches(
    records: &[BookRecord],
    source_results: &BTreeMap<String, BTreeMap<String, String>>,
    wiki_matches: &BTreeSet<String>,
) -> Vec<NameEntity> {
    let mut by_canonical: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for record in records {
        let Some(parsed) = isbn::of_record(record) else { continue };
        let Some(names) = source_results.get(parsed.canonical13()) else { continue };
        if names.is_empty() {
            continue;
        }
        let canonical = elect_canonical(names, wiki_matches)
            .expect("non-empty source map always elects");
        let mut variants: BTreeSet<String> = names
            .values()
            .map(|n| normalize(n).text().to_string())
            .filter(|n| !n.is_empty())
            .collect();
        if !record.author_missing() {
            let cat = normalize(&record.author_raw).text().to_string();
            if !cat.is_empty() {
                variants.insert(cat);
            }
        }
        by_canonical.entry(canonical).or_default().extend(variants);
    }
    by_canonical
        .into_iter()
        .map(|(canonical, variants)| {
            NameEntity::new(
                &canonical,
                Provenance::IsbnMatch,
                variants.into_iter().map(|name| Variant {
                    name,
                    provenance: Provenance::IsbnMatch,
                    audit: None,
                }),
            )
        })
        .collect()
}

/// Channel 2: entities from fuzzy-matching catalog author names against a
/// reference name list (the offline stand-in for DBpedia). The reference
/// name becomes canonical. A catalog name matching several references links
/// to the one with the most exactly-matching tokens; ties are skipped and
/// logged as ambiguous.
pub fn build_entities_fuzzy(
    records: &[BookRecord],
    reference_names: &[String],
) -> (Vec<NameEntity>, Vec<String>) {
    let refs: Vec<(String, textnorm::NormalizedName, BTreeSet<String>)> = reference_names
        .iter()
        .map(|r| {
            let norm = normalize(r);
            let tokens = tokenize(&norm).into_iter().collect();
            (norm.text().to_string(), norm, tokens)
        })
        .collect();
    let mut by_canonical: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut ambiguous = Vec::new();
    for record in records {
        if record.author_missing() {
            continue;
        }
        let cat = normalize(&record.author_raw);
        if cat.text().is_empty() {
            continue;
        }
        let cat_tokens: Vec<String> = tokenize(&cat);
        let matches: Vec<&(String, textnorm::NormalizedName, BTreeSet<String>)> = refs
            .iter()
            .filter(|(_, rnorm, _)| fuzzy_token_match(&cat, rnorm))
            .collect();
        let chosen = match matches.len() {
            0 => continue,
            1 => matches[0],
            _ => {
                let exact_count = |rtokens: &BTreeSet<String>| {
                    cat_tokens.iter().filter(|t| rtokens.contains(*t)).count()
                };
                let best = matches.iter().map(|m| exact_count(&m.2)).max().unwrap();
                let winners: Vec<_> =
                    matches.iter().filter(|m| exact_count(&m.2) == best).collect();
                if winners.len() > 1 {
                    ambiguous.push(format!(
                        "ambiguous: catalog name {:?} ties {} references (best {} exact tokens)",
                        cat.text(),
                        winners.len(),
                        best
                    ));
                    continue;
                }
                winners[0]
            }
        };
        by_canonical
            .entry(chosen.0.clone())
            .or_default()
            .insert(cat.text().to_string());
    }
    let entities = by_canonical
        .into_iter()
        .map(|(canonical, variants)| {
            NameEntity::new(
                &canonical,
                Provenance::FuzzyMatch,
                variants.into_iter().map(|name| Variant {
                    name,
                    provenance: Provenance::FuzzyMatch,
                    audit: None,
                }),
            )
        })
        .collect();
    (entities, ambiguous)
}

/// The synthetic variant generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantRule {
    InitialAbbreviation,
    NameInversion,
    CaseChange,
    SingleTypo,
    DiacriticStrip,
}

impl VariantRule {
    pub const ALL: [VariantRule; 5] = [
        VariantRule::InitialAbbreviation,
        VariantRule::NameInversion,
        VariantRule::CaseChange,
        VariantRule::SingleTypo,
        VariantRule::DiacriticStrip,
    ];

    pub fn id(self) -> &'static str {
        match self {
            VariantRule::InitialAbbreviation => "initial-abbreviation",
            VariantRule::NameInversion => "name-inversion",
            VariantRule::CaseChange => "case-change",
            VariantRule::SingleTypo => "single-typo",
            VariantRule::DiacriticStrip => "diacritic-strip",
        }
    }
}

/// Result of applying a rule to a normalized name: either a new distinct
/// string, or a reported no-op.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleOutcome {
    Added(String),
    NoOp(&'static str),
}

/// Apply a variant rule to a normalized name.
pub fn apply_rule(rule: VariantRule, name: &str, rng: &mut impl Rng) -> RuleOutcome {
    match rule {
        VariantRule::InitialAbbreviation => {
            let tokens: Vec<&str> = name.split_whitespace().collect();
            match tokens.split_first() {
                Some((first, rest)) if !rest.is_empty() => {
                    let letters: Vec<char> =
                        first.chars().filter(|c| c.is_alphanumeric()).collect();
                    if letters.len() < 2 {
                        return RuleOutcome::NoOp("first token is already an initial");
                    }
                    let mut out = format!("{}.", letters[0]);
                    for t in rest {
                        out.push(' ');
                        out.push_str(t);
                    }
                    RuleOutcome::Added(out)
                }
                _ => RuleOutcome::NoOp("need at least two tokens"),
            }
        }
        VariantRule::NameInversion => {
            if name.contains(',') {
                return RuleOutcome::NoOp("name already contains a comma inversion");
            }
            let tokens: Vec<&str> = name.split_whitespace().collect();
            match tokens.split_last() {
                Some((last, rest)) if !rest.is_empty() => {
                    RuleOutcome::Added(format!("{}, {}", last, rest.join(" ")))
                }
                _ => RuleOutcome::NoOp("need at least two tokens"),
            }
        }
        VariantRule::CaseChange => {
            RuleOutcome::NoOp("case folding is handled upstream by normalization")
        }
        VariantRule::DiacriticStrip => {
            RuleOutcome::NoOp("diacritics are stripped upstream by normalization")
        }
        VariantRule::SingleTypo => {
            let chars: Vec<char> = name.chars().collect();
            if chars.is_empty() {
                return RuleOutcome::NoOp("empty name");
            }
            for _ in 0..8 {
                let mut out = chars.clone();
                match rng.random_range(0..4u8) {
                    0 => {
                        // insert
                        let pos = rng.random_range(0..=out.len());
                        let c = (b'a' + rng.random_range(0..26u8)) as char;
                        out.insert(pos, c);
                    }
                    1 => {
                        // delete
                        if out.len() < 2 {
                            continue;
                        }
                        out.remove(rng.random_range(0..out.len()));
                    }
                    2 => {
                        // substitute
                        let pos = rng.random_range(0..out.len());
                        let c = (b'a' + rng.random_range(0..26u8)) as char;
                        out[pos] = c;
                    }
                    _ => {
                        // transpose adjacent
                        if out.len() < 2 {
                            continue;
                        }
                        let pos = rng.random_range(0..out.len() - 1);
                        out.swap(pos, pos + 1);
                    }
                }
                let candidate: String = out.into_iter().collect();
                let renorm = normalize(&candidate).text().to_string();
                if renorm != name && !renorm.is_empty() {
                    return RuleOutcome::Added(renorm);
                }
            }
            RuleOutcome::NoOp("could not produce a distinct typo")
        }
    }
}

/// Add synthetic variants (provenance `synthetic`, with a per-variant audit
/// record) to every entity by applying each rule to each original variant.
/// Per-entity RNG streams derive from the canonical name, so the result is
/// independent of entity order. Returns the entities plus no-op notes.
pub fn augment(
    entities: Vec<NameEntity>,
    rules: &[VariantRule],
    root_seed: u64,
) -> (Vec<NameEntity>, Vec<String>) {
    let mut notes = Vec::new();
    let out = entities
        .into_iter()
        .map(|mut entity| {
            let mut rng =
                seed::rng(seed::derive(root_seed, entity.canonical()) ^ root_seed);
            let originals: Vec<String> =
                entity.variants().iter().map(|v| v.name.clone()).collect();
            let mut extra = Vec::new();
            for name in &originals {
                for &rule in rules {
                    match apply_rule(rule, name, &mut rng) {
                        RuleOutcome::Added(variant) => extra.push(Variant {
                            name: variant,
                            provenance: Provenance::Synthetic,
                            audit: Some(VariantAudit {
                                rule: rule.id().to_string(),
                                from: name.clone(),
                            }),
                        }),
                        RuleOutcome::NoOp(reason) => notes.push(format!(
                            "no-op: rule {} on {:?}: {}",
                            rule.id(),
                            name,
                            reason
                        )),
                    }
                }
            }
            entity.push_variants(extra);
            entity
        })
        .collect();
    (out, notes)
}

/// Entity-level train/test split: no entity's variants leak across sets.
/// `ratio` is the train fraction.
pub fn split(
    entities: &[NameEntity],
    ratio: f64,
    seed_val: u64,
) -> Result<(Vec<NameEntity>, Vec<NameEntity>), DatasetError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::InvalidRatio(ratio));
    }
    let mut order: Vec<usize> = (0..entities.len()).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed_val, "entity-split")));
    let n_train = ((entities.len() as f64) * ratio).round() as usize;
    let train = order[..n_train].iter().map(|&i| entities[i].clone()).collect();
    let test = order[n_train..].iter().map(|&i| entities[i].clone()).collect();
    Ok((train, test))
}

pub mod synthetic;
