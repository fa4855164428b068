//! Seeded synthetic corpus generator: entities with surface-form variants,
//! an annotated book catalog, per-source fixture tables, and held-out
//! evaluation queries. Used by the offline evaluation suite and the demo
//! fixtures shipped with the CLI.

use rand::Rng;

use crate::dataset::{apply_rule, RuleOutcome, VariantRule};
use crate::record::{AnnotatedBook, BookRecord, NameEntity, Provenance, Variant};
use crate::seed;
use crate::sources::{FixtureSources, SourceId};
use crate::textnorm::normalize;

const FIRST_NAMES: &[&str] = &[
    "Émile", "René", "François", "Zoé", "Agnès", "Benoît", "Cécile", "Dmitri",
    "Elena", "Frederick", "Gabriela", "Henrik", "Isabel", "Joaquín", "Katrin",
    "Lucía", "Miguel", "Nadia", "Olga", "Pedro", "Quentin", "Rosa", "Søren",
    "Tomás", "Ursula", "Viktor", "Wanda", "Xavier", "Yvonne", "Zelda",
    "Albert", "Beatrice", "Carlos", "Dorothea", "Ernest", "Flannery", "George",
    "Harriet", "Ivan", "Jane", "Knut", "Louisa", "Margaret", "Nikolai",
    "Octavia", "Patrick", "Rainer", "Simone", "Thomas", "Umberto", "Virginia",
    "Willa", "Yukio", "Anaïs", "Boris", "Colette", "Dashiell", "Edith",
    "Franz", "Gustave",
];

const MIDDLE_NAMES: &[&str] = &[
    "Scott", "Maria", "Allan", "Ann", "Louise", "James", "Rose", "Lee",
    "Marie", "Paul", "Grace", "Henry", "Jean", "May", "Conan", "Stuart",
];

const LAST_NAMES: &[&str] = &[
    "Zola", "Balzac", "Flaubert", "Maupassant", "Stendhal", "Proust", "Camus",
    "Duras", "Yourcenar", "Colette", "Fitzgerald", "Hemingway", "Faulkner",
    "Steinbeck", "Morrison", "Baldwin", "Cather", "Wharton", "Dreiser",
    "Salinger", "Tolstoy", "Dostoevsky", "Chekhov", "Turgenev", "Gogol",
    "Bulgakov", "Nabokov", "Pasternak", "Akhmatova", "Tsvetaeva", "García",
    "Borges", "Cortázar", "Allende", "Bolaño", "Vargas", "Fuentes", "Paz",
    "Neruda", "Mistral", "Mann", "Hesse", "Kafka", "Rilke", "Brecht", "Böll",
    "Grass", "Zweig", "Musil", "Broch", "Austen", "Brontë", "Dickens",
    "Eliot", "Hardy", "Woolf", "Forster", "Lawrence", "Orwell", "Greene",
    "Lagerlöf", "Hamsun", "Undset", "Ibsen", "Strindberg", "Andersen",
    "Blixen", "Laxness", "Sillanpää", "Linna", "Montalbán", "Saramago",
    "Pessoa", "Queirós", "Machado", "Amado", "Lispector", "Rosa", "Ramos",
    "Andrade", "Tanizaki", "Kawabata", "Mishima", "Soseki", "Akutagawa",
    "Murasaki", "Basho", "Oe", "Abe", "Endo",
];

const TITLE_HEADS: &[&str] = &[
    "The Garden of", "Letters from", "A History of", "The Shadow of",
    "Notes on", "The Return to", "Songs of", "The House of", "Journeys in",
    "The Winter of",
];

const TITLE_TAILS: &[&str] = &[
    "Forgotten Rivers", "the Northern Coast", "Glass and Stone",
    "the Last Harvest", "Distant Lamps", "the Quiet Harbor", "Iron Years",
    "the Paper City", "Salt and Smoke", "the Long Meadow",
];

/// Per-source fixture hit rates, in [`SourceId::ALL`] order. Chosen to give
/// uneven coverage: two sparse national catalogs, a couple of dense
/// community sources, and mid-range commercial APIs.
const SOURCE_HIT_RATES: [f64; 8] = [0.25, 0.36, 0.65, 0.51, 0.52, 0.07, 0.29, 0.08];

#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub n_entities: usize,
    pub books_per_entity: usize,
    /// Fraction of entities that share a surname with another entity whose
    /// first name starts with a different letter (abbreviation-ambiguity
    /// pressure for character-overlap matching).
    pub surname_collision_rate: f64,
    /// Fraction of canonical names present in the reference name list.
    pub reference_coverage: f64,
    /// Fraction of books carrying a valid ISBN.
    pub isbn_rate: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_entities: 500,
            books_per_entity: 2,
            surname_collision_rate: 0.5,
            reference_coverage: 0.85,
            isbn_rate: 0.75,
            seed: 0,
        }
    }
}

/// A held-out matching query: a fresh surface form paired with the
/// canonical name it should resolve to. Never included in the entity's
/// stored variants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalQuery {
    pub query: String,
    pub canonical: String,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub entities: Vec<NameEntity>,
    pub annotated: Vec<AnnotatedBook>,
    pub fixtures: FixtureSources,
    pub reference_names: Vec<String>,
    pub eval_queries: Vec<EvalQuery>,
}

impl SyntheticCorpus {
    /// The unannotated catalog view of the annotated set.
    pub fn books(&self) -> Vec<BookRecord> {
        self.annotated.iter().map(|a| a.record.clone()).collect()
    }
}

/// Full surface name of one entity, kept with case and diacritics so that
/// catalog rows and fixtures exercise normalization.
#[derive(Debug, Clone)]
struct Person {
    surface: String,   // e.g. "Émile Zola"
    canonical: String, // normalized, e.g. "emile zola"
}

fn make_isbn13(counter: usize) -> String {
    let body = format!("978{:09}", 100_000_000 + counter);
    let sum: u32 = body
        .bytes()
        .enumerate()
        .map(|(i, b)| (b - b'0') as u32 * if i % 2 == 0 { 1 } else { 3 })
        .sum();
    format!("{}{}", body, (10 - sum % 10) % 10)
}

fn synth_typo(name: &str, rng: &mut impl Rng) -> String {
    match apply_rule(VariantRule::SingleTypo, name, rng) {
        RuleOutcome::Added(t) => t,
        RuleOutcome::NoOp(_) => name.to_string(),
    }
}

fn abbreviate(name: &str) -> Option<String> {
    let mut rng = seed::rng(0); // rule is deterministic; rng unused by it
    match apply_rule(VariantRule::InitialAbbreviation, name, &mut rng) {
        RuleOutcome::Added(v) => Some(v),
        RuleOutcome::NoOp(_) => None,
    }
}

fn invert(name: &str) -> Option<String> {
    let mut rng = seed::rng(0);
    match apply_rule(VariantRule::NameInversion, name, &mut rng) {
        RuleOutcome::Added(v) => Some(v),
        RuleOutcome::NoOp(_) => None,
    }
}

/// Draw the entity roster: collision pairs share a surname but differ in
/// first initial; the rest get surnames not used by anyone else.
fn draw_people(cfg: &CorpusConfig, rng: &mut impl Rng) -> Vec<Person> {
    let mut people: Vec<Person> = Vec::with_capacity(cfg.n_entities);
    let mut used_names = std::collections::BTreeSet::new();
    let n_pairs = ((cfg.n_entities as f64 * cfg.surname_collision_rate) / 2.0) as usize;
    let mut surname_idx = 0usize;
    let push_person = |first: &str,
                           middle: Option<&str>,
                           last: String,
                           used: &mut std::collections::BTreeSet<String>,
                           people: &mut Vec<Person>|
     -> bool {
        let surface = match middle {
            Some(m) => format!("{} {} {}", first, m, last),
            None => format!("{} {}", first, last),
        };
        let canonical = normalize(&surface).text().to_string();
        if used.insert(canonical.clone()) {
            people.push(Person { surface, canonical });
            true
        } else {
            false
        }
    };
    // surnames cycle through the pool with a numbered suffix once exhausted,
    // so arbitrarily large corpora stay constructible
    let next_surname = |idx: &mut usize| -> String {
        let base = LAST_NAMES[*idx % LAST_NAMES.len()];
        let round = *idx / LAST_NAMES.len();
        *idx += 1;
        if round == 0 {
            base.to_string()
        } else {
            format!("{}{}", base, round + 1)
        }
    };
    for _ in 0..n_pairs {
        let last = next_surname(&mut surname_idx);
        loop {
            let a = FIRST_NAMES[rng.random_range(0..FIRST_NAMES.len())];
            let b = FIRST_NAMES[rng.random_range(0..FIRST_NAMES.len())];
            let ai = normalize(a).text().chars().next();
            let bi = normalize(b).text().chars().next();
            if ai == bi {
                continue;
            }
            let ma = rng
                .random_bool(0.3)
                .then(|| MIDDLE_NAMES[rng.random_range(0..MIDDLE_NAMES.len())]);
            let mb = rng
                .random_bool(0.3)
                .then(|| MIDDLE_NAMES[rng.random_range(0..MIDDLE_NAMES.len())]);
            if push_person(a, ma, last.clone(), &mut used_names, &mut people)
                && push_person(b, mb, last.clone(), &mut used_names, &mut people)
            {
                break;
            }
        }
    }
    while people.len() < cfg.n_entities {
        let last = next_surname(&mut surname_idx);
        loop {
            let first = FIRST_NAMES[rng.random_range(0..FIRST_NAMES.len())];
            let middle = rng
                .random_bool(0.3)
                .then(|| MIDDLE_NAMES[rng.random_range(0..MIDDLE_NAMES.len())]);
            if push_person(first, middle, last.clone(), &mut used_names, &mut people) {
                break;
            }
        }
    }
    people.truncate(cfg.n_entities);
    people
}

/// Stored (training) variants of an entity: canonical, initial
/// abbreviation, inversion, inverted abbreviation, and one seeded typo.
fn entity_variants(canonical: &str, rng: &mut impl Rng) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(abbr) = abbreviate(canonical) {
        out.push(abbr.clone());
        if let Some(inv_abbr) = invert(&abbr) {
            out.push(inv_abbr);
        }
    }
    if let Some(inv) = invert(canonical) {
        out.push(inv);
    }
    out.push(synth_typo(canonical, rng));
    out
}

/// One held-out query, biased toward the forms that stress matching:
/// inverted abbreviations, abbreviations, and fresh typos.
fn eval_query(canonical: &str, rng: &mut impl Rng) -> String {
    let abbr = abbreviate(canonical);
    match rng.random_range(0..10u8) {
        0..=2 => abbr
            .as_deref()
            .and_then(invert)
            .unwrap_or_else(|| canonical.to_string()),
        3..=5 => abbr.unwrap_or_else(|| canonical.to_string()),
        6..=7 => synth_typo(canonical, rng),
        8 => abbr
            .map(|a| synth_typo(&a, rng))
            .unwrap_or_else(|| synth_typo(canonical, rng)),
        _ => invert(canonical).unwrap_or_else(|| canonical.to_string()),
    }
}

/// Pick the surface form written in a catalog row.
fn catalog_author(person: &Person, variants: &[String], rng: &mut impl Rng) -> String {
    match rng.random_range(0..20u8) {
        0..=5 => person.surface.clone(),
        6..=8 => person.surface.to_uppercase(),
        9..=15 => variants[rng.random_range(0..variants.len())].clone(),
        16 => synth_typo(&person.canonical, rng),
        17..=18 => "Unknown".to_string(),
        _ => String::new(),
    }
}

pub fn generate(cfg: &CorpusConfig) -> SyntheticCorpus {
    let mut entities = Vec::with_capacity(cfg.n_entities);
    let mut annotated = Vec::new();
    let mut fixtures = FixtureSources::new();
    let mut reference_names = Vec::new();
    let mut eval_queries = Vec::new();

    let mut roster_rng = seed::rng(seed::derive(cfg.seed, "corpus-roster"));
    let people = draw_people(cfg, &mut roster_rng);
    let mut isbn_counter = 0usize;

    for (pi, person) in people.iter().enumerate() {
        let mut rng =
            seed::rng(seed::derive_indexed(cfg.seed, "corpus-entity", pi as u64));
        let variants = entity_variants(&person.canonical, &mut rng);
        entities.push(NameEntity::new(
            &person.canonical,
            Provenance::NameVariantList,
            variants.iter().map(|name| Variant {
                name: name.clone(),
                provenance: Provenance::NameVariantList,
                audit: None,
            }),
        ));
        if rng.random_bool(cfg.reference_coverage) {
            reference_names.push(person.surface.clone());
        }
        eval_queries.push(EvalQuery {
            query: eval_query(&person.canonical, &mut rng),
            canonical: person.canonical.clone(),
        });

        for b in 0..cfg.books_per_entity {
            let title = format!(
                "{} {} (vol. {})",
                TITLE_HEADS[rng.random_range(0..TITLE_HEADS.len())],
                TITLE_TAILS[rng.random_range(0..TITLE_TAILS.len())],
                b + 1
            );
            let isbn = rng.random_bool(cfg.isbn_rate).then(|| {
                isbn_counter += 1;
                make_isbn13(isbn_counter)
            });
            let author_raw = catalog_author(person, &variants, &mut rng);
            if let Some(isbn13) = &isbn {
                for (si, source) in SourceId::ALL.iter().enumerate() {
                    if !rng.random_bool(SOURCE_HIT_RATES[si]) {
                        continue;
                    }
                    if rng.random_bool(0.02) {
                        fixtures.insert_unavailable(*source, isbn13);
                        continue;
                    }
                    // sources mostly report the canonical form; sometimes a
                    // stored variant; rarely a different author entirely
                    let name = match rng.random_range(0..20u8) {
                        0..=16 => person.surface.clone(),
                        17..=18 => variants[rng.random_range(0..variants.len())].clone(),
                        _ => people[rng.random_range(0..people.len())].surface.clone(),
                    };
                    fixtures.insert(*source, isbn13, &[&name]);
                }
            }
            annotated.push(AnnotatedBook {
                record: BookRecord {
                    isbn,
                    title,
                    author_raw,
                },
                ground_truth: person.surface.clone(),
            });
        }
    }

    SyntheticCorpus {
        entities,
        annotated,
        fixtures,
        reference_names,
        eval_queries,
    }
}
