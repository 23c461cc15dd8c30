mod common;

use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use storygauge::corpus::{clean_text, export_csv, import_csv, Backlog, ImportMapping, PatternFields, UserStory};
use storygauge::evalstats::{iqr_outliers, standardized_ols, weighted_kappa, Design, Weighting};
use storygauge::glossary::{
    build_domain_glossary, builtin_stop_words, compute_corpus_stats, CorpusStats, Glossary, GlossaryConfig,
    GlossarySource, WordList,
};
use storygauge::interpret::{band_of, compute_percentiles, quantile_sorted};
use storygauge::metrics::{
    customer_speak, easy_language, format_complete, independent, sparse_score, Metric, ReadabilityProfile,
};
use storygauge::models::{cosine_similarity, fit_topics_traced, topic_probabilities, DocumentVector, SparseVector, TfIdfModel};
use storygauge::pipeline::{score_raw, train, ModelBundle, ProjectConfig, StoryInput};
use storygauge::textproc::{count_syllables, split_sentences, tokenize};

fn bundle() -> &'static ModelBundle {
    static BUNDLE: OnceLock<ModelBundle> = OnceLock::new();
    BUNDLE.get_or_init(|| train(&common::synthetic_backlog("props", 40, 3), &ProjectConfig::default()).unwrap())
}

const WORDS: &[&str] = &[
    "Arzt", "rezept", "Termin", "und", "die", "Station", "E-Rezept", "Labor", "z. B.", "2.5", "Haus", "Baum",
    "möchte", "damit", "Als", "AK:", "Anhang:", "Übersicht", "Qualität", "ich",
];

fn story_text() -> impl Strategy<Value = String> {
    prop::collection::vec((prop::sample::select(WORDS), prop::sample::select(&[" ", " ", ". ", ", ", "! ", "\n"][..])), 0..40)
        .prop_map(|parts| parts.into_iter().map(|(w, sep)| format!("{w}{sep}")).collect())
}

fn sparse_vector(dim: usize) -> impl Strategy<Value = SparseVector> {
    prop::collection::vec((0..dim, 0.0f64..5.0), 1..8).prop_map(move |e| SparseVector::from_entries(dim, e))
}

fn vowel_count(word: &str) -> usize {
    word.to_lowercase().chars().filter(|c| "aeiouäöüy".contains(*c)).count()
}

fn strip_ws(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

proptest! {
    #[test]
    fn clean_text_is_idempotent(raw in "\\PC{0,80}|[<>{}&;a-z \\t\\n]{0,80}") {
        let once = clean_text(&raw);
        prop_assert_eq!(clean_text(&once), once);
    }

    #[test]
    fn parsed_patterns_are_substrings_of_raw_text(text in story_text()) {
        let story = UserStory::from_text("p", &text);
        let mut pieces = vec![&story.title, &story.persona, &story.what, &story.why];
        pieces.extend(story.acceptance_criteria.iter());
        pieces.extend(story.attachments.iter());
        for piece in pieces {
            prop_assert!(story.raw_text.contains(piece.as_str()), "{piece:?} not in {:?}", story.raw_text);
        }
    }

    #[test]
    fn syllables_between_one_and_vowel_count(word in "[a-zA-ZäöüÄÖÜß]{1,16}") {
        let n = count_syllables(&word);
        prop_assert!(n >= 1);
        prop_assert!(n <= vowel_count(&word).max(1));
    }

    #[test]
    fn sentences_cover_text(text in story_text().prop_filter("non-blank", |t| !t.trim().is_empty())) {
        let sentences = split_sentences(&text);
        prop_assert!(!sentences.is_empty());
        prop_assert_eq!(strip_ws(&sentences.concat()), strip_ws(&text));
    }

    #[test]
    fn tokenize_is_deterministic_and_ranges_partition_tokens(text in story_text()) {
        let a = tokenize(&text);
        prop_assert_eq!(&a, &tokenize(&text));
        let mut next = 0;
        for range in &a.sentences {
            prop_assert!(!range.is_empty());
            prop_assert_eq!(range.start, next);
            next = range.end;
        }
        prop_assert_eq!(next, a.tokens.len());
        for w in &a.unique_words {
            prop_assert!(a.tokens.iter().any(|t| &t.to_lowercase() == w));
        }
    }

    #[test]
    fn cosine_is_symmetric(a in sparse_vector(12), b in sparse_vector(12)) {
        let ab = cosine_similarity(&a, &b).unwrap();
        let ba = cosine_similarity(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn topic_probabilities_form_a_distribution(text in story_text()) {
        let b = bundle();
        let p = topic_probabilities(&b.topics, &b.tfidf.vectorize(&text));
        prop_assert_eq!(p.len(), b.topics.k);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn every_metric_in_unit_interval(text in story_text()) {
        let scores = score_raw(bundle(), &StoryInput::text(text));
        prop_assert_eq!(scores.outcomes.len(), 8);
        for o in &scores.outcomes {
            let v = o.value.unwrap();
            prop_assert!((0.0..=1.0).contains(&v), "{:?} = {}", o.metric, v);
        }
    }

    #[test]
    fn quartiles_ordered_and_permutation_invariant(
        values in prop::collection::vec(-1e6f64..1e6, 1..60).prop_shuffle(),
    ) {
        let q = compute_percentiles(&values).unwrap();
        prop_assert!(q.q25 <= q.q50 && q.q50 <= q.q75);
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(compute_percentiles(&sorted).unwrap(), q);
    }

    #[test]
    fn bands_are_monotone(values in prop::collection::vec(0.0f64..1.0, 1..30), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let q = compute_percentiles(&values).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(band_of(lo, &q) <= band_of(hi, &q));
    }

    #[test]
    fn filling_a_pattern_never_lowers_format_complete(mask in 0u8..64, extra in 0usize..6) {
        let build = |m: u8| {
            let f = |bit: u8, s: &str| if m & (1 << bit) != 0 { s.to_owned() } else { String::new() };
            let fields = PatternFields {
                title: f(0, "Suche"),
                persona: f(1, "Arzt"),
                what: f(2, "suchen"),
                why: f(3, "schneller"),
                acceptance_criteria: if m & 16 != 0 { vec!["Treffer".into()] } else { vec![] },
                attachments: if m & 32 != 0 { vec!["a.png".into()] } else { vec![] },
            };
            let mut story = UserStory { id: "x".into(), raw_text: "x".into(), ..Default::default() };
            story.set_patterns(fields);
            format_complete(&story).value
        };
        prop_assert!(build(mask | (1 << extra)) >= build(mask));
        prop_assert!((build(mask) - f64::from(mask.count_ones()) / 6.0).abs() < 1e-12);
    }

    #[test]
    fn adding_a_story_word_to_lists_never_lowers_overlap(text in story_text(), pick in any::<prop::sample::Index>()) {
        let story = UserStory { id: "x".into(), raw_text: text.clone(), ..Default::default() };
        let words: Vec<String> = tokenize(&text).unique_words.into_iter().collect();
        prop_assume!(!words.is_empty());
        let word = pick.get(&words).clone();
        let mut glossary = Glossary::default();
        glossary.insert("arzt", GlossarySource::Tfidf);
        let before = customer_speak(&story, &glossary).value;
        glossary.insert(word.clone(), GlossarySource::Entity);
        prop_assert!(customer_speak(&story, &glossary).value >= before);

        let easy = WordList::parse("haus\nbaum\n");
        let before = easy_language(&story, &easy).value;
        let easy = WordList::parse(&format!("haus\nbaum\n{word}\n"));
        prop_assert!(easy_language(&story, &easy).value >= before);
    }

    #[test]
    fn duplicate_in_backlog_never_raises_independent(text in story_text()) {
        let b = bundle();
        let story = UserStory { id: "new".into(), raw_text: text.clone(), ..Default::default() };
        let before = independent(&story, &b.tfidf).unwrap().value;
        let mut tfidf: TfIdfModel = b.tfidf.clone();
        tfidf.document_vectors.push(DocumentVector { id: "dup".into(), vector: b.tfidf.vectorize(&text) });
        prop_assert!(independent(&story, &tfidf).unwrap().value <= before + 1e-12);
    }

    #[test]
    fn tent_peaks_exactly_at_mean(min in 0usize..20, span_low in 0usize..20, span_high in 0usize..20) {
        let mean = min + span_low;
        let max = mean + span_high;
        for n in min..=max {
            let s = sparse_score(n as f64, min as f64, mean as f64, max as f64);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s == 1.0, n == mean);
        }
    }

    #[test]
    fn readable_strictly_decreasing_in_asw(a in 0.5f64..6.0, d in 1e-3f64..3.0, asl in 0.5f64..60.0) {
        for profile in [ReadabilityProfile::Flesch, ReadabilityProfile::German] {
            prop_assert!(profile.raw(a + d, asl) < profile.raw(a, asl));
        }
    }

    #[test]
    fn r_squared_invariant_under_affine_rescaling(seed in any::<u64>(), scale in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0], shift in -100.0f64..100.0) {
        let (columns, y) = random_regression(seed, 40, 3);
        let base = standardized_ols(&Design::unnamed(columns.clone()).unwrap(), &y, 0.05, 4.0).unwrap();
        let mut rescaled = columns;
        rescaled[1] = rescaled[1].iter().map(|v| v * scale + shift).collect();
        let moved = standardized_ols(&Design::unnamed(rescaled).unwrap(), &y, 0.05, 4.0).unwrap();
        prop_assert!((base.r_squared - moved.r_squared).abs() < 1e-9);
        prop_assert!((base.predictors[1].beta.abs() - moved.predictors[1].beta.abs()).abs() < 1e-9);
    }

    #[test]
    fn noise_predictor_never_lowers_r_squared(seed in any::<u64>()) {
        let (mut columns, y) = random_regression(seed, 30, 2);
        let base = standardized_ols(&Design::unnamed(columns.clone()).unwrap(), &y, 0.05, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        columns.push((0..30).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect());
        let more = standardized_ols(&Design::unnamed(columns).unwrap(), &y, 0.05, 4.0).unwrap();
        prop_assert!(more.r_squared >= base.r_squared - 1e-12);
        prop_assert!((0.0..=1.0).contains(&more.r_squared));
        for p in &more.predictors {
            prop_assert!(p.vif.as_ref().unwrap().value >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn kappa_is_symmetric(pairs in prop::collection::vec((1u8..=5, 1u8..=5), 2..40)) {
        let (a, b): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        for w in [Weighting::Quadratic, Weighting::Linear] {
            match (weighted_kappa(&a, &b, w), weighted_kappa(&b, &a, w)) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12),
                (Err(x), Err(y)) => prop_assert_eq!(x, y),
                other => prop_assert!(false, "asymmetric outcome {:?}", other),
            }
        }
    }

    #[test]
    fn iqr_keeps_the_interquartile_range(values in prop::collection::vec(-1e3f64..1e3, 4..50), factor in 0.0f64..3.0) {
        let keep = iqr_outliers(&values, factor).unwrap();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let (q25, q75) = (quantile_sorted(&sorted, 0.25), quantile_sorted(&sorted, 0.75));
        for (v, k) in values.iter().zip(keep) {
            if (q25..=q75).contains(v) {
                prop_assert!(k);
            }
        }
    }

    #[test]
    fn glossary_and_stats_invariants(seed in 0u64..1000, n in 3usize..25) {
        let backlog = common::synthetic_backlog("g", n, seed);
        let tfidf = TfIdfModel::fit(&backlog, 1).unwrap();
        let config = GlossaryConfig { top_n: 30, min_len: 4 };
        let glossary = build_domain_glossary(&backlog, &tfidf, &config, builtin_stop_words()).unwrap();
        prop_assert_eq!(&glossary, &build_domain_glossary(&backlog, &tfidf, &config, builtin_stop_words()).unwrap());
        for term in glossary.words() {
            prop_assert!(term.chars().count() >= 4 && !builtin_stop_words().contains(term));
            prop_assert_eq!(term.to_lowercase(), term);
        }
        let stats: CorpusStats = compute_corpus_stats(&backlog).unwrap();
        prop_assert!(stats.words_min as f64 <= stats.words_mean && stats.words_mean <= stats.words_max as f64);
        prop_assert!(stats.sentences_min as f64 <= stats.sentences_mean && stats.sentences_mean <= stats.sentences_max as f64);
        prop_assert!(stats.mf > 0.0);
    }

    #[test]
    fn kmeans_objective_never_increases(seed in any::<u64>(), n in 6usize..30, k in 2usize..5) {
        let backlog = common::synthetic_backlog("k", n, seed % 500);
        let tfidf = TfIdfModel::fit(&backlog, 1).unwrap();
        let (model, trace) = fit_topics_traced(&tfidf, &backlog, k, seed, 0.2).unwrap();
        for pair in trace.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-9, "{trace:?}");
        }
        for c in &model.centroids {
            prop_assert!((c.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-9);
        }
        prop_assert_eq!(model, fit_topics_traced(&tfidf, &backlog, k, seed, 0.2).unwrap().0);
    }

    #[test]
    fn csv_round_trip_keeps_ids_and_text(seed in 0u64..1000, n in 1usize..20) {
        let backlog: Backlog = common::synthetic_backlog("rt", n, seed);
        let mapping = ImportMapping::default();
        let bytes = export_csv(&backlog, &mapping).unwrap();
        let back = import_csv(&bytes, &mapping, "rt").unwrap().backlog;
        let ids = |b: &Backlog| b.stories.iter().map(|s| (s.id.clone(), s.raw_text.clone())).collect::<Vec<_>>();
        prop_assert_eq!(ids(&back), ids(&backlog));
    }
}

fn random_regression(seed: u64, n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let columns: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| normal.sample(&mut rng)).collect()).collect();
    let y = (0..n).map(|i| columns.iter().enumerate().map(|(j, c)| (j as f64 + 1.0) * c[i]).sum::<f64>() + normal.sample(&mut rng)).collect();
    (columns, y)
}

#[test]
fn metric_order_is_canonical() {
    let names: Vec<&str> = Metric::ALL.iter().map(|m| m.name()).collect();
    assert_eq!(
        names,
        ["format_complete", "readable", "customer_speak", "small", "independent", "word_sparse", "sentence_sparse", "easy_language"]
    );
}
