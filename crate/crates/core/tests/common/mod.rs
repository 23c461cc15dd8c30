#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use storygauge::corpus::{Backlog, UserStory};

const PERSONAS: &[&str] = &["Arzt", "Pflegekraft", "Patient", "Apotheker", "Verwaltungsmitarbeiter", "Therapeut"];
const ACTIONS: &[(&str, &str)] = &[
    ("Medikamente nach Wirkstoff suchen", "Wirkstoffsuche"),
    ("Termine online buchen", "Terminbuchung"),
    ("Laborbefunde einsehen", "Befundansicht"),
    ("Rezepte digital signieren", "Rezeptsignatur"),
    ("Dienstpläne tauschen", "Diensttausch"),
    ("Rechnungen exportieren", "Rechnungsexport"),
    ("Allergien im Profil pflegen", "Allergieprofil"),
    ("Röntgenbilder hochladen", "Bildupload"),
    ("Impfungen dokumentieren", "Impfdokumentation"),
    ("Entlassbriefe versenden", "Entlassbrief"),
];
const REASONS: &[&str] = &[
    "ich schneller verschreiben kann",
    "keine Telefonate nötig sind",
    "Fehler vermieden werden",
    "die Abrechnung korrekt ist",
    "der Patient informiert bleibt",
    "die Station besser planen kann",
];
const CRITERIA: &[&str] = &[
    "Die Suche liefert Treffer in unter zwei Sekunden.",
    "Der Vorgang wird im Protokoll gespeichert.",
    "Eine Bestätigung wird angezeigt.",
    "Ungültige Eingaben werden abgelehnt.",
];
const FILLER: &[&str] = &[
    "Das System",
    "Die Klinik",
    "Eine Übersicht",
    "Der Bereich",
    "Zusätzliche Felder",
    "Mehrere Stationen",
    "Bestehende Daten",
    "Eine spätere Version",
];
const FILLER_TAIL: &[&str] = &[
    "sollte das berücksichtigen",
    "wurde bereits besprochen",
    "ist noch offen",
    "muss geprüft werden",
    "hängt von der Freigabe ab",
];

/// Planted quality levels of a synthetic story.
#[derive(Debug, Clone)]
pub struct SyntheticStory {
    pub id: String,
    pub text: String,
    pub patterns_present: usize,
    pub filler_sentences: usize,
}

/// Stories in the Connextra style with randomly dropped patterns and
/// randomly inflated length.
pub fn synthetic_stories(n: usize, seed: u64) -> Vec<SyntheticStory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let persona = PERSONAS.choose(&mut rng).unwrap();
            let (action, title) = ACTIONS.choose(&mut rng).unwrap();
            let reason = REASONS.choose(&mut rng).unwrap();
            let mut parts = Vec::new();
            let mut present = 2;
            if rng.random_bool(0.7) {
                parts.push(format!("{title}:"));
                present += 1;
            }
            if rng.random_bool(0.7) {
                parts.push(format!("Als {persona} möchte ich {action}, damit {reason}."));
                present += 1;
            } else {
                parts.push(format!("Als {persona} möchte ich {action}."));
            }
            let fillers = if rng.random_bool(0.5) { rng.random_range(0..3) } else { rng.random_range(3..9) };
            for _ in 0..fillers {
                let head = FILLER.choose(&mut rng).unwrap();
                let tail = FILLER_TAIL.choose(&mut rng).unwrap();
                parts.push(format!("{head} {tail}."));
            }
            if rng.random_bool(0.6) {
                parts.push(format!("AK: {}", CRITERIA.choose(&mut rng).unwrap()));
                present += 1;
            }
            if rng.random_bool(0.4) {
                parts.push(format!("Anhang: Entwurf_{}.png", i + 1));
                present += 1;
            }
            SyntheticStory { id: format!("S-{:03}", i + 1), text: parts.join(" "), patterns_present: present, filler_sentences: fillers }
        })
        .collect()
}

pub fn synthetic_backlog(project: &str, n: usize, seed: u64) -> Backlog {
    let stories = synthetic_stories(n, seed).into_iter().map(|s| UserStory::from_text(s.id, &s.text)).collect();
    Backlog::new(project, stories).unwrap()
}

pub fn synthetic_csv(n: usize, seed: u64) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["id", "description"]).unwrap();
    for s in synthetic_stories(n, seed) {
        writer.write_record([&s.id, &s.text]).unwrap();
    }
    String::from_utf8(writer.into_inner().unwrap()).unwrap()
}

/// Roughly `words` words of story text spread over sentences of ten words.
pub fn long_story(words: usize) -> String {
    let vocab = [
        "Arzt", "Medikament", "Station", "Befund", "Termin", "schnell", "sicher", "digital", "Patient", "Rezept",
        "Dienst", "Plan", "Labor", "Bild", "Brief", "prüfen",
    ];
    let mut out = String::from("Als Arzt möchte ich Befunde prüfen, damit nichts verloren geht. ");
    let mut count = 11;
    let mut i = 0;
    while count < words {
        let sentence: Vec<&str> = (0..10).map(|j| vocab[(i * 7 + j * 3) % vocab.len()]).collect();
        out.push_str(&sentence.join(" "));
        out.push_str(". ");
        count += 10;
        i += 1;
    }
    out
}
