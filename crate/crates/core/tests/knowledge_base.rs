mod common;

use std::fs;

use codm_core::{KbError, KnowledgeBase};
use common::{fixtures, kb};

fn write(dir: &std::path::Path, name: &str, body: &str) {
    fs::write(dir.join(name), body).unwrap();
}

const GOBLIN: &str = r#"
id = "goblin"
name = "Goblin"
armor_class = 15
hit_points = 7
[ability_scores]
str = 8
dex = 14
con = 10
int = 10
wis = 8
cha = 8
"#;

const CLEARING: &str = r#"
id = "clearing"
name = "Clearing"
description = "A sunny clearing."
"#;

#[test]
fn blink_dog_fields_load_exactly() {
    let kb = kb();
    let m = kb.monster("blink-dog").unwrap();
    assert_eq!(m.name, "Blink Dog");
    assert_eq!(m.armor_class, 13);
    assert_eq!(m.hit_points, 22);
    assert_eq!(m.speeds.get("walk"), Some(&40));
    assert_eq!(m.skills, ["Perception +3", "Stealth +5"]);
    let sylvan = m.languages.iter().find(|l| l.name == "Sylvan").unwrap();
    assert!(sylvan.understands_only);
    assert_eq!(m.ability_score("dex"), Some(17));
}

#[test]
fn empty_monster_dir_with_one_setting() {
    let dir = tempfile::tempdir().unwrap();
    let monsters = dir.path().join("monsters");
    let settings = dir.path().join("settings");
    fs::create_dir_all(&monsters).unwrap();
    fs::create_dir_all(&settings).unwrap();
    write(&settings, "clearing.toml", CLEARING);
    let kb = KnowledgeBase::load(&monsters, &settings).unwrap();
    assert_eq!((kb.monster_count(), kb.setting_count()), (0, 1));
    assert!(matches!(kb.corpus_stats(), Err(KbError::EmptyCorpus)));
}

#[test]
fn duplicate_ids_are_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let monsters = dir.path().join("monsters");
    let settings = dir.path().join("settings");
    fs::create_dir_all(&monsters).unwrap();
    fs::create_dir_all(&settings).unwrap();
    write(&monsters, "a.toml", GOBLIN);
    write(&monsters, "b.toml", GOBLIN);
    let err = KnowledgeBase::load(&monsters, &settings).unwrap_err();
    match &err {
        KbError::DuplicateId { id, .. } => assert_eq!(id, "goblin"),
        other => panic!("unexpected {other:?}"),
    }
    assert!(err.to_string().contains("goblin"));
}

#[test]
fn schema_errors_name_file_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let settings = dir.path().join("settings");
    fs::create_dir_all(&settings).unwrap();

    let cases = [
        (GOBLIN.replace("hit_points = 7\n", ""), "hit_points"),
        (
            GOBLIN.replace("hit_points = 7", "hit_points = \"seven\""),
            "hit_points",
        ),
        (
            GOBLIN.replace("hit_points = 7", "hit_points = 0"),
            "hit_points",
        ),
        (GOBLIN.replace("dex = 14", "dex = 31"), "ability_scores.dex"),
        (GOBLIN.replace("cha = 8\n", ""), "ability_scores.cha"),
        (
            GOBLIN.replace("id = \"goblin\"", "id = \"Goblin Boss\""),
            "id",
        ),
    ];
    for (i, (body, field)) in cases.iter().enumerate() {
        let monsters = dir.path().join(format!("m{i}"));
        fs::create_dir_all(&monsters).unwrap();
        write(&monsters, "goblin.toml", body);
        match KnowledgeBase::load(&monsters, &settings) {
            Err(KbError::Schema {
                file, field: got, ..
            }) => {
                assert!(file.ends_with("goblin.toml"), "{}", file.display());
                assert_eq!(&got, field, "case {i}");
            }
            other => panic!("case {i}: {other:?}"),
        }
    }
}

#[test]
fn loading_twice_is_identical() {
    assert_eq!(kb(), kb());
}

#[test]
fn word_counts() {
    let kb = kb();
    assert_eq!(
        kb.monster("giant-boar").unwrap().description_word_count(),
        0
    );
    let mut owlbear = kb.monster("owlbear").unwrap().clone();
    owlbear.lore = "An owlbear's screech echoes".into();
    owlbear.abilities.clear();
    assert_eq!(owlbear.description_word_count(), 4);
}

#[test]
fn corpus_stats_match_independent_counts() {
    // counted outside the crate: whitespace tokens of lore plus ability text
    let expected = [
        ("blink-dog", 72),
        ("brown-bear", 12),
        ("giant-boar", 0),
        ("owlbear", 62),
        ("snow-golem", 19),
        ("wolf", 51),
    ];
    let kb = kb();
    for (id, n) in expected {
        assert_eq!(kb.monster(id).unwrap().description_word_count(), n, "{id}");
    }
    let stats = kb.corpus_stats().unwrap();
    assert_eq!(stats.count, 6);
    assert_eq!(stats.mean, 36.0);
    assert_eq!((stats.min, stats.max), (0, 72));

    // and a brute-force recount straight from the raw files
    let mut counts = Vec::new();
    for entry in fs::read_dir(fixtures().join("monsters")).unwrap() {
        let raw: toml::Value = fs::read_to_string(entry.unwrap().path())
            .unwrap()
            .parse()
            .unwrap();
        let mut n = raw
            .get("lore")
            .and_then(|v| v.as_str())
            .unwrap_or("")
            .split_whitespace()
            .count();
        if let Some(abilities) = raw.get("abilities").and_then(|v| v.as_array()) {
            for a in abilities {
                n += a["text"].as_str().unwrap().split_whitespace().count();
            }
        }
        counts.push(n);
    }
    let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    assert_eq!(mean, stats.mean);
}
