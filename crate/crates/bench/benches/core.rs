use std::hint::black_box;
use std::path::PathBuf;

use codm_core::{
    build_brainstorm_seed, build_understanding_prompt, parse_dice, roll_encounter, sample_phrases,
    EncounterTable, KnowledgeBase,
};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn dice(c: &mut Criterion) {
    c.bench_function("parse 3d6+2", |b| {
        b.iter(|| parse_dice(black_box("3d6+2")).unwrap())
    });
    let expr = parse_dice("3d6+2").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.bench_function("roll 3d6+2", |b| b.iter(|| expr.roll(&mut rng)));
}

fn prompts(c: &mut Criterion) {
    let f = fixtures();
    let kb = KnowledgeBase::load(&f.join("monsters"), &f.join("settings")).unwrap();
    let table = EncounterTable::load(&f.join("tables/wilderness.toml"), &kb).unwrap();
    let setting = kb.setting("autumn-forest").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    c.bench_function("roll encounter", |b| {
        b.iter(|| roll_encounter(&table, setting, &kb, &mut rng).unwrap())
    });
    let enc = roll_encounter(&table, setting, &kb, &mut rng).unwrap();
    c.bench_function("understanding prompt", |b| {
        b.iter(|| build_understanding_prompt(black_box(&enc), &kb, &mut rng).unwrap())
    });
    c.bench_function("brainstorm seed", |b| {
        b.iter(|| {
            build_brainstorm_seed(black_box(&enc), &kb, Some("A summary."), &mut rng).unwrap()
        })
    });
    c.bench_function("sample phrases", |b| {
        b.iter(|| sample_phrases(&mut rng).render())
    });
}

criterion_group!(benches, dice, prompts);
criterion_main!(benches);
