mod common;

use std::collections::BTreeSet;

use common::{random_fixture, Fixture, TYPE};
use kbqa_core::kb::{EntityId, KnowledgeBase, Value};
use kbqa_core::sexpr::RelationExpr;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixture(seed: u64) -> Fixture {
    random_fixture(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn all_values(f: &Fixture) -> BTreeSet<Value> {
    let mut out: BTreeSet<Value> = f.triples.iter().map(|t| t.2.clone()).collect();
    out.extend(f.entities.iter().map(|e| Value::entity(e.clone())));
    out.insert(Value::entity("m.absent"));
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn indexes_equal_linear_scan(seed in any::<u64>()) {
        let f = fixture(seed);
        let kb = &f.kb;
        let mut relations: Vec<String> = f.relations();
        relations.push(TYPE.into());
        relations.push("dom.unknown".into());
        let mut subjects = f.entities.clone();
        subjects.push("m.absent".into());
        for s in &subjects {
            for r in &relations {
                let scan: BTreeSet<Value> =
                    f.triples.iter().filter(|t| &t.0 == s && &t.1 == r).map(|t| t.2.clone()).collect();
                prop_assert_eq!(kb.objects_of(s, r), &scan);
            }
        }
        for o in all_values(&f) {
            for r in &relations {
                let scan: BTreeSet<EntityId> =
                    f.triples.iter().filter(|t| &t.1 == r && t.2 == o).map(|t| EntityId::from(t.0.as_str())).collect();
                prop_assert_eq!(kb.subjects_of(r, &o), &scan);
            }
        }
        for e in &subjects {
            let mut scan = BTreeSet::new();
            for (s, r, o) in &f.triples {
                if s == e {
                    scan.insert(RelationExpr::forward(r.as_str().into()));
                }
                if *o == Value::entity(e.clone()) {
                    scan.insert(RelationExpr::inverse(r.as_str().into()));
                }
            }
            // The type relation links entities to classes, not entities.
            let got: BTreeSet<RelationExpr> = kb.relations_of(e).into_iter().collect();
            let scan: BTreeSet<RelationExpr> = scan.into_iter().filter(|r| r.relation.0 != TYPE || !r.inverse).collect();
            prop_assert_eq!(got, scan);
        }
        let mut classes = f.classes.clone();
        classes.push("dom.unknown".into());
        for c in &classes {
            let scan: BTreeSet<EntityId> = f
                .triples
                .iter()
                .filter(|t| t.1 == TYPE && t.2 == Value::class(c.clone()))
                .map(|t| EntityId::from(t.0.as_str()))
                .collect();
            prop_assert_eq!(kb.instances_of(c), &scan);
        }
    }

    #[test]
    fn every_triple_is_reachable_both_ways(seed in any::<u64>()) {
        let f = fixture(seed);
        for (s, r, o) in &f.triples {
            prop_assert!(f.kb.objects_of(s, r).contains(o));
            prop_assert!(f.kb.subjects_of(r, o).contains(&EntityId::from(s.as_str())));
        }
    }

    #[test]
    fn file_round_trip_preserves_every_lookup(seed in any::<u64>()) {
        let f = fixture(seed);
        let (triples, aliases) = f.kb.to_files();
        let back = KnowledgeBase::parse(&triples, &aliases, TYPE, "t", "a").unwrap();
        prop_assert_eq!(back.triples(), f.kb.triples());
        let non_comment = triples.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).count();
        prop_assert_eq!(back.num_triples(), non_comment);
        for e in &f.entities {
            prop_assert_eq!(back.relations_of(e), f.kb.relations_of(e));
        }
    }
}

#[test]
fn repeated_queries_are_stable() {
    let f = fixture(3);
    let first: Vec<_> = f.entities.iter().map(|e| f.kb.relations_of(e)).collect();
    let again: Vec<_> = f.entities.iter().map(|e| f.kb.relations_of(e)).collect();
    assert_eq!(first, again);
}

#[test]
fn music_video_has_director_relation_and_song_does_not() {
    let mut b = KnowledgeBase::builder();
    b.triple("m.video", "mv.directed_by", Value::entity("m.director"))
        .triple("m.song", "music.recording.artist", Value::entity("m.singer"))
        .alias("stronger", "m.video", 10.0)
        .alias("stronger", "m.song", 90.0);
    let kb = b.build().unwrap();
    let directed = RelationExpr::forward("mv.directed_by".into());
    assert!(kb.relations_of("m.video").contains(&directed));
    assert!(!kb.relations_of("m.song").contains(&directed));
    assert!(kb.relations_of("m.nobody").is_empty());
}
