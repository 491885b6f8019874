use super::*;
use crate::gateway::{mock_backend, MockFailure, MockRule, MockScript, RetryPolicy, Transcript};
use crate::plato::{Section, SECTION_HEADINGS};
use proptest::prelude::*;

fn article(keyword: &str, variant: ArticleVariant, discipline: Option<Discipline>, body: &str) -> Article {
    Article {
        keyword: keyword.into(),
        language: "en".into(),
        variant,
        sections: SECTION_HEADINGS
            .iter()
            .map(|h| Section {
                heading: h.to_string(),
                body: if *h == SECTION_HEADINGS[2] { body.to_string() } else { String::new() },
            })
            .collect(),
        provenance: BTreeMap::new(),
        model_name: "m".into(),
        home_course: None,
        discipline,
    }
}

fn judge(script: MockScript) -> Gateway {
    let mut gw = Gateway::with_retry(RetryPolicy::no_backoff());
    gw.register_backend(mock_backend(script).with_id("judge")).unwrap();
    gw
}

fn claims_text(n: usize, wrong: usize) -> (String, String) {
    let body: Vec<String> = (0..n).map(|i| format!("Statement number {i} holds.")).collect();
    let reply: Vec<String> = (0..n)
        .map(|i| {
            let v = if i < wrong { "incorrect" } else { "correct" };
            format!("CLAIM: Statement number {i} holds. VERDICT: {v}")
        })
        .collect();
    (body.join(" "), reply.join("\n"))
}

#[test]
fn knowledge_points_dedup_case_folded() {
    let reply = "1. Alpha\n2. Beta\n3) gamma\n4. ALPHA\n5. Delta\n6. Epsilon\n7. Zeta.";
    let gw = judge(MockScript::constant(reply));
    let a = article("k", ArticleVariant::Plato, None, "Some text.");
    assert_eq!(count_knowledge_points(&a, &gw, "judge").unwrap(), 6);
    let empty = article("k", ArticleVariant::Plato, None, "");
    assert_eq!(count_knowledge_points(&empty, &gw, "judge").unwrap(), 0);
}

#[test]
fn unparseable_list_carries_raw_text() {
    let gw = judge(MockScript::constant("I think there are several points."));
    let a = article("k", ArticleVariant::Plato, None, "Some text.");
    match count_knowledge_points(&a, &gw, "judge") {
        Err(EvalError::Unparseable { raw }) => assert_eq!(raw, "I think there are several points."),
        other => panic!("{other:?}"),
    }
    assert_eq!(parse_knowledge_points("NONE").unwrap().len(), 0);
    assert!(parse_knowledge_points("1.5 is a number").is_err());
}

#[test]
fn ten_claims_two_flagged() {
    let (body, reply) = claims_text(10, 2);
    let gw = judge(MockScript::constant(reply));
    let c = count_factual_errors(&article("k", ArticleVariant::Plato, None, &body), &gw, "judge").unwrap();
    assert_eq!((c.claims, c.errors), (10, 2));
    let (body, reply) = claims_text(4, 0);
    let gw = judge(MockScript::constant(reply));
    let c = count_factual_errors(&article("k", ArticleVariant::Plato, None, &body), &gw, "judge").unwrap();
    assert_eq!((c.claims, c.errors), (4, 0));
}

#[test]
fn claim_absent_from_article_is_discarded_and_audited() {
    let (body, reply) = claims_text(5, 1);
    let reply = format!("1. a point\n{reply}\nCLAIM: The moon is made of cheese. VERDICT: incorrect");
    let gw = judge(MockScript::constant(reply));
    let a = article("k", ArticleVariant::Baseline, None, &body);
    let c = count_factual_errors(&a, &gw, "judge").unwrap();
    assert_eq!((c.claims, c.errors), (5, 1));
    assert_eq!(c.discarded.len(), 1);
    let (_, audit) = evaluate_article(&a, &gw, "judge").unwrap();
    assert_eq!(audit.len(), 1);
    assert!(audit[0].reason.contains("moon is made of cheese"));
}

#[test]
fn claims_without_verdict_are_errors() {
    assert!(matches!(
        parse_claims("CLAIM: a thing is true"),
        Err(EvalError::MissingVerdict { .. })
    ));
    assert!(matches!(
        parse_claims("CLAIM: a thing VERDICT: maybe"),
        Err(EvalError::MissingVerdict { .. })
    ));
    assert!(matches!(parse_claims("all fine"), Err(EvalError::Unparseable { .. })));
    let parsed = parse_claims("1. claim: Water boils. verdict: Correct.\n- CLAIM: Ice is hot. VERDICT: incorrect").unwrap();
    assert_eq!(parsed.len(), 2);
    assert!(parsed[0].correct && !parsed[1].correct);
    assert_eq!(parsed[0].claim, "Water boils.");
}

#[test]
fn containment_ignores_case_whitespace_and_final_period() {
    assert!(claim_in_article("water  BOILS at 100 C.", "We know that Water boils\nat 100 C [S1]."));
    assert!(!claim_in_article("water freezes", "Water boils."));
    assert!(!claim_in_article(".", "anything"));
}

fn transcript_judge(pairs: &[(&Article, &str, &str)]) -> Gateway {
    let mut t = Transcript::default();
    for (a, kp, claims) in pairs {
        t.record(&knowledge_point_request(a), *kp);
        t.record(&claim_request(a), *claims);
    }
    let mut gw = Gateway::with_retry(RetryPolicy::no_backoff());
    gw.register_backend(t.into_spec("judge")).unwrap();
    gw
}

#[test]
fn identical_sets_give_zero_reduction() {
    let (body, reply) = claims_text(10, 3);
    let p = article("Spin", ArticleVariant::Plato, Some(Discipline::Physics), &body);
    let b = Article {
        variant: ArticleVariant::Baseline,
        ..p.clone()
    };
    let gw = transcript_judge(&[(&p, "1. a\n2. b", &reply)]);
    let r = compare(&[p], &[b], &gw, "judge", 2).unwrap();
    assert_eq!(r.reduction_ratio(), Some(0.0));
    assert_eq!(r.rows.len(), 1);
    assert_eq!(r.rows[0].discipline, "physics");
}

#[test]
fn zero_baseline_rate_gives_null_ratio() {
    let (body, reply) = claims_text(3, 0);
    let p = article("Spin", ArticleVariant::Plato, Some(Discipline::Physics), &body);
    let b = article("spin", ArticleVariant::Baseline, None, &body);
    let gw = transcript_judge(&[(&p, "1. a", &reply), (&b, "1. a", &reply)]);
    let r = compare(&[p], &[b], &gw, "judge", 1).unwrap();
    assert_eq!(r.reduction_ratio(), None);
    let json = serde_json::to_value(&r).unwrap();
    assert!(json["overall"]["reduction_ratio"].is_null());
    assert!(r.to_csv().lines().last().unwrap().contains(",,"));
}

#[test]
fn calibrated_pair_halves_the_error_rate() {
    let (pb, pr) = claims_text(10, 1);
    let (bb, br) = claims_text(10, 2);
    let p = article("Spin", ArticleVariant::Plato, Some(Discipline::Physics), &pb);
    let b = article("Spin", ArticleVariant::Baseline, None, &format!("{bb} Extra words here."));
    let gw = transcript_judge(&[(&p, "1. a\n2. b\n3. c", &pr), (&b, "1. a\n2. A", &br)]);
    let r = compare(&[p], &[b], &gw, "judge", 2).unwrap();
    assert!((r.reduction_ratio().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(r.overall.plato.mean_knowledge_points, 3.0);
    assert_eq!(r.overall.baseline.mean_knowledge_points, 1.0);
}

#[test]
fn unpaired_and_duplicate_articles_are_audited() {
    let (body, reply) = claims_text(2, 1);
    let p1 = article("Spin", ArticleVariant::Plato, Some(Discipline::Physics), &body);
    let p2 = article("Orbit", ArticleVariant::Plato, Some(Discipline::Physics), &body);
    let b1 = article("Spin", ArticleVariant::Baseline, None, &body);
    let b3 = article("Ring", ArticleVariant::Baseline, None, &body);
    let gw = transcript_judge(&[(&p1, "1. a", &reply), (&b1, "1. a", &reply)]);
    let r = compare(&[p1.clone(), p2, p1], &[b1, b3], &gw, "judge", 1).unwrap();
    assert_eq!(r.overall.pairs, 1);
    assert_eq!(r.articles.len(), 2);
    let reasons: Vec<_> = r.audit.iter().map(|a| (a.keyword.as_str(), a.reason.as_str())).collect();
    assert!(reasons.iter().any(|(k, why)| *k == "Orbit" && why.contains("no baseline")));
    assert!(reasons.iter().any(|(k, why)| *k == "Ring" && why.contains("no plato")));
    assert!(reasons.iter().any(|(k, why)| *k == "Spin" && why.contains("duplicate")));
    let none = compare(&[], &[], &gw, "judge", 1);
    assert!(matches!(none, Err(EvalError::NoPairs)));
}

#[test]
fn judge_failure_propagates() {
    let gw = judge(MockScript {
        rules: vec![MockRule::failing("", MockFailure::Status(500))],
        ..MockScript::constant("")
    });
    let a = article("k", ArticleVariant::Plato, None, "Text.");
    assert!(matches!(evaluate_article(&a, &gw, "judge"), Err(EvalError::Judge(_))));
}

#[test]
fn reports_round_trip_through_files() {
    let (body, reply) = claims_text(4, 1);
    let p = article("Spin", ArticleVariant::Plato, Some(Discipline::Physics), &body);
    let b = article("Spin", ArticleVariant::Baseline, None, &body);
    let gw = transcript_judge(&[(&p, "1. a", &reply), (&b, "1. a", &reply)]);
    let r = compare(std::slice::from_ref(&p), &[b], &gw, "judge", 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    r.write(dir.path()).unwrap();
    let back: ComparisonReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("comparison.json")).unwrap()).unwrap();
    assert_eq!(back, r);
    assert!(r.table().contains("physics"));
    std::fs::write(dir.path().join("a.json"), serde_json::to_string(&p).unwrap()).unwrap();
    assert!(load_articles(dir.path()).is_err());
    let arts = tempfile::tempdir().unwrap();
    assert!(matches!(load_articles(arts.path()), Err(EvalError::NoArticles(_))));
    std::fs::write(arts.path().join("a.json"), serde_json::to_string(&p).unwrap()).unwrap();
    assert_eq!(load_articles(arts.path()).unwrap(), vec![p]);
}

proptest! {
    #[test]
    fn adding_a_flagged_claim_adds_one_error(n in 1usize..15, wrong in 0usize..15, extra in 0usize..15) {
        let wrong = wrong.min(n);
        let (body, reply) = claims_text(n.max(extra + 1), wrong);
        let a = article("k", ArticleVariant::Plato, None, &body);
        let kp = "1. a\n2. b";
        let gw = transcript_judge(&[(&a, kp, &reply)]);
        let (before, _) = evaluate_article(&a, &gw, "judge").unwrap();
        let flagged = format!("{reply}\nCLAIM: Statement number {extra} holds. VERDICT: incorrect");
        let gw = transcript_judge(&[(&a, kp, &flagged)]);
        let (after, _) = evaluate_article(&a, &gw, "judge").unwrap();
        prop_assert_eq!(after.errors, before.errors + 1);
        prop_assert_eq!(after.claims, before.claims + 1);
        prop_assert!(after.knowledge_points >= before.knowledge_points);
        prop_assert!(after.errors <= after.claims);
        prop_assert!((0.0..=1.0).contains(&after.error_rate));
    }

    #[test]
    fn replayed_judge_matches_live_judge(n in 1usize..12, wrong in 0usize..12) {
        let (body, reply) = claims_text(n, wrong.min(n));
        let a = article("k", ArticleVariant::Plato, None, &body);
        let live = judge(MockScript::constant(format!("1. a\n2. b\n3. a\n{reply}")));
        let (live_r, _) = evaluate_article(&a, &live, "judge").unwrap();
        let replay = transcript_judge(&[(&a, "1. a\n2. b\n3. a", &reply)]);
        let (replay_r, _) = evaluate_article(&a, &replay, "judge").unwrap();
        prop_assert_eq!(live_r.knowledge_points, replay_r.knowledge_points);
        prop_assert_eq!((live_r.claims, live_r.errors), (replay_r.claims, replay_r.errors));
    }
}
