//! Acceptance criteria. Each test prints one PASS/FAIL line.
//!
//! Run with `cargo test -p intentkit-core --test acceptance -- --nocapture`
//! to see the lines.

use std::collections::{BTreeSet, HashMap};
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use intentkit_core::cache::JsonCache;
use intentkit_core::costlat::{latency, price, CostTable, LatencyModel, PriceModel, ShapeSpec};
use intentkit_core::eval::{
    bifact, funnel, micro_average, AlignmentCounts, FactJudge, FactSet, FactSource, FunnelReport,
};
use intentkit_core::gateway::{Gateway, RenderedPrompt, ScriptedBackend, StubReply, TemplateId};
use intentkit_core::ingest::{crop_for_web, downsize_android, highlight_element, CropSpec};
use intentkit_core::model::split_platform_prefix;
use intentkit_core::pipeline::{
    build_context_window, build_finetune_dataset, drop_frames, run_method, Backends, RunContext, FREEFORM_FORMAT,
};
use intentkit_core::seed::rng_for;
use intentkit_core::{synthetic, AblationConfig, CallRole, InteractionSummary, Method, PipelineTrace, Rect};
use rand::Rng;

// Tolerances and budgets.
const PRICE_EXACT: f64 = 1e-9;
const LATENCY_TOL: f64 = 0.005;
const BUDGET_COST: Duration = Duration::from_secs(1);
const BUDGET_BIFACT: Duration = Duration::from_secs(5);
const BUDGET_FUNNEL: Duration = Duration::from_secs(5);
const BUDGET_PIPELINE: Duration = Duration::from_secs(10);
const BUDGET_ABLATION: Duration = Duration::from_secs(10);
const BUDGET_PREPROCESS: Duration = Duration::from_secs(5);

fn criterion(n: u32, name: &str, budget: Duration, body: impl FnOnce() -> String) {
    let started = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let elapsed = started.elapsed();
    match outcome {
        Ok(detail) if elapsed <= budget => {
            println!("criterion {n} PASS  {name} ({:.2}s / {:.0}s) {detail}", elapsed.as_secs_f64(), budget.as_secs_f64())
        }
        Ok(_) => {
            println!("criterion {n} FAIL  {name}: took {:.2}s, budget {:.0}s", elapsed.as_secs_f64(), budget.as_secs_f64());
            panic!("criterion {n} over its runtime budget");
        }
        Err(e) => {
            println!("criterion {n} FAIL  {name}");
            resume_unwind(e);
        }
    }
}

fn block_on<F: std::future::Future>(f: F) -> F::Output {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap().block_on(f)
}

#[test]
fn criterion_1_cost_model() {
    criterion(1, "cost model reproduces the published prices", BUDGET_COST, || {
        let m = PriceModel::default();
        for (i, o, want) in [(1839, 20, 191.9), (1961, 127, 246.9), (2009, 514, 406.5), (2103, 622, 459.1)] {
            let got = price(i, o, &m);
            assert!((got - want).abs() < PRICE_EXACT, "price({i}, {o}) = {got}, want {want}");
        }
        let table = CostTable::from_shape(&ShapeSpec::reference(), &m, &LatencyModel::default()).unwrap();
        assert_eq!(table.notes.len(), 1, "{:?}", table.notes);
        assert!(table.notes[0].contains("600") && table.notes[0].contains("459.1"));
        "discrepancy note: 600 vs 459.1".into()
    });
}

#[test]
fn criterion_2_latency_model() {
    criterion(2, "latency model within 0.005 s", BUDGET_COST, || {
        let m = LatencyModel::default();
        assert_eq!((m.ttft, m.output_tokens_per_second), (0.2, 550.0));
        let e2e = latency(20, &m);
        let cot = latency(127, &m);
        assert!((e2e - 0.24).abs() <= LATENCY_TOL, "e2e {e2e}");
        assert!((cot - 0.43).abs() <= LATENCY_TOL, "cot {cot}");
        format!("e2e {e2e:.3}, cot {cot:.3}")
    });
}

/// Judge answering from a fixed truth table keyed by fact text.
fn table_judge(table: HashMap<String, bool>) -> FactJudge {
    let stub = ScriptedBackend::with_responder(Arc::new(move |p: &RenderedPrompt| {
        let yes = table.get(p.variables["fact"].as_str()).copied().unwrap_or(false);
        StubReply::text(if yes { "yes" } else { "no" })
    }));
    FactJudge::new(Gateway::with_stub(Arc::new(stub)), Arc::new(JsonCache::in_memory()))
}

#[test]
fn criterion_3_bifact_arithmetic() {
    criterion(3, "BiFact and micro average match a brute-force oracle", BUDGET_BIFACT, || {
        let mut rng = rng_for(3, &["acceptance", "bifact"]);
        let mut cases = Vec::new();
        let mut table = HashMap::new();
        for ex in 0..200 {
            let np = rng.random_range(0..=6);
            let ng = rng.random_range(0..=6);
            let pred: Vec<String> = (0..np).map(|i| format!("example {ex} predicted fact {i}")).collect();
            let gold: Vec<String> = (0..ng).map(|i| format!("example {ex} gold fact {i}")).collect();
            for f in pred.iter().chain(&gold) {
                table.insert(f.clone(), rng.random_bool(0.5));
            }
            cases.push((gold, pred));
        }
        let judge = table_judge(table.clone());
        let counts: Vec<AlignmentCounts> = block_on(async {
            let mut out = Vec::new();
            for (gold, pred) in &cases {
                let g = FactSet::new(FactSource::Gold, gold);
                let p = FactSet::new(FactSource::Predicted, pred);
                let (scores, alignment) = bifact(&g, &p, &judge).await.unwrap();
                let c = alignment.counts();
                // Oracle: count matches directly from the truth table.
                // An empty side supports nothing on the other side.
                let mp = if gold.is_empty() { 0 } else { pred.iter().filter(|f| table[*f]).count() as u64 };
                let mg = if pred.is_empty() { 0 } else { gold.iter().filter(|f| table[*f]).count() as u64 };
                let (tp, tg) = (pred.len() as u64, gold.len() as u64);
                assert_eq!(c, AlignmentCounts { matched_predicted: mp, total_predicted: tp, matched_gold: mg, total_gold: tg });
                match scores.precision {
                    None => assert_eq!(tp, 0),
                    Some(p) => assert_eq!(p, mp as f64 / tp as f64),
                }
                let (fnum, fden) = c.f1_ratio();
                // F1 = 2PR/(P+R) with P = mp/tp, R = mg/tg, cross-multiplied.
                if tp > 0 && tg > 0 && mp + mg > 0 {
                    let lhs = fnum * (mp as u128 * tg as u128 + mg as u128 * tp as u128);
                    let rhs = fden * 2 * mp as u128 * mg as u128;
                    assert_eq!(lhs, rhs);
                } else {
                    assert_eq!(fnum, 0);
                    assert_eq!(scores.f1, 0.0);
                }
                out.push(c);
            }
            out
        });
        let (smp, stp, smg, stg) = cases.iter().fold((0u64, 0u64, 0u64, 0u64), |acc, (g, p)| {
            (
                acc.0 + if g.is_empty() { 0 } else { p.iter().filter(|f| table[*f]).count() as u64 },
                acc.1 + p.len() as u64,
                acc.2 + if p.is_empty() { 0 } else { g.iter().filter(|f| table[*f]).count() as u64 },
                acc.3 + g.len() as u64,
            )
        });
        let micro = micro_average(&counts).unwrap();
        let total = counts.iter().fold(AlignmentCounts::default(), |a, c| a.add(*c));
        assert_eq!((total.matched_predicted, total.total_predicted, total.matched_gold, total.total_gold), (smp, stp, smg, stg));
        assert_eq!(micro.precision, smp as f64 / stp as f64);
        assert_eq!(micro.recall, smg as f64 / stg as f64);
        format!("200 alignments, micro P={}/{} R={}/{}", smp, stp, smg, stg)
    });
}

fn decomposed_trace(id: &str, pool: &[String], predicted: &[String]) -> PipelineTrace {
    let mut t = PipelineTrace::new(id, Method::Decomposed, AblationConfig::default());
    t.summaries = pool
        .chunks(2)
        .enumerate()
        .map(|(i, c)| InteractionSummary {
            step_index: i as u32 + 1,
            screen_context: Vec::new(),
            user_actions: c.to_vec(),
            speculative_intent: vec!["speculation is never pooled".into()],
            parse_fallback: false,
        })
        .collect();
    t.predicted_intent = Some(intentkit_core::IntentStatement::new(predicted.join(", ")));
    t
}

async fn run_funnel(judge: &FactJudge, pool: &[String], gold: &[String], predicted: &[String]) -> FunnelReport {
    let trace = decomposed_trace("f", pool, predicted);
    let g = judge.decompose(&gold.join(", "), FactSource::Gold).await.unwrap();
    let p = judge.decompose(&predicted.join(", "), FactSource::Predicted).await.unwrap();
    funnel(&trace, &g, &p, judge).await.unwrap().report
}

fn verbatim_judge() -> FactJudge {
    FactJudge::new(Gateway::with_stub(Arc::new(ScriptedBackend::new())), Arc::new(JsonCache::in_memory()))
}

#[test]
fn criterion_4_funnel_partition() {
    criterion(4, "funnel partition laws and hand oracle", BUDGET_FUNNEL, || {
        let judge = verbatim_judge();
        let f = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        // Hand oracle: gold A-F, pool A-D plus X, Y; predicted A, B, X, Z.
        let hand = block_on(run_funnel(
            &judge,
            &f(&["fact a", "fact b", "fact c", "fact d", "fact x", "fact y"]),
            &f(&["fact a", "fact b", "fact c", "fact d", "fact e", "fact f"]),
            &f(&["fact a", "fact b", "fact x", "fact z"]),
        ));
        assert_eq!(
            hand,
            FunnelReport {
                gold_total: 6,
                summarization_miss: 2,
                intent_extraction_miss: 2,
                survived: 2,
                predicted_total: 4,
                intent_extraction_hallucinated: 1,
                summarization_introduced: 1,
                correct: 2,
            }
        );

        let mut rng = rng_for(4, &["acceptance", "funnel"]);
        let reports = block_on(async {
            let mut out = Vec::new();
            for _ in 0..100 {
                let universe: Vec<String> = (0..12).map(|i| format!("fact {i}")).collect();
                let pick = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<String> {
                    universe.iter().filter(|_| rng.random_bool(0.5)).cloned().collect()
                };
                let mut pool = pick(&mut rng);
                if pool.is_empty() {
                    pool.push(universe[0].clone());
                }
                let gold = pick(&mut rng);
                let predicted = pick(&mut rng);
                let r = run_funnel(&judge, &pool, &gold, &predicted).await;
                // Oracle from plain set membership.
                let (ps, gs, qs): (BTreeSet<_>, BTreeSet<_>, BTreeSet<_>) =
                    (pool.iter().collect(), gold.iter().collect(), predicted.iter().collect());
                let miss = gold.iter().filter(|g| !ps.contains(g)).count() as u64;
                let survived = gold.iter().filter(|g| ps.contains(g) && qs.contains(g)).count() as u64;
                let halluc = predicted.iter().filter(|p| !ps.contains(p)).count() as u64;
                let correct = predicted.iter().filter(|p| ps.contains(p) && gs.contains(p)).count() as u64;
                assert_eq!((r.summarization_miss, r.survived, r.intent_extraction_hallucinated, r.correct), (miss, survived, halluc, correct));
                out.push(r);
            }
            out
        });
        for r in &reports {
            assert_eq!(r.gold_total, r.summarization_miss + r.intent_extraction_miss + r.survived);
            assert_eq!(r.predicted_total, r.intent_extraction_hallucinated + r.summarization_introduced + r.correct);
        }
        "hand scenario and 100 randomized traces".into()
    });
}

fn stub_backends() -> (Arc<ScriptedBackend>, Backends) {
    let stub = Arc::new(ScriptedBackend::new());
    (stub.clone(), Backends::single(Gateway::with_stub(stub)))
}

#[test]
fn criterion_5_pipeline_structure() {
    criterion(5, "pipeline structural invariants under the stub", BUDGET_PIPELINE, || {
        let corpus = synthetic::corpus(20, 20, 5);
        assert!(corpus.iter().any(|t| t.steps.len() > 15), "corpus must exercise the cap");
        let cfg = AblationConfig::default();
        let ctx = RunContext::new(".", 17);
        let run_all = |method: Method| {
            let (stub, b) = stub_backends();
            let traces = block_on(async {
                let mut v = Vec::new();
                for t in &corpus {
                    v.push(run_method(t, method, &cfg, &b, &ctx).await.unwrap());
                }
                v
            });
            (stub, traces)
        };
        let (stub, traces) = run_all(Method::Decomposed);
        for (t, tr) in corpus.iter().zip(&traces) {
            let n = t.steps.len().min(15);
            assert_eq!(tr.calls.len(), n + 1, "{}", t.id);
        }
        for req in stub.requests_for(TemplateId::FuseIntent) {
            assert!(!req.text.contains("hidden goal"), "speculation reached stage 2");
        }
        for m in [Method::Cot, Method::E2e] {
            let (_, ts) = run_all(m);
            assert!(ts.iter().all(|t| t.calls.len() == 1));
        }

        let t = synthetic::trajectory("w", 4, 1);
        let first = build_context_window(&t, 1).unwrap();
        assert!(first.previous.is_none() && first.next.unwrap().index == 2);
        let last = build_context_window(&t, 4).unwrap();
        assert!(last.next.is_none() && last.previous.unwrap().index == 3);
        let single = synthetic::trajectory("s", 1, 1);
        let w = build_context_window(&single, 1).unwrap();
        assert!(w.previous.is_none() && w.next.is_none());

        for t in &corpus {
            let d = drop_frames(t, 15, 17);
            assert_eq!(d.steps.len(), t.steps.len().min(15));
            let mut last = 0;
            for s in &d.steps {
                let o = s.original_index.unwrap_or(s.index);
                assert!(o > last);
                last = o;
                assert_eq!(t.steps[o as usize - 1].action, s.action);
            }
        }

        let (_, again) = run_all(Method::Decomposed);
        let a = serde_json::to_string(&traces).unwrap();
        let b = serde_json::to_string(&again).unwrap();
        assert_eq!(a, b, "two runs with equal seeds differ");
        "20 trajectories".into()
    });
}

#[test]
fn criterion_6_ablation_flags() {
    criterion(6, "ablation flags change exactly what they claim", BUDGET_ABLATION, || {
        let corpus = synthetic::corpus(3, 5, 6);
        let ctx = RunContext::new(".", 1);

        let (stub, b) = stub_backends();
        let cfg = AblationConfig { use_context_window: false, ..Default::default() };
        block_on(async {
            for t in &corpus {
                run_method(t, Method::Decomposed, &cfg, &b, &ctx).await.unwrap();
            }
        });
        for r in stub.requests_for(TemplateId::Summarize) {
            assert_eq!(r.images.len(), 1);
            assert!(r.variables["previous"].is_empty() && r.variables["next"].is_empty());
        }

        let (stub, b) = stub_backends();
        let cfg = AblationConfig { structured_summaries: false, ..Default::default() };
        let traces = block_on(async {
            let mut v = Vec::new();
            for t in &corpus {
                v.push(run_method(t, Method::Decomposed, &cfg, &b, &ctx).await.unwrap());
            }
            v
        });
        for s in traces.iter().flat_map(|t| &t.summaries) {
            assert!(s.screen_context.is_empty() && s.speculative_intent.is_empty());
            assert_eq!(s.user_actions.len(), 1);
        }
        assert!(stub.requests_for(TemplateId::Summarize).iter().all(|r| r.variables["format"] == FREEFORM_FORMAT));
        for t in &traces {
            assert_eq!(t.calls_with_role(CallRole::Summarize).count(), t.summaries.len());
        }

        let (stub, b) = stub_backends();
        stub.script(TemplateId::RefineLabel, None, None, vec![StubReply::text("something else")]);
        let cfg = AblationConfig { refine_labels: false, ..Default::default() };
        let build = block_on(build_finetune_dataset(&corpus, &cfg, &b, &ctx, 2));
        assert_eq!(build.examples.len(), corpus.len());
        for (e, t) in build.examples.iter().zip(&corpus) {
            assert_eq!(e.target, t.gold_intent);
        }
        assert!(stub.requests_for(TemplateId::RefineLabel).is_empty());
        "no-context, unstructured, no-refine".into()
    });
}

fn flat(w: u32, h: u32, v: u8) -> image::RgbImage {
    image::RgbImage::from_raw(w, h, vec![v; (w * h * 3) as usize]).unwrap()
}

const LABELS: [(&str, Option<&str>, &str); 20] = [
    ("DoorDash; Order a large pepperoni pizza", Some("DoorDash"), "Order a large pepperoni pizza"),
    ("exploretock; Book a table for two", Some("exploretock"), "Book a table for two"),
    ("Gmail; Send an email to Alex; mention the budget", Some("Gmail"), "Send an email to Alex; mention the budget"),
    ("Find cheap flights to Boston", None, "Find cheap flights to Boston"),
    ("amazon;Buy socks", None, "amazon;Buy socks"),
    ("  Spotify;  Play jazz  ", Some("Spotify"), "Play jazz"),
    ("Google Maps; Get directions to the museum", Some("Google Maps"), "Get directions to the museum"),
    ("Uber; Request a ride home", Some("Uber"), "Request a ride home"),
    ("Expedia; Search hotels in Rome; June 3-5", Some("Expedia"), "Search hotels in Rome; June 3-5"),
    ("YouTube; Watch a cooking video", Some("YouTube"), "Watch a cooking video"),
    ("Settings; Turn on dark mode", Some("Settings"), "Turn on dark mode"),
    ("Check the weather for tomorrow", None, "Check the weather for tomorrow"),
    ("Zillow; Browse 2-bedroom apartments", Some("Zillow"), "Browse 2-bedroom apartments"),
    ("Etsy; Favorite a handmade mug", Some("Etsy"), "Favorite a handmade mug"),
    ("Calendar; Add a dentist appointment on Friday", Some("Calendar"), "Add a dentist appointment on Friday"),
    ("ikea; Add an Adirondack chair to the cart", Some("ikea"), "Add an Adirondack chair to the cart"),
    ("Reddit; Upvote the top post", Some("Reddit"), "Upvote the top post"),
    ("Duolingo; Finish a Spanish lesson", Some("Duolingo"), "Finish a Spanish lesson"),
    ("Walmart; Reorder paper towels", Some("Walmart"), "Reorder paper towels"),
    ("Kayak; Compare car rentals in Denver", Some("Kayak"), "Compare car rentals in Denver"),
];

#[test]
fn criterion_7_preprocessing() {
    criterion(7, "preprocessing: prefixes, downsize, crop, highlight", BUDGET_PREPROCESS, || {
        for (label, prefix, body) in LABELS {
            let s = split_platform_prefix(label).unwrap();
            assert_eq!(s.platform_prefix.as_deref(), prefix, "{label}");
            assert_eq!(s.text, body, "{label}");
        }
        assert!(split_platform_prefix("DoorDash; ").is_err());
        let mut s = split_platform_prefix("DoorDash; Order a pizza on DoorDash").unwrap();
        assert_eq!(s.eval_text(), "Order a pizza");
        s.platform_prefix = None;
        assert_eq!(s.eval_text(), "Order a pizza on DoorDash");

        let phone = flat(1080, 2400, 30);
        assert_eq!(downsize_android(&phone).unwrap().dimensions(), (270, 600));

        let mut rng = rng_for(7, &["acceptance", "crop"]);
        for i in 0..30 {
            let (w, h) = (rng.random_range(600..2400u32), rng.random_range(400..3000u32));
            let page = flat(w, h, 200);
            let bw = rng.random_range(1..600i64);
            let bh = rng.random_range(1..300i64);
            let bbox = Rect::new(rng.random_range(0..w as i64 - 1), rng.random_range(0..h as i64 - 1), bw, bh);
            let c = crop_for_web(&page, bbox, &CropSpec::web(i)).unwrap();
            assert_eq!(c.image.dimensions(), (1280, 768));
            let visible = bbox.intersection(&Rect::new(0, 0, w as i64, h as i64)).unwrap();
            if visible.width <= 1280 && visible.height <= 768 {
                assert!(Rect::new(0, 0, 1280, 768).contains_rect(&c.bbox_in_crop), "{bbox:?} in {w}x{h}");
            }
            let again = highlight_element(&page, bbox).unwrap();
            assert_eq!(highlight_element(&page, bbox).unwrap(), again);
        }
        "20 labels, 30 crops".into()
    });
}

#[test]
fn criterion_8_non_reproducibility() {
    criterion(8, "published quality scores are out of scope; schema smoke only", Duration::from_secs(120), || {
        let Ok(path) = std::env::var("INTENTKIT_LIVE_CONFIG") else {
            return "(quality scores need fine-tuned models and live judges; live smoke skipped, INTENTKIT_LIVE_CONFIG unset)".into();
        };
        let cfg: intentkit_core::gateway::BackendConfig =
            toml::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let base = std::path::Path::new(&path).parent().unwrap().to_path_buf();
        let (gw, _) = cfg.build(&base).unwrap();
        let t = synthetic::trajectory("live", 2, 1);
        let trace = block_on(run_method(&t, Method::Decomposed, &AblationConfig::default(), &Backends::single(gw), &RunContext::new(".", 0)))
            .unwrap();
        let json = serde_json::to_string(&trace).unwrap();
        let back: PipelineTrace = serde_json::from_str(&json).unwrap();
        assert_eq!(back.calls.len(), 3);
        assert!(!back.predicted_intent.unwrap().text.is_empty());
        "(live smoke: trace schema valid; scores not checked)".into()
    });
}
