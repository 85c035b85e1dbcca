//! End-to-end acceptance checks. Each test builds its own data from fixed
//! seeds and prints the measured numbers; run with `--nocapture` to see them.

use std::collections::HashMap;
use std::fs;

use rand::seq::SliceRandom;
use rand::Rng;

use diffplan_cli::{cmd_run, Options};
use diffplan_core::dialogue::{encode_text, Side};
use diffplan_core::diffusion::{DenoiserConfig, DenoiserModel, InpaintingCondition, NoiseSchedule, PinSource};
use diffplan_core::env::negotiation::{NegotiationEnv, NegotiationScenario, OpponentPolicy};
use diffplan_core::env::suite::{builtin_suites, Suite};
use diffplan_core::env::{env_step, generate_corpus, Environment, RewardConfig};
use diffplan_core::episode::{planner_seed, run_episode, Planner, RandomPlanner};
use diffplan_core::guidance::{
    word::marker_scaffold, mbr_decode, optimality_filter, plan, sample_dialogue, search_condition, semantic_level_condition,
    word_level_condition, DiffusionPlanner, GuidanceError, GuidanceMode, KeywordPlacement, MBRCandidate,
    OptimalityPredicate, PlannerConfig, SearchConfig, SemanticRegion, TraceRecord,
};
use diffplan_core::metrics::{
    average_turn, keyword_coverage_ratio, keyword_order_distance, levenshtein, sell_to_list_ratio, success_rate,
    token_f1, Outcome, TurnConvention,
};
use diffplan_core::{parallel, seed, DialogueAction, DialogueState, Role, TargetKind, TokenId, Trajectory, Vocabulary};

fn suite(id: &str) -> Suite {
    builtin_suites().into_iter().find(|s| s.id == id).unwrap()
}

fn trained(suite: &Suite, size: usize, mix: f64, vocab: &Vocabulary) -> DenoiserModel {
    let corpus = generate_corpus(suite, vocab, size, mix, 7).unwrap();
    let trajs: Vec<Trajectory> = corpus.iter().map(|r| r.trajectory().unwrap()).collect();
    DenoiserModel::train(&trajs, vocab, DenoiserConfig::new(suite.canvas_len().unwrap()), "acceptance").unwrap()
}

fn opened(env: &dyn Environment, seed: u64) -> DialogueState {
    let opening = DialogueAction::new(TokenId::SYS, Vec::new());
    env_step(env, &DialogueState::initial(), &opening, seed).unwrap().0
}

fn assert_pins_kept(cond: &InpaintingCondition, canvas: &[TokenId]) -> usize {
    for (slot, pin) in cond.iter() {
        assert_eq!(canvas[slot], pin.token, "pin at slot {slot} overwritten");
    }
    cond.len()
}

#[test]
fn pins_survive_sampling() {
    let v = Vocabulary::standard();
    let schedule = NoiseSchedule::new(32).unwrap();
    let mut samples = 0;
    let mut pins = 0;

    // word level: keyword chain
    let kw = suite("keyword-chain");
    let model = trained(&kw, 2000, 0.5, &v);
    for s in 0..334u64 {
        let env = kw.environment(s, &v).unwrap();
        let TargetKind::KeywordSequence(words) = &env.target().kind else { unreachable!() };
        let placement = KeywordPlacement::default();
        let cond = word_level_condition(words, &placement, env.layout(), env.t_max()).unwrap();
        let last = placement.positions(words.len(), env.t_max()).unwrap().last().unwrap().0;
        let full = cond
            .merged(&marker_scaffold(env.layout(), 0, last, PinSource::Word))
            .unwrap();
        let out = sample_dialogue(&model, &full, &schedule, s).unwrap();
        pins += assert_pins_kept(&full, &out.canvas);
        samples += 1;
    }

    // semantic level: recommendation, one sample per alternative
    let rec = suite("recommendation");
    let model = trained(&rec, 2000, 0.5, &v);
    let mut s = 0u64;
    while samples < 667 {
        let env = rec.environment(s, &v).unwrap();
        let TargetKind::SemanticState(alts) = &env.target().kind else { unreachable!() };
        let region = SemanticRegion {
            turn: 1 + (s as usize % (env.t_max() - 1)),
            side: Side::System,
            offset: 0,
        };
        let conds = semantic_level_condition(alts, region, env.layout(), env.t_max(), env.semantic_pad()).unwrap();
        for (i, c) in conds.iter().enumerate() {
            let full = c
                .merged(&marker_scaffold(env.layout(), 0, region.turn, PinSource::Semantic))
                .unwrap();
            let out = sample_dialogue(&model, &full, &schedule, seed::derive(s, i as u64)).unwrap();
            pins += assert_pins_kept(&full, &out.canvas);
            samples += 1;
        }
        s += 1;
    }

    // search: history plus a tag at the current turn
    let neg = suite("negotiation-buyer");
    let model = trained(&neg, 2000, 0.5, &v);
    let mut s = 0u64;
    while samples < 1000 {
        let env = neg.environment(s, &v).unwrap();
        let mut state = opened(env.as_ref(), s);
        let mut rng = seed::rng(s);
        // walk a few random turns so the pinned history varies in length
        for _ in 0..rng.gen_range(0..4) {
            if env.legal_actions(&state).is_empty() {
                break;
            }
            let a = env.random_action(&state, &mut rng);
            let (next, _, done) = env_step(env.as_ref(), &state, &a, rng.gen()).unwrap();
            if done {
                break;
            }
            state = next;
        }
        let legal = env.legal_actions(&state);
        if !legal.is_empty() {
            let tag = *legal.choose(&mut rng).unwrap();
            let cond = search_condition(&state.prefix, env.layout(), state.turn, Some(tag)).unwrap();
            let out = sample_dialogue(&model, &cond, &schedule, s).unwrap();
            pins += assert_pins_kept(&cond, &out.canvas);
            samples += 1;
        }
        s += 1;
    }
    println!("{samples} samples, {pins} pinned tokens, all preserved");
    assert_eq!(samples, 1000);
}

/// Two disjoint dialogue styles mixed 70/30. Every act word sits at a
/// single canvas position so the window likelihoods see no cross-slot
/// aliasing.
fn two_cluster_corpus(v: &Vocabulary, n: usize) -> (Vec<Trajectory>, Vec<bool>) {
    let mut rng = seed::rng(99);
    let topics = ["coffee", "tea", "music"];
    let mut trajs = Vec::new();
    let mut is_a = Vec::new();
    for _ in 0..n {
        let a = rng.gen_bool(0.7);
        let turns: Vec<(String, String)> = if a {
            let w = topics.choose(&mut rng).unwrap();
            let w2 = topics.choose(&mut rng).unwrap();
            vec![
                (format!("chat {w}"), format!("ack {w}")),
                (format!("ask {w2}"), format!("share {w2}")),
            ]
        } else {
            let k = rng.gen_range(3..6);
            let c = k + rng.gen_range(6..9);
            vec![
                (format!("propose p{k:02}"), format!("counter p{c:02}")),
                (format!("agree p{c:02}"), format!("accept p{c:02}")),
            ]
        };
        let pairs: Vec<(&str, &str)> = turns.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        trajs.push(encode_text(&pairs, v).unwrap());
        is_a.push(a);
    }
    (trajs, is_a)
}

fn unigram(trajs: &[&[TokenId]]) -> HashMap<TokenId, f64> {
    let mut m = HashMap::new();
    let mut n = 0.0;
    for t in trajs {
        for &x in t.iter().filter(|x| !x.is_reserved()) {
            *m.entry(x).or_insert(0.0) += 1.0;
            n += 1.0;
        }
    }
    m.values_mut().for_each(|c| *c /= n);
    m
}

#[test]
fn unconditional_samples_match_corpus() {
    let v = Vocabulary::standard();
    let (corpus, is_a) = two_cluster_corpus(&v, 4000);
    let model = DenoiserModel::train(&corpus, &v, DenoiserConfig::new(12), "two-cluster").unwrap();
    let schedule = NoiseSchedule::new(32).unwrap();
    let chat = v.id("chat").unwrap();
    let refs: Vec<&[TokenId]> = corpus.iter().map(|t| t.tokens()).collect();
    let want = unigram(&refs);
    let want_a = is_a.iter().filter(|&&a| a).count() as f64 / is_a.len() as f64;

    let mut l1_sum = 0.0;
    let mut cluster_sum = 0.0;
    for run in 0..5u64 {
        let seeds: Vec<u64> = (0..2000).map(|i| seed::derive(1000 + run, i)).collect();
        let samples = parallel::map(&seeds, |&s| {
            sample_dialogue(&model, &InpaintingCondition::new(), &schedule, s)
                .unwrap()
                .trajectory
        });
        let refs: Vec<&[TokenId]> = samples.iter().map(|t| t.tokens()).collect();
        let got = unigram(&refs);
        let l1: f64 = want
            .keys()
            .chain(got.keys())
            .collect::<std::collections::HashSet<_>>()
            .into_iter()
            .map(|k| (want.get(k).unwrap_or(&0.0) - got.get(k).unwrap_or(&0.0)).abs())
            .sum();
        let got_a = samples.iter().filter(|t| t.tokens().get(1) == Some(&chat)).count() as f64 / samples.len() as f64;
        println!("run {run}: unigram L1 {l1:.4}, cluster share {got_a:.4} vs {want_a:.4}");
        l1_sum += l1;
        cluster_sum += (got_a - want_a).abs();
    }
    let (l1, cluster) = (l1_sum / 5.0, cluster_sum / 5.0);
    println!("mean: unigram L1 {l1:.4}, cluster error {cluster:.4}");
    assert!(l1 <= 0.05, "unigram L1 {l1}");
    assert!(cluster <= 0.05, "cluster frequency error {cluster}");
}

/// Exact action values by enumerating every user reply and every later
/// system choice, discounting by the target's gamma.
fn expectimax(env: &dyn Environment, state: &DialogueState) -> Vec<(TokenId, f64)> {
    let gamma = env.target().gamma;
    env.legal_actions(state)
        .into_iter()
        .map(|tag| {
            let span = env.realize(state, tag, &[]).span();
            let q = env
                .user_outcomes(state, &span)
                .into_iter()
                .map(|(p, reply)| {
                    let next = state.advance(&span, &reply).unwrap();
                    let a = env.assess(next.prefix.tokens(), next.turn >= env.t_max());
                    let v = if a.terminal_turn.is_some() {
                        a.reward
                    } else {
                        gamma * expectimax(env, &next).iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max)
                    };
                    p * v
                })
                .sum();
            (tag, q)
        })
        .collect()
}

#[test]
fn search_agrees_with_expectimax() {
    let v = Vocabulary::standard();
    let mini = suite("negotiation-mini");
    assert_eq!(mini.t_max, 4);
    let model = trained(&mini, 3000, 0.5, &v);
    let schedule = NoiseSchedule::new(32).unwrap();
    let seeds: Vec<u64> = (0..100).collect();

    let oracle: Vec<(DialogueState, TokenId)> = seeds
        .iter()
        .map(|&s| {
            let env = mini.environment(s, &v).unwrap();
            assert_eq!(env.strategies().len(), 5);
            let state = opened(env.as_ref(), s);
            let q = expectimax(env.as_ref(), &state);
            let mut sorted: Vec<f64> = q.iter().map(|x| x.1).collect();
            sorted.sort_by(|a, b| b.total_cmp(a));
            assert!(sorted[0] - sorted[1] > 1e-9, "seed {s}: tied optimum");
            let best = q.iter().find(|x| x.1 == sorted[0]).unwrap().0;
            (state, best)
        })
        .collect();

    let mut rates = Vec::new();
    for k in [1usize, 10, 50, 200] {
        let config = SearchConfig {
            budget: k,
            exploration: 1.5,
        };
        let hits = parallel::map(&seeds, |&s| {
            let env = mini.environment(s, &v).unwrap();
            let (state, best) = &oracle[s as usize];
            let (tag, tree) = plan(
                &model,
                env.as_ref(),
                state,
                &InpaintingCondition::new(),
                &config,
                &schedule,
                planner_seed(s, 1),
                &mut Vec::new(),
            )
            .unwrap();
            assert_eq!(tree.root().child_visits.iter().sum::<u64>(), k as u64);
            tag == *best
        });
        let n = hits.iter().filter(|&&h| h).count();
        println!("K={k}: {n}/100 match the expectimax action");
        rates.push(n);
    }
    for w in rates.windows(2) {
        assert!(w[1] + 2 >= w[0], "match frequency fell by more than 2: {rates:?}");
    }
    assert!(rates[3] >= 95, "K=200 matched {} of 100", rates[3]);
}

#[test]
fn search_beats_unguided_negotiation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("paired.toml");
    fs::write(
        &cfg,
        r#"
suites = ["negotiation-buyer", "negotiation-seller"]
planners = ["diffusion-none", "diffusion-search"]
episodes = 200
seed = 1000

[corpus]
size = 10000
quality_mix = 0.5
seed = 7

[planner.search]
budget = 10
exploration = 1.5
"#,
    )
    .unwrap();
    let run = cmd_run(&Options::new(&cfg, dir.path().join("out"))).unwrap();
    for role in ["negotiation-buyer", "negotiation-seller"] {
        let cell = |p: &str| run.reports.iter().find(|r| r.suite == role && r.planner == p).unwrap();
        let (none, search) = (cell("diffusion-none"), cell("diffusion-search"));
        let (slr_n, slr_s) = (none.mean_slr.unwrap(), search.mean_slr.unwrap());
        println!(
            "{role}: unguided SR {:.3} SLR {slr_n:.3}; search SR {:.3} SLR {slr_s:.3}",
            none.success_rate, search.success_rate
        );
        assert!(search.success_rate > none.success_rate, "{role}: SR");
        assert!(slr_s > slr_n, "{role}: SLR");
    }
}

/// Runs the diffusion planner but keeps every drafted plan for inspection.
struct Recording<'m> {
    inner: DiffusionPlanner<'m>,
    drafts: std::sync::Mutex<Vec<Trajectory>>,
}

impl Planner for Recording<'_> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn act(
        &self,
        env: &dyn Environment,
        state: &DialogueState,
        seed: u64,
        trace: &mut Vec<TraceRecord>,
    ) -> Result<DialogueAction, GuidanceError> {
        let out = self.inner.draft(env, state, seed, trace)?;
        self.drafts.lock().unwrap().push(out.trajectory.clone());
        self.inner.commit(env, state, &out)
    }
}

#[test]
fn word_guidance_covers_keywords() {
    let v = Vocabulary::standard();
    let kw = suite("keyword-chain");
    let model = trained(&kw, 3000, 0.5, &v);
    let guided = |mode| PlannerConfig {
        mode,
        ..PlannerConfig::default()
    };
    let none = DiffusionPlanner::new(&model, guided(GuidanceMode::None)).unwrap();
    let seeds: Vec<u64> = (5000..5100).collect();

    let results = parallel::map(&seeds, |&s| {
        let env = kw.environment(s, &v).unwrap();
        let rec = Recording {
            inner: DiffusionPlanner::new(&model, guided(GuidanceMode::Word)).unwrap(),
            drafts: Default::default(),
        };
        let g = run_episode(&rec, env.as_ref(), s).unwrap();
        let u = run_episode(&none, env.as_ref(), s).unwrap();
        let pred = OptimalityPredicate::new(env.target().clone(), &v);
        let drafts = rec.drafts.into_inner().unwrap();
        let all_ok = drafts.iter().all(|d| optimality_filter(d, &pred).unwrap());
        (g, u, drafts.len(), all_ok)
    });

    let mean = |xs: Vec<f64>| xs.iter().sum::<f64>() / xs.len() as f64;
    let kcr = mean(results.iter().map(|r| r.0.metrics.kcr.unwrap()).collect());
    let ed_g = mean(results.iter().map(|r| r.0.metrics.edit_distance.unwrap() as f64).collect());
    let ed_u = mean(results.iter().map(|r| r.1.metrics.edit_distance.unwrap() as f64).collect());
    let drafts: usize = results.iter().map(|r| r.2).sum();
    let failing = results.iter().filter(|r| !r.3).count();
    println!("guided KCR {kcr:.3}, edit distance guided {ed_g:.3} vs unguided {ed_u:.3}; {drafts} drafts, {failing} episodes with a draft missing the target");
    assert!(kcr >= 0.95, "KCR {kcr}");
    assert!(ed_g < ed_u);
    assert_eq!(failing, 0);
}

/// Memoised recursive edit distance, independent of the table version.
fn edit_oracle<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    fn go<T: PartialEq>(a: &[T], b: &[T], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&d) = memo.get(&(i, j)) {
            return d;
        }
        let d = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j, memo)
                .min(go(a, b, i, j + 1, memo))
                .min(go(a, b, i + 1, j + 1, memo))
        };
        memo.insert((i, j), d);
        d
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

struct Ep(bool, usize);

impl Outcome for Ep {
    fn success(&self) -> bool {
        self.0
    }

    fn turns_used(&self) -> usize {
        self.1
    }
}

#[test]
fn metrics_match_oracles() {
    let mut rng = seed::rng(6);
    let tok = |rng: &mut seed::Rng| TokenId(rng.gen_range(0..14));
    for _ in 0..1000 {
        let a: Vec<TokenId> = (0..rng.gen_range(0..12)).map(|_| tok(&mut rng)).collect();
        let b: Vec<TokenId> = (0..rng.gen_range(0..12)).map(|_| tok(&mut rng)).collect();
        assert_eq!(levenshtein(&a, &b), edit_oracle(&a, &b));

        // keywords: distinct ordinary tokens
        let mut pool: Vec<TokenId> = (4..14).map(TokenId).collect();
        pool.shuffle(&mut rng);
        let target = &pool[..rng.gen_range(1..6)];
        let covered = target.iter().filter(|k| a.contains(k)).count() as f64 / target.len() as f64;
        assert!((keyword_coverage_ratio(target, &a).unwrap() - covered).abs() <= 1e-12);
        let mut order = Vec::new();
        for t in &a {
            if target.contains(t) && !order.contains(t) {
                order.push(*t);
            }
        }
        assert_eq!(keyword_order_distance(target, &a).unwrap(), edit_oracle(target, &order));

        // token F1 by sorting and merging content tokens
        let content = |xs: &[TokenId]| {
            let mut v: Vec<TokenId> = xs.iter().copied().filter(|t| t.0 > 3).collect();
            v.sort();
            v
        };
        let (ca, cb) = (content(&a), content(&b));
        let (mut i, mut j, mut common) = (0, 0, 0usize);
        while i < ca.len() && j < cb.len() {
            match ca[i].cmp(&cb[j]) {
                std::cmp::Ordering::Equal => {
                    common += 1;
                    i += 1;
                    j += 1;
                }
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
            }
        }
        let f1 = if ca.is_empty() && cb.is_empty() {
            1.0
        } else if common == 0 {
            0.0
        } else {
            2.0 * common as f64 / (ca.len() + cb.len()) as f64
        };
        assert!((token_f1(&a, &b) - f1).abs() <= 1e-12);

        // success rate and average turns
        let t_max = rng.gen_range(2..12);
        let eps: Vec<Ep> = (0..rng.gen_range(1..30))
            .map(|_| Ep(rng.gen_bool(0.5), rng.gen_range(1..=t_max)))
            .collect();
        let wins: Vec<&Ep> = eps.iter().filter(|e| e.0).collect();
        let sr = wins.len() as f64 / eps.len() as f64;
        assert!((success_rate(&eps).unwrap() - sr).abs() <= 1e-12);
        let at_max: f64 = eps.iter().map(|e| if e.0 { e.1 } else { t_max } as f64).sum::<f64>() / eps.len() as f64;
        assert!((average_turn(&eps, t_max, TurnConvention::FailuresAsMax).unwrap() - at_max).abs() <= 1e-12);
        if !wins.is_empty() {
            let at_ok = wins.iter().map(|e| e.1 as f64).sum::<f64>() / wins.len() as f64;
            assert!((average_turn(&eps, t_max, TurnConvention::SuccessOnly).unwrap() - at_ok).abs() <= 1e-12);
        }

        // SLR against the bracket share, both roles
        let buyer = rng.gen_range(100.0..500.0);
        let seller = buyer + rng.gen_range(10.0..500.0);
        let p = rng.gen_range(buyer - 50.0..seller + 50.0);
        let b = sell_to_list_ratio(Role::Buyer, buyer, seller, Some(p)).unwrap();
        let s = sell_to_list_ratio(Role::Seller, buyer, seller, Some(p)).unwrap();
        assert!((b - (seller - p) / (seller - buyer)).abs() <= 1e-12);
        assert!((s - (p - buyer) / (seller - buyer)).abs() <= 1e-12);
        assert_eq!(sell_to_list_ratio(Role::Seller, buyer, seller, None).unwrap(), 0.0);
    }

    // buyer and seller shares of every dealt episode add up to one
    let v = Vocabulary::standard();
    let mut dealt = 0;
    for s in 0..400u64 {
        let mut rng = seed::rng(seed::derive(s, 77));
        let listing = 10.0 * rng.gen_range(20..100) as f64;
        let scenario = NegotiationScenario {
            id: format!("slr#{s}"),
            listing_price: listing,
            buyer_target: (listing * 0.5).round(),
            seller_level: rng.gen_range(14..=18),
            role: if s % 2 == 0 { Role::Buyer } else { Role::Seller },
            opponent: OpponentPolicy::default(),
            t_max: 10,
            gamma: 0.95,
            rewards: RewardConfig::default(),
            strategies: Vec::new(),
        };
        let env = NegotiationEnv::new(scenario.clone(), &v).unwrap();
        let r = run_episode(&RandomPlanner, &env, s).unwrap();
        if let Some(price) = r.deal_price {
            dealt += 1;
            let as_buyer = NegotiationScenario { role: Role::Buyer, ..scenario.clone() }.slr(Some(price));
            let as_seller = NegotiationScenario { role: Role::Seller, ..scenario }.slr(Some(price));
            assert!((as_buyer + as_seller - 1.0).abs() <= 1e-12, "seed {s}");
            assert!((r.metrics.slr.unwrap() - if s % 2 == 0 { as_buyer } else { as_seller }).abs() <= 1e-12);
        }
    }
    println!("1000 random metric inputs matched; SLR sums checked on {dealt} dealt episodes");
    assert!(dealt > 50);
}

#[test]
fn mbr_is_the_pairwise_argmin() {
    let mut rng = seed::rng(7);
    for _ in 0..500 {
        let n = rng.gen_range(1..=6);
        let cands: Vec<MBRCandidate> = (0..n)
            .map(|i| {
                // few symbols so ties happen
                let toks = (0..rng.gen_range(0..6)).map(|_| TokenId(rng.gen_range(4..7))).collect();
                MBRCandidate::new(Trajectory::new(toks).unwrap(), i)
            })
            .collect();
        let risk = |i: usize| -> f64 {
            if n == 1 {
                return 0.0;
            }
            let total: usize = (0..n)
                .filter(|&j| j != i)
                .map(|j| edit_oracle(cands[i].trajectory.tokens(), cands[j].trajectory.tokens()))
                .sum();
            total as f64 / (n - 1) as f64
        };
        let mut best = 0;
        for i in 1..n {
            if risk(i) < risk(best) {
                best = i;
            }
        }
        let (idx, chosen) = mbr_decode(&cands, diffplan_core::guidance::edit_distance_risk).unwrap();
        assert_eq!(idx, best);
        assert_eq!(chosen.trajectory, cands[best].trajectory);
        assert!((chosen.risk - risk(best)).abs() <= 1e-12);
    }
    println!("500 candidate sets decoded to the brute-force argmin");
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("repeat.toml");
    fs::write(
        &cfg,
        r#"
suites = ["negotiation-buyer", "keyword-chain"]
planners = ["random", "greedy", "diffusion-search"]
episodes = 12
seed = 5
trace = true

[corpus]
size = 800
"#,
    )
    .unwrap();
    let a = cmd_run(&Options::new(&cfg, dir.path().join("a"))).unwrap();
    let mut opts = Options::new(&cfg, dir.path().join("b"));
    opts.workers = Some(1);
    let b = cmd_run(&opts).unwrap();
    for (x, y) in [
        (&a.report_text, &b.report_text),
        (&a.report_tsv, &b.report_tsv),
        (&a.runlog, &b.runlog),
    ] {
        let (x, y) = (fs::read(x).unwrap(), fs::read(y).unwrap());
        assert!(!x.is_empty());
        assert_eq!(x, y);
    }
    let log = fs::read_to_string(&a.runlog).unwrap();
    let traces = log.lines().filter(|l| l.contains(r#""kind":"trace""#)).count();
    println!("reports and a {}-line run log identical across runs ({traces} trace records)", log.lines().count());
    assert!(traces > 0);
}
