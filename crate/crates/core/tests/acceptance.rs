//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Criteria 1-7 and 10 are hard requirements and make the process exit
//! non-zero when they fail. Criteria 8 and 9 compare training curricula at
//! desk scale; they always print their raw numbers and only affect the exit
//! status when `FAULTWALK_ACCEPTANCE_STRICT=1`. `FAULTWALK_ACCEPTANCE_STEPS`
//! shrinks the 300k-step training budget for quick local runs.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use faultwalk::agent::{compute_gae, gaussian_log_prob, minibatch_loss, Agent, Policy, PpoConfig, RolloutBatch};
use faultwalk::curriculum::{lcdr_interval, CurriculumConfig, CurriculumMode, CurriculumState, Direction};
use faultwalk::evalharness::{evaluate, EvalCondition, MeanPolicy, RandomPolicy};
use faultwalk::failure::{FailureSpec, NUM_LEGS};
use faultwalk::orchestrator::{train, Checkpoint, TrainConfig, Trainer};
use faultwalk::quadsim::reward::reward_terms;
use faultwalk::quadsim::{RewardMode, SimConfig, ACT_DIM, OBS_DIM};
use faultwalk::rng::{self, Purpose, Rng};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

const REWARD_TOL: f64 = 1e-12;
const GAE_TOL: f64 = 1e-10;
const GRAD_REL_TOL: f64 = 1e-4;
const DISTANCE_FACTOR: f64 = 3.0;
const MIN_UPRIGHT_FRACTION: f64 = 0.5;
const TREND_SEEDS: [u64; 3] = [0, 1, 2];
const EVAL_SEEDS: [u64; 2] = [0, 1];
const EVAL_TRIALS: usize = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// 1. failure model

fn failure_model() -> Outcome {
    let mut rng = rng::stream(101, Purpose::Eval, 0);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let raw: [f64; ACT_DIM] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        let leg = rng.random_range(0..NUM_LEGS);
        let k = rng.random_range(0.0..=1.5);
        let mut scaled = raw;
        FailureSpec::new(leg, k).unwrap().apply(&mut scaled);
        for i in 0..ACT_DIM {
            let expected = if i / 2 == leg { k * raw[i] } else { raw[i] };
            if scaled[i].to_bits() != expected.to_bits() {
                mismatches += 1;
            }
        }
    }
    outcome(mismatches == 0, format!("1000 cases, {mismatches} mismatching torques"))
}

// ---------------------------------------------------------------------------
// 2. reward

fn reward_exactness() -> Outcome {
    let total = |mode, v, u, f, falling| reward_terms(mode, v, u, f, falling).total();
    let mut failures = Vec::new();
    let mut expect = |name: &str, got: f64, want: f64| {
        if (got - want).abs() > REWARD_TOL {
            failures.push(format!("{name}: {got} != {want}"));
        }
    };
    expect("unit speed standing", total(RewardMode::Survival, 1.0, 0.0, 0.0, false), 2.0);
    expect("falling still", total(RewardMode::Survival, 0.0, 0.0, 0.0, true), 0.0);
    expect("torque 1e6", total(RewardMode::Survival, 0.5, 1e6, 0.0, false), 0.5);
    let mut rng = rng::stream(102, Purpose::Eval, 0);
    for _ in 0..1000 {
        let (v, u, f) = (rng.random_range(-2.0..2.0), rng.random_range(0.0..10.0), rng.random_range(0.0..100.0));
        let falling = rng.random_bool(0.5);
        let legacy = reward_terms(RewardMode::Legacy, v, u, f, falling);
        let survival = reward_terms(RewardMode::Survival, v, u, f, falling);
        expect("legacy forward", legacy.forward, survival.forward);
        expect("legacy torque", legacy.torque, survival.torque);
        expect("legacy impact", legacy.impact, survival.impact);
        expect("legacy alive", legacy.alive, 1.0);
        expect("survival alive", survival.alive, if falling { 0.0 } else { 1.0 });
    }
    let n = failures.len();
    outcome(n == 0, if n == 0 { "unit vectors and 1000 legacy comparisons".into() } else { failures.join("; ") })
}

// ---------------------------------------------------------------------------
// 3. adaptive scheduler against a reference interpreter

/// Literal transcription of the adaptive loop: buffer returns, average once
/// `m` are in, step the interval when the average reaches the threshold,
/// ratchet the threshold, then empty the buffer. Bounds are `[0, k_max]`.
struct Reference {
    l: f64,
    u: f64,
    g_th: f64,
    d: Vec<f64>,
    m: usize,
    dl: f64,
    du: f64,
    easy_to_hard: bool,
    k_max: f64,
}

impl Reference {
    fn feed(&mut self, g: f64) {
        self.d.push(g);
        if self.d.len() >= self.m {
            let mut sum = 0.0;
            for x in &self.d {
                sum += *x;
            }
            let g_bar = sum / self.d.len() as f64;
            if g_bar >= self.g_th {
                if self.easy_to_hard {
                    self.u = f64::max(self.u - self.du, 0.0);
                    self.l = f64::max(self.l - self.dl, 0.0);
                } else {
                    self.u = f64::min(self.u + self.du, self.k_max);
                    self.l = f64::min(self.l + self.dl, self.k_max);
                }
                self.g_th = g_bar;
            }
            self.d.clear();
        }
    }
}

fn scheduler_trace() -> Outcome {
    let cases = [
        (CurriculumMode::AcdrEasyToHard, 10, 0.01, 0.01),
        (CurriculumMode::AcdrHardToEasy, 10, 0.01, 0.01),
        (CurriculumMode::AcdrEasyToHard, 4, 0.02, 0.01),
        (CurriculumMode::AcdrHardToEasy, 4, 0.01, 0.03),
    ];
    let mut details = Vec::new();
    let mut pass = true;
    for (case, (mode, m, dl, du)) in cases.into_iter().enumerate() {
        let cfg = CurriculumConfig {
            mode,
            buffer_size: m,
            delta_lower: dl,
            delta_upper: du,
            ..CurriculumConfig::default()
        };
        let mut state = CurriculumState::new(&cfg, 1, 0.0).unwrap();
        let e2h = mode == CurriculumMode::AcdrEasyToHard;
        let start = if e2h { 1.5 } else { 0.0 };
        let mut reference = Reference {
            l: start,
            u: start,
            g_th: 0.0,
            d: Vec::new(),
            m,
            dl,
            du,
            easy_to_hard: e2h,
            k_max: 1.5,
        };
        let mut rng = rng::stream(103, Purpose::Eval, case as u32);
        let noise = Normal::new(0.0, 40.0).unwrap();
        let mut moves = 0;
        let mut first_mismatch = None;
        for i in 0..10_000 {
            // slow upward drift with noise: a mix of crossings and misses
            let g = 0.05 * i as f64 + noise.sample(&mut rng);
            let before = (reference.l, reference.u);
            state.record_return(g).unwrap();
            reference.feed(g);
            if (reference.l, reference.u) != before {
                moves += 1;
            }
            let same = state.lower.to_bits() == reference.l.to_bits()
                && state.upper.to_bits() == reference.u.to_bits()
                && state.g_threshold.to_bits() == reference.g_th.to_bits()
                && state.buffer.len() == reference.d.len()
                && state.buffer.iter().zip(&reference.d).all(|(a, b)| a.to_bits() == b.to_bits());
            if !same && first_mismatch.is_none() {
                first_mismatch = Some(i);
            }
        }
        pass &= first_mismatch.is_none();
        details.push(format!(
            "{mode} m={m}: {moves} moves, final [{:.2}, {:.2}]{}",
            reference.l,
            reference.u,
            first_mismatch.map_or(String::new(), |i| format!(", diverged at event {i}"))
        ));
    }
    outcome(pass, details.join("; "))
}

// ---------------------------------------------------------------------------
// 4. linear schedule

fn linear_schedule() -> Outcome {
    let (t, n) = (1100u64, 11usize);
    let mut problems = Vec::new();
    for (direction, mode, first, last) in [
        (Direction::EasyToHard, CurriculumMode::LcdrEasyToHard, 1.5, 0.0),
        (Direction::HardToEasy, CurriculumMode::LcdrHardToEasy, 0.0, 1.5),
    ] {
        let cfg = CurriculumConfig {
            mode,
            lcdr_stages: n,
            ..CurriculumConfig::default()
        };
        let mut state = CurriculumState::new(&cfg, t, 0.0).unwrap();
        let mut prev: Option<f64> = None;
        for elapsed in 0..=t {
            let (l, u) = lcdr_interval(elapsed, t, n, direction, 1.5).unwrap();
            state.set_elapsed_steps(elapsed);
            if state.current_interval() != (l, u) || l != u {
                problems.push(format!("{mode} stateful mismatch at {elapsed}"));
            }
            let stage = (elapsed / 100).min(10);
            let climbed = if direction == Direction::HardToEasy { stage } else { 10 - stage };
            let want = climbed as f64 * 1.5 / 10.0;
            if l.to_bits() != want.to_bits() {
                problems.push(format!("{mode} at {elapsed}: {l} != {want}"));
            }
            if let Some(p) = prev {
                let boundary = elapsed % 100 == 0 && elapsed <= 1000;
                let step = (l - p).abs();
                if boundary && (step - 0.15).abs() > 1e-12 {
                    problems.push(format!("{mode} step {step} at {elapsed}"));
                }
                if !boundary && step != 0.0 {
                    problems.push(format!("{mode} moved inside a stage at {elapsed}"));
                }
            }
            prev = Some(l);
        }
        let endpoints = (lcdr_interval(0, t, n, direction, 1.5).unwrap().0, lcdr_interval(t, t, n, direction, 1.5).unwrap().0);
        if endpoints != (first, last) {
            problems.push(format!("{mode} endpoints {endpoints:?}"));
        }
    }
    let ok = problems.is_empty();
    outcome(ok, if ok { "T=1100, N=11: boundaries every 100 steps, steps of 0.15, exact endpoints".into() } else { problems[..problems.len().min(3)].join("; ") })
}

// ---------------------------------------------------------------------------
// 5. advantage estimation

fn gae_oracle() -> Outcome {
    let mut rng = rng::stream(105, Purpose::Eval, 0);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n = rng.random_range(1..=32);
        let gamma = rng.random_range(0.8..=1.0);
        let lambda = rng.random_range(0.0..=1.0);
        let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(0.15)).collect();
        let bootstrap = rng.random_range(-3.0..3.0);
        let (adv, ret) = compute_gae(&rewards, &values, &dones, bootstrap, gamma, lambda);
        let next_value = |t: usize| if t + 1 < n { values[t + 1] } else { bootstrap };
        let delta: Vec<f64> = (0..n)
            .map(|t| rewards[t] + if dones[t] { 0.0 } else { gamma * next_value(t) } - values[t])
            .collect();
        for t in 0..n {
            let mut expected = 0.0;
            for l in 0..n - t {
                expected += (gamma * lambda).powi(l as i32) * delta[t + l];
                if dones[t + l] {
                    break;
                }
            }
            worst = worst.max((adv[t] - expected).abs()).max((ret[t] - (expected + values[t])).abs());
        }
    }
    outcome(worst <= GAE_TOL, format!("500 trajectories, max error {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// 6. gradients

fn gradient_checks() -> Outcome {
    let cfg = PpoConfig::default();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for point in 0..50u32 {
        let mut rng = rng::stream(106, Purpose::Eval, point);
        let mut policy = Policy::new(OBS_DIM, ACT_DIM, &cfg.hidden, &mut rng);
        for p in policy.mean_net.params.iter_mut().chain(policy.value_net.params.iter_mut()) {
            *p += rng.random_range(-0.2..0.2);
        }
        for s in &mut policy.log_std {
            *s = rng.random_range(-1.0..0.5);
        }
        let batch = random_batch(&policy, &cfg, &mut rng);
        let idx: Vec<usize> = (0..batch.len()).collect();
        let loss = |p: &Policy| minibatch_loss(p, &batch, &batch.advantages, &idx, &cfg).0.total(&cfg);
        let (_, grads) = minibatch_loss(&policy, &batch, &batch.advantages, &idx, &cfg);
        let h = 1e-6;
        let mut probe = |analytic: f64, perturb: &dyn Fn(&mut Policy, f64)| {
            let mut plus = policy.clone();
            perturb(&mut plus, h);
            let mut minus = policy.clone();
            perturb(&mut minus, -h);
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-3);
            worst = worst.max(rel);
            checked += 1;
        };
        for _ in 0..12 {
            let i = rng.random_range(0..grads.mean.len());
            probe(grads.mean[i], &|p, d| p.mean_net.params[i] += d);
            let j = rng.random_range(0..grads.value.len());
            probe(grads.value[j], &|p, d| p.value_net.params[j] += d);
        }
        for j in 0..ACT_DIM {
            probe(grads.log_std[j], &|p, d| p.log_std[j] += d);
        }
    }
    outcome(worst <= GRAD_REL_TOL, format!("50 points, {checked} coordinates, max relative error {worst:.2e}"))
}

/// Sixteen on-policy samples whose behaviour log-probs are shifted so the
/// ratios straddle the clip range without sitting on a kink.
fn random_batch(policy: &Policy, cfg: &PpoConfig, rng: &mut Rng) -> RolloutBatch {
    let mut batch = RolloutBatch::new(OBS_DIM, ACT_DIM);
    while batch.len() < 16 {
        let obs: Vec<f64> = (0..OBS_DIM).map(|_| rng.random_range(-2.0..2.0)).collect();
        let act = policy.act(&obs, rng).unwrap();
        let shift: f64 = rng.random_range(-0.4..0.4);
        let ratio = shift.exp();
        if (ratio - (1.0 + cfg.clip_epsilon)).abs() < 1e-3 || (ratio - (1.0 - cfg.clip_epsilon)).abs() < 1e-3 {
            continue;
        }
        let log_prob = gaussian_log_prob(&policy.mean(&obs), &policy.log_std, &act.raw_action);
        batch.obs.extend(&obs);
        batch.actions.extend(&act.raw_action);
        batch.log_probs.push(log_prob - shift);
        batch.values.push(act.value);
        batch.advantages.push(rng.random_range(-2.0..2.0));
        batch.returns.push(rng.random_range(-2.0..2.0));
    }
    batch
}

// ---------------------------------------------------------------------------
// 7-9. training runs

fn budget() -> u64 {
    std::env::var("FAULTWALK_ACCEPTANCE_STEPS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(300_000)
}

struct RunResult {
    mode: CurriculumMode,
    seed: u64,
    agent: Agent,
    ppo: PpoConfig,
    sim: SimConfig,
    elapsed: Duration,
}

fn train_run(mode: CurriculumMode, seed: u64) -> RunResult {
    let mut cfg = TrainConfig::with_mode(mode);
    cfg.seed = seed;
    cfg.total_env_steps = budget();
    let started = Instant::now();
    let (agent, _) = train(cfg.clone()).expect("training run");
    RunResult {
        mode,
        seed,
        agent,
        ppo: cfg.ppo,
        sim: cfg.sim,
        elapsed: started.elapsed(),
    }
}

fn eval_run(run: &RunResult, condition: &EvalCondition) -> faultwalk::evalharness::EvalReport {
    let controller = MeanPolicy {
        agent: &run.agent,
        ppo: &run.ppo,
    };
    evaluate(&run.mode.to_string(), &controller, &run.sim, condition).expect("evaluation")
}

fn learning_sanity(run: &RunResult) -> Outcome {
    let plain = EvalCondition::plain(EVAL_TRIALS, EVAL_SEEDS.to_vec());
    let trained = eval_run(run, &plain);
    let random = evaluate("random", &RandomPolicy, &run.sim, &plain).expect("random evaluation");
    let upright = 1.0 - trained.fall_rate();
    let needed = DISTANCE_FACTOR * random.summary.mean_distance.abs();
    let pass = trained.summary.mean_distance >= needed && upright >= MIN_UPRIGHT_FRACTION;
    outcome(
        pass,
        format!(
            "baseline seed {}: distance {:.3} m vs random {:.3} m (need >= {needed:.3}), upright {:.0}% (need >= {:.0}%), trained in {:.0} s",
            run.seed,
            trained.summary.mean_distance,
            random.summary.mean_distance,
            100.0 * upright,
            100.0 * MIN_UPRIGHT_FRACTION,
            run.elapsed.as_secs_f64()
        ),
    )
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

/// Median over seeds of the broken-condition mean reward of each mode.
fn broken_medians(runs: &[RunResult]) -> Vec<(CurriculumMode, f64, Vec<f64>)> {
    let broken = EvalCondition::broken(EVAL_TRIALS, EVAL_SEEDS.to_vec());
    let mut modes: Vec<CurriculumMode> = Vec::new();
    for r in runs {
        if !modes.contains(&r.mode) {
            modes.push(r.mode);
        }
    }
    modes
        .into_iter()
        .map(|mode| {
            let rewards: Vec<f64> = runs
                .iter()
                .filter(|r| r.mode == mode)
                .map(|r| eval_run(r, &broken).summary.mean_reward)
                .collect();
            let mut sorted = rewards.clone();
            (mode, median(&mut sorted), rewards)
        })
        .collect()
}

fn describe(medians: &[(CurriculumMode, f64, Vec<f64>)]) -> String {
    medians
        .iter()
        .map(|(mode, m, all)| {
            let raw: Vec<String> = all.iter().map(|r| format!("{r:.1}")).collect();
            format!("{mode} {m:.1} [{}]", raw.join(", "))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

// ---------------------------------------------------------------------------
// 10. determinism and resume

fn determinism_and_resume() -> Outcome {
    let mut cfg = TrainConfig::with_mode(CurriculumMode::AcdrHardToEasy);
    cfg.total_env_steps = 128 * 40;
    cfg.seed = 17;
    cfg.curriculum.buffer_size = 2;
    let (agent_a, log_a) = train(cfg.clone()).unwrap();
    let (agent_b, log_b) = train(cfg.clone()).unwrap();
    let identical = log_a == log_b && agent_a == agent_b;

    let mut full = Trainer::new(cfg.clone()).unwrap();
    full.run(|_| {}).unwrap();
    let mut head = Trainer::new(cfg).unwrap();
    for _ in 0..17 {
        head.iterate().unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.ckpt");
    head.checkpoint().save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let resaved = dir.path().join("again.ckpt");
    loaded.save(&resaved).unwrap();
    let byte_stable = std::fs::read(&path).unwrap() == std::fs::read(&resaved).unwrap();
    let mut tail = Trainer::from_checkpoint(loaded).unwrap();
    tail.run(|_| {}).unwrap();
    let mut stitched = head.log().clone();
    stitched.updates.extend(tail.log().updates.iter().cloned());
    stitched.episodes.extend(tail.log().episodes.iter().cloned());
    let resumed = &stitched == full.log() && tail.checkpoint().to_text() == full.checkpoint().to_text();
    outcome(
        identical && byte_stable && resumed,
        format!(
            "{} updates, {} episodes: repeat identical {identical}, checkpoint byte-stable {byte_stable}, resume identical {resumed}",
            log_a.updates.len(),
            log_a.episodes.len()
        ),
    )
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let strict = std::env::var("FAULTWALK_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let steps = budget();
    let mut hard_failures = 0;
    let mut trend_failures = 0;
    let mut report = |n: usize, name: &str, hard: bool, started: Instant, o: Outcome| {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {verdict} [{name}] {} ({:.2} s)", o.detail, started.elapsed().as_secs_f64());
        if !o.pass {
            if hard {
                hard_failures += 1;
            } else {
                trend_failures += 1;
            }
        }
    };

    let t = Instant::now();
    report(1, "failure model", true, t, failure_model());
    let t = Instant::now();
    report(2, "reward", true, t, reward_exactness());
    let t = Instant::now();
    report(3, "adaptive trace", true, t, scheduler_trace());
    let t = Instant::now();
    report(4, "linear schedule", true, t, linear_schedule());
    let t = Instant::now();
    report(5, "advantage oracle", true, t, gae_oracle());
    let t = Instant::now();
    report(6, "gradient check", true, t, gradient_checks());

    let t = Instant::now();
    let modes = [
        CurriculumMode::Baseline,
        CurriculumMode::AcdrHardToEasy,
        CurriculumMode::AcdrEasyToHard,
        CurriculumMode::Udr,
    ];
    let mut runs = Vec::new();
    for seed in TREND_SEEDS {
        for mode in modes {
            runs.push(train_run(mode, seed));
        }
    }
    let training_time = t.elapsed();
    let baseline = runs
        .iter()
        .find(|r| r.mode == CurriculumMode::Baseline && r.seed == TREND_SEEDS[0])
        .unwrap();
    let t7 = Instant::now();
    let mut sanity = learning_sanity(baseline);
    sanity.detail = format!("{steps} steps, {}", sanity.detail);
    report(7, "learning sanity", true, t7, sanity);

    let t = Instant::now();
    let medians = broken_medians(&runs);
    let of = |mode| medians.iter().find(|(m, _, _)| *m == mode).map(|(_, v, _)| *v).unwrap();
    let h2e = of(CurriculumMode::AcdrHardToEasy);
    let trend_a = h2e >= of(CurriculumMode::Udr) && h2e >= of(CurriculumMode::Baseline);
    let trend_b = h2e >= of(CurriculumMode::AcdrEasyToHard);
    let numbers = format!(
        "broken-condition mean reward, median over seeds {TREND_SEEDS:?} at {steps} steps: {}",
        describe(&medians)
    );
    report(8, "trend: h2e vs udr and baseline", strict, t, outcome(trend_a, numbers.clone()));
    report(9, "trend: h2e vs e2h", strict, t, outcome(trend_b, numbers));
    println!(
        "             ({} training runs took {:.0} s)",
        runs.len(),
        training_time.as_secs_f64()
    );

    let t = Instant::now();
    report(10, "determinism and resume", true, t, determinism_and_resume());

    println!("acceptance: {hard_failures} hard failures, {trend_failures} trend failures{}", if strict { " (strict)" } else { "" });
    if hard_failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
