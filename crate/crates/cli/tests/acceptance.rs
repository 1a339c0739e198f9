//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phimdp::agent::{run_experiment_from, AgentConfig};
use phimdp::coding::CodeMode;
use phimdp::environments::{ChainEnv, TinyExampleEnv};
use phimdp::features::{accepts, FeatureMap, Proposal, SuffixSet};
use phimdp::histories::{Alphabet, Environment, History};
use phimdp::mdpcore::{
    cost, icost_of_counts, u_matrices, CostConfig, CostTracker, CountTensor, MdpEstimate, RewardModel, UMatrices,
};
use phimdp::planner::{bellman_residual, value_iteration, ExplorationConfig, DEFAULT_MAX_SWEEPS, DEFAULT_TOLERANCE};
use phimdp::search::{search_phi, SearchConfig};
use phimdp_cli::{tiny_closed_form, tiny_history};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Settings of the tiny-example table: exact code, rewards per state, no
/// charge for the tree.
fn table_config(burn_in: usize) -> CostConfig {
    CostConfig {
        mode: CodeMode::Exact,
        reward_model: RewardModel::StateOnly,
        phi_penalty: false,
        burn_in,
        ..CostConfig::default()
    }
}

const TABLE_N: usize = 100_000;

fn table_costs() -> (Vec<f64>, Duration) {
    let start = Instant::now();
    let h = tiny_history(TABLE_N, 2024);
    let cfg = table_config(3);
    let costs = (0..=4)
        .map(|k| cost(&SuffixSet::full(k, 2), &h, &cfg).total_bits)
        .collect();
    (costs, start.elapsed())
}

fn ac1(costs: &[f64], took: Duration) -> Outcome {
    let others_higher = [0, 1, 3, 4].iter().all(|&k| costs[2] < costs[k]);
    let fast = took < Duration::from_secs(5);
    let listed: Vec<String> = costs.iter().enumerate().map(|(k, c)| format!("k{k}={c:.1}")).collect();
    outcome(others_higher && fast, format!("{} took={took:.2?}", listed.join(" ")))
}

fn ac2(costs: &[f64]) -> Outcome {
    let n = TABLE_N as f64;
    let rel0 = (costs[0] - tiny_closed_form(0, n)).abs() / tiny_closed_form(0, n);
    let rel2 = (costs[2] - tiny_closed_form(2, n)).abs() / tiny_closed_form(2, n);
    outcome(rel0 <= 0.005 && rel2 <= 0.005, format!("rel_k0={rel0:.2e} rel_k2={rel2:.2e} (limit 5e-3)"))
}

fn ac3() -> Outcome {
    // the period-8 de Bruijn cycle 00010111 visits every pair of
    // observations equally often and every pair follows every pair once
    let stream = vec![0, 0, 0, 1, 0, 1, 1, 1, 0, 0, 0, 1, 0, 1, 1, 1, 0, 0];
    let mut env = TinyExampleEnv::scripted(stream.clone());
    let mut h = History::new(env.alphabet().clone());
    let p = env.reset();
    h.begin(p.observation, p.reward).unwrap();
    for _ in 1..stream.len() {
        let p = env.step(0).unwrap();
        h.append_cycle(0, p.observation, p.reward).unwrap();
    }
    let cfg = table_config(1);
    let c0 = cost(&SuffixSet::full(0, 2), &h, &cfg);
    let c2 = cost(&SuffixSet::full(2, 2), &h, &cfg);
    let n = c0.transitions as f64;
    let ok = c0.transitions == 16
        && (c0.total_bits - 38.0).abs() <= 1e-9
        && (c2.total_bits - 40.0).abs() <= 1e-9
        && (tiny_closed_form(0, n) - 38.0).abs() <= 1e-9
        && (tiny_closed_form(2, n) - 40.0).abs() <= 1e-9;
    outcome(
        ok,
        format!("n={} k0={:.12} k2={:.12}", c0.transitions, c0.total_bits, c2.total_bits),
    )
}

fn brute_force(u: &UMatrices, s: usize, steps: &[(usize, usize)]) -> f64 {
    match steps.split_first() {
        None => 1.0,
        Some((&(a, r), rest)) => (0..u.states())
            .map(|s2| u.get(a, r, s, s2) * brute_force(u, s2, rest))
            .sum(),
    }
}

/// Both in log2; equal within relative error `1e-9` of the probabilities.
fn same_probability(log_fwd: f64, p_brute: f64) -> bool {
    if p_brute == 0.0 {
        return log_fwd == f64::NEG_INFINITY;
    }
    (log_fwd.exp2() / p_brute - 1.0).abs() <= 1e-9
}

fn random_history(rng: &mut ChaCha8Rng, observations: usize, actions: usize, rewards: usize, n: usize) -> History {
    let values = (0..rewards).map(|r| r as f64).collect();
    let mut h = History::new(Alphabet::new(observations, actions, values).unwrap());
    h.begin(rng.gen_range(0..observations), rng.gen_range(0..rewards)).unwrap();
    for _ in 1..n {
        h.append_cycle(
            rng.gen_range(0..actions),
            rng.gen_range(0..observations),
            rng.gen_range(0..rewards),
        )
        .unwrap();
    }
    h
}

fn ac4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    let mut failures = 0;

    // arbitrary stochastic Û
    for _ in 0..500 {
        let (m, na, nr) = (rng.gen_range(1..=3), rng.gen_range(1..=2), rng.gen_range(1..=2));
        let mut u = UMatrices::zeros(m, na, nr);
        for a in 0..na {
            for s in 0..m {
                let w: Vec<f64> = (0..m * nr)
                    .map(|_| if rng.gen_bool(0.7) { rng.gen::<f64>() } else { 0.0 })
                    .collect();
                let z: f64 = w.iter().sum();
                for s2 in 0..m {
                    for r in 0..nr {
                        let value = if z > 0.0 { w[s2 * nr + r] / z } else { 0.0 };
                        u.set(a, r, s, s2, value);
                    }
                }
            }
        }
        let steps: Vec<(usize, usize)> = (0..rng.gen_range(0..=8))
            .map(|_| (rng.gen_range(0..na), rng.gen_range(0..nr)))
            .collect();
        let s = rng.gen_range(0..m);
        checked += 1;
        if !same_probability(u.log2_marginal(s, &steps), brute_force(&u, s, &steps)) {
            failures += 1;
        }
    }

    // Û estimated from counts, as ICost uses it
    for _ in 0..500 {
        let observations = rng.gen_range(1..=3);
        let (na, nr) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
        let n = rng.gen_range(2..=9);
        let h = random_history(&mut rng, observations, na, nr, n);
        let phi = if rng.gen_bool(0.5) {
            SuffixSet::root(observations)
        } else {
            SuffixSet::full(1, observations)
        };
        let cfg = CostConfig {
            reward_model: if rng.gen_bool(0.5) { RewardModel::Full } else { RewardModel::StateOnly },
            ..CostConfig::default()
        };
        let ct = CountTensor::build(&phi, &h, 0);
        let u = u_matrices(&ct, &cfg);
        let ids = ct.realized_ids();
        let first = ids.binary_search(&ct.state_at(1).unwrap()).unwrap();
        let actions = h.actions();
        let steps: Vec<(usize, usize)> = (2..=h.len()).map(|t| (actions[t - 2], h.reward(t))).collect();
        let report = icost_of_counts(&ct, phi.description_length(), &cfg);
        checked += 1;
        if u.states() > 3 || !same_probability(-report.reward_bits, brute_force(&u, first, &steps)) {
            failures += 1;
        }
    }
    let took = start.elapsed();
    outcome(
        failures == 0 && took < Duration::from_secs(10),
        format!("instances={checked} mismatches={failures} took={took:.2?}"),
    )
}

fn ac5() -> Outcome {
    let single = MdpEstimate::from_dense(&[vec![vec![1.0]]], &[vec![vec![1.0]]]);
    let swap = MdpEstimate::from_dense(
        &[vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
        &[vec![vec![0.0, 1.0]], vec![vec![0.0, 0.0]]],
    );
    let v1 = value_iteration(&single, 0.5, DEFAULT_TOLERANCE, DEFAULT_MAX_SWEEPS).unwrap();
    let v2 = value_iteration(&swap, 0.5, DEFAULT_TOLERANCE, DEFAULT_MAX_SWEEPS).unwrap();
    let fixtures = (v1.v[0] - 2.0).abs() <= 1e-6
        && (v2.v[0] - 4.0 / 3.0).abs() <= 1e-6
        && (v2.v[1] - 2.0 / 3.0).abs() <= 1e-6;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = rng.gen_range(1..=10);
        let na = rng.gen_range(1..=3);
        let mut t = vec![vec![vec![0.0; m]; na]; m];
        let mut r = vec![vec![vec![0.0; m]; na]; m];
        for s in 0..m {
            for a in 0..na {
                let w: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
                let z: f64 = w.iter().sum();
                for s2 in 0..m {
                    t[s][a][s2] = w[s2] / z;
                    r[s][a][s2] = rng.gen_range(-1.0..1.0);
                }
            }
        }
        let est = MdpEstimate::from_dense(&t, &r);
        let gamma = rng.gen_range(0.0..0.99);
        let vf = value_iteration(&est, gamma, DEFAULT_TOLERANCE, DEFAULT_MAX_SWEEPS).unwrap();
        worst = worst.max(bellman_residual(&est, &vf));
    }
    outcome(
        fixtures && worst <= 1e-8,
        format!("single={:.9} swap=({:.9}, {:.9}) worst_residual={worst:.2e}", v1.v[0], v2.v[0], v2.v[1]),
    )
}

struct ChainRun {
    covered: bool,
    reached: bool,
}

/// Every realized state has taken every action at least once; the action
/// chosen in the last cycle counts as taken.
fn chain_run(seed: u64, explore: bool, observation_map: bool) -> ChainRun {
    let cycles = 2000;
    let mut cfg = AgentConfig {
        seed,
        log_icost: false,
        ..AgentConfig::default()
    };
    if !explore {
        cfg.exploration = ExplorationConfig::disabled();
    }
    let phi = if observation_map {
        // the observation is the whole state here; keep it fixed
        cfg.budget = 0;
        SuffixSet::full(1, 5)
    } else {
        SuffixSet::root(5)
    };
    let mut env = ChainEnv::new(5);
    let (log, agent) = run_experiment_from(&cfg, &mut env, cycles, phi).unwrap();
    let ct = agent.current().tracker().tensor();
    let actions = agent.history().actions();
    let mut taken = std::collections::BTreeSet::new();
    for t in 1..=cycles {
        if let Some(s) = ct.state_at(t) {
            let a = if t < cycles { actions[t - 1] } else { log.records[t - 1].a };
            taken.insert((s, a));
        }
    }
    let covered = ct
        .realized_ids()
        .iter()
        .all(|&s| (0..2).all(|a| taken.contains(&(s, a))));
    ChainRun {
        covered,
        reached: log.records.iter().any(|r| r.o == 4),
    }
}

fn ac6() -> Outcome {
    let seeds = 0..10u64;
    let learned = seeds.clone().filter(|&s| chain_run(s, true, false).covered).count();
    let observed: Vec<ChainRun> = seeds.clone().map(|s| chain_run(s, true, true)).collect();
    let observed_ok = observed.iter().filter(|r| r.covered && r.reached).count();
    let stuck = seeds
        .clone()
        .filter(|&s| !chain_run(s, false, false).reached || !chain_run(s, false, true).reached)
        .count();
    outcome(
        learned == 10 && observed_ok == 10 && stuck >= 1,
        format!(
            "covered_learned_map={learned}/10 covered_and_reached_observation_map={observed_ok}/10 \
             seeds_stuck_without_exploration={stuck}/10"
        ),
    )
}

fn ac7() -> Outcome {
    let h = tiny_history(1000, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let modes = [
        CodeMode::Exact,
        CodeMode::Sparse,
        CodeMode::Combinatorial,
        CodeMode::Incremental { alpha: 0.5 },
    ];
    let mut worst: f64 = 0.0;
    let mut moves = 0;
    let mut tracker: Option<CostTracker> = None;
    while moves < 200 {
        if moves % 25 == 0 {
            let cfg = CostConfig {
                mode: modes[(moves / 25) % 4],
                reward_model: if (moves / 25) % 2 == 0 { RewardModel::StateOnly } else { RewardModel::Full },
                phi_penalty: (moves / 50) % 2 == 0,
                burn_in: (moves / 25) % 3,
                ..CostConfig::default()
            };
            tracker = Some(CostTracker::new(SuffixSet::root(2), &h, cfg));
        }
        let tr = tracker.as_mut().unwrap();
        let proposal = Proposal::draw(tr.set(), &mut rng);
        let Some(mv) = proposal.to_move(tr.set()) else { continue };
        // keep the trees small enough to stay interesting
        if tr.set().depth() >= 6 && matches!(mv, phimdp::features::Move::Split(_)) {
            continue;
        }
        let before = cost(tr.set(), &h, tr.config()).total_bits;
        let plan = tr.plan(&mv).unwrap();
        let predicted = plan.delta.total();
        let after_set = plan.set.clone();
        tr.apply(plan);
        let after = cost(&after_set, &h, tr.config()).total_bits;
        worst = worst.max((predicted - (after - before)).abs());
        worst = worst.max((tr.cost() - after).abs());
        moves += 1;
    }
    outcome(worst <= 1e-9, format!("moves={moves} worst_error={worst:.2e} bits"))
}

fn ac8() -> Outcome {
    let h = tiny_history(10_000, 8);
    let cfg = SearchConfig::default();
    let target = cost(&SuffixSet::full(2, 2), &h, &cfg.cost).total_bits;
    let found = search_phi(&h, &cfg, &mut ChaCha8Rng::seed_from_u64(8));
    let rel = (found.best_score - target).abs() / target;
    let literal = SearchConfig {
        temperature_start: 1.0,
        ..cfg
    };
    let plain = search_phi(&h, &literal, &mut ChaCha8Rng::seed_from_u64(8));
    let rel_plain = (plain.best_score - target).abs() / target;

    let mut rule = true;
    for q in [0.01, 0.5, 1.0] {
        for d in [-1e-12, -1e-6, -1e-3, -0.5, -1.0, -7.0, -1e3, -1e9] {
            for t in [1.0, 1.5, 64.0] {
                rule &= accepts(d, q, t);
            }
        }
    }
    outcome(
        rel <= 0.01 && rule,
        format!(
            "best={:.1} phi2={target:.1} rel={rel:.2e} depth={} improving_always_accepted={rule} \
             (plain rule without annealing: rel={rel_plain:.2e} depth={})",
            found.best_score,
            found.best.depth(),
            plain.best.depth()
        ),
    )
}

fn ac9() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_phimdp");
    let run = || {
        Command::new(bin)
            .args(["run-agent", "--env", "tiny", "--n", "400", "--seed", "11", "--replicas", "3"])
            .output()
            .expect("binary runs")
    };
    let first = run();
    let second = run();
    let ok = first.status.success() && second.status.success() && first.stdout == second.stdout;
    outcome(
        ok && !first.stdout.is_empty(),
        format!("bytes={} identical={}", first.stdout.len(), first.stdout == second.stdout),
    )
}

fn main() {
    let (costs, took) = table_costs();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("AC1", Box::new(|| ac1(&costs, took))),
        ("AC2", Box::new(|| ac2(&costs))),
        ("AC3", Box::new(ac3)),
        ("AC4", Box::new(ac4)),
        ("AC5", Box::new(ac5)),
        ("AC6", Box::new(ac6)),
        ("AC7", Box::new(ac7)),
        ("AC8", Box::new(ac8)),
        ("AC9", Box::new(ac9)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let o = check();
        println!("{name} {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
