//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fail.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use cata_cli::{assign, batch, to_json, AssignArgs, BatchArgs, ROWS_FILE, SUMMARY_FILE};
use cata_core::auction::Algorithm;
use cata_core::geometry::{build_cone, min_future_separation, Cone};
use cata_core::rewards::{collision_flag, shaped_bid, time_discounted_reward};
use cata_core::scenarios::{trial_rng, verify_bound, BoundConfig, TrialRow};
use cata_core::{run_cata, run_greedy_centralized, AssignmentSet, AuctionConfig, Vec2, World};
use rand::Rng;
use tempfile::TempDir;

const SEED: u64 = 42;
/// Configurations whose closest approach lies this close to D are skipped.
const CONE_BAND: f64 = 1e-6;
/// Allowed relative gap between mean completion steps.
const COMPLETION_TOLERANCE: f64 = 0.15;
/// Deadlock ratio required in the densest grid cell.
const DEADLOCK_RATIO: f64 = 0.5;
const DENSE_CELL: &str = "grid-25";

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn objective_bound() -> Outcome {
    let config = BoundConfig::default();
    let report = verify_bound(&config, SEED).expect("bound instances");
    outcome(
        "cata >= 1/2 optimum",
        report.min_ratio >= 0.5 && report.holds(),
        format!(
            "{} instances, N {}..={}, min ratio {:.4}, mean {:.4}, violations {}",
            report.instances,
            config.robots_min,
            config.robots_max,
            report.min_ratio,
            report.mean_ratio,
            report.violations.len()
        ),
    )
}

fn greedy_equivalence() -> Outcome {
    let config = BoundConfig { robots_min: 2, robots_max: 25, ..BoundConfig::default() };
    let auction = AuctionConfig::default();
    let count = 1000;
    let mismatches = (0..count)
        .filter(|&i| {
            let world = config.instance(SEED, i).expect("instance");
            let cata = run_cata(&world, &auction).expect("cata");
            let greedy = run_greedy_centralized(&world, &auction).expect("greedy");
            cata.assignments != greedy.assignments
        })
        .count();
    outcome("distributed == centralized greedy", mismatches == 0, format!("{count} instances, {mismatches} mismatches"))
}

fn random_point(rng: &mut impl Rng, half: f64) -> Vec2 {
    Vec2::new(rng.random_range(-half..half), rng.random_range(-half..half))
}

fn cone_geometry() -> Outcome {
    let mut rng = trial_rng(SEED, 3);
    let (mut checked, mut skipped, mut wrong) = (0, 0, 0);
    while checked < 10_000 {
        let d = rng.random_range(0.2..3.0);
        let r_i = random_point(&mut rng, 10.0);
        let r_j = random_point(&mut rng, 10.0);
        let v_i = random_point(&mut rng, 2.0);
        let v_j = random_point(&mut rng, 2.0);
        let cone = build_cone(r_i, r_j, d).expect("cone");
        if matches!(cone, Cone::Degenerate) {
            continue;
        }
        let separation = min_future_separation(r_i, v_i, r_j, v_j);
        if (separation - d).abs() < CONE_BAND {
            skipped += 1;
            continue;
        }
        checked += 1;
        if cone.contains(v_i - v_j) != (separation < d) {
            wrong += 1;
        }
    }
    outcome(
        "cone membership <=> closest approach < D",
        wrong == 0,
        format!("{checked} configurations, {skipped} in the {CONE_BAND:e} band skipped, {wrong} disagreements"),
    )
}

fn read_rows(dir: &Path) -> Vec<TrialRow> {
    csv::Reader::from_path(dir.join(ROWS_FILE))
        .expect("rows.csv")
        .deserialize()
        .collect::<Result<_, _>>()
        .expect("trial rows")
}

#[derive(Default)]
struct CellStats {
    trials: usize,
    deadlocks: usize,
    avoidance: Vec<f64>,
    maintain_one: Vec<f64>,
    maintain_multi: Vec<f64>,
    completion: Vec<f64>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Stats keyed by cell, then `(cata, cbaa)`.
fn cell_stats(rows: &[TrialRow]) -> BTreeMap<String, (CellStats, CellStats)> {
    let mut cells: BTreeMap<String, (CellStats, CellStats)> = BTreeMap::new();
    for row in rows {
        let pair = cells.entry(row.cell.clone()).or_default();
        let s = match row.algorithm {
            Algorithm::Cata => &mut pair.0,
            Algorithm::Cbaa => &mut pair.1,
            Algorithm::Greedy => continue,
        };
        s.trials += 1;
        s.deadlocks += row.deadlock as usize;
        s.avoidance.push(row.avoidance as f64);
        s.maintain_one.push(row.maintain_one as f64);
        s.maintain_multi.push(row.maintain_multi as f64);
        if !row.deadlock {
            s.completion.push(row.completion_steps as f64);
        }
    }
    cells
}

fn deadlocks(cells: &BTreeMap<String, (CellStats, CellStats)>) -> Outcome {
    let mut pass = !cells.is_empty();
    let mut detail = Vec::new();
    for (cell, (cata, cbaa)) in cells {
        let ok = cata.deadlocks <= cbaa.deadlocks
            && (cell != DENSE_CELL || cata.deadlocks as f64 <= DEADLOCK_RATIO * cbaa.deadlocks as f64);
        pass &= ok;
        detail.push(format!("{cell} {}/{} vs {}/{}", cata.deadlocks, cata.trials, cbaa.deadlocks, cbaa.trials));
    }
    pass &= cells.contains_key(DENSE_CELL);
    outcome("deadlocks cata <= cbaa (<= half in grid-25)", pass, detail.join(", "))
}

fn incidents(cells: &BTreeMap<String, (CellStats, CellStats)>) -> Outcome {
    let mut pass = !cells.is_empty();
    let mut detail = Vec::new();
    for (cell, (cata, cbaa)) in cells {
        let m = |f: fn(&CellStats) -> &Vec<f64>| (median(f(cata)), median(f(cbaa)));
        let avoid = m(|s| &s.avoidance);
        let one = m(|s| &s.maintain_one);
        let multi = m(|s| &s.maintain_multi);
        let ok =
            avoid.0 <= avoid.1 && one.0 <= one.1 && multi.0 <= multi.1 && (cell != DENSE_CELL || multi.0 < multi.1);
        pass &= ok;
        detail.push(format!(
            "{cell} avoid {}/{} one {}/{} multi {}/{}",
            avoid.0, avoid.1, one.0, one.1, multi.0, multi.1
        ));
    }
    outcome("median incidents cata <= cbaa (multi < in grid-25)", pass, detail.join(", "))
}

fn completion(cells: &BTreeMap<String, (CellStats, CellStats)>) -> Outcome {
    let mut pass = !cells.is_empty();
    let mut detail = Vec::new();
    for (cell, (cata, cbaa)) in cells {
        if cata.completion.is_empty() || cbaa.completion.is_empty() {
            pass = false;
            detail.push(format!("{cell} no successful trials"));
            continue;
        }
        let (a, b) = (mean(&cata.completion), mean(&cbaa.completion));
        let gap = (a - b).abs() / b;
        pass &= gap <= COMPLETION_TOLERANCE;
        detail.push(format!("{cell} {a:.1}/{b:.1} ({:.1}%)", 100.0 * gap));
    }
    outcome("mean completion within 15%", pass, detail.join(", "))
}

fn diminishing_returns() -> Outcome {
    let config = BoundConfig { robots_min: 2, robots_max: 10, ..BoundConfig::default() };
    let mut rng = trial_rng(SEED, 7);
    let count = 10_000u64;
    let mut violations = 0;
    for i in 0..count {
        let world: World = config.instance(SEED.wrapping_add(1), i).expect("instance");
        let (mut small, mut big) = (AssignmentSet::new(), AssignmentSet::new());
        for _ in 0..world.num_robots() {
            let robot = world.robots()[rng.random_range(0..world.num_robots())].id;
            let task = world.tasks()[rng.random_range(0..world.num_tasks())].id;
            if big.insert(robot, task).is_ok() && rng.random_bool(0.5) {
                small.insert(robot, task).expect("subset insert");
            }
        }
        let robot = world.robots()[rng.random_range(0..world.num_robots())].id;
        let task = world.tasks()[rng.random_range(0..world.num_tasks())];
        let d = rng.random_range(0.5..5.0);
        let base = time_discounted_reward(world.robot_position(robot).unwrap(), &task, 1.0).unwrap();
        let bid =
            |set: &AssignmentSet| shaped_bid(base, collision_flag(&world, robot, &task, set, d).unwrap()).unwrap();
        if bid(&big) > bid(&small) {
            violations += 1;
        }
    }
    outcome(
        "shaped bid non-increasing on supersets",
        violations == 0,
        format!("{count} pairs, {violations} violations"),
    )
}

fn min_spacing(world: &World) -> f64 {
    let robots = world.robots();
    let mut best = f64::INFINITY;
    for (i, a) in robots.iter().enumerate() {
        for b in &robots[i + 1..] {
            best = best.min(a.position.distance(b.position));
        }
    }
    best
}

/// Largest D below which no cone can block, whatever the assignment: the
/// closest approach over every pair of robots heading to distinct tasks.
fn blocking_free_distance(world: &World) -> f64 {
    let heading = |r: Vec2, t: Vec2| (t - r).unit_or_zero();
    let mut best = min_spacing(world);
    for a in world.robots() {
        for b in world.robots() {
            if a.id == b.id {
                continue;
            }
            for ta in world.tasks() {
                let va = heading(a.position, ta.location);
                for tb in world.tasks() {
                    if ta.id != tb.id {
                        let vb = heading(b.position, tb.location);
                        best = best.min(min_future_separation(a.position, va, b.position, vb));
                    }
                }
            }
        }
    }
    best
}

fn completes(world: &World, floor: f64) -> bool {
    let auction = AuctionConfig { safety_distance_min: floor, ..AuctionConfig::default() };
    match run_cata(world, &auction) {
        Ok(r) => {
            r.complete
                && r.horizon_trace.windows(2).all(|w| w[1] <= w[0])
                && r.horizon_trace.iter().all(|&d| d >= floor)
        }
        Err(_) => false,
    }
}

fn horizon_completeness() -> Outcome {
    let config = BoundConfig { robots_min: 2, robots_max: 25, ..BoundConfig::default() };
    let count = 200;
    let mut failures = Vec::new();
    let mut spacing_only = 0;
    for i in 0..count {
        let world = config.instance(SEED.wrapping_add(2), i).expect("instance");
        if !completes(&world, 0.5 * blocking_free_distance(&world)) {
            failures.push(i);
        }
        spacing_only += !completes(&world, 0.1 * min_spacing(&world)) as usize;
    }
    outcome(
        "receding horizon completes, D non-increasing and >= D_min",
        failures.is_empty(),
        format!(
            "{count} instances with no cone blocking at D_min, failures {failures:?}; \
             informational: {spacing_only} incomplete with D_min = 0.1 x robot spacing alone"
        ),
    )
}

fn batch_args(out: &Path, jobs: usize) -> BatchArgs {
    BatchArgs { out: out.to_path_buf(), trials: None, jobs: Some(jobs), resume: false, seed: SEED, config: None }
}

fn determinism(first: &Path, scratch: &Path) -> Outcome {
    let second = scratch.join("batch-1");
    batch(&batch_args(&second, 1)).expect("single-threaded batch");
    let same_batch =
        [ROWS_FILE, SUMMARY_FILE].iter().all(|f| fs::read(first.join(f)).unwrap() == fs::read(second.join(f)).unwrap());

    let world = scratch.join("world.json");
    let spec = serde_json::json!({
        "layout": {"kind": "grid", "rows": 5, "cols": 5, "spacing": 2.5},
        "layout_center": {"x": 0.0, "y": -25.0},
        "tasks": {"kind": "normal", "count": 25, "center": {"x": 0.0, "y": 0.0}, "sigma_x": 10.0, "sigma_y": 10.0},
        "task_value": 100.0,
        "task_discount": 0.95,
        "min_robot_spacing": 0.5,
        "min_task_spacing": 0.7
    });
    fs::write(&world, spec.to_string()).unwrap();
    let run = || {
        let args = AssignArgs { algorithm: Algorithm::Cata, world: world.clone(), seed: SEED, config: None, out: None };
        to_json(&assign(&args).expect("assign"))
    };
    let same_assign = run() == run();
    outcome(
        "batch byte-identical across jobs; assign reproducible",
        same_batch && same_assign,
        format!("batch jobs 4 vs 1 identical: {same_batch}, assign re-run identical: {same_assign}"),
    )
}

fn main() -> ExitCode {
    let scratch = TempDir::new().expect("tempdir");
    let first = scratch.path().join("batch-4");
    batch(&batch_args(&first, 4)).expect("default batch");
    let cells = cell_stats(&read_rows(&first));

    let outcomes = [
        objective_bound(),
        greedy_equivalence(),
        cone_geometry(),
        deadlocks(&cells),
        incidents(&cells),
        completion(&cells),
        diminishing_returns(),
        horizon_completeness(),
        determinism(&first, scratch.path()),
    ];
    for (i, o) in outcomes.iter().enumerate() {
        println!("{} {}. {}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.name, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
