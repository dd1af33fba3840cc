//! Subcommand implementations.

use crate::{BenchArgs, GenerateArgs, SolveArgs, VerifyArgs};
use crate::{EXIT_PARSE, EXIT_SOLVE, EXIT_TOLERANCE, EXIT_USAGE, EXIT_VALIDATION};
use parmpc::baselines::{dense_kkt_oracle, kkt_residual, riccati_solve};
use parmpc::json::{parse_problem, ProblemJson, SolutionJson};
use parmpc::problem::{
    eliminate_active_set, generate_random_stable, recover_eliminated_duals, validate_problem,
    EliminationRecord, MpcProblem,
};
use parmpc::tree::{solve_newton_step, solve_newton_step_detailed, SolveOptions};
use parmpc::NewtonSolution;
use std::fs;
use std::path::Path;
use std::time::Instant;

fn write_output(path: Option<&Path>, contents: &str) -> Result<(), u8> {
    match path {
        Some(path) => fs::write(path, contents).map_err(|e| {
            eprintln!("error: cannot write {}: {e}", path.display());
            EXIT_SOLVE
        }),
        None => {
            println!("{contents}");
            Ok(())
        }
    }
}

pub fn generate(args: &GenerateArgs) -> u8 {
    if args.horizon == 0 || args.nx == 0 || args.nu == 0 {
        eprintln!("error: dimensions and horizon must be positive");
        return EXIT_USAGE;
    }
    let problem = match generate_random_stable(
        args.seed,
        args.nx,
        args.nu,
        args.horizon,
        args.spectral_bound,
    ) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let violations = validate_problem(&problem, 1e-10);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("validation: {v}");
        }
        return EXIT_VALIDATION;
    }
    let doc = ProblemJson::from_problem(&problem);
    let text = serde_json::to_string_pretty(&doc).expect("serialization cannot fail");
    match write_output(args.out.as_deref(), &text) {
        Ok(()) => 0,
        Err(code) => code,
    }
}

/// Load a problem file; when it carries an active set the bounds are
/// eliminated and the reduced problem is returned with the record.
fn load_problem(path: &Path) -> Result<(MpcProblem, Option<EliminationRecord>), u8> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        EXIT_PARSE
    })?;
    let doc = parse_problem(&text).map_err(|e| {
        eprintln!("parse error: {e}");
        EXIT_PARSE
    })?;
    let active = doc.to_active_set().map_err(|e| {
        eprintln!("parse error: {e}");
        EXIT_PARSE
    })?;
    match active {
        Some(active) if !active.is_empty() => {
            let boxed = doc.to_box_problem().map_err(|e| {
                eprintln!("parse error: {e}");
                EXIT_PARSE
            })?;
            let (reduced, record) = eliminate_active_set(&boxed, &active).map_err(|e| {
                eprintln!("validation: {e}");
                EXIT_VALIDATION
            })?;
            Ok((reduced, Some(record)))
        }
        _ => {
            let problem = doc.to_problem().map_err(|e| {
                eprintln!("parse error: {e}");
                EXIT_PARSE
            })?;
            Ok((problem, None))
        }
    }
}

fn attach_recovered_duals(
    sol: &mut NewtonSolution,
    rec: Option<&EliminationRecord>,
) -> Result<(), u8> {
    if let Some(rec) = rec {
        if sol.nu.is_none() {
            let nu = recover_eliminated_duals(sol, rec).map_err(|e| {
                eprintln!("solve error: {e}");
                EXIT_SOLVE
            })?;
            sol.nu = Some(nu);
        }
    }
    Ok(())
}

pub fn solve(args: &SolveArgs) -> u8 {
    let (problem, record) = match load_problem(&args.problem) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let violations = validate_problem(&problem, 1e-10);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("validation: {v}");
        }
        return EXIT_VALIDATION;
    }

    let opts = SolveOptions {
        s: args.s,
        p_min: args.p_min,
        workers: args.workers,
    };
    let started = Instant::now();
    let result = match args.solver.as_str() {
        "tree" => solve_newton_step(&problem, record.as_ref(), &opts),
        "riccati" => riccati_solve(&problem),
        "oracle" => dense_kkt_oracle(&problem),
        other => {
            eprintln!("error: unknown solver '{other}' (expected tree, riccati, or oracle)");
            return EXIT_USAGE;
        }
    };
    let mut solution = match result {
        Ok(sol) => sol,
        Err(e) => {
            eprintln!("solve error: {e}");
            return EXIT_SOLVE;
        }
    };
    let wall = started.elapsed().as_secs_f64();
    if let Err(code) = attach_recovered_duals(&mut solution, record.as_ref()) {
        return code;
    }

    let residual = kkt_residual(&problem, &solution);
    let sim = match args.solver.as_str() {
        "tree" => Some(solution.timing.simulated_parallel_seconds()),
        _ => None,
    };
    println!(
        "solver: {}  N: {}  objective: {:.12e}  kkt residual: {:.3e}  wall: {:.6}s",
        args.solver,
        problem.horizon(),
        solution.objective,
        residual,
        wall
    );
    if let Some(sim) = sim {
        println!("simulated parallel time: {:.6}s", sim);
    }
    if let Some(out) = &args.out {
        let doc = SolutionJson::from_solution(&solution, residual, sim);
        let text = serde_json::to_string_pretty(&doc).expect("serialization cannot fail");
        if let Err(code) = write_output(Some(out), &text) {
            return code;
        }
    }
    if residual > args.tol {
        eprintln!("residual {residual:.3e} exceeds tolerance {:.3e}", args.tol);
        return EXIT_TOLERANCE;
    }
    0
}

pub fn bench(args: &BenchArgs) -> u8 {
    if args.horizons.contains(&0) || args.reps == 0 {
        eprintln!("error: horizons and repetitions must be positive");
        return EXIT_USAGE;
    }
    let opts = SolveOptions {
        s: args.s,
        p_min: args.p_min,
        workers: args.workers,
    };
    let mut csv = String::from("solver,N,mean_time_s,sim_parallel_time_s,residual,objective\n");
    for (i, &n) in args.horizons.iter().enumerate() {
        let problem = match generate_random_stable(
            args.seed + i as u64,
            args.nx,
            args.nu,
            n,
            args.spectral_bound,
        ) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        };

        // tree solver: wall time and simulated parallel time, averaged
        let mut wall_sum = 0.0;
        let mut sim_sum = 0.0;
        let mut tree_sol = None;
        for _ in 0..args.reps {
            let started = Instant::now();
            match solve_newton_step(&problem, None, &opts) {
                Ok(sol) => {
                    wall_sum += started.elapsed().as_secs_f64();
                    sim_sum += sol.timing.simulated_parallel_seconds();
                    tree_sol = Some(sol);
                }
                Err(e) => {
                    eprintln!("solve error at N={n}: {e}");
                    return EXIT_SOLVE;
                }
            }
        }
        let tree_sol = tree_sol.expect("reps >= 1");
        let tree_residual = kkt_residual(&problem, &tree_sol);
        if tree_residual > args.tol {
            eprintln!(
                "tree residual {tree_residual:.3e} at N={n} exceeds tolerance {:.3e}",
                args.tol
            );
            return EXIT_TOLERANCE;
        }
        csv.push_str(&format!(
            "tree,{n},{:.9},{:.9},{tree_residual:.3e},{:.12e}\n",
            wall_sum / args.reps as f64,
            sim_sum / args.reps as f64,
            tree_sol.objective
        ));

        // serial Riccati baseline
        let mut wall_sum = 0.0;
        let mut riccati_sol = None;
        for _ in 0..args.reps {
            let started = Instant::now();
            match riccati_solve(&problem) {
                Ok(sol) => {
                    wall_sum += started.elapsed().as_secs_f64();
                    riccati_sol = Some(sol);
                }
                Err(e) => {
                    eprintln!("solve error at N={n}: {e}");
                    return EXIT_SOLVE;
                }
            }
        }
        let riccati_sol = riccati_sol.expect("reps >= 1");
        let riccati_residual = kkt_residual(&problem, &riccati_sol);
        if riccati_residual > args.tol {
            eprintln!(
                "riccati residual {riccati_residual:.3e} at N={n} exceeds tolerance {:.3e}",
                args.tol
            );
            return EXIT_TOLERANCE;
        }
        csv.push_str(&format!(
            "riccati,{n},{:.9},,{riccati_residual:.3e},{:.12e}\n",
            wall_sum / args.reps as f64,
            riccati_sol.objective
        ));
    }
    match write_output(args.out.as_deref(), csv.trim_end()) {
        Ok(()) => 0,
        Err(code) => code,
    }
}

struct Verdict {
    failures: usize,
}

impl Verdict {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        if pass {
            println!("PASS {name}: {detail}");
        } else {
            println!("FAIL {name}: {detail}");
            self.failures += 1;
        }
    }
}

pub fn verify(args: &VerifyArgs) -> u8 {
    let (problem, record) = match load_problem(&args.problem) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let mut verdict = Verdict { failures: 0 };

    let violations = validate_problem(&problem, 1e-10);
    verdict.check(
        "validation",
        violations.is_empty(),
        if violations.is_empty() {
            "problem data satisfies all assumptions".into()
        } else {
            violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ")
        },
    );
    if !violations.is_empty() {
        println!("verify: {} check(s) failed", verdict.failures);
        return EXIT_VALIDATION;
    }
    if record.is_some() {
        println!("note: active bounds eliminated; verifying the reduced problem");
    }

    let opts = SolveOptions {
        s: args.s,
        p_min: args.p_min,
        workers: args.workers,
    };
    let (tree_sol, report) = match solve_newton_step_detailed(&problem, record.as_ref(), &opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("solve error: {e}");
            return EXIT_SOLVE;
        }
    };
    let oracle = match dense_kkt_oracle(&problem) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("solve error: {e}");
            return EXIT_SOLVE;
        }
    };
    let riccati = match riccati_solve(&problem) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("solve error: {e}");
            return EXIT_SOLVE;
        }
    };

    let rel = |a: &NewtonSolution, b: &NewtonSolution| {
        let p = (a.stacked_primal() - b.stacked_primal()).abs().max()
            / (1.0 + b.stacked_primal().abs().max());
        let d = (a.stacked_dual() - b.stacked_dual()).abs().max()
            / (1.0 + b.stacked_dual().abs().max());
        p.max(d)
    };

    let tol = args.tol;
    let err = rel(&tree_sol, &oracle);
    verdict.check(
        "tree vs oracle",
        err <= tol,
        format!("max relative error {err:.3e}"),
    );
    let err = rel(&riccati, &oracle);
    verdict.check(
        "riccati vs oracle",
        err <= tol,
        format!("max relative error {err:.3e}"),
    );

    let res = kkt_residual(&problem, &tree_sol);
    verdict.check("tree KKT residual", res <= tol, format!("{res:.3e}"));
    let res = kkt_residual(&problem, &oracle);
    verdict.check("oracle KKT residual", res <= tol, format!("{res:.3e}"));

    let drift = (report.root_objective - report.original_objective).abs()
        / (1.0 + report.original_objective.abs());
    verdict.check(
        "objective preservation",
        drift <= tol,
        format!("root vs original relative drift {drift:.3e}"),
    );

    let relation = report.max_dual_relation_residual();
    verdict.check(
        "dual relations",
        relation <= tol,
        format!(
            "max residual {relation:.3e} over {} blocks ({} degenerate)",
            report.reduce_solves, report.degenerate_blocks
        ),
    );
    let boundary = report.max_boundary_gap();
    verdict.check(
        "block boundaries",
        boundary <= tol,
        format!("max gap {boundary:.3e}"),
    );
    let licq = report.max_licq_residual();
    verdict.check(
        "coupling duals (LICQ blocks)",
        licq <= tol,
        format!("max residual {licq:.3e}"),
    );
    verdict.check(
        "null-space property",
        report.nullspace_residual <= 1e-10,
        format!("max residual {:.3e}", report.nullspace_residual),
    );

    if verdict.failures == 0 {
        println!("verify: all checks passed");
        0
    } else {
        println!("verify: {} check(s) failed", verdict.failures);
        EXIT_VALIDATION
    }
}
