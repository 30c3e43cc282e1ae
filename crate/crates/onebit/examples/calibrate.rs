//! Dev-only calibration scans.
use onebit::experiment::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("c3");
    match mode {
        // criterion 3 verification: both schemes, n=50, s=3..5
        "c3-socp" => {
            for s in [3usize, 4, 5] {
                for q in [400usize, 560] {
                    let mut spec = ExperimentSpec::new(ExperimentKind::SchemeUnit);
                    spec.n = 50; spec.s = s; spec.q = q; spec.trials = 100;
                    spec.scheme = SchemeKind::Socp;
                    spec.base_seed = 123;
                    let out = run_scheme_unit(&spec).unwrap();
                    println!("socp s={s} q={q}: {}/100", out.successes);
                }
            }
        }
        "c3-ht" => {
            for s in [3usize, 4, 5] {
                for q in [2200usize, 3000, 3800] {
                    let mut spec = ExperimentSpec::new(ExperimentKind::SchemeUnit);
                    spec.n = 50; spec.s = s; spec.q = q; spec.trials = 100;
                    spec.scheme = SchemeKind::Ht;
                    spec.base_seed = 123;
                    let out = run_scheme_unit(&spec).unwrap();
                    println!("ht s={s} q={q}: {}/100", out.successes);
                }
            }
        }
        // criterion 2: all-t contraction rate, n=100 s=5 T=5
        "c2" => {
            for q in [3000usize, 4000, 5000] {
                let n = 100; let s = 5; let t_batches = 5;
                let m = q * t_batches;
                let mut all_ok = 0; let mut slopes = Vec::new();
                for trial in 0..100u64 {
                    let stream = trial_stream(17, 0, trial);
                    let mut spec = ExperimentSpec::new(ExperimentKind::NoiseCurve);
                    spec.n = n; spec.s = s; spec.q = q; spec.t_batches = t_batches;
                    spec.trials = 1; spec.base_seed = 17;
                    let _ = stream; // per-trial via run_single
                    let mut one = spec.clone();
                    one.base_seed = 17 + trial; // vary trial seed
                    let run = run_single(&one, 0).unwrap();
                    let ok = run.per_batch_rel_error.iter().enumerate()
                        .all(|(i, e)| *e <= 2f64.powi(-(i as i32 + 1)));
                    if ok { all_ok += 1; }
                    let xs: Vec<f64> = (1..=t_batches).map(|t| t as f64).collect();
                    let ys: Vec<f64> = run.per_batch_rel_error.iter().map(|e| e.log2()).collect();
                    let (slope, _, _) = linear_fit(&xs, &ys);
                    slopes.push(slope);
                }
                let mean_slope: f64 = slopes.iter().sum::<f64>() / slopes.len() as f64;
                println!("q={q}: all-t contraction {all_ok}/100, mean log2 slope {mean_slope:.3}");
            }
        }
        // criterion 5 noise floor: HT sigma set
        "c5" => {
            for sigma in [0.0, 1e-3, 1e-2] {
                let mut spec = ExperimentSpec::new(ExperimentKind::NoiseCurve);
                spec.n = 100; spec.s = 5; spec.q = 4000; spec.t_batches = 8;
                spec.trials = 25; spec.sigma = sigma; spec.scheme = SchemeKind::Ht;
                spec.base_seed = 29;
                let out = run_noise_curve(&spec).unwrap();
                print!("sigma={sigma:.0e}:");
                for r in &out.rows { print!(" {:.2e}", r.median_rel_error); }
                println!();
            }
            // flips
            for ff in [0.0, 0.005] {
                let mut spec = ExperimentSpec::new(ExperimentKind::NoiseCurve);
                spec.n = 100; spec.s = 5; spec.q = 4000; spec.t_batches = 8;
                spec.trials = 25; spec.flip_frac = ff; spec.scheme = SchemeKind::Ht;
                spec.base_seed = 31;
                let out = run_noise_curve(&spec).unwrap();
                print!("flips={ff}:");
                for r in &out.rows { print!(" {:.2e}", r.median_rel_error); }
                println!();
            }
        }
        // criterion 5 SOCP with flips -> infeasible events
        "c5-socp" => {
            let mut spec = ExperimentSpec::new(ExperimentKind::NoiseCurve);
            spec.n = 50; spec.s = 3; spec.q = 400; spec.t_batches = 3;
            spec.trials = 5; spec.flip_frac = 0.01; spec.scheme = SchemeKind::Socp;
            spec.base_seed = 37;
            spec.solver.max_iters = 4000;
            let out = run_noise_curve(&spec).unwrap();
            for r in &out.rows {
                println!("t={} median={:.3e} infeasible={}", r.t, r.median_rel_error, r.infeasible_count);
            }
        }
        _ => eprintln!("unknown mode"),
    }
}
