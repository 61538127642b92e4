// temporary probe (not committed)
use std::time::Instant;
use gridloc::agent_dqn::{train, Hyperparams};
use gridloc::data_io::{generate_cases, split, Dataset, SynthConfig};
use gridloc::grid_env::EnvOpts;
use gridloc::metrics::{Method, RunMetrics};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let episodes: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let cfg = SynthConfig { count: 60, seed: 7, ..SynthConfig::default() };
    let (items, _, spec) = generate_cases(&cfg).unwrap();
    let ds = Dataset { items, spec };
    let (tr, te) = split(ds, 30, 7).unwrap();
    let hp = Hyperparams { episodes, ..Hyperparams::default() };
    let opts = EnvOpts { overlap_threshold: 1, scale: 4 };
    let mut m = RunMetrics::new(Method::Dqn);
    let t0 = Instant::now();
    let _net = train(&tr, &te, hp, opts, &mut m).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!("{} episodes in {:.1}s ({:.2}s/episode)", episodes, dt, dt / episodes as f64);
    for r in &m.rows {
        println!("ep {:>3} eps {:.4} reward {:+.3} loss {} acc {:.3}",
            r.step, r.epsilon.unwrap(), r.mean_reward.unwrap(),
            r.train_loss.map(|l| format!("{l:.4}")).unwrap_or_else(|| "-".into()), r.test_accuracy);
    }
}
