//! CSV emission and parsing. All floats are printed with 17
//! significant digits so files round-trip to the exact in-memory
//! values, and runs with identical configs produce byte-identical
//! output.

use lsvi_core::agent::RunOutput;

use crate::error::HarnessError;

pub const SEED_CSV_HEADER: &str = "episode,reward,cumulative_regret,gamma,bonus_sum,solver_converged";

/// 17 significant digits: enough to reconstruct any f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// One per-seed file parsed back into memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedCsv {
    pub rewards: Vec<f64>,
    pub cumulative_regret: Vec<f64>,
    pub gamma: f64,
    pub bonus_sums: Vec<f64>,
    pub solver_converged: Vec<bool>,
}

pub fn format_seed_csv(run: &RunOutput) -> String {
    let mut out = String::with_capacity(64 * (run.regret.episodes() + 1));
    out.push_str(SEED_CSV_HEADER);
    out.push('\n');
    let learning = run.artifacts.has_learning_artifacts();
    for t in 0..run.regret.episodes() {
        let bonus_sum = if learning { run.artifacts.bonus_sum(t) } else { 0.0 };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t + 1,
            fmt_f64(run.regret.per_episode_reward[t]),
            fmt_f64(run.regret.cumulative_regret[t]),
            fmt_f64(run.metadata.gamma),
            fmt_f64(bonus_sum),
            run.artifacts.solver_converged[t],
        ));
    }
    out
}

pub fn parse_seed_csv(text: &str, path: &str) -> Result<SeedCsv, HarnessError> {
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, message: String| HarnessError::Parse {
        path: path.to_string(),
        line,
        message,
    };
    match lines.next() {
        Some((_, header)) if header.trim() == SEED_CSV_HEADER => {}
        Some((i, header)) => {
            return Err(parse_err(i + 1, format!("unexpected header '{header}'")));
        }
        None => return Err(parse_err(1, "empty file".to_string())),
    }
    let mut csv = SeedCsv {
        rewards: Vec::new(),
        cumulative_regret: Vec::new(),
        gamma: 0.0,
        bonus_sums: Vec::new(),
        solver_converged: Vec::new(),
    };
    for (i, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(i + 1, format!("expected 6 fields, got {}", fields.len())));
        }
        let episode: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad episode '{}'", fields[0])))?;
        if episode != csv.rewards.len() + 1 {
            return Err(parse_err(i + 1, format!("episode {episode} out of order")));
        }
        let f = |idx: usize| -> Result<f64, HarnessError> {
            fields[idx]
                .parse()
                .map_err(|_| parse_err(i + 1, format!("bad float '{}'", fields[idx])))
        };
        csv.rewards.push(f(1)?);
        csv.cumulative_regret.push(f(2)?);
        csv.gamma = f(3)?;
        csv.bonus_sums.push(f(4)?);
        let converged = match fields[5] {
            "true" => true,
            "false" => false,
            other => return Err(parse_err(i + 1, format!("bad bool '{other}'"))),
        };
        csv.solver_converged.push(converged);
    }
    Ok(csv)
}

/// One aggregated series: per-episode mean and standard deviation of
/// cumulative regret across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AggSeries {
    pub name: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Mean and sample standard deviation across seeds, per episode.
pub fn aggregate(per_seed: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = per_seed.len();
    let episodes = per_seed[0].len();
    let mut mean = vec![0.0; episodes];
    let mut std = vec![0.0; episodes];
    for t in 0..episodes {
        let sum: f64 = per_seed.iter().map(|run| run[t]).sum();
        mean[t] = sum / n as f64;
        if n > 1 {
            let var: f64 = per_seed
                .iter()
                .map(|run| (run[t] - mean[t]) * (run[t] - mean[t]))
                .sum::<f64>()
                / (n - 1) as f64;
            std[t] = var.sqrt();
        }
    }
    (mean, std)
}

pub fn format_aggregated_csv(series: &[AggSeries]) -> String {
    let episodes = series[0].mean.len();
    let mut out = String::new();
    out.push_str("episode");
    for s in series {
        out.push_str(&format!(",{0}_mean,{0}_std", s.name));
    }
    out.push('\n');
    for t in 0..episodes {
        out.push_str(&(t + 1).to_string());
        for s in series {
            out.push(',');
            out.push_str(&fmt_f64(s.mean[t]));
            out.push(',');
            out.push_str(&fmt_f64(s.std[t]));
        }
        out.push('\n');
    }
    out
}

pub fn parse_aggregated_csv(
    text: &str,
    path: &str,
) -> Result<(Vec<f64>, Vec<AggSeries>), HarnessError> {
    let parse_err = |line: usize, message: String| HarnessError::Parse {
        path: path.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".to_string()))?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.first() != Some(&"episode") || cols.len() < 3 || !(cols.len() - 1).is_multiple_of(2) {
        return Err(parse_err(
            1,
            format!("expected 'episode,<name>_mean,<name>_std,...', got '{header}'"),
        ));
    }
    let mut series = Vec::new();
    let mut idx = 1;
    while idx < cols.len() {
        let name = cols[idx]
            .strip_suffix("_mean")
            .ok_or_else(|| parse_err(1, format!("expected a _mean column, got '{}'", cols[idx])))?;
        let std_col = cols[idx + 1];
        if std_col.strip_suffix("_std") != Some(name) {
            return Err(parse_err(
                1,
                format!("column '{std_col}' does not pair with '{}'", cols[idx]),
            ));
        }
        series.push(AggSeries {
            name: name.to_string(),
            mean: Vec::new(),
            std: Vec::new(),
        });
        idx += 2;
    }
    let mut episodes = Vec::new();
    for (i, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(parse_err(
                i + 1,
                format!("expected {} fields, got {}", cols.len(), fields.len()),
            ));
        }
        let episode: f64 = fields[0]
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad episode '{}'", fields[0])))?;
        episodes.push(episode);
        for (k, s) in series.iter_mut().enumerate() {
            let mean: f64 = fields[1 + 2 * k]
                .parse()
                .map_err(|_| parse_err(i + 1, format!("bad float '{}'", fields[1 + 2 * k])))?;
            let std: f64 = fields[2 + 2 * k]
                .parse()
                .map_err(|_| parse_err(i + 1, format!("bad float '{}'", fields[2 + 2 * k])))?;
            s.mean.push(mean);
            s.std.push(std);
        }
    }
    if episodes.is_empty() {
        return Err(parse_err(2, "no data rows".to_string()));
    }
    Ok((episodes, series))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_roundtrips_exactly() {
        for v in [
            0.1,
            1.0 / 3.0,
            std::f64::consts::PI,
            1e-300,
            -7.25,
            0.0,
        ] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {s}");
        }
    }

    #[test]
    fn aggregated_roundtrip() {
        let series = vec![
            AggSeries {
                name: "lsvi_ucb".into(),
                mean: vec![0.1, 0.2, 0.3],
                std: vec![0.0, 0.01, 0.02],
            },
            AggSeries {
                name: "random".into(),
                mean: vec![0.5, 1.0, 1.5],
                std: vec![0.1, 0.1, 0.1],
            },
        ];
        let text = format_aggregated_csv(&series);
        let (episodes, parsed) = parse_aggregated_csv(&text, "mem").unwrap();
        assert_eq!(episodes, vec![1.0, 2.0, 3.0]);
        assert_eq!(parsed, series);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let text = "episode,a_mean,a_std\n1,0.5,0.1\n2,banana,0.1\n";
        match parse_aggregated_csv(text, "mem") {
            Err(HarnessError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn seed_csv_rejects_bad_header() {
        assert!(parse_seed_csv("nope\n", "mem").is_err());
    }

    #[test]
    fn seed_csv_reproduces_the_regret_log_exactly() {
        use lsvi_core::agent::{run_episodic, AgentConfig};
        use lsvi_core::envs::make_chain;
        use lsvi_core::links::LinkSpec;

        let env = make_chain(3, 4).unwrap();
        let config = AgentConfig {
            gamma_scale: 0.05,
            ball_radius: 8.0_f64.sqrt(),
            ..AgentConfig::lsvi_ucb(25, LinkSpec::identity())
        };
        let run = run_episodic(&env, &config, 3).unwrap();
        let text = format_seed_csv(&run);
        let parsed = parse_seed_csv(&text, "mem").unwrap();
        assert_eq!(parsed.rewards.len(), 25);
        for t in 0..25 {
            assert_eq!(
                parsed.rewards[t].to_bits(),
                run.regret.per_episode_reward[t].to_bits()
            );
            assert_eq!(
                parsed.cumulative_regret[t].to_bits(),
                run.regret.cumulative_regret[t].to_bits()
            );
            assert_eq!(
                parsed.bonus_sums[t].to_bits(),
                run.artifacts.bonus_sum(t).to_bits()
            );
        }
        assert_eq!(parsed.gamma.to_bits(), run.metadata.gamma.to_bits());
        assert_eq!(parsed.solver_converged, run.artifacts.solver_converged);
    }

    #[test]
    fn aggregation_mean_is_the_arithmetic_mean() {
        let per_seed = vec![
            vec![1.0, 2.0, 3.0],
            vec![2.0, 3.0, 4.0],
            vec![0.5, 0.5, 0.5],
        ];
        let (mean, _) = aggregate(&per_seed);
        for t in 0..3 {
            let expected = (per_seed[0][t] + per_seed[1][t] + per_seed[2][t]) / 3.0;
            assert!((mean[t] - expected).abs() <= 1e-12);
        }
    }
}
