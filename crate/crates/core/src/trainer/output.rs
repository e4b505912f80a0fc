//! CSV writers for training logs and toy heatmaps.

use std::io::Write;

use super::{EpisodeLog, ToyReport};
use crate::error::Result;

pub const EPISODE_CSV_HEADER: [&str; 7] = ["episode", "timesteps", "return", "avg100", "alpha", "critic_loss", "wall_ms"];

pub const HEATMAP_CSV_HEADER: [&str; 3] = ["iteration", "action_index", "avg_density"];

/// One row per episode. Floats use the shortest round-trip form, so equal
/// logs give equal bytes.
pub fn write_episode_csv<W: Write>(logs: &[EpisodeLog], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EPISODE_CSV_HEADER)?;
    for l in logs {
        w.write_record([
            l.episode.to_string(),
            l.timesteps.to_string(),
            l.episode_return.to_string(),
            l.avg100.to_string(),
            l.alpha.to_string(),
            l.critic_loss.map(|v| v.to_string()).unwrap_or_default(),
            l.wall_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: one row per recorded iteration and grid action.
pub fn write_heatmap_csv<W: Write>(report: &ToyReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEATMAP_CSV_HEADER)?;
    for (row, &it) in report.heatmap.rows().into_iter().zip(&report.heatmap_iterations) {
        for (a, v) in row.iter().enumerate() {
            w.write_record([it.to_string(), a.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{run_toy, Algorithm, RunConfig, ToyConfig, Trainer};

    #[test]
    fn episode_csv_layout() {
        let cfg = RunConfig {
            algorithm: Algorithm::A2c,
            episodes: 3,
            hidden: vec![8],
            ..RunConfig::default()
        };
        let logs = Trainer::new(cfg).unwrap().run().unwrap();
        let mut buf = Vec::new();
        write_episode_csv(&logs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "episode,timesteps,return,avg100,alpha,critic_loss,wall_ms");
        assert_eq!(lines.len(), 4);
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first[0], "1");
        assert_eq!(first[5].parse::<f64>().ok(), logs[0].critic_loss);
        assert_eq!(first[6], "0");
        assert_eq!(first[2].parse::<f64>().unwrap(), logs[0].episode_return);
    }

    #[test]
    fn heatmap_csv_long_format() {
        let cfg = ToyConfig {
            trials: 1,
            samples: 300,
            choices: 5,
            ..ToyConfig::default()
        };
        let report = run_toy(&cfg).unwrap();
        let mut buf = Vec::new();
        write_heatmap_csv(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 5);
        assert!(text.starts_with("iteration,action_index,avg_density\n0,0,0.2\n"));
    }
}
