use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fedsec_core::cost::sweep::SweepConfig;
use fedsec_core::SimConfig;

/// Orchestrator keys at the top level, plus `experiment`, `out` and an
/// optional `[sweep]` table.
#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub experiment: String,
    pub out: Option<PathBuf>,
    pub sim: SimConfig,
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().context("config is not valid TOML")?;
        let experiment = match table.remove("experiment") {
            Some(v) => v
                .as_str()
                .context("experiment must be a string")?
                .to_string(),
            None => "default".into(),
        };
        let out = match table.remove("out") {
            Some(v) => Some(PathBuf::from(v.as_str().context("out must be a string")?)),
            None => None,
        };
        let sweep = match table.remove("sweep") {
            Some(v) => v.try_into().context("bad [sweep] table")?,
            None => SweepConfig::default(),
        };
        let sim: SimConfig = toml::Value::Table(table)
            .try_into()
            .context("bad orchestrator keys")?;
        Ok(Self {
            experiment,
            out,
            sim,
            sweep,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_sections() {
        let c = RunConfig::parse(
            "experiment = \"x\"\nout = \"o\"\npopulation = 5\nfraction = 1.0\n[sweep]\npopulation = 1000\ndim = 10\n",
        )
        .unwrap();
        assert_eq!(c.experiment, "x");
        assert_eq!(c.out.unwrap(), PathBuf::from("o"));
        assert_eq!(c.sim.population, 5);
        assert_eq!(c.sweep.population, 1000);
        assert_eq!(c.sweep.rounds, SweepConfig::default().rounds);
        assert!(RunConfig::parse("populaton = 5").is_err());
    }
}
