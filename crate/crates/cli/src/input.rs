use std::path::PathBuf;

use amps_core::grid::{build_dc, parse_matpower, synthetic_grid, DcModel, GridCase, GridError, SynthParams};
use anyhow::{anyhow, bail, Context};
use clap::Args;

use crate::commands::{Failure, EXIT_CONFIG, EXIT_SINGULAR};

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct InputArgs {
    /// MATPOWER case file.
    #[arg(long)]
    pub case: Option<PathBuf>,
    /// Synthetic grid: n=<N>,deg=<D>,seed=<S>[,x=<lo>:<hi>].
    #[arg(long = "gen")]
    pub gen: Option<String>,
}

pub fn parse_gen_spec(spec: &str) -> anyhow::Result<SynthParams> {
    let mut p = SynthParams::new(0, 2.6, 1);
    let mut have_n = false;
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("`{part}` is not key=value"))?;
        match key.trim() {
            "n" => {
                p.n = value.parse().with_context(|| format!("bad bus count `{value}`"))?;
                have_n = true;
            }
            "deg" => p.avg_degree = value.parse().with_context(|| format!("bad degree `{value}`"))?,
            "seed" => p.seed = value.parse().with_context(|| format!("bad seed `{value}`"))?,
            "x" => {
                let (lo, hi) = value
                    .split_once(':')
                    .ok_or_else(|| anyhow!("reactance range must be lo:hi"))?;
                p.x_range = (lo.parse()?, hi.parse()?);
            }
            other => bail!("unknown synthetic grid key `{other}`"),
        }
    }
    if !have_n {
        bail!("synthetic grid spec needs n=<buses>");
    }
    Ok(p)
}

impl InputArgs {
    pub fn load_case(&self) -> Result<GridCase, Failure> {
        if let Some(path) = &self.case {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::config)?;
            parse_matpower(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(Failure::config)
        } else {
            let spec = self.gen.as_deref().unwrap_or_default();
            let params = parse_gen_spec(spec).map_err(Failure::config)?;
            synthetic_grid(&params).map_err(|e| Failure::config(e.into()))
        }
    }

    pub fn load_model(&self) -> Result<DcModel, Failure> {
        let case = self.load_case()?;
        build_dc(&case).map_err(|e| {
            let code = match e {
                GridError::DisconnectedBase { .. } => EXIT_SINGULAR,
                _ => EXIT_CONFIG,
            };
            Failure {
                code,
                error: anyhow::Error::from(e).context("building the DC model"),
            }
        })
    }
}
