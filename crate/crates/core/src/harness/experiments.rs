//! The two numerical examples.

use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentId};
use super::output::Table;
use crate::detector::build_cdf_l;
use crate::error::{Error, Result};
use crate::masking::{epsilon_max, mask_deterministic_from, mask_stochastic, DetMaskConfig, SpsaConfig};
use crate::rng::SeedStream;
use crate::utility::UtilityModel;

pub const EX1_HEADER: &str = "utility,epsilon,epsilon_over_epsmax,perturbation_l2,utility_loss,feasible,seed";
pub const EX2_HEADER: &str = "lambda,alpha,type1_prob,utility_loss,iters,seed";

fn expect(cfg: &ExperimentConfig, id: ExperimentId) -> Result<()> {
    cfg.validate()?;
    if cfg.experiment != id {
        return Err(Error::InvalidConfig(format!("config is for {:?}, not {id:?}", cfg.experiment)));
    }
    Ok(())
}

/// Minimum perturbation over a grid of margin bounds `f * epsilon_max`,
/// one block of rows per utility in grid order.
///
/// Grid points are solved in increasing `epsilon`, each seeded with the
/// previous solution, which is feasible for every larger bound.
pub fn run_example1(cfg: &ExperimentConfig) -> Result<Table> {
    expect(cfg, ExperimentId::Ex1)?;
    let root = SeedStream::new(cfg.seed);
    let probes = cfg.draw_probes(&root);
    let mut table = Table::new(EX1_HEADER);
    for (ui, family) in cfg.utilities.iter().enumerate() {
        let u = UtilityModel::from_family(*family)?;
        let eps_max = epsilon_max(&probes, &u)?;
        let grid: Vec<f64> = cfg.epsilon_fractions.iter().map(|f| f * eps_max).collect();
        let mut order: Vec<usize> = (0..grid.len()).collect();
        order.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]).then(a.cmp(&b)));
        let det_seed = root.child("ex1-det", ui as u64).seed();
        let mut results = vec![None; grid.len()];
        let mut incumbent: Option<Vec<Vec<f64>>> = None;
        for &j in &order {
            let det = DetMaskConfig { epsilon: grid[j], seed: det_seed, ..cfg.det };
            let r = mask_deterministic_from(&probes, &u, &det, incumbent.as_deref())?;
            if r.feasible {
                incumbent = Some(r.masked.clone());
            }
            results[j] = Some(r);
        }
        for (j, r) in results.into_iter().enumerate() {
            let r = r.expect("every grid point solved");
            table.push(format!(
                "{family},{},{},{},{},{},{}",
                grid[j], cfg.epsilon_fractions[j], r.perturbation, r.utility_loss, r.feasible, cfg.seed
            ));
        }
    }
    Ok(table)
}

/// Final confusion and utility loss of the stochastic masking over the
/// `lambda x alpha` grid, lambda-major.
pub fn run_example2(cfg: &ExperimentConfig) -> Result<Table> {
    expect(cfg, ExperimentId::Ex2)?;
    let root = SeedStream::new(cfg.seed);
    let probes = cfg.draw_probes(&root);
    let u = UtilityModel::from_family(cfg.utilities[0])?;
    let cdf = build_cdf_l(&probes, &cfg.noise(), cfg.n_cdf, &root.child("cdf-l", 0))?;
    let cells: Vec<(f64, f64)> = cfg
        .lambdas
        .iter()
        .flat_map(|l| cfg.alphas.iter().map(move |a| (*l, *a)))
        .collect();
    let rows: Vec<Result<String>> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(lambda, alpha))| {
            let spsa = SpsaConfig {
                lambda,
                alpha,
                seed: root.child("ex2-cell", idx as u64).seed(),
                trace_every: 0,
                ..cfg.spsa
            };
            let (r, trace) = mask_stochastic(&probes, &u, &spsa, &cdf)?;
            Ok(format!(
                "{lambda},{alpha},{},{},{},{}",
                trace.final_confusion, r.utility_loss, spsa.iters, cfg.seed
            ))
        })
        .collect();
    let mut table = Table::new(EX2_HEADER);
    for row in rows {
        table.push(row?);
    }
    Ok(table)
}
