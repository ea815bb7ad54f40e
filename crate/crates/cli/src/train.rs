use std::fs::{self, File};
use std::io::BufWriter;

use anyhow::{Context, Result};

use mrccg::cg::fit;

use crate::args::TrainArgs;

pub fn run(a: &TrainArgs) -> Result<()> {
    let data = a.data.load()?;
    let (model, trace) = fit(&data, &a.fmap.spec(), &a.cg.config(), a.cg.standardize())?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let model_path = a.out.join("model.json");
    model.save(&model_path)?;
    let trace_path = a.out.join("trace.csv");
    let f =
        File::create(&trace_path).with_context(|| format!("creating {}", trace_path.display()))?;
    trace.write_csv(BufWriter::new(f))?;

    println!("R* = {:.6}", model.r_star);
    println!("|I*| = {}", model.selected.len());
    println!("nonzero coefficients = {}", model.mu.nnz());
    println!(
        "iterations = {}{}",
        trace.iterations.len(),
        if trace.converged {
            ""
        } else {
            " (iteration limit)"
        }
    );
    println!("model: {}", model_path.display());
    Ok(())
}
