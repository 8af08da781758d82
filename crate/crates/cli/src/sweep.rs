use std::fmt::Write as _;
use std::fs;

use anyhow::{bail, Context, Result};
use editgrpo_core::probe::tau_probe_set;
use editgrpo_core::rng::{self, tag};
use editgrpo_core::stats::median;
use editgrpo_core::trainer::train;
use editgrpo_core::{edit, EditConfig, Ontology, RunConfig};

use crate::{ontology_for, write_run};

/// Rule histogram of editing the fixed probe set at `tau`.
pub(crate) fn probe_histogram(
    o: &Ontology,
    base: &EditConfig,
    tau: f64,
    n: usize,
    seed: u64,
) -> [usize; 5] {
    let cfg = EditConfig {
        tau,
        ..base.clone()
    };
    let mut h = [0; 5];
    for (k, inst) in tau_probe_set(o, n, seed).iter().enumerate() {
        let out = edit(
            &inst.x,
            &inst.y,
            &cfg,
            o,
            &mut rng::stream(base.rng_seed, &[tag::EDIT, k as u64]),
        );
        for (a, b) in h.iter_mut().zip(out.trace.histogram()) {
            *a += b;
        }
    }
    h
}

struct RunResult {
    tau: f64,
    seed: u64,
    composite: f64,
    macro14: f64,
    micro14: f64,
    no_finding: f64,
    collapse: f64,
    edits: [usize; 5],
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

pub(crate) fn sweep_tau(
    base: &RunConfig,
    taus: &[f64],
    seeds: &[u64],
    probe_size: usize,
) -> Result<()> {
    if taus.is_empty() {
        bail!("no tau values given");
    }
    if let Some(t) = taus.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        bail!("tau {t} outside [0, 1]");
    }
    let seeds = if seeds.is_empty() {
        vec![base.trainer.seed]
    } else {
        seeds.to_vec()
    };
    let o = ontology_for(base);
    let root = &base.output_dir;
    fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;

    let mut results = Vec::new();
    for &seed in &seeds {
        // the SFT stage does not depend on tau, so it is shared by every run of a seed
        let mut sft = base.clone();
        sft.trainer.seed = seed;
        sft.trainer.steps = 0;
        let start = train(&sft, &o, None)?;
        for &tau in taus {
            let mut run = base.clone();
            run.trainer.seed = seed;
            run.edit.tau = tau;
            run.validate()?;
            let mut rl = run.clone();
            rl.trainer.sft_epochs = 0;
            let mut out = train(&rl, &o, Some(start.params.clone()))?;
            out.sft_losses = start.sft_losses.clone();
            run.output_dir = root.join(format!("tau_{tau}")).join(format!("seed_{seed}"));
            write_run(&run.output_dir, &run, &out)?;
            let mut edits = [0; 5];
            for row in &out.metrics {
                for (a, b) in edits.iter_mut().zip(row.edits) {
                    *a += b;
                }
            }
            let m = &out.eval.metrics;
            results.push(RunResult {
                tau,
                seed,
                composite: m.composite,
                macro14: m.chexbert_macro_14,
                micro14: m.chexbert_micro_14,
                no_finding: m.no_finding_frac,
                collapse: m.collapse_rate,
                edits,
            });
        }
    }

    let mut runs =
        String::from("tau,seed,composite,macro14,micro14,no_finding_frac,collapse_rate\n");
    for r in &results {
        let _ = writeln!(
            runs,
            "{},{},{},{},{},{},{}",
            r.tau, r.seed, r.composite, r.macro14, r.micro14, r.no_finding, r.collapse
        );
    }
    fs::write(root.join("tau_runs.csv"), runs)?;

    let mut table = String::from(
        "tau,n_seeds,composite_median,macro14_median,micro14_median,no_finding_median,\
         train_edits_a,train_edits_b,train_edits_c,train_edits_d,train_edits_e,\
         probe_edits_a,probe_edits_b,probe_edits_c,probe_edits_d,probe_edits_e\n",
    );
    let mut histograms = Vec::new();
    for &tau in taus {
        let rs: Vec<&RunResult> = results.iter().filter(|r| r.tau == tau).collect();
        let med =
            |f: &dyn Fn(&RunResult) -> f64| median(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
        let mut train_edits = [0; 5];
        for r in &rs {
            for (a, b) in train_edits.iter_mut().zip(r.edits) {
                *a += b;
            }
        }
        let probe = probe_histogram(&o, &base.edit, tau, probe_size, base.world.seed);
        let _ = writeln!(
            table,
            "{tau},{},{},{},{},{},{},{}",
            rs.len(),
            med(&|r| r.composite),
            med(&|r| r.macro14),
            med(&|r| r.micro14),
            med(&|r| r.no_finding),
            join(&train_edits),
            join(&probe)
        );
        println!(
            "tau={tau:<4} macro14={:.4} composite={:.4} probe edits a..e = {:?}",
            med(&|r| r.macro14),
            med(&|r| r.composite),
            probe
        );
        histograms.push(serde_json::json!({"tau": tau, "train": train_edits, "probe": probe}));
    }
    fs::write(root.join("tau_sweep.csv"), table)?;
    fs::write(
        root.join("tau_histograms.json"),
        serde_json::to_string_pretty(&histograms)? + "\n",
    )?;
    Ok(())
}
