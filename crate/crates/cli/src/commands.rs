//! Subcommand implementations.

use anyhow::{bail, Result};
use eraser_core::counts::{derive_seed, ImperfectionModel};
use eraser_core::pattern::{self, SlitGeometry};
use eraser_core::pipeline::Port;
use eraser_core::scenario::{
    self, Curve, ErasureMethod, Mode, MonteCarloRun, Reproduction, Target,
};
use serde::Serialize;

use crate::output::{display, Output};
use crate::Context;

fn port(n: u8) -> Port {
    if n == 1 {
        Port::One
    } else {
        Port::Two
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

/// Parses `START:STOP:STEP` in degrees.
pub fn parse_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [start, stop, step] = parts.as_slice() else {
        bail!(eraser_core::Error::Config(format!("range `{s}` must be START:STOP:STEP")));
    };
    let parse = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| eraser_core::Error::Config(format!("range `{s}`: `{t}` is not a number")))
    };
    let (start, stop, step) = (parse(start)?, parse(stop)?, parse(step)?);
    if !(step > 0.0) || stop < start || !start.is_finite() || !stop.is_finite() {
        bail!(eraser_core::Error::Config(format!(
            "range `{s}` needs a positive step and STOP >= START"
        )));
    }
    Ok(scenario::angle_range(start, stop, step))
}

#[derive(Serialize)]
struct CurveSidecar<'a> {
    mode: &'static str,
    probability: f64,
    normalization: f64,
    visibility: f64,
    phase_offset: f64,
    geometry: SlitGeometry,
    #[serde(skip_serializing_if = "Option::is_none")]
    positions: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    intensities: Option<&'a [f64]>,
}

fn write_curve(out: &mut Output, name: &str, mode: Mode, curve: &Curve) -> Result<()> {
    if out.csv {
        out.write(&format!("{name}.csv"), |w| curve.pattern.write_csv(w))?;
    }
    let p = &curve.pattern;
    let side = CurveSidecar {
        mode: mode.name(),
        probability: curve.probability,
        normalization: p.params.normalization,
        visibility: curve.visibility,
        phase_offset: curve.phase,
        geometry: p.geometry,
        positions: out.json.then_some(p.positions.as_slice()),
        intensities: out.json.then_some(p.intensities.as_slice()),
    };
    out.write_json(&format!("{name}.json"), &side)
}

#[derive(Serialize)]
struct CountsSidecar<'a> {
    metadata: eraser_core::counts::CountMetadata,
    fit: &'a eraser_core::fit::FitResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    record: Option<&'a eraser_core::counts::CountRecord>,
}

fn write_counts(out: &mut Output, name: &str, run: &MonteCarloRun, model: &ImperfectionModel) -> Result<()> {
    if out.csv {
        out.write(&format!("{name}.csv"), |w| run.record.write_csv(w))?;
    }
    let side = CountsSidecar {
        metadata: run.record.metadata(Some(*model)),
        fit: &run.fit,
        record: out.json.then_some(&run.record),
    };
    out.write_json(&format!("{name}.json"), &side)
}

fn fit_visibility(run: &Option<MonteCarloRun>) -> String {
    run.as_ref().map_or_else(|| "-".into(), |r| format!("{:.4}", r.fit.visibility))
}

fn report_files(out: &Output) {
    println!("wrote {} file(s) to {}", out.written().len(), display(&out.dir));
}

pub fn pattern(ctx: &Context, ports: &[u8]) -> Result<()> {
    let cfg = &ctx.config;
    let model = cfg.imperfections;
    let mut out = ctx.output("pattern")?;
    let (u_ideal, u_corrected) = scenario::unconditioned_curves(cfg, &model, true)?;
    println!("{:>14} {:>8} {:>8} {:>10} {:>8}", "pattern", "N", "V ideal", "V corrected", "V fit");
    for &n in ports {
        let Some((ideal, corrected)) = scenario::port_curves(cfg, &model, port(n))? else {
            println!("{:>14} {:>8.4} {:>8} {:>10} {:>8}", format!("port {n}"), 0.0, "dark", "-", "-");
            continue;
        };
        if ctx.wants(Mode::Ideal) {
            write_curve(&mut out, &format!("port{n}_ideal"), Mode::Ideal, &ideal)?;
        }
        if ctx.wants(Mode::Corrected) {
            write_curve(&mut out, &format!("port{n}_corrected"), Mode::Corrected, &corrected)?;
        }
        let mc = if ctx.wants(Mode::MonteCarlo) {
            let run = scenario::simulate_curve(cfg, &corrected, &u_corrected, derive_seed(cfg.counting.seed, n as u64))?;
            write_counts(&mut out, &format!("port{n}_counts"), &run, &model)?;
            Some(run)
        } else {
            None
        };
        println!(
            "{:>14} {:>8.4} {:>8.4} {:>10.4} {:>8}",
            format!("port {n}"),
            ideal.probability,
            ideal.visibility,
            corrected.visibility,
            fit_visibility(&mc)
        );
    }
    if ctx.wants(Mode::Ideal) {
        write_curve(&mut out, "unconditioned_ideal", Mode::Ideal, &u_ideal)?;
    }
    if ctx.wants(Mode::Corrected) {
        write_curve(&mut out, "unconditioned_corrected", Mode::Corrected, &u_corrected)?;
    }
    println!(
        "{:>14} {:>8.4} {:>8.4} {:>10.4} {:>8}",
        "unconditioned", 1.0, u_ideal.visibility, u_corrected.visibility, "-"
    );

    let pol = cfg.source_polarization()?;
    let cond = pattern::conditional_patterns(&pol, &cfg.settings(), cfg.phi(), &cfg.geometry()?, &cfg.grid())?;
    let residual = cond.sum_rule_residual();
    #[derive(Serialize)]
    struct SumRule {
        n1: f64,
        n2: f64,
        max_residual: f64,
    }
    out.write_json(
        "sum_rule.json",
        &SumRule {
            n1: cond.probabilities.n1,
            n2: cond.probabilities.n2,
            max_residual: residual,
        },
    )?;
    println!("sum rule: max |N1 I1 + N2 I2 - I| = {residual:.3e}");
    report_files(&out);
    Ok(())
}

pub fn scan(ctx: &Context, angles: &[f64]) -> Result<()> {
    let cfg = &ctx.config;
    let rows = scenario::scan(cfg, &cfg.imperfections, angles)?;
    let mut out = ctx.output("scan")?;
    if out.csv {
        out.write("scan.csv", |w| scenario::write_scan_csv(&rows, w))?;
    }
    if out.json {
        out.write_json("scan.json", &rows)?;
    }
    if rows.len() <= 20 {
        println!(
            "{:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "gamma1", "N1", "V1", "V1 corr", "N2", "V2", "V2 corr"
        );
        for r in &rows {
            println!(
                "{:>8.2} {:>8.4} {:>8} {:>8} {:>8.4} {:>8} {:>8}",
                r.gamma1_degrees,
                r.n1,
                opt(r.v1_ideal),
                opt(r.v1_corrected),
                r.n2,
                opt(r.v2_ideal),
                opt(r.v2_corrected)
            );
        }
    } else if let Some(min) = rows
        .iter()
        .filter(|r| r.v1_ideal.is_some())
        .min_by(|a, b| a.v1_ideal.unwrap().total_cmp(&b.v1_ideal.unwrap()))
    {
        println!(
            "{} angles; smallest ideal port-1 visibility {:.4} at gamma1 = {} deg",
            rows.len(),
            min.v1_ideal.unwrap(),
            min.gamma1_degrees
        );
    }
    report_files(&out);
    Ok(())
}

pub fn discriminate(ctx: &Context) -> Result<()> {
    let report = scenario::discriminate(&ctx.config)?;
    println!("gamma1* = {:.4} deg (gamma2 = {} deg)", report.gamma1_degrees, report.gamma2_degrees);
    println!("N1 at gamma1* = {:.6}", report.success_probability);
    println!("port-1 visibility at gamma1* = {:.3e}", report.port1_visibility);
    if report.already_orthogonal {
        println!("the marker states are already orthogonal: any gamma1 = gamma2 works");
    }
    let mut out = ctx.output("discriminate")?;
    out.write_json("discriminate.json", &report)?;
    report_files(&out);
    Ok(())
}

pub fn erase(ctx: &Context, method: ErasureMethod, port_number: u8) -> Result<()> {
    let cfg = &ctx.config;
    let model = cfg.imperfections;
    let run = scenario::erasure(cfg, &model, method, port(port_number))?;
    let singles = scenario::unconditioned_curves(cfg, &model, true)?.1;
    let mut out = ctx.output("erase")?;
    println!("{:>11} {:>8} {:>8} {:>8} {:>10} {:>8}", "outcome", "weight", "V ideal", "phase", "V corrected", "V fit");
    for (k, o) in run.outcomes.iter().enumerate() {
        let (Some(ideal), Some(corrected)) = (&o.ideal, &o.corrected) else {
            println!("{:>11} {:>8.4} {:>8}", o.label, 0.0, "dark");
            continue;
        };
        if ctx.wants(Mode::Ideal) {
            write_curve(&mut out, &format!("{}_ideal", o.label), Mode::Ideal, ideal)?;
        }
        if ctx.wants(Mode::Corrected) {
            write_curve(&mut out, &format!("{}_corrected", o.label), Mode::Corrected, corrected)?;
        }
        let mc = if ctx.wants(Mode::MonteCarlo) {
            let r = scenario::simulate_curve(cfg, corrected, &singles, derive_seed(cfg.counting.seed, k as u64))?;
            write_counts(&mut out, &format!("{}_counts", o.label), &r, &model)?;
            Some(r)
        } else {
            None
        };
        println!(
            "{:>11} {:>8.4} {:>8.4} {:>8.4} {:>10.4} {:>8}",
            o.label,
            ideal.probability,
            ideal.visibility,
            ideal.phase,
            corrected.visibility,
            fit_visibility(&mc)
        );
    }
    out.write_json("erase.json", &run)?;
    println!("weighted sum residual against the open port: {:.3e}", run.sum_residual);
    report_files(&out);
    Ok(())
}

pub fn conserve(ctx: &Context, angles: &[f64]) -> Result<()> {
    let cfg = &ctx.config;
    let mut out = ctx.output("conserve")?;
    for &mode in &ctx.modes {
        let report = scenario::conservation(cfg, &cfg.imperfections, angles, mode)?;
        println!("{}:\n{report}", mode.name());
        if out.csv {
            out.write(&format!("conserve_{}.csv", mode.name()), |w| report.write_csv(w))?;
        }
        if out.json {
            out.write_json(&format!("conserve_{}.json", mode.name()), &report)?;
        }
    }
    report_files(&out);
    Ok(())
}

#[derive(Serialize)]
struct ReproductionMetadata<'a> {
    target: Target,
    seed: Option<u64>,
    assumed: &'a [String],
    erasure_residuals: &'a [(String, f64)],
}

fn write_reproduction(ctx: &Context, rep: &Reproduction, out: &mut Output) -> Result<()> {
    let all = !ctx.explicit_modes;
    let model = scenario::preset(rep.target).config.imperfections;
    for p in &rep.panels {
        let name = format!("panel_{}", p.label);
        if let Some(c) = p.ideal.as_ref().filter(|_| all || ctx.wants(Mode::Ideal)) {
            write_curve(out, &format!("{name}_ideal"), Mode::Ideal, c)?;
        }
        if let Some(c) = p.corrected.as_ref().filter(|_| all || ctx.wants(Mode::Corrected)) {
            write_curve(out, &format!("{name}_corrected"), Mode::Corrected, c)?;
        }
        if let Some(r) = p.montecarlo.as_ref().filter(|_| all || ctx.wants(Mode::MonteCarlo)) {
            write_counts(out, &format!("{name}_counts"), r, &model)?;
        }
    }
    if let Some(rows) = &rep.scan {
        if out.csv {
            out.write("scan.csv", |w| scenario::write_scan_csv(rows, w))?;
        }
        if out.json {
            out.write_json("scan.json", rows)?;
        }
    }
    if let Some(t) = &rep.table1 {
        out.write("table1.txt", |w| {
            writeln!(w, "{t}")?;
            writeln!(w, "ideal theory:\n{}", t.ideal)?;
            writeln!(w, "corrected theory:\n{}", t.corrected)?;
            writeln!(w, "monte carlo, first seed:\n{}", t.montecarlo_example)
        })?;
        out.write_json("table1.json", t)?;
    }
    out.write_json(
        "metadata.json",
        &ReproductionMetadata {
            target: rep.target,
            seed: ctx.seed_override,
            assumed: &rep.assumed,
            erasure_residuals: &rep.erasure_residuals,
        },
    )
}

pub fn reproduce(ctx: &Context, target: Target, repetitions: Option<usize>) -> Result<()> {
    let rep = scenario::reproduce(target, ctx.seed_override, repetitions)?;
    let mut out = ctx.output(target.name())?;
    write_reproduction(ctx, &rep, &mut out)?;
    if !rep.panels.is_empty() {
        println!("{:>14} {:>8} {:>8} {:>10} {:>8}", "panel", "N", "V ideal", "V corrected", "V fit");
        for p in &rep.panels {
            println!(
                "{:>14} {:>8} {:>8} {:>10} {:>8}",
                p.label,
                opt(p.ideal.as_ref().map(|c| c.probability)),
                opt(p.ideal.as_ref().map(|c| c.visibility)),
                opt(p.corrected.as_ref().map(|c| c.visibility)),
                fit_visibility(&p.montecarlo)
            );
        }
    }
    for (label, r) in &rep.erasure_residuals {
        println!("panel {label}: erasure sum residual {r:.3e}");
    }
    if let Some(t) = &rep.table1 {
        println!("{t}");
    }
    println!("assumed values:");
    for a in &rep.assumed {
        println!("  {a}");
    }
    report_files(&out);
    Ok(())
}
