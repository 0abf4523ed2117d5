//! The three subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use fosls::auxiliary::{assemble_set, train_auxiliary_set, AuxFunction, AuxRole, AuxTag, BoundaryMismatch};
use fosls::geometry::{stream_rng, streams};
use fosls::history::fmt_float;
use fosls::loss::{AnalyticPair, FieldPair};
use fosls::solve::{mc_error, mc_relative_error, solve_observed};
use fosls::{AuxiliarySet, PdeProblem, TrainHistory, TrialFields};

use crate::config::{AuxMode, RunConfig};
use crate::error::CliError;
use crate::output::{ensure_dir, read_network, write_atomic, write_json, write_network, Stamp};

fn stamp(cfg: &RunConfig) -> Stamp {
    Stamp { config_hash: cfg.hash(), seed: cfg.seed() }
}

fn roles_for(problem: &PdeProblem) -> Vec<AuxRole> {
    let mut roles = vec![AuxRole::DistanceDirichlet, AuxRole::LiftingDirichlet];
    if problem.has_neumann() {
        roles.extend([AuxRole::DistanceNeumann, AuxRole::LiftingNeumann, AuxRole::NormalField]);
    }
    roles
}

fn checkpoint_path(dir: &Path, role: AuxRole) -> PathBuf {
    dir.join(format!("{}.json", role.name()))
}

fn sidecar_path(dir: &Path, role: AuxRole) -> PathBuf {
    dir.join(format!("{}.role.json", role.name()))
}

fn marker_path(dir: &Path, role: AuxRole) -> PathBuf {
    dir.join(format!("{}.analytic", role.name()))
}

fn remove_if_present(path: &Path) -> Result<(), CliError> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(CliError::io(path, e)),
        _ => Ok(()),
    }
}

fn write_history(path: &Path, history: &TrainHistory, stamp: &Stamp) -> Result<(), CliError> {
    write_atomic(path, history.to_csv_string(&stamp.comments()).as_bytes())
}

/// Writes one checkpoint plus role sidecar per trained auxiliary, or one
/// marker file per analytic one.
fn write_aux_set(dir: &Path, set: &AuxiliarySet, stamp: &Stamp) -> Result<(), CliError> {
    ensure_dir(dir)?;
    for f in set.functions() {
        let role = f.role();
        match (f.network(), f.tag()) {
            (Some(net), Some(tag)) => {
                write_network(&checkpoint_path(dir, role), net, stamp)?;
                write_json(&sidecar_path(dir, role), serde_json::to_value(tag).expect("tag serializes"), stamp)?;
                remove_if_present(&marker_path(dir, role))?;
            }
            _ => {
                let text = format!("{}role={}\nkind=analytic\n", stamp.comment_block(), role.name());
                write_atomic(&marker_path(dir, role), text.as_bytes())?;
                remove_if_present(&checkpoint_path(dir, role))?;
                remove_if_present(&sidecar_path(dir, role))?;
            }
        }
    }
    Ok(())
}

/// Loads every auxiliary the problem needs from `dir`; each role is either a
/// checkpoint with sidecar or an analytic marker.
fn load_aux_set(dir: &Path, problem: &PdeProblem) -> Result<AuxiliarySet, CliError> {
    let mut functions = Vec::new();
    let mut analytic: Option<AuxiliarySet> = None;
    for role in roles_for(problem) {
        let ckpt = checkpoint_path(dir, role);
        if ckpt.exists() {
            let net = read_network(&ckpt)?;
            let side = sidecar_path(dir, role);
            let text = fs::read_to_string(&side).map_err(|e| CliError::config(format!("cannot read {}: {e}", side.display())))?;
            let tag: AuxTag = serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", side.display())))?;
            if tag.role != role {
                return Err(CliError::config(format!("{}: role `{}` does not match file name", side.display(), tag.role.name())));
            }
            functions.push(AuxFunction::trained(role, net, tag.transform));
        } else if marker_path(dir, role).exists() {
            if analytic.is_none() {
                analytic = Some(AuxiliarySet::analytic_for(problem)?);
            }
            let set = analytic.as_ref().expect("just built");
            let f = set.functions().into_iter().find(|f| f.role() == role).expect("analytic set covers every role");
            functions.push(f.clone());
        } else {
            return Err(CliError::config(format!("aux.dir: no checkpoint {} or marker for `{}`", ckpt.display(), role.name())));
        }
    }
    Ok(assemble_set(functions)?)
}

fn print_mismatch(m: &BoundaryMismatch) {
    println!("boundary RMS distance_dirichlet {:e}", m.distance_dirichlet);
    println!("boundary RMS lifting_dirichlet {:e}", m.lifting_dirichlet);
    for (name, v) in [("distance_neumann", m.distance_neumann), ("lifting_neumann", m.lifting_neumann), ("normal_field", m.normal)] {
        if let Some(v) = v {
            println!("boundary RMS {name} {v:e}");
        }
    }
}

fn train_aux(cfg: &RunConfig, problem: &PdeProblem, stamp: &Stamp) -> Result<AuxiliarySet, CliError> {
    let aux_cfg = cfg.aux.train_config(cfg.seed());
    let start = Instant::now();
    let (set, histories) = train_auxiliary_set(problem, &aux_cfg)?;
    let dir = cfg.aux_dir();
    write_aux_set(&dir, &set, stamp)?;
    for (role, h) in &histories {
        write_history(&dir.join(format!("{}_history.csv", role.name())), h, stamp)?;
    }
    eprintln!("trained {} auxiliaries in {:.1}s", histories.len(), start.elapsed().as_secs_f64());
    Ok(set)
}

fn resolve_aux(cfg: &RunConfig, problem: &PdeProblem, stamp: &Stamp) -> Result<AuxiliarySet, CliError> {
    match cfg.aux.mode {
        AuxMode::Analytic => Ok(AuxiliarySet::analytic_for(problem).map_err(|e| CliError::config(format!("aux.mode = analytic: {e}")))?),
        AuxMode::Trained => train_aux(cfg, problem, stamp),
        AuxMode::Checkpoint => load_aux_set(&cfg.aux_dir(), problem),
    }
}

pub fn aux_train(cfg: &RunConfig) -> Result<(), CliError> {
    let problem = cfg.build_problem()?;
    let stamp = stamp(cfg);
    let set = match cfg.aux.mode {
        AuxMode::Analytic => {
            let set = AuxiliarySet::analytic_for(&problem).map_err(|e| CliError::config(format!("aux.mode = analytic: {e}")))?;
            write_aux_set(&cfg.aux_dir(), &set, &stamp)?;
            println!("analytic auxiliaries: wrote {} marker files to {}", set.functions().len(), cfg.aux_dir().display());
            set
        }
        AuxMode::Trained => train_aux(cfg, &problem, &stamp)?,
        AuxMode::Checkpoint => return Err(CliError::config("aux.mode: aux-train needs `analytic` or `trained`")),
    };
    print_mismatch(&set.boundary_mismatch(&problem, 1000, &mut stream_rng(cfg.seed(), streams::ERROR_ESTIMATE)));
    Ok(())
}

pub fn solve(cfg: &RunConfig) -> Result<(), CliError> {
    let problem = cfg.build_problem()?;
    let stamp = stamp(cfg);
    let out = cfg.output.dir.clone();
    ensure_dir(&out)?;
    // checkpoints are loaded and checked before any training starts
    let aux = Arc::new(resolve_aux(cfg, &problem, &stamp)?);
    let train = &cfg.train;
    write_atomic(&out.join("config.toml"), format!("{}{}", stamp.comment_block(), cfg.to_toml()).as_bytes())?;

    let mut rng = stream_rng(cfg.seed(), streams::MAIN_INIT);
    let initial = TrialFields::init(problem.dim(), &cfg.main.hidden, cfg.main.activation, aux, train.fd_step, &mut rng)?;
    let start = Instant::now();
    let every = (train.steps / 20).max(1);
    let outcome = solve_observed(&problem, initial.clone(), train, |r| {
        if r.step % every == 0 {
            eprintln!("step {:>7}  loss {:.6e}  lr {:.3e}", r.step, r.loss, r.lr);
        }
    });
    let seconds = start.elapsed().as_secs_f64();

    let (trial, history) = match outcome {
        Ok(pair) => pair,
        Err(fosls::Error::Divergence(d)) => {
            let mut last = initial;
            last.set_params(&d.last_params)?;
            write_network(&out.join("v.json"), &last.v, &stamp)?;
            write_network(&out.join("psi.json"), &last.psi, &stamp)?;
            write_history(&out.join("history.csv"), &d.history, &stamp)?;
            eprintln!("partial history ({} steps) and last finite parameters written to {}", d.history.len(), out.display());
            return Err(fosls::Error::Divergence(d).into());
        }
        Err(e) => return Err(e.into()),
    };
    write_network(&out.join("v.json"), &trial.v, &stamp)?;
    write_network(&out.join("psi.json"), &trial.psi, &stamp)?;
    write_history(&out.join("history.csv"), &history, &stamp)?;

    let mut line = format!("summary problem={} steps={}", cfg.problem.spec()?, history.len());
    match history.last() {
        Some(r) => line += &format!(" final_loss={}", r.loss),
        None => line += " final_loss=none",
    }
    if let Some(exact) = &problem.exact {
        let m = train.error_points.max(1);
        let (l2, _) = mc_error(&trial, &exact.u, &problem.domain, m, &mut stream_rng(cfg.seed(), streams::ERROR_ESTIMATE))?;
        let rel = mc_relative_error(&trial, &exact.u, &problem.domain, m, &mut stream_rng(cfg.seed(), streams::ERROR_ESTIMATE))?;
        line += &format!(" l2_error={l2:.6e} rel_l2_error={rel:.6e}");
    }
    line += &format!(" seconds={seconds:.2} seed={} config_hash={}", cfg.seed(), stamp.config_hash);
    println!("{line}");
    Ok(())
}

/// Evaluation grid: a tensor grid over the non-fixed axes.
#[derive(Debug, Clone, Default)]
pub struct GridSpec {
    pub points: usize,
    /// `(axis, value)`, 0-based axes.
    pub fixed: Vec<(usize, f64)>,
    /// `(axis, lo, hi)`, 0-based axes.
    pub ranges: Vec<(usize, f64, f64)>,
}

/// Parses `3=0.5` or `x3=0.5` (1-based axis).
pub fn parse_fix(text: &str) -> Result<(usize, f64), String> {
    let (axis, value) = text.split_once('=').ok_or("expected AXIS=VALUE")?;
    let value: f64 = value.trim().parse().map_err(|_| format!("bad value `{value}`"))?;
    Ok((parse_axis(axis)?, value))
}

/// Parses `1=-1:0.5` or `x1=-1:0.5` (1-based axis).
pub fn parse_range(text: &str) -> Result<(usize, f64, f64), String> {
    let (axis, span) = text.split_once('=').ok_or("expected AXIS=LO:HI")?;
    let (lo, hi) = span.split_once(':').ok_or("expected AXIS=LO:HI")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad bound `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad bound `{hi}`"))?;
    Ok((parse_axis(axis)?, lo, hi))
}

fn parse_axis(text: &str) -> Result<usize, String> {
    let t = text.trim();
    let n: usize = t.strip_prefix('x').unwrap_or(t).parse().map_err(|_| format!("bad axis `{text}`"))?;
    if n == 0 {
        return Err("axes are numbered from 1".into());
    }
    Ok(n - 1)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect(),
    }
}

impl GridSpec {
    /// Grid rows, last axis varying fastest. Every coordinate must lie in the
    /// closed bounding box.
    pub fn rows(&self, bbox: &[(f64, f64)]) -> Result<Vec<Vec<f64>>, CliError> {
        let d = bbox.len();
        if self.points == 0 {
            return Err(CliError::config("--points must be at least 1"));
        }
        let mut axes: Vec<Vec<f64>> = bbox.iter().map(|&(lo, hi)| linspace(lo, hi, self.points)).collect();
        let mut problems = Vec::new();
        for &(axis, lo, hi) in &self.ranges {
            if axis >= d {
                return Err(CliError::config(format!("--range: axis {} out of range 1..={d}", axis + 1)));
            }
            let (blo, bhi) = bbox[axis];
            if !(lo <= hi) || lo < blo || hi > bhi {
                problems.push(format!("x{} range [{lo}, {hi}] not within [{blo}, {bhi}]", axis + 1));
            }
            axes[axis] = linspace(lo, hi, self.points);
        }
        for &(axis, value) in &self.fixed {
            if axis >= d {
                return Err(CliError::config(format!("--fix: axis {} out of range 1..={d}", axis + 1)));
            }
            let (blo, bhi) = bbox[axis];
            if !(blo..=bhi).contains(&value) {
                problems.push(format!("x{}={value} not within [{blo}, {bhi}]", axis + 1));
            }
            axes[axis] = vec![value];
        }
        if !problems.is_empty() {
            return Err(CliError::config(format!("grid outside domain: {}", problems.join("; "))));
        }
        let mut rows = vec![Vec::with_capacity(d)];
        for axis in &axes {
            rows = rows.into_iter().flat_map(|r| axis.iter().map(move |&v| [r.clone(), vec![v]].concat())).collect();
        }
        Ok(rows)
    }
}

pub struct EvalArgs {
    pub checkpoints: Option<PathBuf>,
    pub exact: bool,
    pub output: Option<PathBuf>,
    pub grid: GridSpec,
}

pub fn eval(cfg: &RunConfig, args: &EvalArgs) -> Result<(), CliError> {
    let problem = cfg.build_problem()?;
    let stamp = stamp(cfg);
    let d = problem.dim();
    let rows = args.grid.rows(problem.domain.bounding_box())?;

    let fields: Box<dyn FieldPair> = if args.exact {
        Box::new(AnalyticPair::exact(&problem).ok_or_else(|| CliError::config("--exact: the problem has no closed-form solution"))?)
    } else {
        let dir = args.checkpoints.clone().unwrap_or_else(|| cfg.output.dir.clone());
        let v = read_network(&dir.join("v.json"))?;
        let psi = read_network(&dir.join("psi.json"))?;
        let aux = match cfg.aux.mode {
            AuxMode::Analytic => AuxiliarySet::analytic_for(&problem)?,
            AuxMode::Trained | AuxMode::Checkpoint => load_aux_set(&cfg.aux_dir(), &problem)?,
        };
        Box::new(TrialFields::new(v, psi, Arc::new(aux), cfg.train.fd_step)?)
    };
    if fields.dim() != d {
        return Err(CliError::config(format!("checkpoints are {}-dimensional but the problem is {d}-dimensional", fields.dim())));
    }

    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.push("u".into());
    header.extend((1..=d).map(|i| format!("phi{i}")));
    if problem.exact.is_some() {
        header.extend(["u_exact".to_string(), "abs_error".to_string()]);
    }
    let mut text = stamp.comment_block();
    text += &header.join(",");
    text.push('\n');
    let mut worst: f64 = 0.0;
    for x in &rows {
        let u = fields.u(x);
        let mut cells: Vec<String> = x.iter().map(|v| fmt_float(*v)).collect();
        cells.push(fmt_float(u));
        cells.extend(fields.phi(x).iter().map(|v| fmt_float(*v)));
        if let Some(exact) = &problem.exact {
            let e = (exact.u)(x);
            worst = worst.max((u - e).abs());
            cells.push(fmt_float(e));
            cells.push(fmt_float((u - e).abs()));
        }
        text += &cells.join(",");
        text.push('\n');
    }
    let path = args.output.clone().unwrap_or_else(|| cfg.output.dir.join("eval.csv"));
    write_atomic(&path, text.as_bytes())?;
    let mut line = format!("wrote {} rows to {}", rows.len(), path.display());
    if problem.exact.is_some() {
        line += &format!(" max_abs_error={worst:e}");
    }
    println!("{line}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shapes_and_order() {
        let bbox = [(-1.0, 1.0), (0.0, 2.0), (0.0, 1.0)];
        let g = GridSpec { points: 3, fixed: vec![(2, 0.5)], ranges: vec![] };
        let rows = g.rows(&bbox).unwrap();
        assert_eq!(rows.len(), 9);
        assert_eq!(rows[0], vec![-1.0, 0.0, 0.5]);
        assert_eq!(rows[1], vec![-1.0, 1.0, 0.5]);
        assert_eq!(rows[8], vec![1.0, 2.0, 0.5]);
        let one = GridSpec { points: 1, ..Default::default() }.rows(&bbox).unwrap();
        assert_eq!(one, vec![vec![0.0, 1.0, 0.5]]);
    }

    #[test]
    fn out_of_domain_grid_lists_every_offender() {
        let bbox = [(-1.0, 1.0), (-1.0, 1.0)];
        let g = GridSpec { points: 2, fixed: vec![(1, 1.5)], ranges: vec![(0, -2.0, 0.0)] };
        let msg = g.rows(&bbox).unwrap_err().to_string();
        assert!(msg.contains("x1 range [-2, 0]") && msg.contains("x2=1.5"), "{msg}");
    }

    #[test]
    fn axis_parsing() {
        assert_eq!(parse_fix("x3=0.5").unwrap(), (2, 0.5));
        assert_eq!(parse_fix("1=-1").unwrap(), (0, -1.0));
        assert!(parse_fix("0=1").is_err());
        assert_eq!(parse_range("x2=-1:0.25").unwrap(), (1, -1.0, 0.25));
        assert!(parse_range("2=1").is_err());
    }
}
