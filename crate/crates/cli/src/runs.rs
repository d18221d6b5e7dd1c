use std::path::Path;

use anyhow::{Context, Result};

use qpcocycle::arithmetic::{dc_check_exact, dc_floor, AlphaExact};
use qpcocycle::gevrey_approx::{
    adversarial_ladder, build_ladder_green, build_ladder_truncation, compare_ladders, inverse_ladder, measured_c0,
    GevreyError, GevreyFunction,
};
use qpcocycle::kam_engine::{
    build_schedule, convergent_chain, homological_op, iterate_chain, linear_homological_solve, scalar_reference_f,
    su2_reference_f, ScheduleParams, SU2_REFERENCE_PHASES,
};
use qpcocycle::linalg;
use qpcocycle::nondegeneracy::{bracket_estimate, character_map};
use qpcocycle::renormalization::{cos_cocycle, renorm_iterate, FiberedAction, COMM_FLOOR, COMM_GROWTH};
use qpcocycle::resonance::{build_mode_split, partition_spectrum, split_re_nre, ResonanceLadder};
use qpcocycle::rng;
use qpcocycle::torus_fourier::{CoeffFile, FourierMap, UnitaryConstant};

use crate::config::{
    positive, BracketMap, BracketParams, ConfigError, DcParams, ExperimentConfig, GevreyParams, HomologicalParams, Kind,
    KamRunParams, Reference, RenormParams,
};
use crate::trace::{
    Body, BracketTrace, Check, DcTrace, GevreyTrace, HomologicalRow, HomologicalTrace, KamTrace, RenormRow, RenormTrace,
};

/// Input problems map to exit 1; failures inside a pipeline are recorded as falsifications.
#[derive(Debug)]
pub enum RunError {
    Input(anyhow::Error),
    Pipeline(String),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Input(e.into())
    }
}

fn input<E: Into<anyhow::Error>>(e: E) -> RunError {
    RunError::Input(e.into())
}

fn pipeline<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Pipeline(e.to_string())
}

pub fn parse_alpha(s: &str) -> Result<(AlphaExact, f64), ConfigError> {
    let a = AlphaExact::parse(s).map_err(|e| ConfigError::Invalid {
        name: "alpha",
        msg: e.to_string(),
    })?;
    let x = a.to_f64().rem_euclid(1.0);
    Ok((a, x))
}

pub fn run(cfg: &ExperimentConfig, input_file: Option<&Path>) -> Result<(Body, Vec<Check>), RunError> {
    match cfg.kind {
        Kind::KamRun => kam_run(cfg, input_file),
        Kind::GevreyLadder => gevrey_run(cfg),
        Kind::RenormRun => renorm_run(cfg),
        Kind::DcScan => dc_scan(cfg),
        Kind::BracketEstimate => bracket_run(cfg),
        Kind::HomologicalBench => homological_bench(cfg),
    }
}

fn load_coefficients(path: &Path) -> Result<FourierMap> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: CoeffFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(FourierMap::from_file(&file)?)
}

fn kam_run(cfg: &ExperimentConfig, input_file: Option<&Path>) -> Result<(Body, Vec<Check>), RunError> {
    let p: KamRunParams = cfg.params()?;
    let (_, alpha) = parse_alpha(&p.alpha)?;
    positive("h0", p.h0)?;
    positive("eps0", p.eps0)?;
    positive("eps_fraction", p.eps_fraction)?;
    positive("eps_stop", p.eps_stop)?;
    let (phases, rho) = match p.reference {
        Reference::Scalar => (vec![0.0], p.rho.unwrap_or(2.0)),
        Reference::Su2 => (SU2_REFERENCE_PHASES.to_vec(), p.rho.unwrap_or(10.0)),
    };
    let phases = p.phases.clone().unwrap_or(phases);
    let mut sp = ScheduleParams::new(rho, phases.len(), p.h0, Some(p.eps0));
    sp.eps_stop = p.eps_stop;
    sp.max_steps = p.max_steps;
    let sched = build_schedule(&sp).map_err(input)?;
    let h = sched.rows[0].h;
    let target = p.eps_fraction * sched.eps0;
    let g = match input_file {
        Some(path) => {
            let g = load_coefficients(path).map_err(RunError::Input)?;
            if g.dim_n() != phases.len() || g.dim_d() != 1 {
                return Err(input(anyhow::anyhow!(
                    "input map is {}x{} on T^{}, expected {}x{} on T^1",
                    g.dim_n(),
                    g.dim_n(),
                    g.dim_d(),
                    phases.len(),
                    phases.len()
                )));
            }
            let norm = g.wiener_norm(h);
            if norm > 0.0 {
                g.project_skew().scale(target / norm)
            } else {
                g
            }
        }
        None => match p.reference {
            Reference::Scalar => scalar_reference_f(target, h),
            Reference::Su2 => su2_reference_f(target, h),
        },
    };
    let a = UnitaryConstant::from_phases(&phases);
    let al = [alpha];
    let trace = iterate_chain(&al, &a, std::slice::from_ref(&g), &sched).map_err(pipeline)?;
    let conv = convergent_chain(&trace, &sched, &al, &a.matrix, std::slice::from_ref(&g));
    let mut checks: Vec<Check> = trace.checks.iter().map(|c| Check::from_bound(&c.check, Some(c.m))).collect();
    checks.extend(conv.zeta.iter().map(|z| Check::le("zeta", Some(z.m), z.zeta, z.bound)));
    if conv.m_star.is_some() {
        checks.push(Check::le("final_residual", None, conv.final_residual, conv.final_bound));
    }
    let body = Body::KamRun(KamTrace {
        alpha,
        reference: if input_file.is_some() {
            "input".into()
        } else {
            match p.reference {
                Reference::Scalar => "scalar".into(),
                Reference::Su2 => "su2".into(),
            }
        },
        sigma: sched.sigma,
        kappa: sched.kappa,
        eps0: sched.eps0,
        rows: trace.rows.clone(),
        stop: Some(trace.stop.clone()),
        preconditions: trace.preconditions.iter().map(|c| Check::from_bound(&c.check, Some(c.m))).collect(),
        m_star: conv.m_star,
        zeta: conv.zeta.clone(),
        final_residual: conv.m_star.map(|_| conv.final_residual),
        final_bound: conv.m_star.map(|_| conv.final_bound),
    });
    Ok((body, checks))
}

fn gevrey_run(cfg: &ExperimentConfig) -> Result<(Body, Vec<Check>), RunError> {
    let p: GevreyParams = cfg.params()?;
    positive("h0", p.h0)?;
    positive("delta", p.delta)?;
    positive("l", p.l)?;
    positive("min_r2", p.min_r2)?;
    positive("min_ratio", p.min_ratio)?;
    if p.levels < 3 {
        return Err(input(ConfigError::Invalid {
            name: "levels",
            msg: "need at least 3 levels for a rate fit".into(),
        }));
    }
    let model = GevreyFunction::model(p.rho, p.l, p.k_cap, &p.pattern).map_err(input)?;
    let green = build_ladder_green(&model, p.h0, p.delta, p.levels).map_err(pipeline)?;
    let trunc = build_ladder_truncation(&model, p.h0, p.delta, p.levels).map_err(pipeline)?;
    let cmp = compare_ladders(&green, &trunc);
    let l_inv = p.l_inverse.unwrap_or(2.0 * p.l);
    let c0 = measured_c0(&green, l_inv);
    let inv = inverse_ladder(&green, l_inv, c0, p.max_r).map_err(pipeline)?;
    let mut checks = vec![
        Check::le("green_slope_negative", None, cmp.green.slope, 0.0),
        Check::ge("green_r2", None, cmp.green.r2, p.min_r2),
        Check::ge("slope_ratio", None, cmp.ratio, p.min_ratio),
    ];
    checks.extend(inv.gaps.iter().map(|g| Check::le("inverse_gap", Some(g.j), g.gap, g.bound)));
    checks.extend(inv.cauchy.iter().map(|c| Check::le(&format!("cauchy_r{}", c.r), Some(c.j), c.value, c.bound)));
    let adversarial_rejected = if p.adversarial {
        let adv = adversarial_ladder(p.rho, p.h0, 0.5, 10);
        let rejected = matches!(inverse_ladder(&adv, l_inv, c0, p.max_r), Err(GevreyError::GapHypothesis { .. }));
        checks.push(Check::holds("adversarial_rejected", None, rejected));
        Some(rejected)
    } else {
        None
    };
    let body = Body::GevreyLadder(GevreyTrace {
        green: green.report(),
        truncation: trunc.report(),
        comparison: cmp,
        inverse: inv,
        adversarial_rejected,
    });
    Ok((body, checks))
}

fn renorm_run(cfg: &ExperimentConfig) -> Result<(Body, Vec<Check>), RunError> {
    let p: RenormParams = cfg.params()?;
    positive("eps", p.eps)?;
    positive("path_tol", p.path_tol)?;
    if p.m_max == 0 {
        return Err(input(ConfigError::Invalid {
            name: "m_max",
            msg: "must be at least 1".into(),
        }));
    }
    let (exact, alpha) = parse_alpha(&p.alpha)?;
    let phi = FiberedAction::standard(alpha, cos_cocycle(p.eps).map_err(pipeline)?);
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut deriv_rows = Vec::new();
    for m in 1..=p.m_max {
        let st = renorm_iterate(&phi, &exact, m).map_err(pipeline)?;
        let comm_ok = st
            .comm_residuals
            .windows(2)
            .all(|w| w[1] <= (COMM_GROWTH * w[0]).max(COMM_FLOOR));
        checks.push(Check::le("path_agreement", Some(m), st.path_agreement, p.path_tol));
        checks.push(Check::holds("commutation_preserved", Some(m), comm_ok));
        checks.push(Check::holds("derivative_bound", Some(m), st.deriv_pass));
        rows.push(RenormRow {
            m,
            beta_prev: st.beta_prev,
            q_matrix: st.q_matrix,
            path_agreement: st.path_agreement,
            comm_residual: st.comm_residuals.last().copied().unwrap_or(0.0),
            c_measured: st.c_measured,
            deriv_pass: st.deriv_pass,
        });
        if m == p.m_max {
            deriv_rows = st.deriv_rows.clone();
        }
    }
    let body = Body::RenormRun(RenormTrace {
        alpha: p.alpha.clone(),
        eps: p.eps,
        rows,
        deriv_rows,
    });
    Ok((body, checks))
}

fn dc_scan(cfg: &ExperimentConfig) -> Result<(Body, Vec<Check>), RunError> {
    let p: DcParams = cfg.params()?;
    positive("tau", p.tau)?;
    if p.k_cut < 1 {
        return Err(input(ConfigError::Invalid {
            name: "k_cut",
            msg: "must be at least 1".into(),
        }));
    }
    let (exact, _) = parse_alpha(&p.alpha)?;
    let report = dc_check_exact(&exact, &p.alpha, p.tau, p.k_cut);
    // A witness is a finding about α, not a falsified bound.
    Ok((Body::DcScan(DcTrace { report }), Vec::new()))
}

fn bracket_run(cfg: &ExperimentConfig) -> Result<(Body, Vec<Check>), RunError> {
    let p: BracketParams = cfg.params()?;
    positive("rel_tol", p.rel_tol)?;
    if p.n < 1 || p.samples < 1 {
        return Err(input(ConfigError::Invalid {
            name: "n/samples",
            msg: "must be at least 1".into(),
        }));
    }
    let seed = cfg.seed();
    let (b, name) = match p.map {
        BracketMap::HaarConstant => {
            let mut r = rng::stream(seed, 0);
            (FourierMap::constant(1, linalg::haar_unitary(p.n, &mut r)), "haar-constant")
        }
        BracketMap::Character => {
            let freqs: Vec<Vec<i64>> = (0..p.n).map(|q| vec![2 * q as i64 - 1]).collect();
            (character_map(1, &freqs), "character")
        }
    };
    let est = bracket_estimate(&b, p.samples, seed).map_err(pipeline)?;
    let mut checks = Vec::new();
    match p.map {
        BracketMap::HaarConstant if p.n == 2 => {
            let target = 1.0 / 2f64.sqrt();
            checks.push(Check::le("constant_u2_bracket", None, (est.bracket_upper - target).abs() / target, p.rel_tol));
        }
        BracketMap::Character => {
            checks.push(Check::ge("character_bracket", None, est.bracket_upper, (p.n as f64).powf(-1.5)));
        }
        _ => {}
    }
    let body = Body::BracketEstimate(BracketTrace {
        map: name.into(),
        n: p.n,
        estimate: est,
    });
    Ok((body, checks))
}

fn homological_bench(cfg: &ExperimentConfig) -> Result<(Body, Vec<Check>), RunError> {
    let p: HomologicalParams = cfg.params()?;
    positive("kappa", p.kappa)?;
    positive("tol", p.tol)?;
    if p.count < 1 || p.n_max < 1 || p.modes < 1 {
        return Err(input(ConfigError::Invalid {
            name: "count/n_max/modes",
            msg: "must be at least 1".into(),
        }));
    }
    let (_, alpha) = parse_alpha(&p.alpha)?;
    let al = [alpha];
    let seed = cfg.seed();
    let mut rows = Vec::with_capacity(p.count);
    for i in 0..p.count {
        let n = 1 + i % p.n_max;
        let mut r = rng::stream(seed, i as u64);
        let a = UnitaryConstant::new(linalg::haar_unitary(n, &mut r), 1e-10).map_err(pipeline)?;
        let delta = dc_floor(&al, 4 * n as i64 * p.modes) / (8.0 * n as f64);
        if delta <= 0.0 {
            return Err(pipeline(format!("α has a resonance below |k| = {}", 4 * n as i64 * p.modes)));
        }
        let ladder = ResonanceLadder::new(n, p.modes as f64, p.kappa, delta).map_err(pipeline)?;
        let part = partition_spectrum(&a, &al, &ladder).map_err(pipeline)?;
        let split = build_mode_split(&part, &ladder);
        let mut rhs = FourierMap::zero(1, n);
        for k in -p.modes..=p.modes {
            rhs.add_coeff(vec![k], &linalg::random_skew(n, &mut r).scale((-(k.abs() as f64) / 8.0).exp()));
        }
        let rhs = split_re_nre(&rhs.project_skew(), &split).1;
        let y = linear_homological_solve(&a.eigenvalues, &al, &rhs, &split, delta).map_err(pipeline)?;
        let back = homological_op(&y, &a.eigenvalues, &al);
        let denom = rhs.wiener_norm(0.0);
        let rel = if denom > 0.0 { back.sub(&rhs).wiener_norm(0.0) / denom } else { 0.0 };
        rows.push(HomologicalRow {
            i,
            n,
            modes: rhs.len(),
            relative_residual: rel,
        });
    }
    let worst = rows.iter().map(|r| r.relative_residual).fold(0.0, f64::max);
    let checks = vec![Check::le("relative_residual", None, worst, p.tol)];
    let body = Body::HomologicalBench(HomologicalTrace { alpha, rows, worst });
    Ok((body, checks))
}
