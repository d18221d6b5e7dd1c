use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

use crate::trace::{Body, Check, Trace};

pub const EMPTY: &str = "no steps executed";

pub fn report_file(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = format!("== {} ==\n", path.display());
    out.push_str(&report_text(&text).with_context(|| format!("malformed trace {}", path.display()))?);
    Ok(out)
}

pub fn report_text(text: &str) -> Result<String> {
    if text.trim().is_empty() {
        return Ok(format!("{EMPTY}\n"));
    }
    let trace: Trace = serde_json::from_str(text)?;
    Ok(render(&trace))
}

fn ok(pass: bool) -> &'static str {
    if pass {
        "ok"
    } else {
        "FAIL"
    }
}

fn find<'a>(checks: &'a [Check], names: &[&str], m: usize) -> Option<&'a Check> {
    checks.iter().find(|c| c.m == Some(m) && names.contains(&c.name.as_str()))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into())
}

pub fn render(t: &Trace) -> String {
    let mut s = String::new();
    match &t.body {
        Body::KamRun(k) => {
            if k.rows.is_empty() {
                return format!("{EMPTY}\n");
            }
            let _ = writeln!(
                s,
                "kam-run  reference {}  alpha {:.12}  sigma {:.4e}  kappa {:.4e}  eps0 {:.4e}",
                k.reference, k.alpha, k.sigma, k.kappa, k.eps0
            );
            let _ = writeln!(
                s,
                "{:>4} {:>12} {:>12} {:>12} {:>12} {:>6} {:>12} {:>6}",
                "m", "h_m", "eps_m", "|F_m|_h", "sup|F_m|", "N_m", "residual", "F<=eps"
            );
            for r in &k.rows {
                let col = find(&t.checks, &["f_m_bound", "g0_bound"], r.m).map(|c| ok(c.pass)).unwrap_or("-");
                let _ = writeln!(
                    s,
                    "{:>4} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>6} {:>12.4e} {:>6}",
                    r.m, r.h_m, r.eps_m, r.wiener_f_m, r.sup_f_m, r.n_m, r.step_residual, col
                );
            }
            match k.m_star {
                Some(m) => {
                    let _ = writeln!(
                        s,
                        "convergent regime from m* = {m}: final residual {} (bound {})",
                        opt(k.final_residual),
                        opt(k.final_bound)
                    );
                }
                None => {
                    let _ = writeln!(s, "convergent regime not entered");
                }
            }
            if let Some(stop) = &k.stop {
                let _ = writeln!(s, "stop: {stop:?}");
            }
        }
        Body::GevreyLadder(g) => {
            let _ = writeln!(s, "gevrey-ladder  rho {}  L {:.6}", g.green.rho, g.green.l);
            for (name, rep) in [("green", &g.green), ("truncation", &g.truncation)] {
                let _ = writeln!(s, "{name} ladder");
                let _ = writeln!(s, "{:>4} {:>12} {:>12} {:>12}", "j", "h_j", "sup_err", "gap");
                for l in &rep.levels {
                    let _ = writeln!(s, "{:>4} {:>12.4e} {:>12.4e} {:>12}", l.j, l.h_j, l.sup_err, opt(l.gap_norm));
                }
            }
            let c = &g.comparison;
            let _ = writeln!(s, "fit frame {}", c.frame);
            let _ = writeln!(s, "green slope      {:>12.4e}  R^2 {:.4}", c.green.slope, c.green.r2);
            let _ = writeln!(s, "truncation slope {:>12.4e}  R^2 {:.4}", c.truncation.slope, c.truncation.r2);
            let _ = writeln!(s, "slope ratio      {:>12.4}", c.ratio);
            let _ = writeln!(s, "inverse ladder C_0 {:.4}, {} Cauchy checks", g.inverse.c0, g.inverse.cauchy.len());
            if let Some(r) = g.adversarial_rejected {
                let _ = writeln!(s, "adversarial ladder {}", if r { "rejected" } else { "accepted" });
            }
        }
        Body::RenormRun(r) => {
            if r.rows.is_empty() {
                return format!("{EMPTY}\n");
            }
            let _ = writeln!(s, "renorm-run  alpha {}  eps {}", r.alpha, r.eps);
            let _ = writeln!(
                s,
                "{:>4} {:>12} {:>12} {:>12} {:>8} {:>6}",
                "m", "beta_prev", "path_gap", "comm", "c", "deriv"
            );
            for row in &r.rows {
                let _ = writeln!(
                    s,
                    "{:>4} {:>12.4e} {:>12.4e} {:>12.4e} {:>8.4} {:>6}",
                    row.m,
                    row.beta_prev,
                    row.path_agreement,
                    row.comm_residual,
                    row.c_measured,
                    ok(row.deriv_pass)
                );
            }
        }
        Body::DcScan(d) => {
            let r = &d.report;
            let _ = writeln!(s, "dc-scan  alpha {}  tau {}  K {}", r.alpha, r.tau, r.k_cut);
            match (&r.witness, r.gamma_star) {
                (Some(w), _) => {
                    let _ = writeln!(s, "witness k = {:?}, |e^(2 pi i k alpha) - 1| = {:.4e}", w.k, w.value);
                }
                (None, Some(g)) => {
                    let _ = writeln!(s, "gamma* = {g:.6e}");
                }
                (None, None) => {
                    let _ = writeln!(s, "no result");
                }
            }
        }
        Body::BracketEstimate(b) => {
            let e = &b.estimate;
            let _ = writeln!(s, "bracket-estimate  map {}  n {}  samples {}  seed {}", b.map, b.n, e.samples, e.seed);
            let _ = writeln!(s, "bracket_0 {:.6}  upper {:.6}", e.bracket0, e.bracket_upper);
        }
        Body::HomologicalBench(h) => {
            if h.rows.is_empty() {
                return format!("{EMPTY}\n");
            }
            let _ = writeln!(s, "homological-bench  alpha {:.12}  {} right-hand sides", h.alpha, h.rows.len());
            let _ = writeln!(s, "worst relative residual {:.4e}", h.worst);
        }
    }
    let failed: Vec<&Check> = t.checks.iter().filter(|c| !c.pass).collect();
    let _ = writeln!(s, "checks: {}/{} passed", t.checks.len() - failed.len(), t.checks.len());
    for c in failed {
        let m = c.m.map(|m| format!(" m={m}")).unwrap_or_default();
        let _ = writeln!(s, "  FAIL {}{m}: {:.4e} vs {:.4e}", c.name, c.value, c.bound);
    }
    if let Some(w) = t.wall_time_s {
        let _ = writeln!(s, "wall time {w:.3} s");
    }
    s
}
