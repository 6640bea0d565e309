use std::path::Path;

use exitduel::best_response::{
    audit_many, classify_region, default_deviations, equilibrium_rule, McConfig, StoppingRule,
};
use exitduel::equilibrium::Equilibrium;
use exitduel::numerics::linspace;
use exitduel::special_cases::{degenerate_limit_ks, deterministic_schedule, DegenerateLimitConfig};
use serde::Serialize;

use crate::config::Settings;
use crate::output::{write_json, Csv, Field};
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// What a command produced: file names relative to the output directory, plus checks.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<String>,
    pub checks: Vec<Check>,
}

pub struct Context<'a> {
    pub settings: &'a Settings,
    pub eq: &'a Equilibrium,
    pub hash: String,
    pub out: &'a Path,
}

impl Context<'_> {
    fn single_theta(&self, key: &str) -> Result<f64, CliError> {
        match self.settings.list(key)?.as_slice() {
            [t] => Ok(*t),
            _ => Err(CliError::Usage(format!(
                "`{key}` needs exactly one type for this command"
            ))),
        }
    }

    fn mc(&self) -> Result<McConfig, CliError> {
        let mut cfg = McConfig::for_equilibrium(
            self.eq,
            self.settings.get("seed")?,
            self.settings.get("dt")?,
            self.paths()?,
        )?;
        cfg.belief = self.settings.belief()?;
        Ok(cfg)
    }

    fn paths(&self) -> Result<usize, CliError> {
        let n: usize = self.settings.get("paths")?;
        if n < 2 {
            return Err(CliError::Usage("`paths` must be at least 2".into()));
        }
        Ok(n)
    }

    fn emit_csv(&self, name: &str, csv: &Csv, outcome: &mut Outcome) -> Result<(), CliError> {
        csv.write(&self.out.join(name))?;
        outcome.outputs.push(name.to_string());
        Ok(())
    }
}

pub fn thresholds(ctx: &Context) -> Result<Outcome, CliError> {
    let table = &ctx.eq.table;
    let mut csv = Csv::new(&ctx.hash, &["theta", "alpha", "c"]);
    for k in 0..table.thetas.len() {
        csv.row(&[
            Field::Num(table.thetas[k]),
            Field::Num(table.alphas[k]),
            Field::Num(table.crits[k]),
        ]);
    }
    let mut out = Outcome::default();
    ctx.emit_csv("thresholds.csv", &csv, &mut out)?;
    out.checks.push(Check::new(
        "alpha_increasing",
        table.alphas.windows(2).all(|w| w[1] > w[0]),
        format!("{} grid types", table.thetas.len()),
    ));
    let below = table.alphas.iter().zip(&table.crits).all(|(a, c)| a < c);
    out.checks.push(Check::new(
        "alpha_below_c",
        below,
        "alpha(theta) < c(theta) on the grid",
    ));
    if !table.multimodal.is_empty() {
        out.checks.push(Check::new(
            "single_peak",
            false,
            format!("{} grid types had several local maxima", table.multimodal.len()),
        ));
    }
    Ok(out)
}

pub fn simulate(ctx: &Context) -> Result<Outcome, CliError> {
    let s = ctx.settings;
    let theta1 = ctx.single_theta("theta")?;
    let theta2 = if s.is_set("theta2") { s.get("theta2")? } else { theta1 };
    let x0: f64 = s.get("x0")?;
    let seed: u64 = s.get("seed")?;
    let noise = exitduel::diffusion::NoiseGrid::covering(seed, s.get("dt")?, s.get("horizon")?)?;
    let belief_settings = s.belief()?;
    let run = ctx.eq.simulate_game(x0, theta1, theta2, &noise, 0, &belief_settings)?;

    let (xs, avals) = (&run.path.states, &run.belief.a_values);
    let ys: Vec<f64> = avals.iter().map(|&a| ctx.eq.dist.big_y(a)).collect();
    let mut csv = Csv::new(&ctx.hash, &["t", "X", "Y", "alpha_of_Y"]);
    for i in 0..xs.len() {
        csv.row(&[
            Field::Num(run.path.times[i]),
            Field::Num(xs[i]),
            Field::Num(ys[i]),
            Field::Num(ctx.eq.alpha(ys[i])),
        ]);
    }
    let mut out = Outcome::default();
    ctx.emit_csv("simulate.csv", &csv, &mut out)?;

    #[derive(Serialize)]
    struct OutcomeFile {
        theta1: f64,
        theta2: f64,
        x0: f64,
        seed: u64,
        epsilon_used: f64,
        ladder_converged: bool,
        outcome: exitduel::equilibrium::GameOutcome,
    }
    write_json(
        &ctx.out.join("outcome.json"),
        &OutcomeFile {
            theta1,
            theta2,
            x0,
            seed,
            epsilon_used: run.belief.epsilon_used,
            ladder_converged: run.belief.converged,
            outcome: run.outcome,
        },
    )?;
    out.outputs.push("outcome.json".into());

    out.checks.push(Check::new(
        "belief_nonincreasing",
        ys.windows(2).all(|w| w[1] <= w[0]),
        "Y never rises",
    ));
    // Y moves over step i only if the smoothed hazard at (X_i, Y_i) is positive.
    let eps = run.belief.epsilon_used;
    let stray = (0..ys.len() - 1)
        .filter(|&i| ys[i + 1] < ys[i] && ctx.eq.table.alpha_inv(xs[i]) >= ys[i] + eps)
        .count();
    out.checks.push(Check::new(
        "belief_moves_only_in_action_region",
        stray == 0,
        format!("{stray} decreasing steps outside the eps-widened region"),
    ));
    Ok(out)
}

/// Parse the `deviations` list into rules for type `theta`.
/// Tokens: `default`, `immediate`, `never`, `single`, `rect:XS:AS` (multiples
/// of `alpha(theta)` and `A(theta)`), `shift:D` and `single_shift:D`.
pub fn parse_deviations(spec: &str) -> Result<Vec<Token>, CliError> {
    let tokens: Vec<&str> = spec.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    if tokens.is_empty() {
        return Err(CliError::Usage("deviation set is empty".into()));
    }
    let num = |t: &str, s: &str| -> Result<f64, CliError> {
        s.parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| CliError::Usage(format!("bad number in deviation `{t}`")))
    };
    tokens
        .into_iter()
        .map(|t| {
            let parts: Vec<&str> = t.split(':').collect();
            Ok(match parts.as_slice() {
                ["default"] => Token::Default,
                ["immediate"] => Token::Immediate,
                ["never"] => Token::Never,
                ["single"] => Token::Single,
                ["rect", xs, as_] => Token::Rect(num(t, xs)?, num(t, as_)?),
                ["shift", d] => Token::Shift(num(t, d)?),
                ["single_shift", d] => Token::SingleShift(num(t, d)?),
                _ => return Err(CliError::Usage(format!("unknown deviation `{t}`"))),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Token {
    Default,
    Immediate,
    Never,
    Single,
    Rect(f64, f64),
    Shift(f64),
    SingleShift(f64),
}

fn expand(eq: &Equilibrium, theta: f64, tokens: &[Token]) -> Vec<StoppingRule> {
    let mut rules = Vec::new();
    for t in tokens {
        match *t {
            Token::Default => rules.extend(default_deviations(eq, theta)),
            Token::Immediate => rules.push(StoppingRule::Immediate),
            Token::Never => rules.push(StoppingRule::Never),
            Token::Single => rules.push(StoppingRule::SinglePlayer { theta }),
            Token::Rect(xs, as_) => rules.push(StoppingRule::Rect {
                x_thresh: xs * eq.alpha(theta),
                a_thresh: as_ * eq.dist.big_a_extended(theta),
            }),
            Token::Shift(d) => rules.push(equilibrium_rule(eq, theta).shifted(d)),
            Token::SingleShift(d) => rules.push(StoppingRule::SinglePlayer { theta }.shifted(d)),
        }
    }
    rules
}

pub fn audit(ctx: &Context) -> Result<Outcome, CliError> {
    let s = ctx.settings;
    let tokens = parse_deviations(s.raw("deviations"))?;
    let thetas = s.list("theta")?;
    if thetas.is_empty() {
        return Err(CliError::Usage("`theta` list is empty".into()));
    }
    let cfg = ctx.mc()?;
    let reports = audit_many(
        ctx.eq,
        s.get("x0")?,
        &thetas,
        |t| expand(ctx.eq, t, &tokens),
        &cfg,
        s.get("significance")?,
    )?;
    write_json(&ctx.out.join("audit.json"), &reports)?;
    let mut out = Outcome {
        outputs: vec!["audit.json".into()],
        checks: Vec::new(),
    };
    for r in &reports {
        let detail = if r.passed() {
            format!("{} deviations, none significant", r.deviation_values.len())
        } else {
            format!("winning deviations: {}", r.violations.join("; "))
        };
        out.checks.push(Check::new(
            format!("best_response theta={}", r.theta),
            r.passed(),
            detail,
        ));
    }
    Ok(out)
}

/// Grid from an explicit list, or `n` evenly spaced multiples of `scale` in `[lo, hi]`.
fn grid(settings: &Settings, key: &str, count_key: &str, scale: f64, lo: f64, hi: f64) -> Result<Vec<f64>, CliError> {
    if settings.is_set(key) {
        return settings.list(key);
    }
    let n: usize = settings.get(count_key)?;
    if n == 0 {
        return Err(CliError::Usage(format!("`{count_key}` must be positive")));
    }
    Ok(if n == 1 {
        vec![lo * scale]
    } else {
        linspace(lo * scale, hi * scale, n)
    })
}

pub fn region(ctx: &Context) -> Result<Outcome, CliError> {
    let s = ctx.settings;
    let theta = ctx.single_theta("theta")?;
    let alpha = ctx.eq.alpha(theta);
    let big_a = ctx.eq.dist.big_a(theta)?;
    let xs = grid(s, "x_grid", "nx", alpha, 0.1, 3.0)?;
    let as_ = grid(s, "a_grid", "na", big_a, 0.0, 3.5)?;
    if xs.is_empty() || as_.is_empty() {
        return Err(CliError::Usage("region grid is empty".into()));
    }
    let map = classify_region(ctx.eq, theta, &xs, &as_, &ctx.mc()?, s.get("significance")?)?;
    let mut csv = Csv::new(&ctx.hash, &["x", "a", "label", "v_tilde", "stderr", "best_rule"]);
    for row in &map.cells {
        for c in row {
            let label = c.label.to_string();
            csv.row(&[
                Field::Num(c.x),
                Field::Num(c.a),
                Field::Text(&label),
                Field::Num(c.v_tilde.mean),
                Field::Num(c.v_tilde.stderr),
                Field::Text(&c.best_rule),
            ]);
        }
    }
    let mut out = Outcome::default();
    ctx.emit_csv("region.csv", &csv, &mut out)?;
    let wrong = map.disagreements(alpha, big_a);
    let interior = wrong.iter().filter(|w| !w.2).count();
    out.checks.push(Check::new(
        "region_matches_rectangle",
        interior == 0,
        format!(
            "{} of {} cells differ from x <= {alpha:.6}, a >= {big_a:.6}; {interior} away from the boundary",
            wrong.len(),
            xs.len() * as_.len()
        ),
    ));
    Ok(out)
}

pub fn special(ctx: &Context) -> Result<Outcome, CliError> {
    match ctx.settings.raw("mode") {
        "deterministic" => special_deterministic(ctx),
        "degenerate" => special_degenerate(ctx),
        "" => Err(CliError::Usage("special needs --mode deterministic|degenerate".into())),
        other => Err(CliError::Usage(format!("unknown mode `{other}`"))),
    }
}

fn special_deterministic(ctx: &Context) -> Result<Outcome, CliError> {
    let s = ctx.settings;
    let n: usize = s.get("type_points")?;
    if n == 0 {
        return Err(CliError::Usage("`type_points` must be positive".into()));
    }
    let (lo, hi) = (ctx.eq.dist.theta_lo(), ctx.eq.dist.theta_hi());
    // Types on (theta_L, theta_U]; theta_L itself never exits.
    let thetas: Vec<f64> = (1..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    let dt: f64 = s.get("ode_dt")?;
    let x_fixed: f64 = s.get("x_fixed")?;
    let fine = deterministic_schedule(ctx.eq, x_fixed, &thetas, dt)?;
    let half = deterministic_schedule(ctx.eq, x_fixed, &thetas, dt / 2.0)?;
    let mut csv = Csv::new(&ctx.hash, &["theta", "tau_hat"]);
    for (t, tau) in fine.thetas.iter().zip(&fine.exit_times) {
        csv.row(&[Field::Num(*t), Field::Num(*tau)]);
    }
    let mut out = Outcome::default();
    ctx.emit_csv("special_deterministic.csv", &csv, &mut out)?;
    out.checks.push(Check::new(
        "exit_time_nonincreasing",
        fine.exit_times.windows(2).all(|w| w[1] <= w[0]),
        format!("{n} types at x = {x_fixed}"),
    ));
    let drift = fine
        .exit_times
        .iter()
        .zip(&half.exit_times)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    out.checks.push(Check::new(
        "stable_under_step_halving",
        drift < dt,
        format!("max change {drift:e} against step {dt:e}"),
    ));
    Ok(out)
}

fn special_degenerate(ctx: &Context) -> Result<Outcome, CliError> {
    let s = ctx.settings;
    let cfg = DegenerateLimitConfig {
        theta: s.get("limit_theta")?,
        half_widths: s.list("half_widths")?,
        x0: s.get("x0")?,
        dt: s.get("dt")?,
        horizon: s.get("horizon")?,
        n_paths: ctx.paths()?,
        seed: s.get("seed")?,
        belief: s.belief()?,
    };
    if cfg.half_widths.is_empty() {
        return Err(CliError::Usage("`half_widths` is empty".into()));
    }
    let ks = degenerate_limit_ks(&ctx.eq.prims, &cfg)?;
    let mut csv = Csv::new(&ctx.hash, &["h", "ks"]);
    for (h, d) in cfg.half_widths.iter().zip(&ks) {
        csv.row(&[Field::Num(*h), Field::Num(*d)]);
    }
    let mut out = Outcome::default();
    ctx.emit_csv("special_degenerate.csv", &csv, &mut out)?;
    let mut order: Vec<usize> = (0..ks.len()).collect();
    order.sort_by(|&i, &j| cfg.half_widths[j].total_cmp(&cfg.half_widths[i]));
    let shrinking = order.windows(2).all(|w| ks[w[1]] < ks[w[0]]);
    out.checks
        .push(Check::new("ks_decreasing_in_h", shrinking, format!("ks = {ks:?}")));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deviation_tokens_parse() {
        let t = parse_deviations("default, never,rect:1.0:0.8 ,shift:0.05,single,single_shift:0.2,immediate").unwrap();
        assert_eq!(
            t,
            vec![
                Token::Default,
                Token::Never,
                Token::Rect(1.0, 0.8),
                Token::Shift(0.05),
                Token::Single,
                Token::SingleShift(0.2),
                Token::Immediate
            ]
        );
    }

    #[test]
    fn empty_or_unknown_deviations_are_usage_errors() {
        for bad in ["", " , ", "sometimes", "rect:1", "shift:x"] {
            assert!(matches!(parse_deviations(bad), Err(CliError::Usage(_))), "{bad}");
        }
    }

    #[test]
    fn rect_token_scales_with_type() {
        let eq = Equilibrium::example();
        let rules = expand(&eq, 1.0, &[Token::Rect(1.0, 1.0)]);
        assert_eq!(rules, vec![equilibrium_rule(&eq, 1.0)]);
        assert_eq!(
            expand(&eq, 1.0, &[Token::Default]).len(),
            default_deviations(&eq, 1.0).len()
        );
    }
}
