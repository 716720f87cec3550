//! The named experiments the runner knows about.

use std::collections::BTreeMap;
use std::path::Path;

use fraccal::dnmap::window_gap;
use fraccal::random::{random_field, rng, uniform_vec};
use fraccal::table::{Cell, Table};
use fraccal::{
    alessandrini_gap, assemble_dn, conductivity_form, cylinder_limit, dirichlet_form,
    dn_comparison_gap, interpolation_check, liouville_identity_gap, make_conductivity,
    nonuniqueness_pair, poincare_constant_with, potential_form, reconstruct_conductivity,
    runge_residual_sequence, transform, Direction, DomainMask, ExteriorSolver, Field, Grid,
    OperatorKernel, ReconstructionOptions, Shape,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{FieldFamily, ScenarioConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    PoincareSweep,
    InterpolationCheck,
    CylinderLimit,
    RungeDecay,
    AlessandriniSuite,
    LiouvilleSuite,
    NonuniquenessDemo,
    ReconstructionDemo,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::PoincareSweep,
        Scenario::InterpolationCheck,
        Scenario::CylinderLimit,
        Scenario::RungeDecay,
        Scenario::AlessandriniSuite,
        Scenario::LiouvilleSuite,
        Scenario::NonuniquenessDemo,
        Scenario::ReconstructionDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::PoincareSweep => "poincare_sweep",
            Scenario::InterpolationCheck => "interpolation_check",
            Scenario::CylinderLimit => "cylinder_limit",
            Scenario::RungeDecay => "runge_decay",
            Scenario::AlessandriniSuite => "alessandrini_suite",
            Scenario::LiouvilleSuite => "liouville_suite",
            Scenario::NonuniquenessDemo => "nonuniqueness_demo",
            Scenario::ReconstructionDemo => "reconstruction_demo",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Scenario::PoincareSweep => "Poincaré constants C(t,s) over orders and domains",
            Scenario::InterpolationCheck => "log-convexity bound C_ts ≤ C_rz^((t-s)/(r-z)) on parameter tuples",
            Scenario::CylinderLimit => "2-d cylinder constants against the 1-d cross-section constant",
            Scenario::RungeDecay => "Runge approximation residual versus number of exterior sources",
            Scenario::AlessandriniSuite => "Alessandrini identity for random potential pairs",
            Scenario::LiouvilleSuite => "Liouville identity, solution correspondence and DN comparison",
            Scenario::NonuniquenessDemo => "conductivity pair with equal DN data on disjoint windows",
            Scenario::ReconstructionDemo => "closed-loop conductivity reconstruction from DN data",
        }
    }

    pub fn details(self) -> &'static str {
        match self {
            Scenario::PoincareSweep => {
                "params: s = [..] (default [operator.s]), t = [..] (default [1.0]), domains = [shape, ..] \
                 (extra domains, ids from 1), residual_tol = 1e-8.\n\
                 writes poincare_sweep.csv: dim,domain_id,s,t,N,L,constant,residual.\n\
                 asserts: pencil residuals ≤ residual_tol; rows with s = t have constant exactly 1."
            }
            Scenario::InterpolationCheck => {
                "params: tuples = [[z,r,s,t], ..], domains = [shape, ..].\n\
                 writes interpolation.csv: domain_id,z,r,s,t,c_rz,c_ts,bound,ratio,holds.\n\
                 asserts: every tuple satisfies the bound within relative slack 1e-3."
            }
            Scenario::CylinderLimit => {
                "needs grid.dim = 2 and grid.points ≤ 64 (exit 3 otherwise).\n\
                 params: section = [lo, hi] (default [-0.5, 0.5]), elongations = [..] (default [1,2,4,8]), gap_tol = 0.05.\n\
                 writes cylinder.csv: elongation,constant,section_constant,relative_gap.\n\
                 asserts: relative gap at the longest cylinder < gap_tol; constants nondecreasing in elongation."
            }
            Scenario::RungeDecay => {
                "form: Dirichlet form of [operator] plus [potential] if given.\n\
                 params: window (default: whole exterior), sources (default: all window points), \
                 target = {family = ..} (default hat of radius 1 at the origin), tol = 0.1.\n\
                 writes runge.csv: sources,residual.\n\
                 asserts: residual nonincreasing; final residual ≤ tol."
            }
            Scenario::AlessandriniSuite => {
                "q2 = [potential] (default constant 0.5) + noise·U[-1,1], q1 = q2 + bump at a random interior point.\n\
                 params: instances = 50, noise = 0.4, bump_height = 1.0, bump_radius = 0.4, tol = 1e-9.\n\
                 writes alessandrini.csv: instance,lhs,rhs,gap and dn_q1.csv, dn_q2.csv for instance 0.\n\
                 asserts: |lhs - rhs| ≤ tol·(1 + |lhs|) on every instance."
            }
            Scenario::LiouvilleSuite => {
                "needs [conductivity].\n\
                 params: trials = 20, identity_tol = 1e-11, correspondence_tol = 1e-9, comparison_tol = 1e-9, \
                 f_window / g_window (default: first/last window, else the exterior).\n\
                 writes liouville.csv: check,trial,gap and fields.csv (gamma, m, q).\n\
                 asserts: each gap below its tolerance."
            }
            Scenario::NonuniquenessDemo => {
                "needs [conductivity] (γ1), [deviation] (m0, exterior and outside all windows) and two windows.\n\
                 params: from = \"w1\", to = \"w2\", dn_tol = 1e-9, min_gamma_gap = 0.01, overlap_tol = 1e-6.\n\
                 writes fields.csv (gamma1, gamma2, m1, m2, m, q1, q2), dn_gamma1.csv, dn_gamma2.csv.\n\
                 asserts: disjoint-window DN gap ≤ dn_tol; max|γ1-γ2| ≥ min_gamma_gap; \
                 overlapping-window gap (from→from) > overlap_tol."
            }
            Scenario::ReconstructionDemo => {
                "needs [conductivity]; synthetic DN data from it, optionally perturbed.\n\
                 params: noise = 0.0 (relative, uniform), tol = 1e-6, max_iterations = 500.\n\
                 writes reconstruction.csv (gamma_true, gamma_rec, q_rec, m_rec) and dn.csv.\n\
                 asserts: max|γ_rec - γ| ≤ tol."
            }
        }
    }

    pub fn from_name(name: &str) -> CliResult<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|s| s.name()).collect();
            CliError::Config(format!(
                "unknown scenario `{name}`; valid scenarios: {}",
                names.join(", ")
            ))
        })
    }

    pub fn run(self, cfg: &ScenarioConfig, base_dir: &Path) -> CliResult<Outcome> {
        let ctx = Context { cfg, base_dir };
        match self {
            Scenario::PoincareSweep => poincare_sweep(&ctx),
            Scenario::InterpolationCheck => interpolation(&ctx),
            Scenario::CylinderLimit => cylinder(&ctx),
            Scenario::RungeDecay => runge(&ctx),
            Scenario::AlessandriniSuite => alessandrini(&ctx),
            Scenario::LiouvilleSuite => liouville(&ctx),
            Scenario::NonuniquenessDemo => nonuniqueness(&ctx),
            Scenario::ReconstructionDemo => reconstruction(&ctx),
        }
    }
}

/// One pass/fail assertion of a scenario.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: &'static str,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: "<=",
            bound,
            passed: value <= bound,
        }
    }

    fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: ">=",
            bound,
            passed: value >= bound,
        }
    }

    fn above(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: ">",
            bound,
            passed: value > bound,
        }
    }

    fn below(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: "<",
            bound,
            passed: value < bound,
        }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub metrics: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    pub tables: Vec<(String, Table)>,
}

impl Outcome {
    fn metric(&mut self, key: &str, value: impl Into<Value>) {
        self.metrics.insert(key.into(), value.into());
    }

    fn table(&mut self, file: &str, table: Table) {
        self.tables.push((file.into(), table));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Context<'a> {
    cfg: &'a ScenarioConfig,
    base_dir: &'a Path,
}

impl Context<'_> {
    fn kernel(&self, grid: Grid) -> CliResult<OperatorKernel> {
        Ok(OperatorKernel::new(grid, self.cfg.operator.s, self.cfg.operator.flavor)?)
    }

    fn field(&self, which: &'static str, grid: Grid) -> CliResult<Field> {
        self.cfg.family(which)?.build(grid, self.base_dir)
    }

    fn optional_field(&self, which: &'static str, grid: Grid) -> CliResult<Option<Field>> {
        match self.cfg.family(which) {
            Ok(f) => Ok(Some(f.build(grid, self.base_dir)?)),
            Err(_) => Ok(None),
        }
    }

    /// The configured domain (id 0) followed by any extra `params.domains`.
    fn domains(&self, extra: &[Shape]) -> CliResult<Vec<DomainMask>> {
        let grid = self.cfg.make_grid()?;
        std::iter::once(&self.cfg.domain)
            .chain(extra)
            .map(|shape| self.cfg.mask_on(grid, shape))
            .collect()
    }
}

/// Per-point table: index, coordinates, then the named fields.
fn field_table(grid: &Grid, columns: &[(&str, &Field)]) -> Table {
    let mut header = vec!["index", "x"];
    if grid.dim() == 2 {
        header.push("y");
    }
    header.extend(columns.iter().map(|(n, _)| *n));
    let mut table = Table::new(&header);
    for i in 0..grid.len() {
        let p = grid.point(i);
        let mut row: Vec<Cell> = vec![i.into(), p[0].into()];
        if grid.dim() == 2 {
            row.push(p[1].into());
        }
        row.extend(columns.iter().map(|(_, f)| Cell::from(f.values()[i])));
        table.push(row);
    }
    table
}

fn matrix_table(m: &fraccal::DNMap) -> Table {
    fraccal::table::matrix_table(m.matrix())
}

fn max_diff(a: &Field, b: &Field) -> CliResult<f64> {
    Ok(a.zip_map(b, |x, y| x - y)?.max_abs())
}

fn default_t() -> Vec<f64> {
    vec![1.0]
}

fn default_residual_tol() -> f64 {
    1e-8
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepParams {
    s: Option<Vec<f64>>,
    #[serde(default = "default_t")]
    t: Vec<f64>,
    #[serde(default)]
    domains: Vec<Shape>,
    #[serde(default = "default_residual_tol")]
    residual_tol: f64,
}

fn poincare_sweep(ctx: &Context) -> CliResult<Outcome> {
    let p: SweepParams = ctx.cfg.params()?;
    let s_values = p.s.clone().unwrap_or_else(|| vec![ctx.cfg.operator.s]);
    let masks = ctx.domains(&p.domains)?;
    let jobs: Vec<(usize, f64, f64)> = (0..masks.len())
        .flat_map(|d| {
            let t_values = &p.t;
            s_values
                .iter()
                .flat_map(move |&s| t_values.iter().map(move |&t| (d, s, t)))
        })
        .filter(|&(_, s, t)| s <= t)
        .collect();
    if jobs.is_empty() {
        return Err(CliError::Config("[params]: no (s, t) pair with s ≤ t".into()));
    }
    let flavor = ctx.cfg.operator.flavor;
    let estimates = jobs
        .par_iter()
        .map(|&(d, s, t)| poincare_constant_with(&masks[d], s, t, flavor))
        .collect::<Result<Vec<_>, _>>()?;

    let grid = masks[0].grid();
    let mut table = Table::new(&["dim", "domain_id", "s", "t", "N", "L", "constant", "residual"]);
    for (&(d, s, t), e) in jobs.iter().zip(&estimates) {
        table.push(vec![
            grid.dim().into(),
            d.into(),
            s.into(),
            t.into(),
            grid.points_per_dim().into(),
            grid.extent().into(),
            e.constant.into(),
            e.residual.into(),
        ]);
    }
    let worst = estimates.iter().map(|e| e.residual).fold(0.0, f64::max);
    let diagonal: Vec<f64> = estimates
        .iter()
        .filter(|e| e.s == e.t)
        .map(|e| (e.constant - 1.0).abs())
        .collect();

    let mut out = Outcome::default();
    out.metric("rows", estimates.len());
    out.metric("max_residual", worst);
    out.metric(
        "constants",
        estimates.iter().map(|e| json!({"s": e.s, "t": e.t, "constant": e.constant})).collect::<Vec<_>>(),
    );
    out.checks.push(Check::at_most("pencil residual", worst, p.residual_tol));
    if !diagonal.is_empty() {
        let dev = diagonal.iter().copied().fold(0.0, f64::max);
        out.checks.push(Check::at_most("equal orders give 1", dev, 0.0));
    }
    out.table("poincare_sweep.csv", table);
    Ok(out)
}

fn default_tuples() -> Vec<[f64; 4]> {
    vec![
        [0.0, 1.0, 1.0, 2.0],
        [0.0, 0.5, 1.0, 1.5],
        [0.0, 0.5, 0.5, 1.0],
        [0.0, 1.0, 0.5, 1.5],
        [0.25, 0.75, 1.0, 2.0],
        [0.0, 0.5, 0.25, 0.75],
        [0.0, 2.0, 1.0, 2.0],
        [0.5, 1.0, 1.0, 1.0],
    ]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InterpolationParams {
    #[serde(default = "default_tuples")]
    tuples: Vec<[f64; 4]>,
    #[serde(default)]
    domains: Vec<Shape>,
}

fn interpolation(ctx: &Context) -> CliResult<Outcome> {
    let p: InterpolationParams = ctx.cfg.params()?;
    let masks = ctx.domains(&p.domains)?;
    let jobs: Vec<(usize, [f64; 4])> = (0..masks.len())
        .flat_map(|d| p.tuples.iter().map(move |&t| (d, t)))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(d, [z, r, s, t])| interpolation_check(&masks[d], z, r, s, t))
        .collect::<Result<Vec<_>, _>>()?;

    let mut table = Table::new(&["domain_id", "z", "r", "s", "t", "c_rz", "c_ts", "bound", "ratio", "holds"]);
    for (&(d, _), r) in jobs.iter().zip(&reports) {
        table.push(vec![
            d.into(),
            r.z.into(),
            r.r.into(),
            r.s.into(),
            r.t.into(),
            r.c_rz.into(),
            r.c_ts.into(),
            r.bound.into(),
            (r.c_ts / r.bound).into(),
            usize::from(r.holds).into(),
        ]);
    }
    let violations = reports.iter().filter(|r| !r.holds).count();
    let tightest = reports
        .iter()
        .filter(|r| r.s != r.t)
        .map(|r| r.c_ts / r.bound)
        .fold(0.0, f64::max);

    let mut out = Outcome::default();
    out.metric("tuples", reports.len());
    out.metric("tightest_ratio", tightest);
    out.checks.push(Check::at_most("interpolation violations", violations as f64, 0.0));
    out.table("interpolation.csv", table);
    Ok(out)
}

fn default_section() -> [f64; 2] {
    [-0.5, 0.5]
}

fn default_elongations() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}

fn default_gap_tol() -> f64 {
    0.05
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CylinderParams {
    #[serde(default = "default_section")]
    section: [f64; 2],
    #[serde(default = "default_elongations")]
    elongations: Vec<f64>,
    #[serde(default = "default_gap_tol")]
    gap_tol: f64,
}

fn cylinder(ctx: &Context) -> CliResult<Outcome> {
    let p: CylinderParams = ctx.cfg.params()?;
    let grid = ctx.cfg.make_grid()?;
    let [lo, hi] = p.section;
    let rep = cylinder_limit(&grid, |y| y > lo && y < hi, &p.elongations, ctx.cfg.operator.s)?;

    let mut table = Table::new(&["elongation", "constant", "section_constant", "relative_gap"]);
    for (a, c) in rep.elongations.iter().zip(&rep.constants) {
        table.push(vec![
            (*a).into(),
            (*c).into(),
            rep.section_constant.into(),
            ((c - rep.section_constant).abs() / rep.section_constant).into(),
        ]);
    }
    let mut out = Outcome::default();
    out.metric("constants", rep.constants.clone());
    out.metric("section_constant", rep.section_constant);
    out.metric("relative_gap", rep.relative_gap);
    out.checks.push(Check::below("relative gap to section", rep.relative_gap, p.gap_tol));
    out.checks.push(Check::at_least("monotone in elongation", f64::from(u8::from(rep.monotone)), 1.0));
    out.table("cylinder.csv", table);
    Ok(out)
}

fn default_runge_tol() -> f64 {
    0.1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RungeParams {
    window: Option<String>,
    sources: Option<usize>,
    target: Option<FieldFamily>,
    #[serde(default = "default_runge_tol")]
    tol: f64,
}

fn runge(ctx: &Context) -> CliResult<Outcome> {
    let p: RungeParams = ctx.cfg.params()?;
    let mask = ctx.cfg.mask()?;
    let grid = *mask.grid();
    let mut form = dirichlet_form(&ctx.kernel(grid)?)?;
    if let Some(q) = ctx.optional_field("potential", grid)? {
        form = form.add(&potential_form(&grid, &q)?)?;
    }
    let target = match &p.target {
        Some(family) => family.build(grid, ctx.base_dir)?,
        None => Field::from_fn(grid, |x| {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            (1.0 - r).max(0.0)
        })?,
    }
    .zeroed_on(mask.exterior());
    let window: Vec<usize> = match &p.window {
        Some(name) => mask.window(name)?.to_vec(),
        None => mask.exterior().to_vec(),
    };
    let n = p.sources.unwrap_or(window.len()).min(window.len());
    let seq = runge_residual_sequence(&form, &mask, &window, &target, n)?;

    let mut table = Table::new(&["sources", "residual"]);
    for (k, r) in seq.iter().enumerate() {
        table.push(vec![(k + 1).into(), (*r).into()]);
    }
    let increases = seq.windows(2).filter(|w| w[1] > w[0]).count();
    let last = seq.last().copied().unwrap_or(f64::NAN);
    let mut out = Outcome::default();
    out.metric("sources", seq.len());
    out.metric("first_residual", seq.first().copied().unwrap_or(f64::NAN));
    out.metric("final_residual", last);
    out.metric("increases", increases);
    out.checks.push(Check::at_most("residual increases", increases as f64, 0.0));
    out.checks.push(Check::at_most("final residual", last, p.tol));
    out.table("runge.csv", table);
    Ok(out)
}

fn default_instances() -> usize {
    50
}

fn default_noise() -> f64 {
    0.4
}

fn default_one() -> f64 {
    1.0
}

fn default_radius() -> f64 {
    0.4
}

fn default_tight() -> f64 {
    1e-9
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlessandriniParams {
    #[serde(default = "default_instances")]
    instances: usize,
    #[serde(default = "default_noise")]
    noise: f64,
    #[serde(default = "default_one")]
    bump_height: f64,
    #[serde(default = "default_radius")]
    bump_radius: f64,
    #[serde(default = "default_tight")]
    tol: f64,
}

/// `(lhs, rhs)` of one instance, plus its DN matrices for instance 0.
type Instance = (f64, f64, Option<(Table, Table)>);

fn alessandrini(ctx: &Context) -> CliResult<Outcome> {
    let p: AlessandriniParams = ctx.cfg.params()?;
    let mask = ctx.cfg.mask()?;
    let grid = *mask.grid();
    let l = dirichlet_form(&ctx.kernel(grid)?)?;
    let base = ctx
        .optional_field("potential", grid)?
        .unwrap_or_else(|| Field::constant(grid, 0.5));
    let everywhere: Vec<usize> = (0..grid.len()).collect();
    let seed = ctx.cfg.seed;

    let results = (0..p.instances)
        .into_par_iter()
        .map(|i| -> CliResult<Instance> {
            let mut r = rng(seed, i as u64);
            let noise = random_field(grid, &everywhere, &mut r);
            let q2 = base.zip_map(&noise, |b, n| b + p.noise * n)?;
            let pick = (uniform_vec(&mut r, 1)[0] + 1.0) / 2.0;
            let interior = mask.interior();
            let centre = grid.point(interior[((pick * interior.len() as f64) as usize).min(interior.len() - 1)]);
            let bump = FieldFamily::Bump {
                base: 0.0,
                center: centre[..grid.dim()].to_vec(),
                radius: p.bump_radius,
                height: p.bump_height,
            }
            .build(grid, ctx.base_dir)?;
            let q1 = q2.zip_map(&bump, |a, b| a + b)?;
            let b1 = l.add(&potential_form(&grid, &q1)?)?;
            let b2 = l.add(&potential_form(&grid, &q2)?)?;
            let (dn1, dn2) = (assemble_dn(&b1, &mask)?, assemble_dn(&b2, &mask)?);
            let f = random_field(grid, mask.exterior(), &mut r);
            let g = random_field(grid, mask.exterior(), &mut r);
            let (lhs, rhs) = alessandrini_gap(&dn1, &dn2, &b1, &b2, &mask, &f, &g)?;
            let tables = (i == 0).then(|| (matrix_table(&dn1), matrix_table(&dn2)));
            Ok((lhs, rhs, tables))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut out = Outcome::default();
    let mut table = Table::new(&["instance", "lhs", "rhs", "gap"]);
    let mut worst: f64 = 0.0;
    for (i, (lhs, rhs, tables)) in results.into_iter().enumerate() {
        let gap = (lhs - rhs).abs() / (1.0 + lhs.abs());
        worst = worst.max(gap);
        table.push(vec![i.into(), lhs.into(), rhs.into(), gap.into()]);
        if let Some((a, b)) = tables {
            out.table("dn_q1.csv", a);
            out.table("dn_q2.csv", b);
        }
    }
    out.metric("instances", p.instances);
    out.metric("max_relative_gap", worst);
    out.checks.push(Check::at_most("Alessandrini gap", worst, p.tol));
    out.table("alessandrini.csv", table);
    Ok(out)
}

fn default_trials() -> usize {
    20
}

fn default_identity_tol() -> f64 {
    1e-11
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LiouvilleParams {
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default = "default_identity_tol")]
    identity_tol: f64,
    #[serde(default = "default_tight")]
    correspondence_tol: f64,
    #[serde(default = "default_tight")]
    comparison_tol: f64,
    f_window: Option<String>,
    g_window: Option<String>,
}

fn liouville(ctx: &Context) -> CliResult<Outcome> {
    let p: LiouvilleParams = ctx.cfg.params()?;
    let mask = ctx.cfg.mask()?;
    let grid = *mask.grid();
    let kernel = ctx.kernel(grid)?;
    let c = make_conductivity(&ctx.field("conductivity", grid)?, &kernel)?;
    let everywhere: Vec<usize> = (0..grid.len()).collect();
    let seed = ctx.cfg.seed;

    let conductivity_solver = ExteriorSolver::new(&c.conductivity_form()?, &mask)?;
    let schrodinger_solver = ExteriorSolver::new(&c.schrodinger_form()?, &mask)?;

    // exterior points avoiding supp(m), optionally restricted to a window
    let names: Vec<&String> = mask.windows().keys().collect();
    let pick = |name: &Option<String>, fallback: Option<&String>| -> CliResult<Vec<usize>> {
        let pts = match name.as_ref().or(fallback) {
            Some(w) => mask.window(w)?.to_vec(),
            None => mask.exterior().to_vec(),
        };
        Ok(pts.into_iter().filter(|&i| c.m().values()[i] == 0.0).collect())
    };
    let f_pts = pick(&p.f_window, names.first().copied())?;
    let g_pts = pick(&p.g_window, names.last().copied())?;
    if f_pts.is_empty() || g_pts.is_empty() {
        return Err(CliError::Config(
            "no exterior points outside supp(m) for the DN comparison data".into(),
        ));
    }

    let rows = (0..p.trials)
        .into_par_iter()
        .map(|trial| -> CliResult<[f64; 3]> {
            let mut r = rng(seed, trial as u64);
            let u = random_field(grid, &everywhere, &mut r);
            let phi = random_field(grid, &everywhere, &mut r);
            let identity = liouville_identity_gap(&c, &kernel, &u, &phi)?;

            let f = random_field(grid, mask.exterior(), &mut r);
            let u = conductivity_solver.solve(&f, None)?.u;
            let v = schrodinger_solver
                .solve(&transform(&c, &f, Direction::ToSchrodinger)?, None)?
                .u;
            let correspondence = max_diff(&transform(&c, &u, Direction::ToSchrodinger)?, &v)?;

            let f = random_field(grid, &f_pts, &mut r);
            let g = random_field(grid, &g_pts, &mut r);
            let comparison = dn_comparison_gap(&c, &mask, &f, &g)?.gap;
            Ok([identity, correspondence, comparison])
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut table = Table::new(&["check", "trial", "gap"]);
    let labels = ["identity", "correspondence", "comparison"];
    let mut worst = [0.0f64; 3];
    for (trial, row) in rows.iter().enumerate() {
        for k in 0..3 {
            worst[k] = worst[k].max(row[k]);
            table.push(vec![labels[k].into(), trial.into(), row[k].into()]);
        }
    }
    let mut out = Outcome::default();
    out.metric("trials", p.trials);
    out.metric("identity_gap", worst[0]);
    out.metric("correspondence_gap", worst[1]);
    out.metric("comparison_gap", worst[2]);
    out.metric("gamma_floor", c.gamma_floor());
    out.checks.push(Check::at_most("Liouville identity", worst[0], p.identity_tol));
    out.checks.push(Check::at_most("solution correspondence", worst[1], p.correspondence_tol));
    out.checks.push(Check::at_most("DN comparison", worst[2], p.comparison_tol));
    out.table("liouville.csv", table);
    out.table(
        "fields.csv",
        field_table(&grid, &[("gamma", c.gamma()), ("m", c.m()), ("q", c.q())]),
    );
    Ok(out)
}

fn default_from() -> String {
    "w1".into()
}

fn default_to() -> String {
    "w2".into()
}

fn default_gamma_gap() -> f64 {
    0.01
}

fn default_overlap_tol() -> f64 {
    1e-6
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NonuniquenessParams {
    #[serde(default = "default_from")]
    from: String,
    #[serde(default = "default_to")]
    to: String,
    #[serde(default = "default_tight")]
    dn_tol: f64,
    #[serde(default = "default_gamma_gap")]
    min_gamma_gap: f64,
    #[serde(default = "default_overlap_tol")]
    overlap_tol: f64,
}

fn nonuniqueness(ctx: &Context) -> CliResult<Outcome> {
    let p: NonuniquenessParams = ctx.cfg.params()?;
    let mask = ctx.cfg.mask()?;
    let grid = *mask.grid();
    let kernel = ctx.kernel(grid)?;
    let c1 = make_conductivity(&ctx.field("conductivity", grid)?, &kernel)?;
    let m0 = ctx.field("deviation", grid)?;
    let pair = nonuniqueness_pair(&c1, &mask, &m0)?;
    let c2 = &pair.second;
    let dn1 = assemble_dn(&c1.conductivity_form()?, &mask)?;
    let dn2 = assemble_dn(&c2.conductivity_form()?, &mask)?;
    let dn_gap = window_gap(&dn1, &dn2, &p.from, &p.to)?;
    let overlap_gap = window_gap(&dn1, &dn2, &p.from, &p.from)?;
    let gamma_gap = max_diff(c1.gamma(), c2.gamma())?;

    let mut out = Outcome::default();
    out.metric("dn_gap", dn_gap);
    out.metric("overlap_gap", overlap_gap);
    out.metric("max_gamma_gap", gamma_gap);
    out.metric("interior_q_gap", pair.interior_q_gap);
    out.metric("gamma2_floor", c2.gamma_floor());
    out.checks.push(Check::at_most("disjoint-window DN gap", dn_gap, p.dn_tol));
    out.checks.push(Check::at_least("max |gamma1 - gamma2|", gamma_gap, p.min_gamma_gap));
    out.checks.push(Check::above("overlapping-window DN gap", overlap_gap, p.overlap_tol));
    out.table(
        "fields.csv",
        field_table(
            &grid,
            &[
                ("gamma1", c1.gamma()),
                ("gamma2", c2.gamma()),
                ("m1", c1.m()),
                ("m2", c2.m()),
                ("m", &pair.m),
                ("q1", c1.q()),
                ("q2", c2.q()),
            ],
        ),
    );
    out.table("dn_gamma1.csv", matrix_table(&dn1));
    out.table("dn_gamma2.csv", matrix_table(&dn2));
    Ok(out)
}

fn default_zero() -> f64 {
    0.0
}

fn default_rec_tol() -> f64 {
    1e-6
}

fn default_iterations() -> usize {
    ReconstructionOptions::default().max_iterations
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReconstructionParams {
    #[serde(default = "default_zero")]
    noise: f64,
    #[serde(default = "default_rec_tol")]
    tol: f64,
    #[serde(default = "default_iterations")]
    max_iterations: usize,
}

fn reconstruction(ctx: &Context) -> CliResult<Outcome> {
    let p: ReconstructionParams = ctx.cfg.params()?;
    let mask = ctx.cfg.mask()?;
    let grid = *mask.grid();
    let kernel = ctx.kernel(grid)?;
    let gamma = ctx.field("conductivity", grid)?;
    let mut data = assemble_dn(&conductivity_form(&kernel, &gamma)?, &mask)?;
    if p.noise > 0.0 {
        let (r, c) = data.matrix().shape();
        let scale = fraccal::linalg::max_abs(data.matrix());
        let draws = uniform_vec(&mut rng(ctx.cfg.seed, 0), r * c);
        let delta = nalgebra::DMatrix::from_vec(r, c, draws) * (p.noise * scale);
        data = data.perturbed(&delta)?;
    }
    let options = ReconstructionOptions {
        max_iterations: p.max_iterations,
        ..ReconstructionOptions::default()
    };
    let rec = reconstruct_conductivity(&data, &kernel, &options)?;
    let err = max_diff(&rec.gamma, &gamma)?;

    let mut out = Outcome::default();
    out.metric("max_gamma_error", err);
    out.metric("iterations", rec.iterations);
    out.metric("fit_residual", rec.fit_residual);
    out.metric("low_confidence", rec.low_confidence);
    out.metric("noise", p.noise);
    out.checks.push(Check::at_most("max |gamma_rec - gamma|", err, p.tol));
    out.table(
        "reconstruction.csv",
        field_table(
            &grid,
            &[
                ("gamma_true", &gamma),
                ("gamma_rec", &rec.gamma),
                ("q_rec", &rec.q),
                ("m_rec", &rec.m),
            ],
        ),
    );
    out.table("dn.csv", matrix_table(&data));
    Ok(out)
}
